//! Property tests for metric, data and engine invariants.

use std::collections::BTreeSet;

use oslr::autodiff::{sgd_step, OptimizerState, Tape, Tensor};
use oslr::eval::{
    average_precision, bbox_from_mask, binarize, connected_components, iou, kshot_union, pix_iou,
    score_detection, DetectionBox, Mask, ProbMap,
};
use oslr::nn::Padding;
use oslr::synth::{gen_triplets, make_classes, render_scene, GenParams, SceneParams};
use proptest::prelude::*;

mod common;
use common::{flood_fill_oracle, threshold_sweep_ap};

fn mask_strategy(max_side: usize) -> impl Strategy<Value = Mask> {
    (1..=max_side, 1..=max_side, 0.0..1.0f64).prop_flat_map(|(h, w, density)| {
        prop::collection::vec(prop::bool::weighted(density), h * w)
            .prop_map(move |data| Mask::new(h, w, data).unwrap())
    })
}

fn box_strategy(side: usize) -> impl Strategy<Value = DetectionBox> {
    (0..side, 0..side, 0..side, 0..side).prop_map(|(a, b, c, d)| {
        DetectionBox::new(a.min(c), b.min(d), a.max(c), b.max(d))
    })
}

fn detection_set() -> impl Strategy<Value = (Vec<DetectionBox>, Vec<DetectionBox>)> {
    (
        prop::collection::vec(box_strategy(24), 0..5),
        prop::collection::vec((box_strategy(24), 0.0..1.0f64, any::<bool>(), -1i32..=1), 0..=10),
    )
        .prop_map(|(gts, raw)| {
            let dets = raw
                .into_iter()
                .enumerate()
                .map(|(i, (b, s, copy, jitter))| {
                    // Half of the detections are jittered copies of ground truths.
                    let b = match (copy, gts.get(i % gts.len().max(1))) {
                        (true, Some(g)) => DetectionBox::new(
                            g.x_min,
                            g.y_min,
                            (g.x_max as i32 + jitter).max(g.x_min as i32) as usize,
                            g.y_max,
                        ),
                        _ => b,
                    };
                    b.with_score(s)
                })
                .collect();
            (dets, gts)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ap_matches_threshold_sweep((dets, gts) in detection_set()) {
        let distinct: BTreeSet<u64> = dets.iter().map(|d| d.score.unwrap().to_bits()).collect();
        prop_assume!(distinct.len() == dets.len());
        let ap = average_precision(&dets, &gts, 0.5).unwrap();
        let oracle = threshold_sweep_ap(&dets, &gts, 0.5);
        match (ap, oracle) {
            (Some(a), Some(o)) => prop_assert!((a - o).abs() < 1e-9, "{a} vs {o}"),
            (a, o) => prop_assert_eq!(a, o),
        }
    }

    #[test]
    fn map_invariant_under_monotone_rescaling((dets, gts) in detection_set()) {
        let rescaled: Vec<DetectionBox> = dets
            .iter()
            .map(|d| d.with_score(0.5 + 0.5 * d.score.unwrap().powi(3)))
            .collect();
        let a = average_precision(&dets, &gts, 0.5).unwrap();
        let b = average_precision(&rescaled, &gts, 0.5).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ap_in_unit_interval((dets, gts) in detection_set()) {
        if let Some(a) = average_precision(&dets, &gts, 0.5).unwrap() {
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn components_match_flood_fill(mask in mask_strategy(32)) {
        let cc = connected_components(&mask);
        prop_assert_eq!(&cc, &flood_fill_oracle(&mask));
        let total: usize = cc.iter().map(Vec::len).sum();
        prop_assert_eq!(total, mask.count());
    }

    #[test]
    fn bbox_matches_scan_and_contains(mask in mask_strategy(24)) {
        for comp in connected_components(&mask) {
            let b = bbox_from_mask(&comp).unwrap();
            prop_assert_eq!(b.x_min, comp.iter().map(|p| p.1).min().unwrap());
            prop_assert_eq!(b.x_max, comp.iter().map(|p| p.1).max().unwrap());
            prop_assert_eq!(b.y_min, comp.iter().map(|p| p.0).min().unwrap());
            prop_assert_eq!(b.y_max, comp.iter().map(|p| p.0).max().unwrap());
            prop_assert!(comp.iter().all(|&(r, c)| b.contains(r, c)));
        }
    }

    #[test]
    fn iou_symmetric_bounded_identity(a in box_strategy(20), b in box_strategy(20)) {
        let ab = iou(&a, &b);
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab == 1.0, a == b);
        // Rasterized pixel-count oracle.
        let (mut inter, mut union) = (0usize, 0usize);
        for r in 0..20 {
            for c in 0..20 {
                let (x, y) = (a.contains(r, c), b.contains(r, c));
                inter += (x && y) as usize;
                union += (x || y) as usize;
            }
        }
        prop_assert!((ab - inter as f64 / union as f64).abs() < 1e-12);
    }

    #[test]
    fn union_is_associative_and_monotone(
        a in prop::collection::vec(any::<bool>(), 64),
        b in prop::collection::vec(any::<bool>(), 64),
        c in prop::collection::vec(any::<bool>(), 64),
    ) {
        let m = |d: Vec<bool>| Mask::new(8, 8, d).unwrap();
        let (a, b, c) = (m(a), m(b), m(c));
        let ab = kshot_union(&[a.clone(), b.clone()]).unwrap();
        let left = kshot_union(&[ab.clone(), c.clone()]).unwrap();
        let flat = kshot_union(&[a.clone(), b.clone(), c.clone()]).unwrap();
        prop_assert_eq!(&left, &flat);
        prop_assert!(a.is_subset_of(&ab) && ab.is_subset_of(&flat) && c.is_subset_of(&flat));
    }

    #[test]
    fn pix_iou_bounded_symmetric(a in prop::collection::vec(any::<bool>(), 36), b in prop::collection::vec(any::<bool>(), 36)) {
        let (a, b) = (Mask::new(6, 6, a).unwrap(), Mask::new(6, 6, b).unwrap());
        let v = pix_iou(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, pix_iou(&b, &a).unwrap());
        prop_assert_eq!(pix_iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn binarize_is_strict_threshold(data in prop::collection::vec(0.0..=1.0f64, 1..50), theta in 0.0..1.0f64) {
        let n = data.len();
        let p = ProbMap::new(1, n, data.clone()).unwrap();
        let m = binarize(&p, theta);
        for (v, b) in data.iter().zip(&m.data) {
            prop_assert_eq!(*b, *v > theta);
        }
    }

    #[test]
    fn score_is_mean_and_monotone(data in prop::collection::vec(0.5..=1.0f64, 2..20), bump in 0.0..0.5f64, idx in any::<prop::sample::Index>()) {
        let n = data.len();
        let comp: Vec<(usize, usize)> = (0..n).map(|c| (0, c)).collect();
        let p = ProbMap::new(1, n, data.clone()).unwrap();
        let s = score_detection(&p, &comp).unwrap();
        prop_assert!((s - data.iter().sum::<f64>() / n as f64).abs() < 1e-12);
        let mut raised = data;
        let i = idx.index(n);
        raised[i] = (raised[i] + bump).min(1.0);
        let s2 = score_detection(&ProbMap::new(1, n, raised).unwrap(), &comp).unwrap();
        prop_assert!(s2 >= s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn triplet_count_law(n_classes in 1usize..3, n in 2usize..5, seed in any::<u64>()) {
        let classes = make_classes(seed, n_classes).unwrap();
        let mut params = GenParams::desk();
        params.scene = SceneParams::new(32, 0.3, 0.6, 1);
        params.query_size = 8;
        let data = gen_triplets(&classes, n, seed, &params).unwrap();
        prop_assert_eq!(data.records.len(), n_classes * n * (n - 1));
        for c in &classes {
            let count = data.records.iter().filter(|r| r.class_id == c.class_id).count();
            prop_assert_eq!(count, n * (n - 1));
        }
    }

    #[test]
    fn masks_only_cover_logo_colours(seed in any::<u64>(), scene_seed in any::<u64>(), clutter in 0u32..4) {
        let class = &make_classes(seed, 1).unwrap()[0];
        let s = render_scene(class, scene_seed, &SceneParams::new(64, 0.1, 0.6, clutter)).unwrap();
        prop_assert!(s.mask_count() > 0);
        for p in 0..64 * 64 {
            prop_assert!(s.mask[p] == 0 || s.mask[p] == 255);
            if s.mask[p] != 0 {
                let px = [s.target[3 * p], s.target[3 * p + 1], s.target[3 * p + 2]];
                prop_assert!(class.palette.contains(&px));
            }
        }
        prop_assert_eq!(&s, &render_scene(class, scene_seed, &SceneParams::new(64, 0.1, 0.6, clutter)).unwrap());
    }

    #[test]
    fn same_padding_preserves_spatial_dims(h in 1usize..9, w in 1usize..9, cin in 1usize..4, cout in 1usize..4, k in prop::sample::select(vec![1usize, 2, 3])) {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(vec![h, w, cin], 0.5)).unwrap();
        let wt = tape.constant(Tensor::full(vec![k, k, cin, cout], 0.1)).unwrap();
        let b = tape.constant(Tensor::zeros(vec![cout])).unwrap();
        let y = tape.conv2d(x, wt, b, 1, Padding::Same).unwrap();
        prop_assert_eq!(tape.value(y).shape(), &[h, w, cout][..]);
    }

    #[test]
    fn pool_then_upsample_shapes(h in 1usize..6, w in 1usize..6, c in 1usize..4) {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(vec![2 * h, 2 * w, c], 1.0)).unwrap();
        let p = tape.maxpool2x2(x).unwrap();
        prop_assert_eq!(tape.value(p).shape(), &[h, w, c][..]);
        let u = tape.upsample_nearest2x(p).unwrap();
        prop_assert_eq!(tape.value(u).shape(), &[2 * h, 2 * w, c][..]);
    }

    #[test]
    fn sgd_matches_update_rule(p0 in -2.0..2.0f64, g in -2.0..2.0f64, lr in 0.0..0.1f64, mu in 0.0..0.99f64, wd in 0.0..0.01f64) {
        let mut p = Tensor::from_f64(vec![1], &[p0]).unwrap().with_grad();
        p.accumulate_grad(&[g]).unwrap();
        let mut opt = OptimizerState::new(lr, mu, wd, [&p]).unwrap();
        sgd_step([&mut p], &mut opt).unwrap();
        let v1 = g + wd * p0;
        prop_assert!((p.data()[0] - (p0 - lr * v1)).abs() < 1e-12);
        let p1 = p.data()[0];
        sgd_step([&mut p], &mut opt).unwrap();
        let v2 = mu * v1 + g + wd * p1;
        prop_assert!((p.data()[0] - (p1 - lr * v2)).abs() < 1e-12);
    }
}
