use oslr::autodiff::{Tape, Tensor};
use oslr::model::{FusionMode, LogoNet, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image<T: oslr::autodiff::Scalar>(side: usize, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..side * side * 3).map(|_| T::lit(rng.random::<f64>())).collect();
    Tensor::new(vec![side, side, 3], data).unwrap()
}

#[test]
fn desk_shapes() {
    let cfg = ModelConfig::desk();
    let net = LogoNet::<f32>::new(cfg.clone(), 5).unwrap();
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape, false).unwrap();
    let q = tape.constant(random_image(16, 1)).unwrap();
    let t = tape.constant(random_image(64, 2)).unwrap();
    let z = net.encode_query(&mut tape, &bound, q).unwrap();
    assert_eq!(tape.value(z).shape(), &[1, 1, 64]);
    let feats = net.encode_target(&mut tape, &bound, t).unwrap();
    let sides: Vec<usize> = feats.stages.iter().map(|&v| tape.value(v).shape()[0]).collect();
    assert_eq!(sides, vec![64, 32, 16, 8]);
    assert_eq!(tape.value(feats.bottleneck).shape(), &[4, 4, 64]);
    let fused = net.fuse_all(&mut tape, &bound, &feats, z).unwrap();
    for (a, b) in feats.stages.iter().zip(&fused.stages) {
        assert_eq!(tape.value(*a).shape(), tape.value(*b).shape());
    }
    let logits = net.decode(&mut tape, &bound, &fused).unwrap();
    assert_eq!(tape.value(logits).shape(), &[64, 64, 1]);
    assert!(tape.value(logits).is_finite());
}

#[test]
fn predict_mask_is_pure_and_bounded() {
    for mode in [FusionMode::MultiScale, FusionMode::BottleneckOnly, FusionMode::CosineTanh] {
        let mut cfg = ModelConfig::desk();
        cfg.fusion_mode = mode;
        let net = LogoNet::<f32>::new(cfg, 9).unwrap();
        let q = random_image(16, 3);
        let t = random_image(64, 4);
        let a = net.predict_mask(&q, &t).unwrap();
        let b = net.predict_mask(&q, &t).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), &[64, 64]);
        assert!(a.data().iter().all(|&p| p > 0.0 && p < 1.0));
    }
}

#[test]
fn different_queries_give_different_codes() {
    let net = LogoNet::<f32>::new(ModelConfig::desk(), 2).unwrap();
    let code = |seed| {
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape, false).unwrap();
        let q = tape.constant(random_image(16, seed)).unwrap();
        let z = net.encode_query(&mut tape, &bound, q).unwrap();
        tape.value(z).data().to_vec()
    };
    assert_ne!(code(10), code(11));
}

#[test]
fn size_mismatch_is_rejected() {
    let net = LogoNet::<f32>::new(ModelConfig::desk(), 2).unwrap();
    assert!(net.predict_mask(&random_image(32, 1), &random_image(64, 2)).is_err());
    assert!(net.predict_mask(&random_image(16, 1), &random_image(32, 2)).is_err());
}

#[test]
fn paper_preset_shapes() {
    let t0 = std::time::Instant::now();
    let net = LogoNet::<f32>::new(ModelConfig::paper(), 1).unwrap();
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape, false).unwrap();
    let q = tape.constant(random_image(64, 1)).unwrap();
    let t = tape.constant(random_image(256, 2)).unwrap();
    let z = net.encode_query(&mut tape, &bound, q).unwrap();
    let feats = net.encode_target(&mut tape, &bound, t).unwrap();
    let fused = net.fuse_all(&mut tape, &bound, &feats, z).unwrap();
    let logits = net.decode(&mut tape, &bound, &fused).unwrap();
    assert_eq!(tape.value(z).shape(), &[1, 1, 512]);
    assert_eq!(tape.value(feats.bottleneck).shape(), &[8, 8, 512]);
    assert_eq!(tape.value(logits).shape(), &[256, 256, 1]);
    eprintln!("paper forward {:?}", t0.elapsed());
}
