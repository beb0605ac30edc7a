//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use oslr::eval::{iou, DetectionBox, Mask};

/// Labels by recursive flood fill, scanning seeds in row-major order.
pub fn flood_fill_oracle(mask: &Mask) -> Vec<Vec<(usize, usize)>> {
    fn fill(mask: &Mask, label: &mut [bool], r: usize, c: usize, out: &mut Vec<(usize, usize)>) {
        let i = r * mask.width + c;
        if !mask.data[i] || label[i] {
            return;
        }
        label[i] = true;
        out.push((r, c));
        if r > 0 {
            fill(mask, label, r - 1, c, out);
        }
        if r + 1 < mask.height {
            fill(mask, label, r + 1, c, out);
        }
        if c > 0 {
            fill(mask, label, r, c - 1, out);
        }
        if c + 1 < mask.width {
            fill(mask, label, r, c + 1, out);
        }
    }
    let mut label = vec![false; mask.data.len()];
    let mut comps = Vec::new();
    for r in 0..mask.height {
        for c in 0..mask.width {
            let mut comp = Vec::new();
            fill(mask, &mut label, r, c, &mut comp);
            if !comp.is_empty() {
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    comps
}

/// AP by sweeping every score threshold: each threshold keeps detections with
/// score >= t, matches them greedily from scratch, and contributes one
/// precision/recall point; the area uses the max precision at recall >= r.
pub fn threshold_sweep_ap(dets: &[DetectionBox], gts: &[DetectionBox], thr: f64) -> Option<f64> {
    if gts.is_empty() {
        return if dets.is_empty() { None } else { Some(0.0) };
    }
    let mut points = Vec::new();
    let scores: BTreeSet<u64> = dets.iter().map(|d| d.score.unwrap().to_bits()).collect();
    for t in scores.iter().map(|&b| f64::from_bits(b)) {
        let mut kept: Vec<&DetectionBox> = dets.iter().filter(|d| d.score.unwrap() >= t).collect();
        kept.sort_by(|a, b| b.score.unwrap().total_cmp(&a.score.unwrap()));
        let mut used = vec![false; gts.len()];
        let mut tp = 0;
        for d in &kept {
            let best = (0..gts.len())
                .filter(|&g| !used[g])
                .map(|g| (g, iou(d, &gts[g])))
                .fold(None, |acc: Option<(usize, f64)>, x| match acc {
                    Some(a) if a.1 >= x.1 => Some(a),
                    _ => Some(x),
                });
            if let Some((g, v)) = best {
                if v > thr {
                    used[g] = true;
                    tp += 1;
                }
            }
        }
        points.push((tp as f64 / gts.len() as f64, tp as f64 / kept.len() as f64));
    }
    let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
    recalls.sort_by(f64::total_cmp);
    recalls.dedup();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in recalls {
        let p = points.iter().filter(|q| q.0 >= r).map(|q| q.1).fold(0.0, f64::max);
        ap += (r - prev) * p;
        prev = r;
    }
    Some(ap)
}

/// Inclusive bounding box of all set pixels by a full scan.
pub fn brute_force_box(mask: &Mask) -> Option<(usize, usize, usize, usize)> {
    let mut b: Option<(usize, usize, usize, usize)> = None;
    for r in 0..mask.height {
        for c in 0..mask.width {
            if mask.data[r * mask.width + c] {
                b = Some(match b {
                    None => (c, r, c, r),
                    Some((x0, y0, x1, y1)) => (x0.min(c), y0.min(r), x1.max(c), y1.max(r)),
                });
            }
        }
    }
    b
}
