//! Greedy detection matching and all-point average precision.

use crate::error::{Error, Result};
use crate::eval::boxes::{iou, DetectionBox};

/// Paper IoU threshold; a match needs IoU strictly above it.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Detections and ground truths of one image; matching never crosses images.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageBoxes {
    pub detections: Vec<DetectionBox>,
    pub ground_truths: Vec<DetectionBox>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApSummary {
    /// `None` when there are neither ground truths nor detections.
    pub ap: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub n_gt: usize,
    pub n_det: usize,
}

impl ApSummary {
    pub fn fn_count(&self) -> usize {
        self.n_gt - self.tp
    }
}

/// Detections ranked by descending score (stable on ties), each greedily
/// matched to the unmatched ground truth of its image with the highest IoU.
/// Returns the TP flag per ranked detection.
pub fn match_detections(images: &[ImageBoxes], iou_thr: f64) -> Result<Vec<bool>> {
    let mut ranked = Vec::new();
    for (i, img) in images.iter().enumerate() {
        for (d, det) in img.detections.iter().enumerate() {
            let score = det
                .score
                .ok_or_else(|| Error::invalid(format!("detection {d} of image {i} has no score")))?;
            ranked.push((score, i, d));
        }
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut used: Vec<Vec<bool>> = images.iter().map(|im| vec![false; im.ground_truths.len()]).collect();
    let mut flags = Vec::with_capacity(ranked.len());
    for &(_, i, d) in &ranked {
        let det = &images[i].detections[d];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in images[i].ground_truths.iter().enumerate() {
            if used[i][g] {
                continue;
            }
            let v = iou(det, gt);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        let hit = matches!(best, Some((_, v)) if v > iou_thr);
        if let (true, Some((g, _))) = (hit, best) {
            used[i][g] = true;
        }
        flags.push(hit);
    }
    Ok(flags)
}

/// Area under the all-point interpolated precision/recall curve.
pub fn ap_from_flags(flags: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return if flags.is_empty() { None } else { Some(0.0) };
    }
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(flags.len());
    let mut precision = Vec::with_capacity(flags.len());
    for (rank, &hit) in flags.iter().enumerate() {
        tp += hit as usize;
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    Some(ap)
}

pub fn summarize(images: &[ImageBoxes], iou_thr: f64) -> Result<ApSummary> {
    let flags = match_detections(images, iou_thr)?;
    let n_gt = images.iter().map(|i| i.ground_truths.len()).sum();
    let tp = flags.iter().filter(|&&f| f).count();
    Ok(ApSummary {
        ap: ap_from_flags(&flags, n_gt),
        tp,
        fp: flags.len() - tp,
        n_gt,
        n_det: flags.len(),
    })
}

/// AP of a single image's detections against its ground truths.
pub fn average_precision(
    detections: &[DetectionBox],
    ground_truths: &[DetectionBox],
    iou_thr: f64,
) -> Result<Option<f64>> {
    let img = ImageBoxes {
        detections: detections.to_vec(),
        ground_truths: ground_truths.to_vec(),
    };
    Ok(summarize(std::slice::from_ref(&img), iou_thr)?.ap)
}
