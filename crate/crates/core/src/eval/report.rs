//! Dataset-level evaluation: per-class AP, mAP, mPixIoU and mIoU.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::eval::ap::{summarize, ImageBoxes, DEFAULT_IOU_THRESHOLD};
use crate::eval::boxes::{detect, global_box, iou, DetectionBox};
use crate::eval::mask::{binarize, pix_iou, Mask, ProbMap, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub threshold: f64,
    pub iou_threshold: f64,
    /// One box over all foreground instead of one per component.
    pub global_box: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            threshold: DEFAULT_THRESHOLD,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            global_box: false,
        }
    }
}

/// One evaluated pair. For k-shot, `prob` is the pixelwise max of the k
/// maps, whose binarization equals the OR of the k binary masks.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub class_id: u32,
    pub prob: ProbMap,
    pub gt: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageResult {
    pub class_id: u32,
    pub detections: Vec<DetectionBox>,
    pub ground_truth: Option<DetectionBox>,
    pub pix_iou: f64,
    pub best_iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub class_id: u32,
    pub ap: Option<f64>,
    pub pix_iou: f64,
    pub n_images: usize,
    pub n_gt: usize,
    pub n_det: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<ClassReport>,
    pub map: f64,
    pub mpix_iou: f64,
    pub miou: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
    pub n_images: usize,
}

/// Pixelwise max of equally sized maps.
pub fn max_prob(maps: &[ProbMap]) -> Result<ProbMap> {
    let (first, rest) = maps
        .split_first()
        .ok_or_else(|| Error::invalid("max_prob needs at least one map"))?;
    let mut out = first.clone();
    for m in rest {
        if (m.height, m.width) != (out.height, out.width) {
            return Err(Error::ShapeMismatch {
                op: "max_prob",
                expected: vec![out.height, out.width],
                actual: vec![m.height, m.width],
            });
        }
        for (o, &v) in out.data.iter_mut().zip(&m.data) {
            *o = o.max(v);
        }
    }
    Ok(out)
}

pub fn evaluate_image(item: &EvalItem, opts: &EvalOptions) -> Result<ImageResult> {
    let pred = binarize(&item.prob, opts.threshold);
    let detections = detect(&item.prob, &pred, opts.global_box, item.class_id)?;
    let ground_truth = global_box(&item.gt).map(|b| b.with_class(item.class_id));
    let best_iou = match &ground_truth {
        Some(g) => detections.iter().map(|d| iou(d, g)).fold(0.0, f64::max),
        None if detections.is_empty() => 1.0,
        None => 0.0,
    };
    Ok(ImageResult {
        class_id: item.class_id,
        pix_iou: pix_iou(&pred, &item.gt)?,
        detections,
        ground_truth,
        best_iou,
    })
}

pub fn evaluate(items: &[EvalItem], class_ids: &[u32], opts: &EvalOptions) -> Result<EvalReport> {
    let results = items
        .iter()
        .map(|it| evaluate_image(it, opts))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&results, class_ids, opts)
}

/// Ordered reduction of per-image results.
pub fn aggregate(results: &[ImageResult], class_ids: &[u32], opts: &EvalOptions) -> Result<EvalReport> {
    let mut by_class: BTreeMap<u32, Vec<&ImageResult>> = class_ids.iter().map(|&c| (c, Vec::new())).collect();
    for r in results {
        by_class
            .get_mut(&r.class_id)
            .ok_or_else(|| Error::invalid(format!("class {} is not in the class table", r.class_id)))?
            .push(r);
    }
    let mut classes = Vec::new();
    let (mut tp, mut fp, mut fn_count) = (0, 0, 0);
    for (&class_id, rs) in &by_class {
        let images: Vec<ImageBoxes> = rs
            .iter()
            .map(|r| ImageBoxes {
                detections: r.detections.clone(),
                ground_truths: r.ground_truth.into_iter().collect(),
            })
            .collect();
        let s = summarize(&images, opts.iou_threshold)?;
        tp += s.tp;
        fp += s.fp;
        fn_count += s.fn_count();
        classes.push(ClassReport {
            class_id,
            ap: s.ap,
            pix_iou: mean(rs.iter().map(|r| r.pix_iou)),
            n_images: rs.len(),
            n_gt: s.n_gt,
            n_det: s.n_det,
        });
    }
    Ok(EvalReport {
        map: mean(classes.iter().filter_map(|c| c.ap)),
        mpix_iou: mean(results.iter().map(|r| r.pix_iou)),
        miou: mean(results.iter().map(|r| r.best_iou)),
        classes,
        tp,
        fp,
        fn_count,
        n_images: results.len(),
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "images   {}", self.n_images);
        let _ = writeln!(s, "mAP      {:.6}", self.map);
        let _ = writeln!(s, "mPixIoU  {:.6}", self.mpix_iou);
        let _ = writeln!(s, "mIoU     {:.6}", self.miou);
        let _ = writeln!(s, "TP {}  FP {}  FN {}", self.tp, self.fp, self.fn_count);
        for c in &self.classes {
            let ap = c.ap.map_or("n/a".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(
                s,
                "class {:>4}  ap {ap}  pix_iou {:.6}  n_gt {}  n_det {}",
                c.class_id, c.pix_iou, c.n_gt, c.n_det
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("class_id,ap,pix_iou,n_gt,n_det\n");
        for c in &self.classes {
            let ap = c.ap.map_or(String::new(), |v| format!("{v:.6}"));
            let _ = writeln!(s, "{},{ap},{:.6},{},{}", c.class_id, c.pix_iou, c.n_gt, c.n_det);
        }
        s
    }
}
