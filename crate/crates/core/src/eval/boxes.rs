//! Detection boxes from mask components.

use crate::error::{Error, Result};
use crate::eval::mask::{connected_components, Component, Mask, ProbMap};

/// Inclusive pixel box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
    pub score: Option<f64>,
    pub class_id: u32,
}

impl DetectionBox {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Self {
        DetectionBox {
            x_min,
            y_min,
            x_max,
            y_max,
            score: None,
            class_id: 0,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn with_class(mut self, class_id: u32) -> Self {
        self.class_id = class_id;
        self
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.y_min..=self.y_max).contains(&row) && (self.x_min..=self.x_max).contains(&col)
    }
}

/// Extremal box of a component: left/top/right/bottom-most pixels, inclusive.
pub fn bbox_from_mask(component: &[(usize, usize)]) -> Result<DetectionBox> {
    let (&(r0, c0), rest) = component
        .split_first()
        .ok_or_else(|| Error::invalid("bbox of an empty component"))?;
    let mut b = DetectionBox::new(c0, r0, c0, r0);
    for &(r, c) in rest {
        b.x_min = b.x_min.min(c);
        b.x_max = b.x_max.max(c);
        b.y_min = b.y_min.min(r);
        b.y_max = b.y_max.max(r);
    }
    Ok(b)
}

/// Single box over all foreground pixels, or `None` for an empty mask.
pub fn global_box(mask: &Mask) -> Option<DetectionBox> {
    let pixels: Component = (0..mask.height * mask.width)
        .filter(|&p| mask.data[p])
        .map(|p| (p / mask.width, p % mask.width))
        .collect();
    bbox_from_mask(&pixels).ok()
}

/// Box IoU over inclusive pixel areas.
pub fn iou(a: &DetectionBox, b: &DetectionBox) -> f64 {
    let x0 = a.x_min.max(b.x_min);
    let y0 = a.y_min.max(b.y_min);
    let x1 = a.x_max.min(b.x_max);
    let y1 = a.y_max.min(b.y_max);
    if x0 > x1 || y0 > y1 {
        return 0.0;
    }
    let inter = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
    inter / ((a.area() + b.area()) as f64 - inter)
}

/// Detection confidence: mean probability over the component.
pub fn score_detection(prob: &ProbMap, component: &[(usize, usize)]) -> Result<f64> {
    if component.is_empty() {
        return Err(Error::invalid("score of an empty component"));
    }
    let sum: f64 = component.iter().map(|&(r, c)| prob.get(r, c)).sum();
    Ok(sum / component.len() as f64)
}

/// Scored boxes for a probability map: one per component, or one global box.
pub fn detect(prob: &ProbMap, mask: &Mask, global: bool, class_id: u32) -> Result<Vec<DetectionBox>> {
    let comps = connected_components(mask);
    if global {
        if comps.is_empty() {
            return Ok(Vec::new());
        }
        let all: Component = comps.concat();
        let b = bbox_from_mask(&all)?;
        return Ok(vec![b.with_score(score_detection(prob, &all)?).with_class(class_id)]);
    }
    comps
        .iter()
        .map(|c| Ok(bbox_from_mask(c)?.with_score(score_detection(prob, c)?).with_class(class_id)))
        .collect()
}
