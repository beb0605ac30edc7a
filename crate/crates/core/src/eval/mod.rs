//! Mask-to-detection evaluation: binarization, components, boxes, AP and
//! the aggregate report.

pub mod ap;
pub mod boxes;
pub mod mask;
pub mod report;

pub use ap::{ap_from_flags, average_precision, match_detections, summarize, ApSummary, ImageBoxes, DEFAULT_IOU_THRESHOLD};
pub use boxes::{bbox_from_mask, detect, global_box, iou, score_detection, DetectionBox};
pub use mask::{binarize, connected_components, kshot_union, pix_iou, Component, Mask, ProbMap, DEFAULT_THRESHOLD};
pub use report::{aggregate, evaluate, evaluate_image, max_prob, ClassReport, EvalItem, EvalOptions, EvalReport, ImageResult};
