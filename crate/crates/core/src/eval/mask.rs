//! Binary masks, probability maps and pixel-level operations.

use std::collections::VecDeque;

use crate::autodiff::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Paper operating point for binarization.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

/// Pixels of one connected component as `(row, col)` in scan order.
pub type Component = Vec<(usize, usize)>;

impl ProbMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch {
                op: "prob_map",
                expected: vec![height, width],
                actual: vec![data.len()],
            });
        }
        Ok(ProbMap { height, width, data })
    }

    /// Accepts `H x W` or `H x W x 1` tensors.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Self> {
        let (h, w) = match t.shape() {
            [h, w] | [h, w, 1] => (*h, *w),
            s => {
                return Err(Error::ShapeMismatch {
                    op: "prob_map",
                    expected: vec![0, 0, 1],
                    actual: s.to_vec(),
                })
            }
        };
        ProbMap::new(h, w, t.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch {
                op: "mask",
                expected: vec![height, width],
                actual: vec![data.len()],
            });
        }
        Ok(Mask { height, width, data })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    /// From bytes where any nonzero value is foreground.
    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Mask::new(height, width, bytes.iter().map(|&b| b != 0).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    fn check_same(&self, other: &Mask, op: &'static str) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::ShapeMismatch {
                op,
                expected: vec![self.height, self.width],
                actual: vec![other.height, other.width],
            });
        }
        Ok(())
    }
}

/// Foreground iff `prob > threshold` (strict).
pub fn binarize(prob: &ProbMap, threshold: f64) -> Mask {
    Mask {
        height: prob.height,
        width: prob.width,
        data: prob.data.iter().map(|&p| p > threshold).collect(),
    }
}

/// 4-connected components, ordered by their first pixel in row-major scan.
pub fn connected_components(mask: &Mask) -> Vec<Component> {
    let (h, w) = (mask.height, mask.width);
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(p) = queue.pop_front() {
            let (r, c) = (p / w, p % w);
            pixels.push((r, c));
            let mut visit = |q: usize| {
                if mask.data[q] && !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            };
            if r > 0 {
                visit(p - w);
            }
            if r + 1 < h {
                visit(p + w);
            }
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < w {
                visit(p + 1);
            }
        }
        pixels.sort_unstable();
        out.push(pixels);
    }
    out
}

/// `|pred & gt| / |pred | gt|`; 1 when both are empty.
pub fn pix_iou(pred: &Mask, gt: &Mask) -> Result<f64> {
    pred.check_same(gt, "pix_iou")?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.data.iter().zip(&gt.data) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Pixelwise OR of one or more equally sized masks.
pub fn kshot_union(masks: &[Mask]) -> Result<Mask> {
    let (first, rest) = masks
        .split_first()
        .ok_or_else(|| Error::invalid("kshot_union needs at least one mask"))?;
    let mut out = first.clone();
    for m in rest {
        out.check_same(m, "kshot_union")?;
        for (o, &v) in out.data.iter_mut().zip(&m.data) {
            *o |= v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(h: usize, w: usize, on: &[(usize, usize)]) -> Mask {
        let mut m = Mask::empty(h, w);
        for &(r, c) in on {
            m.data[r * w + c] = true;
        }
        m
    }

    #[test]
    fn binarize_is_strict() {
        let p = ProbMap::new(1, 3, vec![0.4, 0.5, 0.50001]).unwrap();
        assert_eq!(binarize(&p, 0.5).data, vec![false, false, true]);
        let all = ProbMap::new(2, 2, vec![0.4; 4]).unwrap();
        assert_eq!(binarize(&all, DEFAULT_THRESHOLD).count(), 0);
    }

    #[test]
    fn components_basic() {
        assert!(connected_components(&Mask::empty(4, 4)).is_empty());
        let m = mask(4, 6, &[(0, 0), (0, 1), (1, 0), (1, 1), (2, 4), (2, 5), (3, 4), (3, 5)]);
        let cc = connected_components(&m);
        assert_eq!(cc.len(), 2);
        assert_eq!(cc[0].len(), 4);
        assert_eq!(cc[1][0], (2, 4));
        // Diagonal neighbours are not 4-connected.
        assert_eq!(connected_components(&mask(2, 2, &[(0, 0), (1, 1)])).len(), 2);
    }

    #[test]
    fn pix_iou_cases() {
        let full = Mask::new(4, 4, vec![true; 16]).unwrap();
        let checker = Mask::new(4, 4, (0..16).map(|i| (i / 4 + i % 4) % 2 == 0).collect()).unwrap();
        assert_eq!(pix_iou(&checker, &full).unwrap(), 0.5);
        assert_eq!(pix_iou(&full, &full).unwrap(), 1.0);
        assert_eq!(pix_iou(&Mask::empty(2, 2), &Mask::empty(2, 2)).unwrap(), 1.0);
        let a = mask(2, 2, &[(0, 0)]);
        let b = mask(2, 2, &[(1, 1)]);
        assert_eq!(pix_iou(&a, &b).unwrap(), 0.0);
        assert!(pix_iou(&a, &Mask::empty(3, 2)).is_err());
    }

    #[test]
    fn union_cases() {
        let a = mask(2, 2, &[(0, 0)]);
        let b = mask(2, 2, &[(1, 1)]);
        assert_eq!(kshot_union(std::slice::from_ref(&a)).unwrap(), a);
        let u = kshot_union(&[a.clone(), b.clone()]).unwrap();
        assert!(a.is_subset_of(&u) && b.is_subset_of(&u));
        assert!(kshot_union(&[]).is_err());
        assert!(kshot_union(&[a, Mask::empty(1, 1)]).is_err());
    }

    #[test]
    fn from_tensor_shapes() {
        let t = Tensor::<f32>::full(vec![2, 3, 1], 0.25);
        assert_eq!(ProbMap::from_tensor(&t).unwrap().data.len(), 6);
        assert!(ProbMap::from_tensor(&Tensor::<f32>::zeros(vec![2, 3, 2])).is_err());
    }
}
