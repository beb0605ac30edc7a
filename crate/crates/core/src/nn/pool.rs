use crate::autodiff::{Op, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

fn hwc<T: Scalar>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize, usize)> {
    t.hwc()
        .ok_or_else(|| Error::invalid(format!("{op} expects HxWxC, got {:?}", t.shape())))
}

/// Returns the pooled tensor and, per output element, the flat input index of
/// the selected maximum (first in row-major scan on ties).
pub(crate) fn maxpool_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let (h, w, c) = hwc("maxpool2x2", x)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddSpatial {
            op: "maxpool2x2",
            h,
            w,
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut argmax = Vec::with_capacity(oh * ow * c);
    let data = x.data();
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best_idx = ((2 * oy) * w + 2 * ox) * c + ch;
                let mut best = data[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                    if data[idx] > best {
                        best = data[idx];
                        best_idx = idx;
                    }
                }
                out.push(best);
                argmax.push(best_idx as u32);
            }
        }
    }
    Ok((Tensor::new(vec![oh, ow, c], out)?, argmax))
}

pub(crate) fn maxpool_backward<T: Scalar>(input_len: usize, argmax: &[u32], gout: &[T]) -> Vec<T> {
    let mut gx = vec![T::zero(); input_len];
    for (&idx, &g) in argmax.iter().zip(gout) {
        gx[idx as usize] = gx[idx as usize] + g;
    }
    gx
}

pub(crate) fn upsample_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = hwc("upsample_nearest2x", x)?;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); oh * ow * c];
    let data = x.data();
    for oy in 0..oh {
        for ox in 0..ow {
            let src = ((oy / 2) * w + ox / 2) * c;
            let dst = (oy * ow + ox) * c;
            out[dst..dst + c].copy_from_slice(&data[src..src + c]);
        }
    }
    Tensor::new(vec![oh, ow, c], out)
}

pub(crate) fn upsample_backward<T: Scalar>(x: &Tensor<T>, gout: &[T]) -> Vec<T> {
    let (h, w, c) = x.hwc().expect("validated in forward");
    let ow = 2 * w;
    let mut gx = vec![T::zero(); x.len()];
    for oy in 0..2 * h {
        for ox in 0..ow {
            let src = (oy * ow + ox) * c;
            let dst = ((oy / 2) * w + ox / 2) * c;
            for (d, g) in gx[dst..dst + c].iter_mut().zip(&gout[src..src + c]) {
                *d = *d + *g;
            }
        }
    }
    gx
}

impl<T: Scalar> Tape<T> {
    /// 2x2 max pooling with stride 2.
    pub fn maxpool2x2(&mut self, x: Var) -> Result<Var> {
        let (ix, tx) = self.resolve(x)?;
        let (out, argmax) = maxpool_forward(tx)?;
        self.record(out, Op::MaxPool2 { x: ix, argmax })
    }

    /// Nearest-neighbour x2 upsampling: each pixel becomes a 2x2 block.
    pub fn upsample_nearest2x(&mut self, x: Var) -> Result<Var> {
        let (ix, tx) = self.resolve(x)?;
        let out = upsample_forward(tx)?;
        self.record(out, Op::Upsample2(ix))
    }
}
