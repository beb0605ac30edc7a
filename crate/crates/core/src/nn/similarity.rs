use crate::autodiff::{Op, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn check_pair<T: Scalar>(f: &Tensor<T>, v: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (h, w, c) = f
        .hwc()
        .ok_or_else(|| Error::invalid(format!("cosine_map expects HxWxC, got {:?}", f.shape())))?;
    if v.shape() != [1, 1, c] {
        return Err(Error::ShapeMismatch {
            op: "cosine_map",
            expected: vec![1, 1, c],
            actual: v.shape().to_vec(),
        });
    }
    Ok((h, w, c))
}

/// Cosine similarity between every spatial feature vector of `f` and `v`.
/// Zero-norm vectors give similarity 0.
pub(crate) fn cosine_map_forward<T: Scalar>(f: &Tensor<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = check_pair(f, v)?;
    let nv = norm(v.data());
    let out = f
        .data()
        .chunks_exact(c)
        .map(|fp| {
            let nf = norm(fp);
            if nf == T::zero() || nv == T::zero() {
                T::zero()
            } else {
                dot(fp, v.data()) / (nf * nv)
            }
        })
        .collect();
    Tensor::new(vec![h, w, 1], out)
}

pub(crate) fn cosine_map_backward<T: Scalar>(
    f: &Tensor<T>,
    v: &Tensor<T>,
    gout: &[T],
) -> (Vec<T>, Vec<T>) {
    let c = v.len();
    let vd = v.data();
    let nv = norm(vd);
    let mut gf = vec![T::zero(); f.len()];
    let mut gv = vec![T::zero(); c];
    for (p, fp) in f.data().chunks_exact(c).enumerate() {
        let nf = norm(fp);
        if nf == T::zero() || nv == T::zero() {
            continue;
        }
        let g = gout[p];
        let cos = dot(fp, vd) / (nf * nv);
        let inv = T::one() / (nf * nv);
        let gfp = &mut gf[p * c..(p + 1) * c];
        for i in 0..c {
            gfp[i] = g * (vd[i] * inv - cos * fp[i] / (nf * nf));
            gv[i] = gv[i] + g * (fp[i] * inv - cos * vd[i] / (nv * nv));
        }
    }
    (gf, gv)
}

pub(crate) fn scale_channels_forward<T: Scalar>(f: &Tensor<T>, m: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = f
        .hwc()
        .ok_or_else(|| Error::invalid("scale_channels expects HxWxC features"))?;
    if m.shape() != [h, w, 1] {
        return Err(Error::ShapeMismatch {
            op: "scale_channels",
            expected: vec![h, w, 1],
            actual: m.shape().to_vec(),
        });
    }
    let out = f
        .data()
        .chunks_exact(c)
        .zip(m.data())
        .flat_map(|(fp, &s)| fp.iter().map(move |&x| x * s))
        .collect();
    Tensor::new(vec![h, w, c], out)
}

pub(crate) fn scale_channels_backward<T: Scalar>(
    f: &Tensor<T>,
    m: &Tensor<T>,
    gout: &[T],
) -> (Vec<T>, Vec<T>) {
    let c = f.hwc().expect("validated in forward").2;
    let mut gf = Vec::with_capacity(f.len());
    let mut gm = Vec::with_capacity(m.len());
    for ((fp, gp), &s) in f.data().chunks_exact(c).zip(gout.chunks_exact(c)).zip(m.data()) {
        gf.extend(gp.iter().map(|&g| g * s));
        gm.push(dot(fp, gp));
    }
    (gf, gm)
}

impl<T: Scalar> Tape<T> {
    /// Per-position cosine similarity of `f` (`H x W x C`) against `v`
    /// (`1 x 1 x C`), giving an `H x W x 1` map.
    pub fn cosine_map(&mut self, f: Var, v: Var) -> Result<Var> {
        let (i_f, tf) = self.resolve(f)?;
        let (i_v, tv) = self.resolve(v)?;
        let out = cosine_map_forward(tf, tv)?;
        self.record(out, Op::CosineMap(i_f, i_v))
    }

    /// Multiplies every channel of `f` by the single-channel map `m`.
    pub fn scale_channels(&mut self, f: Var, m: Var) -> Result<Var> {
        let (i_f, tf) = self.resolve(f)?;
        let (i_m, tm) = self.resolve(m)?;
        let out = scale_channels_forward(tf, tm)?;
        self.record(out, Op::ScaleChannels(i_f, i_m))
    }
}
