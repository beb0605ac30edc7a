use crate::autodiff::{Op, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub(crate) fn tile_forward<T: Scalar>(z: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let d = match z.shape() {
        &[1, 1, d] => d,
        other => {
            return Err(Error::ShapeMismatch {
                op: "tile_spatial",
                expected: vec![1, 1, z.len()],
                actual: other.to_vec(),
            })
        }
    };
    let mut out = Vec::with_capacity(h * w * d);
    for _ in 0..h * w {
        out.extend_from_slice(z.data());
    }
    Tensor::new(vec![h, w, d], out)
}

pub(crate) fn tile_backward<T: Scalar>(d: usize, gout: &[T]) -> Vec<T> {
    let mut gz = vec![T::zero(); d];
    for row in gout.chunks_exact(d) {
        for (g, v) in gz.iter_mut().zip(row) {
            *g = *g + *v;
        }
    }
    gz
}

pub(crate) fn concat_forward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let bad = || Error::ShapeMismatch {
        op: "concat_channels",
        expected: a.shape().to_vec(),
        actual: b.shape().to_vec(),
    };
    let (h, w, ca) = a.hwc().ok_or_else(bad)?;
    let (hb, wb, cb) = b.hwc().ok_or_else(bad)?;
    if (h, w) != (hb, wb) {
        return Err(bad());
    }
    let mut out = Vec::with_capacity(h * w * (ca + cb));
    for p in 0..h * w {
        out.extend_from_slice(&a.data()[p * ca..(p + 1) * ca]);
        out.extend_from_slice(&b.data()[p * cb..(p + 1) * cb]);
    }
    Tensor::new(vec![h, w, ca + cb], out)
}

pub(crate) fn concat_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    gout: &[T],
) -> (Vec<T>, Vec<T>) {
    let (h, w, ca) = a.hwc().expect("validated in forward");
    let cb = b.hwc().expect("validated in forward").2;
    let mut ga = Vec::with_capacity(a.len());
    let mut gb = Vec::with_capacity(b.len());
    for p in 0..h * w {
        let row = &gout[p * (ca + cb)..(p + 1) * (ca + cb)];
        ga.extend_from_slice(&row[..ca]);
        gb.extend_from_slice(&row[ca..]);
    }
    (ga, gb)
}

impl<T: Scalar> Tape<T> {
    /// Replicates a `1 x 1 x D` code over an `h x w` grid.
    pub fn tile_spatial(&mut self, z: Var, h: usize, w: usize) -> Result<Var> {
        let (iz, tz) = self.resolve(z)?;
        let out = tile_forward(tz, h, w)?;
        self.record(out, Op::Tile(iz))
    }

    /// Channel concatenation: channels of `a` followed by channels of `b`.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ta) = self.resolve(a)?;
        let (ib, tb) = self.resolve(b)?;
        let out = concat_forward(ta, tb)?;
        self.record(out, Op::Concat(ia, ib))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tile_one_by_one_is_identity() {
        let z = Tensor::<f64>::from_f64(vec![1, 1, 3], &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(tile_forward(&z, 1, 1).unwrap(), z);
    }

    #[test]
    fn every_tiled_position_equals_code() {
        let z = Tensor::<f64>::from_f64(vec![1, 1, 4], &[0.5, 1.5, -1.0, 2.0]).unwrap();
        let t = tile_forward(&z, 3, 5).unwrap();
        assert_eq!(t.shape(), &[3, 5, 4]);
        for slice in t.data().chunks_exact(4) {
            assert_eq!(slice, z.data());
        }
    }

    #[test]
    fn tile_rejects_spatial_input() {
        let z = Tensor::<f64>::zeros(vec![2, 1, 4]);
        assert!(tile_forward(&z, 3, 3).is_err());
    }

    #[test]
    fn concat_with_empty_and_slicing() {
        let a = Tensor::<f64>::from_f64(vec![1, 2, 2], &[1., 2., 3., 4.]).unwrap();
        let empty = Tensor::<f64>::zeros(vec![1, 2, 0]);
        assert_eq!(concat_forward(&a, &empty).unwrap(), a);

        let b = Tensor::<f64>::from_f64(vec![1, 2, 1], &[9., 8.]).unwrap();
        let c = concat_forward(&a, &b).unwrap();
        assert_eq!(c.data(), &[1., 2., 9., 3., 4., 8.]);
        let head: Vec<f64> = c.data().chunks_exact(3).flat_map(|r| r[..2].to_vec()).collect();
        assert_eq!(head, a.data());
    }

    #[test]
    fn concat_paper_stage_one_width() {
        let f = Tensor::<f32>::zeros(vec![2, 2, 64]);
        let z = Tensor::<f32>::zeros(vec![1, 1, 512]);
        let zt = tile_forward(&z, 2, 2).unwrap();
        assert_eq!(concat_forward(&f, &zt).unwrap().shape(), &[2, 2, 576]);
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::<f32>::zeros(vec![2, 2, 1]);
        let b = Tensor::<f32>::zeros(vec![2, 3, 1]);
        assert!(matches!(
            concat_forward(&a, &b),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
