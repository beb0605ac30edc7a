use crate::autodiff::{Op, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Probability clamp applied before taking logarithms.
pub const BCE_EPS: f64 = 1e-7;

fn spatial(shape: &[usize]) -> &[usize] {
    match shape {
        [rest @ .., 1] if rest.len() == 2 => rest,
        s => s,
    }
}

fn clamp<T: Scalar>(p: T) -> T {
    let eps = T::lit(BCE_EPS);
    p.max(eps).min(T::one() - eps)
}

/// Mean pixel-wise binary cross entropy over both terms.
pub fn bce_value<T: Scalar>(pred: &[T], target: &[T]) -> T {
    let n = T::lit(pred.len() as f64);
    let total: T = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = clamp(p);
            t * p.ln() + (T::one() - t) * (T::one() - p).ln()
        })
        .sum();
    -total / n
}

pub(crate) fn bce_backward<T: Scalar>(pred: &Tensor<T>, target: &[T], gout: T) -> Vec<T> {
    let eps = T::lit(BCE_EPS);
    let hi = T::one() - eps;
    let scale = gout / T::lit(pred.len() as f64);
    pred.data()
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            if p < eps || p > hi {
                T::zero()
            } else {
                -scale * (t / p - (T::one() - t) / (T::one() - p))
            }
        })
        .collect()
}

impl<T: Scalar> Tape<T> {
    /// Binary cross entropy between a probability map and a {0,1} target.
    /// `H x W` and `H x W x 1` shapes are interchangeable.
    pub fn bce_loss(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        let (ip, tp) = self.resolve(pred)?;
        if spatial(tp.shape()) != spatial(target.shape()) {
            return Err(Error::ShapeMismatch {
                op: "bce_loss",
                expected: tp.shape().to_vec(),
                actual: target.shape().to_vec(),
            });
        }
        if let Some(bad) = target
            .data()
            .iter()
            .find(|&&t| t != T::zero() && t != T::one())
        {
            return Err(Error::TargetNotBinary(bad.to_f64().unwrap_or(f64::NAN)));
        }
        let loss = bce_value(tp.data(), target.data());
        self.record(
            Tensor::scalar(loss),
            Op::Bce {
                pred: ip,
                target: target.data().to_vec(),
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss(pred: &[f64], target: &[f64], shape: Vec<usize>) -> Result<f64> {
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(Tensor::from_f64(shape.clone(), pred)?)?;
        let l = tape.bce_loss(p, &Tensor::from_f64(shape, target)?)?;
        Ok(tape.value(l).data()[0])
    }

    #[test]
    fn half_prediction_gives_ln2() {
        let l = loss(&[0.5; 4], &[1.0, 0.0, 0.0, 1.0], vec![2, 2]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_fixture() {
        let l = loss(&[0.9, 0.1, 0.8, 0.2], &[1.0, 0.0, 1.0, 0.0], vec![2, 2]).unwrap();
        // direct summation oracle
        let expected = -0.25 * (0.9f64.ln() + 0.9f64.ln() + 0.8f64.ln() + 0.8f64.ln());
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 0.164252).abs() < 1e-6);
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let l = loss(&[1.0, 0.0, 0.0, 1.0], &[1.0, 0.0, 0.0, 1.0], vec![2, 2]).unwrap();
        assert!(l >= 0.0 && l <= -(1.0 - BCE_EPS).ln() + 1e-15);
    }

    #[test]
    fn rejects_non_binary_target_and_shape_mismatch() {
        assert!(matches!(
            loss(&[0.5; 4], &[0.5; 4], vec![2, 2]),
            Err(Error::TargetNotBinary(_))
        ));
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(Tensor::full(vec![2, 2], 0.5)).unwrap();
        let t = Tensor::zeros(vec![2, 3]);
        assert!(matches!(tape.bce_loss(p, &t), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn accepts_trailing_channel() {
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(Tensor::full(vec![2, 2, 1], 0.5)).unwrap();
        let t = Tensor::zeros(vec![2, 2]);
        assert!(tape.bce_loss(p, &t).is_ok());
    }
}
