use crate::autodiff::{Op, Scalar, Tape, Tensor, Var};
use crate::error::Result;

fn map<T: Scalar>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Result<Tensor<T>> {
    Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
}

pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn relu_backward<T: Scalar>(x: &Tensor<T>, gout: &[T]) -> Vec<T> {
    x.data()
        .iter()
        .zip(gout)
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect()
}

pub(crate) fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, gout: &[T]) -> Vec<T> {
    y.data()
        .iter()
        .zip(gout)
        .map(|(&s, &g)| g * s * (T::one() - s))
        .collect()
}

pub(crate) fn tanh_backward<T: Scalar>(y: &Tensor<T>, gout: &[T]) -> Vec<T> {
    y.data()
        .iter()
        .zip(gout)
        .map(|(&t, &g)| g * (T::one() - t * t))
        .collect()
}

impl<T: Scalar> Tape<T> {
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let (ix, tx) = self.resolve(x)?;
        let out = map(tx, |v| v.max(T::zero()))?;
        self.record(out, Op::Relu(ix))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let (ix, tx) = self.resolve(x)?;
        let out = map(tx, sigmoid_scalar)?;
        self.record(out, Op::Sigmoid(ix))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let (ix, tx) = self.resolve(x)?;
        let out = map(tx, |v| v.tanh())?;
        self.record(out, Op::Tanh(ix))
    }
}
