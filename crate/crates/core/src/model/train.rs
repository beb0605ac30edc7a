//! Mini-batch SGD over (query, target, mask) samples.

use crate::autodiff::{sgd_step, OptimizerState, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::model::LogoNet;

/// One training example as network-ready tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub query: Tensor<T>,
    pub target: Tensor<T>,
    /// `T x T` binary mask.
    pub mask: Tensor<T>,
}

/// Mean loss over the batch and the batch-mean gradient for every parameter
/// tensor. Samples are reduced in order, so results do not depend on
/// scheduling.
pub fn batch_gradients<T: Scalar>(net: &LogoNet<T>, batch: &[Sample<T>]) -> Result<(T, Vec<Vec<T>>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut total = T::zero();
    let mut acc: Option<Vec<Vec<T>>> = None;
    for s in batch {
        let (loss, grads) = net.loss_and_grads(&s.query, &s.target, &s.mask)?;
        total = total + loss;
        match acc.as_mut() {
            None => acc = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.iter_mut().zip(g).for_each(|(x, y)| *x = *x + *y);
                }
            }
        }
    }
    let n = T::lit(batch.len() as f64);
    let mut acc = acc.expect("non-empty batch");
    for g in acc.iter_mut() {
        g.iter_mut().for_each(|v| *v = *v / n);
    }
    Ok((total / n, acc))
}

/// Zeroes gradients, computes batch gradients and applies one SGD update.
/// Returns the mean batch loss measured before the update.
pub fn train_step<T: Scalar>(
    net: &mut LogoNet<T>,
    opt: &mut OptimizerState<T>,
    batch: &[Sample<T>],
) -> Result<T> {
    let (loss, grads) = batch_gradients(net, batch)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite { op: "bce_loss" });
    }
    net.params.zero_grad();
    for (p, g) in net.params.tensors_mut().into_iter().zip(&grads) {
        p.accumulate_grad(g)?;
    }
    sgd_step(net.params.tensors_mut(), opt)?;
    Ok(loss)
}
