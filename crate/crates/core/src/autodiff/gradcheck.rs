//! Central-difference gradient checking at double precision.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Largest total input size the checker will enumerate.
pub const MAX_CHECK_ELEMENTS: usize = 10_000;

fn run<F>(op: &F, inputs: &[Tensor<f64>], track: bool) -> Result<(Tape<f64>, Vec<Var>, Var)>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| {
            if track {
                tape.variable(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let out = op(&mut tape, &vars)?;
    let out = if tape.value(out).len() == 1 {
        out
    } else {
        tape.sum(out)?
    };
    Ok((tape, vars, out))
}

fn eval<F>(op: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let (tape, _, out) = run(op, inputs, false)?;
    let v = tape.value(out).data()[0];
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "grad_check" });
    }
    Ok(v)
}

/// Maximum relative error between backward gradients and central differences
/// over every element of every input. The op's output is reduced by summation.
///
/// Relative error per element is `|a - n| / max(|a|, |n|, floor)`, where the
/// floor is `1e-8` or, if larger, `1e4` times the rounding noise of the
/// central difference, taken as four ulps of `f` over the step:
/// `4 * eps_mach * max(|f|, 1) / eps`. Gradients below the
/// floor cannot be resolved to relative precision by finite differences and
/// are held to an absolute bound instead.
pub fn grad_check<F>(op: F, inputs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let total: usize = inputs.iter().map(Tensor::len).sum();
    if total > MAX_CHECK_ELEMENTS {
        return Err(Error::invalid(format!(
            "grad_check enumerates at most {MAX_CHECK_ELEMENTS} elements, got {total}"
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps must be positive"));
    }

    let f0 = eval(&op, inputs)?;
    let floor = (4e4 * f64::EPSILON * f0.abs().max(1.0) / eps).max(1e-8);
    let (mut tape, vars, out) = run(&op, inputs, true)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            tape.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect();

    let mut probe = inputs.to_vec();
    let mut worst = 0.0f64;
    for (ti, grads) in analytic.iter().enumerate() {
        for (ei, &a) in grads.iter().enumerate() {
            let orig = probe[ti].data()[ei];
            probe[ti].data_mut()[ei] = orig + eps;
            let plus = eval(&op, &probe)?;
            probe[ti].data_mut()[ei] = orig - eps;
            let minus = eval(&op, &probe)?;
            probe[ti].data_mut()[ei] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = a.abs().max(numeric.abs()).max(floor);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
