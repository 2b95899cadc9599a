//! Exact derivatives: a reverse-mode matrix tape for parameter gradients and
//! dual numbers for derivatives of scalar-input functions.

mod dual;
mod mat;
mod tape;

pub use dual::DualScalar;
pub use mat::Mat;
pub use tape::{Gradients, Tape, Unary, Var};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("non-finite value produced at tape node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("non-finite forward-mode output at index {index}")]
    NonFiniteOutput { index: usize },
}

/// Gradient of a scalar loss with respect to a flat parameter vector.
///
/// `loss_fn` receives the tape and the parameters as an `n x 1` column leaf
/// and must return a `1x1` node.
pub fn grad<F>(loss_fn: F, at: &[f64]) -> Result<Vec<f64>, AdError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Var<'t>,
{
    value_and_grad(loss_fn, at).map(|(_, g)| g)
}

pub fn value_and_grad<F>(loss_fn: F, at: &[f64]) -> Result<(f64, Vec<f64>), AdError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Var<'t>,
{
    let tape = Tape::new();
    let theta = tape.leaf(Mat::column(at.to_vec()));
    let loss = loss_fn(&tape, theta);
    let grads = tape.backward(loss)?;
    Ok((loss.scalar(), grads.wrt(theta)))
}

/// Evaluates a loss built on the tape without differentiating it.
pub fn evaluate<F>(loss_fn: F, at: &[f64]) -> f64
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Var<'t>,
{
    let tape = Tape::new();
    let theta = tape.leaf(Mat::column(at.to_vec()));
    loss_fn(&tape, theta).scalar()
}

/// Values and derivatives of a vector-valued function of one real input.
pub fn forward_derivative<F>(f: F, x: f64) -> Result<(Vec<f64>, Vec<f64>), AdError>
where
    F: Fn(DualScalar) -> Vec<DualScalar>,
{
    let out = f(DualScalar::variable(x));
    if let Some(index) = out
        .iter()
        .position(|d| !d.value.is_finite() || !d.tangent.is_finite())
    {
        return Err(AdError::NonFiniteOutput { index });
    }
    Ok(out.iter().map(|d| (d.value, d.tangent)).unzip())
}

/// Relative discrepancy between two derivative estimates. Exact agreement
/// (including both zero) gives zero.
pub fn relative_discrepancy(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / a.abs().max(b.abs())
    }
}

/// Worst relative discrepancy between [`grad`] and central differences over
/// all coordinates.
pub fn check_gradient<F>(loss_fn: F, at: &[f64], fd_step: f64) -> Result<f64, AdError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Var<'t>,
{
    let coords: Vec<usize> = (0..at.len()).collect();
    check_gradient_at(loss_fn, at, fd_step, &coords)
}

/// As [`check_gradient`], restricted to the listed coordinates.
pub fn check_gradient_at<F>(
    loss_fn: F,
    at: &[f64],
    fd_step: f64,
    coords: &[usize],
) -> Result<f64, AdError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Var<'t>,
{
    assert!(fd_step > 0.0, "finite-difference step must be positive");
    let analytic = grad(&loss_fn, at)?;
    let mut worst: f64 = 0.0;
    let mut probe = at.to_vec();
    for &i in coords {
        probe[i] = at[i] + fd_step;
        let plus = evaluate(&loss_fn, &probe);
        probe[i] = at[i] - fd_step;
        let minus = evaluate(&loss_fn, &probe);
        probe[i] = at[i];
        let numeric = (plus - minus) / (2.0 * fd_step);
        worst = worst.max(relative_discrepancy(analytic[i], numeric));
    }
    Ok(worst)
}
