//! Invariant suites runnable from an installed binary.

use rand::distributions::{Distribution, Uniform};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{relative_discrepancy, DualScalar};
use crate::domain::{angle_domain_with, tensor_quadrature, BoxDomain};
use crate::error::Result;
use crate::loss::{build_grid, evaluate_loss, loss_and_gradient, Backend, Mode, Sampling};
use crate::mechanics::{dim_reduce, dim_restore, von_mises, ScaleSpec, SymTensor3};
use crate::nn::{spinn_eval_grid_with_derivatives, Activation, MlpSpec, ModelParams, SeparableModel, SeparableSpec};
use crate::problems::beam_problem;

/// Test hooks that deliberately break a suite.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Faults {
    /// Relative change applied to the first Simpson weight of every axis.
    pub quadrature_weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub worst: f64,
    pub tol: f64,
    pub passed: bool,
}

impl SuiteResult {
    fn new(name: &'static str, worst: f64, tol: f64) -> Self {
        Self {
            name,
            worst,
            tol,
            passed: worst <= tol,
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("{verdict} {}: worst {:.3e} (tol {:.0e})", self.name, self.worst, self.tol)
    }
}

pub const GRADIENT_TOL: f64 = 1e-5;
pub const QUADRATURE_TOL: f64 = 1e-12;
pub const SEPARABLE_TOL: f64 = 1e-10;
pub const ROUND_TRIP_TOL: f64 = 1e-14;
pub const VON_MISES_TOL: f64 = 1e-12;

/// Autodiff against central differences on the full beam energy loss at
/// random initialization, over `coords` parameters drawn from those with a
/// gradient above `1e-3` of the largest.
pub fn gradient_error(coords: usize, seed: u64) -> Result<f64> {
    let p = beam_problem();
    let mode = Mode::SpinnDem;
    let lp = p.loss_problem(mode)?;
    let grid = build_grid(&lp, Sampling::Quadrature, true, seed, 0)?;
    let mut model = p.init_model(mode, seed)?;
    let theta = model.flat();
    let (_, g) = loss_and_gradient(&model, &lp, &grid, mode, Backend::Gram)?;
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let candidates: Vec<usize> = (0..g.len()).filter(|&i| g[i].abs() >= 1e-3 * gmax).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, candidates.len(), coords.min(candidates.len()));
    let mut worst = 0.0f64;
    let mut probe = theta.clone();
    for k in picks {
        let i = candidates[k];
        let h = 1e-5 * theta[i].abs().max(1.0);
        let mut at = |v: f64| -> Result<f64> {
            probe[i] = v;
            model.set_flat(&probe)?;
            Ok(evaluate_loss(&model, &lp, &grid, mode, Backend::Gram)?.total)
        };
        let fd = (at(theta[i] + h)? - at(theta[i] - h)?) / (2.0 * h);
        probe[i] = theta[i];
        worst = worst.max(relative_discrepancy(g[i], fd));
    }
    Ok(worst)
}

fn cubic_integral(c: &[f64; 4], a: f64, b: f64) -> f64 {
    let f = |x: f64| c[0] * x + c[1] * x * x / 2.0 + c[2] * x.powi(3) / 3.0 + c[3] * x.powi(4) / 4.0;
    f(b) - f(a)
}

fn cubic(c: &[f64; 4], x: f64) -> f64 {
    c[0] + x * (c[1] + x * (c[2] + x * c[3]))
}

/// Tensor Simpson against analytic integrals of random per-axis cubic
/// products, on the beam box and on both boxes of the angle section.
pub fn quadrature_error(faults: Faults, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef = Uniform::new_inclusive(-2.0, 2.0);
    let mut boxes = vec![BoxDomain::new([0.0; 3], [1.0, 0.1, 0.1], [33, 5, 7])];
    boxes.extend(angle_domain_with([17, 5, 9], [17, 9, 5]).boxes);
    let mut worst = 0.0f64;
    for _ in 0..4 {
        let c: [[f64; 4]; 3] = [0, 1, 2].map(|_| [0, 1, 2, 3].map(|_| coef.sample(&mut rng)));
        let mut exact = 0.0;
        let mut approx = 0.0;
        for b in &boxes {
            let mut q = tensor_quadrature(b)?.grid;
            for w in &mut q.weights {
                w[0] *= 1.0 + faults.quadrature_weight;
            }
            let axes: [f64; 3] = [0, 1, 2].map(|a| {
                q.axes[a].iter().zip(&q.weights[a]).map(|(x, w)| w * cubic(&c[a], *x)).sum()
            });
            approx += axes.iter().product::<f64>();
            exact += (0..3).map(|a| cubic_integral(&c[a], b.lo[a], b.hi[a])).product::<f64>();
        }
        worst = worst.max(relative_discrepancy(exact, approx));
    }
    Ok(worst)
}

fn body_dual(spec: &MlpSpec, params: &ModelParams, x: f64) -> Vec<DualScalar> {
    let mut z = vec![DualScalar::variable(x)];
    let mut off = 0;
    let shapes = spec.shapes();
    for (l, s) in shapes.iter().enumerate() {
        let w = &params.flat[off..off + s.rows * s.cols];
        let b = &params.flat[off + s.rows * s.cols..off + s.len()];
        off += s.len();
        z = (0..s.rows)
            .map(|r| {
                let pre = (0..s.cols).fold(DualScalar::constant(b[r]), |acc, c| acc + w[r * s.cols + c] * z[c]);
                match (l + 1 < shapes.len(), spec.activation) {
                    (false, _) => pre,
                    (true, Activation::Swish) => pre.swish(),
                    (true, Activation::Tanh) => pre.tanh(),
                }
            })
            .collect();
    }
    z
}

/// Batched separable grid evaluation against per-point sums of body
/// outputs computed with dual numbers, values and all first partials.
pub fn separable_error(seed: u64) -> Result<f64> {
    let spec = SeparableSpec {
        hidden: vec![8, 8],
        rank: 4,
        outputs: 3,
        activation: Activation::Swish,
    };
    let body = spec.body();
    let mut model = SeparableModel::new(spec, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Uniform::new_inclusive(-0.5, 0.5);
    for b in &mut model.bodies {
        let n = b.flat.len();
        for v in &mut b.flat[n - 12..] {
            *v = u.sample(&mut rng);
        }
    }
    let axes: [Vec<f64>; 3] = [0, 1, 2].map(|_| {
        let mut a: Vec<f64> = (0..4).map(|_| u.sample(&mut rng) + 0.5).collect();
        a.sort_by(f64::total_cmp);
        a
    });
    let batch = spinn_eval_grid_with_derivatives(&model, &axes)?;
    let per_axis: [Vec<Vec<DualScalar>>; 3] =
        [0, 1, 2].map(|a| axes[a].iter().map(|&x| body_dual(&body, &model.bodies[a], x)).collect());
    let r = model.rank();
    let mut worst = 0.0f64;
    for (p, q) in batch.points.iter().enumerate() {
        let idx = [0, 1, 2].map(|a| axes[a].iter().position(|v| *v == q[a]).unwrap_or(0));
        let [f, g, h] = [0, 1, 2].map(|a| &per_axis[a][idx[a]]);
        for c in 0..model.outputs() {
            let (mut v, mut d) = (0.0, [0.0; 3]);
            for j in c * r..(c + 1) * r {
                v += f[j].value * g[j].value * h[j].value;
                d[0] += f[j].tangent * g[j].value * h[j].value;
                d[1] += f[j].value * g[j].tangent * h[j].value;
                d[2] += f[j].value * g[j].value * h[j].tangent;
            }
            worst = worst.max(relative_discrepancy(v, batch.values[c][p]));
            for k in 0..3 {
                worst = worst.max(relative_discrepancy(d[k], batch.d_values[c][p][k]));
            }
        }
    }
    Ok(worst)
}

/// Dimensional restore followed by reduction on random fields.
pub fn round_trip_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Uniform::new_inclusive(-10.0, 10.0);
    let scale = ScaleSpec {
        length: 1.0,
        displacement: 1e-4,
        modulus: 0.01 * 2.1e11 / 2.6,
    };
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let disp = [0, 1, 2].map(|_| u.sample(&mut rng));
        let sig = SymTensor3::from_array([0; 6].map(|_| u.sample(&mut rng)));
        let (du, ds) = dim_restore(disp, sig, &scale);
        let (bu, bs) = dim_reduce(du, ds, &scale);
        for (a, b) in disp.iter().chain(&sig.to_array()).zip(bu.iter().chain(&bs.to_array())) {
            worst = worst.max(relative_discrepancy(*a, *b));
        }
    }
    worst
}

/// Change of von Mises stress under added hydrostatic pressure.
pub fn von_mises_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Uniform::new_inclusive(-1.0, 1.0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let sig = SymTensor3::from_array([0; 6].map(|_| u.sample(&mut rng)));
        let p = u.sample(&mut rng);
        let mut shifted = sig;
        shifted.xx += p;
        shifted.yy += p;
        shifted.zz += p;
        worst = worst.max(relative_discrepancy(von_mises(&sig)?, von_mises(&shifted)?));
    }
    Ok(worst)
}

/// Every suite; errors inside a suite count as failures.
pub fn run_suites(faults: Faults) -> Vec<SuiteResult> {
    let seed = 20_240_611;
    let wrap = |name, r: Result<f64>, tol| match r {
        Ok(w) => SuiteResult::new(name, w, tol),
        Err(_) => SuiteResult::new(name, f64::INFINITY, tol),
    };
    vec![
        wrap("gradient", gradient_error(20, seed), GRADIENT_TOL),
        wrap("quadrature", quadrature_error(faults, seed), QUADRATURE_TOL),
        wrap("separable", separable_error(seed), SEPARABLE_TOL),
        SuiteResult::new("round-trip", round_trip_error(seed), ROUND_TRIP_TOL),
        wrap("von-mises", von_mises_error(seed), VON_MISES_TOL),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_and_equivalence_suites() {
        assert!(quadrature_error(Faults::default(), 1).unwrap() < QUADRATURE_TOL);
        let broken = Faults { quadrature_weight: 1e-3 };
        assert!(quadrature_error(broken, 1).unwrap() > QUADRATURE_TOL);
        assert!(separable_error(2).unwrap() < SEPARABLE_TOL);
        assert!(round_trip_error(3) < ROUND_TRIP_TOL);
        assert!(von_mises_error(4).unwrap() < VON_MISES_TOL);
    }
}
