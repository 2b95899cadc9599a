//! Separable networks: one scalar-input body network per axis, merged as
//! `u(x, y, z) = sum_j f_j(x) g_j(y) h_j(z)`.
//!
//! A model carrying several output fields widens every body network to
//! `rank * outputs` values; field `c` uses columns `c*rank .. (c+1)*rank`.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, Tape, Var};
use crate::error::{Error, Result};

use super::mlp::{init_params, Activation, MlpSpec, ModelParams};
use super::FieldBatch;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparableSpec {
    pub hidden: Vec<usize>,
    pub rank: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl SeparableSpec {
    pub fn body(&self) -> MlpSpec {
        MlpSpec::with_hidden(1, &self.hidden, self.rank * self.outputs, self.activation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.outputs == 0 {
            return Err(Error::Config("separable rank and output count must be positive".into()));
        }
        self.body().validate()
    }
}

/// Per-axis body outputs for a batch of coordinates: `n x (rank*outputs)`
/// values and their derivatives with respect to the coordinate.
#[derive(Clone, Copy)]
pub struct AxisBasis<'t> {
    pub values: Var<'t>,
    pub tangents: Var<'t>,
}

impl<'t> AxisBasis<'t> {
    pub fn block(&self, derivative: bool, field: usize, rank: usize) -> Var<'t> {
        let m = if derivative { self.tangents } else { self.values };
        m.cols(field * rank, rank)
    }
}

pub struct SeparableModel {
    pub spec: SeparableSpec,
    pub bodies: [ModelParams; 3],
    evaluations: AtomicUsize,
}

impl Clone for SeparableModel {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            bodies: self.bodies.clone(),
            evaluations: AtomicUsize::new(0),
        }
    }
}

impl std::fmt::Debug for SeparableModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeparableModel")
            .field("spec", &self.spec)
            .field("params", &self.param_count())
            .finish()
    }
}

/// Derives independent sub-seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeparableModel {
    pub fn new(spec: SeparableSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let body = spec.body();
        let bodies = [0u64, 1, 2].map(|a| init_params(&body, derive_seed(seed, a)));
        Ok(Self::from_params(spec, bodies))
    }

    pub fn from_params(spec: SeparableSpec, bodies: [ModelParams; 3]) -> Self {
        Self {
            spec,
            bodies,
            evaluations: AtomicUsize::new(0),
        }
    }

    pub fn rank(&self) -> usize {
        self.spec.rank
    }

    pub fn outputs(&self) -> usize {
        self.spec.outputs
    }

    pub fn param_count(&self) -> usize {
        self.bodies.iter().map(ModelParams::len).sum()
    }

    /// Total body-network point evaluations since construction or reset.
    pub fn body_evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn reset_evaluations(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
    }

    /// Parameter leaves for the three body networks.
    pub fn leaves<'t>(&self, tape: &'t Tape) -> [Var<'t>; 3] {
        [0, 1, 2].map(|a| tape.leaf(Mat::column(self.bodies[a].flat.clone())))
    }

    /// Evaluates one body network at `coords` with its forward-mode derivative.
    pub fn axis_basis<'t>(&self, theta: Var<'t>, coords: &[f64]) -> AxisBasis<'t> {
        let tape = theta.tape();
        self.evaluations.fetch_add(coords.len(), Ordering::Relaxed);
        let input = tape.leaf(Mat::column(coords.to_vec()));
        let seed = tape.scalar(1.0);
        let (values, tangents) = self.spec.body().forward_tape(theta, input, &[seed]);
        AxisBasis {
            values,
            tangents: tangents[0],
        }
    }

    pub fn bases<'t>(&self, thetas: [Var<'t>; 3], axes: [&[f64]; 3]) -> [AxisBasis<'t>; 3] {
        [0, 1, 2].map(|a| self.axis_basis(thetas[a], axes[a]))
    }
}

/// `(n1*n2) x n3` tensor `sum_j f[i,j] g[k,j] h[l,j]` in row-major order.
pub fn merge_grid<'t>(f: Var<'t>, g: Var<'t>, h: Var<'t>) -> Var<'t> {
    f.khatri_rao(g).matmul_t(h, false, true)
}

fn check_axes(axes: &[Vec<f64>; 3]) -> Result<()> {
    if axes.iter().any(Vec::is_empty) {
        return Err(Error::Config("every grid axis needs at least one coordinate".into()));
    }
    Ok(())
}

/// Field values on the Cartesian product of `axes`, one row-major
/// `n1*n2*n3` vector per output field.
pub fn spinn_eval_grid(model: &SeparableModel, axes: &[Vec<f64>; 3]) -> Result<Vec<Vec<f64>>> {
    check_axes(axes)?;
    let tape = Tape::new();
    let thetas = model.leaves(&tape);
    let b = model.bases(thetas, [&axes[0], &axes[1], &axes[2]]);
    let r = model.rank();
    let out = (0..model.outputs())
        .map(|c| {
            merge_grid(
                b[0].block(false, c, r),
                b[1].block(false, c, r),
                b[2].block(false, c, r),
            )
            .value()
            .data
        })
        .collect();
    tape.check_finite()?;
    Ok(out)
}

/// Values and all three first partials on the Cartesian product of `axes`.
/// Points are listed in row-major `(i, j, k)` order.
pub fn spinn_eval_grid_with_derivatives(model: &SeparableModel, axes: &[Vec<f64>; 3]) -> Result<FieldBatch> {
    check_axes(axes)?;
    let tape = Tape::new();
    let thetas = model.leaves(&tape);
    let b = model.bases(thetas, [&axes[0], &axes[1], &axes[2]]);
    let r = model.rank();
    let mut points = Vec::with_capacity(axes[0].len() * axes[1].len() * axes[2].len());
    for &x in &axes[0] {
        for &y in &axes[1] {
            for &z in &axes[2] {
                points.push([x, y, z]);
            }
        }
    }
    let mut batch = FieldBatch::empty(points, model.outputs());
    for c in 0..model.outputs() {
        let [f, g, h] = [0, 1, 2].map(|a| b[a].block(false, c, r));
        let [df, dg, dh] = [0, 1, 2].map(|a| b[a].block(true, c, r));
        let fg = f.khatri_rao(g);
        let value = fg.matmul_t(h, false, true).value();
        let dx = df.khatri_rao(g).matmul_t(h, false, true).value();
        let dy = f.khatri_rao(dg).matmul_t(h, false, true).value();
        let dz = fg.matmul_t(dh, false, true).value();
        batch.values[c] = value.data;
        for (p, d) in batch.d_values[c].iter_mut().enumerate() {
            *d = [dx.data[p], dy.data[p], dz.data[p]];
        }
    }
    tape.check_finite()?;
    Ok(batch)
}

/// Pointwise evaluation at arbitrary points: each point's three coordinates
/// go through their body networks and the bases are merged per point.
pub fn spinn_eval_points(model: &SeparableModel, points: &[[f64; 3]]) -> Result<FieldBatch> {
    let tape = Tape::new();
    let thetas = model.leaves(&tape);
    let coords: [Vec<f64>; 3] = [0, 1, 2].map(|a| points.iter().map(|p| p[a]).collect());
    let b = model.bases(thetas, [&coords[0], &coords[1], &coords[2]]);
    tape.check_finite()?;
    let vals: [Mat; 3] = [0, 1, 2].map(|a| b[a].values.value());
    let tans: [Mat; 3] = [0, 1, 2].map(|a| b[a].tangents.value());
    let r = model.rank();
    let mut batch = FieldBatch::empty(points.to_vec(), model.outputs());
    for c in 0..model.outputs() {
        for p in 0..points.len() {
            let (mut u, mut d) = (0.0, [0.0; 3]);
            for j in c * r..(c + 1) * r {
                let (f, g, h) = (vals[0].get(p, j), vals[1].get(p, j), vals[2].get(p, j));
                u += f * g * h;
                d[0] += tans[0].get(p, j) * g * h;
                d[1] += f * tans[1].get(p, j) * h;
                d[2] += f * g * tans[2].get(p, j);
            }
            batch.values[c][p] = u;
            batch.d_values[c][p] = d;
        }
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Body network computing `x` exactly: swish(a) - swish(-a) = a.
    fn identity_body() -> (SeparableSpec, ModelParams) {
        let spec = SeparableSpec {
            hidden: vec![2],
            rank: 1,
            outputs: 1,
            activation: Activation::Swish,
        };
        let body = spec.body();
        // W1 = [1, -1]^T, b1 = 0, W2 = [1, -1], b2 = 0
        let params = ModelParams {
            flat: vec![1.0, -1.0, 0.0, 0.0, 1.0, -1.0, 0.0],
            shapes: body.shapes(),
        };
        (spec, params)
    }

    #[test]
    fn rank_one_product() {
        let (spec, p) = identity_body();
        let m = SeparableModel::from_params(spec, [p.clone(), p.clone(), p]);
        let u = spinn_eval_grid(&m, &[vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        assert!((u[0][0] - 24.0).abs() < 1e-12);
        assert_eq!(m.body_evaluations(), 3);
    }

    #[test]
    fn zero_axis_gives_zero_tensor() {
        let spec = SeparableSpec {
            hidden: vec![8, 8],
            rank: 4,
            outputs: 2,
            activation: Activation::Swish,
        };
        // biases start at zero, so every body maps 0 to 0
        let m = SeparableModel::new(spec, 3).unwrap();
        let u = spinn_eval_grid(&m, &[vec![0.0; 3], vec![0.1, 0.5], vec![0.2, 0.3, 0.9]]).unwrap();
        assert!(u.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn product_rule_partials() {
        // u = x y z
        let (spec, p) = identity_body();
        let m = SeparableModel::from_params(spec, [p.clone(), p.clone(), p]);
        let b = spinn_eval_grid_with_derivatives(&m, &[vec![3.0], vec![2.0], vec![5.0]]).unwrap();
        let d = b.d_values[0][0];
        assert!((d[0] - 10.0).abs() < 1e-12);
        assert!((d[1] - 15.0).abs() < 1e-12);
        assert!((d[2] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn grid_counts_are_additive() {
        let spec = SeparableSpec {
            hidden: vec![5],
            rank: 3,
            outputs: 3,
            activation: Activation::Tanh,
        };
        let m = SeparableModel::new(spec, 1).unwrap();
        let n = 6;
        let axis: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        spinn_eval_grid_with_derivatives(&m, &[axis.clone(), axis.clone(), axis]).unwrap();
        assert_eq!(m.body_evaluations(), 3 * n);
    }
}
