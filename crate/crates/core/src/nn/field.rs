//! Displacement and stress networks of one trainable model.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, Tape, Var};
use crate::error::{Error, Result};

use super::mlp::{mlp_field_eval, MlpSpec, ModelParams};
use super::separable::{spinn_eval_grid_with_derivatives, spinn_eval_points, SeparableModel};
use super::FieldBatch;

#[derive(Clone, Debug)]
pub enum Network {
    Separable(SeparableModel),
    Pointwise { spec: MlpSpec, params: ModelParams },
}

impl Network {
    pub fn outputs(&self) -> usize {
        match self {
            Network::Separable(m) => m.outputs(),
            Network::Pointwise { spec, .. } => spec.output_width(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// Parameter blocks in storage order: three bodies, or one MLP.
    pub fn blocks(&self) -> Vec<&ModelParams> {
        match self {
            Network::Separable(m) => m.bodies.iter().collect(),
            Network::Pointwise { params, .. } => vec![params],
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ModelParams> {
        match self {
            Network::Separable(m) => m.bodies.iter_mut().collect(),
            Network::Pointwise { params, .. } => vec![params],
        }
    }

    pub fn eval_points(&self, points: &[[f64; 3]]) -> Result<FieldBatch> {
        match self {
            Network::Separable(m) => spinn_eval_points(m, points),
            Network::Pointwise { spec, params } => mlp_field_eval(spec, params, points),
        }
    }

    pub fn eval_grid(&self, axes: &[Vec<f64>; 3]) -> Result<FieldBatch> {
        match self {
            Network::Separable(m) => spinn_eval_grid_with_derivatives(m, axes),
            Network::Pointwise { .. } => self.eval_points(&grid_points(axes)),
        }
    }
}

/// Row-major Cartesian product of three axes.
pub fn grid_points(axes: &[Vec<f64>; 3]) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(axes[0].len() * axes[1].len() * axes[2].len());
    for &x in &axes[0] {
        for &y in &axes[1] {
            for &z in &axes[2] {
                out.push([x, y, z]);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Displacement,
    Stress,
}

/// Networks predicting the three displacement components and, in mixed
/// formulations, the six stress components `xx, yy, zz, xy, xz, yz`.
#[derive(Clone, Debug)]
pub struct FieldModel {
    pub displacement: Vec<Network>,
    pub stress: Vec<Network>,
}

impl FieldModel {
    pub fn new(displacement: Vec<Network>, stress: Vec<Network>) -> Result<Self> {
        let m = Self { displacement, stress };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let du: usize = self.displacement.iter().map(Network::outputs).sum();
        let ds: usize = self.stress.iter().map(Network::outputs).sum();
        if du != 3 {
            return Err(Error::Config(format!("displacement networks give {du} outputs, need 3")));
        }
        if ds != 0 && ds != 6 {
            return Err(Error::Config(format!("stress networks give {ds} outputs, need 6")));
        }
        let sep = self.networks().filter(|n| matches!(n, Network::Separable(_))).count();
        if sep != 0 && sep != self.displacement.len() + self.stress.len() {
            return Err(Error::Config("cannot mix separable and pointwise networks".into()));
        }
        Ok(())
    }

    pub fn has_stress(&self) -> bool {
        !self.stress.is_empty()
    }

    pub fn is_separable(&self) -> bool {
        matches!(self.displacement.first(), Some(Network::Separable(_)))
    }

    pub fn networks(&self) -> impl Iterator<Item = &Network> {
        self.displacement.iter().chain(self.stress.iter())
    }

    pub fn networks_with_role(&self) -> impl Iterator<Item = (Role, &Network)> {
        let d = self.displacement.iter().map(|n| (Role::Displacement, n));
        d.chain(self.stress.iter().map(|n| (Role::Stress, n)))
    }

    pub fn param_count(&self) -> usize {
        self.networks().map(Network::param_count).sum()
    }

    pub fn blocks(&self) -> Vec<&ModelParams> {
        self.networks().flat_map(Network::blocks).collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|b| b.flat.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Config(format!(
                "parameter vector has {} entries, model needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for net in self.displacement.iter_mut().chain(self.stress.iter_mut()) {
            for b in net.blocks_mut() {
                let n = b.flat.len();
                b.flat.copy_from_slice(&flat[off..off + n]);
                off += n;
            }
        }
        Ok(())
    }

    /// One column leaf per parameter block, in [`FieldModel::flat`] order.
    pub fn leaves<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.blocks()
            .iter()
            .map(|b| tape.leaf(Mat::column(b.flat.clone())))
            .collect()
    }

    pub fn body_evaluations(&self) -> usize {
        self.networks()
            .map(|n| match n {
                Network::Separable(m) => m.body_evaluations(),
                Network::Pointwise { .. } => 0,
            })
            .sum()
    }

    fn concat(nets: &[Network], eval: impl Fn(&Network) -> Result<FieldBatch>, into: &mut FieldBatch) -> Result<()> {
        for n in nets {
            let b = eval(n)?;
            into.values.extend(b.values);
            into.d_values.extend(b.d_values);
        }
        Ok(())
    }

    fn eval_with(&self, points: Vec<[f64; 3]>, eval: impl Fn(&Network) -> Result<FieldBatch>) -> Result<FieldBatch> {
        let mut batch = FieldBatch::empty(points, 0);
        Self::concat(&self.displacement, &eval, &mut batch)?;
        Self::concat(&self.stress, &eval, &mut batch)?;
        Ok(batch)
    }

    /// Fields 0..3 are displacements, 3..9 stresses when present.
    pub fn eval_points(&self, points: &[[f64; 3]]) -> Result<FieldBatch> {
        self.eval_with(points.to_vec(), |n| n.eval_points(points))
    }

    pub fn eval_grid(&self, axes: &[Vec<f64>; 3]) -> Result<FieldBatch> {
        self.eval_with(grid_points(axes), |n| n.eval_grid(axes))
    }
}
