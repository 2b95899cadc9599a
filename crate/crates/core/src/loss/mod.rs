//! Training objectives: pointwise PDE loss, separable PDE loss with
//! stress-displacement coupling, and the energy functional.

pub mod backend;
pub mod expr;
pub mod fields;
pub mod grid;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::FieldModel;

pub use backend::{separable_bases, FieldLayout, GramIntegrator, PointIntegrator};
pub use expr::{Integrator, LinExpr, Quantity, Term};
pub use fields::{
    bc_dirichlet_loss, bc_traction_loss, coupling_loss, energy_loss, residual_loss, LoadedFace, TractionFace,
};
pub use grid::{build_grid, Boundary, Condition, LossGrid, LossProblem, Region, RegionKind, Sampling};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PinnPde,
    SpinnPde,
    SpinnDem,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::PinnPde, Mode::SpinnPde, Mode::SpinnDem];

    pub fn name(self) -> &'static str {
        match self {
            Mode::PinnPde => "pinn-pde",
            Mode::SpinnPde => "spinn-pde",
            Mode::SpinnDem => "spinn-dem",
        }
    }

    pub fn is_energy(self) -> bool {
        self == Mode::SpinnDem
    }

    pub fn is_separable(self) -> bool {
        self != Mode::PinnPde
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}; expected pinn-pde, spinn-pde or spinn-dem")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub bc: f64,
    pub residual: f64,
    pub coupling: f64,
    pub energy: f64,
    pub lambda_bc: f64,
}

/// Loss components available for combination; a mode needs specific ones.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub bc: Option<f64>,
    pub residual: Option<f64>,
    pub coupling: Option<f64>,
    pub energy: Option<f64>,
}

fn missing(mode: Mode, what: &str) -> Error {
    Error::Config(format!("{mode} loss needs the {what} term"))
}

/// `lambda_bc bc + residual + coupling` for PDE modes and
/// `lambda_bc bc + energy` for the energy mode.
pub fn total_loss(mode: Mode, lambda_bc: f64, c: LossComponents) -> Result<LossBreakdown> {
    let bc = c.bc.ok_or_else(|| missing(mode, "boundary"))?;
    let mut out = LossBreakdown {
        bc,
        lambda_bc,
        ..LossBreakdown::default()
    };
    if mode.is_energy() {
        out.energy = c.energy.ok_or_else(|| missing(mode, "energy"))?;
        out.total = lambda_bc * bc + out.energy;
    } else {
        out.residual = c.residual.ok_or_else(|| missing(mode, "residual"))?;
        out.coupling = c.coupling.ok_or_else(|| missing(mode, "coupling"))?;
        out.total = lambda_bc * bc + out.residual + out.coupling;
    }
    Ok(out)
}

/// How integrals over tensor regions are evaluated for separable models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Per-axis Gram matrices; never forms full grid tensors.
    Gram,
    /// Every term materialized at every point.
    Pointwise,
}

/// A loss recorded on a tape.
pub struct TapeLoss<'t> {
    pub total: Var<'t>,
    pub bc: Var<'t>,
    pub residual: Option<Var<'t>>,
    pub coupling: Option<Var<'t>>,
    pub energy: Option<Var<'t>>,
    pub mode: Mode,
    pub lambda_bc: f64,
}

impl TapeLoss<'_> {
    pub fn breakdown(&self) -> LossBreakdown {
        let mut b = total_loss(
            self.mode,
            self.lambda_bc,
            LossComponents {
                bc: Some(self.bc.scalar()),
                residual: self.residual.map(|v| v.scalar()),
                coupling: self.coupling.map(|v| v.scalar()),
                energy: self.energy.map(|v| v.scalar()),
            },
        )
        .expect("tape loss carries the terms of its mode");
        b.total = self.total.scalar();
        b
    }
}

fn check_model(model: &FieldModel, mode: Mode) -> Result<()> {
    model.validate()?;
    if mode.is_separable() != model.is_separable() {
        return Err(Error::Config(format!(
            "{mode} needs {} networks",
            if mode.is_separable() { "separable" } else { "pointwise" }
        )));
    }
    if !mode.is_energy() && !model.has_stress() {
        return Err(Error::Config(format!("{mode} needs a stress network")));
    }
    Ok(())
}

fn assemble<'t, I: Integrator<'t> + ?Sized>(
    int: &mut I,
    problem: &LossProblem,
    grid: &LossGrid,
    mode: Mode,
) -> Result<TapeLoss<'t>> {
    let tape = int.tape();
    let mut bc_parts = Vec::new();
    for d in &grid.dirichlet {
        bc_parts.push(expr::dirichlet(int, &d.region, d.target)?);
    }
    let lambda_bc = problem.lambda_bc;
    if mode.is_energy() {
        let mut e = Vec::new();
        for v in &grid.volume {
            e.push(expr::energy_density(int, v, problem.hooke, problem.body_force)?);
        }
        for l in &grid.loads {
            e.push(expr::load_work(int, &l.region, l.traction)?.scale(-1.0));
        }
        let bc = expr::sum_vars(tape, bc_parts);
        let energy = expr::sum_vars(tape, e);
        Ok(TapeLoss {
            total: bc.scale(lambda_bc) + energy,
            bc,
            residual: None,
            coupling: None,
            energy: Some(energy),
            mode,
            lambda_bc,
        })
    } else {
        for t in &grid.traction {
            bc_parts.push(expr::traction(int, &t.region, t.normal, t.traction)?);
        }
        let (mut r, mut c) = (Vec::new(), Vec::new());
        for v in &grid.volume {
            r.push(expr::residual(int, v, problem.body_force)?);
            c.push(expr::coupling(int, v, problem.hooke)?);
        }
        let bc = expr::sum_vars(tape, bc_parts);
        let residual = expr::sum_vars(tape, r);
        let coupling = expr::sum_vars(tape, c);
        Ok(TapeLoss {
            total: bc.scale(lambda_bc) + residual + coupling,
            bc,
            residual: Some(residual),
            coupling: Some(coupling),
            energy: None,
            mode,
            lambda_bc,
        })
    }
}

/// Records the loss of `mode` on `tape`. `leaves` are the model's parameter
/// leaves from [`FieldModel::leaves`].
pub fn build_loss<'t>(
    tape: &'t Tape,
    leaves: &[Var<'t>],
    model: &FieldModel,
    problem: &LossProblem,
    grid: &LossGrid,
    mode: Mode,
    backend: Backend,
) -> Result<TapeLoss<'t>> {
    check_model(model, mode)?;
    if !model.is_separable() {
        let mut int = PointIntegrator::mlp(tape, leaves, model, &grid.coords)?;
        return assemble(&mut int, problem, grid, mode);
    }
    let needed: Vec<bool> = model
        .networks_with_role()
        .map(|(role, _)| !mode.is_energy() || role == crate::nn::Role::Displacement)
        .collect();
    let bases = separable_bases(leaves, model, &grid.coords, &needed)?;
    match backend {
        Backend::Gram => assemble(&mut GramIntegrator::new(tape, model, bases), problem, grid, mode),
        Backend::Pointwise => {
            let mut int = PointIntegrator::separable(tape, model, bases, &grid.coords);
            assemble(&mut int, problem, grid, mode)
        }
    }
}

pub fn evaluate_loss(
    model: &FieldModel,
    problem: &LossProblem,
    grid: &LossGrid,
    mode: Mode,
    backend: Backend,
) -> Result<LossBreakdown> {
    let tape = Tape::new();
    let leaves = model.leaves(&tape);
    let loss = build_loss(&tape, &leaves, model, problem, grid, mode, backend)?;
    tape.check_finite()?;
    Ok(loss.breakdown())
}

/// Loss breakdown and the gradient of the total with respect to
/// [`FieldModel::flat`].
pub fn loss_and_gradient(
    model: &FieldModel,
    problem: &LossProblem,
    grid: &LossGrid,
    mode: Mode,
    backend: Backend,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let tape = Tape::new();
    let leaves = model.leaves(&tape);
    let loss = build_loss(&tape, &leaves, model, problem, grid, mode, backend)?;
    let grads = tape.backward(loss.total)?;
    let mut g = Vec::with_capacity(model.param_count());
    for l in &leaves {
        g.extend(grads.wrt(*l));
    }
    Ok((loss.breakdown(), g))
}
