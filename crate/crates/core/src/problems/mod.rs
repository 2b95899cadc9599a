//! The cantilever beam and thin-walled angle benchmarks: geometry,
//! material, scales, boundary conditions and default training setups.

pub mod checks;
pub mod reference;
pub mod report;

use serde::{Deserialize, Serialize};

use crate::domain::{angle_domain, linspace, BoxDomain, DomainSpec, FaceTag, Side};
use crate::error::{Error, Result};
use crate::loss::{Boundary, Condition, LossProblem, Mode, Sampling};
use crate::mechanics::{nondim_forward, Constitutive, MaterialSpec, NondimConstants, ScaleSpec};
use crate::nn::{derive_seed, init_params, Activation, FieldModel, MlpSpec, Network, SeparableModel, SeparableSpec};

pub use checks::{clamp_ratio, stationarity_probe, symmetry_defect, ProbeResult};
pub use reference::{
    euler_bernoulli_deflection, euler_bernoulli_tip_deflection, export_fields, ingest_reference, metrics,
    oracle_reference, parse_reference, predict, EvalReference, Prediction, ReferenceField,
};
pub use report::{report, Report, RunSummary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceRef {
    pub box_index: usize,
    pub face: FaceTag,
}

impl FaceRef {
    pub const fn new(box_index: usize, axis: usize, side: Side) -> Self {
        Self {
            box_index,
            face: FaceTag::new(axis, side),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub rank: usize,
    /// One separable network per displacement component.
    pub per_component: bool,
    /// Hidden widths of the pointwise networks.
    pub pointwise_hidden: Vec<usize>,
    pub activation: Activation,
}

/// Weights multiply the component-mean Dirichlet loss, so a weight on the
/// per-point component sum maps to three times its value here.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub separable: f64,
    pub pointwise: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub spinn_dem: u64,
    pub spinn_pde: u64,
    pub pinn_pde: u64,
}

impl Budget {
    pub fn epochs(&self, mode: Mode) -> u64 {
        match mode {
            Mode::SpinnDem => self.spinn_dem,
            Mode::SpinnPde => self.spinn_pde,
            Mode::PinnPde => self.pinn_pde,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingSpec {
    /// Per-axis collocation count for the separable PDE loss.
    pub pde_count: usize,
    pub pinn_volume: usize,
    pub pinn_surface: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub name: String,
    /// Dimensional geometry; box resolutions are the energy quadrature grids.
    pub domain: DomainSpec,
    pub material: MaterialSpec,
    pub scale: ScaleSpec,
    #[serde(default)]
    pub law: Constitutive,
    pub clamped: Vec<FaceRef>,
    /// Faces loaded by the pressure `-T z`.
    pub loaded: Vec<FaceRef>,
    #[serde(default)]
    pub interfaces: Vec<FaceRef>,
    pub lambda_bc: PenaltyWeights,
    pub architecture: Architecture,
    pub modes: Vec<Mode>,
    pub sampling: SamplingSpec,
    pub budget: Budget,
    pub seeds: Vec<u64>,
    /// Per-box evaluation grid used without a reference file.
    pub eval_grid: Vec<[usize; 3]>,
}

pub const BEAM: &str = "beam";
pub const ANGLE: &str = "angle";

pub fn beam_problem() -> ProblemConfig {
    ProblemConfig {
        name: BEAM.into(),
        domain: DomainSpec::single(BoxDomain::new([0.0; 3], [1.0, 0.1, 0.1], [33; 3])),
        material: MaterialSpec::steel(1e4),
        scale: ScaleSpec {
            length: 1.0,
            displacement: 1e-4,
            modulus: 0.01 * 2.1e11 / 2.6,
        },
        law: Constitutive::Standard,
        clamped: vec![FaceRef::new(0, 0, Side::Lo)],
        loaded: vec![FaceRef::new(0, 2, Side::Hi)],
        interfaces: vec![],
        lambda_bc: PenaltyWeights {
            separable: 3.0 * 100.0,
            pointwise: 3.0 * 10.0,
        },
        architecture: Architecture {
            hidden: vec![64; 3],
            rank: 64,
            per_component: false,
            pointwise_hidden: vec![64; 4],
            activation: Activation::Swish,
        },
        modes: Mode::ALL.to_vec(),
        sampling: SamplingSpec {
            pde_count: 32,
            pinn_volume: 4096,
            pinn_surface: 512,
        },
        budget: Budget {
            spinn_dem: 20_000,
            spinn_pde: 50_000,
            pinn_pde: 50_000,
        },
        seeds: (0..7).collect(),
        eval_grid: vec![[65, 17, 17]],
    }
}

pub fn angle_problem() -> ProblemConfig {
    ProblemConfig {
        name: ANGLE.into(),
        domain: angle_domain(),
        material: MaterialSpec::steel(2.5e4),
        scale: ScaleSpec {
            length: 1.0,
            displacement: 1e-4,
            modulus: 2.1e11 / 2.6,
        },
        law: Constitutive::Standard,
        clamped: vec![FaceRef::new(0, 0, Side::Lo), FaceRef::new(1, 0, Side::Lo)],
        loaded: vec![FaceRef::new(1, 2, Side::Hi)],
        interfaces: vec![FaceRef::new(0, 2, Side::Hi), FaceRef::new(1, 2, Side::Lo)],
        lambda_bc: PenaltyWeights {
            separable: 3.0 * 1000.0,
            pointwise: 3.0 * 1000.0,
        },
        architecture: Architecture {
            hidden: vec![64; 5],
            rank: 64,
            per_component: true,
            pointwise_hidden: vec![64; 4],
            activation: Activation::Swish,
        },
        modes: vec![Mode::SpinnDem],
        sampling: SamplingSpec {
            pde_count: 32,
            pinn_volume: 4096,
            pinn_surface: 512,
        },
        budget: Budget {
            spinn_dem: 200_000,
            spinn_pde: 0,
            pinn_pde: 0,
        },
        seeds: (0..7).collect(),
        eval_grid: vec![[65, 5, 9], [65, 9, 5]],
    }
}

pub fn problem_by_name(name: &str) -> Result<ProblemConfig> {
    match name {
        BEAM => Ok(beam_problem()),
        ANGLE => Ok(angle_problem()),
        other => Err(Error::Config(format!("unknown problem {other:?}; expected beam or angle"))),
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.material.validate()?;
        self.scale.validate()?;
        let n = self.domain.boxes.len();
        for f in self.clamped.iter().chain(&self.loaded).chain(&self.interfaces) {
            if f.box_index >= n || f.face.axis >= 3 {
                return Err(Error::Config(format!(
                    "face {} of box {} does not exist",
                    f.face, f.box_index
                )));
            }
        }
        if self.clamped.is_empty() {
            return Err(Error::Config("at least one face must be clamped".into()));
        }
        if self.eval_grid.len() != n || self.eval_grid.iter().flatten().any(|&k| k < 2) {
            return Err(Error::Config("one evaluation grid of at least 2 points per axis per box is required".into()));
        }
        let a = &self.architecture;
        if a.rank == 0 || a.hidden.is_empty() || a.pointwise_hidden.is_empty() || a.hidden.iter().chain(&a.pointwise_hidden).any(|&w| w == 0) {
            return Err(Error::Config("architecture widths and rank must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }

    pub fn supports(&self, mode: Mode) -> Result<()> {
        if self.modes.contains(&mode) {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("{mode} is not supported for the {} problem", self.name)))
        }
    }

    pub fn nondim(&self) -> Result<NondimConstants> {
        nondim_forward(&self.material, &self.scale)
    }

    pub fn lambda_bc(&self, mode: Mode) -> f64 {
        if mode.is_separable() {
            self.lambda_bc.separable
        } else {
            self.lambda_bc.pointwise
        }
    }

    /// Domain boxes in non-dimensional coordinates.
    pub fn nondim_boxes(&self) -> Vec<BoxDomain> {
        let l = self.scale.length;
        self.domain
            .boxes
            .iter()
            .map(|b| BoxDomain::new(b.lo.map(|v| v / l), b.hi.map(|v| v / l), b.resolution))
            .collect()
    }

    pub fn loss_problem(&self, mode: Mode) -> Result<LossProblem> {
        self.validate()?;
        let nd = self.nondim()?;
        let mut boundaries = Vec::new();
        let mut push = |faces: &[FaceRef], condition: Condition| {
            for f in faces {
                boundaries.push(Boundary {
                    box_index: f.box_index,
                    face: f.face,
                    condition,
                });
            }
        };
        push(&self.clamped, Condition::Clamped([0.0; 3]));
        push(&self.loaded, Condition::Traction([0.0, 0.0, -nd.traction]));
        push(&self.interfaces, Condition::Interface);
        Ok(LossProblem {
            boxes: self.nondim_boxes(),
            boundaries,
            hooke: nd.hooke(self.law),
            body_force: [0.0, 0.0, -nd.rho_g],
            lambda_bc: self.lambda_bc(mode),
        })
    }

    pub fn sampling_for(&self, mode: Mode) -> Sampling {
        match mode {
            Mode::SpinnDem => Sampling::Quadrature,
            Mode::SpinnPde => Sampling::Tensor {
                count: self.sampling.pde_count,
            },
            Mode::PinnPde => Sampling::Scattered {
                volume: self.sampling.pinn_volume,
                surface: self.sampling.pinn_surface,
            },
        }
    }

    /// Freshly initialized networks for `mode`.
    pub fn init_model(&self, mode: Mode, seed: u64) -> Result<FieldModel> {
        let a = &self.architecture;
        let mut stream = 0;
        let mut next_seed = || {
            stream += 1;
            derive_seed(seed, stream)
        };
        let mut sep = |outputs: usize| -> Result<Network> {
            let spec = SeparableSpec {
                hidden: a.hidden.clone(),
                rank: a.rank,
                outputs,
                activation: a.activation,
            };
            Ok(Network::Separable(SeparableModel::new(spec, next_seed())?))
        };
        match mode {
            Mode::SpinnDem | Mode::SpinnPde => {
                let disp = if a.per_component {
                    vec![sep(1)?, sep(1)?, sep(1)?]
                } else {
                    vec![sep(3)?]
                };
                let stress = if mode == Mode::SpinnPde { vec![sep(6)?] } else { vec![] };
                FieldModel::new(disp, stress)
            }
            Mode::PinnPde => {
                let mut mlp = |outputs: usize| {
                    let spec = MlpSpec::with_hidden(3, &a.pointwise_hidden, outputs, a.activation);
                    Network::Pointwise {
                        params: init_params(&spec, next_seed()),
                        spec,
                    }
                };
                let d = mlp(3);
                let s = mlp(6);
                FieldModel::new(vec![d], vec![s])
            }
        }
    }

    /// Evaluation points used when no reference file is given.
    pub fn eval_points(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::new();
        for (b, n) in self.domain.boxes.iter().zip(&self.eval_grid) {
            let axes = [0, 1, 2].map(|a| linspace(b.lo[a], b.hi[a], n[a]));
            out.extend(crate::nn::grid_points(&axes));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beam_constants() {
        let p = beam_problem();
        assert_eq!(p.material.traction, 1e4);
        assert_eq!(p.material.density, 7.8e3);
        assert_eq!(p.material.gravity, 9.81);
        assert!((p.domain.volume() - 0.01).abs() < 1e-15);
        let nd = p.nondim().unwrap();
        assert!((nd.mu - 100.0).abs() < 1e-12);
        assert!((nd.lambda - 150.0).abs() < 1e-12);
        assert!((nd.traction - 0.123_809_523_809_523_79).abs() < 1e-15);
        assert!((nd.rho_g - 0.947_365_714_285_714).abs() < 1e-13);
    }

    #[test]
    fn angle_constants() {
        let p = angle_problem();
        assert_eq!(p.material.traction, 2.5e4);
        assert_eq!(p.domain.boxes[0].resolution, [513, 9, 65]);
        assert_eq!(p.domain.boxes[1].resolution, [513, 65, 9]);
        assert!((p.nondim().unwrap().mu - 1.0).abs() < 1e-15);
        assert_eq!(p.lambda_bc(Mode::SpinnDem), 3000.0);
        assert!(p.supports(Mode::SpinnPde).is_err());
    }

    #[test]
    fn default_models() {
        let p = beam_problem();
        let m = p.init_model(Mode::SpinnDem, 0).unwrap();
        assert_eq!(m.displacement.len(), 1);
        assert!(!m.has_stress());
        let m = p.init_model(Mode::SpinnPde, 0).unwrap();
        assert!(m.has_stress());
        let m = p.init_model(Mode::PinnPde, 0).unwrap();
        assert!(!m.is_separable());
        let a = angle_problem().init_model(Mode::SpinnDem, 0).unwrap();
        assert_eq!(a.displacement.len(), 3);
    }

    #[test]
    fn beam_loss_problem() {
        let lp = beam_problem().loss_problem(Mode::SpinnDem).unwrap();
        assert_eq!(lp.lambda_bc, 300.0);
        assert_eq!(lp.boundaries.len(), 2);
        assert!(lp.body_force[2] < 0.0);
        assert_eq!(beam_problem().loss_problem(Mode::PinnPde).unwrap().lambda_bc, 30.0);
    }
}
