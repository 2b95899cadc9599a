//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{build_grid, Mode};
use crate::problems::{problem_by_name, ProblemConfig, BEAM};
use crate::train::{AdamConfig, ScheduleSpec, TrainConfig};

/// A named benchmark or a full inline problem description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Named(String),
    Inline(Box<ProblemConfig>),
}

/// Optional changes applied on top of the problem defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub lambda_bc: Option<f64>,
    pub lr: Option<f64>,
    pub decay_rate: Option<f64>,
    pub decay_every: Option<u64>,
    /// Point counts per box; a single entry applies to every box.
    pub grid: Option<Vec<[usize; 3]>>,
    pub rank: Option<usize>,
    pub hidden: Option<Vec<usize>>,
}

impl Overrides {
    /// Fields set in `other` replace those in `self`.
    pub fn merge(&mut self, other: &Overrides) {
        macro_rules! take {
            ($($f:ident),*) => {$(if other.$f.is_some() { self.$f = other.$f.clone(); })*};
        }
        take!(lambda_bc, lr, decay_rate, decay_every, grid, rank, hidden);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Defaults to the beam.
    pub problem: Option<ProblemSource>,
    pub mode: Option<Mode>,
    pub epochs: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub eval_every: Option<u64>,
    pub resample_every: Option<u64>,
    pub time_limit_s: Option<f64>,
    pub adam: Option<AdamConfig>,
    pub overrides: Overrides,
}

/// Everything a solve needs, with defaults and overrides applied.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedRun {
    pub problem: ProblemConfig,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub out: PathBuf,
    pub reference: Option<PathBuf>,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().replace('\n', " ")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    /// Values set in `flags` replace those in `self`.
    pub fn merge(&mut self, flags: &RunConfig) {
        macro_rules! take {
            ($($f:ident),*) => {$(if flags.$f.is_some() { self.$f = flags.$f.clone(); })*};
        }
        take!(problem, mode, epochs, seeds, jobs, out, reference, eval_every, resample_every, time_limit_s, adam);
        self.overrides.merge(&flags.overrides);
    }

    /// Applies defaults and overrides and checks every value that training
    /// would otherwise reject later.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        let mut problem = match &self.problem {
            None => problem_by_name(BEAM)?,
            Some(ProblemSource::Named(n)) => problem_by_name(n)?,
            Some(ProblemSource::Inline(p)) => (**p).clone(),
        };
        let mode = self.mode.unwrap_or(Mode::SpinnDem);
        let o = &self.overrides;
        if let Some(l) = o.lambda_bc {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("lambda_bc must be positive, got {l}")));
            }
            if mode.is_separable() {
                problem.lambda_bc.separable = l;
            } else {
                problem.lambda_bc.pointwise = l;
            }
        }
        if let Some(g) = &o.grid {
            let boxes = &mut problem.domain.boxes;
            if g.len() != 1 && g.len() != boxes.len() {
                return Err(Error::Config(format!("grid needs 1 or {} entries, got {}", boxes.len(), g.len())));
            }
            for (i, b) in boxes.iter_mut().enumerate() {
                *b = b.with_resolution(g[i.min(g.len() - 1)]);
            }
        }
        if let Some(r) = o.rank {
            problem.architecture.rank = r;
        }
        if let Some(h) = &o.hidden {
            if mode.is_separable() {
                problem.architecture.hidden = h.clone();
            } else {
                problem.architecture.pointwise_hidden = h.clone();
            }
        }
        if let Some(s) = &self.seeds {
            problem.seeds = s.clone();
        }
        problem.validate()?;
        problem.supports(mode)?;

        let defaults = ScheduleSpec::default();
        let train = TrainConfig {
            epochs: self.epochs.unwrap_or(problem.budget.epochs(mode)),
            eval_every: self.eval_every.unwrap_or(1000),
            resample_every: self.resample_every.unwrap_or(100),
            schedule: ScheduleSpec {
                lr0: o.lr.unwrap_or(defaults.lr0),
                decay_rate: o.decay_rate.unwrap_or(defaults.decay_rate),
                decay_every: o.decay_every.unwrap_or(defaults.decay_every),
            },
            adam: self.adam.unwrap_or_default(),
            time_limit_s: self.time_limit_s,
        };
        train.validate()?;
        if train.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if let Some(t) = train.time_limit_s {
            if !(t > 0.0) {
                return Err(Error::Config(format!("time limit must be positive, got {t}")));
            }
        }
        let jobs = self.jobs.unwrap_or(1);
        if jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        let lp = problem.loss_problem(mode)?;
        build_grid(&lp, problem.sampling_for(mode), mode.is_energy(), problem.seeds[0], 0)?;
        problem.init_model(mode, problem.seeds[0])?;
        Ok(ResolvedRun {
            seeds: problem.seeds.clone(),
            problem,
            mode,
            jobs,
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("runs")),
            reference: self.reference.clone(),
            train,
        })
    }
}

impl ResolvedRun {
    /// A configuration that resolves back to this run.
    pub fn echo(&self) -> RunConfig {
        RunConfig {
            problem: Some(ProblemSource::Inline(Box::new(self.problem.clone()))),
            mode: Some(self.mode),
            epochs: Some(self.train.epochs),
            seeds: Some(self.seeds.clone()),
            jobs: Some(self.jobs),
            out: Some(self.out.clone()),
            reference: self.reference.clone(),
            eval_every: Some(self.train.eval_every),
            resample_every: Some(self.train.resample_every),
            time_limit_s: self.train.time_limit_s,
            adam: Some(self.train.adam),
            overrides: Overrides {
                lr: Some(self.train.schedule.lr0),
                decay_rate: Some(self.train.schedule.decay_rate),
                decay_every: Some(self.train.schedule.decay_every),
                ..Overrides::default()
            },
        }
    }

    pub fn echo_toml(&self) -> Result<String> {
        toml::to_string(&self.echo()).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let mut c = RunConfig::from_toml("mode = \"spinn-pde\"\nepochs = 10\n[overrides]\nrank = 4\nlr = 0.01\n").unwrap();
        let flags = RunConfig {
            epochs: Some(20),
            overrides: Overrides {
                rank: Some(8),
                ..Default::default()
            },
            ..Default::default()
        };
        c.merge(&flags);
        let r = c.resolve().unwrap();
        assert_eq!(r.mode, Mode::SpinnPde);
        assert_eq!(r.train.epochs, 20);
        assert_eq!(r.problem.architecture.rank, 8);
        assert_eq!(r.train.schedule.lr0, 0.01);
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig {
            epochs: Some(5),
            seeds: Some(vec![3]),
            overrides: Overrides {
                grid: Some(vec![[9, 5, 5]]),
                ..Default::default()
            },
            ..Default::default()
        };
        let r = c.resolve().unwrap();
        let text = r.echo_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap().resolve().unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let bad = |c: RunConfig| c.resolve().unwrap_err();
        let mut c = RunConfig::default();
        c.overrides.grid = Some(vec![[32, 33, 33]]);
        assert_eq!(bad(c).kind(), "config");
        let c = RunConfig {
            problem: Some(ProblemSource::Named("angle".into())),
            mode: Some(Mode::SpinnPde),
            ..Default::default()
        };
        assert_eq!(bad(c).kind(), "unsupported");
        let mut c = RunConfig::default();
        c.overrides.lambda_bc = Some(-1.0);
        assert_eq!(bad(c).kind(), "config");
        assert!(RunConfig::from_toml("mood = 1").is_err());
        assert!(RunConfig::from_toml("mode = \"dem\"").is_err());
    }
}
