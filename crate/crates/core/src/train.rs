//! Adam with a staircase learning-rate schedule, the training loop, and the
//! accuracy metrics recorded along the way.

use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{build_grid, evaluate_loss, loss_and_gradient, Backend, LossBreakdown, LossProblem, Mode, Sampling};
use crate::nn::FieldModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamConfig,
}

impl OptimizerState {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
            config,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::Config(format!(
            "adam shapes differ: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient at parameter {i}")));
    }
    let AdamConfig { beta1, beta2, eps } = state.config;
    state.step += 1;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleSpec {
    pub lr0: f64,
    pub decay_rate: f64,
    pub decay_every: u64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            decay_rate: 0.95,
            decay_every: 5000,
        }
    }
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) || !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) || self.decay_every == 0 {
            return Err(Error::Config(format!(
                "invalid schedule: lr0 {}, decay rate {}, decay every {}",
                self.lr0, self.decay_rate, self.decay_every
            )));
        }
        Ok(())
    }
}

/// `lr0 * decay_rate^floor(epoch / decay_every)`.
pub fn lr_at(s: &ScheduleSpec, epoch: u64) -> f64 {
    s.lr0 * s.decay_rate.powi((epoch / s.decay_every) as i32)
}

/// `|pred - ref| / |ref|` in the Euclidean norm.
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::Config(format!(
            "prediction has {} values, reference {}",
            pred.len(),
            reference.len()
        )));
    }
    let den: f64 = reference.iter().map(|r| r * r).sum();
    if den == 0.0 {
        return Err(Error::UndefinedMetric("reference has zero norm".into()));
    }
    let num: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    Ok((num / den).sqrt())
}

/// Quantities compared against a reference field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "u_x")]
    Ux,
    #[serde(rename = "u_y")]
    Uy,
    #[serde(rename = "u_z")]
    Uz,
    #[serde(rename = "u_m")]
    Um,
    #[serde(rename = "sigma_vm")]
    SigmaVm,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Ux, Metric::Uy, Metric::Uz, Metric::Um, Metric::SigmaVm];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ux => "u_x",
            Metric::Uy => "u_y",
            Metric::Uz => "u_z",
            Metric::Um => "u_m",
            Metric::SigmaVm => "sigma_vm",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Metrics at one evaluation epoch. Wall-clock time is kept out of the
/// serialized form so that metric files are reproducible; see
/// [`TimingRecord`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub epoch: u64,
    pub loss: LossBreakdown,
    pub l2: BTreeMap<Metric, f64>,
    pub lr: f64,
    pub seed: u64,
    #[serde(skip)]
    pub elapsed_s: f64,
}

/// Training wall-clock at an evaluation epoch, evaluation time excluded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub epoch: u64,
    pub elapsed_s: f64,
}

impl RunRecord {
    pub fn timing(&self) -> TimingRecord {
        TimingRecord {
            epoch: self.epoch,
            elapsed_s: self.elapsed_s,
        }
    }
}

/// Elapsed time of the first record whose `metric` is at most `threshold`.
pub fn time_to_accuracy(records: &[RunRecord], metric: Metric, threshold: f64) -> Option<f64> {
    records
        .iter()
        .find(|r| r.l2.get(&metric).is_some_and(|e| *e <= threshold))
        .map(|r| r.elapsed_s)
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: u64,
    pub eval_every: u64,
    pub resample_every: u64,
    pub schedule: ScheduleSpec,
    pub adam: AdamConfig,
    /// Stop once this much training time has elapsed.
    pub time_limit_s: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20_000,
            eval_every: 1000,
            resample_every: 100,
            schedule: ScheduleSpec::default(),
            adam: AdamConfig::default(),
            time_limit_s: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.eval_every == 0 || self.resample_every == 0 {
            return Err(Error::Config("evaluation and resampling intervals must be positive".into()));
        }
        Ok(())
    }
}

/// Accuracy metrics of a model against whatever reference is in use.
pub type Evaluator<'a> = dyn FnMut(&FieldModel) -> Result<BTreeMap<Metric, f64>> + 'a;

pub struct TrainOutcome {
    pub model: FieldModel,
    pub records: Vec<RunRecord>,
    /// Set when training stopped on a non-finite loss or gradient; `model`
    /// then holds the last finite parameters.
    pub aborted: Option<Error>,
    pub epochs_run: u64,
    pub train_seconds: f64,
}

pub struct TrainJob<'a> {
    pub problem: &'a LossProblem,
    pub sampling: Sampling,
    pub mode: Mode,
    pub backend: Backend,
    pub seed: u64,
    pub config: &'a TrainConfig,
}

/// Runs the optimization loop. `on_record` sees every record as it is made.
pub fn train(
    mut model: FieldModel,
    job: &TrainJob<'_>,
    evaluator: &mut Evaluator<'_>,
    on_record: &mut dyn FnMut(&RunRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    let cfg = job.config;
    cfg.validate()?;
    let energy = job.mode.is_energy();
    let mut grid = build_grid(job.problem, job.sampling, energy, job.seed, 0)?;
    let mut params = model.flat();
    let mut state = OptimizerState::new(params.len(), cfg.adam);
    let mut elapsed = Duration::ZERO;
    let mut records = Vec::new();

    let mut record = |model: &FieldModel, epoch: u64, grid: &crate::loss::LossGrid, elapsed: Duration| -> Result<RunRecord> {
        let loss = evaluate_loss(model, job.problem, grid, job.mode, job.backend)?;
        let r = RunRecord {
            epoch,
            loss,
            l2: evaluator(model)?,
            lr: lr_at(&cfg.schedule, epoch),
            seed: job.seed,
            elapsed_s: elapsed.as_secs_f64(),
        };
        on_record(&r)?;
        Ok(r)
    };
    records.push(record(&model, 0, &grid, elapsed)?);

    let mut aborted = None;
    let mut done = 0;
    // Parameters before the latest update, restored if the update diverged.
    let mut previous: Option<Vec<f64>> = None;
    while done < cfg.epochs {
        let epoch = done;
        let start = Instant::now();
        if !energy && epoch > 0 && epoch % cfg.resample_every == 0 {
            grid = build_grid(job.problem, job.sampling, energy, job.seed, epoch)?;
        }
        let step = loss_and_gradient(&model, job.problem, &grid, job.mode, job.backend).and_then(|(l, g)| {
            if !l.total.is_finite() {
                return Err(Error::Numeric(format!("loss is {}", l.total)));
            }
            let mut next = params.clone();
            let mut st = state.clone();
            adam_step(&mut next, &g, &mut st, lr_at(&cfg.schedule, epoch))?;
            Ok((next, st))
        });
        let failure = match step {
            Ok((next, st)) => {
                previous = Some(std::mem::replace(&mut params, next));
                state = st;
                model.set_flat(&params)?;
                elapsed += start.elapsed();
                done += 1;
                None
            }
            Err(e) => Some(e),
        };
        let out_of_time = cfg.time_limit_s.is_some_and(|t| elapsed.as_secs_f64() >= t);
        let failure = match failure {
            None if done % cfg.eval_every == 0 || done == cfg.epochs || out_of_time => {
                match record(&model, done, &grid, elapsed) {
                    Ok(r) => {
                        records.push(r);
                        None
                    }
                    Err(e @ (Error::Autodiff(_) | Error::Numeric(_))) => Some(e),
                    Err(e) => return Err(e),
                }
            }
            other => other,
        };
        if let Some(e) = failure {
            if let Some(p) = previous.take() {
                model.set_flat(&p)?;
                done -= 1;
            }
            aborted = Some(Error::TrainingAborted {
                epoch: done,
                reason: e.to_string(),
            });
            break;
        }
        if out_of_time {
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        records,
        aborted,
        epochs_run: done,
        train_seconds: elapsed.as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: u64, err: f64, t: f64) -> RunRecord {
        RunRecord {
            epoch,
            loss: LossBreakdown::default(),
            l2: BTreeMap::from([(Metric::Uz, err)]),
            lr: 1e-3,
            seed: 0,
            elapsed_s: t,
        }
    }

    #[test]
    fn first_adam_step_is_lr_sized() {
        let mut p = vec![0.5];
        let mut s = OptimizerState::new(1, AdamConfig::default());
        adam_step(&mut p, &[1.0], &mut s, 1e-3).unwrap();
        assert!((p[0] - (0.5 - 1e-3)).abs() < 1e-10);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.5, -2.0];
        let mut s = OptimizerState::new(2, AdamConfig::default());
        s.m = vec![0.1, 0.2];
        s.v = vec![0.01, 0.04];
        let before = p.clone();
        adam_step(&mut p, &[0.0, 0.0], &mut s, 1e-3).unwrap();
        assert_ne!(p, before);
        let mut q = vec![0.5, -2.0];
        let mut fresh = OptimizerState::new(2, AdamConfig::default());
        adam_step(&mut q, &[0.0, 0.0], &mut fresh, 1e-3).unwrap();
        assert_eq!(q, before);
        assert_eq!(fresh.m, vec![0.0, 0.0]);
        assert!((s.m[0] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = vec![0.0; 2];
        let mut s = OptimizerState::new(2, AdamConfig::default());
        assert!(adam_step(&mut p, &[0.0, f64::NAN], &mut s, 1e-3).is_err());
    }

    #[test]
    fn staircase_schedule() {
        let s = ScheduleSpec::default();
        assert_eq!(lr_at(&s, 0), 1e-3);
        assert_eq!(lr_at(&s, 4999), 1e-3);
        assert!((lr_at(&s, 5000) - 9.5e-4).abs() < 1e-18);
    }

    #[test]
    fn relative_l2_examples() {
        assert_eq!(relative_l2(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(relative_l2(&[6.0; 4], &[3.0; 4]).unwrap(), 1.0);
        let r = [0.6, 0.8, 0.0];
        let p = [1.6, 0.8, 0.0];
        assert!((relative_l2(&p, &r).unwrap() - 1.0).abs() < 1e-15);
        let p = [0.6, 0.8, 0.5];
        assert!((relative_l2(&p, &r).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(relative_l2(&[1.0], &[0.0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn time_to_accuracy_examples() {
        let recs = vec![rec(0, 0.2, 1.0), rec(1, 0.04, 2.0), rec(2, 0.06, 3.0)];
        assert_eq!(time_to_accuracy(&recs, Metric::Uz, 0.05), Some(2.0));
        assert_eq!(time_to_accuracy(&recs[..1], Metric::Uz, 0.05), None);
        assert_eq!(time_to_accuracy(&[rec(0, 0.01, 0.5)], Metric::Uz, 0.05), Some(0.5));
        assert_eq!(time_to_accuracy(&recs, Metric::Ux, 0.05), None);
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[0.003; 7]).unwrap();
        assert!((m - 0.003).abs() < 1e-15 && s < 1e-15);
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert!(mean_std(&[]).is_none());
    }

    #[test]
    fn record_serialization_omits_wall_clock() {
        let r = rec(1000, 0.1, 12.5);
        let s = serde_json::to_string(&r).unwrap();
        assert!(!s.contains("12.5"));
        assert!(s.contains(r#""u_z":0.1"#));
        let back: RunRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back.l2, r.l2);
    }
}
