//! Solve, evaluate and report workflows behind the command-line tool.

mod config;
pub mod selftest;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

pub use config::{Overrides, ProblemSource, ResolvedRun, RunConfig};

use crate::error::{Error, Result};
use crate::loss::{Backend, Mode};
use crate::nn::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, FieldModel};
use crate::problems::{
    export_fields, ingest_reference, metrics, oracle_reference, predict, report, EvalReference, ProblemConfig, Report,
    RunSummary,
};
use crate::train::{train, Metric, RunRecord, TimingRecord, TrainJob, TrainOutcome};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.ndjson";
pub const TIMING_FILE: &str = "timing.ndjson";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const FIELDS_FILE: &str = "fields.csv";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";

/// Threshold for time-to-accuracy columns.
pub const ACCURACY_THRESHOLD: f64 = 0.05;

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(format!("creating {}", p.display()), e))
}

fn write_file(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|e| Error::io(format!("writing {}", p.display()), e))
}

fn json_line<T: serde::Serialize>(w: &mut impl Write, v: &T, p: &Path) -> Result<()> {
    let line = serde_json::to_string(v).map_err(|e| Error::Config(format!("cannot serialize record: {e}")))?;
    writeln!(w, "{line}")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(format!("writing {}", p.display()), e))
}

/// The evaluation reference: a reference file when given, otherwise the
/// analytic oracle where one exists.
pub fn load_reference(problem: &ProblemConfig, path: Option<&Path>) -> Result<Option<EvalReference>> {
    match path {
        Some(p) => Ok(Some(EvalReference::from_field(&ingest_reference(p, &problem.domain)?)?)),
        None => match oracle_reference(problem) {
            Ok(r) => Ok(Some(r)),
            Err(Error::Unsupported(_)) => Ok(None),
            Err(e) => Err(e),
        },
    }
}

pub fn evaluate_model(
    model: &FieldModel,
    problem: &ProblemConfig,
    reference: Option<&EvalReference>,
) -> Result<BTreeMap<Metric, f64>> {
    match reference {
        Some(r) => metrics(&predict(model, problem, &r.points)?, r),
        None => Ok(BTreeMap::new()),
    }
}

/// Trains one seed, writing its records, checkpoint and exported fields.
/// A training abort still writes the outputs of the last finite model.
pub fn solve_seed(run: &ResolvedRun, seed: u64, reference: Option<&EvalReference>) -> Result<TrainOutcome> {
    let p = &run.problem;
    let dir = seed_dir(&run.out, seed);
    create_dir(&dir)?;
    let open = |name: &str| -> Result<(BufWriter<File>, PathBuf)> {
        let path = dir.join(name);
        let f = File::create(&path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        Ok((BufWriter::new(f), path))
    };
    let (mut metrics_out, metrics_path) = open(METRICS_FILE)?;
    let (mut timing_out, timing_path) = open(TIMING_FILE)?;

    let problem = p.loss_problem(run.mode)?;
    let job = TrainJob {
        problem: &problem,
        sampling: p.sampling_for(run.mode),
        mode: run.mode,
        backend: Backend::Gram,
        seed,
        config: &run.train,
    };
    let model = p.init_model(run.mode, seed)?;
    let mut evaluator = |m: &FieldModel| evaluate_model(m, p, reference);
    let mut on_record = |r: &RunRecord| -> Result<()> {
        json_line(&mut metrics_out, r, &metrics_path)?;
        json_line(&mut timing_out, &r.timing(), &timing_path)
    };
    let outcome = train(model, &job, &mut evaluator, &mut on_record)?;

    let epoch = outcome.records.last().map_or(0, |r| r.epoch);
    let meta = CheckpointMeta {
        problem: p.name.clone(),
        mode: run.mode.name().into(),
        seed,
        epoch,
    };
    save_checkpoint(
        &dir.join(CHECKPOINT_FILE),
        &Checkpoint {
            meta,
            model: outcome.model.clone(),
        },
    )?;
    let points = match (&run.reference, reference) {
        (Some(_), Some(r)) => r.points.clone(),
        _ => p.eval_points(),
    };
    let pred = predict(&outcome.model, p, &points)?;
    let header = [
        ("problem", p.name.clone()),
        ("mode", run.mode.name().to_string()),
        ("seed", seed.to_string()),
        ("epoch", epoch.to_string()),
    ];
    write_file(&dir.join(FIELDS_FILE), &export_fields(&pred, &header))?;
    Ok(outcome)
}

pub struct SolveOutput {
    pub outcomes: Vec<(u64, TrainOutcome)>,
    pub report: Report,
}

/// Runs every seed, up to `run.jobs` at a time, then writes the report.
/// Fails with the first training abort after all seeds have finished.
pub fn solve(run: &ResolvedRun) -> Result<SolveOutput> {
    create_dir(&run.out)?;
    write_file(&run.out.join(CONFIG_FILE), &run.echo_toml()?)?;
    let reference = load_reference(&run.problem, run.reference.as_deref())?;

    let queue = Mutex::new(run.seeds.iter().copied());
    let results = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..run.jobs.min(run.seeds.len()) {
            s.spawn(|| loop {
                let next = queue.lock().unwrap_or_else(|e| e.into_inner()).next();
                let Some(seed) = next else { break };
                let r = solve_seed(run, seed, reference.as_ref());
                results.lock().unwrap_or_else(|e| e.into_inner()).push((seed, r));
            });
        }
    });
    let mut results = results.into_inner().unwrap_or_else(|e| e.into_inner());
    results.sort_by_key(|(seed, _)| run.seeds.iter().position(|s| s == seed));

    let mut outcomes = Vec::new();
    let mut first_error = None;
    for (seed, r) in results {
        match r {
            Ok(o) => outcomes.push((seed, o)),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let summary = RunSummary {
        label: run.problem.name.clone(),
        mode: run.mode,
        seeds: outcomes.iter().map(|(_, o)| o.records.clone()).collect(),
    };
    let rep = report(&[summary], ACCURACY_THRESHOLD);
    write_file(&run.out.join(REPORT_TEXT), &rep.to_text())?;
    write_file(&run.out.join(REPORT_CSV), &rep.to_csv())?;
    if let Some(e) = first_error {
        return Err(e);
    }
    if let Some(e) = outcomes.iter().find_map(|(_, o)| o.aborted.as_ref()) {
        return Err(match e {
            Error::TrainingAborted { epoch, reason } => Error::TrainingAborted {
                epoch: *epoch,
                reason: reason.clone(),
            },
            other => Error::Numeric(other.to_string()),
        });
    }
    Ok(SolveOutput { outcomes, report: rep })
}

/// The problem a checkpoint was trained on: an explicit configuration, the
/// echo written next to the seed directory, or the named default.
pub fn checkpoint_problem(checkpoint: &Path, meta: &CheckpointMeta, config: Option<&Path>) -> Result<(ProblemConfig, Mode)> {
    let echo = checkpoint.parent().and_then(Path::parent).map(|d| d.join(CONFIG_FILE));
    let cfg = match (config, echo) {
        (Some(c), _) => Some(RunConfig::load(c)?),
        (None, Some(e)) if e.is_file() => Some(RunConfig::load(&e)?),
        _ => None,
    };
    let mode: Mode = meta.mode.parse()?;
    match cfg {
        Some(mut c) => {
            c.mode = Some(mode);
            Ok((c.resolve()?.problem, mode))
        }
        None => Ok((crate::problems::problem_by_name(&meta.problem)?, mode)),
    }
}

/// Metrics of a saved checkpoint against a reference file or the oracle.
pub fn evaluate(checkpoint: &Path, reference: Option<&Path>, config: Option<&Path>) -> Result<BTreeMap<Metric, f64>> {
    let ck = load_checkpoint(checkpoint)?;
    let (problem, _) = checkpoint_problem(checkpoint, &ck.meta, config)?;
    let r = load_reference(&problem, reference)?
        .ok_or_else(|| Error::Validation(format!("no reference available for the {} problem", problem.name)))?;
    evaluate_model(&ck.model, &problem, Some(&r))
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}

/// Records of one seed directory with wall-clock times restored.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut records: Vec<RunRecord> = read_lines(&dir.join(METRICS_FILE))?;
    let timing_path = dir.join(TIMING_FILE);
    if timing_path.is_file() {
        let timing: Vec<TimingRecord> = read_lines(&timing_path)?;
        let by_epoch: BTreeMap<u64, f64> = timing.iter().map(|t| (t.epoch, t.elapsed_s)).collect();
        for r in &mut records {
            if let Some(t) = by_epoch.get(&r.epoch) {
                r.elapsed_s = *t;
            }
        }
    }
    Ok(records)
}

/// Summary of a solve output directory.
pub fn load_run(out: &Path) -> Result<RunSummary> {
    let cfg = RunConfig::load(&out.join(CONFIG_FILE))?;
    let label = match &cfg.problem {
        None => crate::problems::BEAM.to_string(),
        Some(ProblemSource::Named(n)) => n.clone(),
        Some(ProblemSource::Inline(p)) => p.name.clone(),
    };
    let mut dirs: Vec<(u64, PathBuf)> = fs::read_dir(out)
        .map_err(|e| Error::io(format!("listing {}", out.display()), e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            let seed = name.strip_prefix("seed-")?.parse().ok()?;
            Some((seed, e.path()))
        })
        .filter(|(_, p)| p.join(METRICS_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Validation(format!("no seed records under {}", out.display())));
    }
    Ok(RunSummary {
        label,
        mode: cfg.mode.unwrap_or(Mode::SpinnDem),
        seeds: dirs.iter().map(|(_, d)| load_records(d)).collect::<Result<_>>()?,
    })
}

/// Aggregate report over several solve output directories.
pub fn report_runs(outs: &[PathBuf], threshold: f64) -> Result<Report> {
    let runs = outs.iter().map(|o| load_run(o)).collect::<Result<Vec<_>>>()?;
    Ok(report(&runs, threshold))
}
