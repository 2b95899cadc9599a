use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spinn_elastic::loss::Mode;
use spinn_elastic::run::{self, selftest, Overrides, ProblemSource, RunConfig};
use spinn_elastic::{Error, Result};

#[derive(Parser)]
#[command(name = "spinn-elastic", version, about = "Separable neural solvers for 3D linear elastostatics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over its seeds and write records, checkpoints, fields and a report.
    Solve(SolveArgs),
    /// Compute relative L2 errors of a saved checkpoint.
    Evaluate(EvaluateArgs),
    /// Aggregate the records of one or more solve output directories.
    Report(ReportArgs),
    /// Run the built-in invariant suites; the exit status is the number of failures.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// TOML run configuration; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// beam or angle
    #[arg(long)]
    problem: Option<String>,
    /// pinn-pde, spinn-pde or spinn-dem
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<u64>,
    /// Comma-separated seeds, e.g. 0,1,2
    #[arg(long)]
    seeds: Option<String>,
    /// Seeds trained concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reference field file (x,y,z,ux,uy,uz[,sxx,syy,szz,sxy,sxz,syz] in SI units).
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long = "lambda-bc")]
    lambda_bc: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long = "decay-rate")]
    decay_rate: Option<f64>,
    #[arg(long = "decay-every")]
    decay_every: Option<u64>,
    /// Points per axis, NxNxN, one entry for all boxes or comma-separated per box.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    rank: Option<usize>,
    /// Comma-separated hidden layer widths.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long = "eval-every")]
    eval_every: Option<u64>,
    /// Stop each seed after this many seconds of training.
    #[arg(long = "time-limit")]
    time_limit: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Reference field file; the analytic oracle is used when omitted.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Run configuration; defaults to the config.toml written by solve.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Solve output directories.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Directory for report.txt and report.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = run::ACCURACY_THRESHOLD)]
    threshold: f64,
}

#[derive(Args)]
struct SelftestArgs {
    /// Relative change to the first Simpson weight per axis (test hook).
    #[arg(long = "perturb-quadrature", hide = true, default_value_t = 0.0)]
    perturb_quadrature: f64,
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid {what} entry {s:?} in {text:?}")))
        })
        .collect()
}

fn parse_grid(text: &str) -> Result<Vec<[usize; 3]>> {
    text.split(',')
        .map(|item| {
            let n: Vec<usize> = item
                .split('x')
                .map(|v| v.trim().parse().ok())
                .collect::<Option<_>>()
                .filter(|n: &Vec<usize>| n.len() == 3)
                .ok_or_else(|| Error::Config(format!("grid entry {item:?} is not NxNxN")))?;
            Ok([n[0], n[1], n[2]])
        })
        .collect()
}

impl SolveArgs {
    fn flags(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            problem: self.problem.clone().map(ProblemSource::Named),
            mode: self.mode.as_deref().map(str::parse::<Mode>).transpose()?,
            epochs: self.epochs,
            seeds: self.seeds.as_deref().map(|s| parse_list(s, "seed")).transpose()?,
            jobs: self.jobs,
            out: self.out.clone(),
            reference: self.reference.clone(),
            eval_every: self.eval_every,
            resample_every: None,
            time_limit_s: self.time_limit,
            adam: None,
            overrides: Overrides {
                lambda_bc: self.lambda_bc,
                lr: self.lr,
                decay_rate: self.decay_rate,
                decay_every: self.decay_every,
                grid: self.grid.as_deref().map(parse_grid).transpose()?,
                rank: self.rank,
                hidden: self.hidden.as_deref().map(|h| parse_list(h, "hidden width")).transpose()?,
            },
        })
    }
}

fn solve(args: &SolveArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.merge(&args.flags()?);
    let resolved = cfg.resolve()?;
    let out = run::solve(&resolved)?;
    print!("{}", out.report.to_text());
    println!("outputs written to {}", resolved.out.display());
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let m = run::evaluate(&args.checkpoint, args.reference.as_deref(), args.config.as_deref())?;
    let line = serde_json::to_string(&m).map_err(|e| Error::Config(e.to_string()))?;
    println!("{line}");
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let r = run::report_runs(&args.runs, args.threshold)?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        for (name, text) in [(run::REPORT_TEXT, r.to_text()), (run::REPORT_CSV, r.to_csv())] {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(format!("writing {}", p.display()), e))?;
        }
    }
    print!("{}", r.to_text());
    Ok(())
}

fn selftest(args: &SelftestArgs) -> ExitCode {
    let faults = selftest::Faults {
        quadrature_weight: args.perturb_quadrature,
    };
    let results = selftest::run_suites(faults);
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{failed} suite(s) failed");
    ExitCode::from(failed as u8)
}

/// One JSON object per failure so callers can parse the reason.
fn fail(e: &Error) -> ExitCode {
    let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    eprintln!("{line}");
    ExitCode::from(match e {
        Error::TrainingAborted { .. } | Error::Numeric(_) | Error::Autodiff(_) => 3,
        Error::Io { .. } => 4,
        _ => 2,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let first = e.to_string();
            let msg = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return fail(&Error::Config(msg.to_string()));
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::Selftest(a) => return selftest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
