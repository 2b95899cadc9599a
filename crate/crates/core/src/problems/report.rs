//! Aggregation of per-seed run records into summary tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::loss::Mode;
use crate::train::{mean_std, time_to_accuracy, Metric, RunRecord};

/// Records of one configuration across seeds.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub label: String,
    pub mode: Mode,
    /// One record series per seed, sorted by epoch.
    pub seeds: Vec<Vec<RunRecord>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
    /// Seeds contributing to the cell.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: Metric,
    /// Final relative L2 across seeds; absent when the reference lacks it.
    pub l2: Option<Cell>,
    /// Time to reach the threshold over the seeds that reached it.
    pub time: Option<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTable {
    pub label: String,
    pub mode: Mode,
    pub seeds: usize,
    pub rows: Vec<MetricRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub threshold: f64,
    pub runs: Vec<RunTable>,
    pub notes: Vec<String>,
}

fn stress_provenance(mode: Mode) -> &'static str {
    if mode.is_energy() {
        "sigma_vm from the displacement network through strain and Hooke's law"
    } else {
        "sigma_vm from the stress network"
    }
}

pub fn report(runs: &[RunSummary], threshold: f64) -> Report {
    let mut notes = Vec::new();
    let tables = runs
        .iter()
        .map(|run| {
            notes.push(format!("{}: {}", run.label, stress_provenance(run.mode)));
            let rows = Metric::ALL
                .iter()
                .map(|&metric| {
                    let finals: Vec<f64> = run
                        .seeds
                        .iter()
                        .filter_map(|r| r.last().and_then(|r| r.l2.get(&metric).copied()))
                        .collect();
                    let times: Vec<f64> = run
                        .seeds
                        .iter()
                        .filter_map(|r| time_to_accuracy(r, metric, threshold))
                        .collect();
                    let cell = |v: &[f64]| {
                        mean_std(v).map(|(mean, std)| Cell {
                            mean,
                            std,
                            count: v.len(),
                        })
                    };
                    MetricRow {
                        metric,
                        l2: cell(&finals),
                        time: cell(&times),
                    }
                })
                .collect();
            RunTable {
                label: run.label.clone(),
                mode: run.mode,
                seeds: run.seeds.len(),
                rows,
            }
        })
        .collect();
    Report {
        threshold,
        runs: tables,
        notes,
    }
}

impl MetricRow {
    pub fn l2_text(&self) -> String {
        match &self.l2 {
            Some(c) => format!("{:.4} ± {:.4}", c.mean, c.std),
            None => "n/a".into(),
        }
    }

    pub fn time_text(&self, seeds: usize) -> String {
        match &self.time {
            None => "---".into(),
            Some(c) if c.count == seeds => format!("{:.1} ± {:.1}", c.mean, c.std),
            Some(c) => format!("{:.1} ± {:.1} ({}/{} reached)", c.mean, c.std, c.count, seeds),
        }
    }
}

impl Report {
    /// Human-readable tables.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let pct = self.threshold * 100.0;
        for t in &self.runs {
            let _ = writeln!(s, "{} [{}], {} seed(s)", t.label, t.mode, t.seeds);
            let _ = writeln!(s, "  {:<9} {:<20} T{pct}% (s)", "quantity", "relative L2");
            for r in &t.rows {
                let _ = writeln!(s, "  {:<9} {:<20} {}", r.metric.name(), r.l2_text(), r.time_text(t.seeds));
            }
            s.push('\n');
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }

    /// Comma-separated values, one row per run and quantity.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("label,mode,quantity,l2_mean,l2_std,seeds,t_mean,t_std,t_reached\n");
        for t in &self.runs {
            for r in &t.rows {
                let (lm, ls) = r
                    .l2
                    .as_ref()
                    .map_or((String::new(), String::new()), |c| (format!("{:.4}", c.mean), format!("{:.4}", c.std)));
                let (tm, ts, k) = r.time.as_ref().map_or(("---".into(), "---".into(), 0), |c| {
                    (format!("{:.3}", c.mean), format!("{:.3}", c.std), c.count)
                });
                let _ = writeln!(s, "{},{},{},{lm},{ls},{},{tm},{ts},{k}", t.label, t.mode, r.metric, t.seeds);
            }
        }
        s
    }
}
