//! Repeated train/evaluate trials comparing trees with and without grafting,
//! and the summary tables built from them.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{make_split, Dataset, DatasetError};
use crate::graft::{check_equivalence, post_process, GraftError};
use crate::induce::{train, InduceConfig, InduceError};
use crate::stats::{mean_sd, paired_t, sign_test, MeanSd, StatsError};
use crate::tree::{Tree, TreeError};

/// Significance level for reporting an increase or decrease.
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("need at least one trial")]
    NoTrials,
    #[error("dataset `{name}` is too small to split: {train} training and {eval} evaluation examples")]
    TooSmall {
        name: String,
        train: usize,
        eval: usize,
    },
    #[error("dataset `{name}` has only {trials} trial(s); at least 2 are needed")]
    TooFewTrials { name: String, trials: usize },
    #[error("trial {trial} of `{name}`: {source}")]
    Trial {
        name: String,
        trial: usize,
        source: Box<ExperimentError>,
    },
    #[error("unknown table format `{0}` (expected text or csv)")]
    UnknownFormat(String),
    #[error("record log line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Induce(#[from] InduceError),
    #[error(transparent)]
    Graft(#[from] GraftError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl ExperimentError {
    /// Whether this error reports a broken internal invariant rather than bad
    /// input.
    pub fn is_invariant_violation(&self) -> bool {
        match self {
            ExperimentError::Graft(GraftError::EquivalenceViolation { .. }) => true,
            ExperimentError::Trial { source, .. } => source.is_invariant_violation(),
            _ => false,
        }
    }
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

/// One value per tree variant.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Variants<T> {
    pub unpruned: T,
    pub unpruned_grafted: T,
    pub pruned: T,
    pub pruned_grafted: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub dataset: String,
    pub trial: usize,
    pub seed: u64,
    /// Percentage of evaluation examples classified correctly.
    pub accuracy: Variants<f64>,
    pub nodes: Variants<usize>,
    pub grafts_unpruned: usize,
    pub grafts_pruned: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub trials: usize,
    pub train_fraction: f64,
    pub base_seed: u64,
    pub induce: InduceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            train_fraction: 0.8,
            base_seed: 1,
            induce: InduceConfig::default(),
        }
    }
}

/// Percentage of `eval` that `tree` classifies correctly.
pub fn accuracy(tree: &Tree, eval: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for e in eval.examples() {
        if tree.classify(&e.values)? == e.label {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / eval.len() as f64)
}

/// Runs one trial: split with `seed`, train both trees, graft each, evaluate.
pub fn run_trial(
    name: &str,
    dataset: &Dataset,
    trial: usize,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<TrialRecord> {
    let plan = make_split(dataset, seed, config.train_fraction)?;
    if plan.train.is_empty() || plan.eval.is_empty() {
        return Err(ExperimentError::TooSmall {
            name: name.into(),
            train: plan.train.len(),
            eval: plan.eval.len(),
        });
    }
    let training = dataset.subset(&plan.train);
    let eval = dataset.subset(&plan.eval);
    run_trial_on(name, trial, seed, &training, &eval, &config.induce)
}

/// Trains on `training`, grafts both trees, re-checks that grafting left the
/// training classifications unchanged, and scores all four trees on `eval`.
pub fn run_trial_on(
    name: &str,
    trial: usize,
    seed: u64,
    training: &Dataset,
    eval: &Dataset,
    config: &InduceConfig,
) -> Result<TrialRecord> {
    if eval.is_empty() {
        return Err(ExperimentError::TooSmall {
            name: name.into(),
            train: training.len(),
            eval: 0,
        });
    }
    let (unpruned, pruned) = train(training, config)?;
    let (unpruned_grafted, unpruned_report) = post_process(&unpruned, training)?;
    let (pruned_grafted, pruned_report) = post_process(&pruned, training)?;
    check_equivalence(&unpruned, &unpruned_grafted, training)?;
    check_equivalence(&pruned, &pruned_grafted, training)?;
    Ok(TrialRecord {
        dataset: name.into(),
        trial,
        seed,
        accuracy: Variants {
            unpruned: accuracy(&unpruned, eval)?,
            unpruned_grafted: accuracy(&unpruned_grafted, eval)?,
            pruned: accuracy(&pruned, eval)?,
            pruned_grafted: accuracy(&pruned_grafted, eval)?,
        },
        nodes: Variants {
            unpruned: unpruned.node_count(),
            unpruned_grafted: unpruned_grafted.node_count(),
            pruned: pruned.node_count(),
            pruned_grafted: pruned_grafted.node_count(),
        },
        grafts_unpruned: unpruned_report.grafted(),
        grafts_pruned: pruned_report.grafted(),
    })
}

/// Runs `config.trials` trials in parallel; trial `i` uses seed `base_seed + i`.
/// Records come back in trial order.
pub fn run_experiment(
    name: &str,
    dataset: &Dataset,
    config: &ExperimentConfig,
) -> Result<Vec<TrialRecord>> {
    if config.trials == 0 {
        return Err(ExperimentError::NoTrials);
    }
    (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let seed = config.base_seed.wrapping_add(i as u64);
            run_trial(name, dataset, i, seed, config).map_err(|e| ExperimentError::Trial {
                name: name.into(),
                trial: i,
                source: Box::new(e),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Significance {
    Increase,
    Decrease,
    None,
}

/// Baseline against grafted for one measure on one dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    pub baseline: MeanSd,
    pub grafted: MeanSd,
    /// Paired t on baseline minus grafted.
    pub t: f64,
    pub p: f64,
    /// Direction of a significant change in the grafted variant.
    pub significance: Significance,
}

fn compare(baseline: &[f64], grafted: &[f64]) -> Result<Comparison> {
    let b = mean_sd(baseline)?;
    let g = mean_sd(grafted)?;
    let test = paired_t(baseline, grafted)?;
    let significance = if test.p_value > SIGNIFICANCE || g.mean == b.mean {
        Significance::None
    } else if g.mean > b.mean {
        Significance::Increase
    } else {
        Significance::Decrease
    };
    Ok(Comparison {
        baseline: b,
        grafted: g,
        t: test.statistic,
        p: test.p_value,
        significance,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSummary {
    pub name: String,
    pub trials: usize,
    pub accuracy_unpruned: Comparison,
    pub accuracy_pruned: Comparison,
    pub nodes_unpruned: Comparison,
    pub nodes_pruned: Comparison,
}

/// Counts of significant accuracy changes and the one-tailed sign test on them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignSummary {
    pub increases: usize,
    pub decreases: usize,
    pub unchanged: usize,
    /// `None` when no comparison was significant.
    pub p_value: Option<f64>,
}

impl SignSummary {
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = Significance>) -> Self {
        let (mut increases, mut decreases, mut unchanged) = (0, 0, 0);
        for o in outcomes {
            match o {
                Significance::Increase => increases += 1,
                Significance::Decrease => decreases += 1,
                Significance::None => unchanged += 1,
            }
        }
        Self {
            increases,
            decreases,
            unchanged,
            p_value: sign_test(increases as u64, decreases as u64).ok(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    /// Sorted by dataset name.
    pub datasets: Vec<DatasetSummary>,
    pub sign: SignSummary,
}

/// Aggregates trial records per dataset. Records are grouped by dataset name
/// and ordered by trial before pairing.
pub fn summarize(records: &[TrialRecord]) -> Result<ComparisonReport> {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.dataset.cmp(&b.dataset).then(a.trial.cmp(&b.trial)));
    let mut datasets = Vec::new();
    for group in sorted.chunk_by(|a, b| a.dataset == b.dataset) {
        let name = group[0].dataset.clone();
        if group.len() < 2 {
            return Err(ExperimentError::TooFewTrials {
                name,
                trials: group.len(),
            });
        }
        let acc = |f: fn(&Variants<f64>) -> f64| -> Vec<f64> {
            group.iter().map(|r| f(&r.accuracy)).collect()
        };
        let nodes = |f: fn(&Variants<usize>) -> usize| -> Vec<f64> {
            group.iter().map(|r| f(&r.nodes) as f64).collect()
        };
        datasets.push(DatasetSummary {
            name,
            trials: group.len(),
            accuracy_unpruned: compare(&acc(|v| v.unpruned), &acc(|v| v.unpruned_grafted))?,
            accuracy_pruned: compare(&acc(|v| v.pruned), &acc(|v| v.pruned_grafted))?,
            nodes_unpruned: compare(&nodes(|v| v.unpruned), &nodes(|v| v.unpruned_grafted))?,
            nodes_pruned: compare(&nodes(|v| v.pruned), &nodes(|v| v.pruned_grafted))?,
        });
    }
    let sign = SignSummary::from_outcomes(
        datasets
            .iter()
            .flat_map(|d| [d.accuracy_unpruned.significance, d.accuracy_pruned.significance]),
    );
    Ok(ComparisonReport { datasets, sign })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
}

impl FromStr for TableFormat {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            _ => Err(ExperimentError::UnknownFormat(s.into())),
        }
    }
}

/// The four summary tables, in order: accuracy and node count for unpruned
/// trees, then for pruned trees.
pub const TABLES: [(&str, &str, &str); 4] = [
    ("accuracy-unpruned", "Accuracy (%), unpruned", "grafted"),
    ("accuracy-pruned", "Accuracy (%), pruned", "pruned+graft"),
    ("nodes-unpruned", "Node count, unpruned", "grafted"),
    ("nodes-pruned", "Node count, pruned", "pruned+graft"),
];

fn table_rows(report: &ComparisonReport, table: usize) -> impl Iterator<Item = (&str, &Comparison)> {
    report.datasets.iter().map(move |d| {
        let c = match table {
            0 => &d.accuracy_unpruned,
            1 => &d.accuracy_pruned,
            2 => &d.nodes_unpruned,
            _ => &d.nodes_pruned,
        };
        (d.name.as_str(), c)
    })
}

pub const CSV_HEADER: &str = "table,dataset,baseline_mean,baseline_sd,grafted_mean,grafted_sd,t,p";

/// Renders the summary tables. Text rounds for reading; CSV keeps full
/// precision.
pub fn render_tables(report: &ComparisonReport, format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for (i, (id, _, _)) in TABLES.iter().enumerate() {
                for (name, c) in table_rows(report, i) {
                    let _ = writeln!(
                        out,
                        "{id},{},{},{},{},{},{},{}",
                        csv_field(name),
                        c.baseline.mean,
                        c.baseline.sd,
                        c.grafted.mean,
                        c.grafted.sd,
                        c.t,
                        c.p
                    );
                }
            }
        }
        TableFormat::Text => {
            let width = report
                .datasets
                .iter()
                .map(|d| d.name.len())
                .max()
                .unwrap_or(0)
                .max(7);
            for (i, (_, title, variant)) in TABLES.iter().enumerate() {
                let baseline = if i % 2 == 0 { "C4.5" } else { "pruned" };
                let _ = writeln!(out, "{title}");
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>27}  {:>27}  {:>7}  {:>6}",
                    "dataset",
                    format!("{baseline} mean (sd)"),
                    format!("{variant} mean (sd)"),
                    "t",
                    "p"
                );
                for (name, c) in table_rows(report, i) {
                    let mark = match c.significance {
                        Significance::Increase => " +",
                        Significance::Decrease => " -",
                        Significance::None => "",
                    };
                    let _ = writeln!(
                        out,
                        "{name:<width$}  {:>27}  {:>27}  {:>7.2}  {:>6.3}{mark}",
                        format!("{:.1} ({:.1})", c.baseline.mean, c.baseline.sd),
                        format!("{:.1} ({:.1})", c.grafted.mean, c.grafted.sd),
                        c.t,
                        c.p
                    );
                }
                out.push('\n');
            }
            let s = &report.sign;
            let p = s
                .p_value
                .map_or_else(|| "n/a".to_string(), |p| format!("{p:.3}"));
            let _ = writeln!(
                out,
                "significant accuracy increases {} decreases {} unchanged {}; sign test p = {p}",
                s.increases, s.decreases, s.unchanged
            );
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row of the CSV table output.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub table: String,
    pub dataset: String,
    pub baseline_mean: f64,
    pub baseline_sd: f64,
    pub grafted_mean: f64,
    pub grafted_sd: f64,
    pub t: f64,
    pub p: f64,
}

/// Parses CSV produced by [`render_tables`].
pub fn parse_table_csv(text: &str) -> Result<Vec<TableRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ExperimentError::BadRecord {
            line,
            message: e.to_string(),
        })?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ExperimentError::BadRecord {
                    line,
                    message: format!("column {} is not a number", k + 1),
                })
        };
        rows.push(TableRow {
            table: rec.get(0).unwrap_or_default().to_string(),
            dataset: rec.get(1).unwrap_or_default().to_string(),
            baseline_mean: num(2)?,
            baseline_sd: num(3)?,
            grafted_mean: num(4)?,
            grafted_sd: num(5)?,
            t: num(6)?,
            p: num(7)?,
        });
    }
    Ok(rows)
}

pub const RECORD_HEADER: &str = "dataset,trial,seed,acc_unpruned,acc_unpruned_grafted,acc_pruned,acc_pruned_grafted,nodes_unpruned,nodes_unpruned_grafted,nodes_pruned,nodes_pruned_grafted,grafts_unpruned,grafts_pruned";

/// Writes trial records as CSV, one row per trial.
pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(RECORD_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.dataset),
            r.trial,
            r.seed,
            r.accuracy.unpruned,
            r.accuracy.unpruned_grafted,
            r.accuracy.pruned,
            r.accuracy.pruned_grafted,
            r.nodes.unpruned,
            r.nodes.unpruned_grafted,
            r.nodes.pruned,
            r.nodes.pruned_grafted,
            r.grafts_unpruned,
            r.grafts_pruned
        );
    }
    out
}

/// Parses the CSV written by [`records_to_csv`].
pub fn records_from_csv(text: &str) -> Result<Vec<TrialRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| ExperimentError::BadRecord {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>().join(",") != RECORD_HEADER {
        return Err(ExperimentError::BadRecord {
            line: 1,
            message: "unexpected header".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let bad = |message: String| ExperimentError::BadRecord { line, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        fn field<T: FromStr>(rec: &csv::StringRecord, k: usize) -> Option<T> {
            rec.get(k)?.parse().ok()
        }
        let f = |k: usize| field::<f64>(&rec, k).ok_or_else(|| bad(format!("column {} is not a number", k + 1)));
        let u = |k: usize| field::<usize>(&rec, k).ok_or_else(|| bad(format!("column {} is not a count", k + 1)));
        out.push(TrialRecord {
            dataset: rec.get(0).unwrap_or_default().to_string(),
            trial: u(1)?,
            seed: field::<u64>(&rec, 2).ok_or_else(|| bad("column 3 is not a seed".into()))?,
            accuracy: Variants {
                unpruned: f(3)?,
                unpruned_grafted: f(4)?,
                pruned: f(5)?,
                pruned_grafted: f(6)?,
            },
            nodes: Variants {
                unpruned: u(7)?,
                unpruned_grafted: u(8)?,
                pruned: u(9)?,
                pruned_grafted: u(10)?,
            },
            grafts_unpruned: u(11)?,
            grafts_pruned: u(12)?,
        });
    }
    Ok(out)
}
