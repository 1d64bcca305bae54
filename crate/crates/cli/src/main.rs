//! `treegraft` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use treegraft::dataset::{
    parse_csv, read_dataset, read_names, read_records, Dataset, DatasetError, Format, Schema,
};
use treegraft::experiment::{
    records_from_csv, records_to_csv, render_tables, run_experiment, summarize, ExperimentConfig,
    ExperimentError, TableFormat, TrialRecord,
};
use treegraft::graft::{post_process, GraftError};
use treegraft::induce::{train, InduceConfig, InduceError};
use treegraft::tree::{Tree, TreeError};

#[derive(Parser)]
#[command(name = "treegraft", version, about = "Decision tree induction with training-equivalent grafting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a tree and write the unpruned and pruned versions.
    Train(TrainArgs),
    /// Graft a tree against its training data.
    Graft(GraftArgs),
    /// Predict a class for every row of an input file.
    Classify(ClassifyArgs),
    /// Run repeated holdout trials and write records and comparison tables.
    Experiment(ExperimentArgs),
    /// Render comparison tables from one or more record logs.
    Report(ReportArgs),
}

/// Training data: a `.names` schema plus rows in C4.5 or CSV form.
#[derive(Args)]
struct DataArgs {
    /// Schema file in C4.5 `.names` format.
    #[arg(long)]
    names: PathBuf,
    /// Rows in C4.5 `.data` format (a `.csv` extension switches to CSV).
    #[arg(long, required_unless_present = "csv", conflicts_with = "csv")]
    data: Option<PathBuf>,
    /// Rows in CSV form with a header naming the attributes.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct InduceArgs {
    /// Minimum weight on at least two branches of a test.
    #[arg(long, default_value_t = 2.0)]
    min_cases: f64,
    /// Pruning confidence level.
    #[arg(long, default_value_t = 0.25)]
    cf: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    induce: InduceArgs,
    #[arg(long)]
    out_unpruned: PathBuf,
    #[arg(long)]
    out_pruned: PathBuf,
}

#[derive(Args)]
struct GraftArgs {
    /// Tree text produced by `train` or `graft`.
    #[arg(long)]
    tree: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Destination for the grafted tree.
    #[arg(long)]
    out: PathBuf,
    /// Also write the per-leaf report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    names: PathBuf,
    /// Rows to classify; the class column may be absent or `?`.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    induce: InduceArgs,
    /// Dataset name used in records and tables (defaults to the data file stem).
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Fraction of examples used for training in each trial.
    #[arg(long, default_value_t = 0.8)]
    fraction: f64,
    /// Seed of the first trial; trial i uses seed + i.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Destination for the per-trial CSV log.
    #[arg(long)]
    records: PathBuf,
    /// Destination for the comparison tables.
    #[arg(long)]
    tables: PathBuf,
    /// Table format: text or csv.
    #[arg(long, default_value = "text")]
    format: TableFormat,
}

#[derive(Args)]
struct ReportArgs {
    /// Record logs written by `experiment`.
    #[arg(long, required = true, num_args = 1..)]
    records: Vec<PathBuf>,
    /// Write the tables here instead of standard output.
    #[arg(long)]
    tables: Option<PathBuf>,
    /// Table format: text or csv.
    #[arg(long, default_value = "text")]
    format: TableFormat,
}

/// A failed command and its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn data(message: impl ToString) -> Self {
        Failure { code: 2, message: message.to_string() }
    }

    fn invariant(message: impl ToString) -> Self {
        Failure { code: 3, message: message.to_string() }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::data(e)
    }
}

impl From<InduceError> for Failure {
    fn from(e: InduceError) -> Self {
        Failure::data(e)
    }
}

impl From<TreeError> for Failure {
    fn from(e: TreeError) -> Self {
        Failure::data(e)
    }
}

impl From<GraftError> for Failure {
    fn from(e: GraftError) -> Self {
        match e {
            GraftError::EquivalenceViolation { .. } => Failure::invariant(e),
            _ => Failure::data(e),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_invariant_violation() {
            Failure::invariant(e)
        } else {
            Failure::data(e)
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn load(args: &DataArgs) -> Result<Dataset> {
    let schema = read_names(&args.names)?;
    match (&args.data, &args.csv) {
        (_, Some(path)) => {
            let text = read_text(path)?;
            let parsed = parse_csv(&text, &schema).map_err(|e| DatasetError::File {
                path: path.display().to_string(),
                source: Box::new(e),
            })?;
            Ok(parsed.with_provenance(path.display().to_string(), Format::Csv))
        }
        (Some(path), None) => Ok(read_dataset(path, &schema)?),
        (None, None) => unreachable!("clap requires one row source"),
    }
}

fn rows_path(args: &DataArgs) -> &Path {
    args.csv.as_deref().or(args.data.as_deref()).expect("clap requires one row source")
}

fn induce_config(args: &InduceArgs) -> InduceConfig {
    InduceConfig { min_cases: args.min_cases, prune_confidence: args.cf }
}

fn read_tree(path: &Path, schema: Arc<Schema>) -> Result<Tree> {
    let text = read_text(path)?;
    Tree::from_text(&text, schema).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let data = load(&args.data)?;
    let (unpruned, pruned) = train(&data, &induce_config(&args.induce))?;
    write_text(&args.out_unpruned, &unpruned.to_text())?;
    write_text(&args.out_pruned, &pruned.to_text())?;
    println!("unpruned: {} nodes", unpruned.node_count());
    println!("pruned: {} nodes", pruned.node_count());
    Ok(())
}

fn run_graft(args: &GraftArgs) -> Result<()> {
    let data = load(&args.data)?;
    let tree = read_tree(&args.tree, data.shared_schema())?;
    let (grafted, report) = post_process(&tree, &data)?;
    let rendered = report.render(&tree);
    write_text(&args.out, &grafted.to_text())?;
    if let Some(path) = &args.report {
        write_text(path, &rendered)?;
    }
    print!("{rendered}");
    println!("nodes: {} -> {}", tree.node_count(), grafted.node_count());
    Ok(())
}

fn run_classify(args: &ClassifyArgs) -> Result<()> {
    let schema = Arc::new(read_names(&args.names)?);
    let tree = read_tree(&args.tree, schema.clone())?;
    let records = read_records(&args.input, &schema)?;
    let (mut labeled, mut correct) = (0usize, 0usize);
    for record in &records {
        let predicted = tree.classify(&record.values)?;
        println!("{}", schema.class_name(predicted));
        if let Some(label) = record.label {
            labeled += 1;
            correct += usize::from(label == predicted);
        }
    }
    if labeled > 0 {
        let pct = 100.0 * correct as f64 / labeled as f64;
        println!("accuracy: {pct:.2}% ({correct}/{labeled})");
    }
    Ok(())
}

fn run_experiment_command(args: &ExperimentArgs) -> Result<()> {
    let data = load(&args.data)?;
    let name = match &args.name {
        Some(name) => name.clone(),
        None => rows_path(&args.data).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    let config = ExperimentConfig {
        trials: args.trials,
        train_fraction: args.fraction,
        base_seed: args.seed,
        induce: induce_config(&args.induce),
    };
    let records = run_experiment(&name, &data, &config)?;
    write_text(&args.records, &records_to_csv(&records))?;
    let tables = render_tables(&summarize(&records)?, args.format);
    write_text(&args.tables, &tables)?;
    println!("{name}: {} trials written to {}", records.len(), args.records.display());
    Ok(())
}

fn run_report(args: &ReportArgs) -> Result<()> {
    let mut records: Vec<TrialRecord> = Vec::new();
    for path in &args.records {
        let text = read_text(path)?;
        let parsed = records_from_csv(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        records.extend(parsed);
    }
    let tables = render_tables(&summarize(&records)?, args.format);
    match &args.tables {
        Some(path) => write_text(path, &tables),
        None => {
            print!("{tables}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Train(args) => run_train(args),
        Command::Graft(args) => run_graft(args),
        Command::Classify(args) => run_classify(args),
        Command::Experiment(args) => run_experiment_command(args),
        Command::Report(args) => run_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
