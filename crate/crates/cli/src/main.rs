//! `whatif`: batch access to the what-if engine and the HTTP server.

mod grammar;
mod render;

use std::fs;
use std::io::{self, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use whatif_core::api::{to_json, Analysis, ComparisonResult, DatasetSummary, SyntheticSummary};
use whatif_core::goalseek::{optimize_goal_with_limits, GoalSpec, RunLimits, DEFAULT_BUDGET, DEFAULT_N_INIT};
use whatif_core::importance::{render_table, DEFAULT_SHAPLEY_PERMUTATIONS};
use whatif_core::model::{ForestHyper, LinearHyper};
use whatif_core::sensitivity::{comparison_sweep, row_sensitivity, PerturbationMode, PerturbationSpec, SweepSpec};
use whatif_core::synth::generate_synthetic;
use whatif_core::{
    make_frame, parse_csv, run_sensitivity, train, Dataset, Error, ErrorClass, Hyperparameters, Objective,
    TrainedModel, UseCase,
};
use whatif_server::{ServerConfig, DEFAULT_ADDR, DEFAULT_BUDGET_CAP};

#[derive(Parser)]
#[command(name = "whatif", version, about = "What-if analysis over tabular KPI data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic use-case dataset (CSV plus ground-truth sidecar).
    Synth(SynthArgs),
    /// Print the inferred schema of a CSV file.
    Schema(SchemaArgs),
    /// Train a model for a KPI and write it as JSON.
    Train(TrainArgs),
    /// Driver importance with Shapley, Pearson and Spearman verification.
    Importance(ImportanceArgs),
    /// KPI before and after a perturbation.
    Sensitivity(SensitivityArgs),
    /// KPI across a range of perturbations, one curve per driver.
    Sweep(SweepArgs),
    /// Search for driver changes that reach a KPI goal.
    Goal(GoalArgs),
    /// Run the HTTP server.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_parser = parse_use_case)]
    use_case: UseCase,
    #[arg(long, default_value_t = 1000)]
    rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination, `-` for stdout.
    #[arg(long, default_value = "-")]
    out: String,
    /// Ground-truth JSON; defaults to `<out>.truth.json` when `--out` is a file.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct SchemaArgs {
    /// CSV file, `-` for stdin.
    #[arg(long)]
    data: String,
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: String,
    #[arg(long)]
    kpi: String,
    /// Comma-separated driver columns; default: every numeric or binary column.
    #[arg(long, value_delimiter = ',')]
    drivers: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model JSON destination, `-` for stdout.
    #[arg(long, default_value = "-")]
    out: String,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    max_features: Option<usize>,
    #[arg(long)]
    no_bootstrap: bool,
    #[arg(long)]
    ridge_lambda: Option<f64>,
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Print a model summary to stdout (requires `--out FILE`).
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct Inputs {
    /// Model JSON from `train`, `-` for stdin.
    #[arg(long)]
    model: String,
    /// The CSV the model was trained on, `-` for stdin.
    #[arg(long)]
    data: String,
    /// Aligned text instead of JSON.
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct ImportanceArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = DEFAULT_SHAPLEY_PERMUTATIONS)]
    shapley_perms: usize,
}

#[derive(Args)]
struct SensitivityArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// `driver:pct|abs:amount`, repeatable.
    #[arg(long)]
    perturb: Vec<String>,
    /// Perturb only this row and report its prediction.
    #[arg(long)]
    row: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_delimiter = ',')]
    drivers: Vec<String>,
    #[arg(long, value_parser = parse_mode)]
    mode: PerturbationMode,
    #[arg(long, allow_hyphen_values = true)]
    lo: f64,
    #[arg(long, allow_hyphen_values = true)]
    hi: f64,
    #[arg(long, default_value_t = 11)]
    steps: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    #[value(alias = "maximize")]
    Max,
    #[value(alias = "minimize")]
    Min,
    Target,
}

#[derive(Args)]
struct GoalArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_enum)]
    objective: ObjectiveArg,
    #[arg(long, allow_hyphen_values = true)]
    target: Option<f64>,
    /// `driver:pct|abs:lo:hi`, repeatable. Unlisted drivers: pct -100..100.
    #[arg(long)]
    constraint: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = DEFAULT_N_INIT)]
    n_init: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop after this many seconds and report the best point so far.
    #[arg(long)]
    timeout: Option<f64>,
    /// Write every evaluation as CSV.
    #[arg(long)]
    trace_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "WHATIF_ADDR", default_value = DEFAULT_ADDR)]
    addr: SocketAddr,
    #[arg(long, env = "WHATIF_SNAPSHOT_DIR")]
    snapshot_dir: Option<PathBuf>,
    #[arg(long, env = "WHATIF_BUDGET_CAP", default_value_t = DEFAULT_BUDGET_CAP)]
    budget_cap: usize,
    /// Goal-seek wall-clock limit in seconds.
    #[arg(long, env = "WHATIF_GOAL_TIMEOUT", default_value_t = 120.0)]
    goal_timeout: f64,
    /// Allowed CORS origin; any origin when unset.
    #[arg(long, env = "WHATIF_CORS_ORIGIN")]
    cors_origin: Option<String>,
    /// Directory of static UI assets served at `/`.
    #[arg(long, env = "WHATIF_STATIC_DIR")]
    static_dir: Option<PathBuf>,
}

fn parse_use_case(s: &str) -> Result<UseCase, String> {
    UseCase::from_str(s).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<PerturbationMode, String> {
    PerturbationMode::from_str(s).map_err(|e| e.to_string())
}

enum Failure {
    Engine(Error),
    Input(String),
    Output(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

type Outcome = Result<(), Failure>;

fn read_input(path: &str) -> Result<Vec<u8>, Failure> {
    if path == "-" {
        let mut buf = Vec::new();
        io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| Failure::Input(format!("reading stdin: {e}")))?;
        Ok(buf)
    } else {
        fs::read(path).map_err(|e| Failure::Input(format!("reading {path}: {e}")))
    }
}

fn write_output(path: &str, bytes: &[u8]) -> Outcome {
    if path == "-" {
        let mut out = io::stdout().lock();
        out.write_all(bytes).and_then(|_| out.flush())
    } else {
        fs::write(path, bytes)
    }
    .map_err(|e| Failure::Output(format!("writing {path}: {e}")))
}

fn emit<T: Serialize>(value: &T, table: bool, render: impl Fn(&T) -> String) -> Outcome {
    let text = if table { render(value) } else { to_json(value)? + "\n" };
    write_output("-", text.as_bytes())
}

fn load_dataset(path: &str) -> Result<Dataset, Failure> {
    Ok(parse_csv(&read_input(path)?)?)
}

fn load(inputs: &Inputs) -> Result<(TrainedModel, Dataset), Failure> {
    if inputs.model == "-" && inputs.data == "-" {
        return Err(Failure::Input("--model and --data cannot both read stdin".into()));
    }
    let text = read_input(&inputs.model)?;
    let text = String::from_utf8(text).map_err(|_| Failure::Input("model file is not UTF-8".into()))?;
    let model = TrainedModel::from_json(&text)?;
    let dataset = load_dataset(&inputs.data)?;
    Ok((model, dataset))
}

/// Model plus the driver rows of the dataset it was trained on.
fn bound(inputs: &Inputs) -> Result<(TrainedModel, Vec<Vec<f64>>), Failure> {
    let (model, dataset) = load(inputs)?;
    if model.frame.dataset_ref != dataset.id() {
        return Err(Error::FrameMismatch(format!(
            "model was trained on dataset {}, got {}",
            model.frame.dataset_ref,
            dataset.id()
        ))
        .into());
    }
    let rows = model.frame.driver_rows(&dataset)?;
    Ok((model, rows))
}

fn synth(a: SynthArgs) -> Outcome {
    let s = generate_synthetic(a.use_case, a.rows, a.seed)?;
    write_output(&a.out, &s.csv)?;
    let truth_path = match (&a.truth, a.out.as_str()) {
        (Some(p), _) => Some(p.clone()),
        (None, "-") => None,
        (None, out) => Some(sidecar(Path::new(out))),
    };
    if let Some(p) = truth_path {
        let text = to_json(&s.truth)? + "\n";
        fs::write(&p, text).map_err(|e| Failure::Output(format!("writing {}: {e}", p.display())))?;
    }
    if a.out != "-" {
        let summary = SyntheticSummary {
            dataset: DatasetSummary::from(&s.dataset),
            ground_truth: s.truth,
        };
        write_output("-", (to_json(&summary)? + "\n").as_bytes())?;
    }
    Ok(())
}

fn sidecar(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.truth.json"))
}

fn schema(a: SchemaArgs) -> Outcome {
    let ds = load_dataset(&a.data)?;
    emit(&DatasetSummary::from(&ds), a.table, render::dataset)
}

fn hyper_of(a: &TrainArgs) -> Hyperparameters {
    let d = Hyperparameters::default();
    Hyperparameters {
        forest: ForestHyper {
            n_trees: a.trees.unwrap_or(d.forest.n_trees),
            max_depth: a.max_depth.unwrap_or(d.forest.max_depth),
            min_leaf: a.min_leaf.unwrap_or(d.forest.min_leaf),
            max_features: a.max_features.or(d.forest.max_features),
            bootstrap: !a.no_bootstrap,
        },
        linear: LinearHyper {
            ridge_lambda: a.ridge_lambda.unwrap_or(d.linear.ridge_lambda),
        },
        cv_folds: a.cv_folds.unwrap_or(d.cv_folds),
    }
}

fn train_cmd(a: TrainArgs) -> Outcome {
    if a.table && a.out == "-" {
        return Err(Failure::Input("--table needs --out FILE for the model JSON".into()));
    }
    let ds = load_dataset(&a.data)?;
    let frame = make_frame(&ds, &a.kpi, a.drivers.as_deref())?;
    let model = train(&ds, &frame, &hyper_of(&a), a.seed)?;
    write_output(&a.out, (to_json(&model)? + "\n").as_bytes())?;
    if a.table {
        write_output("-", render::model(&model).as_bytes())?;
    }
    Ok(())
}

fn importance(a: ImportanceArgs) -> Outcome {
    let (model, dataset) = load(&a.inputs)?;
    let an = Analysis::from_model(&dataset, model, a.shapley_perms)?;
    emit(&an.importance, a.inputs.table, render_table)
}

fn spec_of(items: &[String]) -> Result<PerturbationSpec, Failure> {
    Ok(PerturbationSpec {
        items: items
            .iter()
            .map(|s| grammar::perturbation(s))
            .collect::<Result<_, _>>()?,
    })
}

fn sensitivity(a: SensitivityArgs) -> Outcome {
    let spec = spec_of(&a.perturb)?;
    let (model, rows) = bound(&a.inputs)?;
    match a.row {
        Some(idx) => {
            let r = row_sensitivity(&model, &rows, &model.frame, idx, &spec)?;
            emit(&r, a.inputs.table, render::row)
        }
        None => {
            let r = run_sensitivity(&model, &rows, &model.frame, &spec)?;
            emit(&r, a.inputs.table, render::sensitivity)
        }
    }
}

fn sweep(a: SweepArgs) -> Outcome {
    let (model, rows) = bound(&a.inputs)?;
    let spec = SweepSpec {
        drivers: a.drivers,
        mode: a.mode,
        lo: a.lo,
        hi: a.hi,
        steps: a.steps,
    };
    let result = ComparisonResult {
        baseline_kpi: model.kpi_value(&rows)?,
        curves: comparison_sweep(&model, &rows, &model.frame, &spec)?,
    };
    emit(&result, a.inputs.table, render::comparison)
}

fn goal(a: GoalArgs) -> Outcome {
    let constraints = a
        .constraint
        .iter()
        .map(|s| grammar::constraint(s))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = GoalSpec {
        objective: match a.objective {
            ObjectiveArg::Max => Objective::Maximize,
            ObjectiveArg::Min => Objective::Minimize,
            ObjectiveArg::Target => Objective::Target,
        },
        target_value: a.target,
        constraints,
        budget: a.budget,
        n_init: a.n_init,
        seed: a.seed,
    };
    let deadline = match a.timeout {
        Some(t) if t.is_finite() && t >= 0.0 => Some(std::time::Instant::now() + Duration::from_secs_f64(t)),
        Some(t) => return Err(Failure::Input(format!("invalid --timeout {t}"))),
        None => None,
    };
    let (model, rows) = bound(&a.inputs)?;
    let limits = RunLimits {
        deadline,
        max_budget: None,
    };
    let r = optimize_goal_with_limits(&model, &rows, &model.frame, &spec, &limits)?;
    if let Some(p) = &a.trace_csv {
        fs::write(p, r.trace_csv()).map_err(|e| Failure::Output(format!("writing {}: {e}", p.display())))?;
    }
    emit(&r, a.inputs.table, render::goal)
}

fn serve(a: ServeArgs) -> Outcome {
    if !(a.goal_timeout.is_finite() && a.goal_timeout >= 0.0) {
        return Err(Failure::Input(format!("invalid --goal-timeout {}", a.goal_timeout)));
    }
    let config = ServerConfig {
        addr: a.addr,
        snapshot_dir: a.snapshot_dir,
        budget_cap: a.budget_cap,
        goal_timeout: Duration::from_secs_f64(a.goal_timeout),
        cors_origin: a.cors_origin,
        static_dir: a.static_dir,
        ..ServerConfig::default()
    };
    tracing_subscriber::fmt().with_writer(io::stderr).init();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Output(e.to_string()))?;
    runtime
        .block_on(whatif_server::serve(config))
        .map_err(|e| Failure::Output(format!("server: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Schema(a) => schema(a),
        Command::Train(a) => train_cmd(a),
        Command::Importance(a) => importance(a),
        Command::Sensitivity(a) => sensitivity(a),
        Command::Sweep(a) => sweep(a),
        Command::Goal(a) => goal(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Engine(e)) => {
            eprintln!("error[{}]: {e}", e.code());
            match e.class() {
                ErrorClass::Validation | ErrorClass::Conflict => ExitCode::from(2),
                ErrorClass::Runtime => ExitCode::from(3),
            }
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Output(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
