use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use foldcast::config::{ConfigError, RunConfig};
use foldcast::datagen::{read_dataset, write_dataset, write_manifest, ClassLabel, DatagenError};
use foldcast::eval::EvalError;
use foldcast::experiment::{
    evaluate_target, run_matrix, table_from, train_on, training_dataset, write_target_artifacts,
    ExperimentError,
};
use foldcast::nn::{read_checkpoint, write_checkpoint, write_history, NnError};
use foldcast::preprocess::PipelineKind;
use foldcast::systems::{reference_fold, SystemKind};

/// Fold-bifurcation proximity classification from transient trajectories.
#[derive(Parser)]
#[command(name = "foldcast", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file and FOLD_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Reduced sizes: 50 runs per class, 5 epochs, small test grids.
    #[arg(long, global = true)]
    smoke: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and preprocess the training set.
    Generate {
        #[arg(long)]
        pipeline: Option<PipelineKind>,
    },
    /// Train a network on a dataset file.
    Train { dataset: PathBuf },
    /// Classify a system's test grid with a trained network.
    Evaluate {
        checkpoint: PathBuf,
        #[arg(long)]
        system: SystemKind,
        /// Pipeline the checkpoint was trained with; inferred from a
        /// `model-<pipeline>.fbnn` file name when omitted.
        #[arg(long)]
        pipeline: Option<PipelineKind>,
    },
    /// Train every pipeline and evaluate it on all four systems.
    ReproduceTable,
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn new(code: u8, msg: impl Into<String>) -> Self {
        Self {
            code,
            msg: msg.into(),
        }
    }
}

const USAGE: u8 = 2;
const IO: u8 = 3;
const NUMERIC: u8 = 4;
const PRECONDITION: u8 = 5;

fn datagen_code(e: &DatagenError) -> u8 {
    match e {
        DatagenError::InvalidPlan(_) | DatagenError::OutOfBands { .. } => USAGE,
        _ => IO,
    }
}

fn nn_code(e: &NnError) -> u8 {
    match e {
        NnError::NonFinite { .. } => NUMERIC,
        NnError::InvalidConfig(_) | NnError::Empty => USAGE,
        _ => IO,
    }
}

fn eval_code(e: &EvalError) -> u8 {
    match e {
        EvalError::Io(_) => IO,
        EvalError::Nn(e) => nn_code(e),
        _ => PRECONDITION,
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = match &e {
            ExperimentError::Config(_) => USAGE,
            ExperimentError::Io { .. } => IO,
            ExperimentError::Datagen { source, .. } => datagen_code(source),
            ExperimentError::Nn { source, .. } => nn_code(source),
            ExperimentError::Eval { source, .. } => eval_code(source),
        };
        Failure::new(code, e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(USAGE, e.to_string())
    }
}

fn load_config(c: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &c.config {
        let text = RunConfig::read(path).map_err(|e| Failure::new(USAGE, e.to_string()))?;
        cfg.apply_text(&text)?;
    }
    if c.smoke {
        let s = RunConfig::smoke();
        cfg.n_per_class = s.n_per_class;
        cfg.epochs = s.epochs;
        cfg.grid_points = s.grid_points;
        cfg.grid_ics = s.grid_ics;
        cfg.band_test_per_class = s.band_test_per_class;
    }
    cfg.apply_env()?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::new(IO, format!("cannot create {}: {e}", dir.display())))
}

fn progress(line: &str) {
    eprintln!("{line}");
}

fn generate(cfg: &RunConfig, pipeline: Option<PipelineKind>) -> Result<(), Failure> {
    let pipeline = pipeline.unwrap_or(cfg.pipelines[0]);
    ensure_dir(&cfg.out_dir)?;
    let ds = training_dataset(cfg, pipeline)?;
    let data_path = cfg.out_dir.join(format!("dataset-{}.fbds", pipeline.name()));
    let manifest = cfg.out_dir.join(format!("manifest-{}.csv", pipeline.name()));
    let fold = reference_fold(&cfg.sampling_plan().system)
        .map_err(|e| Failure::new(USAGE, e.to_string()))?;
    write_dataset(&ds, &data_path)
        .and_then(|_| write_manifest(&ds, fold, &manifest))
        .map_err(|e| Failure::new(IO, e.to_string()))?;
    let counts = ds.class_counts();
    println!("wrote {} samples to {}", ds.len(), data_path.display());
    for l in ClassLabel::ALL {
        println!("  {l}: {}", counts[l.index()]);
    }
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn train_cmd(cfg: &RunConfig, dataset: &Path) -> Result<(), Failure> {
    let ds = read_dataset(dataset)
        .map_err(|e| Failure::new(IO, format!("cannot read {}: {e}", dataset.display())))?;
    ensure_dir(&cfg.out_dir)?;
    let (params, history) = train_on(cfg, &ds, &mut progress)?;
    let name = ds.pipeline.kind.name();
    let model = cfg.out_dir.join(format!("model-{name}.fbnn"));
    let hist = cfg.out_dir.join(format!("history-{name}.csv"));
    write_checkpoint(&params, &model)
        .and_then(|_| write_history(&history, &hist))
        .map_err(|e| Failure::new(IO, e.to_string()))?;
    let last = history.last().expect("at least one epoch");
    println!("final validation accuracy: {:.4}", last.val_accuracy);
    println!("checkpoint: {}", model.display());
    println!("history: {}", hist.display());
    Ok(())
}

fn pipeline_from_name(path: &Path) -> Option<PipelineKind> {
    let stem = path.file_stem()?.to_str()?;
    stem.strip_prefix("model-")?.parse().ok()
}

fn evaluate_cmd(
    cfg: &RunConfig,
    checkpoint: &Path,
    system: SystemKind,
    pipeline: Option<PipelineKind>,
) -> Result<(), Failure> {
    let pipeline = pipeline.or_else(|| pipeline_from_name(checkpoint)).ok_or_else(|| {
        Failure::new(
            USAGE,
            "cannot infer the pipeline from the checkpoint name; pass --pipeline",
        )
    })?;
    let params = read_checkpoint(checkpoint)
        .map_err(|e| Failure::new(IO, format!("cannot read {}: {e}", checkpoint.display())))?;
    let ev = evaluate_target(cfg, &params, pipeline, system)?;
    let written = write_target_artifacts(&ev, &cfg.out_dir)?;
    println!(
        "{} on {system}: grid accuracy {:.4}, verdict {}",
        pipeline.label(),
        ev.accuracy,
        ev.verdict
    );
    if let Some(a) = ev.band_accuracy {
        println!("band-sampled accuracy at c1 = {}: {a:.4}", cfg.test_c1);
    }
    for p in written {
        println!("  {}", p.display());
    }
    Ok(())
}

fn reproduce_table(cfg: &RunConfig) -> Result<(), Failure> {
    let start = Instant::now();
    ensure_dir(&cfg.out_dir)?;
    let (models, evals) = run_matrix(cfg, &cfg.out_dir.join("cache"), &mut progress)?;
    for m in &models {
        println!(
            "{}: final validation accuracy {:.4}",
            m.pipeline.label(),
            m.final_val_accuracy()
        );
    }
    let diagrams = cfg.out_dir.join("diagrams");
    for ev in &evals {
        write_target_artifacts(ev, &diagrams)?;
    }
    let table = table_from(&evals)?;
    let write = |name: &str, text: &str| {
        let p = cfg.out_dir.join(name);
        std::fs::write(&p, text).map_err(|e| Failure::new(IO, format!("{}: {e}", p.display())))
    };
    write("table.csv", &table.to_csv())?;
    write("table.txt", &table.to_text())?;
    print!("{}", table.to_text());
    println!("wall clock: {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Generate { pipeline } => generate(&cfg, pipeline),
        Command::Train { dataset } => train_cmd(&cfg, &dataset),
        Command::Evaluate {
            checkpoint,
            system,
            pipeline,
        } => evaluate_cmd(&cfg, &checkpoint, system, pipeline),
        Command::ReproduceTable => reproduce_table(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
