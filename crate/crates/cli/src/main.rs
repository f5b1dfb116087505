//! `tempseq` command line: synthetic data generation, training, inference,
//! evaluation and ablations.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tempseq::experiment::{
    ablate, evaluate, generate_datasets, infer_dataset, infer_options, load_split, train, Ablation, EvalOptions,
    ExperimentConfig, Split,
};
use tempseq::formats::{read_jsonl, write_jsonl, AnnotationRecord, PredictionRecord};
use tempseq::model::{load_checkpoint, save_checkpoint};
use tempseq::vocab::TaskId;
use tempseq::{Error, Result};

const OUTPUT_ROOT_VAR: &str = "TEMPSEQ_OUTPUT_ROOT";
const CONFIG_FILE: &str = "config.toml";
const CHECKPOINT_FILE: &str = "checkpoint.tseq";
const TRAIN_LOG_FILE: &str = "train_log.jsonl";

#[derive(Parser)]
#[command(name = "tempseq", version, about = "Temporal detection, segmentation and boundary detection as sequence generation")]
struct Cli {
    /// Root for relative output and dataset paths [env: TEMPSEQ_OUTPUT_ROOT; default: .]
    #[arg(long, global = true)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML experiment config; omitted keys take their defaults
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set epochs=50` or `--set datasets.tas.batch_size=2`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/test splits for the configured datasets
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        /// Tasks to generate (default: every configured dataset)
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<TaskId>,
    },
    /// Train under the configured schedule and write a checkpoint, log and resolved config
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Sliding-window inference over one dataset split
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Config (default: the resolved config next to the checkpoint)
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        task: TaskId,
        #[arg(long, default_value = "test")]
        split: String,
        /// Output JSONL (default: predictions_<task>.jsonl next to the checkpoint)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against ground truth
    Eval {
        #[arg(long)]
        task: TaskId,
        #[arg(long)]
        predictions: PathBuf,
        /// Ground-truth JSONL or dataset manifest
        #[arg(long)]
        ground_truth: PathBuf,
        /// Config supplying the segmentation frame rate
        #[command(flatten)]
        config: ConfigArgs,
        /// Also write the report as JSONL
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an ablation: weight-loss, dense-sparse or balance
    Ablate {
        #[arg(long)]
        kind: Ablation,
        #[command(flatten)]
        config: ConfigArgs,
        /// Output JSONL (default: ablation_<kind>.jsonl in the output directory)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."))
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    ExperimentConfig::load(args.config.as_deref(), &args.overrides)
}

fn parse_split(name: &str) -> Result<Split> {
    match name {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
    }
}

fn gen_data(root: &Path, cfg: &ExperimentConfig, tasks: &[TaskId]) -> Result<()> {
    let tasks = if tasks.is_empty() { cfg.datasets.iter().map(|d| d.task).collect() } else { tasks.to_vec() };
    for dir in generate_datasets(cfg, root, &tasks)? {
        println!("wrote {}", dir.join("manifest.jsonl").display());
    }
    Ok(())
}

fn train_cmd(root: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let data = cfg
        .training_tasks()
        .into_iter()
        .map(|t| load_split(cfg, root, t, Split::Train))
        .collect::<Result<Vec<_>>>()?;
    let out_dir = root.join(&cfg.output_dir);
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join(CONFIG_FILE), cfg.to_toml())?;
    let log_path = out_dir.join(TRAIN_LOG_FILE);
    let mut log = File::create(&log_path)?;
    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    let result = train(cfg, &data, |entry, model| {
        let line = serde_json::to_string(entry).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(log, "{line}")?;
        if cfg.checkpoint_every > 0 && entry.epoch % cfg.checkpoint_every == 0 {
            save_checkpoint(model, &checkpoint)?;
        }
        Ok(())
    })?;
    save_checkpoint(&result.model, &checkpoint)?;
    println!(
        "trained {} epochs, final loss {:.6}, {} parameters; checkpoint {}",
        result.log.len(),
        result.final_loss,
        result.model.parameter_count(),
        checkpoint.display()
    );
    Ok(())
}

fn infer_cmd(
    root: &Path,
    checkpoint: &Path,
    args: &ConfigArgs,
    task: TaskId,
    split: &str,
    out: Option<PathBuf>,
) -> Result<()> {
    let resolved = checkpoint.with_file_name(CONFIG_FILE);
    let args = match (&args.config, resolved.exists()) {
        (None, true) => ConfigArgs { config: Some(resolved), overrides: args.overrides.clone() },
        _ => args.clone(),
    };
    let cfg = load_config(&args)?;
    let model = load_checkpoint(checkpoint)?;
    if model.layout != cfg.layout()? {
        return Err(Error::Config(format!(
            "checkpoint vocabulary {:?} does not match the config's {:?}",
            model.layout,
            cfg.layout()?
        )));
    }
    let data = load_split(&cfg, root, task, parse_split(split)?)?;
    let predictions = infer_dataset(&model, &data, infer_options(&cfg))?;
    let out = out.unwrap_or_else(|| checkpoint.with_file_name(format!("predictions_{task}.jsonl")));
    write_jsonl(&out, &predictions)?;
    println!("wrote {} predictions to {}", predictions.len(), out.display());
    Ok(())
}

fn eval_cmd(
    task: TaskId,
    predictions: &Path,
    ground_truth: &Path,
    args: &ConfigArgs,
    out: Option<PathBuf>,
) -> Result<()> {
    let preds: Vec<PredictionRecord> = read_jsonl(predictions)?;
    let truth: Vec<AnnotationRecord> = read_jsonl(ground_truth)?;
    let options = if task == TaskId::Tas {
        let cfg = load_config(args)?;
        let section = cfg.dataset(TaskId::Tas)?;
        EvalOptions::with_tas_rate(section.clip_frames as f64 / section.window_seconds)
    } else {
        EvalOptions::with_tas_rate(1.0)
    };
    let report = evaluate(task, &preds, &truth, &options)?;
    print!("{}", report.to_table());
    if let Some(out) = out {
        if let Some(parent) = out.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&out, report.to_jsonl())?;
    }
    Ok(())
}

fn ablate_cmd(root: &Path, kind: Ablation, cfg: &ExperimentConfig, out: Option<PathBuf>) -> Result<()> {
    let tasks: Vec<TaskId> = match kind {
        Ablation::WeightLoss | Ablation::DenseSparse => vec![TaskId::Tad],
        Ablation::Balance => cfg.datasets.iter().map(|d| d.task).collect(),
    };
    let mut train_data = Vec::new();
    let mut test_data = Vec::new();
    for &t in &tasks {
        train_data.push(load_split(cfg, root, t, Split::Train)?);
        test_data.push(load_split(cfg, root, t, Split::Test)?);
    }
    let outcome = ablate(kind, cfg, &train_data, &test_data)?;
    for r in &outcome.records {
        println!("{:<14} {:<5} {:<8} {:.4}", r.variant, r.task.name(), r.metric, r.value);
    }
    if let Some(m) = outcome.unit_weight_matches_cross_entropy {
        println!("unit-weight run identical to cross-entropy run: {m}");
    }
    let name = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
    let out = out.unwrap_or_else(|| root.join(&cfg.output_dir).join(format!("ablation_{name}.jsonl")));
    write_jsonl(&out, &outcome.records)?;
    if let Some(m) = outcome.unit_weight_matches_cross_entropy {
        let mut f = OpenOptions::new().append(true).open(&out)?;
        writeln!(f, "{}", serde_json::json!({"ablation": kind, "unit_weight_matches_cross_entropy": m}))?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let root = output_root(cli.output_root);
    match cli.command {
        Command::GenData { config, tasks } => gen_data(&root, &load_config(&config)?, &tasks),
        Command::Train { config } => train_cmd(&root, &load_config(&config)?),
        Command::Infer { checkpoint, config, task, split, out } => {
            infer_cmd(&root, &checkpoint, &config, task, &split, out)
        }
        Command::Eval { task, predictions, ground_truth, config, out } => {
            eval_cmd(task, &predictions, &ground_truth, &config, out)
        }
        Command::Ablate { kind, config, out } => ablate_cmd(&root, kind, &load_config(&config)?, out),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Input(_) => 2,
        Error::Numeric(_) | Error::Decode(_) => 3,
        Error::Io(_) | Error::Format(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
