use super::manifest::ManifestBuilder;
use super::CliError;
use crate::dataset::{
    encode_record, filter_source_split, load_dataset, load_encoded, save_dataset,
    generate_synthetic_records, ChannelSchema, SyntheticSpec,
};
use crate::eval::{
    auroc, fit_reference_probes, run_label_fraction_sweep, sparsity_report, weighted_auroc,
    write_fraction_plot_csv, write_heatmap_csv, write_sparsity_summary_csv, write_sweep_csv,
    write_table_csv, Family, ScoredSet, SweepCell, SweepOptions, SweepResult, TargetTaskData,
};
use crate::pretrain::{hidden_size_sweep, write_history_csv, PretrainedModel, TrainConfig};
use crate::rnn::ModelMetadata;
use crate::transfer::{
    extract_features, lambda_sweep, lr_predict, read_features_csv, write_features_csv,
    LassoOptions, LayerSelection, LrProbe,
};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;
use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "seqtl",
    version,
    about = "GRU pre-training and frozen-feature linear probes for multivariate clinical-style time series"
)]
pub struct Cli {
    /// Cap the worker-thread pool used for parallel training and sweep cells.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort dataset directory from a spec file.
    Synth(SynthArgs),
    /// Pre-train the recurrent network on the source tasks of a dataset.
    Pretrain(PretrainArgs),
    /// Extract frozen last-step features for one task into a CSV.
    Extract(ExtractArgs),
    /// Fit an L1 logistic probe on a feature CSV, tuning lambda on validation.
    FitLr(FitLrArgs),
    /// Compute AUROC metrics from scores or from a probe plus features.
    Eval(EvalArgs),
    /// Run the label-fraction robustness experiment for one target task.
    Sweep(SweepArgs),
    /// Aggregate sweep directories into figure and table CSVs.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Synthetic cohort spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Output dataset directory; its parent must exist.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PretrainArgs {
    /// Dataset directory (schema.json, tasks.json, *.jsonl).
    #[arg(long)]
    pub data: PathBuf,
    /// Training config JSON; flags override file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Hidden sizes; a comma list runs the selection sweep.
    #[arg(long, value_delimiter = ',', default_value = "32")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Tasks to hold out of pre-training (leakage-filtered).
    #[arg(long = "hold-out", value_delimiter = ',')]
    pub hold_out: Vec<String>,
    /// Hours of each episode fed to the model.
    #[arg(long, default_value_t = 48)]
    pub horizon: usize,
    /// Output model file (JSON); the loss history lands next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Which list to read: train, val, or test.
    #[arg(long)]
    pub split: String,
    /// Task whose label fills the feature file's label column.
    #[arg(long)]
    pub task: String,
    /// top = last layer only, all = every layer concatenated.
    #[arg(long, default_value = "all")]
    pub layers: LayerSelection,
    #[arg(long, default_value_t = 48)]
    pub horizon: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct FitLrArgs {
    /// Training features CSV.
    #[arg(long)]
    pub train: PathBuf,
    /// Validation features CSV for lambda selection.
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long = "lambda-grid", value_delimiter = ',', default_value = "0.1,1,10,100,1000,10000")]
    pub lambda_grid: Vec<f64>,
    /// Layer selection recorded in the probe file.
    #[arg(long, default_value = "all")]
    pub layers: LayerSelection,
    /// Output probe file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-lambda table CSV (defaults next to the probe).
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Scores CSV (task,episode_id,score,label); multi-task files also get
    /// a weighted AUROC row.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Probe file to apply to --features.
    #[arg(long)]
    pub probe: Option<PathBuf>,
    /// Features CSV to score with --probe.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Task name used for probe-based evaluation rows.
    #[arg(long, default_value = "target")]
    pub task: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Target task; must not be one of the model's source tasks.
    #[arg(long)]
    pub task: String,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1,0.25,0.5,1.0")]
    pub fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Comma list of LR, RNN-C, MN-LR-1, MN-LR-2.
    #[arg(long, value_delimiter = ',', default_value = "LR,RNN-C,MN-LR-1,MN-LR-2")]
    pub families: Vec<String>,
    #[arg(long, default_value_t = 48)]
    pub horizon: usize,
    #[arg(long = "rnn-hidden", value_delimiter = ',', default_value = "16,32,64")]
    pub rnn_hidden: Vec<usize>,
    #[arg(long = "rnn-layers", default_value_t = 2)]
    pub rnn_layers: usize,
    #[arg(long = "lambda-grid", value_delimiter = ',', default_value = "0.1,1,10,100,1000,10000")]
    pub lambda_grid: Vec<f64>,
    /// Training config JSON for the recurrent baseline.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; its parent must exist.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Sweep output directories to aggregate (repeatable).
    #[arg(long = "sweep-dir", required = true)]
    pub sweep_dirs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::Pretrain(args) => cmd_pretrain(args),
        Command::Extract(args) => cmd_extract(args),
        Command::FitLr(args) => cmd_fit_lr(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("SEQTL_SEED").ok().and_then(|v| v.parse().ok())
}

/// JSON mirror of [`TrainConfig`] where every field is optional, so flags
/// can override file values and the file can override defaults.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainConfigFile {
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    dropout: Option<f64>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    seed: Option<u64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    epsilon: Option<f64>,
}

fn load_config_file(path: Option<&Path>) -> Result<TrainConfigFile, CliError> {
    match path {
        None => Ok(TrainConfigFile::default()),
        Some(p) => {
            let body = std::fs::read_to_string(p)?;
            serde_json::from_str(&body).map_err(|e| CliError::BadInput(format!("{}: {e}", p.display())))
        }
    }
}

struct ConfigFlags {
    seed: Option<u64>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    dropout: Option<f64>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
}

/// Precedence: flag > config file > SEQTL_SEED (seed only) > built-in default.
fn resolve_train_config(file: &TrainConfigFile, flags: &ConfigFlags) -> TrainConfig {
    let defaults = TrainConfig::default();
    TrainConfig {
        batch_size: flags
            .batch_size
            .or(file.batch_size)
            .unwrap_or(defaults.batch_size),
        learning_rate: flags
            .learning_rate
            .or(file.learning_rate)
            .unwrap_or(defaults.learning_rate),
        dropout: flags.dropout.or(file.dropout).unwrap_or(defaults.dropout),
        max_epochs: flags
            .max_epochs
            .or(file.max_epochs)
            .unwrap_or(defaults.max_epochs),
        patience: flags.patience.or(file.patience).unwrap_or(defaults.patience),
        seed: flags
            .seed
            .or(file.seed)
            .or_else(env_seed)
            .unwrap_or(defaults.seed),
        beta1: file.beta1.unwrap_or(defaults.beta1),
        beta2: file.beta2.unwrap_or(defaults.beta2),
        epsilon: file.epsilon.unwrap_or(defaults.epsilon),
    }
}

fn require_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() && !parent.exists() {
            return Err(CliError::MissingParent(parent.to_path_buf()));
        }
    }
    Ok(())
}

fn finish(
    builder: &ManifestBuilder,
    manifest_path: &Path,
    result: Result<(), CliError>,
) -> Result<(), CliError> {
    match &result {
        Ok(()) => builder.write(manifest_path, "ok", None),
        Err(e) => builder.write(manifest_path, "failed", Some(e.to_string())),
    }
    result
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut builder = ManifestBuilder::new(
        "synth",
        json!({"spec": args.spec.display().to_string(), "out": args.out.display().to_string()}),
    );
    builder.record_input(&args.spec);
    for name in ["schema.json", "tasks.json", "train.jsonl", "val.jsonl", "test.jsonl"] {
        builder.record_artifact(&args.out.join(name));
    }
    let result = (|| -> Result<(), CliError> {
        require_parent(&args.out)?;
        let body = std::fs::read_to_string(&args.spec)?;
        let spec: SyntheticSpec = serde_json::from_str(&body)
            .map_err(|e| CliError::BadInput(format!("{}: {e}", args.spec.display())))?;
        let (raw, schema) = generate_synthetic_records(&spec)?;
        save_dataset(&raw, &schema, &args.out)?;
        println!(
            "wrote {} train / {} val / {} test episodes, {} tasks, encoded width {}",
            raw.train.len(),
            raw.validation.len(),
            raw.test.len(),
            raw.task_names.len(),
            schema.encoded_width()
        );
        Ok(())
    })();
    finish(&builder, &args.out.join("manifest.json"), result)
}

fn cmd_pretrain(args: PretrainArgs) -> Result<(), CliError> {
    let file = load_config_file(args.config.as_deref())?;
    let config = resolve_train_config(
        &file,
        &ConfigFlags {
            seed: args.seed,
            batch_size: args.batch_size,
            learning_rate: args.learning_rate,
            dropout: args.dropout,
            max_epochs: args.max_epochs,
            patience: args.patience,
        },
    );
    let history_path = args.out.with_extension("history.csv");
    let mut builder = ManifestBuilder::new(
        "pretrain",
        json!({
            "data": args.data.display().to_string(),
            "hidden": args.hidden,
            "layers": args.layers,
            "hold_out": args.hold_out,
            "horizon": args.horizon,
            "config": config,
            "out": args.out.display().to_string(),
        }),
    );
    for name in ["schema.json", "tasks.json", "train.jsonl", "val.jsonl", "test.jsonl"] {
        builder.record_input(&args.data.join(name));
    }
    if let Some(c) = &args.config {
        builder.record_input(c);
    }
    builder.record_artifact(&args.out);
    builder.record_artifact(&history_path);

    let result = (|| -> Result<(), CliError> {
        require_parent(&args.out)?;
        let (split, schema) = load_encoded(&args.data, args.horizon)?;
        let held: BTreeSet<String> = args.hold_out.iter().cloned().collect();
        let source = filter_source_split(&split, &held)?;
        println!(
            "pre-training on {} source tasks, {} train / {} val episodes",
            source.num_tasks(),
            source.train.len(),
            source.validation.len()
        );
        let (model, losses) = hidden_size_sweep(&source, &config, &args.hidden, args.layers)?;
        for (h, loss) in &losses {
            println!("h={h}: best validation loss {loss}");
        }
        println!(
            "selected h={} (epoch {}, validation loss {})",
            model.stack.hidden_size(),
            model.best_epoch,
            model.best_val_loss
        );
        let metadata = ModelMetadata {
            schema_hash: schema.hash(),
            train_config: serde_json::to_value(&config).expect("config serializes"),
            seed: config.seed,
            task_names: model.task_names.clone(),
        };
        std::fs::write(&args.out, model.to_model_bytes(&metadata)?)?;
        write_history_csv(&history_path, &model.history)?;
        Ok(())
    })();
    finish(&builder, &args.out.with_extension("manifest.json"), result)
}

fn load_model_checked(
    model_path: &Path,
    schema: &ChannelSchema,
) -> Result<(PretrainedModel, ModelMetadata), CliError> {
    let bytes = std::fs::read(model_path)?;
    let (model, metadata) = PretrainedModel::from_model_bytes(&bytes)?;
    let data_hash = schema.hash();
    if metadata.schema_hash != data_hash {
        return Err(CliError::SchemaHashMismatch {
            model: metadata.schema_hash,
            data: data_hash,
        });
    }
    Ok((model, metadata))
}

fn cmd_extract(args: ExtractArgs) -> Result<(), CliError> {
    let mut builder = ManifestBuilder::new(
        "extract",
        json!({
            "model": args.model.display().to_string(),
            "data": args.data.display().to_string(),
            "split": args.split,
            "task": args.task,
            "layers": args.layers.to_string(),
            "horizon": args.horizon,
            "out": args.out.display().to_string(),
        }),
    );
    builder.record_input(&args.model);
    builder.record_artifact(&args.out);
    let result = (|| -> Result<(), CliError> {
        require_parent(&args.out)?;
        let (raw, schema) = load_dataset(&args.data)?;
        let (model, _) = load_model_checked(&args.model, &schema)?;
        let records = match args.split.as_str() {
            "train" => &raw.train,
            "val" => &raw.validation,
            "test" => &raw.test,
            other => {
                return Err(CliError::BadInput(format!(
                    "unknown split {other:?} (use train, val, or test)"
                )))
            }
        };
        if !raw.task_names.iter().any(|t| *t == args.task) {
            return Err(CliError::BadInput(format!("task {} not in tasks.json", args.task)));
        }
        let tasks = vec![args.task.clone()];
        let features = records
            .iter()
            .map(|r| {
                let encoded = encode_record(r, &schema, args.horizon, &tasks)?;
                Ok(extract_features(&model, &encoded, args.layers)?)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        write_features_csv(&args.out, &features)?;
        println!(
            "wrote {} feature rows of width {}",
            features.len(),
            features.first().map_or(0, |f| f.values.len())
        );
        Ok(())
    })();
    finish(&builder, &args.out.with_extension("manifest.json"), result)
}

fn cmd_fit_lr(args: FitLrArgs) -> Result<(), CliError> {
    let table_path = args
        .table
        .clone()
        .unwrap_or_else(|| args.out.with_extension("lambda_table.csv"));
    let mut builder = ManifestBuilder::new(
        "fit-lr",
        json!({
            "train": args.train.display().to_string(),
            "val": args.val.display().to_string(),
            "lambda_grid": args.lambda_grid,
            "layers": args.layers.to_string(),
            "out": args.out.display().to_string(),
            "table": table_path.display().to_string(),
        }),
    );
    builder.record_input(&args.train);
    builder.record_input(&args.val);
    builder.record_artifact(&args.out);
    builder.record_artifact(&table_path);
    let result = (|| -> Result<(), CliError> {
        require_parent(&args.out)?;
        let train = read_features_csv(&args.train)?;
        let val = read_features_csv(&args.val)?;
        let options = LassoOptions {
            layers_used: args.layers,
            ..LassoOptions::default()
        };
        let (probe, scores) = lambda_sweep(&train, &val, &args.lambda_grid, &options)?;
        probe.save(&args.out)?;
        let mut table = std::io::BufWriter::new(std::fs::File::create(&table_path)?);
        writeln!(table, "lambda,val_nll,val_objective,sparsity_fraction")?;
        for s in &scores {
            writeln!(table, "{},{},{},{}", s.lambda, s.val_nll, s.val_objective, s.sparsity)?;
        }
        table.flush()?;
        println!(
            "selected lambda {} (validation NLL {}), {} of {} weights below 0.001",
            probe.lambda,
            scores
                .iter()
                .find(|s| s.lambda == probe.lambda)
                .map(|s| s.val_nll)
                .unwrap_or(f64::NAN),
            (crate::transfer::sparsity_fraction(&probe, 0.001) * probe.num_features() as f64)
                .round(),
            probe.num_features()
        );
        Ok(())
    })();
    finish(&builder, &args.out.with_extension("manifest.json"), result)
}

fn read_scores_csv(path: &Path) -> Result<Vec<ScoredSet>, CliError> {
    let body = std::fs::read_to_string(path)?;
    let mut lines = body.lines().enumerate();
    let bad = |line: usize, message: String| {
        CliError::BadInput(format!("{}:{line}: {message}", path.display()))
    };
    match lines.next() {
        Some((_, header)) if header == "task,episode_id,score,label" => {}
        Some((_, header)) => {
            return Err(bad(1, format!("expected header task,episode_id,score,label, found {header}")))
        }
        None => return Err(bad(1, "file is empty".into())),
    }
    let mut by_task: std::collections::BTreeMap<String, Vec<(f64, u8)>> = Default::default();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(idx + 1, format!("expected 4 fields, found {}", fields.len())));
        }
        let score: f64 = fields[2]
            .parse()
            .map_err(|e| bad(idx + 1, format!("bad score: {e}")))?;
        let label: u8 = fields[3]
            .parse()
            .map_err(|e| bad(idx + 1, format!("bad label: {e}")))?;
        if label > 1 {
            return Err(bad(idx + 1, format!("label must be 0 or 1, got {label}")));
        }
        by_task.entry(fields[0].to_string()).or_default().push((score, label));
    }
    Ok(by_task
        .into_iter()
        .map(|(task, pairs)| ScoredSet { task, pairs })
        .collect())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let mut builder = ManifestBuilder::new(
        "eval",
        json!({
            "scores": args.scores.as_ref().map(|p| p.display().to_string()),
            "probe": args.probe.as_ref().map(|p| p.display().to_string()),
            "features": args.features.as_ref().map(|p| p.display().to_string()),
            "task": args.task,
            "out": args.out.display().to_string(),
        }),
    );
    for input in [&args.scores, &args.probe, &args.features].into_iter().flatten() {
        builder.record_input(input);
    }
    builder.record_artifact(&args.out);
    let result = (|| -> Result<(), CliError> {
        require_parent(&args.out)?;
        let sets: Vec<ScoredSet> = match (&args.scores, &args.probe, &args.features) {
            (Some(scores), None, None) => read_scores_csv(scores)?,
            (None, Some(probe_path), Some(features_path)) => {
                let probe = LrProbe::load(probe_path)?;
                let features = read_features_csv(features_path)?;
                let pairs = features
                    .iter()
                    .map(|f| Ok((lr_predict(&probe, f)?, f.label)))
                    .collect::<Result<Vec<_>, CliError>>()?;
                vec![ScoredSet {
                    task: args.task.clone(),
                    pairs,
                }]
            }
            _ => {
                return Err(CliError::BadInput(
                    "pass either --scores, or --probe together with --features".into(),
                ))
            }
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
        writeln!(out, "task,auroc,positives,negatives")?;
        for set in &sets {
            let positives = set.pairs.iter().filter(|(_, y)| *y == 1).count();
            let negatives = set.pairs.len() - positives;
            writeln!(out, "{},{},{positives},{negatives}", set.task, auroc(set)?)?;
        }
        if sets.len() > 1 {
            let positives: usize = sets
                .iter()
                .map(|s| s.pairs.iter().filter(|(_, y)| *y == 1).count())
                .sum();
            let total: usize = sets.iter().map(|s| s.pairs.len()).sum();
            writeln!(
                out,
                "__weighted__,{},{positives},{}",
                weighted_auroc(&sets)?,
                total - positives
            )?;
        }
        out.flush()?;
        Ok(())
    })();
    finish(&builder, &args.out.with_extension("manifest.json"), result)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let seeds = args
        .seeds
        .clone()
        .unwrap_or_else(|| vec![env_seed().unwrap_or(0)]);
    let families = args
        .families
        .iter()
        .map(|s| s.parse::<Family>().map_err(CliError::BadInput))
        .collect::<Result<Vec<Family>, CliError>>()?;
    let file = load_config_file(args.config.as_deref())?;
    let default_rnn = SweepOptions::default().rnn_config;
    let rnn_config = TrainConfig {
        batch_size: file.batch_size.unwrap_or(default_rnn.batch_size),
        learning_rate: file.learning_rate.unwrap_or(default_rnn.learning_rate),
        dropout: file.dropout.unwrap_or(default_rnn.dropout),
        max_epochs: file.max_epochs.unwrap_or(default_rnn.max_epochs),
        patience: file.patience.unwrap_or(default_rnn.patience),
        seed: 0, // overridden per cell
        beta1: file.beta1.unwrap_or(default_rnn.beta1),
        beta2: file.beta2.unwrap_or(default_rnn.beta2),
        epsilon: file.epsilon.unwrap_or(default_rnn.epsilon),
    };
    let options = SweepOptions {
        fractions: args.fractions.clone(),
        seeds,
        families,
        lambda_grid: args.lambda_grid.clone(),
        rnn_hidden_grid: args.rnn_hidden.clone(),
        rnn_depth: args.rnn_layers,
        rnn_config,
    };

    let mut builder = ManifestBuilder::new(
        "sweep",
        json!({
            "model": args.model.display().to_string(),
            "data": args.data.display().to_string(),
            "task": args.task,
            "fractions": options.fractions,
            "seeds": options.seeds,
            "families": options.families.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
            "horizon": args.horizon,
            "rnn_hidden": options.rnn_hidden_grid,
            "rnn_layers": options.rnn_depth,
            "lambda_grid": options.lambda_grid,
            "rnn_config": options.rnn_config,
            "out": args.out.display().to_string(),
        }),
    );
    builder.record_input(&args.model);
    for name in ["schema.json", "tasks.json", "train.jsonl", "val.jsonl", "test.jsonl"] {
        builder.record_input(&args.data.join(name));
    }

    let result = (|| -> Result<(), CliError> {
        require_parent(&args.out)?;
        std::fs::create_dir_all(&args.out)?;
        let (raw, schema) = load_dataset(&args.data)?;
        let (model, _) = load_model_checked(&args.model, &schema)?;
        let data = TargetTaskData::build(&raw, &schema, args.horizon, &args.task)?;

        let sweep = run_label_fraction_sweep(&model, &data, &options)?;
        let sweep_csv = args.out.join("sweep.csv");
        write_sweep_csv(&sweep_csv, &sweep)?;
        builder.record_artifact(&sweep_csv);

        let plot_csv = args.out.join("fraction_plot.csv");
        write_fraction_plot_csv(&plot_csv, std::slice::from_ref(&sweep))?;
        builder.record_artifact(&plot_csv);

        let probes = fit_reference_probes(&model, &data, &options)?;
        let mut labelled: Vec<(String, Family, LrProbe)> = Vec::new();
        for (family, probe) in &probes {
            let path = args.out.join(format!("probe_{family}.json"));
            probe.save(&path)?;
            builder.record_artifact(&path);
            labelled.push((data.task.clone(), *family, probe.clone()));
        }
        let report = sparsity_report(&labelled, 0.001);
        let summary_csv = args.out.join("sparsity_summary.csv");
        write_sparsity_summary_csv(&summary_csv, &report)?;
        builder.record_artifact(&summary_csv);
        for family in probes.keys() {
            let path = args.out.join(format!("heatmap_{family}.csv"));
            write_heatmap_csv(&path, &report, *family)?;
            builder.record_artifact(&path);
        }

        let meta_path = args.out.join("sweep_meta.json");
        std::fs::write(
            &meta_path,
            serde_json::to_string_pretty(&json!({
                "target_task": sweep.target_task,
                "test_set_hash": sweep.test_set_hash,
            }))
            .expect("meta serializes")
                + "\n",
        )?;
        builder.record_artifact(&meta_path);

        let ok = sweep.cells.iter().filter(|c| c.status == "ok").count();
        println!(
            "{} of {} cells ok; test-set hash {}",
            ok,
            sweep.cells.len(),
            sweep.test_set_hash
        );
        Ok(())
    })();
    finish(&builder, &args.out.join("manifest.json"), result)
}

fn parse_sweep_csv(path: &Path, target_task: &str, hash: &str) -> Result<SweepResult, CliError> {
    let body = std::fs::read_to_string(path)?;
    let bad = |line: usize, message: String| {
        CliError::BadInput(format!("{}:{line}: {message}", path.display()))
    };
    let mut lines = body.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == "family,fraction,seed,test_auroc,status" => {}
        _ => return Err(bad(1, "missing sweep.csv header".into())),
    }
    let mut cells = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(5, ',').collect();
        if fields.len() != 5 {
            return Err(bad(idx + 1, "expected 5 fields".into()));
        }
        let family: Family = fields[0].parse().map_err(|e| bad(idx + 1, e))?;
        let fraction: f64 = fields[1].parse().map_err(|e| bad(idx + 1, format!("{e}")))?;
        let seed: u64 = fields[2].parse().map_err(|e| bad(idx + 1, format!("{e}")))?;
        let test_auroc = if fields[3].is_empty() {
            None
        } else {
            Some(fields[3].parse().map_err(|e| bad(idx + 1, format!("{e}")))?)
        };
        cells.push(SweepCell {
            family,
            fraction,
            seed,
            test_auroc,
            status: fields[4].to_string(),
        });
    }
    Ok(SweepResult {
        target_task: target_task.to_string(),
        test_set_hash: hash.to_string(),
        cells,
    })
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let mut builder = ManifestBuilder::new(
        "report",
        json!({
            "sweep_dirs": args.sweep_dirs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "out": args.out.display().to_string(),
        }),
    );
    let result = (|| -> Result<(), CliError> {
        require_parent(&args.out)?;
        std::fs::create_dir_all(&args.out)?;

        let mut sweeps: Vec<SweepResult> = Vec::new();
        let mut probes: Vec<(String, Family, LrProbe)> = Vec::new();
        for dir in &args.sweep_dirs {
            let meta_body = std::fs::read_to_string(dir.join("sweep_meta.json"))?;
            let meta: serde_json::Value = serde_json::from_str(&meta_body)
                .map_err(|e| CliError::BadInput(format!("{}: {e}", dir.display())))?;
            let task = meta["target_task"]
                .as_str()
                .ok_or_else(|| CliError::BadInput(format!("{}: no target_task", dir.display())))?
                .to_string();
            let hash = meta["test_set_hash"].as_str().unwrap_or_default().to_string();
            let sweep_csv = dir.join("sweep.csv");
            builder.record_input(&sweep_csv);
            sweeps.push(parse_sweep_csv(&sweep_csv, &task, &hash)?);
            for family in [Family::StatLr, Family::FrozenTopLr, Family::FrozenAllLr] {
                let probe_path = dir.join(format!("probe_{family}.json"));
                if probe_path.exists() {
                    builder.record_input(&probe_path);
                    probes.push((task.clone(), family, LrProbe::load(&probe_path)?));
                }
            }
        }

        let plot_csv = args.out.join("fig_auroc_vs_fraction.csv");
        write_fraction_plot_csv(&plot_csv, &sweeps)?;
        builder.record_artifact(&plot_csv);

        let report = sparsity_report(&probes, 0.001);
        let table_csv = args.out.join("sparsity_table.csv");
        write_table_csv(&table_csv, &report)?;
        builder.record_artifact(&table_csv);
        for family in [Family::StatLr, Family::FrozenTopLr, Family::FrozenAllLr] {
            if report.rows.iter().any(|r| r.family == family) {
                let path = args.out.join(format!("fig_heatmap_{family}.csv"));
                write_heatmap_csv(&path, &report, family)?;
                builder.record_artifact(&path);
            }
        }
        println!(
            "aggregated {} sweep directories covering {} tasks",
            args.sweep_dirs.len(),
            sweeps
                .iter()
                .map(|s| s.target_task.clone())
                .collect::<BTreeSet<_>>()
                .len()
        );
        Ok(())
    })();
    finish(&builder, &args.out.join("manifest.json"), result)
}
