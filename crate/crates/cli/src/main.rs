use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use mvdec::dataio::{
    export_embeddings, generate_synthetic, load_dataset, read_labels_csv, save_dataset, write_labels, write_report,
    write_view_labels, MultiViewDataset, SyntheticSpec, ViewFormat,
};
use mvdec::metrics::ClusteringScores;
use mvdec::parallel::Parallelism;
use mvdec::trainer::{train, DatasetSummary, Mode, RunReport, TrainOutcome, TrainingConfig, ViewModel};

#[derive(Parser)]
#[command(name = "mvdec", version, about = "Self-supervised multi-view deep embedded clustering")]
struct Cli {
    /// Print per-round progress on stderr.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    /// Print nothing on success.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic multi-view dataset directory.
    Generate(GenerateArgs),
    /// Pretrain, fine-tune and write the report, labels, models and embeddings.
    Train(TrainArgs),
    /// Score predicted labels against ground truth; prints ACC/NMI/ARI as JSON.
    Eval(EvalArgs),
    /// Encode a dataset with saved models and write the embeddings as CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 1000 examples, 4 clusters, two clean 20-d views and one noisy one.
    NoisyView,
}

impl Preset {
    fn spec(self) -> SyntheticSpec {
        match self {
            Preset::NoisyView => SyntheticSpec::noisy_view(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Binary,
    Csv,
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,

    #[arg(long, value_enum, conflicts_with_all = ["spec", "n", "k", "dims", "noise_per_view", "separation"])]
    preset: Option<Preset>,

    /// JSON generator spec: {n, k, views, dims, noise_per_view, separation, seed}.
    #[arg(long, conflicts_with_all = ["n", "k", "dims", "noise_per_view", "separation", "seed"])]
    spec: Option<PathBuf>,

    #[arg(long)]
    n: Option<usize>,

    #[arg(long)]
    k: Option<usize>,

    /// Feature count per view, comma separated.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,

    /// Noise standard deviation per view, comma separated [default: 0.05 each].
    #[arg(long, value_delimiter = ',')]
    noise_per_view: Option<Vec<f64>>,

    /// Distance between cluster prototypes [default: 1.0].
    #[arg(long)]
    separation: Option<f64>,

    /// Generator seed; overrides the preset's seed.
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, value_enum, default_value = "binary")]
    format: FormatArg,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory containing manifest.json.
    #[arg(long, conflicts_with = "preset")]
    dataset: Option<PathBuf>,

    /// Train on a built-in synthetic dataset instead of a directory.
    #[arg(long, value_enum)]
    preset: Option<Preset>,

    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,

    /// JSON run config: {dataset?, out?, verbosity?, training: {...}}.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Start from the desk-scale defaults (narrow network, short schedule).
    #[arg(long, conflicts_with = "config")]
    desk: bool,

    #[command(flatten)]
    overrides: ConfigOverrides,
}

/// One flag per training hyperparameter; set flags win over the config file.
#[derive(Args)]
struct ConfigOverrides {
    /// Number of clusters [default: number of label classes, else 2].
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    finetune_batches_per_round: Option<usize>,
    #[arg(long)]
    aligned_stop: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// sdmvc, idec_per_view, no_utd or no_ssm.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Encoder hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    kmeans_restarts: Option<usize>,
}

impl ConfigOverrides {
    fn apply(&self, c: &mut TrainingConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    c.$field = v.clone();
                })*
            };
        }
        set!(
            k,
            gamma,
            batch_size,
            pretrain_epochs,
            finetune_batches_per_round,
            aligned_stop,
            max_rounds,
            seed,
            mode,
            learning_rate,
            hidden,
            embed_dim,
            kmeans_restarts
        );
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted labels CSV (`label` column, or the first column).
    labels: PathBuf,
    /// Ground-truth labels CSV.
    truth: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    dataset: Option<PathBuf>,

    #[arg(long, value_enum)]
    preset: Option<Preset>,

    /// models.json written by `train`.
    #[arg(long)]
    models: PathBuf,

    #[arg(long)]
    out: PathBuf,
}

/// Contents of a `--config` file.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CliConfig {
    dataset: Option<PathBuf>,
    out: Option<PathBuf>,
    verbosity: Option<u8>,
    #[serde(default)]
    training: TrainingConfig,
}

/// The parsed config and whether it set `k` itself.
fn read_cli_config(path: &Path) -> Result<(CliConfig, bool)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let sets_k = value.get("training").and_then(|t| t.get("k")).is_some();
    let config = serde_json::from_value(value).with_context(|| format!("invalid config {}", path.display()))?;
    Ok((config, sets_k))
}

fn cmd_generate(args: GenerateArgs, verbosity: u8) -> Result<()> {
    let spec = if let Some(preset) = args.preset {
        let mut spec = preset.spec();
        if let Some(seed) = args.seed {
            spec.seed = seed;
        }
        spec
    } else if let Some(path) = &args.spec {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid spec {}", path.display()))?
    } else {
        let (Some(n), Some(k), Some(dims)) = (args.n, args.k, args.dims) else {
            bail!("pass --preset, --spec, or all of --n, --k and --dims");
        };
        SyntheticSpec {
            n,
            k,
            views: dims.len(),
            noise_per_view: args.noise_per_view.unwrap_or_else(|| vec![0.05; dims.len()]),
            dims,
            separation: args.separation.unwrap_or(1.0),
            seed: args.seed.unwrap_or(0),
        }
    };
    let dataset = generate_synthetic(&spec)?;
    let format = match args.format {
        FormatArg::Binary => ViewFormat::Binary,
        FormatArg::Csv => ViewFormat::Csv,
    };
    save_dataset(&dataset, &args.out, format)?;
    if verbosity > 0 {
        println!(
            "wrote {}: n={} k={} dims={:?} noise={:?} seed={}",
            args.out.display(),
            spec.n,
            spec.k,
            spec.dims,
            spec.noise_per_view,
            spec.seed
        );
    }
    Ok(())
}

fn load_input(dataset: Option<&Path>, preset: Option<Preset>) -> Result<MultiViewDataset> {
    match (preset, dataset) {
        (Some(p), _) => Ok(generate_synthetic(&p.spec())?),
        (None, Some(dir)) => load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display())),
        (None, None) => bail!("no dataset: pass --dataset or --preset"),
    }
}

fn write_outputs(out: &Path, dataset: &MultiViewDataset, outcome: &TrainOutcome) -> Result<()> {
    write_labels(&outcome.labels, &out.join("labels.csv"))?;
    write_view_labels(&outcome.view_labels, &out.join("view_labels.csv"))?;
    let models = serde_json::to_string(&outcome.models)?;
    fs::write(out.join("models.json"), models).context("writing models.json")?;
    let autoencoders: Vec<_> = outcome.models.iter().map(|m| m.autoencoder.clone()).collect();
    export_embeddings(&autoencoders, dataset, &out.join("embeddings"))?;
    Ok(())
}

fn print_rounds(report: &RunReport) {
    for c in &report.checkpoints {
        let consensus = c
            .consensus_scores
            .map(|s| format!(" consensus ACC {:.4}", s.acc))
            .unwrap_or_default();
        eprintln!(
            "round {:>3}: aligned rate {:.4}, disagreement {:.4}{consensus}",
            c.round, c.aligned_rate, c.view_disagreement
        );
    }
}

fn print_summary(report: &RunReport) {
    let stop = report
        .stop_reason
        .map(|s| serde_json::to_string(&s).unwrap_or_default())
        .unwrap_or_default();
    let mut line = format!(
        "{}: stopped on {} after {} rounds",
        report.mode,
        stop.trim_matches('"'),
        report.rounds_executed()
    );
    if let Some(f) = &report.final_result {
        line.push_str(&format!(", aligned rate {:.4}", f.aligned_rate));
        if let Some(s) = f.consensus_scores {
            line.push_str(&format!(", consensus ACC {:.4} NMI {:.4} ARI {:.4}", s.acc, s.nmi, s.ari));
        }
    }
    println!("{line}");
}

fn cmd_train(args: TrainArgs, cli_verbosity: u8) -> Result<()> {
    let (file, file_sets_k) = match &args.config {
        Some(path) => read_cli_config(path)?,
        None => (CliConfig::default(), false),
    };
    let out = args
        .out
        .clone()
        .or(file.out)
        .context("no output directory: pass --out or set \"out\" in the config")?;
    let verbosity = if args.config.is_some() && cli_verbosity == 1 {
        file.verbosity.unwrap_or(1)
    } else {
        cli_verbosity
    };
    let mut config = if args.desk { TrainingConfig::desk(2) } else { file.training };
    args.overrides.apply(&mut config);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let report_path = out.join("report.json");

    let dataset_dir = args.dataset.clone().or(file.dataset);
    let dataset = match load_input(dataset_dir.as_deref(), args.preset) {
        Ok(d) => d,
        Err(e) => {
            let name = dataset_dir.map_or_else(|| "<none>".to_string(), |p| p.display().to_string());
            let summary = DatasetSummary {
                name,
                n: 0,
                dims: Vec::new(),
                has_labels: false,
            };
            let mut report = RunReport::new(&config, summary);
            report.warnings.push(format!("{e:#}"));
            write_report(&report, &report_path)?;
            return Err(e);
        }
    };
    if args.overrides.k.is_none() && !file_sets_k {
        if let Some(classes) = dataset.n_classes() {
            config.k = classes;
        }
    }

    match train(&dataset, &config, None, Parallelism::from_env()) {
        Ok(outcome) => {
            let mut report = outcome.report.clone();
            let written = write_outputs(&out, &dataset, &outcome);
            if let Err(e) = &written {
                report.incomplete = true;
                report.warnings.push(format!("writing outputs failed: {e:#}"));
            }
            write_report(&report, &report_path)?;
            written?;
            if verbosity > 1 {
                print_rounds(&report);
            }
            if verbosity > 0 {
                print_summary(&report);
            }
            Ok(())
        }
        Err(err) => {
            let mut report = *err.partial;
            report.warnings.push(format!("aborted: {}", err.source));
            write_report(&report, &report_path)?;
            Err(anyhow!(err.source)).context("training failed; partial report written")
        }
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let pred = read_labels_csv(&args.labels)?;
    let truth = read_labels_csv(&args.truth)?;
    let scores = ClusteringScores::compute(&pred, &truth)?;
    println!("{}", serde_json::to_string(&scores)?);
    Ok(())
}

fn cmd_export(args: ExportArgs, verbosity: u8) -> Result<()> {
    let dataset = load_input(args.dataset.as_deref(), args.preset)?;
    let text = fs::read_to_string(&args.models).with_context(|| format!("reading {}", args.models.display()))?;
    let models: Vec<ViewModel> = serde_json::from_str(&text).with_context(|| format!("invalid models file {}", args.models.display()))?;
    let autoencoders = models
        .into_iter()
        .map(|m| m.validated().map(|m| m.autoencoder))
        .collect::<mvdec::Result<Vec<_>>>()?;
    let files = export_embeddings(&autoencoders, &dataset, &args.out)?;
    if verbosity > 0 {
        for f in files.view_files.iter().chain([&files.global_file]) {
            println!("{}", f.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbosity = if cli.quiet { 0 } else { 1 + cli.verbose };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a, verbosity),
        Command::Train(a) => cmd_train(a, verbosity),
        Command::Eval(a) => cmd_eval(a),
        Command::ExportEmbeddings(a) => cmd_export(a, verbosity),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
