use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use protonet::embedder::{read_checkpoint, write_checkpoint};
use protonet::{generate_synthetic, write_csv, Dataset64, Embedder64, EmbedderKind, SyntheticSpec};
use protonet_cli::{
    export_embeddings, load_dataset, read_table, report, run_grid, write_results, CliError, ExperimentConfig,
    RawConfig, Result,
};

#[derive(Parser)]
#[command(name = "protonet", version, about = "Few-shot prototype classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an intra- or cross-domain experiment grid.
    Run(RunArgs),
    /// Write a synthetic dataset as CSV.
    GenData(GenDataArgs),
    /// Dump embeddings and class prototypes of one dataset as CSV.
    ExportEmbeddings(ExportArgs),
    /// Print a result table (CSV or JSON) as aligned text.
    Report { path: PathBuf },
}

/// Sources of experiment settings; later ones win.
#[derive(Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `intra` or `cross`.
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated strategy names.
    #[arg(long)]
    strategy: Option<String>,
    /// Comma-separated list.
    #[arg(long)]
    n_way: Option<String>,
    /// Comma-separated list.
    #[arg(long)]
    k_shot: Option<String>,
    /// Test episodes per cell.
    #[arg(long)]
    episodes: Option<String>,
    /// `NAME=SOURCE` with SOURCE `synthetic` or a CSV path; repeatable.
    #[arg(long = "dataset")]
    datasets: Vec<String>,
    /// Any config key as `KEY=VALUE`; repeatable.
    #[arg(long = "set")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::from_file(path)?,
            None => RawConfig::default(),
        };
        let flags = [
            ("seed", self.seed.map(|s| s.to_string())),
            ("mode", self.mode.clone()),
            ("strategies", self.strategy.clone()),
            ("n_way", self.n_way.clone()),
            ("k_shot", self.k_shot.clone()),
            ("test_episodes", self.episodes.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                raw.set(key, v);
            }
        }
        for d in &self.datasets {
            let (name, source) = d.split_once('=').ok_or_else(|| CliError::Config {
                key: "--dataset".into(),
                reason: format!("expected NAME=SOURCE, got `{d}`"),
            })?;
            raw.set(format!("dataset.{}.source", name.trim()), source.trim());
        }
        for o in &self.overrides {
            raw.apply_override(o)?;
        }
        raw.into_config()
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory for result files.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Save every trained embedder here.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    n_classes: usize,
    #[arg(long, default_value_t = 30)]
    per_class: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    within_std: f64,
    #[arg(long, default_value_t = 0.1)]
    outlier_fraction: f64,
    #[arg(long, default_value_t = 6.0)]
    outlier_scale: f64,
    #[arg(long, default_value_t = 0.0)]
    domain_shift: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Dataset to export; the first configured one by default.
    #[arg(long)]
    name: Option<String>,
    /// Trained parameters; required for a feed-forward embedder.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn checkpoint_name(domain: &str, strategy: &str, n_way: usize) -> String {
    let safe: String = domain
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}__{strategy}__{n_way}way.ckpt")
}

fn run(args: RunArgs) -> Result<()> {
    let config = args.config.load()?;
    let output = run_grid(&config)?;
    let files = write_results(&output.table, &args.out)?;
    if let Some(dir) = &args.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for m in &output.models {
            if let Some(net) = m.embedder.network() {
                write_checkpoint(net, dir.join(checkpoint_name(&m.domain, &m.strategy, m.n_way)))?;
            }
        }
    }
    print!("{}", report::render(&output.table));
    eprintln!("wrote {} and {}", files.csv.display(), files.json.display());
    Ok(())
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_classes: args.n_classes,
        per_class: args.per_class,
        dim: args.dim,
        class_separation: args.separation,
        within_std: args.within_std,
        outlier_fraction: args.outlier_fraction,
        outlier_scale: args.outlier_scale,
        domain_shift: args.domain_shift,
        seed: args.seed,
    };
    let name = args
        .out
        .file_stem()
        .map_or_else(|| "synthetic".into(), |s| s.to_string_lossy().into_owned());
    let data: Dataset64 = generate_synthetic(&spec, name)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    write_csv(&data, &args.out)?;
    eprintln!("wrote {} rows to {}", data.len(), args.out.display());
    Ok(())
}

fn load_embedder(config: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<Embedder64> {
    match (config.embedder.kind, checkpoint) {
        (_, Some(path)) => Ok(Embedder64::FeedForward(read_checkpoint(path)?)),
        (EmbedderKind::Identity, None) => Ok(Embedder64::Identity),
        (EmbedderKind::FeedForward, None) => Err(CliError::Config {
            key: "embedder".into(),
            reason: "a feed-forward embedder needs --checkpoint with trained parameters".into(),
        }),
    }
}

fn export(args: ExportArgs) -> Result<()> {
    let config = args.config.load()?;
    let ds = match &args.name {
        Some(n) => config
            .datasets
            .iter()
            .find(|d| &d.name == n)
            .ok_or_else(|| CliError::Config {
                key: "--name".into(),
                reason: format!("no dataset named `{n}`"),
            })?,
        None => &config.datasets[0],
    };
    let data = load_dataset(ds)?;
    let embedder = load_embedder(&config, args.checkpoint.as_deref())?;
    let rows = export_embeddings(&data, &embedder, &config.strategies, &args.out)?;
    eprintln!("wrote {rows} rows to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::GenData(args) => gen_data(args),
        Command::ExportEmbeddings(args) => export(args),
        Command::Report { path } => read_table(&path).map(|t| print!("{}", report::render(&t))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
