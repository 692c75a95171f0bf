use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use log::warn;
use stentrom::dataset::{export_archive, import_archive, HFDataset, Label, MuB};
use stentrom::{Error, Result};
use stentrom_cli::config::{PipelineConfig, PredictorChoice};
use stentrom_cli::pipeline::{self, ModelBundle, PredictOptions};
use stentrom_cli::service::{self, AppState};

const DEFAULT_CONFIG: &str = "stentrom.toml";

#[derive(Parser)]
#[command(name = "stentrom", version, about = "Braided stent deployment campaigns and surrogate models")]
struct Cli {
    /// Pipeline configuration (TOML, or JSON by extension). Defaults to
    /// ./stentrom.toml when present.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the default configuration.
    InitConfig,
    /// Run or resume the simulation campaign.
    Generate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the classifiers and the reduced model.
    Train {
        /// POD tolerance; clears any fixed rank.
        #[arg(long)]
        eps_pod: Option<f64>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        predictors: Option<PredictorChoice>,
        #[arg(long)]
        ncl: Option<usize>,
        /// Classifier gating predictions (LR, kNN, NB, DT, ANN, SVM).
        #[arg(long)]
        gate: Option<String>,
    },
    /// Classify a parameter set and predict the deployed stent.
    Predict {
        /// y_p1,z_p1,d_v,d_a,y_ca,eta
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
        mu: Vec<f64>,
        /// Run the regression even on a predicted failure.
        #[arg(long)]
        force: bool,
        /// Posterior draws to include.
        #[arg(long, default_value_t = 0)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the prediction API (and UI assets when configured).
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Pack the dataset directory into a tar archive.
    Export { archive: PathBuf },
    /// Unpack a dataset archive into the dataset directory.
    Import { archive: PathBuf },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None if Path::new(DEFAULT_CONFIG).exists() => PipelineConfig::load(Path::new(DEFAULT_CONFIG)),
        None => {
            let mut cfg = PipelineConfig::default();
            cfg.resolve(Path::new("."))?;
            Ok(cfg)
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    }
    let mut cfg = load_config(cli.config.as_deref())?;
    cfg.validate()?;
    match cli.command {
        Command::InitConfig => {
            print!("{}", PipelineConfig::default().to_toml()?);
        }
        Command::Generate { n, seed } => {
            if let Some(n) = n {
                cfg.campaign.n_samples = n;
            }
            if let Some(s) = seed {
                cfg.campaign.seed = s;
            }
            let ds = pipeline::generate(&cfg, &|s, done, total| {
                let outcome = match (&s.error, s.label) {
                    (Some(e), _) => format!("error: {e}"),
                    (None, Some(Label::Success)) => "success".into(),
                    (None, Some(Label::Failure)) => "failure".into(),
                    (None, None) => "unlabeled".into(),
                };
                println!("[{done}/{total}] sample {:05}: {outcome} in {:.1} s", s.id, s.runtime_s);
            })?;
            let labeled = ds.labeled();
            println!(
                "{} samples, {} labeled, {} successes; config hash {}",
                ds.samples.len(),
                labeled.len(),
                ds.successes(&labeled).len(),
                ds.manifest.config_hash
            );
        }
        Command::Train { eps_pod, rank, predictors, ncl, gate } => {
            if let Some(e) = eps_pod {
                cfg.rom.eps_pod = e;
                cfg.rom.rank = None;
            }
            if rank.is_some() {
                cfg.rom.rank = rank;
            }
            if let Some(p) = predictors {
                cfg.rom.predictors = p;
            }
            if let Some(n) = ncl {
                cfg.rom.n_cl = n;
            }
            if gate.is_some() {
                cfg.train.gate = gate;
            }
            let ds = HFDataset::load(&cfg.paths.dataset)?;
            let (bundle, report) = pipeline::train(&cfg, &ds)?;
            pipeline::write_training(&cfg, &bundle, &report)?;
            print!("{}", report.to_text());
            println!("models written to {}, report to {}", cfg.paths.models.display(), cfg.paths.reports.display());
        }
        Command::Predict { mu, force, samples, seed } => {
            let mu =
                MuB::from_slice(&mu).map_err(|_| Error::Argument(format!("--mu takes 6 values, got {}", mu.len())))?;
            let bundle = ModelBundle::load(&cfg.paths.models)?;
            let out = pipeline::predict(&bundle, &mu, PredictOptions { force, samples, seed })?;
            if let Some(w) = &out.warning {
                warn!("{w}");
            }
            if !out.in_range {
                warn!("parameters outside the training ranges");
            }
            print_json(&out)?;
        }
        Command::Serve { bind, port, static_dir } => {
            let bundle = ModelBundle::load(&cfg.paths.models)?;
            let state = Arc::new(AppState { bundle, static_dir: static_dir.or(cfg.service.static_dir) });
            let bind = bind.unwrap_or(cfg.service.bind);
            let port = port.unwrap_or(cfg.service.port);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(service::serve(state, &bind, port))?;
        }
        Command::Export { archive } => {
            export_archive(&cfg.paths.dataset, &archive)?;
            println!("wrote {}", archive.display());
        }
        Command::Import { archive } => {
            let ds = import_archive(&archive, &cfg.paths.dataset)?;
            println!("imported {} samples into {}", ds.samples.len(), cfg.paths.dataset.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
