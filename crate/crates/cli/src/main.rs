use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lcwarp::harness::{
    emit_report, generate_dataset, load_examples, load_manifest, read_records, run_reconstruction_sweep,
    ExperimentConfig, ManifestEntry, Method, MetricReport, NnEstimator, Split,
};
use lcwarp::nn::{train, Checkpoint, ModelDims, Seq2SeqModel};
use lcwarp::Error;

#[derive(Parser)]
#[command(name = "lcwarp", version, about = "Level-crossing sampling, bandwidth estimation and warped reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize realizations and write one dataset file.
    Generate {
        #[arg(long)]
        upsilon: f64,
        #[arg(long)]
        levels: usize,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Base experiment config; the flags above override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overwrite an existing dataset file.
        #[arg(long)]
        force: bool,
    },
    /// Train the encoder-decoder on one dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset selection when the directory holds several.
        #[arg(long)]
        upsilon: Option<f64>,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Score estimators and reconstructions on the test splits.
    Sweep {
        /// Comma-separated subset of nn, intensity, oracle, linear (or none).
        #[arg(long, value_delimiter = ',', default_value = "intensity,oracle,linear")]
        methods: Vec<String>,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoints for the nn method, matched to datasets by upsilon.
        #[arg(long, value_delimiter = ',')]
        ckpt: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Restrict the sweep to the config's upsilon and level lists.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-emit CSV and JSON from a sweep directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

const SWEEP_STEM: &str = "sweep";

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Singular(_) | Error::NonFiniteLoss { .. } | Error::RejectionLimit { .. } => 3,
        _ => 2,
    }
}

fn read_config(path: &Path) -> lcwarp::Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn select_entry<'a>(
    entries: &'a [ManifestEntry],
    upsilon: Option<f64>,
    levels: Option<usize>,
) -> lcwarp::Result<&'a ManifestEntry> {
    let hits: Vec<&ManifestEntry> = entries
        .iter()
        .filter(|e| upsilon.is_none_or(|u| u == e.upsilon) && levels.is_none_or(|n| n == e.n_levels))
        .collect();
    match hits.as_slice() {
        [one] => Ok(one),
        [] => Err(Error::Data("no dataset matches the requested upsilon/levels".into())),
        _ => Err(Error::Config(format!(
            "{} datasets match; pass --upsilon and --levels",
            hits.len()
        ))),
    }
}

fn run(cli: Cli) -> lcwarp::Result<()> {
    match cli.command {
        Command::Generate { upsilon, levels, count, seed, out, config, force } => {
            let base = match config {
                Some(p) => read_config(&p)?,
                None => ExperimentConfig::default(),
            };
            let cfg = ExperimentConfig { realizations: count, seed, ..base };
            let entry = generate_dataset(&cfg, upsilon, levels, &out, force)?;
            println!(
                "{}: {} realizations, {} overflow, mean N {:.2}, mean K {:.2}",
                out.join(&entry.file).display(),
                entry.count,
                entry.overflow,
                entry.n_mean,
                entry.k_mean
            );
        }
        Command::Train { config, data, out, upsilon, levels } => {
            let cfg = read_config(&config)?;
            let manifest = load_manifest(&data)?;
            let entry = select_entry(&manifest.entries, upsilon, levels)?;
            let norm = cfg.normalization();
            if entry.config.normalization() != norm {
                return Err(Error::Config(format!(
                    "dataset {} was generated with different horizon/amp_bound/bw_max",
                    entry.file
                )));
            }
            let records = read_records(&data.join(&entry.file))?;
            let train_set = load_examples(&records, &norm, Split::Train)?;
            let val_set = load_examples(&records, &norm, Split::Val)?;
            let m_b = entry.config.synthesis(entry.upsilon).coefficient_count();
            let dims = ModelDims::new(cfg.training.h_enc, m_b, cfg.p);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.training.seed);
            let model = Seq2SeqModel::init(dims, &mut rng)?;
            info!(
                "training on {} ({} train, {} val, {} parameters)",
                entry.file,
                train_set.len(),
                val_set.len(),
                model.param_count()
            );
            let outcome = train(model, None, &train_set, &val_set, &cfg.training)?;
            Checkpoint::new(&outcome.model, Some(outcome.optimizer), norm, cfg.config_hash())
                .with_dataset(entry.upsilon, entry.n_levels)
                .save(&out)?;
            let history = out.with_extension("history.json");
            fs::write(&history, serde_json::to_vec_pretty(&outcome.history)?)?;
            println!(
                "wrote {} (best epoch {}), history in {}",
                out.display(),
                outcome.history.best_epoch,
                history.display()
            );
        }
        Command::Sweep { methods, data, ckpt, out, config } => {
            let methods: Vec<Method> = methods.iter().map(|m| m.parse()).collect::<lcwarp::Result<_>>()?;
            if methods.contains(&Method::Nn) && ckpt.is_empty() {
                return Err(Error::Config("the nn method needs --ckpt".into()));
            }
            let filter = config.map(|p| read_config(&p)).transpose()?;
            let mut estimators = Vec::new();
            for path in &ckpt {
                let (ck, model) = Checkpoint::load(path, None)?;
                estimators.push(NnEstimator {
                    model,
                    norm: ck.normalization,
                    upsilon: ck.upsilon,
                    n_levels: ck.n_levels,
                });
            }
            let report = run_reconstruction_sweep(&data, &methods, &estimators, filter.as_ref())?;
            fs::create_dir_all(&out)?;
            let csv = out.join(format!("{SWEEP_STEM}.csv"));
            emit_report(&report, &csv)?;
            println!("wrote {} ({} rows)", csv.display(), report.rows.len());
        }
        Command::Report { input, out } => {
            let path = input.join(format!("{SWEEP_STEM}.json"));
            let bytes = fs::read(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            let report: MetricReport =
                serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            emit_report(&report, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
