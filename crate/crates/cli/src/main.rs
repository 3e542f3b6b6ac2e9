//! `orthaug`: generate vehicle data, train augmented models, evaluate them
//! and sweep the orthogonality weight.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orthaug::artifact::{fingerprint, ModelArtifact};
use orthaug::data::{load_csv, save_csv, Dataset};
use orthaug::experiment::{
    evaluate, generate, run_training, select_by_validation, sweep_beta, SplitData, SweepRow,
    TrainingMode,
};
use orthaug::{Error, Result};
use serde::Serialize;

use config::FileConfig;

#[derive(Parser)]
#[command(name = "orthaug", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the vehicle protocol and write train/val/test CSVs.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model and write its artifact and history.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "co-estimate-orth")]
        mode: String,
        /// Overrides `beta` from the config.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Test NRMS of a model and of its baseline with the same parameters.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Train the orthogonal mode for several values of beta.
    SweepBeta {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated; overrides `betas` from the config.
        #[arg(long, value_delimiter = ',')]
        beta: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Training SNR in dB; selects the matching noisy files (`generate`
    /// writes only this level).
    #[arg(long)]
    snr: Option<f64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    snr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    betas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    config: &'a FileConfig,
}

impl<'a> Manifest<'a> {
    fn new(command: &'a str, config: &'a FileConfig, snr_db: Option<f64>) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            snr_db,
            mode: None,
            beta: None,
            betas: None,
            data: None,
            model: None,
            config,
        }
    }

    fn write(&self, out: &Path) -> Result<()> {
        let text = toml::to_string(self).expect("manifest serializes");
        write_file(&out.join("manifest.toml"), &text)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "invalid-input" => 10,
        "parse" => 11,
        "io" => 12,
        "incompatible" => 13,
        "insufficient-data" => 14,
        "degenerate-channel" => 15,
        "numerical" => 16,
        "simulation-diverged" => 17,
        _ => 1,
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

fn prepare(common: &Common) -> Result<FileConfig> {
    let mut cfg = match &common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    std::fs::create_dir_all(&common.out).map_err(|source| Error::Io {
        path: common.out.clone(),
        source,
    })?;
    Ok(cfg)
}

fn snr_tag(snr: Option<f64>) -> String {
    snr.map_or(String::new(), |s| format!("_snr{s}"))
}

fn load_split(dir: &Path, snr: Option<f64>) -> Result<SplitData> {
    let tag = snr_tag(snr);
    Ok(SplitData {
        train: load_csv(&dir.join(format!("train{tag}.csv")))?,
        val: load_csv(&dir.join(format!("val{tag}.csv")))?,
        test: load_csv(&dir.join("test.csv"))?,
    })
}

fn cmd_generate(common: &Common) -> Result<()> {
    let cfg = prepare(common)?;
    let exp = cfg.experiment()?;
    let levels: Vec<Option<f64>> = match common.snr {
        Some(s) => vec![None, Some(s)],
        None => std::iter::once(None)
            .chain(exp.snr_db.iter().copied().map(Some))
            .collect(),
    };
    for snr in levels {
        let split = generate(&exp, snr)?;
        let tag = snr_tag(snr);
        save_csv(&split.train, &common.out.join(format!("train{tag}.csv")))?;
        save_csv(&split.val, &common.out.join(format!("val{tag}.csv")))?;
        if snr.is_none() {
            save_csv(&split.test, &common.out.join("test.csv"))?;
        }
        println!(
            "{}: train {} val {} test {}",
            snr.map_or("noiseless".to_string(), |s| format!("{s} dB")),
            split.train.len(),
            split.val.len(),
            split.test.len()
        );
    }
    Manifest::new("generate", &cfg, common.snr).write(&common.out)
}

fn cmd_train(common: &Common, data: &Path, mode: &str, beta: Option<f64>) -> Result<()> {
    let mut cfg = prepare(common)?;
    let mode = TrainingMode::parse(mode)
        .ok_or_else(|| Error::InvalidInput(format!("unknown mode `{mode}`")))?;
    if let Some(b) = beta {
        cfg.beta = b;
    }
    let exp = cfg.experiment()?;
    let split = load_split(data, common.snr)?;
    let out = run_training(&exp, &split, mode, cfg.beta, cfg.seed)?;
    let history_path = common.out.join("history.csv");
    out.history.write_csv(&history_path)?;

    let mut manifest = Manifest::new("train", &cfg, common.snr);
    manifest.mode = Some(mode.as_str());
    manifest.beta = Some(cfg.beta);
    manifest.data = Some(data.display().to_string());
    let manifest_text = toml::to_string(&manifest).expect("manifest serializes");
    let mut artifact = ModelArtifact::new(out.model, fingerprint(&manifest_text));
    artifact.history = Some("history.csv".into());
    artifact.save(&common.out.join("model.txt"))?;
    manifest.write(&common.out)?;

    let best = out.history.best();
    println!(
        "mode {} best epoch {} val {:.6e} stop {:?}",
        mode.as_str(),
        out.history.best_epoch,
        best.val_loss,
        out.history.stop_reason
    );
    Ok(())
}

fn cmd_eval(common: &Common, data: &Path, model: &Path) -> Result<()> {
    let cfg = prepare(common)?;
    let artifact = ModelArtifact::load(model)?;
    let test: Dataset = load_csv(&data.join("test.csv"))?;
    artifact.check_data(&test)?;
    let e = evaluate(&artifact.model, &test)?;
    let aug = e.augmented.to_text("augmented");
    let base = e.baseline.to_text("baseline-theta-hat");
    write_file(&common.out.join("nrms_augmented.txt"), &aug)?;
    write_file(&common.out.join("nrms_baseline.txt"), &base)?;
    let mut manifest = Manifest::new("eval", &cfg, common.snr);
    manifest.data = Some(data.display().to_string());
    manifest.model = Some(model.display().to_string());
    manifest.write(&common.out)?;
    println!(
        "augmented {:.3}%  baseline(theta_hat) {:.3}%",
        e.augmented.mean, e.baseline.mean
    );
    Ok(())
}

fn cmd_sweep(common: &Common, data: &Path, betas: Option<Vec<f64>>) -> Result<()> {
    let mut cfg = prepare(common)?;
    if let Some(b) = betas {
        cfg.betas = b;
    }
    let exp = cfg.experiment()?;
    let split = load_split(data, common.snr)?;
    let rows = sweep_beta(&exp, &split, &cfg.betas, cfg.seed)?;
    let mut csv = String::from(SweepRow::csv_header());
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.to_csv());
        csv.push('\n');
    }
    write_file(&common.out.join("sweep.csv"), &csv)?;
    let mut manifest = Manifest::new("sweep-beta", &cfg, common.snr);
    manifest.betas = Some(cfg.betas.clone());
    manifest.data = Some(data.display().to_string());
    manifest.write(&common.out)?;
    print!("{csv}");
    if let Some(best) = select_by_validation(&rows) {
        println!("selected beta {:e}", best.beta);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { common } => cmd_generate(common),
        Command::Train {
            common,
            data,
            mode,
            beta,
        } => cmd_train(common, data, mode, *beta),
        Command::Eval {
            common,
            data,
            model,
        } => cmd_eval(common, data, model),
        Command::SweepBeta { common, data, beta } => cmd_sweep(common, data, beta.clone()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
