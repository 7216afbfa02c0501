use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use radiocon_core::pipeline::{
    cmd_attention_map, cmd_evaluate, cmd_extract_features, cmd_finetune, cmd_pretrain, cmd_synth, PipelineError,
    TrainConfig,
};

#[derive(Parser)]
#[command(name = "radiocon", version, about = "Radiomics-guided contrastive pretraining for chest X-ray classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic lesion dataset (images/ and manifest.csv).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
    },
    /// Export the 102 radiomics features of every sample as CSV.
    ExtractFeatures {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Contrastive pretraining of the image and radiomics encoders.
    Pretrain {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Supervised fine-tuning with a classification head.
    Finetune {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Pretrained checkpoint to start from.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Start from random weights instead of a pretrained checkpoint.
        #[arg(long)]
        from_scratch: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy, F1 and AUC on the test split, as JSON.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attention heat map of one image as PGM, plus an image|map composite.
    AttentionMap {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    /// CSV with header patientId,x,y,width,height,Target.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding <patientId>.png or .pgm.
    #[arg(long)]
    images: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// key=value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    resolution: Option<usize>,
}

impl TrainArgs {
    fn resolve(&self) -> Result<TrainConfig, PipelineError> {
        let mut config = match &self.config {
            Some(path) => TrainConfig::from_file(path)?,
            None => TrainConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            config.max_epochs = epochs;
        }
        if let Some(resolution) = self.resolution {
            config.resolution = resolution;
        }
        config.validate()?;
        Ok(config)
    }
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Synth { out, n, seed, resolution } => {
            let samples = cmd_synth(&out, n, seed, resolution)?;
            println!("wrote {} samples to {}", samples.len(), out.display());
        }
        Command::ExtractFeatures { data, train, out } => {
            let config = train.resolve()?;
            let rows = cmd_extract_features(&data.manifest, &data.images, &out, config.bins)?;
            println!("wrote {rows} feature rows to {}", out.display());
        }
        Command::Pretrain { data, train, out } => {
            let config = train.resolve()?;
            let ckpt = cmd_pretrain(&data.manifest, &data.images, &config, &out)?;
            report_losses("pretrain", &ckpt.history.pretrain_loss, &out);
        }
        Command::Finetune { data, train, ckpt, from_scratch, out } => {
            let config = train.resolve()?;
            let trained = cmd_finetune(&data.manifest, &data.images, ckpt.as_deref(), &config, &out, from_scratch)?;
            report_losses("finetune", &trained.history.finetune_loss, &out);
        }
        Command::Evaluate { data, ckpt, out } => {
            let report = cmd_evaluate(&data.manifest, &data.images, &ckpt, &out)?;
            let auc = report.auc.map_or("null".to_string(), |a| format!("{a:.4}"));
            println!("accuracy {:.4} f1 {:.4} auc {auc} ({} test samples)", report.accuracy, report.f1, report.n_samples);
        }
        Command::AttentionMap { ckpt, image, out } => {
            let composite = cmd_attention_map(&ckpt, &image, &out)?;
            println!("wrote {} and {}", out.display(), composite.display());
        }
    }
    Ok(())
}

fn report_losses(phase: &str, losses: &[f64], out: &Path) {
    if let Some(last) = losses.last() {
        println!("{phase}: {} epochs, final loss {last:.6}, checkpoint {}", losses.len(), out.display());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
