use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use promptseg::experiment::{run_extract, run_pretrain, run_report, run_synth, run_train_eval, ExperimentConfig};
use promptseg::{Error, Result};

/// Contrastive video-encoder pre-training and gesture segmentation.
#[derive(Parser, Debug)]
#[command(name = "promptseg", version)]
struct Cli {
    #[command(subcommand)]
    stage: Stage,
}

#[derive(Subcommand, Debug)]
enum Stage {
    /// Generate the synthetic corpus.
    Synth(Common),
    /// Pre-train the encoders contrastively.
    Pretrain(Common),
    /// Write frame-wise features of every video.
    Extract(Common),
    /// Train the recognizer per fold and score the held-out videos.
    TrainEval(Common),
    /// Collect the mean rows of several evaluations.
    Report(Common),
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed; required by pretrain and train-eval.
    #[arg(long)]
    seed: Option<u64>,
    /// Further `--key value` overrides of configuration keys.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

fn overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected `--key value`, got {arg:?}")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| Error::Config(format!("`--{key}` needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        pairs.push((key.replace('-', "_"), value));
    }
    Ok(pairs)
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &common.config {
        let text = promptseg::dataset::io::read_text(path)?;
        cfg.apply_text(&text)?;
    }
    for (key, value) in overrides(&common.overrides)? {
        cfg.set(&key, &value)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

impl Stage {
    fn common(&self) -> &Common {
        match self {
            Stage::Synth(c) | Stage::Pretrain(c) | Stage::Extract(c) | Stage::TrainEval(c) | Stage::Report(c) => c,
        }
    }
}

fn run(stage: &Stage) -> Result<()> {
    let common = stage.common();
    let cfg = resolve(common)?;
    let out: &Path = &common.out;
    match stage {
        Stage::Synth(_) => {
            let videos = run_synth(&cfg, out)?;
            let frames: usize = videos.iter().map(|v| v.len()).sum();
            println!("wrote {} videos, {frames} frames to {}", videos.len(), cfg.corpus_dir(out).display());
        }
        Stage::Pretrain(_) => {
            let log = run_pretrain(&cfg, out)?;
            match (log.first(), log.last()) {
                (Some(a), Some(b)) => {
                    println!("epoch 1 loss {:.6}, epoch {} loss {:.6}", a.loss.total, b.epoch, b.loss.total)
                }
                _ => println!("saved the untrained initialization"),
            }
            println!("checkpoint in {}", cfg.checkpoint_dir(out).display());
        }
        Stage::Extract(_) => {
            let n = run_extract(&cfg, out)?;
            println!("wrote features of {n} videos to {}", cfg.features_dir(out).display());
        }
        Stage::TrainEval(_) => print!("{}", run_train_eval(&cfg, out)?.csv()),
        Stage::Report(_) => print!("{}", run_report(&cfg, out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.stage) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
