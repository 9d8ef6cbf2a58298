use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use wlmsc_cli::{
    cmd_build_vocab, cmd_correct, cmd_evaluate, cmd_finetune, cmd_pretrain, cmd_simulate, RunConfig, UsageError,
};

#[derive(Parser)]
#[command(name = "wlmsc", version, about = "Sentence correction with a warped language model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed; every stage derives its own from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a vocabulary from clean text.
    BuildVocab {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Generate train/dev/test hypothesis sets through the noisy channel.
    Simulate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// Output directory.
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Pretrain on warped clean text (plain lines or a dataset's golden side).
    Pretrain {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// Continue from this model instead of a fresh initialization.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fine-tune on hypothesis sets with golden transcriptions.
    Finetune {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Correct the top transcription of every record.
    Correct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score corrections; writes a JSON report and a text table.
    Evaluate {
        /// Corrections from `correct`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) if !p.is_file() => Err(UsageError(format!("no such config file: {}", p.display())).into()),
        Some(p) => RunConfig::load(p),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildVocab { input, output, common } => {
            let cfg = load_config(common.config.as_deref())?;
            cmd_build_vocab(&input, &output, &cfg)?;
        }
        Command::Simulate {
            input,
            vocab,
            output,
            common,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            cmd_simulate(&input, &vocab, &output, &cfg, common.seed)?;
        }
        Command::Pretrain {
            input,
            vocab,
            model,
            output,
            common,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let s = cmd_pretrain(&input, &vocab, &output, model.as_deref(), &cfg, common.seed)?;
            println!("pretrained {} steps: token acc {:.3}, op acc {:.3}", s.steps, s.token_acc, s.op_acc);
        }
        Command::Finetune {
            input,
            vocab,
            model,
            output,
            common,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let s = cmd_finetune(&input, &vocab, &model, &output, &cfg, common.seed)?;
            println!("fine-tuned {} steps: token acc {:.3}, op acc {:.3}", s.steps, s.token_acc, s.op_acc);
        }
        Command::Correct {
            input,
            vocab,
            model,
            output,
            common,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            cmd_correct(&input, &vocab, &model, &output, &cfg)?;
        }
        Command::Evaluate {
            input,
            dataset,
            vocab,
            output,
            common,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let report = cmd_evaluate(&input, &dataset, &vocab, &output, &cfg)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
