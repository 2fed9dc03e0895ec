use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mlad::harness::{self, EvalArgs, ReportFormat};
use mlad::Error;

#[derive(Parser)]
#[command(
    name = "mlad",
    version,
    about = "Multi-label action dependency models and metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a spec file.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model; also writes <out>.history.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Validation dataset scored after every epoch.
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides both model and training seeds.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write final-head scores for every video.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate predictions against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        preds: PathBuf,
        /// Run config whose eval section supplies defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Comma-separated list, e.g. 0,5,20.
        #[arg(long, value_delimiter = ',')]
        tau: Option<Vec<usize>>,
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the attention maps of one video as CSV.
    Attn {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        video: String,
        /// Also emit co-occurrence maps averaged over steps where this class is active.
        #[arg(long)]
        class: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> mlad::Result<()> {
    match cli.command {
        Command::Gen { config, out, seed } => {
            print!("{}", harness::cmd_gen(&config, &out, seed)?);
        }
        Command::Train {
            config,
            data,
            val,
            out,
            seed,
        } => {
            let history = harness::cmd_train(&config, &data, val.as_deref(), &out, seed)?;
            if let Some(last) = history.epochs.last() {
                println!(
                    "epochs {}, final loss {:.6}",
                    history.epochs.len(),
                    last.loss
                );
            } else {
                println!("epochs 0");
            }
        }
        Command::Predict { model, data, out } => {
            let n = harness::cmd_predict(&model, &data, &out)?;
            println!("{n} videos scored");
        }
        Command::Eval {
            gt,
            preds,
            config,
            threshold,
            tau,
            format,
            out,
        } => {
            let format: ReportFormat = format.parse()?;
            let report = harness::cmd_eval(EvalArgs {
                gt: &gt,
                preds: &preds,
                config: config.as_deref(),
                threshold,
                taus: tau,
                format,
                out: &out,
            })?;
            match &report.f_map {
                Some(f) => println!("f-mAP {:.4}", f.mean),
                None => println!("f-mAP n/a"),
            }
        }
        Command::Attn {
            model,
            data,
            video,
            class,
            out,
        } => {
            let rows = harness::cmd_attn(&model, &data, &video, class.as_deref(), &out)?;
            println!("{rows} attention rows");
        }
    }
    Ok(())
}

fn error_line(e: &Error) -> String {
    serde_json::json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!(
                "{}",
                serde_json::json!({ "error": "usage", "message": first })
            );
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
