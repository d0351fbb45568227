use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fscil::data::{ProtocolConfig, SynthSpec};
use fscil::pipeline::{cmd_report, cmd_run, cmd_synth, cmd_train, RunConfig, TrainJob};
use fscil::stim::TrainConfig;

#[derive(Parser)]
#[command(name = "fscil", version, about = "Few-shot class-incremental learning on embedding files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clustered dataset.
    Synth {
        #[arg(long)]
        classes: u32,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 20)]
        train_per_class: usize,
        #[arg(long, default_value_t = 20)]
        test_per_class: usize,
        #[arg(long, default_value_t = 0.05)]
        spread: f64,
        #[arg(long, default_value_t = 1.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; a `.csv` extension selects CSV.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Train the toy extractor on base classes and export both feature spaces.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        base_classes: u32,
        /// Training config JSON; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        output_dir: PathBuf,
    },
    /// Run a session stream from a run config.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute reports from prediction dumps.
    Report {
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, short)]
        output_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> fscil::Result<()> {
    match cli.command {
        Command::Synth {
            classes,
            dim,
            train_per_class,
            test_per_class,
            spread,
            separation,
            seed,
            output,
        } => {
            let spec = SynthSpec {
                classes,
                dim,
                train_per_class,
                test_per_class,
                spread,
                separation,
                seed,
            };
            let ds = cmd_synth(&spec, &output)?;
            println!("wrote {} records to {}", ds.len(), output.display());
        }
        Command::Train {
            data,
            base_classes,
            config,
            epochs,
            delta,
            seed,
            output_dir,
        } => {
            let mut cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| fscil::Error::Io { path: p, source: e })?;
                    serde_json::from_str(&text)?
                }
                None => TrainConfig::default(),
            };
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.delta = delta.unwrap_or(cfg.delta);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let job = TrainJob {
                raw_dataset: data,
                base_class_count: base_classes,
                config: cfg,
                output_dir,
            };
            let (out, log) = cmd_train(&job)?;
            if let Some(last) = log.epochs.last() {
                println!("final loss {:.4}, train acc {:.4}", last.loss, last.train_acc);
            }
            println!("wrote {} and {}", out.g.display(), out.g_tilde.display());
        }
        Command::Run {
            config,
            output_dir,
            seed,
        } => {
            let mut cfg = RunConfig::from_json_file(&config)?;
            if output_dir.is_some() {
                cfg.output_dir = output_dir;
            }
            cfg.seed = seed.unwrap_or(cfg.seed);
            let out = cmd_run(&cfg)?;
            print_summary(&out.report);
        }
        Command::Report {
            protocol,
            predictions,
            output_dir,
        } => {
            let protocol = ProtocolConfig::from_json_file(&protocol)?;
            let out = output_dir.unwrap_or_else(|| predictions.clone());
            let report = cmd_report(&protocol, &predictions, &out)?;
            print_summary(&report);
        }
    }
    Ok(())
}

fn print_summary(report: &fscil::metrics::MetricsReport) {
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    println!(
        "overall {:.4}  inc {}  base/inc {}  bicp {}  pd {:.4}",
        report.averages.overall,
        f(report.averages.inc),
        f(report.base_inc),
        f(report.bicp),
        report.pd
    );
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
