use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use contrastforge::commands::{cmd_diagnose, cmd_eval, cmd_generate, cmd_gradcheck, cmd_prepare, cmd_train, cmd_train_base};
use contrastforge::config::RunConfig;
use contrastforge::core::eval::MetricsReport;
use contrastforge::run::RunDir;

#[derive(Parser)]
#[command(name = "contrastforge", version, about = "Contrastive negative generation for multi-modal recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// k-core filter and 80-10-10 split.
    Prepare,
    /// Describe, mask, complete and encode item attributes.
    Generate,
    /// Train the LightGCN base recommender.
    TrainBase,
    /// Train the causal module on top of the base model.
    Train,
    /// Top-K evaluation on the test split.
    Eval,
    /// Per-modality gradient-magnitude trace.
    Diagnose,
    /// Finite-difference gradient suite.
    Gradcheck,
}

fn print_report(label: &str, report: &MetricsReport) {
    let cells: Vec<String> =
        report.metrics.iter().map(|m| format!("R@{}={:.4} N@{}={:.4}", m.k, m.recall, m.k, m.ndcg)).collect();
    println!("{label}: {} ({} users, {} skipped)", cells.join(" "), report.evaluated_users, report.skipped_users);
}

fn run(cli: Cli) -> contrastforge::Result<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let run = RunDir::new(cli.run_dir);
    match cli.command {
        Command::Prepare => {
            let out = cmd_prepare(&config, &run)?;
            let s = out.summary;
            println!(
                "{} users, {} items, {} interactions (density {:.5}); train/val/test {}/{}/{}",
                s.users, s.items, s.interactions, s.density, s.train, s.val, s.test
            );
        }
        Command::Generate => {
            let out = cmd_generate(&config, &run)?;
            for (item, err) in &out.failures {
                eprintln!("failed: {item}: {err}");
            }
            println!(
                "{} items, {} failed, {} backend calls, {} cache hits",
                out.items,
                out.failures.len(),
                out.stats.backend_calls,
                out.stats.cache_hits
            );
        }
        Command::TrainBase => {
            let c = cmd_train_base(&config, &run)?;
            println!(
                "{} epochs, best epoch {} (val Recall@20 {:.4}), {:?}",
                c.record.epochs.len(),
                c.record.best_epoch,
                c.record.best_val_recall,
                c.record.stop_reason
            );
        }
        Command::Train => {
            for o in cmd_train(&config, &run)? {
                println!(
                    "seed {}: {} epochs, best epoch {} (val Recall@20 {:.4})",
                    o.seed,
                    o.record.epochs.len(),
                    o.record.best_epoch,
                    o.record.best_val_recall
                );
            }
        }
        Command::Eval => {
            let out = cmd_eval(&config, &run)?;
            print_report("base", &out.base);
            for (seed, r) in &out.neggen {
                print_report(&format!("neggen seed {seed}"), r);
            }
        }
        Command::Diagnose => {
            let trace = cmd_diagnose(&config, &run)?;
            println!("{} trace values written to {}", trace.len(), run.metrics_dir().join("diagnostics.csv").display());
        }
        Command::Gradcheck => {
            let outcomes = cmd_gradcheck(&config, &run)?;
            let worst = outcomes.iter().map(|o| o.report.max_relative_error).fold(0.0, f64::max);
            println!("{} checks passed, max relative error {worst:.3e}", outcomes.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
