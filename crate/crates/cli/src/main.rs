//! `mprune`: train a toy model, prune it, measure pruning stability, recover.
//!
//! Exit codes: 0 ok, 2 configuration or I/O, 3 training divergence,
//! 4 pruning would empty a layer, 5 optimizer divergence, 6 strict assertion.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mprune_core::config::Overrides;
use mprune_core::importance::Criterion;
use mprune_core::pipeline::{self, load_config};
use mprune_core::Result;

#[derive(Parser)]
#[command(name = "mprune", version, about = "Structural pruning with MoreauGrad importance")]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input checkpoint
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// plain | smooth | moreau | moreau-gs
    #[arg(long, global = true)]
    criterion: Option<String>,
    #[arg(long, global = true)]
    ratio: Option<f64>,
    /// Turn failed robustness assertions into exit code 6
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured model on the corpus
    Train,
    /// Score groups with the chosen criterion and remove the lowest
    Prune,
    /// Compare importance and prune sets under two weight perturbations
    Robustness,
    /// Fine-tune a pruned checkpoint
    Recover,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    cfg.apply(&Overrides {
        checkpoint: cli.checkpoint,
        out_dir: cli.out,
        seed: cli.seed,
        criterion: cli.criterion.as_deref().map(str::parse::<Criterion>).transpose()?,
        ratio: cli.ratio,
        strict: cli.strict,
    });
    match cli.command {
        Command::Train => {
            let s = pipeline::cmd_train(&cfg)?;
            println!("epoch losses: {:?}", s.epoch_losses);
            println!("final loss: {}", s.epoch_losses.last().unwrap());
            if s.loss_increased {
                println!("warning: loss increased during training");
            }
            println!("wrote {}", s.checkpoint.display());
        }
        Command::Prune => {
            let s = pipeline::cmd_prune(&cfg)?;
            let d = &s.document;
            println!("criterion: {}", d.report.criterion);
            println!("parameters: {} -> {}", d.params_before, d.params_after);
            println!("groups: {} -> {}", d.groups_before, d.groups_after);
            println!("held-out loss: {} -> {}", d.heldout_loss_before, d.heldout_loss_after);
            if let Some(m) = &d.report.moreau {
                if let Some(z) = m.zeroed_groups {
                    println!("eta {}: {z} zeroed groups", m.eta);
                }
            }
            println!("wrote {}", s.checkpoint.display());
            println!("wrote {}", s.report_json.display());
            println!("wrote {}", s.report_csv.display());
        }
        Command::Robustness => {
            let doc = pipeline::cmd_robustness(&cfg)?;
            for r in &doc.reports {
                println!(
                    "{} {}: relative distance {}, jaccard {}, symmetric difference {}",
                    r.criterion, r.comparison, r.relative_distance, r.jaccard, r.symmetric_difference
                );
            }
            for a in &doc.assertions {
                println!("{} {} ({})", if a.passed { "ok  " } else { "FAIL" }, a.name, a.detail);
            }
        }
        Command::Recover => {
            let s = pipeline::cmd_recover(&cfg)?;
            println!("epoch losses: {:?}", s.epoch_losses);
            println!("wrote {}", s.checkpoint.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
