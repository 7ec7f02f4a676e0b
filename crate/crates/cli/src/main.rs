use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ef_lab::config::ConfigError;
use ef_lab::output::fmt_f64;
use ef_lab::{cmd_run, cmd_selftest, cmd_sweep, exit, load_config, reproduce, ReproOptions, Reproduction};
use ef_lab_core::checks::CheckSettings;

#[derive(Parser)]
#[command(name = "ef-lab", version, about = "Error-compensated compressed SGD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration over its seeds.
    Run {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Sweep the learning-rate grid and report the best step size per rule.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Reproduce one of the built-in experiments and print its verdict.
    Reproduce {
        #[arg(value_enum)]
        name: Reproduction,
        #[arg(long, default_value = "ef-lab-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Also write SVG line plots.
        #[arg(long)]
        svg: bool,
        /// Iteration at which toy_a1 compares the methods.
        #[arg(long, default_value_t = 500)]
        toy_iteration: usize,
    },
    /// Run the invariant suite.
    Selftest {
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value_t = 1.2)]
        slack: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(true) => ExitCode::from(exit::PASS as u8),
        Ok(false) => ExitCode::from(exit::FAIL as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<ConfigError>().is_some();
            ExitCode::from(if usage { exit::USAGE } else { exit::FAIL } as u8)
        }
    }
}

fn load(path: &std::path::Path) -> anyhow::Result<ef_lab::ExperimentConfig> {
    let mut cfg = load_config(path)?;
    cfg.apply_env()?;
    Ok(cfg)
}

fn dispatch(cmd: Command) -> anyhow::Result<bool> {
    match cmd {
        Command::Run { config, jobs } => {
            let cfg = load(&config)?;
            let report = cmd_run(&cfg, jobs)?;
            for s in &report.summaries {
                println!(
                    "seed {}: f_final {}  min ‖∇f‖² {}  ‖e_T‖² {}  δ̂ {}",
                    s.seed,
                    fmt_f64(s.f_final),
                    fmt_f64(s.min_grad_norm_sq),
                    fmt_f64(s.final_err_norm_sq),
                    fmt_f64(s.empirical_delta)
                );
            }
            println!("wrote {}", report.dir.display());
            Ok(true)
        }
        Command::Sweep { config, jobs } => {
            let cfg = load(&config)?;
            let report = cmd_sweep(&cfg, jobs)?;
            println!("{:<16} {:>12} {:>14}", "rule", "gamma", report.metric);
            for r in &report.rows {
                let score = r.score.map(fmt_f64).unwrap_or_else(|| "diverged".into());
                println!("{:<16} {:>12} {:>14}", r.rule, fmt_f64(r.gamma), score);
            }
            for b in report.best() {
                println!("best {}: gamma {}", b.rule, fmt_f64(b.gamma));
            }
            Ok(true)
        }
        Command::Reproduce {
            name,
            out,
            jobs,
            svg,
            toy_iteration,
        } => {
            let opts = ReproOptions {
                jobs,
                svg,
                toy_iteration,
            };
            let v = reproduce(name, &out, &opts)?;
            print!("{v}");
            Ok(v.passed)
        }
        Command::Selftest { seeds, slack } => {
            let settings = CheckSettings {
                seeds,
                slack,
                ..CheckSettings::default()
            };
            let outcomes = cmd_selftest(&settings);
            for o in &outcomes {
                println!("{o}");
            }
            Ok(outcomes.iter().all(|o| o.passed))
        }
    }
}
