//! `run`, `sweep` and `selftest`.

use std::path::PathBuf;

use anyhow::Context;
use ef_lab_core::checks::{self, CheckOutcome, CheckSettings};
use ef_lab_core::optimizers::{run, OptimizerSpec, RunConfig};
use ef_lab_core::{summarize, Error as CoreError, Oracle, RunSummary, Trace};
use rayon::prelude::*;

use crate::config::{rule_from_name, ExperimentConfig};
use crate::output::{fmt_f64, summary_csv, trace_csv, write_atomic, ColumnTable};

/// Maps `f` over `items` on at most `jobs` threads, keeping input order.
pub fn par_map<T, R, F>(jobs: usize, items: Vec<T>, f: F) -> anyhow::Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building thread pool")?;
    Ok(pool.install(|| items.into_par_iter().map(f).collect()))
}

fn run_config(cfg: &ExperimentConfig, seed: u64) -> RunConfig {
    RunConfig {
        steps: cfg.steps,
        seed,
        full_batch: cfg.full_batch,
        record: cfg.record,
    }
}

fn run_all_seeds(
    cfg: &ExperimentConfig,
    spec: &OptimizerSpec,
    oracle: &Oracle,
    jobs: usize,
) -> anyhow::Result<Vec<Result<Trace, CoreError>>> {
    par_map(jobs, cfg.seeds.clone(), |seed| {
        let x0 = cfg.x0.resolve(oracle, seed);
        run(spec, oracle, &x0, &run_config(cfg, seed))
    })
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub summaries: Vec<RunSummary>,
    pub trace_files: Vec<PathBuf>,
}

pub fn trace_file_name(seed: u64) -> String {
    format!("trace_seed{seed}.csv")
}

/// One trace CSV per seed, `summary.csv` and `meta.txt` under
/// `output.dir`.
pub fn cmd_run(cfg: &ExperimentConfig, jobs: usize) -> anyhow::Result<RunReport> {
    let oracle = cfg.build_oracle()?;
    let traces = run_all_seeds(cfg, &cfg.optimizer, &oracle, jobs)?;
    let dir = cfg.output_dir.clone();
    let mut summaries = Vec::new();
    let mut trace_files = Vec::new();
    for (seed, trace) in cfg.seeds.iter().zip(traces) {
        let trace = trace.with_context(|| format!("seed {seed}"))?;
        let path = dir.join(trace_file_name(*seed));
        write_atomic(&path, &trace_csv(&trace.rows)).with_context(|| format!("writing {}", path.display()))?;
        trace_files.push(path);
        summaries.push(summarize(&trace, &oracle));
    }
    write_atomic(&dir.join("summary.csv"), &summary_csv(&summaries))?;
    write_atomic(&dir.join("meta.txt"), meta_text(cfg).as_bytes())?;
    Ok(RunReport {
        dir,
        summaries,
        trace_files,
    })
}

pub fn meta_text(cfg: &ExperimentConfig) -> String {
    format!(
        "ef-lab {}\noracle: {}\noptimizer: {} gamma={} projection={} sign_zero={}\nbits_per_step: {}\n\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.oracle,
        cfg.optimizer.rule,
        cfg.optimizer.gamma,
        cfg.optimizer.projection,
        cfg.optimizer.sign_zero,
        cfg.build_oracle()
            .map(|o| cfg.optimizer.bits_per_step(o.dim()).to_string())
            .unwrap_or_default(),
        cfg.canonical()
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rule: String,
    pub gamma: f64,
    /// Seed-mean final test loss, or final training loss without a test
    /// split; `None` when a run diverged.
    pub score: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub dir: PathBuf,
    pub metric: &'static str,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Best (smallest score) grid point per rule, in rule order.
    pub fn best(&self) -> Vec<&SweepRow> {
        let mut out: Vec<&SweepRow> = Vec::new();
        for row in &self.rows {
            let Some(score) = row.score else { continue };
            match out.iter_mut().find(|b| b.rule == row.rule) {
                Some(b) if b.score.is_some_and(|s| score < s) => *b = row,
                Some(_) => {}
                None => out.push(row),
            }
        }
        out
    }
}

pub fn cmd_sweep(cfg: &ExperimentConfig, jobs: usize) -> anyhow::Result<SweepReport> {
    let oracle = cfg.build_oracle()?;
    let use_test = oracle.test_data().is_some();
    let rules = if cfg.sweep.rules.is_empty() {
        vec![cfg.optimizer.rule.name().to_string()]
    } else {
        cfg.sweep.rules.clone()
    };
    let grid = cfg.sweep.grid.values();
    let mut rows = Vec::new();
    for name in &rules {
        let rule = rule_from_name(name, cfg.compressor, cfg.beta).map_err(anyhow::Error::msg)?;
        for &gamma in &grid {
            let spec = OptimizerSpec::new(rule, gamma)
                .with_projection(cfg.optimizer.projection)
                .with_sign_zero(cfg.optimizer.sign_zero);
            let traces = run_all_seeds(cfg, &spec, &oracle, jobs)?;
            let mut total = 0.0;
            let mut diverged = false;
            for t in traces {
                match t {
                    Ok(tr) => {
                        let x = &tr.final_state.x;
                        total += if use_test {
                            oracle.test_loss(x).unwrap_or(f64::NAN)
                        } else {
                            oracle.loss(x)
                        };
                    }
                    Err(CoreError::Diverged { .. }) => diverged = true,
                    Err(e) => return Err(e.into()),
                }
            }
            let score = total / cfg.seeds.len() as f64;
            rows.push(SweepRow {
                rule: name.clone(),
                gamma,
                score: (!diverged && score.is_finite()).then_some(score),
            });
        }
    }
    let mut table = ColumnTable::new();
    table
        .push_display("rule", &rows.iter().map(|r| r.rule.clone()).collect::<Vec<_>>())
        .push_display("gamma", &rows.iter().map(|r| fmt_f64(r.gamma)).collect::<Vec<_>>())
        .push_display(
            "score",
            &rows.iter().map(|r| r.score.map(fmt_f64).unwrap_or_default()).collect::<Vec<_>>(),
        )
        .push_display(
            "status",
            &rows
                .iter()
                .map(|r| if r.score.is_some() { "ok" } else { "diverged" })
                .collect::<Vec<_>>(),
        );
    let dir = cfg.output_dir.clone();
    write_atomic(&dir.join("sweep.csv"), &table.to_csv())?;
    write_atomic(&dir.join("meta.txt"), meta_text(cfg).as_bytes())?;
    Ok(SweepReport {
        dir,
        metric: if use_test { "final test loss" } else { "final train loss" },
        rows,
    })
}

pub fn cmd_selftest(settings: &CheckSettings) -> Vec<CheckOutcome> {
    checks::run_all(settings)
}
