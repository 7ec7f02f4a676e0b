//! Desk-scale reproductions. Every reproduction first writes its CSVs and
//! then computes the verdict by reading them back, so a verdict can be
//! re-checked from the files alone with [`verdict`].

use std::fmt;
use std::path::Path;

use anyhow::{ensure, Context};
use ef_lab_core::compressors::{CompressorSpec, SignZero};
use ef_lab_core::linalg::{norm, sub};
use ef_lab_core::optimizers::{run, run_observed, OptimizerSpec, Projection, RunConfig, Rule};
use ef_lab_core::oracles::distance_to_line;
use ef_lab_core::{Oracle, OracleKind, Vector};

use crate::commands::par_map;
use crate::config::LrGrid;
use crate::output::{fmt_f64, trace_csv, write_atomic, ColumnTable, Table};
use crate::svg::{LinePlot, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Reproduction {
    Ce1,
    Ce2,
    Ce3,
    Theorem1,
    ToyA1,
    Fig2Span,
}

impl Reproduction {
    pub const ALL: [Reproduction; 6] = [
        Self::Ce1,
        Self::Ce2,
        Self::Ce3,
        Self::Theorem1,
        Self::ToyA1,
        Self::Fig2Span,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ce1 => "ce1",
            Self::Ce2 => "ce2",
            Self::Ce3 => "ce3",
            Self::Theorem1 => "theorem1",
            Self::ToyA1 => "toy_a1",
            Self::Fig2Span => "fig2_span",
        }
    }
}

impl fmt::Display for Reproduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct ReproOptions {
    pub jobs: usize,
    pub svg: bool,
    /// Iteration at which the toy_a1 methods are compared.
    pub toy_iteration: usize,
}

impl Default for ReproOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            svg: false,
            toy_iteration: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub name: &'static str,
    pub passed: bool,
    pub lines: Vec<String>,
}

impl Verdict {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            passed: true,
            lines: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(format!("[{}] {line}", if ok { "ok" } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.lines.push(format!("     {line}"));
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", if self.passed { "PASS" } else { "FAIL" }, self.name)?;
        for l in &self.lines {
            writeln!(f, "  {l}")?;
        }
        Ok(())
    }
}

/// Runs a reproduction into `out/<name>/` and returns its verdict.
pub fn reproduce(which: Reproduction, out: &Path, opts: &ReproOptions) -> anyhow::Result<Verdict> {
    let dir = out.join(which.name());
    match which {
        Reproduction::Ce1 => gen_ce1(&dir, opts),
        Reproduction::Ce2 => gen_ce2(&dir, opts),
        Reproduction::Ce3 => gen_ce3(&dir, opts),
        Reproduction::Theorem1 => gen_theorem1(&dir, opts),
        Reproduction::ToyA1 => gen_toy_a1(&dir, opts),
        Reproduction::Fig2Span => gen_fig2(&dir, opts),
    }
    .with_context(|| format!("generating {which}"))?;
    let v = verdict(which, &dir)?;
    write_atomic(&dir.join("verdict.txt"), v.to_string().as_bytes())?;
    Ok(v)
}

/// Recomputes a verdict from the CSVs in `dir`.
pub fn verdict(which: Reproduction, dir: &Path) -> anyhow::Result<Verdict> {
    match which {
        Reproduction::Ce1 => verdict_ce1(dir),
        Reproduction::Ce2 => verdict_ce2(dir),
        Reproduction::Ce3 => verdict_ce3(dir),
        Reproduction::Theorem1 => verdict_theorem1(dir),
        Reproduction::ToyA1 => verdict_toy_a1(dir),
        Reproduction::Fig2Span => verdict_fig2(dir),
    }
}

fn grid() -> Vec<f64> {
    LrGrid::default().values()
}

fn steps_axis(len: usize) -> Vec<usize> {
    (0..len).collect()
}

fn as_f64(ts: &[usize]) -> Vec<f64> {
    ts.iter().map(|&t| t as f64).collect()
}

/// `f(x_t)` for `t = 0..=steps`.
fn loss_path(spec: &OptimizerSpec, oracle: &Oracle, x0: &Vector, steps: usize, seed: u64) -> anyhow::Result<Vec<f64>> {
    let mut f = Vec::with_capacity(steps + 1);
    f.push(oracle.loss(x0));
    let mut cfg = RunConfig::new(steps, seed);
    cfg.record.every = steps;
    run_observed(spec, oracle, x0, &cfg, |ev| f.push(oracle.loss(&ev.state.x)))?;
    Ok(f)
}

struct SeedStats {
    mean: Vec<f64>,
    sd: Vec<f64>,
    se: Vec<f64>,
    min: Vec<f64>,
}

/// Per-index statistics across seeds.
fn seed_stats(paths: &[Vec<f64>]) -> SeedStats {
    let s = paths.len() as f64;
    let len = paths[0].len();
    let mut st = SeedStats {
        mean: vec![0.0; len],
        sd: vec![0.0; len],
        se: vec![0.0; len],
        min: vec![f64::INFINITY; len],
    };
    for t in 0..len {
        let mean = paths.iter().map(|p| p[t]).sum::<f64>() / s;
        let var = if paths.len() > 1 {
            paths.iter().map(|p| (p[t] - mean).powi(2)).sum::<f64>() / (s - 1.0)
        } else {
            0.0
        };
        st.mean[t] = mean;
        st.sd[t] = var.sqrt();
        st.se[t] = (var / s).sqrt();
        st.min[t] = paths.iter().map(|p| p[t]).fold(f64::INFINITY, f64::min);
    }
    st
}

fn increments(paths: &[Vec<f64>]) -> Vec<Vec<f64>> {
    paths
        .iter()
        .map(|p| {
            std::iter::once(0.0)
                .chain(p.windows(2).map(|w| w[1] - w[0]))
                .collect()
        })
        .collect()
}

fn write_svg(dir: &Path, name: &str, plot: LinePlot) -> anyhow::Result<()> {
    write_atomic(&dir.join(name), plot.render().as_bytes())?;
    Ok(())
}

// ----------------------------------------------------------------------- ce1

const CE1_GAMMA: f64 = 0.01;
const CE1_STEPS: usize = 10_000;
const CE1_SEEDS: u64 = 100;
const CE1_DRIFT_WINDOW: usize = 200;

fn gen_ce1(dir: &Path, opts: &ReproOptions) -> anyhow::Result<()> {
    let oracle = Oracle::build(&OracleKind::Ce1, 0)?;
    let x0 = oracle.default_x0().clone();
    let boxed = Projection::Box { lo: -1.0, hi: 1.0 };
    let mut table = ColumnTable::new();
    table.push_display("t", &steps_axis(CE1_STEPS + 1));
    let mut plot = LinePlot::new("ce1: seed-mean f(x_t)", "t", "f");
    for (name, rule) in [("sign_sgd", Rule::SignSgd), ("sgd", Rule::Sgd)] {
        let spec = OptimizerSpec::new(rule, CE1_GAMMA).with_projection(boxed);
        let paths = par_map(opts.jobs, (0..CE1_SEEDS).collect(), |seed| {
            loss_path(&spec, &oracle, &x0, CE1_STEPS, seed)
        })?
        .into_iter()
        .collect::<anyhow::Result<Vec<_>>>()?;
        let f = seed_stats(&paths);
        let df = seed_stats(&increments(&paths));
        table
            .push_f64(format!("{name}_mean_f"), &f.mean)
            .push_f64(format!("{name}_se_f"), &f.se)
            .push_f64(format!("{name}_mean_df"), &df.mean)
            .push_f64(format!("{name}_se_df"), &df.se);
        plot = plot.with(Series::new(name, &as_f64(&steps_axis(CE1_STEPS + 1)), &f.mean));
    }
    write_atomic(&dir.join("series.csv"), &table.to_csv())?;
    if opts.svg {
        write_svg(dir, "series.svg", plot)?;
    }
    Ok(())
}

fn verdict_ce1(dir: &Path) -> anyhow::Result<Verdict> {
    let t = Table::read(&dir.join("series.csv"))?;
    let mut v = Verdict::new("ce1");
    let mean_df = t.column("sign_sgd_mean_df")?;
    let se_df = t.column("sign_sgd_se_df")?;
    let mean_f = t.column("sign_sgd_mean_f")?;
    ensure!(mean_f.len() > CE1_DRIFT_WINDOW, "series too short");
    let drops = (1..=CE1_DRIFT_WINDOW)
        .filter(|&s| mean_df[s] < -3.0 * se_df[s])
        .count();
    v.check(
        drops == 0,
        format!("signSGD seed-mean f nondecreasing over t ≤ {CE1_DRIFT_WINDOW} within 3 SE ({drops} drops)"),
    );
    let drift = (mean_f[CE1_DRIFT_WINDOW] - mean_f[0]) / CE1_DRIFT_WINDOW as f64;
    v.note(format!(
        "signSGD mean drift per step {} (expected γ/8 = {})",
        fmt_f64(drift),
        fmt_f64(CE1_GAMMA / 8.0)
    ));
    let sgd = t.column("sgd_mean_f")?;
    let last = *sgd.last().expect("nonempty");
    v.check(last < -0.2, format!("SGD final seed-mean f = {} < -0.2", fmt_f64(last)));
    Ok(v)
}

// ----------------------------------------------------------------------- ce2

const CE2_STEPS: usize = 10_000;
const CE2_EF_GAMMA: f64 = 0.1;

fn iterate_table(spec: &OptimizerSpec, oracle: &Oracle, steps: usize) -> anyhow::Result<ColumnTable> {
    let x0 = oracle.default_x0().clone();
    let (mut x1, mut x2, mut f) = (vec![x0[0]], vec![x0[1]], vec![oracle.loss(&x0)]);
    let mut cfg = RunConfig::new(steps, 0);
    cfg.full_batch = true;
    cfg.record.every = steps;
    run_observed(spec, oracle, &x0, &cfg, |ev| {
        x1.push(ev.state.x[0]);
        x2.push(ev.state.x[1]);
        f.push(oracle.loss(&ev.state.x));
    })?;
    let mut table = ColumnTable::new();
    table
        .push_display("t", &steps_axis(steps + 1))
        .push_f64("x1", &x1)
        .push_f64("x2", &x2)
        .push_f64("f_val", &f);
    Ok(table)
}

fn gen_ce2(dir: &Path, opts: &ReproOptions) -> anyhow::Result<()> {
    let oracle = Oracle::build(&OracleKind::Ce2 { eps: 0.5 }, 0)?;
    let mut runs = ColumnTable::new();
    let mut files = Vec::new();
    let mut rules = Vec::new();
    let mut gammas = Vec::new();
    for (j, gamma) in grid().into_iter().enumerate() {
        let spec = OptimizerSpec::new(Rule::SignSgd, gamma);
        let file = format!("sign_sgd_g{j}.csv");
        write_atomic(&dir.join(&file), &iterate_table(&spec, &oracle, CE2_STEPS)?.to_csv())?;
        files.push(file);
        rules.push("sign_sgd");
        gammas.push(gamma);
    }
    let ef = OptimizerSpec::ec_sgd(CompressorSpec::sign_scaled(), CE2_EF_GAMMA);
    let ef_table = iterate_table(&ef, &oracle, CE2_STEPS)?;
    write_atomic(&dir.join("ec_sgd.csv"), &ef_table.to_csv())?;
    files.push("ec_sgd.csv".into());
    rules.push("ec_sgd");
    gammas.push(CE2_EF_GAMMA);
    runs.push_display("file", &files)
        .push_display("rule", &rules)
        .push_f64("gamma", &gammas);
    write_atomic(&dir.join("runs.csv"), &runs.to_csv())?;
    if opts.svg {
        let ef = Table::read(&dir.join("ec_sgd.csv"))?;
        let sign = Table::read(&dir.join("sign_sgd_g4.csv"))?;
        let plot = LinePlot::new("ce2: f(x_t)", "t", "f")
            .log_y()
            .with(Series::new("ec_sgd γ=0.1", &ef.column("t")?, &ef.column("f_val")?))
            .with(Series::new("sign_sgd γ=0.01", &sign.column("t")?, &sign.column("f_val")?));
        write_svg(dir, "f.svg", plot)?;
    }
    Ok(())
}

fn verdict_ce2(dir: &Path) -> anyhow::Result<Verdict> {
    let runs = Table::read(&dir.join("runs.csv"))?;
    let mut v = Verdict::new("ce2");
    let files = runs.strings("file")?;
    let rules = runs.strings("rule")?;
    let gammas = runs.column("gamma")?;
    for ((file, rule), gamma) in files.iter().zip(&rules).zip(&gammas) {
        let t = Table::read(&dir.join(file))?;
        let (x1, x2, f) = (t.column("x1")?, t.column("x2")?, t.column("f_val")?);
        let f0 = f[0];
        if rule == "sign_sgd" {
            let off_line = x1.iter().zip(&x2).filter(|(a, b)| *a + *b != 2.0).count();
            let below = f.iter().filter(|&&fv| fv < f0).count();
            v.check(
                off_line == 0 && below == 0 && f0 == 1.0,
                format!(
                    "signSGD γ={}: x₁+x₂ = 2 exactly at all {} iterates ({off_line} off), f ≥ f(x₀) = {} ({below} below)",
                    fmt_f64(*gamma),
                    f.len(),
                    fmt_f64(f0)
                ),
            );
        } else {
            let min = f.iter().cloned().fold(f64::INFINITY, f64::min);
            let first = f.iter().position(|&fv| fv < 0.01 * f0);
            v.check(
                first.is_some(),
                format!(
                    "EF-signSGD γ={}: min f = {} vs target < {} (0.01·f(x₀)){}",
                    fmt_f64(*gamma),
                    fmt_f64(min),
                    fmt_f64(0.01 * f0),
                    first.map(|t| format!(", first at t={t}")).unwrap_or_default()
                ),
            );
            let tail = &f[f.len().saturating_sub(12)..];
            v.note(format!(
                "EF-signSGD final iterates f: {}",
                tail.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
            ));
        }
    }
    Ok(v)
}

// ----------------------------------------------------------------------- ce3

const CE3_STEPS: usize = 10_000;
const CE3_SEEDS: u64 = 20;

fn gen_ce3(dir: &Path, opts: &ReproOptions) -> anyhow::Result<()> {
    let oracle = Oracle::build(&OracleKind::Ce3 { eps: 0.5 }, 0)?;
    let x0 = oracle.default_x0().clone();
    let ts = steps_axis(CE3_STEPS + 1);
    let mut runs = ColumnTable::new();
    let (mut files, mut rules, mut gammas) = (Vec::new(), Vec::new(), Vec::new());
    let mut plot = LinePlot::new("ce3: seed-mean f(x_t)", "t", "f").log_y();
    let mut specs: Vec<(String, &str, OptimizerSpec)> = grid()
        .into_iter()
        .enumerate()
        .map(|(j, g)| (format!("sign_sgd_g{j}.csv"), "sign_sgd", OptimizerSpec::new(Rule::SignSgd, g)))
        .collect();
    let ec_gamma = 1.0 / ((CE3_STEPS + 1) as f64).sqrt();
    specs.push((
        "ec_sgd.csv".into(),
        "ec_sgd",
        OptimizerSpec::ec_sgd(CompressorSpec::sign_scaled(), ec_gamma),
    ));
    for (file, rule, spec) in &specs {
        let paths = par_map(opts.jobs, (0..CE3_SEEDS).collect(), |seed| {
            loss_path(spec, &oracle, &x0, CE3_STEPS, seed)
        })?
        .into_iter()
        .collect::<anyhow::Result<Vec<_>>>()?;
        let st = seed_stats(&paths);
        let mut table = ColumnTable::new();
        table
            .push_display("t", &ts)
            .push_f64("min_f", &st.min)
            .push_f64("mean_f", &st.mean)
            .push_f64("se_f", &st.se);
        write_atomic(&dir.join(file), &table.to_csv())?;
        if *rule == "ec_sgd" || file == "sign_sgd_g4.csv" {
            plot = plot.with(Series::new(format!("{rule} γ={:.3}", spec.gamma), &as_f64(&ts), &st.mean));
        }
        files.push(file.clone());
        rules.push(*rule);
        gammas.push(spec.gamma);
    }
    runs.push_display("file", &files)
        .push_display("rule", &rules)
        .push_f64("gamma", &gammas);
    write_atomic(&dir.join("runs.csv"), &runs.to_csv())?;
    if opts.svg {
        write_svg(dir, "f.svg", plot)?;
    }
    Ok(())
}

fn verdict_ce3(dir: &Path) -> anyhow::Result<Verdict> {
    let runs = Table::read(&dir.join("runs.csv"))?;
    let mut v = Verdict::new("ce3");
    let files = runs.strings("file")?;
    let rules = runs.strings("rule")?;
    let gammas = runs.column("gamma")?;
    for ((file, rule), gamma) in files.iter().zip(&rules).zip(&gammas) {
        let t = Table::read(&dir.join(file))?;
        if rule == "sign_sgd" {
            let min_f = t.column("min_f")?;
            let f0 = min_f[0];
            let lowest = min_f.iter().cloned().fold(f64::INFINITY, f64::min);
            v.check(
                f0 == 2.0 && lowest >= f0,
                format!(
                    "signSGD γ={}: min over seeds and t of f = {} ≥ f(x₀) = {}",
                    fmt_f64(*gamma),
                    fmt_f64(lowest),
                    fmt_f64(f0)
                ),
            );
        } else {
            let mean = t.column("mean_f")?;
            let last = *mean.last().expect("nonempty");
            v.check(
                last < 0.02,
                format!("EC-SGD(sign_scaled) γ={}: final seed-mean f = {} < 0.02", fmt_f64(*gamma), fmt_f64(last)),
            );
        }
    }
    Ok(v)
}

// ------------------------------------------------------------------ theorem1

const T1_INSTANCES: u64 = 20;
const T1_DIMS: [usize; 3] = [2, 5, 20];
const T1_STEPS: usize = 10_000;

fn gen_theorem1(dir: &Path, opts: &ReproOptions) -> anyhow::Result<()> {
    let jobs: Vec<(u64, usize, f64)> = (0..T1_INSTANCES)
        .flat_map(|i| {
            let d = T1_DIMS[i as usize % T1_DIMS.len()];
            grid().into_iter().map(move |g| (i, d, g))
        })
        .collect();
    let rows = par_map(opts.jobs, jobs, |(i, d, gamma)| -> anyhow::Result<_> {
        let oracle = Oracle::build(&OracleKind::Theorem1 { d, n: 2 * d }, i)?;
        let x0 = oracle.default_x0().clone();
        let x_star = oracle.meta().x_star.clone().context("theorem1 optimum")?;
        let s = oracle.sign_pattern().context("theorem1 sign pattern")?.to_vec();
        let line = distance_to_line(&x_star, &x0, &s);
        let mut min_dist = norm(&sub(&x0, &x_star));
        let mut off_line = 0.0f64;
        let spec = OptimizerSpec::new(Rule::SignSgd, gamma);
        let mut cfg = RunConfig::new(T1_STEPS, i);
        cfg.record.every = T1_STEPS;
        run_observed(&spec, &oracle, &x0, &cfg, |ev| {
            min_dist = min_dist.min(norm(&sub(&ev.state.x, &x_star)));
            off_line = off_line.max(distance_to_line(&ev.state.x, &x0, &s));
        })?;
        Ok((i, d, gamma, oracle.verify_sign_pattern(), line, min_dist, off_line))
    })?
    .into_iter()
    .collect::<anyhow::Result<Vec<_>>>()?;
    let mut t = ColumnTable::new();
    t.push_display("instance", &rows.iter().map(|r| r.0).collect::<Vec<_>>())
        .push_display("d", &rows.iter().map(|r| r.1).collect::<Vec<_>>())
        .push_f64("gamma", &rows.iter().map(|r| r.2).collect::<Vec<_>>())
        .push_display("sign_pattern_ok", &rows.iter().map(|r| u8::from(r.3)).collect::<Vec<_>>())
        .push_f64("line_dist", &rows.iter().map(|r| r.4).collect::<Vec<_>>())
        .push_f64("min_dist", &rows.iter().map(|r| r.5).collect::<Vec<_>>())
        .push_f64("max_off_line", &rows.iter().map(|r| r.6).collect::<Vec<_>>());
    write_atomic(&dir.join("instances.csv"), &t.to_csv())?;
    Ok(())
}

fn verdict_theorem1(dir: &Path) -> anyhow::Result<Verdict> {
    let t = Table::read(&dir.join("instances.csv"))?;
    let mut v = Verdict::new("theorem1");
    let ok = t.column("sign_pattern_ok")?;
    let line = t.column("line_dist")?;
    let min = t.column("min_dist")?;
    let off = t.column("max_off_line")?;
    let bad_pattern = ok.iter().filter(|&&x| x != 1.0).count();
    v.check(
        bad_pattern == 0,
        format!("sgn(a_i) = ±s on all {} instance rows ({bad_pattern} violations)", ok.len()),
    );
    let too_close = line.iter().zip(&min).filter(|(l, m)| **m < 0.5 * **l).count();
    let worst = line
        .iter()
        .zip(&min)
        .map(|(l, m)| m / l)
        .fold(f64::INFINITY, f64::min);
    v.check(
        too_close == 0,
        format!(
            "signSGD never within 0.5·dist(x⋆, x₀ + span{{s}}) for any grid γ (min ratio {worst:.4}, {too_close} violations)"
        ),
    );
    v.note(format!(
        "max distance of iterates from the line: {}",
        fmt_f64(off.iter().cloned().fold(0.0, f64::max))
    ));
    Ok(v)
}

// -------------------------------------------------------------------- toy_a1

const TOY_SEEDS: u64 = 100;

fn toy_methods() -> [(&'static str, OptimizerSpec); 4] {
    [
        ("sgd", OptimizerSpec::new(Rule::Sgd, 1e-3)),
        ("ec_sgd", OptimizerSpec::ec_sgd(CompressorSpec::sign_scaled(), 1e-3)),
        ("sign_sgd", OptimizerSpec::new(Rule::SignSgd, 1e-2)),
        ("sign_sgd_scaled", OptimizerSpec::new(Rule::SignSgdScaled, 1e-2)),
    ]
}

fn gen_toy_a1(dir: &Path, opts: &ReproOptions) -> anyhow::Result<()> {
    let oracle = Oracle::build(&OracleKind::SparseNoise { d: 100, noise_std: 100.0 }, 0)?;
    let x0 = oracle.default_x0().clone();
    let steps = opts.toy_iteration;
    let ts = steps_axis(steps + 1);
    let mut table = ColumnTable::new();
    table.push_display("t", &ts);
    let mut plot = LinePlot::new("sparse noise: seed-mean f(x_t)", "t", "f").log_y();
    for (name, spec) in toy_methods() {
        let paths = par_map(opts.jobs, (0..TOY_SEEDS).collect(), |seed| {
            loss_path(&spec, &oracle, &x0, steps, seed)
        })?
        .into_iter()
        .collect::<anyhow::Result<Vec<_>>>()?;
        let st = seed_stats(&paths);
        table
            .push_f64(format!("{name}_mean_f"), &st.mean)
            .push_f64(format!("{name}_sd_f"), &st.sd);
        plot = plot.with(Series::new(name, &as_f64(&ts), &st.mean));
    }
    write_atomic(&dir.join("series.csv"), &table.to_csv())?;
    if opts.svg {
        write_svg(dir, "series.svg", plot)?;
    }
    Ok(())
}

fn verdict_toy_a1(dir: &Path) -> anyhow::Result<Verdict> {
    let t = Table::read(&dir.join("series.csv"))?;
    let mut v = Verdict::new("toy_a1");
    let last = |name: &str| -> anyhow::Result<f64> {
        Ok(*t.column(&format!("{name}_mean_f"))?.last().context("empty series")?)
    };
    let at = t.column("t")?.last().copied().unwrap_or(0.0);
    let (sgd, ef, sign, scaled) = (last("sgd")?, last("ec_sgd")?, last("sign_sgd")?, last("sign_sgd_scaled")?);
    v.check(
        sign < sgd,
        format!("t={at}: signSGD {} < SGD {}", fmt_f64(sign), fmt_f64(sgd)),
    );
    v.check(
        (sgd - ef).abs() <= 0.25 * sgd,
        format!("t={at}: |SGD − EF-signSGD| = {} ≤ 0.25·SGD = {}", fmt_f64((sgd - ef).abs()), fmt_f64(0.25 * sgd)),
    );
    v.note(format!("scaled signSGD {}", fmt_f64(scaled)));
    Ok(v)
}

// ----------------------------------------------------------------- fig2_span

const FIG2_STEPS: usize = 3000;
const FIG2_DATA_SEED: u64 = 0;

fn fig2_methods(l: f64) -> [(&'static str, OptimizerSpec); 4] {
    let zero = SignZero::Zero;
    [
        ("sgd", OptimizerSpec::new(Rule::Sgd, 1.0 / l)),
        ("sign_sgd", OptimizerSpec::new(Rule::SignSgd, 1e-3).with_sign_zero(zero)),
        ("signum", OptimizerSpec::new(Rule::Signum { beta: 0.9 }, 1e-3).with_sign_zero(zero)),
        (
            "ec_sgd",
            OptimizerSpec::ec_sgd(CompressorSpec::sign_scaled(), 1e-2).with_sign_zero(zero),
        ),
    ]
}

fn gen_fig2(dir: &Path, opts: &ReproOptions) -> anyhow::Result<()> {
    let oracle = Oracle::build(&OracleKind::Wilson { n: 200 }, FIG2_DATA_SEED)?;
    let l = oracle.meta().smooth_l.context("wilson is smooth")?;
    let x0 = Vector::zeros(oracle.dim());
    let methods = fig2_methods(l);
    let traces = par_map(opts.jobs, methods.to_vec(), |(_, spec)| {
        let mut cfg = RunConfig::new(FIG2_STEPS, 0);
        cfg.full_batch = true;
        cfg.record.span = true;
        cfg.record.phi = true;
        cfg.record.test_loss = true;
        run(&spec, &oracle, &x0, &cfg)
    })?;
    let mut span_plot = LinePlot::new("wilson: distance to gradient span", "t", "‖x − Π(x)‖").log_y();
    let mut test_plot = LinePlot::new("wilson: test loss", "t", "test MSE").log_y();
    let mut runs = ColumnTable::new();
    let (mut names, mut gammas) = (Vec::new(), Vec::new());
    for ((name, spec), trace) in methods.iter().zip(traces) {
        let trace = trace.with_context(|| format!("{name} run"))?;
        write_atomic(&dir.join(format!("{name}.csv")), &trace_csv(&trace.rows))?;
        let ts: Vec<f64> = trace.rows.iter().map(|r| r.t as f64).collect();
        let span: Vec<f64> = trace.rows.iter().map(|r| r.span_dist.unwrap_or(f64::NAN)).collect();
        let test: Vec<f64> = trace.rows.iter().map(|r| r.test_loss.unwrap_or(f64::NAN)).collect();
        span_plot = span_plot.with(Series::new(*name, &ts, &span));
        test_plot = test_plot.with(Series::new(*name, &ts, &test));
        names.push(*name);
        gammas.push(spec.gamma);
    }
    runs.push_display("rule", &names).push_f64("gamma", &gammas);
    write_atomic(&dir.join("runs.csv"), &runs.to_csv())?;
    if opts.svg {
        write_svg(dir, "span.svg", span_plot)?;
        write_svg(dir, "test_loss.svg", test_plot)?;
    }
    Ok(())
}

fn verdict_fig2(dir: &Path) -> anyhow::Result<Verdict> {
    let mut v = Verdict::new("fig2_span");
    let read = |name: &str| Table::read(&dir.join(format!("{name}.csv")));
    let min = |xs: &[f64]| xs.iter().cloned().fold(f64::INFINITY, f64::min);

    let ef = read("ec_sgd")?;
    let (f, span, test) = (ef.column("f_val")?, ef.column("span_dist")?, ef.column("test_loss")?);
    let (f_last, span_last, test_last) = (f[f.len() - 1], span[span.len() - 1], test[test.len() - 1]);
    v.check(f_last < 1e-3, format!("EF-signSGD final train loss {} < 1e-3", fmt_f64(f_last)));
    v.check(span_last < 1e-3, format!("EF-signSGD final span distance {} < 1e-3", fmt_f64(span_last)));
    v.check(test_last < 0.01, format!("EF-signSGD final test loss {} < 0.01", fmt_f64(test_last)));

    for name in ["sign_sgd", "signum"] {
        let t = read(name)?;
        let (f, span, test) = (t.column("f_val")?, t.column("span_dist")?, t.column("test_loss")?);
        let best_test = min(&test);
        v.check(best_test > 0.8, format!("{name} best test loss {} > 0.8", fmt_f64(best_test)));
        v.check(min(&f) < 1e-3, format!("{name} train loss reaches {} < 1e-3", fmt_f64(min(&f))));
        v.note(format!("{name} final span distance {}", fmt_f64(span[span.len() - 1])));
    }
    let sgd = read("sgd")?;
    let test = sgd.column("test_loss")?;
    v.note(format!(
        "sgd final test loss {}, final span distance {}",
        fmt_f64(test[test.len() - 1]),
        fmt_f64(*sgd.column("span_dist")?.last().context("empty")?)
    ));
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_through_clap() {
        use clap::ValueEnum;
        for r in Reproduction::ALL {
            assert_eq!(Reproduction::from_str(r.name(), false).unwrap(), r);
        }
    }

    #[test]
    fn seed_stats_basic() {
        let st = seed_stats(&[vec![1.0, 2.0], vec![3.0, 2.0]]);
        assert_eq!(st.mean, vec![2.0, 2.0]);
        assert_eq!(st.min, vec![1.0, 2.0]);
        assert!((st.sd[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(st.se[1], 0.0);
    }

    #[test]
    fn ce2_verdict_is_recomputable_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let v1 = reproduce(Reproduction::Ce2, dir.path(), &ReproOptions::default()).unwrap();
        let v2 = verdict(Reproduction::Ce2, &dir.path().join("ce2")).unwrap();
        assert_eq!(v1.passed, v2.passed);
        assert_eq!(v1.lines, v2.lines);
        // The signSGD half holds on every grid step size.
        let sign: Vec<_> = v1.lines.iter().filter(|l| l.contains("signSGD") && !l.contains("EF-")).collect();
        assert_eq!(sign.len(), 9);
        assert!(sign.iter().all(|l| l.starts_with("[ok]")));
    }
}
