//! Self-contained verifications of the compressor contracts, the oracle
//! contracts and the error-feedback bounds. Each check runs its own small
//! experiment and reports a [`CheckOutcome`]; `selftest` and the acceptance
//! suite call these directly.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::analysis::{lemma2_bound, span_distance_bound_sq, theorem2_bound, theorem3_bound, sgd_nonconvex_bound};
use crate::compressors::{compress, contraction_delta, density_phi, CompressorKind, CompressorSpec};
use crate::error::Result;
use crate::linalg::{min_norm_solution, norm, norm1, norm_sq, sub, CompensatedSum, Vector};
use crate::optimizers::{init_state, run_observed, step_in_place, OptimizerSpec, RunConfig, Rule};
use crate::oracles::{Oracle, OracleKind};
use crate::rng::{stream, Stream, StreamRng};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name,
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckSettings {
    /// Seeds averaged for the expectation bounds.
    pub seeds: usize,
    /// Multiplicative slack on expectation bounds.
    pub slack: f64,
    /// Random vectors per dimension in the compressor contract checks.
    pub contract_vectors: usize,
    /// Resamplings used for Monte-Carlo means.
    pub mc_samples: usize,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            seeds: 20,
            slack: 1.2,
            contract_vectors: 10_000,
            mc_samples: 100_000,
        }
    }
}

pub fn run_all(settings: &CheckSettings) -> Vec<CheckOutcome> {
    vec![
        compressor_contracts(settings),
        oracle_contracts(settings),
        lemma2_empirical(settings),
        theorem2_empirical(settings),
        theorem3_empirical(settings),
        span_inequality(),
        remark8_span_bound(settings),
        transcript_identity(),
        min_norm_convergence(),
    ]
}

fn gaussian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn std_err(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

// ---------------------------------------------------------------- compressors

pub fn compressor_contracts(settings: &CheckSettings) -> CheckOutcome {
    let mut failures = Vec::new();
    let mut rng = stream(12, Stream::Data);
    let mut crng = stream(12, Stream::Compressor);

    // δ-contract for the deterministic kinds, plus φ range and ℓ₁ preservation.
    for d in [2usize, 10, 100] {
        let specs = [
            CompressorSpec::identity(),
            CompressorSpec::sign_scaled(),
            CompressorSpec::top_k(1),
            CompressorSpec::top_k(d.div_ceil(2)),
        ];
        let mut violations = 0usize;
        let mut phi_bad = 0usize;
        let mut l1_bad = 0usize;
        for _ in 0..settings.contract_vectors {
            let v = gaussian(d, &mut rng);
            let phi = density_phi(&v).unwrap_or(f64::NAN);
            if !(phi >= 1.0 / d as f64 - 1e-15 && phi <= 1.0 + 1e-15) {
                phi_bad += 1;
            }
            for spec in &specs {
                let c = compress(spec, &v, &mut crng).expect("valid k");
                let got = contraction_delta(&v, &c).unwrap_or(f64::NAN);
                let want = spec.guaranteed_delta(d).unwrap_or(phi);
                if !(got >= want - 1e-12) {
                    violations += 1;
                }
                if spec.kind == CompressorKind::SignScaled {
                    let l1 = norm1(&v);
                    if (norm1(&c) - l1).abs() > 1e-12 * l1 {
                        l1_bad += 1;
                    }
                }
            }
        }
        for extreme in [one_hot(d), vec![1.5; d]] {
            let phi = density_phi(&extreme).unwrap_or(f64::NAN);
            if !(phi >= 1.0 / d as f64 - 1e-15 && phi <= 1.0 + 1e-15) {
                phi_bad += 1;
            }
        }
        if violations + phi_bad + l1_bad > 0 {
            failures.push(format!(
                "d={d}: {violations} δ violations, {phi_bad} φ out of range, {l1_bad} ℓ₁ mismatches"
            ));
        }
    }

    // rand_k_feedback contracts in expectation.
    for (d, k) in [(2usize, 1usize), (10, 3), (100, 10)] {
        let spec = CompressorSpec::new(CompressorKind::RandKFeedback(k));
        let v = gaussian(d, &mut rng);
        let mut err = Moments::default();
        for _ in 0..settings.contract_vectors {
            let c = compress(&spec, &v, &mut crng).expect("valid k");
            err.push(norm_sq(&sub(&c, &v)));
        }
        let bound = (1.0 - k as f64 / d as f64) * norm_sq(&v);
        if err.mean > bound + 3.0 * err.std_err() {
            failures.push(format!("rand_k_feedback d={d} k={k}: E‖c−v‖² {:.4} > {:.4}", err.mean, bound));
        }
    }

    // rand_k_unbiased: unbiased, second moment (d/k)‖v‖².
    {
        let (d, k) = (10usize, 3usize);
        let spec = CompressorSpec::new(CompressorKind::RandKUnbiased(k));
        let v = gaussian(d, &mut rng);
        let mut coords = vec![Moments::default(); d];
        let mut sq = Moments::default();
        for _ in 0..settings.mc_samples {
            let c = compress(&spec, &v, &mut crng).expect("valid k");
            for (m, ci) in coords.iter_mut().zip(c.iter()) {
                m.push(*ci);
            }
            sq.push(c.norm_sq());
        }
        let biased = coords
            .iter()
            .zip(&v)
            .filter(|(m, vi)| (m.mean - *vi).abs() > 4.0 * m.std_err() + 1e-12)
            .count();
        if biased > 0 {
            failures.push(format!("rand_k_unbiased: {biased} coordinates biased beyond 4 SE"));
        }
        let second = d as f64 / k as f64 * norm_sq(&v);
        if sq.mean > second + 3.0 * sq.std_err() {
            failures.push(format!("rand_k_unbiased: E‖U‖² {:.4} > {:.4}", sq.mean, second));
        }
    }

    // Same mask: rand_k_feedback = (k/d) rand_k_unbiased.
    {
        let mut mismatches = 0usize;
        for trial in 0..1000u64 {
            let d = 2 + (trial as usize % 50);
            let k = 1 + (trial as usize % d);
            let v = gaussian(d, &mut rng);
            let mut r1 = stream(trial, Stream::Compressor);
            let mut r2 = r1.clone();
            let fb = compress(&CompressorSpec::new(CompressorKind::RandKFeedback(k)), &v, &mut r1).expect("valid k");
            let ub = compress(&CompressorSpec::new(CompressorKind::RandKUnbiased(k)), &v, &mut r2).expect("valid k");
            let ratio = k as f64 / d as f64;
            let ok = fb.iter().zip(ub.iter()).all(|(a, b)| {
                let scaled = ratio * b;
                (*a == 0.0) == (*b == 0.0) && (a - scaled).abs() <= 1e-15 * a.abs()
            });
            if !ok {
                mismatches += 1;
            }
        }
        if mismatches > 0 {
            failures.push(format!("rand_k identity: {mismatches} mismatching masks"));
        }
    }

    let passed = failures.is_empty();
    let detail = if passed {
        format!(
            "δ-contract, φ range, ℓ₁ preservation over {} vectors per d; rand_k expectation, unbiasedness and identity hold",
            settings.contract_vectors
        )
    } else {
        failures.join("; ")
    };
    CheckOutcome::new("compressor_contracts", passed, detail)
}

fn one_hot(d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[d - 1] = -2.0;
    v
}

// -------------------------------------------------------------------- oracles

pub fn oracle_contracts(settings: &CheckSettings) -> CheckOutcome {
    let kinds = [
        OracleKind::Ce1,
        OracleKind::Ce2 { eps: 0.5 },
        OracleKind::Ce3 { eps: 0.5 },
        OracleKind::Theorem1 { d: 5, n: 10 },
        OracleKind::SparseNoise { d: 10, noise_std: 2.0 },
        OracleKind::Wilson { n: 20 },
        OracleKind::LeastSquares { n: 12, d: 4 },
    ];
    let mut failures = Vec::new();
    for kind in &kinds {
        if let Err(e) = oracle_contract(kind, settings, &mut failures) {
            failures.push(format!("{kind}: {e}"));
        }
    }

    // Sign trap: sgn of every ce3 outcome is ±(1,−1) whenever x₁+x₂ > 0.
    let ce3 = Oracle::build(&OracleKind::Ce3 { eps: 0.5 }, 0).expect("valid eps");
    let mut rng = stream(5, Stream::Data);
    for _ in 0..1000 {
        let mut x = gaussian(2, &mut rng);
        if x[0] + x[1] <= 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
        if x[0] + x[1] <= 0.0 {
            continue;
        }
        for i in 0..2 {
            let g = ce3.component_gradient(i, &x).expect("finite sum");
            let s = crate::compressors::sign_vector(&g, crate::compressors::SignZero::PlusOne);
            if !(s == [1.0, -1.0] || s == [-1.0, 1.0] || g.iter().all(|v| *v == 0.0)) {
                failures.push(format!("ce3 sign trap broken at {x:?}"));
            }
        }
    }

    for seed in 0..5 {
        match Oracle::build(&OracleKind::Theorem1 { d: 20, n: 40 }, seed) {
            Ok(o) if o.verify_sign_pattern() => {}
            Ok(_) => failures.push(format!("theorem1 seed {seed}: sign pattern violated")),
            Err(e) => failures.push(format!("theorem1 seed {seed}: {e}")),
        }
    }

    let passed = failures.is_empty();
    let detail = if passed {
        format!("unbiasedness and second moment for {} oracle kinds; ce3 sign trap; theorem1 sign pattern", kinds.len())
    } else {
        failures.join("; ")
    };
    CheckOutcome::new("oracle_contracts", passed, detail)
}

fn oracle_contract(kind: &OracleKind, settings: &CheckSettings, failures: &mut Vec<String>) -> Result<()> {
    let o = Oracle::build(kind, 3)?;
    let d = o.dim();
    let meta = o.meta().clone();
    let mut rng = stream(21, Stream::Init);
    let mut noise = stream(21, Stream::Oracle);
    for point in 0..5 {
        let x: Vec<f64> = match (&meta.x_star, meta.sigma_region_radius) {
            (Some(xs), Some(radius)) => {
                let u = gaussian(d, &mut rng);
                let r = 0.9 * radius * rng.random::<f64>() / norm(&u);
                xs.iter().zip(&u).map(|(a, b)| a + r * b).collect()
            }
            _ if *kind == OracleKind::Ce1 => vec![rng.random_range(-1.0..1.0)],
            _ => gaussian(d, &mut rng),
        };
        let full = o.full_gradient(&x);
        let mut coords = vec![Moments::default(); d];
        let mut sq = Moments::default();
        for _ in 0..settings.mc_samples {
            let g = o.sample_gradient(&x, &mut noise).g;
            for (m, gi) in coords.iter_mut().zip(g.iter()) {
                m.push(*gi);
            }
            sq.push(g.norm_sq());
        }
        let biased = coords
            .iter()
            .zip(full.iter())
            .filter(|(m, fi)| (m.mean - *fi).abs() > 4.0 * m.std_err() + 1e-9 * fi.abs().max(1.0))
            .count();
        if biased > 0 {
            failures.push(format!("{kind} point {point}: {biased} biased coordinates"));
        }
        let exact = o.second_moment(&x);
        if (sq.mean - exact).abs() > 4.0 * sq.std_err() + 1e-9 * exact {
            failures.push(format!("{kind} point {point}: E‖g‖² {:.6e} vs exact {:.6e}", sq.mean, exact));
        }
        if let Some(sigma_sq) = meta.sigma_sq {
            if sq.mean > sigma_sq + 3.0 * sq.std_err() {
                failures.push(format!("{kind} point {point}: E‖g‖² {:.6e} > σ² {:.6e}", sq.mean, sigma_sq));
            }
        }
    }
    Ok(())
}

// ------------------------------------------------------------- error feedback

/// Per-step seed means of `‖e_t‖²` and the max second moment over visited
/// iterates.
fn err_series(
    spec: &OptimizerSpec,
    oracle: &Oracle,
    x0: &Vector,
    steps: usize,
    seeds: usize,
) -> Result<(Vec<f64>, f64)> {
    let mut mean = vec![0.0; steps];
    let mut sigma_hat = 0.0f64;
    for seed in 0..seeds as u64 {
        let tr = run_observed(spec, oracle, x0, &RunConfig::new(steps, seed), |ev| {
            sigma_hat = sigma_hat.max(oracle.second_moment(ev.x_prev));
        })?;
        for (m, row) in mean.iter_mut().zip(&tr.rows) {
            *m += row.err_norm_sq / seeds as f64;
        }
    }
    Ok((mean, sigma_hat))
}

/// Residual error on ce3 with top-1 sparsification (δ = 1/2) against
/// `4(1−δ)γ²σ²/δ²`.
pub fn lemma2_empirical(settings: &CheckSettings) -> CheckOutcome {
    let r = (|| {
        let oracle = Oracle::build(&OracleKind::Ce3 { eps: 0.5 }, 0)?;
        let gamma = 0.01;
        let spec = OptimizerSpec::ec_sgd(CompressorSpec::top_k(1), gamma);
        let (mean, sigma_hat) = err_series(&spec, &oracle, oracle.default_x0(), 5000, settings.seeds)?;
        let bound = lemma2_bound(gamma, sigma_hat, 0.5)? * settings.slack;
        let worst = mean.iter().cloned().fold(0.0, f64::max);
        Ok((
            worst <= bound,
            format!("max_t mean‖e_t‖² = {worst:.4e} vs bound·{} = {bound:.4e} (σ̂² = {sigma_hat:.3})", settings.slack),
        ))
    })();
    CheckOutcome::from_result("lemma2_empirical", r)
}

/// `min_t ‖∇f(x_t)‖²` on `½‖x‖²` (d = 100) with top-25 sparsification
/// against the non-convex rate at `γ = 1/√(T+1)`.
pub fn theorem2_empirical(settings: &CheckSettings) -> CheckOutcome {
    let r = (|| {
        let oracle = Oracle::build(&OracleKind::SparseNoise { d: 100, noise_std: 0.0 }, 0)?;
        let t = 10_000usize;
        let gamma = 1.0 / ((t + 1) as f64).sqrt();
        let spec = OptimizerSpec::ec_sgd(CompressorSpec::top_k(25), gamma);
        let x0 = oracle.default_x0().clone();
        let g0 = oracle.full_gradient(&x0).norm_sq();
        let mut sigma_hat = 0.0f64;
        let mut mean_min = 0.0;
        for seed in 0..settings.seeds as u64 {
            let tr = run_observed(&spec, &oracle, &x0, &RunConfig::new(t, seed), |ev| {
                sigma_hat = sigma_hat.max(oracle.second_moment(ev.x_prev));
            })?;
            let m = tr.rows.iter().map(|r| r.grad_norm_sq).fold(g0, f64::min);
            mean_min += m / settings.seeds as f64;
        }
        let l = oracle.meta().smooth_l.unwrap_or(1.0);
        let f0 = oracle.loss(&x0) - oracle.meta().f_star.unwrap_or(0.0);
        let bound = theorem2_bound(f0, l, sigma_hat, 0.25, gamma, t)? * settings.slack;
        let sgd = sgd_nonconvex_bound(f0, l, sigma_hat, t)?;
        Ok((
            mean_min <= bound,
            format!("mean min‖∇f‖² = {mean_min:.4e} vs bound·{} = {bound:.4e} (SGD rate {sgd:.4e})", settings.slack),
        ))
    })();
    CheckOutcome::from_result("theorem2_empirical", r)
}

/// `f(x̄_T) − f⋆` on ce2 with top-1 sparsification (δ = 1/2) against the
/// convex non-smooth rate.
pub fn theorem3_empirical(settings: &CheckSettings) -> CheckOutcome {
    let r = (|| {
        let oracle = Oracle::build(&OracleKind::Ce2 { eps: 0.5 }, 0)?;
        let t = 10_000usize;
        let gamma = 1.0 / ((t + 1) as f64).sqrt();
        let spec = OptimizerSpec::ec_sgd(CompressorSpec::top_k(1), gamma);
        let x0 = oracle.default_x0().clone();
        let meta = oracle.meta();
        let (x_star, f_star) = (meta.x_star.clone().unwrap_or(Vector::zeros(2)), meta.f_star.unwrap_or(0.0));
        let mut cfg = RunConfig::new(t, 0);
        cfg.record.average_iterate = true;
        cfg.record.every = t;
        let mut mean_gap = 0.0;
        for seed in 0..settings.seeds as u64 {
            cfg.seed = seed;
            let tr = run_observed(&spec, &oracle, &x0, &cfg, |_| {})?;
            let avg = tr.iterate_mean.expect("averaging requested");
            mean_gap += (oracle.loss(&avg) - f_star) / settings.seeds as f64;
        }
        let dist0 = norm_sq(&sub(&x0, &x_star));
        let sigma_sq = meta.sigma_sq.unwrap_or(f64::NAN);
        let bound = theorem3_bound(dist0, gamma, t, sigma_sq, 0.5)? * settings.slack;
        Ok((
            mean_gap <= bound,
            format!("mean f(x̄_T) − f⋆ = {mean_gap:.4e} vs bound·{} = {bound:.4e}", settings.slack),
        ))
    })();
    CheckOutcome::from_result("theorem3_empirical", r)
}

fn span_oracles() -> Result<Vec<(Oracle, f64)>> {
    let oracles = vec![
        Oracle::build(&OracleKind::Theorem1 { d: 20, n: 40 }, 1)?,
        Oracle::build(&OracleKind::LeastSquares { n: 8, d: 30 }, 2)?,
    ];
    Ok(oracles
        .into_iter()
        .map(|o| {
            let gamma = stable_gamma(&o);
            (o, gamma)
        })
        .collect())
}

/// Step size under which single-row SGD on a least-squares oracle is stable.
fn stable_gamma(o: &Oracle) -> f64 {
    match o.training_data() {
        Some(ls) => {
            let row_max = ls.a.row_iter().map(norm_sq).fold(0.0, f64::max);
            0.1 / (ls.a.rows() as f64 * row_max)
        }
        None => 0.01,
    }
}

fn all_kinds(d: usize) -> [CompressorSpec; 6] {
    [
        CompressorSpec::identity(),
        CompressorSpec::sign_scaled(),
        CompressorSpec::new(CompressorKind::SignRaw),
        CompressorSpec::top_k((d / 4).max(1)),
        CompressorSpec::new(CompressorKind::RandKUnbiased((d / 2).max(1))),
        CompressorSpec::new(CompressorKind::RandKFeedback((d / 4).max(1))),
    ]
}

/// `‖x_t − Π_{G_t}(x_t)‖ ≤ ‖e_t‖` from `x₀ = 0` for every compressor kind.
pub fn span_inequality() -> CheckOutcome {
    let r = (|| {
        let mut worst = f64::NEG_INFINITY;
        let mut failures = Vec::new();
        let mut runs = 0;
        for (oracle, gamma) in span_oracles()? {
            let d = oracle.dim();
            for c in all_kinds(d) {
                for seed in 0..3u64 {
                    let mut cfg = RunConfig::new(2000, seed);
                    cfg.record.span = true;
                    let spec = OptimizerSpec::ec_sgd(c, gamma);
                    let tr = run_observed(&spec, &oracle, &Vector::zeros(d), &cfg, |_| {})?;
                    runs += 1;
                    for row in &tr.rows {
                        let gap = row.span_dist.unwrap_or(f64::NAN) - row.err_norm_sq.sqrt();
                        worst = worst.max(gap);
                        if !(gap <= 1e-6) {
                            failures.push(format!("{} {c} seed {seed} t={}: gap {gap:.3e}", oracle.kind(), row.t));
                            break;
                        }
                    }
                }
            }
        }
        let detail = if failures.is_empty() {
            format!("{runs} runs, max(dist − ‖e_t‖) = {worst:.3e}")
        } else {
            failures.join("; ")
        };
        Ok((failures.is_empty(), detail))
    })();
    CheckOutcome::from_result("span_inequality", r)
}

/// Seed-mean span distance against `√(4γ²(1−δ)/δ² · max‖g‖²)`.
pub fn remark8_span_bound(settings: &CheckSettings) -> CheckOutcome {
    let r = (|| {
        let oracle = Oracle::build(&OracleKind::Theorem1 { d: 20, n: 40 }, 1)?;
        let gamma = stable_gamma(&oracle);
        let d = oracle.dim();
        let steps = 2000;
        let mut failures = Vec::new();
        let mut ratios = Vec::new();
        for c in [
            CompressorSpec::top_k(5),
            CompressorSpec::sign_scaled(),
            CompressorSpec::new(CompressorKind::RandKFeedback(5)),
        ] {
            let spec = OptimizerSpec::ec_sgd(c, gamma);
            let mut mean = vec![0.0; steps];
            let mut max_g = 0.0f64;
            let mut min_delta = 1.0f64;
            for seed in 0..settings.seeds as u64 {
                let mut cfg = RunConfig::new(steps, seed);
                cfg.record.span = true;
                let tr = run_observed(&spec, &oracle, &Vector::zeros(d), &cfg, |ev| {
                    max_g = max_g.max(norm_sq(ev.gradient));
                })?;
                min_delta = min_delta.min(tr.min_delta);
                for (m, row) in mean.iter_mut().zip(&tr.rows) {
                    *m += row.span_dist.unwrap_or(f64::NAN) / settings.seeds as f64;
                }
            }
            let delta = c.guaranteed_delta(d).unwrap_or(min_delta);
            let bound = span_distance_bound_sq(gamma, delta, max_g)?.sqrt() * settings.slack;
            let worst = mean.iter().cloned().fold(0.0, f64::max);
            ratios.push(format!("{c}: {:.3}", worst / bound));
            if !(worst <= bound) {
                failures.push(format!("{c}: mean dist {worst:.4e} > {bound:.4e} (δ = {delta:.3})"));
            }
        }
        let detail = if failures.is_empty() {
            format!("max mean dist / bound: {}", ratios.join(", "))
        } else {
            failures.join("; ")
        };
        Ok((failures.is_empty(), detail))
    })();
    CheckOutcome::from_result("remark8_span_bound", r)
}

/// `x_t − e_t = x₀ − Σ γ g_i` along ec_sgd runs, for every compressor and
/// oracle kind. ce1 runs without its box.
pub fn transcript_identity() -> CheckOutcome {
    let r = (|| {
        let kinds = [
            OracleKind::Ce1,
            OracleKind::Ce2 { eps: 0.5 },
            OracleKind::Ce3 { eps: 0.5 },
            OracleKind::Theorem1 { d: 5, n: 10 },
            OracleKind::SparseNoise { d: 10, noise_std: 1.0 },
            OracleKind::Wilson { n: 200 },
            OracleKind::LeastSquares { n: 20, d: 10 },
        ];
        let mut worst = 0.0f64;
        let mut failures = Vec::new();
        let mut runs = 0;
        for kind in &kinds {
            let oracle = Oracle::build(kind, 4)?;
            let d = oracle.dim();
            let gamma = stable_gamma(&oracle);
            let x0 = oracle.default_x0().clone();
            for c in all_kinds(d) {
                let spec = OptimizerSpec::ec_sgd(c, gamma);
                let mut acc = CompensatedSum::new(d);
                acc.add_scaled(1.0, &x0);
                let mut scale = 1.0 + x0.norm();
                let mut bad = None;
                let mut cfg = RunConfig::new(1000, 7);
                cfg.record.every = 1000;
                run_observed(&spec, &oracle, &x0, &cfg, |ev| {
                    acc.add_scaled(-ev.gamma, ev.gradient);
                    scale += ev.gamma * norm(ev.gradient);
                    let lhs = sub(&ev.state.x, &ev.state.e);
                    let err = norm(&sub(&lhs, &acc.value()));
                    worst = worst.max(err / scale);
                    if err > 1e-9 * scale && bad.is_none() {
                        bad = Some(ev.state.t);
                    }
                })?;
                runs += 1;
                if let Some(t) = bad {
                    failures.push(format!("{kind} {c}: identity broken at t={t}"));
                }
            }
        }
        let detail = if failures.is_empty() {
            format!("{runs} runs, max relative error {worst:.3e}")
        } else {
            failures.join("; ")
        };
        Ok((failures.is_empty(), detail))
    })();
    CheckOutcome::from_result("transcript_identity", r)
}

/// Full-batch gradient descent from 0 on the wilson training split reaches
/// the minimum-norm interpolant.
pub fn min_norm_convergence() -> CheckOutcome {
    let r = (|| {
        let oracle = Oracle::build(&OracleKind::Wilson { n: 200 }, 0)?;
        let ls = oracle.training_data().expect("wilson has training data");
        let target = min_norm_solution(&ls.a, &ls.b)?;
        let target_norm = target.norm();
        let gamma = 1.0 / oracle.meta().smooth_l.expect("least squares is smooth");
        let spec = OptimizerSpec::new(Rule::Sgd, gamma);
        let mut state = init_state(&spec, &Vector::zeros(oracle.dim()));
        let mut rng: StreamRng = stream(0, Stream::Compressor);
        let max_steps = 100_000;
        let mut rel = f64::INFINITY;
        while state.t < max_steps {
            let g = oracle.full_gradient(&state.x);
            step_in_place(&spec, &mut state, &g, &mut rng)?;
            if state.t % 50 == 0 {
                rel = norm(&sub(&state.x, &target)) / target_norm;
                if rel <= 1e-5 {
                    break;
                }
            }
        }
        Ok((
            rel <= 1e-5,
            format!("‖x − x_mn‖/‖x_mn‖ = {rel:.3e} after {} steps (γ = 1/L = {gamma:.3e})", state.t),
        ))
    })();
    CheckOutcome::from_result("min_norm_convergence", r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> CheckSettings {
        CheckSettings {
            seeds: 3,
            slack: 1.2,
            contract_vectors: 300,
            mc_samples: 20_000,
        }
    }

    #[test]
    fn quick_compressor_contracts() {
        let out = compressor_contracts(&quick());
        assert!(out.passed, "{out}");
    }

    #[test]
    fn quick_oracle_contracts() {
        let out = oracle_contracts(&quick());
        assert!(out.passed, "{out}");
    }

    #[test]
    fn quick_lemma2() {
        let out = lemma2_empirical(&quick());
        assert!(out.passed, "{out}");
    }

    #[test]
    fn outcome_display() {
        let o = CheckOutcome::new("x", false, "why");
        assert_eq!(o.to_string(), "FAIL x: why");
    }
}
