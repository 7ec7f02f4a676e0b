//! Step rules and the run driver.
//!
//! Error-compensated SGD keeps a residual `e` of everything the compressor
//! dropped and adds it back before the next compression:
//!
//! ```text
//! p  = γ g + e
//! Δ  = C(p)
//! x ← x − Δ
//! e ← p − Δ
//! ```
//!
//! With `C = (‖·‖₁/d) sgn(·)` this is EF-SIGNSGD. The uncompensated
//! baselines (SGD, heavy-ball SGD, signSGD, scaled signSGD, signum) share
//! the same state type with `e = 0`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::analysis::{SpanTracker, TraceRow};
use crate::compressors::{
    bits_per_step, compress, contraction_delta, density_phi, sign_vector, CompressorKind,
    CompressorSpec, SignZero,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::{check_dim, norm1, CompensatedSum, Vector};
use crate::oracles::Oracle;
use crate::rng::{stream, Stream};

/// Longest run for which span distances may be recorded.
pub const MAX_SPAN_STEPS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    EcSgd(CompressorSpec),
    Sgd,
    SgdMomentum { beta: f64 },
    SignSgd,
    SignSgdScaled,
    Signum { beta: f64 },
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Self::EcSgd(_) => "ec_sgd",
            Self::Sgd => "sgd",
            Self::SgdMomentum { .. } => "sgd_momentum",
            Self::SignSgd => "sign_sgd",
            Self::SignSgdScaled => "sign_sgd_scaled",
            Self::Signum { .. } => "signum",
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            Self::SgdMomentum { beta } | Self::Signum { beta } => Some(*beta),
            _ => None,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EcSgd(c) => write!(f, "ec_sgd({c})"),
            Self::SgdMomentum { beta } => write!(f, "sgd_momentum(beta={beta})"),
            Self::Signum { beta } => write!(f, "signum(beta={beta})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Projection {
    #[default]
    None,
    Box { lo: f64, hi: f64 },
}

impl Projection {
    pub fn apply(&self, x: &mut [f64]) {
        if let Self::Box { lo, hi } = *self {
            x.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        }
    }
}

impl FromStr for Projection {
    type Err = String;

    /// `none` or `box:LO:HI`.
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "none" {
            return Ok(Self::None);
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["box", lo, hi] => {
                let lo: f64 = lo.parse().map_err(|_| format!("invalid lower bound `{lo}`"))?;
                let hi: f64 = hi.parse().map_err(|_| format!("invalid upper bound `{hi}`"))?;
                if lo.is_finite() && hi.is_finite() && lo <= hi {
                    Ok(Self::Box { lo, hi })
                } else {
                    Err(format!("box bounds must be finite with lo <= hi, got {lo}:{hi}"))
                }
            }
            _ => Err(format!("expected `none` or `box:LO:HI`, got `{s}`")),
        }
    }
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => f.write_str("none"),
            Self::Box { lo, hi } => write!(f, "box:{lo}:{hi}"),
        }
    }
}

/// Per-step multiplier on γ.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Schedule {
    #[default]
    Constant,
    /// Multiply γ by `factor` at every milestone step.
    Decimate { milestones: Vec<usize>, factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSpec {
    pub rule: Rule,
    pub gamma: f64,
    pub projection: Projection,
    pub schedule: Schedule,
    /// `sgn(0)` convention of the raw sign rules (sign_sgd, scaled
    /// signSGD, signum). `ec_sgd` uses its compressor's own convention.
    pub sign_zero: SignZero,
}

impl OptimizerSpec {
    pub fn new(rule: Rule, gamma: f64) -> Self {
        Self {
            rule,
            gamma,
            projection: Projection::None,
            schedule: Schedule::Constant,
            sign_zero: SignZero::PlusOne,
        }
    }

    pub fn ec_sgd(compressor: CompressorSpec, gamma: f64) -> Self {
        Self::new(Rule::EcSgd(compressor), gamma)
    }

    pub fn with_projection(mut self, projection: Projection) -> Self {
        self.projection = projection;
        self
    }

    pub fn with_sign_zero(mut self, sign_zero: SignZero) -> Self {
        self.sign_zero = sign_zero;
        if let Rule::EcSgd(c) = &mut self.rule {
            c.sign_zero = sign_zero;
        }
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", format!("must be finite and > 0, got {}", self.gamma)));
        }
        if let Some(beta) = self.rule.beta() {
            if !(0.0..1.0).contains(&beta) {
                return Err(invalid("beta", format!("must lie in [0, 1), got {beta}")));
            }
        }
        if let Rule::EcSgd(c) = &self.rule {
            c.validate(dim)?;
        }
        if let Schedule::Decimate { factor, .. } = &self.schedule {
            if !(*factor > 0.0 && factor.is_finite()) {
                return Err(invalid("schedule", format!("decimation factor must be > 0, got {factor}")));
            }
        }
        Ok(())
    }

    /// Step size used at step `t` (0-based).
    pub fn gamma_at(&self, t: usize) -> f64 {
        match &self.schedule {
            Schedule::Constant => self.gamma,
            Schedule::Decimate { milestones, factor } => {
                let passed = milestones.iter().filter(|&&m| m <= t).count();
                self.gamma * factor.powi(passed as i32)
            }
        }
    }

    pub fn bits_per_step(&self, dim: usize) -> u64 {
        let c = match self.rule {
            Rule::EcSgd(c) => c,
            Rule::Sgd | Rule::SgdMomentum { .. } => CompressorSpec::identity(),
            Rule::SignSgd | Rule::Signum { .. } => CompressorSpec::new(CompressorKind::SignRaw),
            Rule::SignSgdScaled => CompressorSpec::sign_scaled(),
        };
        bits_per_step(&c, dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub x: Vector,
    /// Residual error (error feedback); stays zero for other rules.
    pub e: Vector,
    /// Momentum buffer; stays zero for rules without momentum.
    pub m: Vector,
    pub t: usize,
}

impl OptimizerState {
    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.e.is_finite() && self.m.is_finite()
    }
}

pub fn init_state(_spec: &OptimizerSpec, x0: &Vector) -> OptimizerState {
    let d = x0.dim();
    OptimizerState {
        x: x0.clone(),
        e: Vector::zeros(d),
        m: Vector::zeros(d),
        t: 0,
    }
}

/// What one step did: the uncompressed update `u` it approximated (`p` for
/// error feedback, `γ g` or `γ m` otherwise) against the step `Δ` it took.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    /// `φ(u)`, `None` when `u = 0`.
    pub phi: Option<f64>,
    /// `1 − ‖Δ − u‖²/‖u‖²` clamped to `[0,1]`, `None` when `u = 0`.
    pub delta: Option<f64>,
}

/// Pure state transition.
pub fn step<R: Rng + ?Sized>(
    spec: &OptimizerSpec,
    state: &OptimizerState,
    g: &[f64],
    rng: &mut R,
) -> Result<OptimizerState> {
    let mut next = state.clone();
    step_in_place(spec, &mut next, g, rng)?;
    Ok(next)
}

pub fn step_in_place<R: Rng + ?Sized>(
    spec: &OptimizerSpec,
    state: &mut OptimizerState,
    g: &[f64],
    rng: &mut R,
) -> Result<StepReport> {
    let d = state.x.dim();
    check_dim(d, g.len())?;
    if let Some(index) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let gamma = spec.gamma_at(state.t);
    let scaled = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| gamma * x).collect() };

    let (update, delta_step) = match spec.rule {
        Rule::Sgd => {
            let u = scaled(g);
            (u.clone(), u)
        }
        Rule::SgdMomentum { beta } => {
            accumulate_momentum(state.m.as_mut_slice(), g, beta);
            let u = scaled(&state.m);
            (u.clone(), u)
        }
        Rule::SignSgd => (scaled(g), scaled(&sign_vector(g, spec.sign_zero))),
        Rule::SignSgdScaled => {
            let scale = gamma * norm1(g) / d as f64;
            let s = sign_vector(g, spec.sign_zero);
            (scaled(g), s.iter().map(|v| scale * v).collect())
        }
        Rule::Signum { beta } => {
            accumulate_momentum(state.m.as_mut_slice(), g, beta);
            (scaled(&state.m), scaled(&sign_vector(&state.m, spec.sign_zero)))
        }
        Rule::EcSgd(compressor) => {
            let p: Vec<f64> = g
                .iter()
                .zip(state.e.iter())
                .map(|(gi, ei)| gamma * gi + ei)
                .collect();
            let delta = compress(&compressor, &p, rng)?.into_inner();
            for ((ei, pi), di) in state.e.as_mut_slice().iter_mut().zip(&p).zip(&delta) {
                *ei = pi - di;
            }
            (p, delta)
        }
    };

    for (xi, di) in state.x.as_mut_slice().iter_mut().zip(&delta_step) {
        *xi -= di;
    }
    spec.projection.apply(state.x.as_mut_slice());
    state.t += 1;
    if !state.is_finite() {
        return Err(Error::Diverged { step: state.t });
    }
    Ok(StepReport {
        phi: density_phi(&update).ok(),
        delta: contraction_delta(&update, &delta_step).ok(),
    })
}

fn accumulate_momentum(m: &mut [f64], g: &[f64], beta: f64) {
    for (mi, gi) in m.iter_mut().zip(g) {
        *mi = gi + beta * *mi;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordingOptions {
    /// Record `‖x_t − Π_{G_t}(x_t)‖`; requires `x₀ = 0` and at most
    /// [`MAX_SPAN_STEPS`] steps.
    pub span: bool,
    pub phi: bool,
    pub test_loss: bool,
    /// Record a row every this many steps (the last step is always kept).
    pub every: usize,
    /// Keep the running mean of `x₀..x_T`.
    pub average_iterate: bool,
}

impl Default for RecordingOptions {
    fn default() -> Self {
        Self {
            span: false,
            phi: false,
            test_loss: false,
            every: 1,
            average_iterate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub steps: usize,
    pub seed: u64,
    /// Use the full (sub)gradient instead of a single-sample estimate.
    pub full_batch: bool,
    pub record: RecordingOptions,
}

impl RunConfig {
    pub fn new(steps: usize, seed: u64) -> Self {
        Self {
            steps,
            seed,
            full_batch: false,
            record: RecordingOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub f_init: f64,
    pub final_state: OptimizerState,
    /// Running minimum of the per-step contraction (1 when nothing was
    /// ever compressed).
    pub min_delta: f64,
    /// Mean of `x₀..x_T`, when requested.
    pub iterate_mean: Option<Vector>,
}

/// Everything an observer can see about one step.
#[derive(Debug)]
pub struct StepEvent<'a> {
    /// Iterate the gradient was evaluated at (`x_t`).
    pub x_prev: &'a [f64],
    pub gradient: &'a [f64],
    /// State after the step (`x_{t+1}`, `e_{t+1}`, `t + 1`).
    pub state: &'a OptimizerState,
    pub gamma: f64,
    pub report: StepReport,
}

pub fn run(spec: &OptimizerSpec, oracle: &Oracle, x0: &Vector, cfg: &RunConfig) -> Result<Trace> {
    run_observed(spec, oracle, x0, cfg, |_| {})
}

/// [`run`] with a callback after every step.
pub fn run_observed<F>(
    spec: &OptimizerSpec,
    oracle: &Oracle,
    x0: &Vector,
    cfg: &RunConfig,
    mut observer: F,
) -> Result<Trace>
where
    F: FnMut(&StepEvent<'_>),
{
    let d = oracle.dim();
    check_dim(d, x0.dim())?;
    spec.validate(d)?;
    if cfg.steps == 0 {
        return Err(invalid("steps", "must be at least 1"));
    }
    if cfg.record.every == 0 {
        return Err(invalid("every", "must be at least 1"));
    }
    let mut tracker = if cfg.record.span {
        if cfg.steps > MAX_SPAN_STEPS {
            return Err(invalid(
                "span",
                format!("span recording is limited to {MAX_SPAN_STEPS} steps, got {}", cfg.steps),
            ));
        }
        if x0.iter().any(|v| *v != 0.0) {
            return Err(invalid("span", "span recording requires x0 = 0"));
        }
        Some(SpanTracker::new(d))
    } else {
        None
    };

    let mut oracle_rng = stream(cfg.seed, Stream::Oracle);
    let mut compressor_rng = stream(cfg.seed, Stream::Compressor);
    let bits = spec.bits_per_step(d);
    let mut state = init_state(spec, x0);
    let mut mean = cfg.record.average_iterate.then(|| {
        let mut acc = CompensatedSum::new(d);
        acc.add_scaled(1.0, x0);
        acc
    });
    let mut rows = Vec::with_capacity(cfg.steps / cfg.record.every + 1);
    let mut min_delta = 1.0f64;
    let f_init = oracle.loss(x0);

    for _ in 0..cfg.steps {
        let gamma = spec.gamma_at(state.t);
        let g = if cfg.full_batch {
            oracle.full_gradient(&state.x)
        } else {
            oracle.sample_gradient(&state.x, &mut oracle_rng).g
        };
        // A finite but huge iterate can overflow the gradient.
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { step: state.t });
        }
        let x_prev = state.x.clone();
        let report = step_in_place(spec, &mut state, &g, &mut compressor_rng)?;
        if let Some(delta) = report.delta {
            min_delta = min_delta.min(delta);
        }
        if let Some(tr) = tracker.as_mut() {
            tr.push(&g)?;
        }
        if let Some(acc) = mean.as_mut() {
            acc.add_scaled(1.0, &state.x);
        }
        observer(&StepEvent {
            x_prev: &x_prev,
            gradient: &g,
            state: &state,
            gamma,
            report,
        });

        let t = state.t;
        if t % cfg.record.every == 0 || t == cfg.steps {
            let x = &state.x;
            rows.push(TraceRow {
                t,
                f_val: oracle.loss(x),
                grad_norm_sq: oracle.full_gradient(x).norm_sq(),
                err_norm_sq: state.e.norm_sq(),
                phi_p: if cfg.record.phi { report.phi } else { None },
                span_dist: match tracker.as_ref() {
                    Some(tr) => Some(tr.distance(x)?),
                    None => None,
                },
                bits_cum: bits * t as u64,
                test_loss: if cfg.record.test_loss { oracle.test_loss(x) } else { None },
            });
        }
    }

    let iterate_mean = mean.map(|acc| {
        let n = (cfg.steps + 1) as f64;
        Vector::from_raw(acc.value().into_iter().map(|v| v / n).collect())
    });
    Ok(Trace {
        seed: cfg.seed,
        rows,
        f_init,
        final_state: state,
        min_delta,
        iterate_mean,
    })
}
