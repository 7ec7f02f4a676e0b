//! Trace records, run summaries and the closed-form bounds that runs are
//! checked against.

use crate::error::{invalid, Result};
use crate::linalg::SpanBasis;
use crate::optimizers::Trace;
use crate::oracles::Oracle;

/// One recorded step. Optional columns are `None` when not requested or
/// not defined for the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub f_val: f64,
    pub grad_norm_sq: f64,
    pub err_norm_sq: f64,
    pub phi_p: Option<f64>,
    pub span_dist: Option<f64>,
    pub bits_cum: u64,
    pub test_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub min_grad_norm_sq: f64,
    /// Loss at the mean iterate, when it was tracked.
    pub avg_iterate_loss: Option<f64>,
    pub final_err_norm_sq: f64,
    /// Smallest per-step contraction seen during the run.
    pub empirical_delta: f64,
    pub f_init: f64,
    pub f_final: f64,
    pub f_min: f64,
}

pub fn summarize(trace: &Trace, oracle: &Oracle) -> RunSummary {
    let fold_min = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::INFINITY, f64::min);
    let f_final = trace.rows.last().map_or(trace.f_init, |r| r.f_val);
    RunSummary {
        seed: trace.seed,
        min_grad_norm_sq: fold_min(&mut trace.rows.iter().map(|r| r.grad_norm_sq)),
        avg_iterate_loss: trace.iterate_mean.as_ref().map(|x| oracle.loss(x)),
        final_err_norm_sq: trace.final_state.e.norm_sq(),
        empirical_delta: trace.min_delta,
        f_init: trace.f_init,
        f_final,
        f_min: fold_min(&mut trace.rows.iter().map(|r| r.f_val)).min(trace.f_init),
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 1.0 {
        Ok(())
    } else {
        Err(invalid("delta", format!("must lie in (0, 1], got {delta}")))
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

fn check_nonnegative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and >= 0, got {v}")))
    }
}

/// Bound on the expected squared error-feedback residual,
/// `E‖e_t‖² ≤ 4(1−δ)γ²σ²/δ²`.
pub fn lemma2_bound(gamma: f64, sigma_sq: f64, delta: f64) -> Result<f64> {
    check_positive("gamma", gamma)?;
    check_nonnegative("sigma_sq", sigma_sq)?;
    check_delta(delta)?;
    Ok(4.0 * (1.0 - delta) * gamma * gamma * sigma_sq / (delta * delta))
}

/// Non-convex rate for error-compensated SGD with constant step `γ`:
///
/// `min_t E‖∇f(x_t)‖² ≤ 2f₀/(γ(T+1)) + γLσ²/2 + 4γ²L²σ²(1−δ)/δ²`
///
/// where `f₀ = f(x₀) − f⋆` and `steps = T + 1`.
pub fn theorem2_bound(f0: f64, l: f64, sigma_sq: f64, delta: f64, gamma: f64, t: usize) -> Result<f64> {
    check_nonnegative("f0", f0)?;
    check_positive("L", l)?;
    check_nonnegative("sigma_sq", sigma_sq)?;
    check_delta(delta)?;
    check_positive("gamma", gamma)?;
    let steps = (t + 1) as f64;
    Ok(2.0 * f0 / (gamma * steps)
        + gamma * l * sigma_sq / 2.0
        + 4.0 * gamma * gamma * l * l * sigma_sq * (1.0 - delta) / (delta * delta))
}

/// Plain SGD rate at `γ = 1/√(T+1)`: `(2f₀ + Lσ²)/(2√(T+1))`.
pub fn sgd_nonconvex_bound(f0: f64, l: f64, sigma_sq: f64, t: usize) -> Result<f64> {
    check_nonnegative("f0", f0)?;
    check_positive("L", l)?;
    check_nonnegative("sigma_sq", sigma_sq)?;
    Ok((2.0 * f0 + l * sigma_sq) / (2.0 * ((t + 1) as f64).sqrt()))
}

/// Convex non-smooth rate for the averaged iterate:
///
/// `E f(x̄_T) − f⋆ ≤ ‖x₀−x⋆‖²/(2γ(T+1)) + γσ²(1/2 + 2√(1−δ)/δ)`
pub fn theorem3_bound(dist0_sq: f64, gamma: f64, t: usize, sigma_sq: f64, delta: f64) -> Result<f64> {
    check_nonnegative("dist0_sq", dist0_sq)?;
    check_positive("gamma", gamma)?;
    check_nonnegative("sigma_sq", sigma_sq)?;
    check_delta(delta)?;
    let steps = (t + 1) as f64;
    Ok(dist0_sq / (2.0 * gamma * steps)
        + gamma * sigma_sq * (0.5 + 2.0 * (1.0 - delta).sqrt() / delta))
}

/// Deterministic cap on the squared distance of the iterate to the
/// gradient span, `4γ²(1−δ)/δ² · max_t ‖g_t‖²`.
pub fn span_distance_bound_sq(gamma: f64, delta: f64, max_grad_norm_sq: f64) -> Result<f64> {
    check_positive("gamma", gamma)?;
    check_delta(delta)?;
    check_nonnegative("max_grad_norm_sq", max_grad_norm_sq)?;
    Ok(4.0 * gamma * gamma * (1.0 - delta) * max_grad_norm_sq / (delta * delta))
}

/// Incrementally tracks `span{g₀, …, g_t}`.
#[derive(Debug, Clone)]
pub struct SpanTracker {
    basis: SpanBasis,
}

impl SpanTracker {
    pub fn new(dim: usize) -> Self {
        Self {
            basis: SpanBasis::new(dim),
        }
    }

    pub fn push(&mut self, g: &[f64]) -> Result<bool> {
        self.basis.extend(g)
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        self.basis.distance(x)
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn basis(&self) -> &SpanBasis {
        &self.basis
    }
}

/// `‖x_t − Π_{G_t}(x_t)‖` for `t = 1..`, where `G_t` spans the first `t`
/// gradients and `iterates[t-1]` is `x_t`.
pub fn span_distance_series<G, X>(gradients: &[G], iterates: &[X]) -> Result<Vec<f64>>
where
    G: AsRef<[f64]>,
    X: AsRef<[f64]>,
{
    let Some(first) = gradients.first() else {
        return Ok(Vec::new());
    };
    if gradients.len() != iterates.len() {
        return Err(crate::Error::DimensionMismatch {
            expected: gradients.len(),
            got: iterates.len(),
        });
    }
    let mut tracker = SpanTracker::new(first.as_ref().len());
    gradients
        .iter()
        .zip(iterates)
        .map(|(g, x)| {
            tracker.push(g.as_ref())?;
            tracker.distance(x.as_ref())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn bound_values() {
        assert!(close(lemma2_bound(0.1, 1.0, 0.5).unwrap(), 0.08));
        assert_eq!(lemma2_bound(0.1, 1.0, 1.0).unwrap(), 0.0);
        assert!(close(lemma2_bound(1.0, 3.0, 0.5).unwrap(), 24.0));
        assert!(close(theorem2_bound(1.0, 1.0, 1.0, 0.25, 0.1, 99).unwrap(), 0.73));
        assert!(close(theorem3_bound(4.0, 0.1, 99, 1.0, 0.5).unwrap(), 0.2 + 0.1 * (0.5 + 2.0 * 0.5f64.sqrt() / 0.5)));
        assert!((theorem3_bound(4.0, 0.1, 99, 1.0, 0.5).unwrap() - 0.5328).abs() < 1e-4);
        assert!(close(sgd_nonconvex_bound(1.0, 1.0, 1.0, 99).unwrap(), 0.15));
        assert!(close(span_distance_bound_sq(0.1, 0.5, 2.0).unwrap(), 0.16));
    }

    #[test]
    fn bounds_reject_bad_delta() {
        for bad in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(lemma2_bound(0.1, 1.0, bad), Err(Error::InvalidParameter { name: "delta", .. })));
            assert!(theorem2_bound(1.0, 1.0, 1.0, bad, 0.1, 10).is_err());
            assert!(theorem3_bound(1.0, 0.1, 10, 1.0, bad).is_err());
            assert!(span_distance_bound_sq(0.1, bad, 1.0).is_err());
        }
        assert!(theorem2_bound(1.0, 0.0, 1.0, 0.5, 0.1, 10).is_err());
    }

    #[test]
    fn span_series_for_axis_gradients() {
        let gs = [vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let xs = [vec![2.0, 1.0, 0.0], vec![2.0, 1.0, 3.0]];
        let d = span_distance_series(&gs, &xs).unwrap();
        assert!(close(d[0], 1.0));
        assert!(close(d[1], 3.0));
        assert!(span_distance_series(&gs, &xs[..1]).is_err());
    }

    proptest! {
        #[test]
        fn lemma2_decreases_in_delta(gamma in 1e-4..1.0f64, s in 0.0..10.0f64, a in 0.01..1.0f64, b in 0.01..1.0f64) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(lemma2_bound(gamma, s, hi).unwrap() <= lemma2_bound(gamma, s, lo).unwrap());
        }

        #[test]
        fn theorem2_decreases_in_delta_and_steps(
            f0 in 0.0..10.0f64, l in 0.1..10.0f64, s in 0.0..10.0f64,
            gamma in 1e-4..1.0f64, a in 0.01..1.0f64, b in 0.01..1.0f64, t in 0usize..10_000,
        ) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let at = |d, t| theorem2_bound(f0, l, s, d, gamma, t).unwrap();
            prop_assert!(at(hi, t) <= at(lo, t));
            prop_assert!(at(lo, t + 1) <= at(lo, t));
        }

        #[test]
        fn theorem3_decreases_in_delta(dist in 0.0..10.0f64, gamma in 1e-4..1.0f64, s in 0.0..10.0f64,
                                       a in 0.01..1.0f64, b in 0.01..1.0f64) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(theorem3_bound(dist, gamma, 100, s, hi).unwrap() <= theorem3_bound(dist, gamma, 100, s, lo).unwrap());
        }
    }
}
