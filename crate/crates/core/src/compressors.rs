//! Compression operators `C(·)` used inside error feedback, their measured
//! contraction quality, the sign density `φ`, and per-step bit cost.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::{norm1, norm_sq, Vector};

/// Value of `sgn(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignZero {
    /// `sgn(0) = +1`
    #[default]
    PlusOne,
    /// `sgn(0) = 0`
    Zero,
}

impl FromStr for SignZero {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plus_one" => Ok(Self::PlusOne),
            "zero" => Ok(Self::Zero),
            other => Err(format!("expected `plus_one` or `zero`, got `{other}`")),
        }
    }
}

impl fmt::Display for SignZero {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PlusOne => "plus_one",
            Self::Zero => "zero",
        })
    }
}

pub fn sign(x: f64, zero: SignZero) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        match zero {
            SignZero::PlusOne => 1.0,
            SignZero::Zero => 0.0,
        }
    }
}

/// Elementwise sign. The all-zero vector maps to itself under either
/// convention.
pub fn sign_vector(v: &[f64], zero: SignZero) -> Vec<f64> {
    if v.iter().all(|&x| x == 0.0) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|&x| sign(x, zero)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressorKind {
    Identity,
    /// `(‖v‖₁/d) · sgn(v)`
    SignScaled,
    /// `sgn(v)`
    SignRaw,
    /// Keep the `k` entries of largest magnitude.
    TopK(usize),
    /// `(d/k) ·` a uniformly random `k`-subset mask.
    RandKUnbiased(usize),
    /// A uniformly random `k`-subset mask, unscaled.
    RandKFeedback(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressorSpec {
    pub kind: CompressorKind,
    pub sign_zero: SignZero,
}

impl CompressorSpec {
    pub fn new(kind: CompressorKind) -> Self {
        Self {
            kind,
            sign_zero: SignZero::default(),
        }
    }

    pub fn identity() -> Self {
        Self::new(CompressorKind::Identity)
    }

    pub fn sign_scaled() -> Self {
        Self::new(CompressorKind::SignScaled)
    }

    pub fn top_k(k: usize) -> Self {
        Self::new(CompressorKind::TopK(k))
    }

    pub fn with_sign_zero(mut self, sign_zero: SignZero) -> Self {
        self.sign_zero = sign_zero;
        self
    }

    pub fn k(&self) -> Option<usize> {
        match self.kind {
            CompressorKind::TopK(k)
            | CompressorKind::RandKUnbiased(k)
            | CompressorKind::RandKFeedback(k) => Some(k),
            _ => None,
        }
    }

    pub fn uses_rng(&self) -> bool {
        matches!(
            self.kind,
            CompressorKind::RandKUnbiased(_) | CompressorKind::RandKFeedback(_)
        )
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self.k() {
            Some(k) if k == 0 || k > dim => Err(invalid(
                "k",
                format!("must satisfy 1 <= k <= d = {dim}, got {k}"),
            )),
            _ => Ok(()),
        }
    }

    /// Input-independent lower bound on δ, when one exists. For
    /// `rand_k_feedback` the bound holds in expectation; `sign_scaled` has the
    /// input-dependent δ = φ(v) and reports `None` here.
    pub fn guaranteed_delta(&self, dim: usize) -> Option<f64> {
        match self.kind {
            CompressorKind::Identity => Some(1.0),
            CompressorKind::TopK(k) | CompressorKind::RandKFeedback(k) => {
                Some(k as f64 / dim as f64)
            }
            CompressorKind::SignScaled
            | CompressorKind::SignRaw
            | CompressorKind::RandKUnbiased(_) => None,
        }
    }
}

impl FromStr for CompressorSpec {
    type Err = String;

    /// Accepts `identity`, `sign_scaled`, `sign_raw`, `top_k:K`,
    /// `rand_k:K` (alias `rand_k_feedback:K`) and `rand_k_unbiased:K`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let k = || -> Result<usize, String> {
            let a = arg.ok_or_else(|| format!("`{name}` needs a size, e.g. `{name}:4`"))?;
            a.parse::<usize>()
                .map_err(|_| format!("invalid k `{a}` in `{s}`"))
        };
        let kind = match name {
            "identity" => CompressorKind::Identity,
            "sign_scaled" => CompressorKind::SignScaled,
            "sign_raw" => CompressorKind::SignRaw,
            "top_k" => CompressorKind::TopK(k()?),
            "rand_k" | "rand_k_feedback" => CompressorKind::RandKFeedback(k()?),
            "rand_k_unbiased" => CompressorKind::RandKUnbiased(k()?),
            other => return Err(format!("unknown compressor `{other}`")),
        };
        if arg.is_some() && !matches!(name, "top_k" | "rand_k" | "rand_k_feedback" | "rand_k_unbiased") {
            return Err(format!("compressor `{name}` takes no argument"));
        }
        Ok(Self::new(kind))
    }
}

impl fmt::Display for CompressorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            CompressorKind::Identity => f.write_str("identity"),
            CompressorKind::SignScaled => f.write_str("sign_scaled"),
            CompressorKind::SignRaw => f.write_str("sign_raw"),
            CompressorKind::TopK(k) => write!(f, "top_k:{k}"),
            CompressorKind::RandKUnbiased(k) => write!(f, "rand_k_unbiased:{k}"),
            CompressorKind::RandKFeedback(k) => write!(f, "rand_k:{k}"),
        }
    }
}

/// `k` distinct indices uniformly without replacement (Fisher–Yates prefix).
pub fn sample_mask<R: Rng + ?Sized>(dim: usize, k: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(k <= dim);
    let mut idx: Vec<usize> = (0..dim).collect();
    for i in 0..k {
        let j = rng.random_range(i..dim);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Indices of the `k` largest-magnitude entries; ties go to the lower index.
pub fn top_k_indices(v: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    let order = |&a: &usize, &b: &usize| {
        v[b].abs()
            .total_cmp(&v[a].abs())
            .then_with(|| a.cmp(&b))
    };
    if k < idx.len() {
        idx.select_nth_unstable_by(k, order);
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

/// Applies the compressor. The random stream is touched only by the
/// `rand_k` kinds. `C(0) = 0` for every kind.
pub fn compress<R: Rng + ?Sized>(spec: &CompressorSpec, v: &[f64], rng: &mut R) -> Result<Vector> {
    let d = v.len();
    if d == 0 {
        return Err(Error::EmptyVector);
    }
    spec.validate(d)?;
    let out = match spec.kind {
        CompressorKind::Identity => v.to_vec(),
        CompressorKind::SignScaled => {
            let scale = norm1(v) / d as f64;
            sign_vector(v, spec.sign_zero)
                .into_iter()
                .map(|s| scale * s)
                .collect()
        }
        CompressorKind::SignRaw => sign_vector(v, spec.sign_zero),
        CompressorKind::TopK(k) => {
            let mut out = vec![0.0; d];
            for i in top_k_indices(v, k) {
                out[i] = v[i];
            }
            out
        }
        CompressorKind::RandKUnbiased(k) => {
            let scale = d as f64 / k as f64;
            let mut out = vec![0.0; d];
            for i in sample_mask(d, k, rng) {
                out[i] = scale * v[i];
            }
            out
        }
        CompressorKind::RandKFeedback(k) => {
            let mut out = vec![0.0; d];
            for i in sample_mask(d, k, rng) {
                out[i] = v[i];
            }
            out
        }
    };
    Ok(Vector::from_raw(out))
}

/// Measured contraction `1 − ‖c − v‖²/‖v‖²`, clamped to `[0, 1]`.
pub fn contraction_delta(v: &[f64], c: &[f64]) -> Result<f64> {
    if v.len() != c.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            got: c.len(),
        });
    }
    let vv = norm_sq(v);
    if vv == 0.0 {
        return Err(Error::ZeroVector {
            what: "contraction delta",
        });
    }
    let err: f64 = v.iter().zip(c).map(|(a, b)| (b - a) * (b - a)).sum();
    Ok((1.0 - err / vv).clamp(0.0, 1.0))
}

/// Density `φ(v) = ‖v‖₁² / (d ‖v‖₂²)`, which lies in `[1/d, 1]`.
pub fn density_phi(v: &[f64]) -> Result<f64> {
    let sq = norm_sq(v);
    if sq == 0.0 || v.is_empty() {
        return Err(Error::ZeroVector { what: "density φ" });
    }
    let l1 = norm1(v);
    Ok(l1 * l1 / (v.len() as f64 * sq))
}

/// Bits sent per step for one `d`-dimensional tensor: sign schemes send `d`
/// sign bits plus one 32-bit scale, sparse schemes send `k` (value, index)
/// pairs, dense sends 32 bits per coordinate.
pub fn bits_per_step(spec: &CompressorSpec, dim: usize) -> u64 {
    let d = dim as u64;
    match spec.kind {
        CompressorKind::Identity => 32 * d,
        CompressorKind::SignScaled | CompressorKind::SignRaw => d + 32,
        CompressorKind::TopK(k) | CompressorKind::RandKUnbiased(k) | CompressorKind::RandKFeedback(k) => {
            k as u64 * (32 + index_bits(dim))
        }
    }
}

fn index_bits(dim: usize) -> u64 {
    // ceil(log2 d)
    if dim <= 1 {
        0
    } else {
        u64::from(usize::BITS - (dim - 1).leading_zeros())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    fn run(spec: CompressorSpec, v: &[f64]) -> Vec<f64> {
        compress(&spec, v, &mut stream(0, Stream::Compressor))
            .unwrap()
            .into_inner()
    }

    #[test]
    fn compress_examples() {
        assert_eq!(run(CompressorSpec::sign_scaled(), &[3.0, -1.0]), vec![2.0, -2.0]);
        assert_eq!(run(CompressorSpec::sign_scaled(), &[1.0, 1.0]), vec![1.0, 1.0]);
        assert_eq!(run(CompressorSpec::top_k(1), &[3.0, -1.0]), vec![3.0, 0.0]);
        assert_eq!(run(CompressorSpec::identity(), &[0.5, -7.0, 2.0]), vec![0.5, -7.0, 2.0]);
    }

    #[test]
    fn zero_maps_to_zero_for_every_kind() {
        let kinds = [
            CompressorKind::Identity,
            CompressorKind::SignScaled,
            CompressorKind::SignRaw,
            CompressorKind::TopK(2),
            CompressorKind::RandKUnbiased(2),
            CompressorKind::RandKFeedback(2),
        ];
        for kind in kinds {
            for zero in [SignZero::PlusOne, SignZero::Zero] {
                let spec = CompressorSpec::new(kind).with_sign_zero(zero);
                assert_eq!(run(spec, &[0.0; 4]), vec![0.0; 4], "{spec}");
            }
        }
    }

    #[test]
    fn sign_zero_convention() {
        let plus = CompressorSpec::new(CompressorKind::SignRaw);
        let zero = plus.with_sign_zero(SignZero::Zero);
        assert_eq!(run(plus, &[0.0, -2.0]), vec![1.0, -1.0]);
        assert_eq!(run(zero, &[0.0, -2.0]), vec![0.0, -1.0]);
    }

    #[test]
    fn top_k_ties_prefer_lower_index() {
        assert_eq!(run(CompressorSpec::top_k(1), &[-2.0, 2.0, 2.0]), vec![-2.0, 0.0, 0.0]);
        assert_eq!(run(CompressorSpec::top_k(2), &[1.0, 3.0, -3.0, 3.0]), vec![0.0, 3.0, -3.0, 0.0]);
    }

    #[test]
    fn k_out_of_range() {
        let mut rng = stream(0, Stream::Compressor);
        assert!(compress(&CompressorSpec::top_k(0), &[1.0], &mut rng).is_err());
        assert!(compress(&CompressorSpec::top_k(3), &[1.0, 2.0], &mut rng).is_err());
        let spec = CompressorSpec::new(CompressorKind::RandKUnbiased(5));
        assert!(matches!(
            compress(&spec, &[1.0; 4], &mut rng),
            Err(Error::InvalidParameter { name: "k", .. })
        ));
    }

    #[test]
    fn contraction_delta_examples() {
        assert!((contraction_delta(&[3.0, -1.0], &[2.0, -2.0]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(contraction_delta(&[3.0, -1.0], &[3.0, -1.0]).unwrap(), 1.0);
        assert!((contraction_delta(&[3.0, -1.0], &[3.0, 0.0]).unwrap() - 0.9).abs() < 1e-15);
        assert!(matches!(
            contraction_delta(&[0.0, 0.0], &[0.0, 0.0]),
            Err(Error::ZeroVector { .. })
        ));
        // sgn(v) overshoots small vectors: clamped at 0.
        assert_eq!(contraction_delta(&[0.01, 0.01], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn density_examples() {
        assert_eq!(density_phi(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.25);
        assert_eq!(density_phi(&[-1.5; 7]).unwrap(), 1.0);
        assert!((density_phi(&[3.0, -1.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(density_phi(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn bits_examples() {
        assert_eq!(bits_per_step(&CompressorSpec::sign_scaled(), 1000), 1032);
        assert_eq!(bits_per_step(&CompressorSpec::identity(), 4), 128);
        assert_eq!(bits_per_step(&CompressorSpec::top_k(2), 1024), 84);
        assert_eq!(bits_per_step(&CompressorSpec::top_k(2), 1025), 86);
        assert_eq!(bits_per_step(&CompressorSpec::top_k(1), 1), 32);
    }

    #[test]
    fn spec_parsing_round_trips() {
        for s in ["identity", "sign_scaled", "sign_raw", "top_k:25", "rand_k:3", "rand_k_unbiased:7"] {
            let spec: CompressorSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("top_k".parse::<CompressorSpec>().is_err());
        assert!("top_k:x".parse::<CompressorSpec>().is_err());
        assert!("identity:3".parse::<CompressorSpec>().is_err());
        assert!("qsgd".parse::<CompressorSpec>().is_err());
    }

    #[test]
    fn rand_k_masks_are_distinct_and_seeded() {
        let mut rng = stream(3, Stream::Compressor);
        let m = sample_mask(10, 10, &mut rng);
        let mut sorted = m.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        let a = sample_mask(50, 5, &mut stream(9, Stream::Compressor));
        let b = sample_mask(50, 5, &mut stream(9, Stream::Compressor));
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn phi_in_range(v in prop::collection::vec(-100.0..100.0f64, 1..40)) {
            prop_assume!(norm_sq(&v) > 0.0);
            let phi = density_phi(&v).unwrap();
            let d = v.len() as f64;
            prop_assert!(phi >= 1.0 / d - 1e-12 && phi <= 1.0 + 1e-12);
        }

        #[test]
        fn sign_scaled_preserves_l1_and_meets_phi(v in prop::collection::vec(-100.0..100.0f64, 1..40)) {
            prop_assume!(norm_sq(&v) > 0.0);
            let c = run(CompressorSpec::sign_scaled(), &v);
            let l1 = norm1(&v);
            prop_assert!((norm1(&c) - l1).abs() <= 1e-12 * l1);
            let delta = contraction_delta(&v, &c).unwrap();
            prop_assert!(delta >= density_phi(&v).unwrap() - 1e-12);
        }

        #[test]
        fn top_k_meets_k_over_d(v in prop::collection::vec(-100.0..100.0f64, 1..40), k_frac in 0.0..1.0f64) {
            prop_assume!(norm_sq(&v) > 0.0);
            let k = 1 + ((v.len() - 1) as f64 * k_frac) as usize;
            let c = run(CompressorSpec::top_k(k), &v);
            prop_assert_eq!(c.iter().filter(|x| **x != 0.0).count() <= k, true);
            let delta = contraction_delta(&v, &c).unwrap();
            prop_assert!(delta >= k as f64 / v.len() as f64 - 1e-12);
        }
    }
}
