//! Stochastic first-order oracles for the analytic problems: the three
//! sign-descent counterexamples, the sign-aligned finite-sum family, the
//! sparse-noise quadratic, the over-parameterized "wilson" least-squares
//! generator, and generic least squares.
//!
//! Finite-sum objectives `f = Σᵢ fᵢ` are sampled as `n·∇fᵢ` with `i`
//! uniform, which keeps every stochastic gradient unbiased for `∇f`.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::compressors::{sign, SignZero};
use crate::error::{invalid, Result};
use crate::linalg::{
    axpy, dot, largest_eigenvalue, min_norm_solution, norm, norm_sq, normal_equations_solution,
    sub, DenseMatrix, Vector,
};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub enum OracleKind {
    /// `f(x) = x/4` on `[−1, 1]` with gradient noise `{4 w.p. ¼, −1 w.p. ¾}`.
    Ce1,
    /// `f(x) = ε|x₁+x₂| + |x₁−x₂|`, deterministic subgradient.
    Ce2 { eps: f64 },
    /// `f(x) = ⟨a₁,x⟩² + ⟨a₂,x⟩²` with `a₁,₂ = ±(1,−1) + ε(1,1)`.
    Ce3 { eps: f64 },
    /// `f(x) = Σᵢ (⟨aᵢ,x⟩ − bᵢ)²` where every `sgn(aᵢ) = ±s`.
    Theorem1 { d: usize, n: usize },
    /// `f(x) = ½‖x‖²`, noise `N(0, noise_std²)` on the first coordinate only.
    SparseNoise { d: usize, noise_std: f64 },
    /// Over-parameterized least squares, `n` points in `d = 6n`, split
    /// equally into train and test.
    Wilson { n: usize },
    /// `‖A x − b‖²` with standard Gaussian `A` (`n × d`) and `b`.
    LeastSquares { n: usize, d: usize },
}

impl OracleKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ce1 => "ce1",
            Self::Ce2 { .. } => "ce2",
            Self::Ce3 { .. } => "ce3",
            Self::Theorem1 { .. } => "theorem1",
            Self::SparseNoise { .. } => "sparse_noise",
            Self::Wilson { .. } => "wilson",
            Self::LeastSquares { .. } => "least_squares",
        }
    }
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ce1 => write!(f, "ce1"),
            Self::Ce2 { eps } => write!(f, "ce2(eps={eps})"),
            Self::Ce3 { eps } => write!(f, "ce3(eps={eps})"),
            Self::Theorem1 { d, n } => write!(f, "theorem1(d={d}, n={n})"),
            Self::SparseNoise { d, noise_std } => write!(f, "sparse_noise(d={d}, noise_std={noise_std})"),
            Self::Wilson { n } => write!(f, "wilson(n={n})"),
            Self::LeastSquares { n, d } => write!(f, "least_squares(n={n}, d={d})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Unconstrained,
    Box { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMeta {
    /// Bound on `E‖g‖²`. Global unless `sigma_region_radius` is set.
    pub sigma_sq: Option<f64>,
    /// When set, `sigma_sq` only holds on the ball of this radius around
    /// `x_star` (radius `‖x₀ − x⋆‖` for the default start).
    pub sigma_region_radius: Option<f64>,
    pub smooth_l: Option<f64>,
    pub f_star: Option<f64>,
    pub x_star: Option<Vector>,
    pub domain: Domain,
    pub convex: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub g: Vector,
    pub component_index: Option<usize>,
}

/// `f(x) = ‖A x − b‖²`
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
}

impl LeastSquares {
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        sub(&self.a.mul_vec(x), &self.b)
    }

    pub fn loss(&self, x: &[f64]) -> f64 {
        norm_sq(&self.residual(x))
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.a.tmul_vec(&self.residual(x));
        g.iter_mut().for_each(|v| *v *= 2.0);
        g
    }

    /// Mean squared error `‖A x − b‖² / n`.
    pub fn mean_loss(&self, x: &[f64]) -> f64 {
        self.loss(x) / self.a.rows() as f64
    }
}

#[derive(Debug, Clone)]
enum Problem {
    Ce1,
    Ce2 { eps: f64 },
    HalfSquaredNorm { noise_std: f64 },
    LeastSquares(LeastSquares),
}

#[derive(Debug, Clone)]
pub struct Oracle {
    kind: OracleKind,
    dim: usize,
    meta: OracleMeta,
    problem: Problem,
    test: Option<LeastSquares>,
    sign_pattern: Option<Vec<f64>>,
    default_x0: Vector,
}

/// Builds an oracle. `seed` drives any random instance data (labels,
/// splits, magnitudes); sampling noise comes from the stream passed to
/// [`Oracle::sample_gradient`].
pub fn build_oracle(kind: &OracleKind, seed: u64) -> Result<Oracle> {
    Oracle::build(kind, seed)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(invalid("eps", format!("must lie in (0, 1), got {eps}")))
    }
}

impl Oracle {
    pub fn build(kind: &OracleKind, seed: u64) -> Result<Self> {
        match *kind {
            OracleKind::Ce1 => Ok(Self {
                kind: kind.clone(),
                dim: 1,
                meta: OracleMeta {
                    // E g² = 16/4 + 3/4
                    sigma_sq: Some(4.75),
                    sigma_region_radius: None,
                    smooth_l: Some(0.0),
                    f_star: Some(-0.25),
                    x_star: Some(Vector::filled(1, -1.0)),
                    domain: Domain::Box { lo: -1.0, hi: 1.0 },
                    convex: true,
                },
                problem: Problem::Ce1,
                test: None,
                sign_pattern: None,
                default_x0: Vector::zeros(1),
            }),
            OracleKind::Ce2 { eps } => {
                check_eps(eps)?;
                Ok(Self {
                    kind: kind.clone(),
                    dim: 2,
                    meta: OracleMeta {
                        sigma_sq: Some(2.0 * eps * eps + 2.0),
                        sigma_region_radius: None,
                        smooth_l: None,
                        f_star: Some(0.0),
                        x_star: Some(Vector::zeros(2)),
                        domain: Domain::Unconstrained,
                        convex: true,
                    },
                    problem: Problem::Ce2 { eps },
                    test: None,
                    sign_pattern: None,
                    default_x0: Vector::filled(2, 1.0),
                })
            }
            OracleKind::Ce3 { eps } => {
                check_eps(eps)?;
                let a = DenseMatrix::from_rows(&[
                    vec![1.0 + eps, -1.0 + eps],
                    vec![-1.0 + eps, 1.0 + eps],
                ])?;
                let ls = LeastSquares { a, b: vec![0.0, 0.0] };
                let mut o = Self::from_least_squares(kind.clone(), ls, Vector::filled(2, 1.0))?;
                o.meta.x_star = Some(Vector::zeros(2));
                o.meta.f_star = Some(0.0);
                Ok(o)
            }
            OracleKind::Theorem1 { d, n } => theorem1(kind, d, n, seed),
            OracleKind::SparseNoise { d, noise_std } => {
                if d == 0 {
                    return Err(invalid("d", "must be at least 1"));
                }
                if !(noise_std >= 0.0 && noise_std.is_finite()) {
                    return Err(invalid("noise_std", format!("must be finite and >= 0, got {noise_std}")));
                }
                let x0 = Vector::filled(d, 1.0);
                let radius = x0.norm();
                Ok(Self {
                    kind: kind.clone(),
                    dim: d,
                    meta: OracleMeta {
                        sigma_sq: Some(radius * radius + noise_std * noise_std),
                        sigma_region_radius: Some(radius),
                        smooth_l: Some(1.0),
                        f_star: Some(0.0),
                        x_star: Some(Vector::zeros(d)),
                        domain: Domain::Unconstrained,
                        convex: true,
                    },
                    problem: Problem::HalfSquaredNorm { noise_std },
                    test: None,
                    sign_pattern: None,
                    default_x0: x0,
                })
            }
            OracleKind::Wilson { n } => wilson(kind, n, seed),
            OracleKind::LeastSquares { n, d } => {
                if n == 0 || d == 0 {
                    return Err(invalid("n", "least squares needs n >= 1 and d >= 1"));
                }
                let mut rng = stream(seed, Stream::Data);
                let data = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
                let b = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                Self::least_squares(DenseMatrix::new(n, d, data)?, b)
            }
        }
    }

    /// Generic least squares `‖A x − b‖²` sampled one row at a time.
    pub fn least_squares(a: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        let kind = OracleKind::LeastSquares { n: a.rows(), d: a.cols() };
        let x0 = Vector::zeros(a.cols());
        Self::from_least_squares(kind, LeastSquares { a, b }, x0)
    }

    fn from_least_squares(kind: OracleKind, ls: LeastSquares, x0: Vector) -> Result<Self> {
        crate::linalg::check_dim(ls.a.rows(), ls.b.len())?;
        let (n, d) = (ls.a.rows(), ls.a.cols());
        let gram_top = if n <= d {
            largest_eigenvalue(&ls.a.gram_rows())
        } else {
            largest_eigenvalue(&ls.a.gram_cols())
        };
        let x_star = if n >= d {
            normal_equations_solution(&ls.a, &ls.b).ok()
        } else {
            min_norm_solution(&ls.a, &ls.b).ok()
        };
        let f_star = x_star.as_ref().map(|x| ls.loss(x));
        let sigma = x_star.as_ref().map(|xs| {
            let radius = norm(&sub(&x0, xs));
            let spectral = gram_top.sqrt();
            let r_max = spectral * radius + norm(&ls.residual(xs));
            let row_max = ls.a.row_iter().map(norm_sq).fold(0.0, f64::max);
            (4.0 * n as f64 * row_max * r_max * r_max, radius)
        });
        Ok(Self {
            kind,
            dim: d,
            meta: OracleMeta {
                sigma_sq: sigma.map(|s| s.0),
                sigma_region_radius: sigma.map(|s| s.1),
                smooth_l: Some(2.0 * gram_top),
                f_star,
                x_star,
                domain: Domain::Unconstrained,
                convex: true,
            },
            problem: Problem::LeastSquares(ls),
            test: None,
            sign_pattern: None,
            default_x0: x0,
        })
    }

    pub fn kind(&self) -> &OracleKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn meta(&self) -> &OracleMeta {
        &self.meta
    }

    pub fn default_x0(&self) -> &Vector {
        &self.default_x0
    }

    /// Number of summands for finite-sum problems.
    pub fn components(&self) -> Option<usize> {
        match &self.problem {
            Problem::LeastSquares(ls) => Some(ls.a.rows()),
            _ => None,
        }
    }

    pub fn training_data(&self) -> Option<&LeastSquares> {
        match &self.problem {
            Problem::LeastSquares(ls) => Some(ls),
            _ => None,
        }
    }

    pub fn test_data(&self) -> Option<&LeastSquares> {
        self.test.as_ref()
    }

    pub fn sign_pattern(&self) -> Option<&[f64]> {
        self.sign_pattern.as_deref()
    }

    /// Checks `sgn(aᵢ) = ±s` exactly for every data point.
    pub fn verify_sign_pattern(&self) -> bool {
        let (Some(s), Some(ls)) = (self.sign_pattern(), self.training_data()) else {
            return false;
        };
        ls.a.row_iter().all(|row| {
            let sg: Vec<f64> = row.iter().map(|&v| sign(v, SignZero::Zero)).collect();
            sg.iter().zip(s).all(|(a, b)| a == b) || sg.iter().zip(s).all(|(a, b)| *a == -b)
        })
    }

    fn check(&self, x: &[f64]) {
        assert_eq!(x.len(), self.dim, "point dimension does not match oracle");
    }

    pub fn loss(&self, x: &[f64]) -> f64 {
        self.check(x);
        match &self.problem {
            Problem::Ce1 => 0.25 * x[0],
            Problem::Ce2 { eps } => eps * (x[0] + x[1]).abs() + (x[0] - x[1]).abs(),
            Problem::HalfSquaredNorm { .. } => 0.5 * norm_sq(x),
            Problem::LeastSquares(ls) => ls.loss(x),
        }
    }

    /// Full gradient, or for `ce2` the subgradient picked with `sgn(0) = +1`.
    pub fn full_gradient(&self, x: &[f64]) -> Vector {
        self.check(x);
        let g = match &self.problem {
            Problem::Ce1 => vec![0.25],
            Problem::Ce2 { eps } => ce2_subgradient(*eps, x),
            Problem::HalfSquaredNorm { .. } => x.to_vec(),
            Problem::LeastSquares(ls) => ls.gradient(x),
        };
        Vector::from_raw(g)
    }

    pub fn sample_gradient<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> GradientSample {
        self.check(x);
        match &self.problem {
            Problem::Ce1 => {
                let (g, i) = if rng.random::<f64>() < 0.25 { (4.0, 0) } else { (-1.0, 1) };
                GradientSample {
                    g: Vector::from_raw(vec![g]),
                    component_index: Some(i),
                }
            }
            Problem::Ce2 { eps } => GradientSample {
                g: Vector::from_raw(ce2_subgradient(*eps, x)),
                component_index: None,
            },
            Problem::HalfSquaredNorm { noise_std } => {
                let mut g = x.to_vec();
                if *noise_std > 0.0 {
                    let xi: f64 = rng.sample(StandardNormal);
                    g[0] += noise_std * xi;
                }
                GradientSample {
                    g: Vector::from_raw(g),
                    component_index: None,
                }
            }
            Problem::LeastSquares(ls) => {
                let n = ls.a.rows();
                let i = rng.random_range(0..n);
                GradientSample {
                    g: Vector::from_raw(component_gradient(ls, i, x)),
                    component_index: Some(i),
                }
            }
        }
    }

    /// The `i`-th stochastic gradient outcome, for finite-sum problems.
    pub fn component_gradient(&self, i: usize, x: &[f64]) -> Option<Vector> {
        self.check(x);
        match &self.problem {
            Problem::LeastSquares(ls) if i < ls.a.rows() => {
                Some(Vector::from_raw(component_gradient(ls, i, x)))
            }
            _ => None,
        }
    }

    /// Exact `E‖g(x)‖²` under the sampling distribution.
    pub fn second_moment(&self, x: &[f64]) -> f64 {
        self.check(x);
        match &self.problem {
            Problem::Ce1 => 4.75,
            Problem::Ce2 { eps } => norm_sq(&ce2_subgradient(*eps, x)),
            Problem::HalfSquaredNorm { noise_std } => norm_sq(x) + noise_std * noise_std,
            Problem::LeastSquares(ls) => {
                let n = ls.a.rows() as f64;
                let r = ls.residual(x);
                4.0 * n
                    * ls.a
                        .row_iter()
                        .zip(&r)
                        .map(|(row, ri)| ri * ri * norm_sq(row))
                        .sum::<f64>()
            }
        }
    }

    /// Held-out mean squared error, when the oracle has a test split.
    pub fn test_loss(&self, x: &[f64]) -> Option<f64> {
        self.check(x);
        self.test.as_ref().map(|t| t.mean_loss(x))
    }
}

fn ce2_subgradient(eps: f64, x: &[f64]) -> Vec<f64> {
    let s1 = sign(x[0] + x[1], SignZero::PlusOne);
    let s2 = sign(x[0] - x[1], SignZero::PlusOne);
    vec![s1 * eps + s2, s1 * eps - s2]
}

fn component_gradient(ls: &LeastSquares, i: usize, x: &[f64]) -> Vec<f64> {
    let row = ls.a.row(i);
    let n = ls.a.rows() as f64;
    let scale = 2.0 * n * (dot(row, x) - ls.b[i]);
    row.iter().map(|v| scale * v).collect()
}

fn theorem1(kind: &OracleKind, d: usize, n: usize, seed: u64) -> Result<Oracle> {
    if d < 2 {
        return Err(invalid("d", format!("must be at least 2, got {d}")));
    }
    if n < d {
        return Err(invalid("n", format!("must be at least d = {d} for a unique optimum, got {n}")));
    }
    let mut rng = stream(seed, Stream::Data);
    let s: Vec<f64> = (0..d)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut data = Vec::with_capacity(n * d);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let eta = if rng.random::<bool>() { 1.0 } else { -1.0 };
        for sj in &s {
            let m: f64 = rng.random_range(0.5..1.5);
            data.push(eta * m * sj);
        }
        b.push(rng.sample::<f64, _>(StandardNormal));
    }
    let a = DenseMatrix::new(n, d, data)?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let x0 = Vector::new((0..d).map(|_| normal.sample(&mut rng)).collect())?;
    let mut o = Oracle::from_least_squares(kind.clone(), LeastSquares { a, b }, x0)?;
    if o.meta.x_star.is_none() {
        return Err(invalid("seed", "sampled instance has a singular normal matrix"));
    }
    o.sign_pattern = Some(s);
    Ok(o)
}

/// Data matrix and labels of the wilson generator before the split.
pub fn wilson_data(n: usize, seed: u64) -> Result<(DenseMatrix, Vec<f64>, Vec<usize>)> {
    if n < 3 {
        return Err(invalid("n", format!("must be at least 3 so the d = 6n columns fit, got {n}")));
    }
    let d = 6 * n;
    let mut rng = stream(seed, Stream::Data);
    let y: Vec<f64> = (0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut a = DenseMatrix::zeros(n, d);
    for (i, &yi) in y.iter().enumerate() {
        a.set(i, 0, yi);
        a.set(i, 1, 1.0);
        a.set(i, 2, 1.0);
        let start = 3 + 5 * i;
        let len = if yi > 0.0 { 1 } else { 5 };
        for j in start..start + len {
            a.set(i, j, 1.0);
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    Ok((a, y, perm))
}

fn wilson(kind: &OracleKind, n: usize, seed: u64) -> Result<Oracle> {
    let (a, y, perm) = wilson_data(n, seed)?;
    let n_train = n / 2;
    let (train_idx, test_idx) = perm.split_at(n_train);
    let pick = |idx: &[usize]| LeastSquares {
        a: a.select_rows(idx),
        b: idx.iter().map(|&i| y[i]).collect(),
    };
    let train = pick(train_idx);
    let test = pick(test_idx);
    let d = a.cols();
    let mut o = Oracle::from_least_squares(kind.clone(), train, Vector::zeros(d))?;
    if o.meta.x_star.is_none() {
        return Err(invalid("n", "training rows are not linearly independent"));
    }
    o.meta.f_star = Some(0.0);
    o.test = Some(test);
    Ok(o)
}

/// Distance from `point` to the line `origin + span{direction}`.
pub fn distance_to_line(point: &[f64], origin: &[f64], direction: &[f64]) -> f64 {
    let mut diff = sub(point, origin);
    let c = dot(&diff, direction) / norm_sq(direction);
    axpy(-c, direction, &mut diff);
    norm(&diff)
}
