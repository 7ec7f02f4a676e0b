//! Dense vectors and matrices, incremental orthogonal projection onto a
//! growing span, and the minimum-norm least-squares solve.
//!
//! Everything here is small-scale dense arithmetic (d up to a few thousand).
//! Hot loops operate on plain slices; [`Vector`] is a finite, non-empty
//! owned buffer that dereferences to `[f64]`.

use std::ops::{Deref, Index};

use crate::error::{Error, Result};

/// Default relative tolerance below which a residual is treated as zero.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;

/// Finite, non-empty dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(index) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(entries))
    }

    /// # Panics
    ///
    /// If `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "vector dimension must be at least 1");
        Self(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        assert!(dim >= 1, "vector dimension must be at least 1");
        assert!(value.is_finite());
        Self(vec![value; dim])
    }

    /// Wraps a buffer produced by internal arithmetic on finite inputs.
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        debug_assert!(!entries.is_empty());
        Self(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.0)
    }

    pub fn norm1(&self) -> f64 {
        norm1(&self.0)
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(entries: Vec<f64>) -> Result<Self> {
        Self::new(entries)
    }
}

impl<const N: usize> TryFrom<[f64; N]> for Vector {
    type Error = Error;

    fn try_from(entries: [f64; N]) -> Result<Self> {
        Self::new(entries.to_vec())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Per-coordinate Neumaier (improved Kahan) summation.
#[derive(Debug, Clone)]
pub struct CompensatedSum {
    sum: Vec<f64>,
    carry: Vec<f64>,
}

impl CompensatedSum {
    pub fn new(dim: usize) -> Self {
        Self {
            sum: vec![0.0; dim],
            carry: vec![0.0; dim],
        }
    }

    /// Adds `scale * v`.
    pub fn add_scaled(&mut self, scale: f64, v: &[f64]) {
        for ((s, c), x) in self.sum.iter_mut().zip(&mut self.carry).zip(v) {
            let term = scale * x;
            let t = *s + term;
            if s.abs() >= term.abs() {
                *c += (*s - t) + term;
            } else {
                *c += (term - t) + *s;
            }
            *s = t;
        }
    }

    pub fn value(&self) -> Vec<f64> {
        self.sum.iter().zip(&self.carry).map(|(s, c)| s + c).collect()
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() || rows == 0 || cols == 0 {
            return Err(Error::Shape {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: bad.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1);
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(value.is_finite());
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        self.row_iter().map(|r| dot(r, x)).collect()
    }

    /// `Aᵀ y`
    pub fn tmul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yi) in self.row_iter().zip(y) {
            if yi != 0.0 {
                axpy(yi, r, &mut out);
            }
        }
        out
    }

    /// `A Aᵀ` (rows × rows).
    pub fn gram_rows(&self) -> DenseMatrix {
        let n = self.rows;
        let mut g = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = dot(self.row(i), self.row(j));
                g.data[i * n + j] = v;
                g.data[j * n + i] = v;
            }
        }
        g
    }

    /// `Aᵀ A` (cols × cols).
    pub fn gram_cols(&self) -> DenseMatrix {
        let d = self.cols;
        let mut g = DenseMatrix::zeros(d, d);
        for r in self.row_iter() {
            for i in 0..d {
                if r[i] == 0.0 {
                    continue;
                }
                for j in 0..d {
                    g.data[i * d + j] += r[i] * r[j];
                }
            }
        }
        g
    }

    pub fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `G = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors a symmetric matrix. A pivot at or below `1e-12 · max diag`
    /// is reported as [`Error::NotPositiveDefinite`]; no jitter is added.
    pub fn factor(g: &DenseMatrix) -> Result<Self> {
        check_dim(g.rows(), g.cols())?;
        let n = g.rows();
        let max_diag = (0..n).map(|i| g.get(i, i).abs()).fold(0.0, f64::max);
        let floor = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = g.get(j, j);
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if !(diag > floor) {
                return Err(Error::NotPositiveDefinite {
                    pivot: j,
                    value: diag,
                });
            }
            let ljj = diag.sqrt();
            l[j * n + j] = ljj;
            for i in j + 1..n {
                let mut s = g.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[i * n + k] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        z
    }
}

/// Minimum-norm solution `Aᵀ (A Aᵀ)⁻¹ y` of an under-determined system
/// with linearly independent rows. One step of iterative refinement is
/// applied to the Gram solve.
pub fn min_norm_solution(a: &DenseMatrix, y: &[f64]) -> Result<Vector> {
    check_dim(a.rows(), y.len())?;
    let chol = Cholesky::factor(&a.gram_rows())?;
    let mut alpha = chol.solve(y);
    let residual = sub(y, &a.mul_vec(&a.tmul_vec(&alpha)));
    let correction = chol.solve(&residual);
    axpy(1.0, &correction, &mut alpha);
    Ok(Vector::from_raw(a.tmul_vec(&alpha)))
}

/// Least-squares solution of an over-determined full-column-rank system via
/// the normal equations `Aᵀ A x = Aᵀ b`.
pub fn normal_equations_solution(a: &DenseMatrix, b: &[f64]) -> Result<Vector> {
    check_dim(a.rows(), b.len())?;
    let chol = Cholesky::factor(&a.gram_cols())?;
    let rhs = a.tmul_vec(b);
    let mut x = chol.solve(&rhs);
    let ax = a.mul_vec(&x);
    let r = a.tmul_vec(&sub(b, &ax));
    axpy(1.0, &chol.solve(&r), &mut x);
    Ok(Vector::from_raw(x))
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix by power
/// iteration.
pub fn largest_eigenvalue(g: &DenseMatrix) -> f64 {
    let n = g.rows();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.618).fract()).collect();
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let nv = norm(&v);
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let w = g.mul_vec(&v);
        let next = dot(&v, &w);
        let converged = (next - lambda).abs() <= 1e-13 * next.abs();
        lambda = next;
        v = w;
        if converged {
            break;
        }
    }
    lambda
}

/// Orthonormal basis of a growing subspace of `R^dim`, extended one vector at
/// a time by modified Gram–Schmidt with one re-orthogonalization pass.
#[derive(Debug, Clone)]
pub struct SpanBasis {
    dim: usize,
    basis: Vec<Vec<f64>>,
    rank_tolerance: f64,
}

impl SpanBasis {
    pub fn new(dim: usize) -> Self {
        Self::with_tolerance(dim, DEFAULT_RANK_TOLERANCE)
    }

    pub fn with_tolerance(dim: usize, rank_tolerance: f64) -> Self {
        assert!(dim >= 1);
        assert!(rank_tolerance >= 0.0);
        Self {
            dim,
            basis: Vec::new(),
            rank_tolerance,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.rank_tolerance
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    fn deflate(&self, r: &mut [f64]) {
        for q in &self.basis {
            let c = dot(q, r);
            axpy(-c, q, r);
        }
    }

    /// Adds `v` to the span in place. Returns whether the rank grew.
    pub fn extend(&mut self, v: &[f64]) -> Result<bool> {
        check_dim(self.dim, v.len())?;
        if self.basis.len() == self.dim {
            return Ok(false);
        }
        let scale = norm(v);
        let mut r = v.to_vec();
        self.deflate(&mut r);
        self.deflate(&mut r);
        let rn = norm(&r);
        if rn <= self.rank_tolerance * scale.max(1.0) || rn == 0.0 {
            return Ok(false);
        }
        r.iter_mut().for_each(|x| *x /= rn);
        self.basis.push(r);
        Ok(true)
    }

    /// Functional form of [`SpanBasis::extend`].
    pub fn extended(mut self, v: &[f64]) -> Result<Self> {
        self.extend(v)?;
        Ok(self)
    }

    /// Component of `v` orthogonal to the span.
    pub fn residual(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, v.len())?;
        let mut r = v.to_vec();
        self.deflate(&mut r);
        Ok(r)
    }

    /// Orthogonal projection `Σ ⟨q_i, v⟩ q_i`.
    pub fn project(&self, v: &[f64]) -> Result<Vector> {
        let r = self.residual(v)?;
        Ok(Vector::from_raw(sub(v, &r)))
    }

    /// `‖v − Π(v)‖`
    pub fn distance(&self, v: &[f64]) -> Result<f64> {
        Ok(norm(&self.residual(v)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vector_rejects_nan_and_empty() {
        assert_eq!(Vector::new(vec![]), Err(Error::EmptyVector));
        assert_eq!(
            Vector::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        );
        assert!(Vector::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn span_extend_single_vector_normalizes() {
        let b = SpanBasis::new(2).extended(&[3.0, 0.0]).unwrap();
        assert_eq!(b.basis(), &[vec![1.0, 0.0]]);
    }

    #[test]
    fn span_extend_ignores_dependent_vector() {
        let b = SpanBasis::new(2)
            .extended(&[1.0, 0.0])
            .unwrap()
            .extended(&[2.0, 0.0])
            .unwrap();
        assert_eq!(b.rank(), 1);
    }

    #[test]
    fn span_extend_one_gram_schmidt_step() {
        let b = SpanBasis::new(2)
            .extended(&[1.0, 0.0])
            .unwrap()
            .extended(&[1.0, 1.0])
            .unwrap();
        assert_eq!(b.rank(), 2);
        assert!((b.basis()[1][0]).abs() < 1e-15);
        assert!((b.basis()[1][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn span_extend_zero_vector_never_extends() {
        let mut b = SpanBasis::new(3);
        assert!(!b.extend(&[0.0, 0.0, 0.0]).unwrap());
        assert_eq!(b.rank(), 0);
    }

    #[test]
    fn span_dimension_mismatch() {
        let mut b = SpanBasis::new(2);
        assert_eq!(
            b.extend(&[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 3
            })
        );
        assert!(b.project(&[1.0]).is_err());
    }

    #[test]
    fn projection_examples() {
        let e1 = SpanBasis::new(2).extended(&[1.0, 0.0]).unwrap();
        assert_eq!(e1.project(&[2.0, 3.0]).unwrap().as_slice(), &[2.0, 0.0]);
        let empty = SpanBasis::new(2);
        assert_eq!(empty.project(&[2.0, 3.0]).unwrap().as_slice(), &[0.0, 0.0]);
        let full = e1.extended(&[0.0, 1.0]).unwrap();
        assert_eq!(full.project(&[2.0, 3.0]).unwrap().as_slice(), &[2.0, 3.0]);
    }

    #[test]
    fn min_norm_examples() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(min_norm_solution(&a, &[2.0]).unwrap().as_slice(), &[2.0, 0.0]);

        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let x = min_norm_solution(&a, &[2.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);

        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(min_norm_solution(&a, &[3.0, 4.0]).unwrap().as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn min_norm_rank_deficient_is_an_error() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]]).unwrap();
        assert!(matches!(
            min_norm_solution(&a, &[1.0, 2.0]),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn normal_equations_recover_exact_solution() {
        let a = DenseMatrix::from_rows(&[
            vec![1.0, 2.0],
            vec![3.0, -1.0],
            vec![0.5, 0.5],
        ])
        .unwrap();
        let x_true = [0.3, -1.2];
        let b = a.mul_vec(&x_true);
        let x = normal_equations_solution(&a, &b).unwrap();
        assert!((x[0] - 0.3).abs() < 1e-12 && (x[1] + 1.2).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_diagonal() {
        let g = DenseMatrix::from_rows(&[
            vec![4.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 2.5],
        ])
        .unwrap();
        assert!((largest_eigenvalue(&g) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut acc = CompensatedSum::new(1);
        let mut naive = 0.0;
        acc.add_scaled(1.0, &[1.0]);
        naive += 1.0;
        for _ in 0..1_000_000 {
            acc.add_scaled(1e-16, &[1.0]);
            naive += 1e-16;
        }
        assert!((acc.value()[0] - (1.0 + 1e-10)).abs() < 1e-22);
        assert_eq!(naive, 1.0);
    }

    fn vecs(dim: usize, count: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-10.0..10.0f64, dim), count)
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_pythagorean(
            basis_vecs in vecs(6, 0..5),
            target in prop::collection::vec(-10.0..10.0f64, 6),
        ) {
            let mut b = SpanBasis::new(6);
            for g in &basis_vecs {
                b.extend(g).unwrap();
            }
            for (i, qi) in b.basis().iter().enumerate() {
                prop_assert!((norm(qi) - 1.0).abs() <= 1e-10);
                for qj in &b.basis()[..i] {
                    prop_assert!(dot(qi, qj).abs() <= 1e-10);
                }
            }
            let p = b.project(&target).unwrap();
            let pp = b.project(&p).unwrap();
            for (a, c) in p.iter().zip(pp.iter()) {
                prop_assert!((a - c).abs() <= 1e-10);
            }
            let r = sub(&target, &p);
            for q in b.basis() {
                prop_assert!(dot(q, &r).abs() <= 1e-9 * (1.0 + norm(&target)));
            }
            let total = norm_sq(&target);
            let split = p.norm_sq() + norm_sq(&r);
            prop_assert!((total - split).abs() <= 1e-8 * total.max(1e-300));
        }

        #[test]
        fn min_norm_lies_in_row_span_and_is_shortest(
            rows in vecs(7, 1..5),
            y in prop::collection::vec(-5.0..5.0f64, 5),
            null_mix in prop::collection::vec(-3.0..3.0f64, 7),
        ) {
            let a = DenseMatrix::from_rows(&rows).unwrap();
            let y = &y[..a.rows()];
            let Ok(x) = min_norm_solution(&a, y) else {
                // Random rows are independent with probability one; near-
                // singular draws are legitimately refused.
                return Ok(());
            };
            let ax = a.mul_vec(&x);
            prop_assert!(norm(&sub(&ax, y)) <= 1e-8 * norm(y).max(1.0));

            let mut rowspan = SpanBasis::new(7);
            for r in a.row_iter() {
                rowspan.extend(r).unwrap();
            }
            let px = rowspan.project(&x).unwrap();
            prop_assert!(norm(&sub(&px, &x)) <= 1e-8 * x.norm().max(1.0));

            let null_dir = rowspan.residual(&null_mix).unwrap();
            let mut other = x.clone().into_inner();
            axpy(1.0, &null_dir, &mut other);
            prop_assert!(x.norm() <= norm(&other) + 1e-12);
        }
    }
}
