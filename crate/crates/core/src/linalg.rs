//! Dense complex linear algebra used by the recovery algorithms.
//!
//! Matrices are stored column-major so that gathering the columns of a
//! support set and correlating a vector against every column are both
//! contiguous sweeps. Least-squares fits solve the normal equations with
//! conjugate gradients, which is cheap because Grams restricted to incoherent
//! supports are well conditioned.

use std::ops::Deref;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Default relative residual for every CG solve in the toolkit.
pub const DEFAULT_CG_TOL: f64 = 1e-12;

/// Smallest Gram eigenvalue still treated as full rank.
pub const RANK_EPS: f64 = 1e-10;

/// A dense complex column vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CVector(Vec<Complex64>);

impl CVector {
    /// Wraps `entries`; an empty vector is rejected.
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Domain("vectors must have at least one entry".into()));
        }
        Ok(CVector(entries))
    }

    /// Builds a vector from raw entries without the non-empty check. Used for
    /// coefficient vectors over a possibly empty support.
    pub fn from_raw(entries: Vec<Complex64>) -> Self {
        CVector(entries)
    }

    pub fn from_real(entries: &[f64]) -> Self {
        CVector(entries.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zeros(len: usize) -> Self {
        CVector(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CVector(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }
}

impl Deref for CVector {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl From<Vec<Complex64>> for CVector {
    fn from(entries: Vec<Complex64>) -> Self {
        CVector(entries)
    }
}

/// Sorted, duplicate-free set of column indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn empty() -> Self {
        IndexSet(Vec::new())
    }

    /// Sorts and deduplicates arbitrary indices.
    pub fn from_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        IndexSet(indices)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        IndexSet(out)
    }

    pub fn intersection_len(&self, other: &IndexSet) -> usize {
        self.iter().filter(|&i| other.contains(i)).count()
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    /// Largest index plus one, or zero for the empty set.
    pub fn bound(&self) -> usize {
        self.0.last().map_or(0, |&i| i + 1)
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        IndexSet::from_indices(iter.into_iter().collect())
    }
}

/// Dense complex matrix in column-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    /// `data` holds the entries column after column.
    pub fn from_column_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain("matrices need at least one row and one column".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        CMatrix::from_column_major(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[col * self.rows + row]
    }

    pub fn column(&self, j: usize) -> &[Complex64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [Complex64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn as_column_major(&self) -> &[Complex64] {
        &self.data
    }

    /// `A x`.
    pub fn apply(&self, x: &[Complex64]) -> Result<CVector> {
        check_len(self.cols, x.len())?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != Complex64::new(0.0, 0.0) {
                axpy(xj, self.column(j), &mut out);
            }
        }
        Ok(CVector(out))
    }

    /// `A* u`, one conjugated dot product per column.
    pub fn adjoint_apply(&self, u: &[Complex64]) -> Result<CVector> {
        check_len(self.rows, u.len())?;
        Ok(CVector((0..self.cols).map(|j| dotc(self.column(j), u)).collect()))
    }

    /// Copies the columns listed in `omega` into a new `N × |omega|` matrix.
    pub fn select_columns(&self, omega: &IndexSet) -> Result<CMatrix> {
        if omega.bound() > self.cols {
            return Err(Error::Dimension {
                expected: self.cols,
                found: omega.bound(),
            });
        }
        let mut data = Vec::with_capacity(self.rows * omega.len());
        for j in omega.iter() {
            data.extend_from_slice(self.column(j));
        }
        CMatrix::from_column_major(self.rows, omega.len(), data)
    }

    /// Explicit Hermitian Gram `A_Ω* A_Ω`, returned column-major.
    pub fn gram(&self, omega: &IndexSet) -> Result<CMatrix> {
        let sub = self.select_columns(omega)?;
        let m = sub.cols;
        let mut g = vec![Complex64::new(0.0, 0.0); m * m];
        for j in 0..m {
            for i in 0..=j {
                let v = dotc(sub.column(i), sub.column(j));
                g[j * m + i] = v;
                g[i * m + j] = v.conj();
            }
        }
        CMatrix::from_column_major(m, m, g)
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}

/// `Σ conj(a_i) b_i` without length checks.
#[inline]
pub(crate) fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let (mut re0, mut im0, mut re1, mut im1) = (0.0, 0.0, 0.0, 0.0);
    let mut ca = a.chunks_exact(2);
    let mut cb = b.chunks_exact(2);
    for (x, y) in (&mut ca).zip(&mut cb) {
        re0 += x[0].re * y[0].re + x[0].im * y[0].im;
        im0 += x[0].re * y[0].im - x[0].im * y[0].re;
        re1 += x[1].re * y[1].re + x[1].im * y[1].im;
        im1 += x[1].re * y[1].im - x[1].im * y[1].re;
    }
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        re0 += x.re * y.re + x.im * y.im;
        im0 += x.re * y.im - x.im * y.re;
    }
    Complex64::new(re0 + re1, im0 + im1)
}

/// `y += alpha x`.
#[inline]
pub(crate) fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `⟨u, v⟩ = conj(u)ᵀ v`.
pub fn inner(u: &[Complex64], v: &[Complex64]) -> Result<Complex64> {
    check_len(u.len(), v.len())?;
    Ok(dotc(u, v))
}

/// Outcome of one conjugate-gradient solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub converged: bool,
}

impl CgReport {
    fn trivial() -> Self {
        CgReport {
            iterations: 0,
            final_relative_residual: 0.0,
            converged: true,
        }
    }
}

/// Conjugate gradients for a Hermitian positive definite operator.
///
/// `gram_apply(p, out)` must write `G p` into `out`. The solve stops once the
/// recurrence residual satisfies `‖r‖ ≤ tol ‖rhs‖`; otherwise the last iterate
/// comes back with `converged == false`.
pub fn cg_solve<F>(mut gram_apply: F, rhs: &[Complex64], tol: f64, max_iter: usize) -> (CVector, CgReport)
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    let n = rhs.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut x = vec![zero; n];
    let rhs_norm = norm2(rhs);
    if rhs_norm == 0.0 {
        return (CVector(x), CgReport::trivial());
    }

    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![zero; n];
    let mut rs = rhs_norm * rhs_norm;
    let mut report = CgReport {
        iterations: 0,
        final_relative_residual: 1.0,
        converged: false,
    };

    for k in 1..=max_iter {
        gram_apply(&p, &mut ap);
        let curvature = dotc(&p, &ap).re;
        if curvature <= 0.0 || !curvature.is_finite() {
            // Breakdown: the operator is not positive definite on this subspace.
            break;
        }
        let alpha = Complex64::new(rs / curvature, 0.0);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rs_new = r.iter().map(|z| z.norm_sqr()).sum::<f64>();
        report.iterations = k;
        report.final_relative_residual = rs_new.sqrt() / rhs_norm;
        if report.final_relative_residual <= tol {
            report.converged = true;
            break;
        }
        let beta = rs_new / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + *pi * beta;
        }
        rs = rs_new;
    }
    (CVector(x), report)
}

/// CG iteration budget for a support of size `m`.
pub fn cg_budget(m: usize) -> usize {
    50.max(4 * m)
}

/// Least-squares fit of `b` on the columns in `omega`, with its residual.
#[derive(Clone, Debug)]
pub struct SupportFit {
    /// `A_Ω† b`, ordered like `omega`.
    pub coefficients: CVector,
    /// `b − A_Ω A_Ω† b`.
    pub residual: CVector,
    pub report: CgReport,
}

/// Solves the normal equations `A_Ω* A_Ω c = A_Ω* b` by CG and forms the
/// complement residual with one more matrix apply.
pub fn fit_support(a: &CMatrix, omega: &IndexSet, b: &[Complex64], tol: f64) -> Result<SupportFit> {
    check_len(a.rows, b.len())?;
    if omega.is_empty() {
        return Ok(SupportFit {
            coefficients: CVector::from_raw(Vec::new()),
            residual: CVector(b.to_vec()),
            report: CgReport::trivial(),
        });
    }
    if omega.len() > a.rows {
        return Err(Error::RankDeficient {
            omega: omega.as_slice().to_vec(),
        });
    }
    let sub = a.select_columns(omega)?;
    let rhs = sub.adjoint_apply(b)?;

    let mut scratch = vec![Complex64::new(0.0, 0.0); sub.rows];
    let mut gram_apply = |p: &[Complex64], out: &mut [Complex64]| {
        scratch.iter_mut().for_each(|s| *s = Complex64::new(0.0, 0.0));
        for (j, &pj) in p.iter().enumerate() {
            axpy(pj, sub.column(j), &mut scratch);
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o = dotc(sub.column(j), &scratch);
        }
    };

    let budget = cg_budget(omega.len());
    let (mut coefficients, mut report) = cg_solve(&mut gram_apply, &rhs, tol, budget);
    if !report.converged {
        let (lambda_min, _) = gram_extreme_eigs(a, omega)?;
        if lambda_min < RANK_EPS {
            return Err(Error::RankDeficient {
                omega: omega.as_slice().to_vec(),
            });
        }
        // Full rank but slow: one retry with a larger budget before giving up.
        let (retry, retry_report) = cg_solve(&mut gram_apply, &rhs, tol, 10 * budget);
        if !retry_report.converged {
            return Err(Error::RankDeficient {
                omega: omega.as_slice().to_vec(),
            });
        }
        coefficients = retry;
        report = CgReport {
            iterations: report.iterations + retry_report.iterations,
            ..retry_report
        };
    }

    if omega.len() > 1 && !gram_is_full_rank(&sub) {
        return Err(Error::RankDeficient {
            omega: omega.as_slice().to_vec(),
        });
    }

    let fitted = sub.apply(&coefficients)?;
    let residual = b.iter().zip(fitted.iter()).map(|(bi, fi)| bi - fi).collect();
    Ok(SupportFit {
        coefficients,
        residual: CVector(residual),
        report,
    })
}

/// Cholesky of the explicit Gram of `sub`; every pivot must clear
/// [`RANK_EPS`]. A pivot below it bounds `λ_min` below it as well.
///
/// CG alone cannot flag this: the normal-equation right-hand side always lies
/// in the range of the Gram, so CG converges to the minimum-norm solution even
/// for collinear columns.
fn gram_is_full_rank(sub: &CMatrix) -> bool {
    let m = sub.cols;
    let mut l = vec![Complex64::new(0.0, 0.0); m * m];
    for j in 0..m {
        for i in j..m {
            // Lower triangle, column-major: l[j * m + i] = L[i][j].
            let mut s = dotc(sub.column(i), sub.column(j)).conj();
            for k in 0..j {
                s -= l[k * m + i] * l[k * m + j].conj();
            }
            if i == j {
                if !(s.re > RANK_EPS) {
                    return false;
                }
                l[j * m + j] = Complex64::new(s.re.sqrt(), 0.0);
            } else {
                l[j * m + i] = s / l[j * m + j].re;
            }
        }
    }
    true
}

/// `b − A_Ω A_Ω† b`: the part of `b` orthogonal to the selected columns.
pub fn complement_project(a: &CMatrix, omega: &IndexSet, b: &[Complex64], tol: f64) -> Result<(CVector, CgReport)> {
    let fit = fit_support(a, omega, b, tol)?;
    Ok((fit.residual, fit.report))
}

/// `A_Ω† b`, the coefficients minimizing `‖A_Ω c − b‖₂`.
pub fn least_squares_fit(a: &CMatrix, omega: &IndexSet, b: &[Complex64], tol: f64) -> Result<CVector> {
    Ok(fit_support(a, omega, b, tol)?.coefficients)
}

/// Smallest and largest eigenvalue of the Gram `A_Ω* A_Ω`.
///
/// Power iteration on the Gram gives the top of the spectrum; power iteration
/// on `λ_max I − G` gives the bottom. Both stop when the eigen-residual drops
/// below `1e-10 λ_max`, which pins the Rayleigh quotients far inside `1e-6`.
pub fn gram_extreme_eigs(a: &CMatrix, omega: &IndexSet) -> Result<(f64, f64)> {
    if omega.is_empty() {
        return Err(Error::Domain("eigenvalues need a non-empty support".into()));
    }
    let g = a.gram(omega)?;
    let lambda_max = power_iteration(&g, 0.0, 1.0);
    if g.rows == 1 {
        return Ok((lambda_max, lambda_max));
    }
    // The shifted matrix is positive semidefinite with top eigenvalue λmax − λmin.
    let spread = power_iteration(&g, lambda_max, -1.0);
    let lambda_min = (lambda_max - spread).max(0.0);
    Ok((lambda_min, lambda_max))
}

/// Dominant eigenvalue of `shift I + sign G` for Hermitian `g`.
fn power_iteration(g: &CMatrix, shift: f64, sign: f64) -> f64 {
    const MAX_ITERS: usize = 200_000;
    let m = g.rows;
    let mut rng = rng_from_seed(0x5eed_e16e);
    let mut v: Vec<Complex64> = (0..m)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let scale = 1.0 / norm2(&v);
    v.iter_mut().for_each(|z| *z *= scale);

    let apply = |v: &[Complex64], out: &mut [Complex64]| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = v[i] * shift;
        }
        for (j, &vj) in v.iter().enumerate() {
            axpy(vj * sign, g.column(j), out);
        }
    };

    let mut w = vec![Complex64::new(0.0, 0.0); m];
    let mut rayleigh = 0.0;
    let mut magnitude = 1.0f64;
    for _ in 0..MAX_ITERS {
        apply(&v, &mut w);
        rayleigh = dotc(&v, &w).re;
        let residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - vi * rayleigh).norm_sqr())
            .sum::<f64>()
            .sqrt();
        magnitude = magnitude.max(rayleigh.abs());
        let nw = norm2(&w);
        if residual <= 1e-10 * magnitude || nw == 0.0 {
            break;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    rayleigh
}
