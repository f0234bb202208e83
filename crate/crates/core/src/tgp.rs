//! Thresholding greedy pursuit and its closed-form parameter choices.
//!
//! Each pass correlates the current residual with every column, normalizes by
//! the residual norm, and keeps the entries whose magnitude strictly exceeds
//! `tau`. Detected columns are merged into the support and `b` is projected
//! onto the orthogonal complement of their span. The loop ends when a pass
//! detects nothing new or when the residual vanishes.
//!
//! All logarithms below are natural logarithms.

use std::time::{Duration, Instant};

use num_complex::Complex64;

use crate::ensembles::MeasurementMatrix;
use crate::error::{Error, Result};
use crate::linalg::{fit_support, norm2, CVector, IndexSet, DEFAULT_CG_TOL};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TgpParams {
    pub tau: f64,
    pub cg_tol: f64,
    /// `None` caps the loop at `min(N, K)` passes.
    pub max_outer_iters: Option<usize>,
    pub record_trace: bool,
}

impl TgpParams {
    pub fn new(tau: f64) -> Self {
        TgpParams {
            tau,
            cg_tol: DEFAULT_CG_TOL,
            max_outer_iters: None,
            record_trace: false,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn with_max_outer_iters(mut self, cap: usize) -> Self {
        self.max_outer_iters = Some(cap);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Parameter(format!("tau = {} must lie in (0, 1)", self.tau)));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::Parameter(format!("cg_tol = {} must be positive", self.cg_tol)));
        }
        if self.max_outer_iters == Some(0) {
            return Err(Error::Parameter("max_outer_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StopReason {
    /// A pass detected nothing new.
    EmptyThreshold,
    /// The residual fell below `cg_tol ‖b‖₂`.
    ZeroResidual,
    /// The pass budget ran out.
    IterCap,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::EmptyThreshold => "empty_threshold",
            StopReason::ZeroResidual => "zero_residual",
            StopReason::IterCap => "iter_cap",
        }
    }
}

/// What a single pass saw and did.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub proxy_max: f64,
    pub detected: IndexSet,
    /// `‖bⁿ⁺¹‖₂` after projection; unchanged from the previous pass when
    /// nothing was detected.
    pub residual_norm: f64,
    pub cg_iterations: usize,
}

/// Result of a recovery run, shared by TGP and CoSaMP.
#[derive(Clone, Debug)]
pub struct RecoveryResult {
    pub omega: IndexSet,
    /// `A_Ω† b` in the order of `omega`.
    pub coefficients: CVector,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub elapsed: Duration,
    pub trace: Option<Vec<IterationRecord>>,
}

impl RecoveryResult {
    /// Number of passes that added at least one index.
    pub fn detecting_iterations(&self) -> Option<usize> {
        self.trace
            .as_ref()
            .map(|t| t.iter().filter(|r| !r.detected.is_empty()).count())
    }
}

/// `max(|v_i| − tau, 0)` elementwise.
pub fn threshold(v: &[Complex64], tau: f64) -> Vec<f64> {
    v.iter().map(|z| (z.norm() - tau).max(0.0)).collect()
}

/// `A* r / ‖r‖₂`.
pub fn proxy(a: &MeasurementMatrix, residual: &[Complex64]) -> Result<CVector> {
    let n = norm2(residual);
    Ok(a.matrix().adjoint_apply(residual)?.scaled(1.0 / n))
}

/// Largest normalized correlation `max_j |⟨a_j, b⟩| / ‖b‖₂`.
///
/// The first pass of [`tgp_recover`] detects nothing exactly when this value
/// is at most `tau`, which makes it the whole story for pure-noise trials.
pub fn proxy_max(a: &MeasurementMatrix, b: &[Complex64]) -> Result<f64> {
    let n = norm2(b);
    if n == 0.0 {
        return Ok(0.0);
    }
    let m = a.matrix();
    if b.len() != m.rows() {
        return Err(Error::Dimension {
            expected: m.rows(),
            found: b.len(),
        });
    }
    let best = (0..m.cols())
        .map(|j| crate::linalg::dotc(m.column(j), b).norm_sqr())
        .fold(0.0, f64::max);
    Ok(best.sqrt() / n)
}

/// Runs thresholding greedy pursuit on `b`.
pub fn tgp_recover(a: &MeasurementMatrix, b: &[Complex64], params: &TgpParams) -> Result<RecoveryResult> {
    params.validate()?;
    let (rows, cols) = (a.rows(), a.cols());
    if b.len() != rows {
        return Err(Error::Dimension {
            expected: rows,
            found: b.len(),
        });
    }
    let start = Instant::now();
    let cap = params.max_outer_iters.unwrap_or(rows.min(cols));
    let b_norm = norm2(b);
    let mut trace = params.record_trace.then(Vec::new);

    let mut omega = IndexSet::empty();
    let mut coefficients = CVector::from_raw(Vec::new());
    if b_norm == 0.0 {
        return Ok(RecoveryResult {
            omega,
            coefficients,
            stop_reason: StopReason::ZeroResidual,
            iterations: 0,
            elapsed: start.elapsed(),
            trace,
        });
    }

    let mut residual = CVector::from_raw(b.to_vec());
    let mut residual_norm = b_norm;
    let mut stop_reason = StopReason::IterCap;
    let mut iterations = 0;

    while iterations < cap {
        iterations += 1;
        let correlations = a.matrix().adjoint_apply(&residual)?;
        let mut proxy_max = 0.0f64;
        let mut detected = Vec::new();
        for (j, z) in correlations.iter().enumerate() {
            let magnitude = z.norm() / residual_norm;
            proxy_max = proxy_max.max(magnitude);
            // Strict survival; columns already in omega are orthogonal to the
            // residual and never pass.
            if magnitude > params.tau && !omega.contains(j) {
                detected.push(j);
            }
        }
        let detected = IndexSet::from_indices(detected);

        if detected.is_empty() {
            if let Some(t) = trace.as_mut() {
                t.push(IterationRecord {
                    proxy_max,
                    detected,
                    residual_norm,
                    cg_iterations: 0,
                });
            }
            stop_reason = StopReason::EmptyThreshold;
            break;
        }

        omega = omega.union(&detected);
        if omega.len() > rows {
            return Err(Error::RankDeficient {
                omega: omega.as_slice().to_vec(),
            });
        }
        let fit = fit_support(a.matrix(), &omega, b, params.cg_tol)?;
        residual = fit.residual;
        residual_norm = residual.norm2();
        coefficients = fit.coefficients;
        if let Some(t) = trace.as_mut() {
            t.push(IterationRecord {
                proxy_max,
                detected,
                residual_norm,
                cg_iterations: fit.report.iterations,
            });
        }
        if residual_norm <= params.cg_tol * b_norm {
            stop_reason = StopReason::ZeroResidual;
            break;
        }
    }

    Ok(RecoveryResult {
        omega,
        coefficients,
        stop_reason,
        iterations,
        elapsed: start.elapsed(),
        trace,
    })
}

fn check_gamma_kappa(gamma: f64, kappa: f64) -> Result<()> {
    if !(gamma >= 1.0) {
        return Err(Error::Parameter(format!("gamma = {gamma} must be >= 1")));
    }
    if !(kappa > 0.0) {
        return Err(Error::Parameter(format!("kappa = {kappa} must be > 0")));
    }
    Ok(())
}

/// `γ` with `K = N^γ`, i.e. `ln K / ln N`.
pub fn gamma_for(rows: usize, cols: usize) -> f64 {
    (cols as f64).ln() / (rows as f64).ln()
}

/// `c₀ = √(2(γ + κ))`.
pub fn c0_constant(gamma: f64, kappa: f64) -> Result<f64> {
    check_gamma_kappa(gamma, kappa)?;
    Ok((2.0 * (gamma + kappa)).sqrt())
}

/// Smallest `tau` for which pure noise yields an empty support with
/// probability at least `1 − 2/N^κ`: `c₀ √(ln N) / √N`.
pub fn tau_floor(rows: usize, gamma: f64, kappa: f64) -> Result<f64> {
    if rows < 2 {
        return Err(Error::Parameter(format!("N = {rows} must be >= 2")));
    }
    let n = rows as f64;
    Ok(c0_constant(gamma, kappa)? * n.ln().sqrt() / n.sqrt())
}

/// `√((4/3)(μ/4 + c₀² ln N / N))`, the threshold that guarantees exact
/// support recovery under the sparsity cap.
pub fn tau_theorem3(mu: f64, rows: usize, gamma: f64, kappa: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::Parameter(format!("mu = {mu} must lie in [0, 1]")));
    }
    if rows < 2 {
        return Err(Error::Parameter(format!("N = {rows} must be >= 2")));
    }
    let c0 = c0_constant(gamma, kappa)?;
    let n = rows as f64;
    Ok((4.0 / 3.0 * (mu / 4.0 + c0 * c0 * n.ln() / n)).sqrt())
}

/// `⌊min{1/(4μ), √N / (4 c₀ √(ln N))}⌋`; with `μ = 0` only the second bound
/// applies.
pub fn sparsity_cap(mu: f64, rows: usize, gamma: f64, kappa: f64) -> Result<usize> {
    if !(mu >= 0.0) {
        return Err(Error::Parameter(format!("mu = {mu} must be >= 0")));
    }
    if rows < 2 {
        return Err(Error::Parameter(format!("N = {rows} must be >= 2")));
    }
    let c0 = c0_constant(gamma, kappa)?;
    let n = rows as f64;
    let noise_bound = n.sqrt() / (4.0 * c0 * n.ln().sqrt());
    let bound = if mu > 0.0 {
        (1.0 / (4.0 * mu)).min(noise_bound)
    } else {
        noise_bound
    };
    Ok(bound.floor() as usize)
}

/// The closed form `f(M, τ) = F / G` without checking that `τ` is admissible.
///
/// `F = (2/3)√((1 − τ²)/τ²) − (√(5M/4 − 7/4 + 1/(2M)) + √(M/12))` and
/// `G = (4/3)√(1 − τ²) + 1`.
pub fn noise_tolerance_formula(sparsity: usize, tau: f64) -> f64 {
    let m = sparsity as f64;
    let t2 = tau * tau;
    let f = 2.0 / 3.0 * ((1.0 - t2) / t2).sqrt() - ((1.25 * m - 1.75 + 0.5 / m).sqrt() + (m / 12.0).sqrt());
    let g = 4.0 / 3.0 * (1.0 - t2).sqrt() + 1.0;
    f / g
}

/// Relative noise budget: exact recovery is guaranteed when
/// `‖e‖₂ ≤ f(M, τ) · min |x_i|`. Requires `0 < τ ≤ 1/√(6M)`.
pub fn noise_tolerance(sparsity: usize, tau: f64) -> Result<f64> {
    if sparsity == 0 {
        return Err(Error::Parameter("M must be >= 1".into()));
    }
    let upper = 1.0 / (6.0 * sparsity as f64).sqrt();
    if !(tau > 0.0 && tau <= upper) {
        return Err(Error::Parameter(format!(
            "tau = {tau} outside the admissible interval (0, {upper}] for M = {sparsity}"
        )));
    }
    Ok(noise_tolerance_formula(sparsity, tau))
}
