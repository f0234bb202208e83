//! CoSaMP baseline.
//!
//! Each iteration picks the `2M` largest proxy entries, merges them with the
//! current support, fits by least squares on the merged set, and prunes back
//! to the `M` largest fitted coefficients. Fits go through the same CG path
//! as TGP so run times compare like with like.

use std::time::Instant;

use num_complex::Complex64;

use crate::ensembles::MeasurementMatrix;
use crate::error::{Error, Result};
use crate::linalg::{fit_support, norm2, CVector, IndexSet, DEFAULT_CG_TOL};
use crate::tgp::{RecoveryResult, StopReason};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosampParams {
    pub sparsity: usize,
    pub iterations: usize,
    pub cg_tol: f64,
}

impl CosampParams {
    /// The comparison protocol: `M` iterations for sparsity `M`.
    pub fn for_sparsity(sparsity: usize) -> Self {
        CosampParams {
            sparsity,
            iterations: sparsity,
            cg_tol: DEFAULT_CG_TOL,
        }
    }
}

/// Indices of the `count` largest magnitudes; ties go to the lower index.
fn top_indices(magnitudes: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..magnitudes.len()).collect();
    let by_magnitude = |a: &usize, b: &usize| magnitudes[*b].total_cmp(&magnitudes[*a]).then(a.cmp(b));
    let count = count.min(order.len());
    if count < order.len() {
        order.select_nth_unstable_by(count, by_magnitude);
        order.truncate(count);
    }
    order.sort_unstable_by(by_magnitude);
    order
}

pub fn cosamp_recover(a: &MeasurementMatrix, b: &[Complex64], params: &CosampParams) -> Result<RecoveryResult> {
    let m = params.sparsity;
    if m == 0 {
        return Err(Error::Parameter("CoSaMP sparsity must be >= 1".into()));
    }
    if 3 * m > a.rows() {
        return Err(Error::Parameter(format!(
            "CoSaMP needs 3M <= N, got M = {m} and N = {}",
            a.rows()
        )));
    }
    if b.len() != a.rows() {
        return Err(Error::Dimension {
            expected: a.rows(),
            found: b.len(),
        });
    }
    let start = Instant::now();
    let b_norm = norm2(b);
    let mut support = IndexSet::empty();
    let mut values: Vec<Complex64> = Vec::new();
    let mut residual = CVector::from_raw(b.to_vec());
    let mut stop_reason = StopReason::IterCap;
    let mut iterations = 0;

    if b_norm == 0.0 {
        stop_reason = StopReason::ZeroResidual;
    }
    while iterations < params.iterations && stop_reason != StopReason::ZeroResidual {
        iterations += 1;
        let correlations = a.matrix().adjoint_apply(&residual)?;
        let magnitudes: Vec<f64> = correlations.iter().map(|z| z.norm()).collect();
        let candidates = IndexSet::from_indices(top_indices(&magnitudes, 2 * m));
        let merged = candidates.union(&support);
        let fit = fit_support(a.matrix(), &merged, b, params.cg_tol)?;

        let fitted: Vec<f64> = fit.coefficients.iter().map(|z| z.norm()).collect();
        // Positions inside `merged`, which is sorted, so lowest position = lowest index.
        let keep = top_indices(&fitted, m);
        let mut kept: Vec<(usize, Complex64)> = keep
            .iter()
            .map(|&p| (merged.as_slice()[p], fit.coefficients[p]))
            .collect();
        kept.sort_unstable_by_key(|&(j, _)| j);
        support = IndexSet::from_indices(kept.iter().map(|&(j, _)| j).collect());
        values = kept.into_iter().map(|(_, v)| v).collect();

        let approx = a.matrix().select_columns(&support)?.apply(&values)?;
        residual = CVector::from_raw(b.iter().zip(approx.iter()).map(|(bi, ai)| bi - ai).collect());
        if residual.norm2() <= params.cg_tol * b_norm {
            stop_reason = StopReason::ZeroResidual;
        }
    }

    Ok(RecoveryResult {
        omega: support,
        coefficients: CVector::from_raw(values),
        stop_reason,
        iterations,
        elapsed: start.elapsed(),
        trace: None,
    })
}
