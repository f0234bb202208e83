//! Monte-Carlo harness for the TGP / CoSaMP comparison sweeps and the
//! exact-recovery phase diagrams.
//!
//! A cell is one `(M, δ)` pair. Each cell draws one measurement matrix and
//! shares it across its trials; every trial draws a fresh signal and noise.
//! Seeds for all draws are derived from the master seed, the cell indices and
//! the trial index, so results do not depend on scheduling.
//!
//! "Recovered support" is reported both as `omega_size` (everything detected)
//! and `true_positives` (detected and in the true support).

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::cosamp::{cosamp_recover, CosampParams};
use crate::csvfmt::{sig6, write_file};
use crate::ensembles::{gen_constant_signal, gen_signal, make_instance, Ensemble, MeasurementMatrix};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::tgp::{tgp_recover, RecoveryResult, StopReason, TgpParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Tgp,
    Cosamp,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Tgp => "tgp",
            Algorithm::Cosamp => "cosamp",
        }
    }
}

/// One algorithm run on one trial instance.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub algorithm: Algorithm,
    pub ensemble: Ensemble,
    pub rows: usize,
    pub cols: usize,
    pub sparsity: usize,
    pub delta: f64,
    /// Seed the trial's signal and noise were derived from.
    pub seed: u64,
    pub elapsed_seconds: f64,
    pub omega_size: usize,
    pub true_positives: usize,
    pub false_discoveries: usize,
    pub exact: bool,
    pub noiseless_norm: f64,
    pub noise_norm: f64,
    pub stop_reason: Option<StopReason>,
    /// Set when the run errored; such rows carry no metrics.
    pub failure: Option<String>,
}

impl TrialRecord {
    fn from_outcome(
        algorithm: Algorithm,
        cell: &CellSpec,
        seed: u64,
        truth: &crate::linalg::IndexSet,
        noiseless_norm: f64,
        noise_norm: f64,
        outcome: Result<RecoveryResult>,
    ) -> Self {
        let mut record = TrialRecord {
            algorithm,
            ensemble: cell.ensemble,
            rows: cell.rows,
            cols: cell.cols,
            sparsity: cell.sparsity,
            delta: cell.delta,
            seed,
            elapsed_seconds: 0.0,
            omega_size: 0,
            true_positives: 0,
            false_discoveries: 0,
            exact: false,
            noiseless_norm,
            noise_norm,
            stop_reason: None,
            failure: None,
        };
        match outcome {
            Ok(result) => {
                let tp = result.omega.intersection_len(truth);
                record.elapsed_seconds = result.elapsed.as_secs_f64();
                record.omega_size = result.omega.len();
                record.true_positives = tp;
                record.false_discoveries = result.omega.len() - tp;
                record.exact = record.false_discoveries == 0 && tp == truth.len();
                record.stop_reason = Some(result.stop_reason);
            }
            Err(e) => record.failure = Some(e.to_string()),
        }
        record
    }

    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Clone, Copy, Debug)]
struct CellSpec {
    ensemble: Ensemble,
    rows: usize,
    cols: usize,
    sparsity: usize,
    delta: f64,
}

/// Which signal values a sweep draws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SignalModel {
    /// `1 + χ`, `χ ~ N(0, 1)`.
    ShiftedGaussian,
    /// Every support value equal to one.
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub ensemble: Ensemble,
    pub rows: usize,
    pub cols: usize,
    pub sparsities: Vec<usize>,
    pub deltas: Vec<f64>,
    pub tau: f64,
    pub trials: usize,
    pub seed: u64,
    pub serial: bool,
    pub run_cosamp: bool,
    pub signal: SignalModel,
}

impl SweepConfig {
    /// The comparison protocol defaults: `M = 1..=10`, `δ ∈ {0, 0.5, 1}`, 20 trials.
    pub fn comparison(ensemble: Ensemble, rows: usize, cols: usize, tau: f64, seed: u64) -> Self {
        SweepConfig {
            ensemble,
            rows,
            cols,
            sparsities: (1..=10).collect(),
            deltas: vec![0.0, 0.5, 1.0],
            tau,
            trials: 20,
            seed,
            serial: false,
            run_cosamp: true,
            signal: SignalModel::ShiftedGaussian,
        }
    }

    /// The matrix shared by every trial of cell `(sparsities[mi], deltas[di])`.
    pub fn cell_matrix(&self, mi: usize, di: usize) -> Result<MeasurementMatrix> {
        self.ensemble.generate(
            self.rows,
            self.cols,
            derive_seed(self.seed, "cell_matrix", mi as u64, di as u64),
        )
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Parameter("trials must be >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Parameter(format!("tau = {} must lie in (0, 1)", self.tau)));
        }
        if let Some(&m) = self.sparsities.iter().find(|&&m| m == 0 || m > self.cols) {
            return Err(Error::Parameter(format!("sparsity {m} must lie in 1..={}", self.cols)));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(Error::Parameter(format!("noise level {d} must be finite and >= 0")));
        }
        Ok(())
    }
}

/// Runs every cell and returns the raw per-trial records, cell by cell in
/// `(M, δ)` order with TGP before CoSaMP inside each trial.
pub fn run_trials(config: &SweepConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let mut records = Vec::new();
    for (mi, &sparsity) in config.sparsities.iter().enumerate() {
        for (di, &delta) in config.deltas.iter().enumerate() {
            let cell = CellSpec {
                ensemble: config.ensemble,
                rows: config.rows,
                cols: config.cols,
                sparsity,
                delta,
            };
            let cell_id = (mi as u64) << 32 | di as u64;
            let matrix = config.cell_matrix(mi, di)?;
            let trial = |t: usize| {
                run_one_trial(
                    config,
                    &cell,
                    &matrix,
                    derive_seed(config.seed, "trial", cell_id, t as u64),
                )
            };
            let per_trial: Vec<Vec<TrialRecord>> = if config.serial {
                (0..config.trials).map(trial).collect::<Result<_>>()?
            } else {
                (0..config.trials).into_par_iter().map(trial).collect::<Result<_>>()?
            };
            records.extend(per_trial.into_iter().flatten());
        }
    }
    Ok(records)
}

fn run_one_trial(
    config: &SweepConfig,
    cell: &CellSpec,
    matrix: &MeasurementMatrix,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    let signal = match config.signal {
        SignalModel::ShiftedGaussian => gen_signal(cell.cols, cell.sparsity, seed)?,
        SignalModel::Ones => gen_constant_signal(cell.cols, cell.sparsity, 1.0, seed)?,
    };
    let instance = make_instance(matrix, signal, cell.delta, seed)?;
    let truth = instance.signal.support().clone();
    let (clean, noise) = (instance.noiseless_norm, instance.noise_norm());

    let tgp = tgp_recover(matrix, &instance.observation, &TgpParams::new(config.tau));
    let mut out = vec![TrialRecord::from_outcome(
        Algorithm::Tgp,
        cell,
        seed,
        &truth,
        clean,
        noise,
        tgp,
    )];
    if config.run_cosamp {
        let cosamp = cosamp_recover(
            matrix,
            &instance.observation,
            &CosampParams::for_sparsity(cell.sparsity),
        );
        out.push(TrialRecord::from_outcome(
            Algorithm::Cosamp,
            cell,
            seed,
            &truth,
            clean,
            noise,
            cosamp,
        ));
    }
    Ok(out)
}

/// Per-cell means for one algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub ensemble: Ensemble,
    pub rows: usize,
    pub cols: usize,
    pub sparsity: usize,
    pub delta: f64,
    /// Configured trials in the cell, failed ones included.
    pub trials: usize,
    pub mean_elapsed_s: f64,
    pub mean_true_positives: f64,
    pub mean_false_discoveries: f64,
    pub mean_omega_size: f64,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
    pub records: Vec<TrialRecord>,
}

impl SweepTable {
    pub fn row(&self, algorithm: Algorithm, sparsity: usize, delta: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.algorithm == algorithm && r.sparsity == sparsity && r.delta == delta)
    }
}

/// Groups records by `(M, δ, algorithm)` in first-seen order and averages
/// the successful ones.
pub fn aggregate(records: &[TrialRecord]) -> Vec<SweepRow> {
    let mut rows: Vec<(SweepRow, usize)> = Vec::new();
    for r in records {
        let pos = rows
            .iter()
            .position(|(row, _)| row.algorithm == r.algorithm && row.sparsity == r.sparsity && row.delta == r.delta);
        let idx = match pos {
            Some(i) => i,
            None => {
                rows.push((
                    SweepRow {
                        algorithm: r.algorithm,
                        ensemble: r.ensemble,
                        rows: r.rows,
                        cols: r.cols,
                        sparsity: r.sparsity,
                        delta: r.delta,
                        trials: 0,
                        mean_elapsed_s: 0.0,
                        mean_true_positives: 0.0,
                        mean_false_discoveries: 0.0,
                        mean_omega_size: 0.0,
                        failures: 0,
                    },
                    0,
                ));
                rows.len() - 1
            }
        };
        let (row, ok) = &mut rows[idx];
        row.trials += 1;
        if r.failed() {
            row.failures += 1;
            continue;
        }
        *ok += 1;
        row.mean_elapsed_s += r.elapsed_seconds;
        row.mean_true_positives += r.true_positives as f64;
        row.mean_false_discoveries += r.false_discoveries as f64;
        row.mean_omega_size += r.omega_size as f64;
    }
    rows.into_iter()
        .map(|(mut row, ok)| {
            if ok > 0 {
                let n = ok as f64;
                row.mean_elapsed_s /= n;
                row.mean_true_positives /= n;
                row.mean_false_discoveries /= n;
                row.mean_omega_size /= n;
            } else {
                row.mean_elapsed_s = f64::NAN;
                row.mean_true_positives = f64::NAN;
                row.mean_false_discoveries = f64::NAN;
                row.mean_omega_size = f64::NAN;
            }
            row
        })
        .collect()
}

/// TGP with `tau` against CoSaMP with `M` iterations on identical data.
pub fn run_comparison(config: &SweepConfig) -> Result<SweepTable> {
    let records = run_trials(config)?;
    Ok(SweepTable {
        config: config.clone(),
        rows: aggregate(&records),
        records,
    })
}

/// Exact-recovery fractions over an `M × δ` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    pub ensemble: Ensemble,
    pub rows: usize,
    pub cols: usize,
    pub trials: usize,
    pub tau: f64,
    pub seed: u64,
    pub sparsities: Vec<usize>,
    pub deltas: Vec<f64>,
    /// `success[m_index][delta_index]`.
    pub success: Vec<Vec<f64>>,
    /// `√N / √(M ln N)` per sparsity.
    pub overlay: Vec<f64>,
}

/// `√N / √(M ln N)`.
pub fn phase_overlay(rows: usize, sparsity: usize) -> f64 {
    let n = rows as f64;
    n.sqrt() / (sparsity as f64 * n.ln()).sqrt()
}

/// Runs TGP alone with unit signal values on every `(M, δ)` cell.
pub fn run_phase_diagram(config: &SweepConfig) -> Result<PhaseGrid> {
    let config = SweepConfig {
        run_cosamp: false,
        signal: SignalModel::Ones,
        ..config.clone()
    };
    let records = run_trials(&config)?;
    let mut success = vec![vec![0.0; config.deltas.len()]; config.sparsities.len()];
    let per_cell = config.trials;
    for (cell, chunk) in records.chunks(per_cell).enumerate() {
        let exact = chunk.iter().filter(|r| r.exact).count();
        success[cell / config.deltas.len()][cell % config.deltas.len()] = exact as f64 / per_cell as f64;
    }
    Ok(PhaseGrid {
        ensemble: config.ensemble,
        rows: config.rows,
        cols: config.cols,
        trials: config.trials,
        tau: config.tau,
        seed: config.seed,
        overlay: config
            .sparsities
            .iter()
            .map(|&m| phase_overlay(config.rows, m))
            .collect(),
        sparsities: config.sparsities,
        deltas: config.deltas,
        success,
    })
}

/// Dominant per-iteration operation count `(2ν + 2) N K`; the `O(K)` term
/// is left out.
pub fn per_iteration_flops(rows: u64, cols: u64, cg_iterations: u64) -> u64 {
    (2 * cg_iterations + 2) * rows * cols
}

fn metadata(out: &mut String, config: &SweepConfig) {
    let _ = writeln!(out, "# ensemble={}", config.ensemble);
    let _ = writeln!(out, "# N={}", config.rows);
    let _ = writeln!(out, "# K={}", config.cols);
    let _ = writeln!(out, "# tau={}", sig6(config.tau));
    let _ = writeln!(out, "# trials={}", config.trials);
    let _ = writeln!(out, "# seed={}", config.seed);
}

pub const SWEEP_HEADER: &str = "algorithm,ensemble,N,K,M,delta,trials,mean_elapsed_s,mean_true_positives,mean_false_discoveries,mean_omega_size,failures";
pub const PHASE_HEADER: &str = "M,delta,success_rate,overlay";
pub const TRIALS_HEADER: &str = "algorithm,ensemble,N,K,M,delta,seed,elapsed_s,omega_size,true_positives,false_discoveries,exact,noiseless_norm,noise_norm,stop_reason,failure";

/// Sweep CSV. With `include_timing == false` the elapsed column is written
/// as `0` so the file depends on the seed alone.
pub fn sweep_csv(table: &SweepTable, include_timing: bool) -> String {
    let mut out = String::new();
    metadata(&mut out, &table.config);
    let _ = writeln!(
        out,
        "# timing={}",
        if include_timing { "wall_clock" } else { "omitted" }
    );
    let _ = writeln!(out, "{SWEEP_HEADER}");
    for r in &table.rows {
        let elapsed = if include_timing {
            sig6(r.mean_elapsed_s)
        } else {
            "0".into()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.algorithm.as_str(),
            r.ensemble,
            r.rows,
            r.cols,
            r.sparsity,
            sig6(r.delta),
            r.trials,
            elapsed,
            sig6(r.mean_true_positives),
            sig6(r.mean_false_discoveries),
            sig6(r.mean_omega_size),
            r.failures
        );
    }
    out
}

pub fn emit_sweep_csv(table: &SweepTable, path: &Path, include_timing: bool) -> Result<()> {
    write_file(path, &sweep_csv(table, include_timing))
}

/// One row per trial record.
pub fn trials_csv(records: &[TrialRecord], include_timing: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{TRIALS_HEADER}");
    for r in records {
        let elapsed = if include_timing {
            sig6(r.elapsed_seconds)
        } else {
            "0".into()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.algorithm.as_str(),
            r.ensemble,
            r.rows,
            r.cols,
            r.sparsity,
            sig6(r.delta),
            r.seed,
            elapsed,
            r.omega_size,
            r.true_positives,
            r.false_discoveries,
            r.exact,
            sig6(r.noiseless_norm),
            sig6(r.noise_norm),
            r.stop_reason.map_or("", StopReason::as_str),
            r.failure.as_deref().unwrap_or("").replace([',', '\n'], ";")
        );
    }
    out
}

pub fn emit_trials_csv(records: &[TrialRecord], path: &Path, include_timing: bool) -> Result<()> {
    write_file(path, &trials_csv(records, include_timing))
}

pub fn phase_csv(grid: &PhaseGrid) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# ensemble={}", grid.ensemble);
    let _ = writeln!(out, "# N={}", grid.rows);
    let _ = writeln!(out, "# K={}", grid.cols);
    let _ = writeln!(out, "# tau={}", sig6(grid.tau));
    let _ = writeln!(out, "# trials={}", grid.trials);
    let _ = writeln!(out, "# seed={}", grid.seed);
    let _ = writeln!(out, "{PHASE_HEADER}");
    for (mi, &m) in grid.sparsities.iter().enumerate() {
        for (di, &d) in grid.deltas.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                m,
                sig6(d),
                sig6(grid.success[mi][di]),
                sig6(grid.overlay[mi])
            );
        }
    }
    out
}

pub fn emit_phase_csv(grid: &PhaseGrid, path: &Path) -> Result<()> {
    write_file(path, &phase_csv(grid))
}
