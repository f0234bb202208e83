//! Empirical calibration of `tau` on pure noise.
//!
//! For every grid value of `tau` a fresh batch of trials is drawn: a new
//! matrix from the ensemble and a new observation uniform on the unit sphere.
//! A trial succeeds when TGP returns the empty set. Because the first pass
//! decides emptiness, a trial succeeds exactly when the largest normalized
//! correlation does not exceed `tau`, which is what is evaluated here.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::csvfmt::{sig6, write_file};
use crate::ensembles::{for_each_column, sample_sphere, Ensemble};
use crate::error::{Error, Result};
use crate::linalg::dotc;
use crate::rng::derive_seed;
use crate::tgp::{gamma_for, tau_floor};

/// Consecutive grid points at rate 1 needed before a transition is declared.
pub const SUSTAINED_RUN: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationConfig {
    pub ensemble: Ensemble,
    pub rows: usize,
    pub cols: usize,
    pub grid_step: f64,
    pub trials: usize,
    pub seed: u64,
    /// Largest grid value scanned; defaults to `min(1, 2 · tau_floor)`.
    pub ceiling: Option<f64>,
    pub serial: bool,
}

impl CalibrationConfig {
    pub fn new(ensemble: Ensemble, rows: usize, cols: usize, seed: u64) -> Self {
        CalibrationConfig {
            ensemble,
            rows,
            cols,
            grid_step: 0.003,
            trials: 50,
            seed,
            ceiling: None,
            serial: false,
        }
    }

    pub fn default_ceiling(&self) -> Result<f64> {
        let floor = tau_floor(self.rows, gamma_for(self.rows, self.cols).max(1.0), 1.0)?;
        Ok((2.0 * floor).min(1.0))
    }

    /// `0, step, 2·step, …` up to the ceiling.
    pub fn grid(&self) -> Result<Vec<f64>> {
        let ceiling = match self.ceiling {
            Some(c) => c,
            None => self.default_ceiling()?,
        };
        let points = (ceiling / self.grid_step + 1e-9).floor() as usize;
        Ok((0..=points).map(|k| k as f64 * self.grid_step).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationReport {
    pub ensemble: Ensemble,
    pub rows: usize,
    pub cols: usize,
    pub grid_step: f64,
    pub trials_per_point: usize,
    pub seed: u64,
    pub tau_grid: Vec<f64>,
    pub success_rate: Vec<f64>,
    pub tau_star: Option<f64>,
    pub diagnostic: Option<String>,
}

impl CalibrationReport {
    /// Builds a report from raw success counts, locating the transition.
    pub fn from_counts(config: &CalibrationConfig, tau_grid: Vec<f64>, successes: &[usize]) -> Self {
        let success_rate: Vec<f64> = successes.iter().map(|&s| s as f64 / config.trials as f64).collect();
        let run = successes.iter().rev().take_while(|&&s| s == config.trials).count();
        let (tau_star, diagnostic) = if run >= SUSTAINED_RUN {
            (Some(tau_grid[tau_grid.len() - run]), None)
        } else {
            let top = tau_grid.last().copied().unwrap_or(0.0);
            (
                None,
                Some(format!(
                    "only {run} trailing grid points up to tau = {} reach rate 1; {SUSTAINED_RUN} are required",
                    sig6(top)
                )),
            )
        };
        CalibrationReport {
            ensemble: config.ensemble,
            rows: config.rows,
            cols: config.cols,
            grid_step: config.grid_step,
            trials_per_point: config.trials,
            seed: config.seed,
            tau_grid,
            success_rate,
            tau_star,
            diagnostic,
        }
    }
}

/// Largest normalized correlation of one pure-noise trial at grid index `point`.
fn noise_trial_max(config: &CalibrationConfig, point: usize, trial: usize) -> Result<f64> {
    let (p, t) = (point as u64, trial as u64);
    let b = sample_sphere(config.rows, derive_seed(config.seed, "calibration_noise", p, t))?;
    let mut best = 0.0f64;
    for_each_column(
        config.ensemble,
        config.rows,
        config.cols,
        derive_seed(config.seed, "calibration_matrix", p, t),
        |_, column| best = best.max(dotc(column, &b).norm_sqr()),
    )?;
    // b is unit norm.
    Ok(best.sqrt())
}

pub fn calibrate(config: &CalibrationConfig) -> Result<CalibrationReport> {
    if !(config.grid_step > 0.0) {
        return Err(Error::Parameter(format!(
            "grid step {} must be positive",
            config.grid_step
        )));
    }
    if config.trials == 0 {
        return Err(Error::Parameter("calibration needs at least one trial".into()));
    }
    if config.rows < 2 {
        return Err(Error::Parameter(format!("N = {} must be >= 2", config.rows)));
    }
    let grid = config.grid()?;
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|p| (0..config.trials).map(move |t| (p, t)))
        .collect();
    let run = |&(p, t): &(usize, usize)| -> Result<bool> { Ok(noise_trial_max(config, p, t)? <= grid[p]) };
    let outcomes: Vec<bool> = if config.serial {
        jobs.iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    };
    let successes: Vec<usize> = outcomes
        .chunks(config.trials)
        .map(|chunk| chunk.iter().filter(|&&s| s).count())
        .collect();
    Ok(CalibrationReport::from_counts(config, grid, &successes))
}

/// Calibrates with the default step (0.003), ceiling and 50 trials unless overridden.
pub fn calibrate_tau(
    ensemble: Ensemble,
    rows: usize,
    cols: usize,
    grid_step: f64,
    trials: usize,
    seed: u64,
) -> Result<CalibrationReport> {
    calibrate(&CalibrationConfig {
        grid_step,
        trials,
        ..CalibrationConfig::new(ensemble, rows, cols, seed)
    })
}

/// Renders the transition diagram as CSV (`tau,success_rate`).
pub fn transition_csv(report: &CalibrationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# ensemble={}", report.ensemble);
    let _ = writeln!(out, "# N={}", report.rows);
    let _ = writeln!(out, "# K={}", report.cols);
    let _ = writeln!(out, "# trials={}", report.trials_per_point);
    let _ = writeln!(out, "# seed={}", report.seed);
    let _ = writeln!(out, "# grid_step={}", sig6(report.grid_step));
    match report.tau_star {
        Some(t) => {
            let _ = writeln!(out, "# tau_star={}", sig6(t));
        }
        None => {
            let _ = writeln!(out, "# tau_star=none");
        }
    }
    out.push_str("tau,success_rate\n");
    for (tau, rate) in report.tau_grid.iter().zip(&report.success_rate) {
        let _ = writeln!(out, "{},{}", sig6(*tau), sig6(*rate));
    }
    out
}

pub fn emit_transition_csv(report: &CalibrationReport, path: &Path) -> Result<()> {
    write_file(path, &transition_csv(report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(trials: usize) -> CalibrationConfig {
        CalibrationConfig {
            trials,
            ..CalibrationConfig::new(Ensemble::Gaussian, 100, 200, 1)
        }
    }

    #[test]
    fn tau_star_needs_a_sustained_run() {
        let cfg = config(2);
        let grid: Vec<f64> = (0..15).map(|k| k as f64 * 0.01).collect();
        let mut counts = vec![0, 0, 1, 2, 1];
        counts.extend(std::iter::repeat(2).take(10));
        let report = CalibrationReport::from_counts(&cfg, grid.clone(), &counts);
        assert_eq!(report.tau_star, Some(grid[5]));
        assert!(report.success_rate.iter().all(|r| (r * 2.0).fract() == 0.0));

        counts[6] = 1;
        let report = CalibrationReport::from_counts(&cfg, grid, &counts);
        assert_eq!(report.tau_star, None);
        assert!(report.diagnostic.unwrap().contains("8 trailing"));
    }

    #[test]
    fn upper_boundary_always_succeeds() {
        let cfg = CalibrationConfig {
            ceiling: Some(1.0),
            grid_step: 0.25,
            trials: 5,
            ..config(5)
        };
        let report = calibrate(&cfg).unwrap();
        assert_eq!(*report.tau_grid.last().unwrap(), 1.0);
        assert_eq!(*report.success_rate.last().unwrap(), 1.0);
        assert_eq!(report.success_rate[0], 0.0);
    }

    #[test]
    fn grid_uses_default_ceiling() {
        let cfg = config(1);
        let grid = cfg.grid().unwrap();
        let ceiling = cfg.default_ceiling().unwrap();
        assert!(*grid.last().unwrap() <= ceiling + 1e-12);
        assert!(*grid.last().unwrap() + cfg.grid_step > ceiling);
        assert_eq!(grid[0], 0.0);
    }

    #[test]
    fn csv_layout_and_determinism() {
        let cfg = config(3);
        let report = CalibrationReport::from_counts(&cfg, vec![0.0, 0.003], &[0, 3]);
        let text = transition_csv(&report);
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data, vec!["tau,success_rate", "0,0", "0.003,1"]);
        assert_eq!(text, transition_csv(&report));
        assert!(!text.contains('\r'));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        emit_transition_csv(&report, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
        let err = emit_transition_csv(&report, &dir.path().join("missing/t.csv")).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn streamed_trial_matches_tgp_first_pass() {
        let cfg = config(1);
        for (point, trial) in [(0, 0), (3, 1), (7, 2)] {
            let streamed = noise_trial_max(&cfg, point, trial).unwrap();
            let (p, t) = (point as u64, trial as u64);
            let a = cfg
                .ensemble
                .generate(cfg.rows, cfg.cols, derive_seed(cfg.seed, "calibration_matrix", p, t))
                .unwrap();
            let b = sample_sphere(cfg.rows, derive_seed(cfg.seed, "calibration_noise", p, t)).unwrap();
            assert!((streamed - crate::tgp::proxy_max(&a, &b).unwrap()).abs() < 1e-15);
            // Just above and just below the maximum decide the full algorithm's output.
            let above = crate::tgp::tgp_recover(&a, &b, &crate::tgp::TgpParams::new(streamed * (1.0 + 1e-9))).unwrap();
            assert!(above.omega.is_empty());
            let below = crate::tgp::tgp_recover(&a, &b, &crate::tgp::TgpParams::new(streamed * (1.0 - 1e-9))).unwrap();
            assert!(!below.omega.is_empty());
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(calibrate(&CalibrationConfig {
            grid_step: 0.0,
            ..config(1)
        })
        .is_err());
        assert!(calibrate(&config(0)).is_err());
    }

    #[test]
    fn small_run_is_deterministic_and_parallel_agnostic() {
        let cfg = CalibrationConfig {
            grid_step: 0.02,
            trials: 4,
            ..config(4)
        };
        let a = calibrate(&cfg).unwrap();
        let b = calibrate(&CalibrationConfig { serial: true, ..cfg }).unwrap();
        assert_eq!(a, b);
    }
}
