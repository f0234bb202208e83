//! Sparse support recovery with thresholding greedy pursuit (TGP).
//!
//! The crate covers the full pipeline: measurement ensembles and problem
//! instances ([`ensembles`]), the dense complex substrate with its CG
//! projection ([`linalg`]), the TGP algorithm and its closed-form parameter
//! choices ([`tgp`]), a CoSaMP baseline ([`cosamp`]), pure-noise calibration
//! of the threshold ([`calibration`]) and the Monte-Carlo harness
//! ([`experiments`]).
//!
//! ```
//! use tgp_core::{gen_gaussian, gen_signal, make_instance, tgp_recover, TgpParams};
//!
//! let a = gen_gaussian(200, 400, 7).unwrap();
//! let x = gen_signal(400, 2, 8).unwrap();
//! let inst = make_instance(&a, x.clone(), 0.0, 9).unwrap();
//! let result = tgp_recover(&a, &inst.observation, &TgpParams::new(0.35)).unwrap();
//! assert_eq!(&result.omega, x.support());
//! ```

pub mod calibration;
pub mod cosamp;
mod csvfmt;
pub mod ensembles;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod rng;
pub mod tgp;

pub use num_complex::Complex64;

pub use calibration::{
    calibrate, calibrate_tau, emit_transition_csv, transition_csv, CalibrationConfig, CalibrationReport, SUSTAINED_RUN,
};
pub use cosamp::{cosamp_recover, CosampParams};
pub use csvfmt::format_sig;
pub use ensembles::{
    for_each_column, gen_constant_signal, gen_gaussian, gen_partial_fourier, gen_signal, make_instance,
    mutual_coherence, pure_noise_instance, read_container, sample_sphere, write_container, Container, Ensemble,
    MeasurementMatrix, ProblemInstance, SparseSignal,
};
pub use error::{Error, Result};
pub use experiments::{
    aggregate, emit_phase_csv, emit_sweep_csv, emit_trials_csv, per_iteration_flops, phase_csv, phase_overlay,
    run_comparison, run_phase_diagram, run_trials, sweep_csv, trials_csv, Algorithm, PhaseGrid, SignalModel,
    SweepConfig, SweepRow, SweepTable, TrialRecord, PHASE_HEADER, SWEEP_HEADER, TRIALS_HEADER,
};
pub use linalg::{
    cg_budget, cg_solve, complement_project, fit_support, gram_extreme_eigs, inner, least_squares_fit, CMatrix,
    CVector, CgReport, IndexSet, SupportFit, DEFAULT_CG_TOL, RANK_EPS,
};
pub use tgp::{
    c0_constant, gamma_for, noise_tolerance, noise_tolerance_formula, proxy, proxy_max, sparsity_cap, tau_floor,
    tau_theorem3, tgp_recover, threshold, IterationRecord, RecoveryResult, StopReason, TgpParams,
};
