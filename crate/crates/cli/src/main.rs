//! `tgp`: recovery, calibration and experiment runs from the command line.
//!
//! Every run takes an explicit `--seed`; the same flags always produce the
//! same CSV bytes. Wall-clock columns are the one exception and are only
//! written when `--timing` is passed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use tgp_core::{
    c0_constant, calibrate, emit_phase_csv, emit_sweep_csv, emit_transition_csv, emit_trials_csv, format_sig,
    gamma_for, gen_signal, make_instance, mutual_coherence, pure_noise_instance, read_container, run_comparison,
    run_phase_diagram, sparsity_cap, tau_floor, tau_theorem3, tgp_recover, write_container, Algorithm,
    CalibrationConfig, Ensemble, Error, MeasurementMatrix, SignalModel, SweepConfig, TgpParams,
};

#[derive(Parser, Debug)]
#[command(
    name = "tgp",
    version,
    about = "Thresholding greedy pursuit for sparse support recovery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Recover the support of one synthetic or stored instance
    Recover(RecoverArgs),
    /// Calibrate tau on pure noise and write the transition diagram
    Calibrate(CalibrateArgs),
    /// Sweep TGP against CoSaMP over sparsity and noise level
    Compare(CompareArgs),
    /// Exact-recovery phase diagram for TGP with unit signal values
    Phase(PhaseArgs),
    /// Mutual coherence and the parameter bounds it implies
    Coherence(CoherenceArgs),
}

#[derive(Args, Debug)]
struct RecoverArgs {
    /// Measurement ensemble (gaussian or fourier)
    #[arg(long, default_value = "gaussian")]
    ensemble: Ensemble,
    /// Number of measurements N (rows)
    #[arg(long, required_unless_present = "input")]
    n: Option<usize>,
    /// Signal length K (columns)
    #[arg(long, required_unless_present = "input")]
    k: Option<usize>,
    /// Sparsity M of the synthetic signal; 0 observes unit-norm pure noise
    #[arg(long, required_unless_present = "input")]
    m: Option<usize>,
    /// Noise level ||e|| / ||Ax||
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Threshold tau in (0, 1)
    #[arg(long)]
    tau: f64,
    /// Master seed for every random draw
    #[arg(long)]
    seed: u64,
    /// Matrix container to recover from instead of a synthetic matrix
    #[arg(long)]
    input: Option<PathBuf>,
    /// Relative tolerance for the CG projection and the zero-residual stop
    #[arg(long, default_value = "1e-12")]
    cg_tol: f64,
    /// Cap on outer iterations [default: min(N, K)]
    #[arg(long)]
    max_iters: Option<usize>,
    /// Write the per-iteration trace as CSV
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Save the matrix and observation as a container
    #[arg(long)]
    save: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Measurement ensemble (gaussian or fourier)
    #[arg(long, default_value = "gaussian")]
    ensemble: Ensemble,
    /// Number of measurements N (rows)
    #[arg(long)]
    n: usize,
    /// Signal length K (columns)
    #[arg(long)]
    k: usize,
    /// Pure-noise trials per grid point
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Spacing of the tau grid
    #[arg(long, default_value_t = 0.003)]
    grid_step: f64,
    /// Largest tau scanned [default: min(1, 2 * tau_floor)]
    #[arg(long)]
    ceiling: Option<f64>,
    /// Master seed for every random draw
    #[arg(long)]
    seed: u64,
    /// Transition diagram CSV (tau,success_rate)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run single-threaded
    #[arg(long)]
    serial: bool,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Measurement ensemble (gaussian or fourier)
    #[arg(long, default_value = "gaussian")]
    ensemble: Ensemble,
    /// Number of measurements N (rows)
    #[arg(long)]
    n: usize,
    /// Signal length K (columns)
    #[arg(long)]
    k: usize,
    /// Sparsities, as a list (1,2,5) or an inclusive range (1..10)
    #[arg(long, default_value = "1..10", value_parser = parse_counts)]
    m: Counts,
    /// Noise levels ||e|| / ||Ax||, comma separated
    #[arg(long, default_value = "0,0.5,1", value_delimiter = ',')]
    deltas: Vec<f64>,
    /// Threshold tau in (0, 1)
    #[arg(long)]
    tau: f64,
    /// Trials per (M, delta) cell
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Master seed for every random draw
    #[arg(long)]
    seed: u64,
    /// Sweep CSV with per-cell means
    #[arg(long)]
    out: Option<PathBuf>,
    /// Raw CSV with one row per trial and algorithm
    #[arg(long)]
    trials_out: Option<PathBuf>,
    /// Run single-threaded, for uncontended timings
    #[arg(long)]
    serial: bool,
    /// Write measured wall-clock times instead of 0 in the elapsed columns
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct PhaseArgs {
    /// Measurement ensemble (gaussian or fourier)
    #[arg(long, default_value = "gaussian")]
    ensemble: Ensemble,
    /// Number of measurements N (rows)
    #[arg(long)]
    n: usize,
    /// Signal length K (columns)
    #[arg(long)]
    k: usize,
    /// Sparsities, as a list (1,2,5) or an inclusive range (1..10)
    #[arg(long, default_value = "1..10", value_parser = parse_counts)]
    m: Counts,
    /// Noise levels ||e|| / ||Ax||, comma separated
    #[arg(
        long,
        default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1",
        value_delimiter = ','
    )]
    deltas: Vec<f64>,
    /// Threshold tau in (0, 1)
    #[arg(long)]
    tau: f64,
    /// Trials per (M, delta) cell
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Master seed for every random draw
    #[arg(long)]
    seed: u64,
    /// Phase CSV (M,delta,success_rate,overlay)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run single-threaded
    #[arg(long)]
    serial: bool,
}

#[derive(Args, Debug)]
struct CoherenceArgs {
    /// Measurement ensemble (gaussian or fourier)
    #[arg(long, default_value = "gaussian")]
    ensemble: Ensemble,
    /// Number of measurements N (rows)
    #[arg(long, required_unless_present = "input")]
    n: Option<usize>,
    /// Signal length K (columns)
    #[arg(long, required_unless_present = "input")]
    k: Option<usize>,
    /// Master seed for the synthetic matrix
    #[arg(long, required_unless_present = "input")]
    seed: Option<u64>,
    /// Matrix container to analyse instead of a synthetic matrix
    #[arg(long)]
    input: Option<PathBuf>,
    /// Exponent gamma in K = N^gamma [default: max(1, ln K / ln N)]
    #[arg(long)]
    gamma: Option<f64>,
    /// Failure-probability exponent kappa
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
}

#[derive(Clone, Debug)]
struct Counts(Vec<usize>);

fn parse_counts(s: &str) -> Result<Counts, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((lo, hi)) => {
                let lo: usize = lo.trim().parse().map_err(|_| format!("bad range start in `{part}`"))?;
                let hi: usize = hi.trim().parse().map_err(|_| format!("bad range end in `{part}`"))?;
                if lo > hi {
                    return Err(format!("empty range `{part}`"));
                }
                out.extend(lo..=hi);
            }
            None => out.push(part.parse().map_err(|_| format!("`{part}` is not a count"))?),
        }
    }
    Ok(Counts(out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Recover(args) => cmd_recover(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Phase(args) => cmd_phase(args),
        Command::Coherence(args) => cmd_coherence(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Reports a flag combination clap cannot express and exits with status 2.
fn usage_error(subcommand: &str, kind: ErrorKind, message: &str) -> ! {
    let mut cli = Cli::command();
    cli.build();
    let mut sub = cli.find_subcommand(subcommand).cloned().unwrap_or_else(Cli::command);
    sub.error(kind, message).exit()
}

fn indices(set: &[usize]) -> String {
    if set.is_empty() {
        return "empty".into();
    }
    set.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_recover(args: RecoverArgs) -> Result<(), Error> {
    let params = TgpParams {
        cg_tol: args.cg_tol,
        max_outer_iters: args.max_iters,
        ..TgpParams::new(args.tau)
    }
    .with_trace();

    let stored = args.input.as_deref().map(read_container).transpose()?;
    let matrix: MeasurementMatrix = match &stored {
        Some(c) => c.matrix.clone(),
        None => {
            let (n, k) = (args.n.unwrap_or_default(), args.k.unwrap_or_default());
            args.ensemble.generate(n, k, args.seed)?
        }
    };

    let mut truth = None;
    let observation = match stored.and_then(|c| c.observation) {
        Some(b) => b,
        None => {
            let Some(m) = args.m else {
                usage_error(
                    "recover",
                    ErrorKind::MissingRequiredArgument,
                    "the container holds no observation; pass --m to synthesize one",
                );
            };
            if m == 0 {
                pure_noise_instance(&matrix, 1.0, args.seed)?.observation
            } else {
                let signal = gen_signal(matrix.cols(), m, args.seed)?;
                let instance = make_instance(&matrix, signal, args.delta, args.seed)?;
                truth = Some(instance.signal.support().clone());
                instance.observation
            }
        }
    };
    if let Some(path) = &args.save {
        write_container(path, &matrix, Some(&observation))?;
    }

    let result = tgp_recover(&matrix, &observation, &params)?;
    println!("ensemble: {}", matrix.ensemble());
    println!("N: {}", matrix.rows());
    println!("K: {}", matrix.cols());
    println!("tau: {}", format_sig(args.tau, 6));
    println!("support: {}", indices(result.omega.as_slice()));
    if let Some(t) = &truth {
        println!("true_support: {}", indices(t.as_slice()));
        println!("exact: {}", &result.omega == t);
    }
    println!("coefficients:");
    for (j, c) in result.omega.iter().zip(result.coefficients.iter()) {
        println!("  {j} {} {}", format_sig(c.re, 6), format_sig(c.im, 6));
    }
    println!("stop_reason: {}", result.stop_reason.as_str());
    println!("iterations: {}", result.iterations);
    println!("elapsed_s: {:.6}", result.elapsed.as_secs_f64());

    if let (Some(path), Some(trace)) = (&args.trace, &result.trace) {
        let mut csv = String::from("iteration,proxy_max,detected,residual_norm,cg_iterations\n");
        for (i, r) in trace.iter().enumerate() {
            let detected: Vec<String> = r.detected.iter().map(|j| j.to_string()).collect();
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                i + 1,
                format_sig(r.proxy_max, 6),
                detected.join(" "),
                format_sig(r.residual_norm, 6),
                r.cg_iterations
            );
        }
        write_text(path, &csv)?;
    }
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), Error> {
    let config = CalibrationConfig {
        grid_step: args.grid_step,
        trials: args.trials,
        ceiling: args.ceiling,
        serial: args.serial,
        ..CalibrationConfig::new(args.ensemble, args.n, args.k, args.seed)
    };
    let report = calibrate(&config)?;
    if let Some(path) = &args.out {
        emit_transition_csv(&report, path)?;
    }
    let floor = tau_floor(args.n, gamma_for(args.n, args.k).max(1.0), 1.0)?;
    println!("grid_points: {}", report.tau_grid.len());
    println!("tau_floor: {}", format_sig(floor, 6));
    match report.tau_star {
        Some(t) => println!("tau_star: {}", format_sig(t, 6)),
        None => {
            println!("tau_star: none");
            if let Some(d) = &report.diagnostic {
                eprintln!("warning: {d}");
            }
        }
    }
    Ok(())
}

fn sweep_config(
    ensemble: Ensemble,
    n: usize,
    k: usize,
    m: Counts,
    deltas: Vec<f64>,
    tau: f64,
    trials: usize,
    seed: u64,
    serial: bool,
) -> SweepConfig {
    SweepConfig {
        sparsities: m.0,
        deltas,
        trials,
        serial,
        ..SweepConfig::comparison(ensemble, n, k, tau, seed)
    }
}

fn cmd_compare(args: CompareArgs) -> Result<(), Error> {
    let config = sweep_config(
        args.ensemble,
        args.n,
        args.k,
        args.m,
        args.deltas,
        args.tau,
        args.trials,
        args.seed,
        args.serial,
    );
    // CoSaMP's precondition is checked up front so a bad M is a usage error
    // rather than a sweep full of failed rows.
    if let Some(m) = config.sparsities.iter().find(|&&m| 3 * m > config.rows) {
        usage_error(
            "compare",
            ErrorKind::ValueValidation,
            &format!("CoSaMP needs 3M <= N, got M = {m} and N = {}", config.rows),
        );
    }
    let table = run_comparison(&config)?;
    if let Some(path) = &args.out {
        emit_sweep_csv(&table, path, args.timing)?;
    }
    if let Some(path) = &args.trials_out {
        emit_trials_csv(&table.records, path, args.timing)?;
    }
    println!("algorithm  M  delta  true_pos  false_disc  omega  elapsed_s  failures");
    for r in &table.rows {
        println!(
            "{:<9} {:>2} {:>6} {:>9} {:>11} {:>6} {:>10} {:>9}",
            r.algorithm.as_str(),
            r.sparsity,
            format_sig(r.delta, 3),
            format_sig(r.mean_true_positives, 4),
            format_sig(r.mean_false_discoveries, 4),
            format_sig(r.mean_omega_size, 4),
            format_sig(r.mean_elapsed_s, 3),
            r.failures
        );
    }
    let tgp_fd: f64 = table
        .rows
        .iter()
        .filter(|r| r.algorithm == Algorithm::Tgp)
        .map(|r| r.mean_false_discoveries)
        .sum();
    println!("tgp_false_discoveries_total_mean: {}", format_sig(tgp_fd, 6));
    Ok(())
}

fn cmd_phase(args: PhaseArgs) -> Result<(), Error> {
    let config = SweepConfig {
        signal: SignalModel::Ones,
        run_cosamp: false,
        ..sweep_config(
            args.ensemble,
            args.n,
            args.k,
            args.m,
            args.deltas,
            args.tau,
            args.trials,
            args.seed,
            args.serial,
        )
    };
    let grid = run_phase_diagram(&config)?;
    if let Some(path) = &args.out {
        emit_phase_csv(&grid, path)?;
    }
    let header: Vec<String> = grid
        .deltas
        .iter()
        .map(|d| format!("{:>6}", format_sig(*d, 3)))
        .collect();
    println!("M\\delta {}  overlay", header.join(""));
    for (mi, m) in grid.sparsities.iter().enumerate() {
        let cells: Vec<String> = grid.success[mi]
            .iter()
            .map(|s| format!("{:>6}", format_sig(*s, 3)))
            .collect();
        println!("{m:>7} {}  {}", cells.join(""), format_sig(grid.overlay[mi], 6));
    }
    Ok(())
}

fn cmd_coherence(args: CoherenceArgs) -> Result<(), Error> {
    let matrix = match &args.input {
        Some(path) => read_container(path)?.matrix,
        None => args.ensemble.generate(
            args.n.unwrap_or_default(),
            args.k.unwrap_or_default(),
            args.seed.unwrap_or_default(),
        )?,
    };
    let (n, k) = (matrix.rows(), matrix.cols());
    let gamma = args.gamma.unwrap_or_else(|| gamma_for(n, k).max(1.0));
    let mu = mutual_coherence(&matrix)?;
    println!("ensemble: {}", matrix.ensemble());
    println!("N: {n}");
    println!("K: {k}");
    println!("gamma: {}", format_sig(gamma, 6));
    println!("kappa: {}", format_sig(args.kappa, 6));
    println!("c0: {}", format_sig(c0_constant(gamma, args.kappa)?, 6));
    println!("mu: {}", format_sig(mu, 12));
    if mu > 0.0 {
        println!("inv_4mu: {}", format_sig(1.0 / (4.0 * mu), 6));
    } else {
        println!("inv_4mu: inf");
    }
    println!("sparsity_cap: {}", sparsity_cap(mu, n, gamma, args.kappa)?);
    println!(
        "tau_theorem3: {}",
        format_sig(tau_theorem3(mu, n, gamma, args.kappa)?, 6)
    );
    println!("tau_floor: {}", format_sig(tau_floor(n, gamma, args.kappa)?, 6));
    Ok(())
}
