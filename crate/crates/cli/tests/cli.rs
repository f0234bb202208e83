use std::path::Path;
use std::process::{Command, Output};

use tgp_core::{gen_signal, Ensemble};

fn tgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tgp"))
        .args(args)
        .output()
        .expect("spawn tgp")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` line in:\n{text}"))
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

// Flag name, whether help must show a `[default: …]`.
const RECOVER_FLAGS: &[(&str, bool)] = &[
    ("--ensemble", true),
    ("--n", false),
    ("--k", false),
    ("--m", false),
    ("--delta", true),
    ("--tau", false),
    ("--seed", false),
    ("--input", false),
    ("--cg-tol", true),
    ("--max-iters", true),
    ("--trace", false),
    ("--save", false),
];
const CALIBRATE_FLAGS: &[(&str, bool)] = &[
    ("--ensemble", true),
    ("--n", false),
    ("--k", false),
    ("--trials", true),
    ("--grid-step", true),
    ("--ceiling", true),
    ("--seed", false),
    ("--out", false),
    ("--serial", false),
];
const COMPARE_FLAGS: &[(&str, bool)] = &[
    ("--ensemble", true),
    ("--n", false),
    ("--k", false),
    ("--m", true),
    ("--deltas", true),
    ("--tau", false),
    ("--trials", true),
    ("--seed", false),
    ("--out", false),
    ("--trials-out", false),
    ("--serial", false),
    ("--timing", false),
];
const PHASE_FLAGS: &[(&str, bool)] = &[
    ("--ensemble", true),
    ("--n", false),
    ("--k", false),
    ("--m", true),
    ("--deltas", true),
    ("--tau", false),
    ("--trials", true),
    ("--seed", false),
    ("--out", false),
    ("--serial", false),
];
const COHERENCE_FLAGS: &[(&str, bool)] = &[
    ("--ensemble", true),
    ("--n", false),
    ("--k", false),
    ("--seed", false),
    ("--input", false),
    ("--gamma", true),
    ("--kappa", true),
];

/// `(flag, description)` for every option line of a help screen.
fn parse_help(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map(str::trim_start)
        .filter(|l| l.starts_with("--") || l.starts_with("-h,"))
        .map(|l| {
            let l = l.trim_start_matches("-h, ");
            let flag = l.split_whitespace().next().unwrap().to_string();
            let rest = l[flag.len()..].trim_start();
            // Skip the value placeholder, if any.
            let rest = if rest.starts_with('<') {
                rest.split_once('>').map_or("", |(_, r)| r).trim()
            } else {
                rest.trim()
            };
            (flag, rest.to_string())
        })
        .collect()
}

#[test]
fn help_documents_every_flag_with_defaults() {
    let subcommands: [(&str, &[(&str, bool)]); 5] = [
        ("recover", RECOVER_FLAGS),
        ("calibrate", CALIBRATE_FLAGS),
        ("compare", COMPARE_FLAGS),
        ("phase", PHASE_FLAGS),
        ("coherence", COHERENCE_FLAGS),
    ];
    for (sub, expected) in subcommands {
        let out = tgp(&[sub, "--help"]);
        assert!(out.status.success());
        let listed = parse_help(&stdout(&out));
        for (flag, description) in &listed {
            assert!(!description.is_empty(), "{sub} {flag} has no description");
            if flag != "--help" {
                assert!(
                    expected.iter().any(|(f, _)| f == flag),
                    "{sub} lists {flag}, which this test does not know"
                );
            }
        }
        for (flag, has_default) in expected {
            let (_, description) = listed
                .iter()
                .find(|(f, _)| f == flag)
                .unwrap_or_else(|| panic!("{sub} help is missing {flag}"));
            assert_eq!(
                description.contains("[default: "),
                *has_default,
                "{sub} {flag} default display: {description}"
            );
        }
    }
    let top = stdout(&tgp(&["--help"]));
    for sub in ["recover", "calibrate", "compare", "phase", "coherence"] {
        assert!(top.contains(sub), "top-level help misses {sub}");
    }
}

#[test]
fn recover_reports_known_support() {
    let out = tgp(&[
        "recover",
        "--ensemble",
        "gaussian",
        "--n",
        "400",
        "--k",
        "800",
        "--m",
        "3",
        "--delta",
        "0",
        "--tau",
        "0.2",
        "--seed",
        "7",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let x = gen_signal(800, 3, 7).unwrap();
    let expected: Vec<String> = x.support().iter().map(|j| j.to_string()).collect();
    assert_eq!(field(&text, "support"), expected.join(" "));
    assert_eq!(field(&text, "stop_reason"), "zero_residual");
    let coefficients: Vec<f64> = text
        .lines()
        .skip_while(|l| *l != "coefficients:")
        .skip(1)
        .take_while(|l| l.starts_with("  "))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    for (c, v) in coefficients.iter().zip(x.values()) {
        assert!((c - v.re).abs() <= 1e-5 * v.re.abs(), "{c} vs {v}");
    }
}

#[test]
fn recover_on_pure_noise_is_empty() {
    let out = tgp(&[
        "recover", "--n", "100", "--k", "100", "--m", "0", "--tau", "0.5", "--seed", "1",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(field(&text, "support"), "empty");
    assert_eq!(field(&text, "stop_reason"), "empty_threshold");
    assert_eq!(field(&text, "iterations"), "1");
}

#[test]
fn missing_flags_are_usage_errors() {
    let out = tgp(&["recover", "--n", "100", "--k", "100", "--m", "0", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--tau"));

    let out = tgp(&["calibrate", "--n", "100", "--k", "200"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--seed"));

    let out = tgp(&[
        "compare", "--n", "30", "--k", "60", "--m", "11", "--tau", "0.3", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("3M <= N"));

    let out = tgp(&[
        "phase", "--n", "30", "--k", "60", "--m", "3..1", "--tau", "0.3", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(tgp(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.bin");
    let out = tgp(&["recover", "--input", path_arg(&missing), "--tau", "0.3", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nope.bin"));

    // N > K has no partial Fourier draw.
    let out = tgp(&[
        "recover",
        "--ensemble",
        "fourier",
        "--n",
        "10",
        "--k",
        "5",
        "--m",
        "1",
        "--tau",
        "0.3",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));

    let out = tgp(&[
        "recover", "--n", "10", "--k", "20", "--m", "1", "--tau", "1.5", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("tau"));

    let out = tgp(&[
        "recover",
        "--ensemble",
        "user",
        "--n",
        "10",
        "--k",
        "20",
        "--m",
        "1",
        "--tau",
        "0.3",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn coherence_matches_pairwise_oracle() {
    let out = tgp(&[
        "coherence",
        "--ensemble",
        "fourier",
        "--n",
        "64",
        "--k",
        "128",
        "--seed",
        "3",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let printed: f64 = field(&text, "mu").parse().unwrap();

    let a = Ensemble::PartialFourier.generate(64, 128, 3).unwrap();
    let m = a.matrix();
    let mut oracle = 0.0f64;
    for i in 0..128 {
        for j in (i + 1)..128 {
            let mut acc = tgp_core::Complex64::new(0.0, 0.0);
            for r in 0..64 {
                acc += m.get(r, i).conj() * m.get(r, j);
            }
            oracle = oracle.max(acc.norm());
        }
    }
    assert!((printed - oracle).abs() <= 1e-11, "{printed} vs {oracle}");
    let inv: f64 = field(&text, "inv_4mu").parse().unwrap();
    assert!((inv - 1.0 / (4.0 * oracle)).abs() <= 1e-4 * inv);
    let cap: usize = field(&text, "sparsity_cap").parse().unwrap();
    assert!(cap as f64 <= inv);
    let tau: f64 = field(&text, "tau_theorem3").parse().unwrap();
    assert!(tau > 0.0 && tau < 1.0);
}

#[test]
fn phase_overlay_column() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("phase.csv");
    let out = tgp(&[
        "phase",
        "--n",
        "400",
        "--k",
        "800",
        "--m",
        "1,4",
        "--deltas",
        "0,0.5",
        "--tau",
        "0.25",
        "--trials",
        "2",
        "--seed",
        "5",
        "--out",
        path_arg(&csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 4);
    let overlay: f64 = rows.iter().find(|r| r[0] == "4").unwrap()[3].parse().unwrap();
    assert!((overlay - 4.085).abs() <= 1e-3, "{overlay}");
    for r in &rows {
        let rate: f64 = r[2].parse().unwrap();
        assert!(rate == 0.0 || rate == 0.5 || rate == 1.0);
    }
}

#[test]
fn compare_writes_sweep_and_raw_trials() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    let raw = dir.path().join("raw.csv");
    let out = tgp(&[
        "compare",
        "--n",
        "60",
        "--k",
        "120",
        "--m",
        "1..3",
        "--deltas",
        "0,1",
        "--tau",
        "0.4",
        "--trials",
        "3",
        "--seed",
        "11",
        "--out",
        path_arg(&sweep),
        "--trials-out",
        path_arg(&raw),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&sweep).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], tgp_core::SWEEP_HEADER);
    assert_eq!(data.len() - 1, 3 * 2 * 2);
    assert!(text.contains("# timing=omitted"));
    let raw_text = std::fs::read_to_string(&raw).unwrap();
    assert_eq!(raw_text.lines().count() - 1, 3 * 2 * 3 * 2);
}

#[test]
fn calibrate_prints_tau_star_and_writes_diagram() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let out = tgp(&[
        "calibrate",
        "--n",
        "100",
        "--k",
        "200",
        "--trials",
        "5",
        "--grid-step",
        "0.01",
        "--seed",
        "1",
        "--out",
        path_arg(&csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let star: f64 = field(&text, "tau_star").parse().unwrap();
    let floor: f64 = field(&text, "tau_floor").parse().unwrap();
    assert!(star > 0.0 && star <= floor);
    let diagram = std::fs::read_to_string(&csv).unwrap();
    assert!(diagram.lines().any(|l| l == "tau,success_rate"));
    assert!(diagram.contains(&format!("# tau_star={}", field(&text, "tau_star"))));
}

#[test]
fn container_round_trip_through_recover_and_coherence() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("inst.bin");
    let first = tgp(&[
        "recover",
        "--ensemble",
        "fourier",
        "--n",
        "64",
        "--k",
        "128",
        "--m",
        "2",
        "--delta",
        "0.1",
        "--tau",
        "0.3",
        "--seed",
        "4",
        "--save",
        path_arg(&bin),
    ]);
    assert!(first.status.success(), "{}", stderr(&first));
    let second = tgp(&["recover", "--input", path_arg(&bin), "--tau", "0.3", "--seed", "99"]);
    assert!(second.status.success(), "{}", stderr(&second));
    assert_eq!(field(&stdout(&first), "support"), field(&stdout(&second), "support"));
    assert_eq!(field(&stdout(&second), "ensemble"), "fourier");

    let synthetic = tgp(&[
        "coherence",
        "--ensemble",
        "fourier",
        "--n",
        "64",
        "--k",
        "128",
        "--seed",
        "4",
    ]);
    let stored = tgp(&["coherence", "--input", path_arg(&bin)]);
    assert_eq!(field(&stdout(&synthetic), "mu"), field(&stdout(&stored), "mu"));
}

#[test]
fn trace_csv_lists_every_pass() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = tgp(&[
        "recover",
        "--n",
        "200",
        "--k",
        "400",
        "--m",
        "4",
        "--delta",
        "0.3",
        "--tau",
        "0.3",
        "--seed",
        "2",
        "--trace",
        path_arg(&trace),
    ]);
    assert!(out.status.success());
    let iterations: usize = field(&stdout(&out), "iterations").parse().unwrap();
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("iteration,proxy_max,detected,residual_norm,cg_iterations")
    );
    assert_eq!(lines.count(), iterations);
}

#[test]
fn identical_invocations_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, args: &[&str]| {
        let path = dir.path().join(name);
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--out", path_arg(&path)]);
        let out = tgp(&full);
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(&path).unwrap()
    };
    let compare = [
        "compare", "--n", "40", "--k", "80", "--m", "1,2", "--tau", "0.4", "--trials", "4", "--seed", "8",
    ];
    assert_eq!(run("c1.csv", &compare), run("c2.csv", &compare));
    let calibrate = [
        "calibrate",
        "--n",
        "50",
        "--k",
        "100",
        "--trials",
        "3",
        "--grid-step",
        "0.02",
        "--seed",
        "8",
    ];
    assert_eq!(run("k1.csv", &calibrate), run("k2.csv", &calibrate));
}
