//! Acceptance criteria at full scale. Each test writes one PASS/FAIL line
//! to the real stdout so the summary is visible without `--nocapture`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use alive_twist::criteria::{
    a4_config, discrete_exactness, grid_pmmh, kalman_oracle, negative_binomial, sv_mixing, variance_reduction, Check,
    SvStudy,
};

const SEED: u64 = 0;

// One criterion at a time, so each runtime is measured without contention.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(check: Check, budget_secs: f64) {
    let line = format!("{check} [budget {budget_secs:.0} s]");
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
    assert!(check.passed, "{line}");
    assert!(check.seconds < budget_secs, "{line}: over the runtime budget");
}

#[test]
fn a1_negative_binomial() {
    let _guard = serial();
    report(negative_binomial(&[0.1, 0.3, 0.7], 10, 100_000, SEED), 10.0);
}

#[test]
fn a2_discrete_exactness() {
    let _guard = serial();
    report(discrete_exactness(5, 20, 10_000, SEED), 120.0);
}

#[test]
fn a3_kalman_oracle() {
    let _guard = serial();
    report(kalman_oracle(20, (2000, 200), (100, 500), 5, SEED), 120.0);
}

#[test]
fn a4_variance_reduction() {
    let _guard = serial();
    report(variance_reduction(&a4_config(), 10, 9, SEED), 600.0);
}

#[test]
fn a5_grid_pmmh() {
    let _guard = serial();
    report(grid_pmmh(100_000, 10, SEED), 300.0);
}

#[test]
fn a6_sv_mixing() {
    let _guard = serial();
    report(sv_mixing(&SvStudy::default(), SEED), 900.0);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alive-twist"))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic_prices.csv")
}

/// Runs `args` with `--out <dir>/<name>` and returns the bytes of every
/// file written.
fn outputs(dir: &Path, threads: usize, name: &str, args: &[&str]) -> Vec<(String, Vec<u8>)> {
    let out = dir.join(format!("{name}-{threads}-{}", std::process::id()));
    let status = bin()
        .arg("--threads")
        .arg(threads.to_string())
        .args(args)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "{name} with {threads} threads: {status}");
    let mut files = if out.is_dir() {
        std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
            })
            .collect()
    } else {
        vec![(name.to_string(), std::fs::read(&out).unwrap())]
    };
    files.sort();
    if out.is_dir() {
        std::fs::remove_dir_all(&out).unwrap();
    } else {
        std::fs::remove_file(&out).unwrap();
    }
    files
}

#[test]
fn a7_determinism() {
    let _guard = serial();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p.to_string_lossy().into_owned()
    };
    let lg = write(
        "lg.json",
        r#"{"model":{"kind":"linear_gaussian","phi":0.9,"nu2":1,"tau2":1},"T":20,"N":50,"epsilon":1.5,"lag":5}"#,
    );
    let sv = write(
        "sv.json",
        r#"{"model":{"kind":"stochastic_volatility","F":0.9,"nu2":0.01,"alpha":1.95,"beta":0.05,"gamma":0.5,"delta":0},
            "T":30,"N":30,"epsilon":3.5,"lag":5}"#,
    );
    let grid = write(
        "grid.json",
        r#"{"nu_values":[0.5,1.0],"tau_values":[1.0,2.0],"replicates":4,"T":10,"N":20,"epsilon":1.5,"lag":3}"#,
    );
    let pmmh = write("pmmh.json", r#"{"iterations":150,"N":20,"epsilon":3.5,"T":40,"chains":3,"max_lag":10}"#);
    let prices = fixture().to_string_lossy().into_owned();
    let seed = ["--seed", "7"];
    let mut runs: Vec<(&str, Vec<&str>)> = vec![
        ("simulate-lg", vec!["simulate", "--config", &lg]),
        ("simulate-sv", vec!["simulate", "--config", &sv]),
        ("variance-grid", vec!["variance-grid", "--config", &grid]),
        ("pmmh-alive", vec!["pmmh", "--algo", "alive", "--config", &pmmh, "--data", &prices]),
        ("pmmh-twisted", vec!["pmmh", "--algo", "alive-twisted", "--config", &pmmh, "--data", &prices]),
        ("selftest", vec!["selftest", "--level", "quick"]),
    ];
    for algo in ["alive", "bootstrap", "alive-twisted", "twisted-bootstrap"] {
        runs.push(("filter-lg", vec!["filter", "--algo", algo, "--config", &lg]));
    }
    for algo in ["alive", "alive-twisted"] {
        runs.push(("filter-sv", vec!["filter", "--algo", algo, "--config", &sv]));
    }
    let mut mismatched = Vec::new();
    for (name, mut args) in runs {
        args.extend(seed);
        let first = outputs(dir.path(), 1, name, &args);
        for threads in [1, 4] {
            if outputs(dir.path(), threads, name, &args) != first {
                mismatched.push(format!("{name} {} ({threads} threads)", args[..3].join(" ")));
            }
        }
    }
    let check = Check {
        id: "A7 determinism".into(),
        passed: mismatched.is_empty(),
        detail: if mismatched.is_empty() {
            "every subcommand byte-identical across repeats and 1 vs 4 threads".into()
        } else {
            format!("differs: {}", mismatched.join("; "))
        },
        seconds: start.elapsed().as_secs_f64(),
    };
    report(check, f64::INFINITY);
}
