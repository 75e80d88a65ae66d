use std::io::Write;
use std::path::Path;
use std::process::Command;

use alive_twist::experiment::load_returns;
use proptest::prelude::*;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alive-twist"))
}

fn fixture() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic_prices.csv")
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn fixture_supports_every_horizon() {
    for t in [200, 500, 700] {
        assert_eq!(load_returns(&fixture(), Some(t)).unwrap().len(), t);
    }
    assert!(load_returns(&fixture(), Some(701)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prices_from_returns_round_trip(returns in prop::collection::vec(-0.2f64..0.2, 1..60), p0 in 1.0f64..5000.0) {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "date,close").unwrap();
        let start = chrono::NaiveDate::from_ymd_opt(2009, 12, 10).unwrap();
        let mut p = p0;
        writeln!(f, "{start},{p:e}").unwrap();
        for (i, r) in returns.iter().enumerate() {
            p *= r.exp();
            writeln!(f, "{},{p:e}", start + chrono::Days::new(i as u64 + 1)).unwrap();
        }
        f.flush().unwrap();
        let back = load_returns(f.path(), None).unwrap();
        prop_assert_eq!(back.len(), returns.len());
        for (a, b) in back.iter().zip(&returns) {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let no_args = bin().status().unwrap();
    assert_eq!(no_args.code(), Some(1));
    let bad_flag = bin().args(["filter", "--algo", "nope"]).status().unwrap();
    assert_eq!(bad_flag.code(), Some(1));
    let missing = bin()
        .args(["simulate", "--config"])
        .arg(dir.path().join("absent.json"))
        .arg("--out")
        .arg(dir.path().join("x.csv"))
        .status()
        .unwrap();
    assert_eq!(missing.code(), Some(1));
    let cfg = write(dir.path(), "bad.json", r#"{"model":{"kind":"linear_gaussian","phi":0.9,"nu2":1,"tau2":1},"T":5,"N":1,"epsilon":1.5}"#);
    let invalid = bin()
        .args(["filter", "--algo", "alive", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("x.csv"))
        .status()
        .unwrap();
    assert_eq!(invalid.code(), Some(1));
    assert_eq!(bin().arg("--help").status().unwrap().code(), Some(0));
}

#[test]
fn cap_exceeded_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "tight.json",
        r#"{"model":{"kind":"linear_gaussian","phi":0.9,"nu2":1,"tau2":1},"T":5,"N":10,"epsilon":1e-9,"ball_mode":"absolute","cap":10}"#,
    );
    let status = bin()
        .args(["filter", "--algo", "alive", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("x.csv"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn filter_and_pmmh_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "lg.json",
        r#"{"model":{"kind":"linear_gaussian","phi":0.9,"nu2":1,"tau2":1},"T":12,"N":30,"epsilon":1.5}"#,
    );
    let data = dir.path().join("data.csv");
    assert!(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&data).status().unwrap().success());
    let sim = std::fs::read_to_string(&data).unwrap();
    assert_eq!(sim.lines().next().unwrap(), "step,latent,observation");
    assert_eq!(sim.lines().count(), 13);

    let out = dir.path().join("f.csv");
    let ok = bin()
        .args(["filter", "--algo", "alive-twisted", "--lag", "3", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(ok.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "step,stopping_time,log_factor,cumulative_log_z,twisted_index,log_qh_sum,log_h_sum"
    );
    assert_eq!(text.lines().count(), 13);

    let pcfg = write(dir.path(), "p.json", r#"{"iterations":60,"N":15,"epsilon":3.5,"T":30,"max_lag":5}"#);
    let pdir = dir.path().join("pmmh");
    let ok = bin()
        .args(["pmmh", "--algo", "alive", "--config"])
        .arg(&pcfg)
        .arg("--data")
        .arg(fixture())
        .arg("--out")
        .arg(&pdir)
        .status()
        .unwrap();
    assert!(ok.success());
    let chain = std::fs::read_to_string(pdir.join("chain.csv")).unwrap();
    assert!(chain.starts_with("chain,iteration,F,nu2,gamma,log_zhat,accepted\n"));
    assert_eq!(chain.lines().count(), 62);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(pdir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["observations"], 30);
    assert!(summary["acceptance_rate"].is_number());
    assert!(summary["cap_exceeded"].is_number());
    assert!(std::fs::read_to_string(pdir.join("acf.csv")).unwrap().starts_with("chain,lag,F,nu2,gamma\n"));
}
