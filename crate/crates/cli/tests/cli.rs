use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn learnsep(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_learnsep")).current_dir(dir).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

#[test]
fn gen_writes_valid_instances() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&learnsep(d, &["gen", "dlp", "--bits", "20", "--seed", "7", "--out", "inst/d.json"])), 0);
    let inst = json(&d.join("inst/d.json"));
    let (p, a) = (inst["p"].as_u64().unwrap(), inst["a"].as_u64().unwrap());
    assert_eq!(64 - p.leading_zeros(), 20);
    assert!(is_prime(p) && is_prime((p - 1) / 2));
    // order of a is p-1 iff a^2 != 1 and a^q != 1
    let q = (p - 1) / 2;
    let pow = |b: u64, mut e: u64| {
        let (mut r, mut b) = (1u128, b as u128);
        while e > 0 {
            if e & 1 == 1 {
                r = r * b % p as u128;
            }
            b = b * b % p as u128;
            e >>= 1;
        }
        r as u64
    };
    assert!(pow(a, 2) != 1 && pow(a, q) != 1);

    assert_eq!(code(&learnsep(d, &["gen", "cuberoot", "--bits", "32", "--seed", "7", "--out", "r"])), 0);
    let public = json(&d.join("r.json"));
    let secret = json(&d.join("r.secrets.json"));
    assert!(public.get("p").is_none() && public.get("d_star").is_none());
    let (p, q) = (secret["p"].as_u64().unwrap(), secret["q"].as_u64().unwrap());
    assert_eq!(public["N"].as_u64().unwrap(), p * q);
    assert_eq!(3 * secret["d_star"].as_u64().unwrap() % ((p - 1) * (q - 1)), 1);
}

#[test]
fn gen_rejects_out_of_range_bits() {
    let dir = tempfile::tempdir().unwrap();
    let out = learnsep(dir.path(), &["gen", "cuberoot", "--bits", "4", "--out", "r.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside supported range"));
    assert!(!dir.path().join("r.json").exists());
    assert_eq!(code(&learnsep(dir.path(), &["gen", "dlp", "--bits", "2", "--out", "d.json"])), 2);
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    learnsep(d, &["gen", "dlp", "--bits", "16", "--seed", "1", "--out", "d.json"]);
    let out = learnsep(d, &["run", "dlp", "--instance", "d.json", "--trials", "10", "--out", "res"]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(d.join("res.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# config: {") && header.contains("\"seed\":0"));
    assert_eq!(lines.next().unwrap(), "trial,seed,m,queries_used,empirical_error,success,wall_ms");
    assert_eq!(lines.count(), 10);
    let summary = json(&d.join("res.json"));
    for key in ["success_frequency", "mean_error", "mean_samples", "wall_ms", "config"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
    assert_eq!(summary["wall_ms"], 0);
}

#[test]
fn starved_learner_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = learnsep(dir.path(), &["run", "dlp", "--bits", "16", "--sample-budget", "0", "--trials", "5"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn missing_instance_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&learnsep(dir.path(), &["run", "dlp", "--instance", "nope.json"])), 2);
    assert_eq!(code(&learnsep(dir.path(), &["checklist", "cuberoot", "--instance", "nope.json"])), 2);
    assert_eq!(code(&learnsep(dir.path(), &["run", "dlp", "--epsilon", "0.7", "--bits", "16"])), 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), r#"{"problem": "dlp", "bits": 14, "trials": 4, "seed": 3, "epsilon": 0.1}"#).unwrap();
    assert_eq!(code(&learnsep(d, &["run", "--config", "cfg.json", "--trials", "6", "--out", "o"])), 0);
    let cfg = &json(&d.join("o.json"))["config"];
    assert_eq!(cfg["trials"], 6);
    assert_eq!(cfg["seed"], 3);
    assert_eq!(cfg["epsilon"], 0.1);
    assert_eq!(cfg["bits"], 14);
    fs::write(d.join("bad.json"), r#"{"problem": "dlp", "bogus": 1}"#).unwrap();
    assert_eq!(code(&learnsep(d, &["run", "--config", "bad.json"])), 2);
}

#[test]
fn checklist_exit_codes_follow_the_claim() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    learnsep(d, &["gen", "dlp", "--bits", "18", "--seed", "2", "--out", "d.json"]);
    assert_eq!(code(&learnsep(d, &["checklist", "dlp", "--instance", "d.json", "--out", "ok"])), 0);
    let report = json(&d.join("ok.json"));
    assert_eq!(report["claimed_separation"], "CC/QQ");
    assert!(fs::read_to_string(d.join("ok.txt")).unwrap().starts_with("# config: "));
    for sabotage in ["off-by-one-reconstruction", "label-bug"] {
        let out = learnsep(d, &["checklist", "dlp", "--instance", "d.json", "--sabotage", sabotage, "--out", "bad"]);
        assert_eq!(code(&out), 1, "{sabotage}");
        assert_eq!(json(&d.join("bad.json"))["claimed_separation"], "none");
    }
}

#[test]
fn power_of_data_csv_is_within_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&learnsep(d, &["run", "power-of-data", "--qubits", "6", "--seed", "4", "--out", "pod"])), 0);
    let csv = fs::read_to_string(d.join("pod.csv")).unwrap();
    let mut lines = csv.lines().skip(1);
    assert_eq!(lines.next().unwrap(), "theta,simulated,predicted,abs_error");
    let worst = lines.map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert!(worst <= 1e-8);
    assert_eq!(code(&learnsep(d, &["power-of-data", "--qubits", "11"])), 2);
}
