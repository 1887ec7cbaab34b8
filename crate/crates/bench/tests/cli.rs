use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_vrcrpn-bench");

const TABULAR: &str = r#"
[environment]
kind = "tabular"
states = 2
actions = 2
transition = [0.7, 0.3, 0.2, 0.8, 0.4, 0.6, 0.9, 0.1]
reward = [1.0, -0.5, 0.25, 0.8]
initial_dist = [0.5, 0.5]

[policy]
feature_scale = 0.5

[algorithm]
gamma = 0.9
max_iterations = 30
inner_loop = 4
snapshot_batch = 40
hessian_batch = 10
correction_scale = 100
horizon = 8
cubic_coefficient = 50.0
sample_cap = 900

[experiment]
repetitions = 2
eval_batch = 200
"#;

fn bench(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_into(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", config.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = bench(&args);
    assert!(o.status.success(), "run failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn csv_files(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn oracle_runs_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "t.toml", TABULAR);
    run_into(&cfg, &tmp.path().join("a"), &["--oracle", "--seed", "4"]);
    run_into(&cfg, &tmp.path().join("b"), &["--oracle", "--seed", "4"]);
    let a = csv_files(&tmp.path().join("a"));
    assert_eq!(a, csv_files(&tmp.path().join("b")));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["cr-pn_seed4.csv", "summary.csv", "summary_cr-pn.csv", "summary_vr-cr-pn.csv", "vr-cr-pn_seed4.csv"]
    );
}

#[test]
fn sampled_curves_have_the_fixed_schema_and_respect_the_cap() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "t.toml", TABULAR);
    let out = tmp.path().join("out");
    run_into(&cfg, &out, &[]);
    for alg in ["vr-cr-pn", "cr-pn"] {
        for seed in 0..2 {
            let text = fs::read_to_string(out.join(format!("{alg}_seed{seed}.csv"))).unwrap();
            let mut lines = text.lines();
            assert_eq!(
                lines.next().unwrap(),
                "iteration,samples_cum_grad,samples_cum_hess,samples_cum_total,step_norm,est_J,grad_est_norm,wall_ms"
            );
            let mut prev = (0u64, 0u64);
            for (i, line) in lines.enumerate() {
                let f: Vec<&str> = line.split(',').collect();
                assert_eq!(f.len(), 8);
                assert_eq!(f[0].parse::<u64>().unwrap(), i as u64);
                let total: u64 = f[3].parse().unwrap();
                assert_eq!(f[1].parse::<u64>().unwrap() + f[2].parse::<u64>().unwrap(), total);
                assert!(total >= prev.1 && total <= 900);
                assert_eq!(f[7], "0.0");
                prev = (i as u64, total);
            }
        }
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);
    assert!(summary.starts_with("algorithm,seed,final_return,final_return_stderr,iterations,samples_total,termination\n"));
}

#[test]
fn metadata_reruns_reproduce_the_curves() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "t.toml", TABULAR);
    let first = tmp.path().join("first");
    run_into(&cfg, &first, &[]);
    let meta = fs::read_to_string(first.join("metadata.toml")).unwrap();
    assert!(meta.contains("[provenance]") && meta.contains("config_hash"));
    let again = tmp.path().join("again");
    run_into(&first.join("metadata.toml"), &again, &[]);
    assert_eq!(csv_files(&first), csv_files(&again));
}

#[test]
fn missing_gamma_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &TABULAR.replace("gamma = 0.9\n", ""));
    let o = bench(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));
}

#[test]
fn oracle_flag_needs_a_tabular_environment() {
    let cartpole = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/cartpole.toml");
    let o = bench(&["run", cartpole.to_str().unwrap(), "--oracle"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tabular"));
}

#[test]
fn unreadable_config_is_a_config_error() {
    let o = bench(&["run", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

const SUMMARY_HEAD: &str = "algorithm,seed,final_return,final_return_stderr,iterations,samples_total,termination\n";

fn summary(rows: &[(u64, f64)], alg: &str) -> String {
    let mut s = SUMMARY_HEAD.to_string();
    for (seed, r) in rows {
        s.push_str(&format!("{alg},{seed},{r},0.0,10,100,sample_cap\n"));
    }
    s
}

#[test]
fn compare_reports_the_gap() {
    let tmp = TempDir::new().unwrap();
    let a = write(tmp.path(), "a.csv", &summary(&[(0, 2.0), (1, 3.0), (2, 4.0)], "vr-cr-pn"));
    let b = write(tmp.path(), "b.csv", &summary(&[(0, 1.0), (1, 2.0), (2, 3.0)], "cr-pn"));
    let o = bench(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("gap") && text.contains("1.0"), "{text}");
}

#[test]
fn compare_names_unmatched_seeds() {
    let tmp = TempDir::new().unwrap();
    let a = write(tmp.path(), "a.csv", &summary(&[(0, 2.0), (7, 3.0)], "vr-cr-pn"));
    let b = write(tmp.path(), "b.csv", &summary(&[(0, 1.0), (9, 2.0)], "cr-pn"));
    let o = bench(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains('7') && err.contains('9'), "{err}");
}

#[test]
fn plan_prints_the_theory_schedule() {
    let o = bench(&["plan", "--epsilon", "0.1", "--delta", "0.1", "--gamma", "0.5", "--c-phi", "0.5", "--dim", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in ["340082474781", "105568493880"] {
        assert!(text.replace(['_', ','], "").contains(needle), "{text}");
    }
    let bad = bench(&["plan", "--epsilon", "-1", "--delta", "0.1"]);
    assert_eq!(bad.status.code(), Some(2));
}
