use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bvcm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bvcm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SIM: &[&str] = &[
    "simulate",
    "--k",
    "2",
    "--alpha",
    "0.5,0.5",
    "--theta",
    "5,5",
    "--prop-diag",
    "0.9",
    "--seed",
    "7",
];

fn simulate(dir: &Path, m: &str, name: &str) {
    let out_name = format!("{name}.jsonl");
    let truth = format!("{name}.truth.csv");
    let mut args = SIM.to_vec();
    args.extend(["--m", m, "--out", &out_name, "--truth-out", &truth]);
    ok(&bvcm(dir, &args));
}

#[test]
fn simulate_writes_m_lines_and_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "2500", "a");
    simulate(d.path(), "2500", "b");
    let a = fs::read_to_string(d.path().join("a.jsonl")).unwrap();
    assert_eq!(a.lines().count(), 2500);
    assert_eq!(a, fs::read_to_string(d.path().join("b.jsonl")).unwrap());
    assert_eq!(
        fs::read(d.path().join("a.truth.csv")).unwrap(),
        fs::read(d.path().join("b.truth.csv")).unwrap()
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("a.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["result"]["interactions"], 2500);
    assert_eq!(manifest["args"]["seed"], 7);
}

#[test]
fn zero_interactions_give_empty_file_and_manifest() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "0", "e");
    assert_eq!(fs::read_to_string(d.path().join("e.jsonl")).unwrap(), "");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("e.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["result"]["nodes"], 0);
}

#[test]
fn mismatched_vector_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let out = bvcm(
        d.path(),
        &[
            "simulate", "--k", "3", "--alpha", "0.5,0.5", "--theta", "5,5,5", "--m", "10", "--out",
            "x.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--alpha"));
}

#[test]
fn fit_is_reproducible_and_one_iteration_gives_one_row() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "300", "n");
    let fit = |out: &str, iters: &str| {
        ok(&bvcm(
            d.path(),
            &[
                "fit", "--input", "n.jsonl", "--k", "2", "--iters", iters, "--seed", "3", "--out",
                out,
            ],
        ))
    };
    fit("one", "1");
    assert_eq!(
        fs::read_to_string(d.path().join("one/chain.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
    fit("f1", "50");
    fit("f2", "50");
    for f in [
        "chain.csv",
        "assignments.csv",
        "membership.csv",
        "labels.csv",
    ] {
        assert_eq!(
            fs::read(d.path().join("f1").join(f)).unwrap(),
            fs::read(d.path().join("f2").join(f)).unwrap(),
            "{f}"
        );
    }
    let header = fs::read_to_string(d.path().join("f1/chain.csv")).unwrap();
    assert!(header.starts_with(
        "iter,log_prob,alpha_1,alpha_2,theta_1,theta_2,prop_1_1,prop_1_2,prop_2_1,prop_2_2\n"
    ));
    ok(&bvcm(
        d.path(),
        &[
            "eval",
            "--input",
            "n.jsonl",
            "--truth",
            "n.truth.csv",
            "--fit",
            "f1",
            "--out",
            "ev",
        ],
    ));
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("ev/metrics.json")).unwrap())
            .unwrap();
    let l2 = metrics["result"]["standardized_l2"].as_f64().unwrap();
    assert!((0.0..=0.5f64.sqrt() + 1e-12).contains(&l2));
}

#[test]
fn malformed_input_reports_line_and_exits_3() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("bad.jsonl"),
        "{\"sender\":\"a\",\"receivers\":[\"b\"]}\n{\"sender\":\"a\"\n",
    )
    .unwrap();
    let out = bvcm(
        d.path(),
        &["fit", "--input", "bad.jsonl", "--k", "2", "--out", "o"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn select_k_bounds() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "200", "n");
    let out = bvcm(
        d.path(),
        &[
            "select-k", "--input", "n.jsonl", "--kmin", "3", "--kmax", "2", "--out", "s",
        ],
    );
    assert_eq!(out.status.code(), Some(2));

    let out = bvcm(
        d.path(),
        &[
            "select-k",
            "--input",
            "n.jsonl",
            "--kmin",
            "2",
            "--kmax",
            "2",
            "--iters",
            "20",
            "--replicates",
            "2",
            "--out",
            "s",
        ],
    );
    ok(&out);
    let summary = fs::read_to_string(d.path().join("s/summary.csv")).unwrap();
    assert_eq!(summary, "replicate,best_k\n0,2\n1,2\n");
    let scores = fs::read_to_string(d.path().join("s/scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 3);
}

#[test]
fn config_file_values_yield_to_flags() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("run.toml"),
        "[simulate]\nk = 2\nalpha = [0.5, 0.5]\ntheta = [5, 5]\nm = 40\nout = \"c.jsonl\"\n",
    )
    .unwrap();
    ok(&bvcm(
        d.path(),
        &["simulate", "--config", "run.toml", "--m", "25"],
    ));
    let text = fs::read_to_string(d.path().join("c.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 25);
}

#[test]
fn bound_margin_and_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let out = bvcm(
        d.path(),
        &[
            "bound", "--alpha", "0.5", "--a", "0.9", "--gamma1", "0.9", "--gamma2", "0.9",
        ],
    );
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["mu_min"].as_f64().unwrap() - 0.64).abs() < 1e-12);

    let out = bvcm(
        d.path(),
        &[
            "bound", "--alpha", "0.5", "--a", "0.7", "--gamma1", "0.6", "--gamma2", "1.0",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn stats_writes_growth_table() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "3000", "n");
    ok(&bvcm(
        d.path(),
        &[
            "stats",
            "--input",
            "n.jsonl",
            "--labels",
            "n.truth.csv",
            "--out",
            "st",
        ],
    ));
    let growth = fs::read_to_string(d.path().join("st/growth.csv")).unwrap();
    assert!(growth.starts_with("m,nodes_1,nodes_2\n"));
    assert!(growth.lines().last().unwrap().starts_with("3000,"));
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("st/stats.json")).unwrap()).unwrap();
    assert!(stats["result"]["sparsity"]["slopes"].is_array());
}

#[test]
fn bad_thread_count_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_bvcm"))
        .current_dir(d.path())
        .env("BVCM_THREADS", "0")
        .args([
            "bound", "--alpha", "0.5", "--a", "0.9", "--gamma1", "0.9", "--gamma2", "0.9",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
