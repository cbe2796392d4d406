use std::path::Path;
use std::process::{Command, Output};

fn sigres(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigres")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = sigres(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn first_line(dir: &Path, name: &str) -> String {
    String::from_utf8(read(dir, name)).unwrap().lines().next().unwrap_or_default().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&read(dir, "manifest.json")).unwrap()
}

const SMALL: &[(&str, &[&str], &[&str])] = &[
    ("resolve", &["--schedule", "1,4,16", "--trials", "4", "--targets", "2", "--adversarial", "3"], &[
        "traces.csv",
        "summary.json",
        "adversarial.csv",
    ]),
    ("rates", &["--d", "2", "--schedule", "8,16,32", "--trials", "4", "--eval", "256"], &["rates.csv", "summary.json"]),
    ("embed", &["--depth", "6", "--chains", "2000", "--path-dt", "0.001", "--path-horizon", "1"], &[
        "terminal.csv",
        "summary.json",
        "path.csv",
    ]),
    ("forest", &["--splits", "4,16", "--trials", "3", "--n", "500", "--eval", "256"], &["risk.csv", "summary.json"]),
];

#[test]
fn outputs_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, extra, files) in SMALL {
        let mut outs = Vec::new();
        for threads in ["1", "3"] {
            let out = dir.path().join(format!("{cmd}-{threads}"));
            let mut args = vec![*cmd, "--seed", "11", "--threads", threads, "--out", out.to_str().unwrap()];
            args.extend_from_slice(extra);
            run_ok(&args);
            outs.push(out);
        }
        for f in *files {
            assert_eq!(read(&outs[0], f), read(&outs[1], f), "{cmd}: {f} differs");
        }
    }
}

#[test]
fn manifest_records_outputs_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("embed");
    run_ok(&["embed", "--seed", "5", "--depth", "4", "--chains", "100", "--out", out.to_str().unwrap()]);
    let m = manifest(&out);
    assert_eq!(m["command"], "embed");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["depth"], "4");
    assert_eq!(m["config"]["construction"], "dubins");
    for o in m["outputs"].as_array().unwrap() {
        let bytes = read(&out, o["file"].as_str().unwrap());
        assert_eq!(o["bytes"], bytes.len());
        assert_eq!(o["sha256"], sigres::cli::sha256_hex(&bytes));
    }
}

#[test]
fn csv_headers() {
    let dir = tempfile::tempdir().unwrap();
    let headers = [
        ("resolve", "traces.csv", "target-id,n,trial-mean-distance,std-error,trials"),
        ("rates", "rates.csv", "scheme,d,n,mean_loss,std_err,diam_bound"),
        ("embed", "terminal.csv", "value"),
        ("forest", "risk.csv", "scheme,d,m,mean_risk,std_err,empty_fraction"),
    ];
    for ((cmd, extra, _), (_, file, header)) in SMALL.iter().zip(headers) {
        let out = dir.path().join(cmd);
        let mut args = vec![*cmd, "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        run_ok(&args);
        assert_eq!(first_line(&out, file), header);
    }
    assert!(first_line(&dir.path().join("embed"), "path.csv").starts_with("t,b,hits_0"));
}

#[test]
fn embed_example_matches_second_moment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e");
    run_ok(&[
        "embed",
        "--measure",
        "uniform:-0.5:0.5",
        "--depth",
        "12",
        "--chains",
        "100000",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    let s: serde_json::Value = serde_json::from_slice(&read(&out, "summary.json")).unwrap();
    let mean = s["mean_duration"].as_f64().unwrap();
    let exact = s["exact_final_moment"].as_f64().unwrap();
    assert!((mean - exact).abs() < 1e-12);
    assert!((mean - 1.0 / 12.0).abs() / (1.0 / 12.0) < 0.02);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out_file = dir.path().join("from-file");
    std::fs::write(
        &cfg,
        format!(
            "command = rates\nseed = 9\nout = {}\n[rates]\nd = 1\nschedule = 4,8\ntrials = 3\neval = 64\n",
            out_file.display()
        ),
    )
    .unwrap();
    run_ok(&["--config", cfg.to_str().unwrap()]);
    let m = manifest(&out_file);
    assert_eq!(m["config"]["trials"], "3");

    let out_flag = dir.path().join("from-flag");
    run_ok(&["--config", cfg.to_str().unwrap(), "rates", "--trials", "5", "--out", out_flag.to_str().unwrap()]);
    let m = manifest(&out_flag);
    assert_eq!(m["config"]["trials"], "5");
    assert_eq!(m["config"]["schedule"], "4,8");
    assert_eq!(m["seed"], 9);
}

#[test]
fn forest_csv_holdout() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    let mut text = String::from("a,b,y\n");
    for i in 0..200 {
        let (a, b) = ((i % 17) as f64 / 16.0, (i % 13) as f64 / 12.0);
        text.push_str(&format!("{a},{b},{}\n", a + 2.0 * b));
    }
    std::fs::write(&csv, text).unwrap();
    let out = dir.path().join("f");
    run_ok(&[
        "forest",
        "--csv",
        csv.to_str().unwrap(),
        "--features",
        "0,1",
        "--target",
        "2",
        "--splits",
        "1,4",
        "--trials",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(first_line(&out, "risk.csv"), "scheme,d,m,mean_risk,std_err,empty_fraction");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = out.to_str().unwrap();
    let code = |args: &[&str]| sigres(args).status.code().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["rates", "--bogus", "1"]), 2);
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["embed", "--measure", "cauchy:0:1", "--out", o]), 2);
    assert_eq!(code(&["embed", "--measure", "uniform:0:1", "--out", o]), 2);
    assert_eq!(code(&["forest", "--n", "100", "--large-n", "--out", o]), 2);
    assert_eq!(code(&["rates", "--d", "3", "--measure", "uniform:0:1:2", "--out", o]), 2);
    assert_eq!(code(&["rates", "--seed", "-1", "--out", o]), 2);
    assert_eq!(code(&["forest", "--csv", "/nonexistent.csv", "--features", "0", "--target", "1", "--out", o]), 1);
    let err = String::from_utf8(sigres(&["rates", "--schedule", "8,4", "--out", o]).stderr).unwrap();
    assert!(err.contains("schedule"), "{err}");
}
