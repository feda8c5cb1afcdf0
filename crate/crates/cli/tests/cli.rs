use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_taylor-icp"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn disk(dir: &Path, name: &str) -> PathBuf {
    let mut s = String::new();
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    for i in 0..100 {
        let r = ((i as f64 + 0.5) / 100.0).sqrt();
        let t = i as f64 * golden;
        s.push_str(&format!(
            "{} {}\n",
            5.0 + 3.0 * r * t.cos(),
            -2.0 + 3.0 * r * t.sin()
        ));
    }
    let p = dir.join(name);
    std::fs::write(&p, s).unwrap();
    p
}

fn report(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn identical_sets_register_exactly() {
    let dir = tempfile::tempdir().unwrap();
    disk(dir.path(), "a.txt");
    let out = run(
        &[
            "register",
            "--fixed",
            "a.txt",
            "--moving",
            "a.txt",
            "--out-map",
            "m.json",
            "--out-trace",
            "t.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(dir.path(), "t.json");
    assert!(rep["final_rmse"]["normalized"].as_f64().unwrap() < 1e-9);
}

#[test]
fn deform_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    disk(dir.path(), "a.txt");
    for mode in ["taylor", "bump"] {
        let mut outputs = Vec::new();
        for k in 0..2 {
            let (o, t) = (format!("{mode}{k}.txt"), format!("{mode}{k}.json"));
            let out = run(
                &[
                    "deform",
                    "--in",
                    "a.txt",
                    "--mode",
                    mode,
                    "--order",
                    if mode == "taylor" { "3" } else { "2" },
                    "--seed",
                    "7",
                    "--out",
                    &o,
                    "--out-truth",
                    &t,
                ],
                dir.path(),
            );
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            outputs.push((
                std::fs::read(dir.path().join(&o)).unwrap(),
                std::fs::read(dir.path().join(&t)).unwrap(),
            ));
        }
        assert_eq!(outputs[0], outputs[1], "{mode}");
    }
}

#[test]
fn register_recovers_deformation_and_eval_agrees() {
    let dir = tempfile::tempdir().unwrap();
    disk(dir.path(), "a.txt");
    let d = run(
        &[
            "deform",
            "--in",
            "a.txt",
            "--mode",
            "taylor",
            "--target-rmsd",
            "0.05",
            "--seed",
            "3",
            "--out",
            "b.txt",
            "--out-truth",
            "truth.json",
        ],
        dir.path(),
    );
    assert!(d.status.success(), "{}", String::from_utf8_lossy(&d.stderr));

    let truth = run(
        &[
            "eval",
            "--fixed",
            "b.txt",
            "--moving",
            "a.txt",
            "--map",
            "truth.json",
        ],
        dir.path(),
    );
    let truth_rmse: f64 = String::from_utf8_lossy(&truth.stdout).trim().parse().unwrap();
    assert!(truth_rmse < 1e-12);

    let r = run(
        &[
            "register",
            "--fixed",
            "b.txt",
            "--moving",
            "a.txt",
            "--out-map",
            "m.json",
            "--out-trace",
            "t.csv",
            "--out-report",
            "r.json",
        ],
        dir.path(),
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let rep = report(dir.path(), "r.json");
    let e = run(
        &["eval", "--fixed", "b.txt", "--moving", "a.txt", "--map", "m.json"],
        dir.path(),
    );
    let eval_rmse: f64 = String::from_utf8_lossy(&e.stdout).trim().parse().unwrap();
    let reported = rep["final_rmse"]["denormalized"].as_f64().unwrap();
    assert!(
        (eval_rmse - reported).abs() < 1e-9 * reported.max(1.0),
        "{eval_rmse} vs {reported}"
    );

    // The last trace row carries the reported RMSE, digit for digit.
    let trace = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let last: Vec<&str> = trace.lines().last().unwrap().split(',').collect();
    assert_eq!(
        last[3].parse::<f64>().unwrap(),
        rep["final_rmse"]["normalized"].as_f64().unwrap()
    );
}

#[test]
fn repeated_runs_match_except_timing() {
    let dir = tempfile::tempdir().unwrap();
    disk(dir.path(), "a.txt");
    run(
        &[
            "deform",
            "--in",
            "a.txt",
            "--mode",
            "taylor",
            "--coeff-range",
            "0.05",
            "--seed",
            "1",
            "--out",
            "b.txt",
            "--out-truth",
            "truth.json",
        ],
        dir.path(),
    );
    let mut runs = Vec::new();
    for k in 0..2 {
        let (m, t) = (format!("m{k}.json"), format!("t{k}.csv"));
        let out = run(
            &[
                "register",
                "--fixed",
                "b.txt",
                "--moving",
                "a.txt",
                "--out-map",
                &m,
                "--out-trace",
                &t,
            ],
            dir.path(),
        );
        assert!(out.status.success());
        let trace: Vec<String> = std::fs::read_to_string(dir.path().join(&t))
            .unwrap()
            .lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(4);
                f.join(",")
            })
            .collect();
        runs.push((std::fs::read(dir.path().join(&m)).unwrap(), trace));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    disk(dir.path(), "a.txt");
    let code = |args: &[&str]| run(args, dir.path()).status.code().unwrap();

    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["register", "--fixed", "a.txt"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(
        code(&[
            "register",
            "--fixed",
            "a.txt",
            "--moving",
            "a.txt",
            "--order-cap",
            "0",
            "--out-map",
            "m.json",
            "--out-trace",
            "t.csv"
        ]),
        1
    );

    std::fs::write(dir.path().join("bad.txt"), "0 0\n1 1 1\n").unwrap();
    assert_eq!(
        code(&[
            "eval",
            "--fixed",
            "a.txt",
            "--moving",
            "bad.txt",
            "--map",
            "none.json"
        ]),
        2
    );
    assert_eq!(
        code(&[
            "eval",
            "--fixed",
            "a.txt",
            "--moving",
            "a.txt",
            "--map",
            "missing.json"
        ]),
        2
    );
    let stderr = String::from_utf8_lossy(
        &run(
            &["eval", "--fixed", "a.txt", "--moving", "bad.txt", "--map", "x"],
            dir.path(),
        )
        .stderr,
    )
    .to_string();
    assert!(stderr.contains("line 2"), "{stderr}");

    // A warp with nothing to scale can never reach the requested RMSD.
    assert_eq!(
        code(&[
            "deform",
            "--in",
            "a.txt",
            "--mode",
            "taylor",
            "--coeff-range",
            "0",
            "--target-rmsd",
            "0.05",
            "--seed",
            "0",
            "--out",
            "o.txt",
            "--out-truth",
            "o.json"
        ]),
        3
    );
}

#[test]
fn bench_writes_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "bench",
            "--sizes",
            "200,400",
            "--trials",
            "2",
            "--jobs",
            "2",
            "--max-iters",
            "2",
            "--out",
            "b.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let order: Vec<(&str, &str)> = rows.iter().map(|r| (r[0], r[1])).collect();
    assert_eq!(order, [("200", "0"), ("200", "1"), ("400", "0"), ("400", "1")]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("slope"));
}
