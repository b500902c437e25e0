//! End-to-end tests of the command-line binary: output contracts, round
//! trips, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_vougc");

const MODEL_2D: &str = "[model]\nn = 2\n[A]\n-1 1\n0 -1\n[Sigma]\n1 0\n0 1\n";

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn vougc")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn rate_closed_form_output() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.txt", MODEL_2D);
    let out = run(&["rate", &model, "--target", "1", "--source", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("rate = 0.414214"), "{text}");
    assert!(text.contains("te_rate = 0.207107"), "{text}");
    // stderr carries the manifest with the input digest
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("# manifest"), "{err}");
    assert!(err.contains("sha256"), "{err}");
}

#[test]
fn dump_model_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    // awkward decimals so shortest round-trip formatting is exercised
    let model = write(
        dir.path(),
        "m.txt",
        "[model]\nn = 2\n[A]\n-1.1 0.3333333333333333\n0.1 -2.7\n[Sigma]\n1.25 0.1\n0.1 0.9\n",
    );
    let d1 = dir.path().join("dump1.txt");
    let d2 = dir.path().join("dump2.txt");
    let out = run(&[
        "rate", &model, "--target", "1", "--source", "2",
        "--dump-model", d1.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let out = run(&[
        "rate", d1.to_str().unwrap(), "--target", "1", "--source", "2",
        "--dump-model", d2.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(&d1).unwrap(),
        std::fs::read(&d2).unwrap(),
        "dumped model must re-parse and re-dump identically"
    );
}

#[test]
fn sigma_scaling_leaves_rate_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.txt", MODEL_2D);
    let base = run(&["rate", &model, "--target", "1", "--source", "2"]);
    let scaled = run(&[
        "rate", &model, "--target", "1", "--source", "2", "--scale", "1e6",
    ]);
    let line = |o: &Output| {
        stdout(o)
            .lines()
            .find(|l| l.starts_with("rate = "))
            .unwrap()
            .to_string()
    };
    assert_eq!(line(&base), line(&scaled));
}

#[test]
fn decoupled_source_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(
        dir.path(),
        "m.txt",
        "[model]\nn = 2\n[A]\n-1 0\n0.8 -1\n[Sigma]\n1 0\n0 1\n",
    );
    let out = run(&["rate", &model, "--target", "1", "--source", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("rate = 0.000000"), "{text}");
    assert!(text.contains("source_decoupled = true"), "{text}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // 2: malformed model document
    let bad = write(dir.path(), "bad.txt", "[model]\nn = 2\n[A]\n-1 nope\n");
    let out = run(&["rate", &bad, "--target", "1", "--source", "2"]);
    assert_eq!(out.status.code(), Some(2));
    // 2: missing file (I/O)
    let out = run(&["rate", "/no/such/file", "--target", "1", "--source", "2"]);
    assert_eq!(out.status.code(), Some(2));
    // 3: invalid partition indices
    let model = write(dir.path(), "m.txt", MODEL_2D);
    let out = run(&["rate", &model, "--target", "1", "--source", "5"]);
    assert_eq!(out.status.code(), Some(3));
    // 3: unstable drift rejected by the subsampling oracle
    let unstable = write(
        dir.path(),
        "u.txt",
        "[model]\nn = 2\n[A]\n0.5 1\n0 -1\n[Sigma]\n1 0\n0 1\n",
    );
    let out = run(&["oracle-check", &unstable, "--target", "1", "--source", "2"]);
    assert_eq!(out.status.code(), Some(3));
    // 3: duration not exceeding transient
    let out = run(&[
        "map", "--builtin", "lorenz", "--duration", "1", "--dt", "0.01",
        "--transient", "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn graph_diagonal_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.txt", MODEL_2D);
    let out = run(&["graph", &model, "--csv"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "to,from_y1,from_y2");
    assert!(text.contains("—"), "diagonal marker missing: {text}");
    assert!(text.contains("4.1421356237309515e-1"), "{text}");
    // unconditional graph coincides with the pairwise one at n = 2
    let unc = run(&["graph", &model, "--csv", "--unconditional"]);
    assert_eq!(stdout(&out), stdout(&unc));
}

#[test]
fn lorenz_map_row_count_and_zero_column() {
    let out = run(&[
        "map", "--builtin", "lorenz", "--duration", "200", "--dt", "0.01",
        "--transient", "100", "--y0", "1,1,1",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(
        header,
        "t,y1,y2,y3,lambda,detJ,singular,G_1_2,G_1_3,G_2_1,G_2_3,G_3_1,G_3_2"
    );
    let g13_col = 8;
    let mut data_rows = 0;
    let mut globals = 0;
    for line in lines {
        if line.starts_with('#') {
            globals += 1;
            continue;
        }
        data_rows += 1;
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 13);
        assert_eq!(cells[g13_col], "0.0000000000000000e0", "G_1_3 must be zero");
    }
    assert_eq!(data_rows, 10_000);
    assert_eq!(globals, 7, "6 global entries + excluded fraction");
    assert!(text.contains("# global G_1_3 = 0.0000000000000000e0"));
    assert!(text.contains("# excluded_fraction = 0.0000000000000000e0"));
}

#[test]
fn stability_rows_show_both_signs() {
    let out = run(&[
        "stability", "--builtin", "lorenz", "--duration", "40", "--dt", "0.01",
        "--transient", "20", "--y0", "1,1,1",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut pos = 0;
    let mut neg = 0;
    for line in text.lines().skip(1) {
        let lambda: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        if lambda >= 0.0 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    assert!(pos > 0 && neg > 0, "pos={pos} neg={neg}");
}

#[test]
fn sde_map_reproducible_for_fixed_seed() {
    let args = [
        "map", "--builtin", "lorenz", "--duration", "5", "--dt", "0.05",
        "--transient", "1", "--sde", "--seed", "7",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b), "seeded runs must match bitwise");
    let c = run(&[
        "map", "--builtin", "lorenz", "--duration", "5", "--dt", "0.05",
        "--transient", "1", "--sde", "--seed", "8",
    ]);
    assert_ne!(stdout(&a), stdout(&c));
    // manifest records the seed and RNG algorithm
    let err = String::from_utf8_lossy(&a.stderr);
    assert!(err.contains("# seed: 7"), "{err}");
    assert!(err.contains("# rng: chacha12"), "{err}");
}

#[test]
fn oracle_check_first_order_slope() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.txt", MODEL_2D);
    let out = run(&[
        "oracle-check", &model, "--target", "1", "--source", "2",
        "--dt-list", "1e-2,1e-3,1e-4",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let slope_line = text
        .lines()
        .find(|l| l.starts_with("# slope = "))
        .expect("slope line");
    let slope: f64 = slope_line
        .trim_start_matches("# slope = ")
        .parse()
        .unwrap();
    assert!((slope - 1.0).abs() < 0.15, "slope = {slope}");
}

#[test]
fn system_file_map_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let lorenz_text = vougc::langevin::lorenz_dsl_text(10.0, 28.0, 8.0 / 3.0, 1.0);
    let system = write(dir.path(), "lorenz.txt", &lorenz_text);
    let from_file = run(&[
        "map", &system, "--duration", "3", "--dt", "0.1", "--transient", "1",
        "--y0", "1,1,1",
    ]);
    let builtin = run(&[
        "map", "--builtin", "lorenz", "--duration", "3", "--dt", "0.1",
        "--transient", "1", "--y0", "1,1,1",
    ]);
    assert!(from_file.status.success());
    assert_eq!(stdout(&from_file), stdout(&builtin));
}
