//! End-to-end checks of the `hummuss` binary: stream/offline agreement,
//! exit codes, seeding, and report plumbing.

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hummuss"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn hummuss")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn assert_code(out: &Output, want: i32) {
    assert_eq!(
        out.status.code(),
        Some(want),
        "stdout:\n{}\nstderr:\n{}",
        stdout(out),
        stderr(out)
    );
}

/// Tiny causal weights for fast end-to-end runs.
fn gen_tiny_model(dir: &Path, arch: &str) -> PathBuf {
    let path = dir.join(format!("{arch}.hmss"));
    let out = run(&[
        "gen-weights",
        "--arch",
        arch,
        "--n-blocks",
        "2",
        "--d-model",
        "16",
        "--d-rep",
        "8",
        "--state-dim",
        "8",
        "--seed",
        "7",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    path
}

fn gen_input(dir: &Path, frames: usize, joints: usize, with_gt: bool) -> PathBuf {
    let path = dir.join("input.kpts");
    let mut args = vec![
        "gen-input".to_string(),
        "--joints".into(),
        joints.to_string(),
        "--frames".into(),
        frames.to_string(),
        "--seed".into(),
        "5".into(),
        "--output".into(),
        path.to_str().unwrap().to_string(),
    ];
    if with_gt {
        args.push("--with-gt".into());
    }
    let out = bin().args(&args).output().unwrap();
    assert_code(&out, 0);
    path
}

fn parse_pose_lines(text: &str) -> Vec<(f64, Vec<f64>)> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let mut it = l.split(',').map(|f| f.parse::<f64>().unwrap());
            let ts = it.next().unwrap();
            (ts, it.collect())
        })
        .collect()
}

#[test]
fn stream_and_offline_agree_and_untimed_stream_is_exact() {
    let dir = TempDir::new().unwrap();
    let model = gen_tiny_model(dir.path(), "causal");
    let input = gen_input(dir.path(), 60, 5, false);
    let m = model.to_str().unwrap();
    let i = input.to_str().unwrap();

    let offline = run(&["infer", "--model", m, "--input", i, "--mode", "offline"]);
    assert_code(&offline, 0);
    let stream_adapt = run(&["infer", "--model", m, "--input", i, "--mode", "stream"]);
    assert_code(&stream_adapt, 0);
    let stream_fixed = run(&[
        "infer", "--model", m, "--input", i, "--mode", "stream", "--fps-adapt", "off",
    ]);
    assert_code(&stream_fixed, 0);

    // Without timestamp adaptation the stream is the same computation as the
    // batch pass, down to the printed text.
    assert_eq!(stdout(&offline), stdout(&stream_fixed));

    // With adaptation on, uniform nominal timestamps give factors within
    // float rounding of 1, so outputs agree to well under the 1e-5 contract.
    let a = parse_pose_lines(&stdout(&offline));
    let b = parse_pose_lines(&stdout(&stream_adapt));
    assert_eq!(a.len(), 60);
    assert_eq!(a.len(), b.len());
    for ((ta, va), (tb, vb)) in a.iter().zip(b.iter()) {
        assert_eq!(ta, tb);
        assert_eq!(va.len(), 5 * 3);
        for (x, y) in va.iter().zip(vb.iter()) {
            assert!((x - y).abs() < 1e-5);
        }
    }
}

#[test]
fn infer_reads_stdin_and_writes_output_files() {
    let dir = TempDir::new().unwrap();
    let model = gen_tiny_model(dir.path(), "causal");
    let input = gen_input(dir.path(), 20, 3, false);
    let text = std::fs::read_to_string(&input).unwrap();

    let mut child = bin()
        .args(["infer", "--model", model.to_str().unwrap(), "--mode", "stream"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child
        .stdin
        .take()
        .unwrap()
        .write_all(text.as_bytes())
        .unwrap();
    let piped = child.wait_with_output().unwrap();
    assert_code(&piped, 0);

    let out_path = dir.path().join("pose.out");
    let filed = run(&[
        "infer",
        "--model",
        model.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--mode",
        "stream",
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert_code(&filed, 0);
    assert_eq!(stdout(&piped), std::fs::read_to_string(out_path).unwrap());
}

#[test]
fn empty_input_yields_no_output_and_success() {
    let dir = TempDir::new().unwrap();
    let model = gen_tiny_model(dir.path(), "causal");
    let empty = dir.path().join("empty.kpts");
    std::fs::write(&empty, "").unwrap();
    for mode in ["stream", "offline"] {
        let out = run(&[
            "infer",
            "--model",
            model.to_str().unwrap(),
            "--input",
            empty.to_str().unwrap(),
            "--mode",
            mode,
        ]);
        assert_code(&out, 0);
        assert_eq!(stdout(&out), "");
    }
}

#[test]
fn malformed_lines_exit_2_and_name_the_line() {
    let dir = TempDir::new().unwrap();
    let model = gen_tiny_model(dir.path(), "causal");
    let m = model.to_str().unwrap();

    let bad_fields = dir.path().join("bad_fields.kpts");
    std::fs::write(&bad_fields, "# joints=2 fps=30\n0,1,2,3,4,5,6\n33,1,2\n").unwrap();
    let out = run(&["infer", "--model", m, "--input", bad_fields.to_str().unwrap(), "--mode", "stream"]);
    assert_code(&out, 2);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let regress = dir.path().join("regress.kpts");
    std::fs::write(
        &regress,
        "# joints=1 fps=30\n0,1,2,3\n40,1,2,3\n39,1,2,3\n",
    )
    .unwrap();
    let out = run(&["infer", "--model", m, "--input", regress.to_str().unwrap(), "--mode", "stream"]);
    assert_code(&out, 2);
    assert!(stderr(&out).contains("line 4"), "{}", stderr(&out));
}

#[test]
fn broken_weights_files_exit_3_with_distinct_reasons() {
    let dir = TempDir::new().unwrap();
    let model = gen_tiny_model(dir.path(), "causal");
    let input = gen_input(dir.path(), 5, 2, false);
    let i = input.to_str().unwrap();
    let good = std::fs::read(&model).unwrap();

    let cases: Vec<(&str, Vec<u8>, &str)> = vec![
        ("magic", {
            let mut b = good.clone();
            b[0] = b'Z';
            b
        }, "[bad-magic]"),
        ("version", {
            let mut b = good.clone();
            b[4] = 99;
            b
        }, "[unsupported-version]"),
        ("truncated", good[..good.len() / 2].to_vec(), "[truncated]"),
    ];
    for (name, bytes, tag) in cases {
        let p = dir.path().join(format!("{name}.hmss"));
        std::fs::write(&p, bytes).unwrap();
        let out = run(&["infer", "--model", p.to_str().unwrap(), "--input", i, "--mode", "stream"]);
        assert_code(&out, 3);
        assert!(stderr(&out).contains(tag), "{name}: {}", stderr(&out));
    }

    let missing = dir.path().join("nope.hmss");
    let out = run(&["infer", "--model", missing.to_str().unwrap(), "--input", i, "--mode", "stream"]);
    assert_code(&out, 3);
}

#[test]
fn stream_mode_on_a_bidirectional_model_exits_4() {
    let dir = TempDir::new().unwrap();
    let model = gen_tiny_model(dir.path(), "bidirectional");
    let input = gen_input(dir.path(), 10, 2, false);
    let out = run(&[
        "infer",
        "--model",
        model.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--mode",
        "stream",
    ]);
    assert_code(&out, 4);
    // The same weights run offline.
    let out = run(&[
        "infer",
        "--model",
        model.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--mode",
        "offline",
    ]);
    assert_code(&out, 0);

    let bench = run(&[
        "bench",
        "--model",
        model.to_str().unwrap(),
        "--contexts",
        "3",
        "--frames",
        "2",
        "--repeat",
        "1",
    ]);
    assert_code(&bench, 4);
}

#[test]
fn bench_reports_constant_state_and_growing_windows() {
    let dir = TempDir::new().unwrap();
    let model = gen_tiny_model(dir.path(), "causal");
    let out = run(&[
        "bench",
        "--model",
        model.to_str().unwrap(),
        "--contexts",
        "3,9",
        "--frames",
        "4",
        "--repeat",
        "1",
        "--joints",
        "5",
        "--seed",
        "1",
    ]);
    assert_code(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("sliding-window re-convolution"), "{text}");
    let rows: Vec<Vec<String>> = text
        .lines()
        .filter(|l| l.starts_with("recurrent") || l.starts_with("rewindow"))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    let state: Vec<&str> = rows
        .iter()
        .filter(|r| r[0] == "recurrent")
        .map(|r| r[4].as_str())
        .collect();
    assert_eq!(state.len(), 2);
    assert_eq!(state[0], state[1], "state bytes must not depend on context");
    for r in rows.iter().filter(|r| r[0] == "rewindow") {
        let c: usize = r[1].parse().unwrap();
        let bytes: usize = r[4].parse().unwrap();
        assert_eq!(bytes, c * 5 * 3 * 8);
    }
    for r in &rows {
        assert!(r[2].parse::<f64>().unwrap() >= 0.0);
        assert!(r[3].parse::<f64>().unwrap() >= r[2].parse::<f64>().unwrap() * 0.0);
    }
}

#[test]
fn subsample_eval_emits_the_documented_csv() {
    let dir = TempDir::new().unwrap();
    let model = gen_tiny_model(dir.path(), "causal");
    let input = gen_input(dir.path(), 64, 3, true);
    let out = run(&[
        "subsample-eval",
        "--model",
        model.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--rates",
        "1,2,4",
    ]);
    assert_code(&out, 0);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "rate,frames_retained,mean_err_vs_fullrate,mean_err_vs_gt"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][..2], [1.0, 64.0]);
    assert_eq!(rows[1][..2], [2.0, 32.0]);
    assert_eq!(rows[2][..2], [4.0, 16.0]);
    // Rate 1 is the same computation as the reference: exactly zero drift.
    assert_eq!(rows[0][2], 0.0);
    for r in &rows {
        assert!(r[2].is_finite() && r[3].is_finite());
    }

    // Determinism: a second run prints the identical report.
    let again = run(&[
        "subsample-eval",
        "--model",
        model.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--rates",
        "1,2,4",
    ]);
    assert_eq!(text, stdout(&again));
}

#[test]
fn subsample_eval_without_ground_truth_exits_3() {
    let dir = TempDir::new().unwrap();
    let model = gen_tiny_model(dir.path(), "causal");
    let input = gen_input(dir.path(), 16, 2, false); // no .gt3d companion
    let out = run(&[
        "subsample-eval",
        "--model",
        model.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
    ]);
    assert_code(&out, 3);
}

#[test]
fn seed_precedence_is_flag_then_env_then_default() {
    let dir = TempDir::new().unwrap();
    let gen = |name: &str, seed: Option<&str>, env: Option<&str>| -> Vec<u8> {
        let path = dir.path().join(name);
        let mut cmd = bin();
        cmd.args([
            "gen-input",
            "--joints",
            "2",
            "--frames",
            "4",
            "--output",
            path.to_str().unwrap(),
        ]);
        if let Some(s) = seed {
            cmd.args(["--seed", s]);
        }
        match env {
            Some(e) => cmd.env("HUMMUSS_SEED", e),
            None => cmd.env_remove("HUMMUSS_SEED"),
        };
        let out = cmd.output().unwrap();
        assert_code(&out, 0);
        std::fs::read(path).unwrap()
    };

    let default = gen("a.kpts", None, None);
    let env9 = gen("b.kpts", None, Some("9"));
    let flag9 = gen("c.kpts", Some("9"), None);
    let flag9_env3 = gen("d.kpts", Some("9"), Some("3"));
    let flag42 = gen("e.kpts", Some("42"), None);

    assert_eq!(env9, flag9, "env seed must act like the flag");
    assert_eq!(flag9, flag9_env3, "flag must beat the env");
    assert_eq!(default, flag42, "default seed is 42");
    assert_ne!(default, env9);

    let bad = bin()
        .args(["gen-input", "--joints", "1", "--frames", "1", "--output"])
        .arg(dir.path().join("f.kpts"))
        .env("HUMMUSS_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_code(&bad, 2);
}

#[test]
fn gen_weights_rejects_inconsistent_dimensions() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "gen-weights",
        "--arch",
        "causal",
        "--state-dim",
        "7",
        "--output",
        dir.path().join("w.hmss").to_str().unwrap(),
    ]);
    assert_code(&out, 3);
}
