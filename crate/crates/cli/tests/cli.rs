//! Integration tests for the command-line surface: exit codes, JSON
//! summaries, and determinism of individual subcommands.

use std::path::Path;
use std::process::{Command, Output};

use lidar_denoise::codec::write_frame;
use lidar_denoise::{Frame, Label, LabelImage};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lidar-denoise"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn CLI")
}

fn json_of(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

/// A tiny labeled frame to feed the pipeline.
fn demo_frame(cols: usize, seed: u64) -> (Frame, LabelImage) {
    let mut img = Frame::empty(4, cols);
    let mut labels = LabelImage::filled(4, cols, Label::NoReturn);
    for i in 0..img.distance.len() {
        if (i + seed as usize) % 5 != 0 {
            img.distance[i] = 3.0 + (i % 17) as f32;
            img.intensity[i] = 0.2 + (i % 7) as f32 * 0.1;
            labels.labels[i] = if i % 11 == 0 { Label::Fog } else { Label::Valid };
        }
    }
    (img, labels)
}

#[test]
fn eval_on_identical_directories_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    std::fs::create_dir(&frames).unwrap();
    for i in 0..3 {
        let (img, labels) = demo_frame(40, i);
        write_frame(&frames.join(format!("f{i}.lri")), &img, Some(&labels)).unwrap();
    }
    let out = run(dir.path(), &["eval", "--pred", "frames", "--gt", "frames"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json_of(&out);
    assert_eq!(summary["mean_iou"].as_f64().unwrap(), 1.0);
}

#[test]
fn augment_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("in");
    std::fs::create_dir(&frames).unwrap();
    for i in 0..2 {
        let (img, _) = demo_frame(64, i);
        write_frame(&frames.join(format!("f{i}.lri")), &img, None).unwrap();
    }
    for out_dir in ["a", "b"] {
        let out = run(
            dir.path(),
            &["augment", "--input", "in", "--out", out_dir, "--preset", "rain33", "--seed", "9"],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for i in 0..2 {
        let a = std::fs::read(dir.path().join("a").join(format!("f{i}.lri"))).unwrap();
        let b = std::fs::read(dir.path().join("b").join(format!("f{i}.lri"))).unwrap();
        assert_eq!(a, b, "frame {i} differs between identically seeded runs");
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage") || !out.stderr.is_empty());

    let out = run(dir.path(), &["filter", "--input", "x", "--out", "y", "--method", "magic"]);
    assert_eq!(out.status.code(), Some(1), "bad parameter value should be a usage error");
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(run(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two_and_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("in");
    std::fs::create_dir(&frames).unwrap();
    std::fs::write(frames.join("broken.lri"), b"not a frame at all").unwrap();
    let out = run(dir.path(), &["filter", "--input", "in", "--out", "out"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("broken.lri"), "error should name the file: {stderr}");

    // Missing input directory is also a data error.
    let out = run(dir.path(), &["filter", "--input", "nowhere", "--out", "out"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn predict_rejects_truncated_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("in");
    std::fs::create_dir(&frames).unwrap();
    let (img, _) = demo_frame(16, 0);
    write_frame(&frames.join("f.lri"), &img, None).unwrap();
    std::fs::write(dir.path().join("bad.ckpt"), b"{\"nope\":1}\n\x00\x00").unwrap();
    let out = run(
        dir.path(),
        &["predict", "--input", "in", "--checkpoint", "bad.ckpt", "--out", "pred"],
    );
    assert_eq!(out.status.code(), Some(2));
}
