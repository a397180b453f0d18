use std::path::Path;
use std::process::{Command, Output};

use burstforge::io;
use burstforge::Tensor;

fn bf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_burstforge"))
        .args(args)
        .env_remove("BURSTFORGE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    let out = bf(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["generate", "infer", "eval", "chart", "selftest", "bench", "init-checkpoint"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    assert_eq!(code(&bf(&["frobnicate"])), 1);
    assert_eq!(code(&bf(&["chart", "--image", "x.ppm"])), 1);
}

#[test]
fn missing_and_malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.bfck");
    let out = bf(&["infer", "--burst", p(dir.path()), "--checkpoint", p(&missing), "--output", "x.ppm"]);
    assert_eq!(code(&out), 2);

    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 1\n[model]\nwindw = 8\n").unwrap();
    let out = bf(&["--config", p(&cfg), "selftest", "--instances", "1"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("windw"));

    let bad = dir.path().join("bad.ppm");
    std::fs::write(&bad, b"P6\n2 2\n255\n\x01\x02").unwrap();
    let out = bf(&["eval", "--sr", p(&bad), "--gt", p(&bad)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn selftest_flags_perturbed_kernel() {
    let out = bf(&["selftest", "--instances", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let out = bf(&["selftest", "--instances", "3", "--perturb", "softmax"]);
    assert_eq!(code(&out), 3);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.contains("softmax") && l.contains("FAIL")), "{text}");
}

#[test]
fn eval_identical_images() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("a.ppm");
    let t = Tensor::from_fn([3, 24, 24], |i| ((i * 37) % 251) as f32 / 255.0);
    io::write_image(&img, &t, 8).unwrap();
    let out = bf(&["eval", "--sr", p(&img), "--gt", p(&img)]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(v["count"], 1);
    assert_eq!(v["mean"]["psnr"].as_f64().unwrap(), burstforge::metrics::PSNR_CAP_DB);
    assert_eq!(v["mean"]["ssim"].as_f64().unwrap(), 1.0);
}

#[test]
fn chart_reports_contrast_and_lpmm() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("bars.pgm");
    let t = Tensor::from_fn([1, 8, 64], |i| if (i % 64) % 8 < 4 { 1.0 } else { 0.0 });
    io::write_image(&img, &t, 8).unwrap();
    let out = bf(&["chart", "--image", p(&img), "--start", "0,4", "--end", "63,4", "--period", "8", "--reading", "6"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert!((v["contrast"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(v["resolved"], true);
    assert!((v["lp_per_mm"].as_f64().unwrap() - 55.56).abs() < 1e-9);

    let flat = dir.path().join("flat.pgm");
    io::write_image(&flat, &Tensor::full([1, 8, 64], 0.5), 8).unwrap();
    let v = stdout_json(&bf(&["chart", "--image", p(&flat), "--start", "0,4", "--end", "63,4", "--period", "8"]));
    assert_eq!(v["contrast"].as_f64().unwrap(), 0.0);
    assert_eq!(v["resolved"], false);
}

#[test]
fn generate_rejects_indivisible_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = bf(&["generate", "--synthetic", "1", "--size", "30", "--output", p(dir.path())]);
    assert_eq!(code(&out), 1);
}

#[test]
fn generate_init_infer_small() {
    let dir = tempfile::tempdir().unwrap();
    let bursts = dir.path().join("bursts");
    let ck = dir.path().join("id.bfck");
    let sr = dir.path().join("sr.ppm");
    let out = bf(&["--seed", "5", "generate", "--synthetic", "1", "--size", "64", "--frames", "3", "--output", p(&bursts)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (burst, _) = io::read_burst(bursts.join("burst_000")).unwrap();
    assert_eq!(burst.frames.shape(), &[3, 4, 8, 8]);

    assert_eq!(code(&bf(&["init-checkpoint", "--output", p(&ck), "--kind", "identity", "--frames", "3"])), 0);
    let out = bf(&["infer", "--burst", p(&bursts.join("burst_000")), "--checkpoint", p(&ck), "--flow", "zero", "--output", p(&sr)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let img = io::read_image(&sr).unwrap();
    assert_eq!(img.shape(), &[3, 64, 64]);

    let four = dir.path().join("four.bfck");
    assert_eq!(code(&bf(&["init-checkpoint", "--output", p(&four), "--frames", "4"])), 0);
    let out = bf(&["infer", "--burst", p(&bursts.join("burst_000")), "--checkpoint", p(&four), "--output", p(&sr)]);
    assert_eq!(code(&out), 1);
}

#[test]
fn eval_writes_json_file_and_text_lines() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("a.pgm");
    io::write_image(&img, &Tensor::from_fn([1, 16, 16], |i| (i % 13) as f32 / 13.0), 8).unwrap();
    let report = dir.path().join("report.json");
    let out = bf(&["eval", "--sr", p(&img), "--gt", p(&img), "--output", p(&report)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["images"][0]["lpips"], "n/a");
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.ends_with("ssim 1.0")), "{text}");
    assert!(text.lines().any(|l| l == "mean ssim 1"), "{text}");
}
