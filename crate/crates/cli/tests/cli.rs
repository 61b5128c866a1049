use std::fs;
use std::process::{Command, Output};

use canecov_core::image_io::{save_image, ImageBuffer};
use canecov_core::synth::{generate_field, FieldSpec};

fn canecov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_canecov")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(canecov(&["--help"]).status.code(), Some(0));
    assert_eq!(canecov(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(canecov(&["coverage", "x.png", "--threshold", "11"]).status.code(), Some(1));
    assert_eq!(canecov(&["coverage", "/nonexistent/x.png"]).status.code(), Some(2));
    let o = canecov(&["pipeline", "/nonexistent/x.png", "--classifier-model", "/nonexistent/m"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn checkerboard_is_half_and_half() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checker.png");
    let img = ImageBuffer::from_fn(32, 32, 1, |x, y, _| if (x + y) % 2 == 0 { 0 } else { 255 }).unwrap();
    save_image(&img, &path).unwrap();
    let o = canecov(&["--json", "coverage", path.to_str().unwrap(), "--threshold", "5"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("\"populated_pct\":50.00,\"depopulated_pct\":50.00"), "{}", stdout(&o));

    let mask = dir.path().join("mask.pgm");
    let o = canecov(&["coverage", path.to_str().unwrap(), "--mask-out", mask.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(fs::read(&mask).unwrap().starts_with(b"P5"));
}

#[test]
fn split_counts_from_cli() {
    let dir = tempfile::tempdir().unwrap();
    let class = dir.path().join("zonas_pobladas");
    fs::create_dir(&class).unwrap();
    for i in 0..650 {
        fs::write(class.join(format!("img_{i:04}.png")), b"").unwrap();
    }
    let out = dir.path().join("split.json");
    let o = canecov(&["--json", "--seed", "3", "split", dir.path().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("\"train\":520,\"test\":130"), "{}", stdout(&o));
    let first = fs::read_to_string(&out).unwrap();
    canecov(&["--seed", "3", "split", dir.path().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(fs::read_to_string(&out).unwrap(), first);
}

#[test]
fn synth_then_train_writes_history() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = canecov(&["--seed", "4", "synth", "--out", data.to_str().unwrap(), "--n", "10", "--size", "32"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model = dir.path().join("m.cccl");
    let history = dir.path().join("h.csv");
    let o = canecov(&[
        "train-classifier",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--history",
        history.to_str().unwrap(),
        "--epochs",
        "2",
        "--input-size",
        "32",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&history).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,train_acc,val_loss,val_acc");
    assert_eq!(lines.len(), 4);
    assert!(model.exists());
}

#[test]
fn config_file_fills_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.png");
    let field = generate_field(&FieldSpec { gap_fraction_target: 0.25, seed: 1, ..Default::default() }).unwrap();
    save_image(&field.image, &path).unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "threshold = 10\n").unwrap();
    let a = stdout(&canecov(&["--json", "--config", cfg.to_str().unwrap(), "coverage", path.to_str().unwrap()]));
    let b = stdout(&canecov(&["--json", "coverage", path.to_str().unwrap(), "--threshold", "10"]));
    assert_eq!(a, b);
    fs::write(&cfg, "bogus_key = 1\n").unwrap();
    assert_eq!(canecov(&["--config", cfg.to_str().unwrap(), "coverage", path.to_str().unwrap()]).status.code(), Some(1));
}
