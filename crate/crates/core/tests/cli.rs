use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rgbd_tracker::eval::read_results;
use rgbd_tracker::frames::{load_sequence, read_color_png};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rgbd-track"));
    c.env_remove("TSDM_SEED");
    c
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fail(out: Output) -> String {
    assert!(!out.status.success());
    String::from_utf8(out.stderr).unwrap()
}

fn synth(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("scene.txt");
    fs::write(
        &spec,
        "# small moving target\nframes = 12\nseed = 4\ntag = motion\ntarget.velocity = 1.5, 0.5\n",
    )
    .unwrap();
    let seq = dir.join("seq");
    ok(bin()
        .args(["synth", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&seq)
        .output()
        .unwrap());
    seq
}

#[test]
fn synth_track_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path());
    assert_eq!(load_sequence(&seq).unwrap().frames.len(), 12);

    let results = dir.path().join("results.txt");
    ok(bin()
        .args(["track", "--no-dr", "--dump-masks", "--seq"])
        .arg(&seq)
        .arg("--out")
        .arg(&results)
        .output()
        .unwrap());
    let lines = read_results(&results).unwrap();
    assert_eq!(lines.len(), 12);
    assert_eq!(lines[0].score, 1.0);
    let masks = dir.path().join("results.txt_masks");
    assert!(masks.join("00000002_m.png").is_file());
    assert!(masks.join("00000002_xm.png").is_file());

    let (report, curve) = (dir.path().join("report.txt"), dir.path().join("curve.txt"));
    let stdout = ok(bin()
        .args(["eval", "--results"])
        .arg(&results)
        .arg("--gt")
        .arg(&seq)
        .arg("--report")
        .arg(&report)
        .arg("--curve")
        .arg(&curve)
        .output()
        .unwrap());
    assert!(stdout.contains("mean IOU"));
    let report = fs::read_to_string(report).unwrap();
    assert!(report.contains("motion,12,"), "{report}");
    assert!(report.contains("overall,12,"));
    assert_eq!(
        fs::read_to_string(curve)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .count(),
        101
    );
}

#[test]
fn core_only_flags_match_core_only_config() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path());
    let cfg = dir.path().join("core.cfg");
    fs::write(&cfg, "enable_mg = false\nenable_dr = false\n").unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    ok(bin()
        .args(["track", "--no-mg", "--no-dr", "--seq"])
        .arg(&seq)
        .arg("--out")
        .arg(&a)
        .output()
        .unwrap());
    ok(bin()
        .args(["track", "--seq"])
        .arg(&seq)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap());
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn errors_are_named_and_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path());
    let out = dir.path().join("r.txt");

    let err = fail(
        bin()
            .args(["track", "--seq"])
            .arg(&seq)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap(),
    );
    assert!(err.contains("[config]") && err.contains("weights"), "{err}");

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "mu1 = 0.4\n").unwrap();
    let err = fail(
        bin()
            .args(["track", "--no-dr", "--seq"])
            .arg(&seq)
            .arg("--config")
            .arg(&bad)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap(),
    );
    assert!(err.contains("[config]"), "{err}");

    let err = fail(
        bin()
            .args(["track", "--no-dr", "--seq", "/nonexistent", "--out"])
            .arg(&out)
            .output()
            .unwrap(),
    );
    assert!(err.contains("[io]"), "{err}");

    let err = fail(
        bin()
            .env("TSDM_SEED", "twelve")
            .args(["track", "--no-dr", "--seq"])
            .arg(&seq)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap(),
    );
    assert!(err.contains("TSDM_SEED"), "{err}");

    let err = fail(bin().args(["track", "--bogus"]).output().unwrap());
    assert!(err.contains("--bogus"), "{err}");
}

#[test]
fn seed_variable_reaches_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path());
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        ok(bin()
            .env("TSDM_SEED", seed)
            .args(["track", "--no-dr", "--dump-masks", "--seq"])
            .arg(&seq)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap());
        fs::read(dir.path().join(format!("{name}_masks/00000002_mc.png"))).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
    assert_ne!(run("5", "a"), run("6", "c"));
}

#[test]
fn gradcheck_reports_a_small_error() {
    let stdout = ok(bin().arg("gradcheck").output().unwrap());
    let value: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("max relative error "))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(value < 1e-4, "{stdout}");
}

#[test]
fn augment_keeps_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path());
    let input = seq.join("color/00000001.png");
    let out = dir.path().join("aug.png");
    ok(bin()
        .args(["augment", "--box", "40,40,24,24", "--seed", "3", "--in"])
        .arg(&input)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap());
    let (before, after) = (read_color_png(&input).unwrap(), read_color_png(&out).unwrap());
    assert_ne!(before, after);
    for y in 40..64 {
        for x in 40..64 {
            assert_eq!(before.get(x, y), after.get(x, y));
        }
    }
}

#[test]
fn train_refiner_writes_loadable_weights() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.bin");
    ok(bin()
        .args(["train-refiner", "--n", "8", "--seed", "1", "--out"])
        .arg(&out)
        .output()
        .unwrap());
    rgbd_tracker::refiner::load_weights(&out).unwrap();
}
