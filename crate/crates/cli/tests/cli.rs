//! End-to-end runs of the `adafm` binary on a 16×16 model.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--resolution", "16", "--batch", "4", "--gm", "3", "--latent-dim", "8",
    "--set", "base_width=4", "--set", "max_width=16", "--set", "style_dim=8", "--set", "mapping_depth=2",
    "--set", "pfid_samples=32", "--set", "synth_count=64",
];

fn adafm(sub: &str, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adafm"))
        .arg(sub)
        .arg("--out")
        .arg(out)
        .args(TINY)
        .args(extra)
        .output()
        .unwrap()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn pretrain(dir: &Path) -> String {
    ok(adafm("pretrain", dir, &["--iters", "6"]));
    dir.join("final.ckpt").to_str().unwrap().to_string()
}

#[test]
fn summary_reports_minimum_of_pfid_column() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    ok(adafm("transfer", &out, &["--mode", "scratch", "--iters", "12", "--set", "pfid_every=3"]));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iter,d_loss,g_loss,r1,pfid,overfit_flag,wall_ms"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 12);
    let pfid: Vec<(usize, f64)> =
        rows.iter().filter(|r| !r[4].is_empty()).map(|r| (r[0].parse().unwrap(), r[4].parse().unwrap())).collect();
    assert_eq!(pfid.iter().map(|p| p.0).collect::<Vec<_>>(), vec![3, 6, 9, 12]);
    let min = pfid.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    let best = summary.lines().next().unwrap();
    let parts: Vec<&str> = best.split(' ').collect();
    assert_eq!(parts[0], "best_pfid");
    assert_eq!(parts[1].parse::<f64>().unwrap(), min.1);
    assert_eq!(parts[3].parse::<usize>().unwrap(), min.0);
    assert!(out.join("final.ckpt").exists());
}

#[test]
fn scratch_mode_warns_about_unused_source() {
    let tmp = tempfile::tempdir().unwrap();
    let src = pretrain(&tmp.path().join("pre"));
    let o = ok(adafm("transfer", &tmp.path().join("s"), &["--mode", "scratch", "--iters", "2", "--source", &src]));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: mode=scratch ignores the source checkpoint"));
    assert!(!tmp.path().join("s/transfer_report.txt").exists());
}

#[test]
fn resolved_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    ok(adafm("synth-data", &a, &["--count", "2", "--seed", "5", "--lr", "0.0003"]));
    let resolved = a.join("config.resolved");
    let b = tmp.path().join("b");
    let o = Command::new(env!("CARGO_BIN_EXE_adafm"))
        .args(["synth-data", "--count", "2", "--config"])
        .arg(&resolved)
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    ok(o);
    assert_eq!(fs::read(&resolved).unwrap(), fs::read(b.join("config.resolved")).unwrap());
    assert_eq!(fs::read(a.join("target_shapes_00001.png")).unwrap(), fs::read(b.join("target_shapes_00001.png")).unwrap());
}

#[test]
fn analyze_after_warmup_only_run_reports_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let src = pretrain(&tmp.path().join("pre"));
    let tr = tmp.path().join("tr");
    ok(adafm("transfer", &tr, &["--mode", "adafm", "--iters", "3", "--warmup", "3", "--source", &src]));
    assert!(fs::read_to_string(tr.join("transfer_report.txt")).unwrap().contains("copied"));
    let ck = tr.join("final.ckpt");
    let an = tmp.path().join("an");
    ok(adafm("analyze", &an, &["--ckpt", ck.to_str().unwrap()]));
    let stats = fs::read_to_string(an.join("adafm_stats.csv")).unwrap();
    let rows: Vec<&str> = stats.lines().skip(1).collect();
    assert!(!rows.is_empty());
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        let expect = if f[1] == "gamma" { 1.0 } else { 0.0 };
        assert!(f[2..].iter().all(|v| v.parse::<f64>().unwrap() == expect), "{row}");
    }
    assert!(an.join("sorted_gamma.csv").exists());
}

#[test]
fn mixing_with_identical_latents_reproduces_the_source_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    ok(adafm("transfer", &out, &["--mode", "scratch", "--iters", "2"]));
    let ck = out.join("final.ckpt");
    let mix = tmp.path().join("mix");
    ok(adafm("mix", &mix, &["--ckpt", ck.to_str().unwrap(), "--count", "3", "--seed", "4", "--dest-seed", "4", "--block", "2"]));
    let img = image::open(mix.join("mix.png")).unwrap().to_rgb8();
    let h = img.height() / 3;
    assert_eq!(img.width(), 3 * 16);
    for y in 0..h {
        for x in 0..img.width() {
            assert_eq!(img.get_pixel(x, y), img.get_pixel(x, y + 2 * h));
        }
    }
    let gen = tmp.path().join("gen");
    ok(adafm("generate", &gen, &["--ckpt", ck.to_str().unwrap(), "--grid", "2", "--seed", "4"]));
    assert!(gen.join("generate.png").exists());
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |o: Output| o.status.code().unwrap();
    // configuration
    assert_eq!(code(adafm("pretrain", &tmp.path().join("c"), &["--set", "nonsense=1"])), 2);
    assert_eq!(code(adafm("transfer", &tmp.path().join("c"), &["--mode", "adafm", "--gm", "9", "--iters", "2"])), 2);
    // data
    let missing = tmp.path().join("nowhere");
    let o = Command::new(env!("CARGO_BIN_EXE_adafm"))
        .args(["transfer", "--mode", "scratch", "--iters", "2", "--out"])
        .arg(tmp.path().join("d"))
        .arg(format!("--data=dir:{}", missing.display()))
        .output()
        .unwrap();
    assert_eq!(code(o), 3);
    // checkpoint: corrupt file, then an architecture mismatch
    let bad = tmp.path().join("bad.ckpt");
    fs::write(&bad, b"not a checkpoint").unwrap();
    assert_eq!(code(adafm("generate", &tmp.path().join("e"), &["--ckpt", bad.to_str().unwrap()])), 5);
    let src = pretrain(&tmp.path().join("pre"));
    let o = adafm("transfer", &tmp.path().join("f"), &["--mode", "adafm", "--iters", "2", "--source", &src, "--set", "max_width=8"]);
    assert_eq!(code(o), 5);
}
