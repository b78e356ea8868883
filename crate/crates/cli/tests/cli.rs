use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ksim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksim")).current_dir(dir).args(args).output().expect("spawn ksim")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn phantom_to_eval_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let steps: [&[&str]; 5] = [
        &["--out-dir", "p", "phantom", "--height", "48", "--width", "48", "--variant", "--seed", "3"],
        &["--out-dir", "m", "--seed", "1", "mask", "--strategy", "gradient", "--acceleration", "4", "--acs", "0.125", "--lines", "48"],
        &["--out-dir", "d", "degrade", "--input", "p/phantom.kcpx", "--mask", "m/mask.txt", "--noise-factor", "0.5", "--motion", "--preview"],
        &["--out-dir", "r", "--quiet", "recon", "--input", "d/degraded.kcpx", "--mask", "d/mask.txt", "--iterations", "4", "--diagnostics"],
        &["--out-dir", "e", "eval", "--recon", "r/recon.kcpx", "--reference", "p/phantom.kcpx"],
    ];
    for args in steps {
        let out = ksim(d, args);
        assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
    }
    for f in ["p/phantom.kcpx", "p/phantom.pgm", "p/foreground.pgm", "d/state_0.pgm", "d/state_1.pgm", "d/degraded.pgm", "r/recon.pgm"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    assert_eq!(fs::read(d.join("m/mask.txt")).unwrap(), fs::read(d.join("d/mask.txt")).unwrap());
    let diag = fs::read_to_string(d.join("r/diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 5);
    let metrics = fs::read_to_string(d.join("e/metrics.csv")).unwrap();
    assert!(metrics.starts_with("image_id,ssimf,psnr_db,ms_ssim,snr,contrast\n0,"), "{metrics}");
}

#[test]
fn quiet_suppresses_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = ksim(dir.path(), &["--quiet", "mask", "--strategy", "uniform", "--acceleration", "2", "--lines", "32"]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    let loud = ksim(dir.path(), &["mask", "--strategy", "uniform", "--acceleration", "2", "--lines", "32"]);
    assert!(String::from_utf8_lossy(&loud.stdout).contains("16 of 32 lines"));
}

#[test]
fn mask_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |out: &str, seed: &str| {
        let o = ksim(d, &["--out-dir", out, "--seed", seed, "mask", "--strategy", "random", "--acceleration", "5", "--lines", "128"]);
        assert_eq!(code(&o), 0);
        fs::read(d.join(out).join("mask.txt")).unwrap()
    };
    assert_eq!(run("a", "9"), run("b", "9"));
    assert_ne!(run("a", "9"), run("c", "10"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // usage errors count as validation errors
    assert_eq!(code(&ksim(d, &["mask", "--strategy", "bogus"])), 1);
    assert_eq!(code(&ksim(d, &["frobnicate"])), 1);
    assert_eq!(code(&ksim(d, &["--help"])), 0);
    // infeasible mask
    let out = ksim(d, &["mask", "--strategy", "uniform", "--acceleration", "10", "--acs", "0.25", "--lines", "64"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("invalid mask spec"));
    // missing input file
    let out = ksim(d, &["degrade", "--input", "missing.kcpx"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("missing.kcpx"));
    // malformed input file
    fs::write(d.join("bad.kcpx"), b"KCPX2\n4\n4\nimage\n").unwrap();
    let out = ksim(d, &["eval", "--recon", "bad.kcpx", "--reference", "bad.kcpx"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("offset 0"), "{}", stderr(&out));
    // run without a config
    assert_eq!(code(&ksim(d, &["run"])), 1);
}

#[test]
fn config_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "seed = 1\ncolour = 2\n[source]\nkind = \"phantom\"\n").unwrap();
    let out = ksim(dir.path(), &["--config", "c.toml", "run"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("colour"), "{}", stderr(&out));
}

#[test]
fn recon_from_config_entry() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("c.toml"),
        "seed = 5\n[source]\nkind = \"phantom\"\nheight = 32\nwidth = 32\n\
         [[recon]]\nname = \"pos\"\nmethod = \"cascade\"\ni_stage = \"real_positivity\"\niterations = 3\n",
    )
    .unwrap();
    let c = ["--config", "c.toml"];
    assert_eq!(code(&ksim(d, &[&c[..], &["phantom"]].concat())), 0);
    assert_eq!(code(&ksim(d, &[&c[..], &["degrade", "--input", "phantom.kcpx", "--strategy", "uniform", "--acceleration", "2"]].concat())), 0);
    let out = ksim(d, &[&c[..], &["recon", "--input", "degraded.kcpx", "--mask", "mask.txt", "--recon", "pos", "--diagnostics"]].concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(d.join("diagnostics.csv")).unwrap().lines().count(), 4);
    let out = ksim(d, &[&c[..], &["recon", "--input", "degraded.kcpx", "--mask", "mask.txt", "--recon", "nope"]].concat());
    assert_eq!(code(&out), 1);
}

#[test]
fn run_writes_reports_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("c.toml"),
        "seed = 11\n[source]\nkind = \"phantom\"\ncount = 2\nheight = 32\nwidth = 32\n\
         [sampling]\nstrategies = [\"uniform\"]\naccelerations = [2.0]\n",
    )
    .unwrap();
    for out in ["a", "b"] {
        let o = ksim(d, &["--config", "c.toml", "--out-dir", out, "--quiet", "run"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["summary.csv", "report.md", "cells/original.csv", "cells/r2_uniform_none__cascade.csv"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    let o = ksim(d, &["--config", "c.toml", "--out-dir", "c", "--seed", "12", "--quiet", "run"]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(d.join("a/summary.csv")).unwrap(), fs::read(d.join("c/summary.csv")).unwrap());
}
