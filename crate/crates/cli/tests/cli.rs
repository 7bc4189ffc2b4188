//! End-to-end runs of the installed binary: exit codes, artifact files,
//! stdout JSON, and determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use msfa_forge::{io, synth_hne};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_msfa-forge"))
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn wavelengths(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![560.0];
    }
    (0..n)
        .map(|i| 420.0 + 300.0 * i as f64 / (n - 1) as f64)
        .collect()
}

/// Writes `count` synthetic training cubes and returns their paths.
fn write_cubes(dir: &Path, count: usize, size: usize, bands: usize) -> Vec<PathBuf> {
    let wl = wavelengths(bands);
    (0..count)
        .map(|i| {
            let path = dir.join(format!("train{i}.mscube"));
            let cube = synth_hne(size, size, &wl, i as u64).unwrap();
            io::write_cube(&path, &cube).unwrap();
            path
        })
        .collect()
}

fn write_config(dir: &Path, body: &Value) -> PathBuf {
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(body).unwrap()).unwrap();
    path
}

#[test]
fn optimize_writes_artifacts_and_repeats_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let training = write_cubes(dir.path(), 2, 16, 4);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = write_config(
        dir.path(),
        &serde_json::json!({
            "training": training,
            "out_dir": out_a,
            "block_w": 2,
            "block_h": 2,
            "outer_iters": 4,
            "inner_max_iters": 40,
            "seed": 9,
        }),
    );

    let first = bin()
        .args(["optimize", "--config"])
        .arg(&config)
        .args(["--threads", "1"])
        .output()
        .unwrap();
    assert_code(&first, 0);
    for name in ["optimized.msfa", "wprime.mat32", "trace.csv"] {
        assert!(out_a.join(name).exists(), "missing {name}");
    }
    let summary = stdout_json(&first);
    let first_obj = summary["first_objective_mse"].as_f64().unwrap();
    let final_obj = summary["final_objective_mse"].as_f64().unwrap();
    assert!(final_obj <= first_obj);

    let second = bin()
        .args(["optimize", "--config"])
        .arg(&config)
        .args(["--threads", "1", "--out-dir"])
        .arg(&out_b)
        .output()
        .unwrap();
    assert_code(&second, 0);
    for name in ["optimized.msfa", "trace.csv", "wprime.mat32"] {
        assert_eq!(
            fs::read(out_a.join(name)).unwrap(),
            fs::read(out_b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn optimize_with_missing_training_path_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &serde_json::json!({
            "training": [dir.path().join("absent.mscube")],
            "out_dir": dir.path().join("out"),
            "block_w": 2,
            "block_h": 2,
        }),
    );
    let out = bin()
        .args(["optimize", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing input"));
}

#[test]
fn bad_thread_counts_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "synth",
            "--width",
            "4",
            "--height",
            "4",
            "--threads",
            "0",
            "--out",
        ])
        .arg(dir.path().join("c.mscube"))
        .output()
        .unwrap();
    assert_code(&out, 2);

    let out = bin()
        .args(["synth", "--width", "4", "--height", "4", "--out"])
        .arg(dir.path().join("c.mscube"))
        .env("MSFA_FORGE_THREADS", "lots")
        .output()
        .unwrap();
    assert_code(&out, 2);
}

#[test]
fn thread_env_var_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "synth", "--width", "4", "--height", "4", "--bands", "2", "--out",
        ])
        .arg(dir.path().join("c.mscube"))
        .env("MSFA_FORGE_THREADS", "1")
        .output()
        .unwrap();
    assert_code(&out, 0);
}

#[test]
fn mosaic_then_demosaic_reproduces_single_band_input() {
    // one band and one-hot filters make sensing the identity, so an
    // exact-inverse reconstruction must match the input to rounding
    let dir = tempfile::tempdir().unwrap();
    let cube_path = dir.path().join("cube.mscube");
    let cube = synth_hne(8, 8, &wavelengths(1), 1).unwrap();
    io::write_cube(&cube_path, &cube).unwrap();

    let msfa_path = dir.path().join("tile.msfa");
    let out = bin()
        .args(["baseline", "--kind", "bandpass", "--bands", "1", "--out"])
        .arg(&msfa_path)
        .output()
        .unwrap();
    assert_code(&out, 0);

    let mosaic_path = dir.path().join("mosaic.mscube");
    let out = bin()
        .args(["mosaic", "--cube"])
        .arg(&cube_path)
        .arg("--msfa")
        .arg(&msfa_path)
        .arg("--out")
        .arg(&mosaic_path)
        .output()
        .unwrap();
    assert_code(&out, 0);

    let recon_path = dir.path().join("recon.mscube");
    let out = bin()
        .args(["demosaic", "--mosaic"])
        .arg(&mosaic_path)
        .arg("--msfa")
        .arg(&msfa_path)
        .args(["--markov", "--mode", "one", "--epsilon", "0", "--out"])
        .arg(&recon_path)
        .output()
        .unwrap();
    assert_code(&out, 0);

    let eval = bin()
        .args(["eval", "--reference"])
        .arg(&cube_path)
        .arg("--test")
        .arg(&recon_path)
        .output()
        .unwrap();
    assert_code(&eval, 0);
    let psnr = &stdout_json(&eval)["psnr_db"];
    match psnr {
        Value::String(s) => assert_eq!(s, "inf"),
        Value::Number(n) => assert!(n.as_f64().unwrap() > 100.0, "psnr {n}"),
        other => panic!("unexpected psnr value {other:?}"),
    }
}

#[test]
fn eval_on_identical_files_prints_inf() {
    let dir = tempfile::tempdir().unwrap();
    let cube_path = dir.path().join("cube.mscube");
    let cube = synth_hne(6, 6, &wavelengths(3), 4).unwrap();
    io::write_cube(&cube_path, &cube).unwrap();
    let out = bin()
        .args(["eval", "--reference"])
        .arg(&cube_path)
        .arg("--test")
        .arg(&cube_path)
        .output()
        .unwrap();
    assert_code(&out, 0);
    assert_eq!(stdout_json(&out)["psnr_db"], Value::String("inf".into()));
}

#[test]
fn eval_dimension_mismatch_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.mscube");
    let b = dir.path().join("b.mscube");
    io::write_cube(&a, &synth_hne(6, 6, &wavelengths(3), 0).unwrap()).unwrap();
    io::write_cube(&b, &synth_hne(5, 6, &wavelengths(3), 0).unwrap()).unwrap();
    let out = bin()
        .args(["eval", "--reference"])
        .arg(&a)
        .arg("--test")
        .arg(&b)
        .output()
        .unwrap();
    assert_code(&out, 1);
}

#[test]
fn render_writes_binary_ppm_and_rgb_eval_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cube_path = dir.path().join("cube.mscube");
    io::write_cube(&cube_path, &synth_hne(9, 7, &wavelengths(8), 2).unwrap()).unwrap();
    let ppm = dir.path().join("img.ppm");
    let out = bin()
        .args(["render", "--cube"])
        .arg(&cube_path)
        .arg("--out")
        .arg(&ppm)
        .output()
        .unwrap();
    assert_code(&out, 0);
    let bytes = fs::read(&ppm).unwrap();
    assert!(bytes.starts_with(b"P6\n9 7\n255\n"));
    assert_eq!(bytes.len(), 11 + 9 * 7 * 3);

    let eval = bin()
        .args(["eval", "--rgb", "--reference"])
        .arg(&ppm)
        .arg("--test")
        .arg(&ppm)
        .output()
        .unwrap();
    assert_code(&eval, 0);
    assert_eq!(stdout_json(&eval)["psnr_db"], Value::String("inf".into()));
}

#[test]
fn synth_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.mscube");
    let b = dir.path().join("b.mscube");
    let c = dir.path().join("c.mscube");
    for (path, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let out = bin()
            .args([
                "synth", "--width", "10", "--height", "8", "--bands", "4", "--seed", seed, "--out",
            ])
            .arg(path)
            .output()
            .unwrap();
        assert_code(&out, 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn baselines_round_trip_through_msfa_files() {
    let dir = tempfile::tempdir().unwrap();
    let bandpass = dir.path().join("bandpass.msfa");
    let bayer = dir.path().join("bayer.msfa");
    let out = bin()
        .args(["baseline", "--kind", "bandpass", "--bands", "16", "--out"])
        .arg(&bandpass)
        .output()
        .unwrap();
    assert_code(&out, 0);
    let out = bin()
        .args(["baseline", "--kind", "bayer", "--bands", "16", "--out"])
        .arg(&bayer)
        .output()
        .unwrap();
    assert_code(&out, 0);

    let tile = io::read_msfa(&bandpass).unwrap();
    assert_eq!(tile.filters(), 16);
    assert_eq!(tile.bands(), 16);
    let tile = io::read_msfa(&bayer).unwrap();
    assert_eq!(tile.filters(), 4);
}

#[test]
fn compare_emits_one_row_per_design() {
    let dir = tempfile::tempdir().unwrap();
    let training = write_cubes(dir.path(), 2, 16, 4);
    let test_path = dir.path().join("test.mscube");
    io::write_cube(&test_path, &synth_hne(16, 16, &wavelengths(4), 50).unwrap()).unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &serde_json::json!({
            "training": training,
            "test": [test_path],
            "out_dir": out_dir,
            "block_w": 2,
            "block_h": 2,
            "outer_iters": 3,
            "inner_max_iters": 30,
            "baselines": ["bandpass", "bayer"],
        }),
    );
    let out = bin()
        .args(["compare", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_code(&out, 0);
    let rows = stdout_json(&out);
    let rows = rows.as_array().unwrap();
    let ids: Vec<&str> = rows
        .iter()
        .map(|r| r["design_id"].as_str().unwrap())
        .collect();
    assert_eq!(
        ids,
        vec![
            "optimized-9block",
            "optimized-1block",
            "bandpass-markov",
            "bayer-markov"
        ]
    );
    for row in rows {
        assert!(row["psnr_msi_db"].as_f64().unwrap() > 0.0);
        assert!(row["psnr_rgb_db"].as_f64().unwrap() > 0.0);
    }
    assert!(out_dir.join("compare.json").exists());
}

#[test]
fn compare_without_test_cubes_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let training = write_cubes(dir.path(), 1, 8, 2);
    let config = write_config(
        dir.path(),
        &serde_json::json!({
            "training": training,
            "out_dir": dir.path().join("out"),
            "block_w": 2,
            "block_h": 2,
        }),
    );
    let out = bin()
        .args(["compare", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_code(&out, 2);
}

#[test]
fn malformed_cube_file_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mscube");
    fs::write(&bad, b"not a cube at all\n").unwrap();
    let msfa = dir.path().join("tile.msfa");
    bin()
        .args(["baseline", "--kind", "bayer", "--bands", "2", "--out"])
        .arg(&msfa)
        .output()
        .unwrap();
    let out = bin()
        .args(["mosaic", "--cube"])
        .arg(&bad)
        .arg("--msfa")
        .arg(&msfa)
        .arg("--out")
        .arg(dir.path().join("m.mscube"))
        .output()
        .unwrap();
    assert_code(&out, 1);
}

#[test]
fn demosaic_with_mismatched_operator_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let wl = wavelengths(2);
    let bayer = msfa_forge::bayer_cfa(&wl).unwrap();
    let bandpass_path = dir.path().join("bandpass.msfa");
    let out = bin()
        .args(["baseline", "--kind", "bandpass", "--bands", "2", "--out"])
        .arg(&bandpass_path)
        .output()
        .unwrap();
    assert_code(&out, 0);

    // operator trained for the bayer tile
    let r = msfa_forge::markov_autocorr(bayer.shape(), 2, msfa_forge::BlockMode::One, 0.5, 0.5)
        .unwrap();
    let w = msfa_forge::wiener_matrix(&r, &msfa_forge::build_phi(&bayer), None).unwrap();
    let w_path = dir.path().join("w.mat32");
    w.save(&w_path).unwrap();

    // mosaic taken with the bayer tile as well
    let bayer_path = dir.path().join("bayer.msfa");
    io::write_msfa(&bayer_path, &bayer).unwrap();
    let cube_path = dir.path().join("cube.mscube");
    io::write_cube(&cube_path, &synth_hne(8, 8, &wl, 3).unwrap()).unwrap();
    let mosaic_path = dir.path().join("m.mscube");
    let out = bin()
        .args(["mosaic", "--cube"])
        .arg(&cube_path)
        .arg("--msfa")
        .arg(&bayer_path)
        .arg("--out")
        .arg(&mosaic_path)
        .output()
        .unwrap();
    assert_code(&out, 0);

    // demosaicking the bayer mosaic while naming the bandpass tile must
    // fail the provenance check
    let out = bin()
        .args(["demosaic", "--mosaic"])
        .arg(&mosaic_path)
        .arg("--msfa")
        .arg(&bandpass_path)
        .arg("--wprime")
        .arg(&w_path)
        .arg("--out")
        .arg(dir.path().join("r.mscube"))
        .output()
        .unwrap();
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("trained for"));
}

#[test]
fn unknown_subcommand_exits_2() {
    let out = bin().arg("sparkle").output().unwrap();
    assert_code(&out, 2);
}

#[test]
fn demosaic_requires_an_operator_source() {
    let out = bin()
        .args(["demosaic", "--mosaic", "m", "--msfa", "a", "--out", "r"])
        .output()
        .unwrap();
    assert_code(&out, 2);
}
