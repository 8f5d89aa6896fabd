//! End-to-end tests driving the `fsc` binary.

use std::path::Path;
use std::process::{Command, Output};

use fsc_core::codec::compress_field;
use fsc_core::datamodel::{read_field, Codec, CompressionConfig, Mode};

fn fsc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = fsc(&[], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "{stderr}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fsc(&["gen", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn particle_gen_creates_its_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&fsc(
        &["gen", "--kind", "particles", "--particles", "500", "--grid", "8", "--output",
          "fresh/cat"],
        dir.path(),
    ));
    assert!(dir.path().join("fresh/cat/field.particles.json").is_file());
    assert!(dir.path().join("fresh/cat/field.vz.f32").is_file());
}

#[test]
fn bad_codec_name_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&fsc(&["gen", "--grid", "8", "--output", "f.f32"], dir.path()));
    let out = fsc(
        &["compress", "--input", "f.f32", "--output", "f.fsc", "--codec", "zip", "--mode", "abs",
          "--param", "0.1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown codec"));
}

#[test]
fn file_round_trip_matches_in_memory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&fsc(
        &["gen", "--grid", "24", "--box", "96", "--lognormal", "--name", "rho", "--seed", "11",
          "--output", "rho.f32"],
        dir.path(),
    ));
    assert_ok(&fsc(
        &["compress", "--input", "rho.f32", "--output", "rho.fsc", "--codec", "pred", "--mode",
          "abs", "--param", "0.01"],
        dir.path(),
    ));
    assert_ok(&fsc(
        &["decompress", "--input", "rho.fsc", "--output", "recon.f32"],
        dir.path(),
    ));

    let field = read_field(&dir.path().join("rho.f32")).unwrap();
    let config = CompressionConfig::new(Codec::Pred, Mode::Abs, 0.01).unwrap();
    let in_memory = compress_field(&field, &config).unwrap().to_bytes();
    let on_disk = std::fs::read(dir.path().join("rho.fsc")).unwrap();
    assert_eq!(in_memory, on_disk, "file compression must equal the in-memory stream");

    let recon = read_field(&dir.path().join("recon.f32")).unwrap();
    assert_eq!(recon.dims, field.dims);
    for (a, b) in field.values.iter().zip(&recon.values) {
        assert!((a - b).abs() <= 0.01 + 1e-7);
    }
}

#[test]
fn partitioned_compression_round_trips_a_1d_field() {
    let dir = tempfile::tempdir().unwrap();
    // A 1-D field long enough for three 8x8x8 partitions plus padding.
    let field = fsc_core::datamodel::Field::new(
        "vx",
        vec![1300],
        (0..1300).map(|t| (t as f32 * 0.01).sin() * 40.0).collect(),
        None,
    )
    .unwrap();
    fsc_core::datamodel::write_field(&field, &dir.path().join("vx.f32")).unwrap();

    assert_ok(&fsc(
        &["compress", "--input", "vx.f32", "--output", "vx.manifest.json", "--codec", "pred",
          "--mode", "abs", "--param", "0.001", "--partition", "8,8,8"],
        dir.path(),
    ));
    assert!(dir.path().join("vx.part000.fsc").exists());
    assert!(dir.path().join("vx.part002.fsc").exists());

    assert_ok(&fsc(
        &["decompress", "--input", "vx.manifest.json", "--output", "back.f32"],
        dir.path(),
    ));
    let back = read_field(&dir.path().join("back.f32")).unwrap();
    assert_eq!(back.dims, vec![1300]);
    for (a, b) in field.values.iter().zip(&back.values) {
        assert!((a - b).abs() <= 0.001 + 1e-7);
    }
}

#[test]
fn fixed_rate_4_on_a_64_cube_reports_ratio_8() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&fsc(
        &["gen", "--grid", "64", "--name", "rho", "--output", "rho.f32"],
        dir.path(),
    ));
    let out = fsc(
        &["compress", "--input", "rho.f32", "--output", "rho.fsc", "--codec", "block", "--mode",
          "fixed_rate", "--param", "4"],
        dir.path(),
    );
    assert_ok(&out);
    let original = 64usize * 64 * 64 * 4;
    let compressed = std::fs::metadata(dir.path().join("rho.fsc")).unwrap().len() as usize;
    let ratio = original as f64 / compressed as f64;
    assert!((ratio - 8.0).abs() / 8.0 < 0.01, "ratio {ratio}");
}

#[test]
fn sweep_from_config_produces_a_selection() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = serde_json::json!({
        "version": 1,
        "output_dir": out_dir,
        "seed": 21,
        "datasets": [{
            "name": "rho",
            "source": {
                "kind": "synth_grid", "grid": 16, "box_length": 64.0,
                "spectral_index": -1.0, "lognormal": true
            },
            "configs": [
                { "codec": "pred", "mode": "abs", "param": 0.0005 },
                { "codec": "pred", "mode": "abs", "param": 0.002 }
            ]
        }],
        "protocol": { "warmups": 0, "runs": 1 }
    });
    std::fs::write(dir.path().join("sweep.json"), config.to_string()).unwrap();

    let out = fsc(&["sweep", "--config", "sweep.json"], dir.path());
    assert_ok(&out);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    let chosen = &summary["selection"]["per_field"]["rho"];
    assert_eq!(chosen["outcome"], "chosen", "{summary:#}");
    assert!(out_dir.join("metrics.csv").exists());
    assert!(out_dir.join("ledger.json").exists());
}

#[test]
fn sweep_flag_conflicting_with_config_warns_and_loses() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = serde_json::json!({
        "version": 1,
        "output_dir": out_dir,
        "seed": 5,
        "datasets": [{
            "name": "g",
            "source": {
                "kind": "synth_grid", "grid": 8, "box_length": 32.0, "spectral_index": -1.0
            },
            "configs": [{ "codec": "pred", "mode": "abs", "param": 0.01 }]
        }],
        "protocol": { "warmups": 0, "runs": 1 }
    });
    std::fs::write(dir.path().join("sweep.json"), config.to_string()).unwrap();
    let out = fsc(&["sweep", "--config", "sweep.json", "--seed", "99"], dir.path());
    assert_ok(&out);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("warning"), "{stderr}");
    assert!(stderr.contains("seed"), "{stderr}");
}
