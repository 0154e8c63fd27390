use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use skewstream_core::phantom::fit_axis_ratio;
use skewstream_core::source::StackMetadata;
use skewstream_core::Image16;

fn skewstream(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skewstream"))
        .args(args)
        .env_remove("SKEWSTREAM_LISTEN")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

#[test]
fn phantom_then_native_deskew_is_isotropic_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (phantom, a, b) = (tmp.path().join("phantom"), tmp.path().join("a"), tmp.path().join("b"));
    ok(&skewstream(&["phantom-gen", "--out", phantom.to_str().unwrap()]));
    for f in ["stack.raw", "stack.json", "scene.json", "manifest.json"] {
        assert!(phantom.join(f).exists(), "{f} missing");
    }

    let stack = phantom.join("stack.raw");
    for out in [&a, &b] {
        ok(&skewstream(&[
            "deskew",
            "--input",
            stack.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--angles",
            "60,30,0",
        ]));
    }
    let (da, db) = (dir_contents(&a), dir_contents(&b));
    assert_eq!(da.keys().collect::<Vec<_>>(), db.keys().collect::<Vec<_>>());
    assert_eq!(da, db, "two runs differ");
    assert_eq!(da.len(), 3 * 2 + 2);

    let meta = read_json(&a.join("deskew.json"));
    assert_eq!(meta["views"].as_array().unwrap().len(), 3);
    let native = &meta["views"][0];
    assert!((native["warp_scale"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let image = Image16::read_png(a.join(native["png"].as_str().unwrap())).unwrap();
    let fit = fit_axis_ratio(&image, 0.5).unwrap();
    assert!((fit.ratio - 1.0).abs() <= 0.02, "axis ratio {}", fit.ratio);
}

#[test]
fn missing_sidecar_field_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let phantom = tmp.path().join("p");
    ok(&skewstream(&["phantom-gen", "--out", phantom.to_str().unwrap(), "--slices", "8", "--format", "tiff"]));
    let sidecar = phantom.join("stack.json");
    let mut meta = read_json(&sidecar);
    meta["geometry"].as_object_mut().unwrap().remove("frame_height_px");
    std::fs::write(&sidecar, meta.to_string()).unwrap();

    let out = skewstream(&["deskew", "--input", phantom.join("stack.tif").to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frame_height_px"));

    std::fs::remove_file(&sidecar).unwrap();
    let out = skewstream(&["deskew", "--input", phantom.join("stack.tif").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 3\n[geometry]\nslice_count = 12\nframe_width_px = 40\nframe_height_px = 32\n[timing]\nexposure_ms = 0.5\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("p");
    ok(&skewstream(&["--config", cfg.to_str().unwrap(), "phantom-gen", "--slices", "9", "--out", out_dir.to_str().unwrap()]));
    let meta = StackMetadata::load(out_dir.join("stack.json")).unwrap();
    assert_eq!((meta.geometry.slice_count, meta.geometry.frame_width_px), (9, 40));
    assert_eq!(meta.timing.exposure_ms, 0.5);

    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["command"], "phantom-gen");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["versions"]["skewstream"].is_string());

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[geometry]\nangle = 3\n").unwrap();
    let out = skewstream(&["--config", bad.to_str().unwrap(), "phantom-gen", "--out", out_dir.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn example_config_drives_a_phantom_run() {
    let tmp = tempfile::tempdir().unwrap();
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("skewstream.example.toml");
    let out_dir = tmp.path().join("p");
    ok(&skewstream(&["--config", example.to_str().unwrap(), "phantom-gen", "--out", out_dir.to_str().unwrap()]));
    let meta = StackMetadata::load(out_dir.join("stack.json")).unwrap();
    assert_eq!(meta.geometry.slice_count, 60);
}

#[test]
fn bench_report_matches_the_published_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("bench");
    let out = skewstream(&["bench", "--quick", "--out", out_dir.to_str().unwrap()]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("Increasing camera exposure time"));

    let schema = read_json(&Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas/bench-report.schema.json"));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let report = read_json(&out_dir.join("bench.json"));
    let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:#?}");
    assert_eq!(report["matrix"].as_array().unwrap().len(), 9);

    // The schema is strict enough to catch a renamed field.
    let mut broken = report.clone();
    broken["matrix"][0]["kendall"] = broken["matrix"][0]["kendall_tau"].take();
    assert!(!validator.is_valid(&broken));

    assert!(out_dir.join("manifest.json").exists());
    assert!(out_dir.join("bench.txt").exists());
}

#[test]
fn live_listen_address_comes_from_flag_then_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |flag: Option<&str>, env: Option<&str>, out: &Path| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_skewstream"));
        cmd.args(["live", "--duration-s", "0.3", "--slices", "8", "--width", "16", "--height", "16"])
            .args(["--out", out.to_str().unwrap()])
            .env_remove("SKEWSTREAM_LISTEN");
        if let Some(f) = flag {
            cmd.args(["--listen", f]);
        }
        if let Some(e) = env {
            cmd.env("SKEWSTREAM_LISTEN", e);
        }
        let output = cmd.output().unwrap();
        ok(&output);
        assert!(String::from_utf8_lossy(&output.stdout).contains("serving"));
        read_json(&out.join("manifest.json"))["config"]["listen"].as_str().unwrap().to_owned()
    };
    assert_eq!(run(None, Some("127.0.0.1:0"), &tmp.path().join("a")), "127.0.0.1:0");
    assert_eq!(run(Some("0.0.0.0:0"), Some("127.0.0.1:0"), &tmp.path().join("b")), "0.0.0.0:0");
}
