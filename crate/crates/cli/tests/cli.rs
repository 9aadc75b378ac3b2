use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dffoct::io::{self, ImageFormat, MaskImage};
use dffoct::metrics::artifact_energy;
use dffoct::simulate::SimGroundTruth;
use dffoct::{DynamicImage, Stack};
use serde_json::Value;

fn dffoct(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dffoct"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = dffoct(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn template(dir: &Path, name: &str, size: &str, frames: &str, seed: &str, extra: &[&str]) {
    let mut args = vec![
        "simulate", "--template", name, "--width", size, "--height", size, "--frames", frames,
        "--seed", seed, "--out-stack", "s.dstk", "--out-truth", "t.json", "--out-mask", "m.pgm",
    ];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

const MINIMAL_SCENE: &str = r#"{
  "config": {"width": 8, "height": 8, "frames": 64},
  "scene": {
    "regions": [
      {"pixels": {"shape": "rect", "x": 0, "y": 0, "width": 4, "height": 8},
       "kind": {"type": "static_reflector", "r_s": 0.05}},
      {"pixels": {"shape": "disk", "cx": 6.0, "cy": 4.0, "radius": 1.5},
       "kind": {"type": "motile", "r_s": 0.0001, "walk": {"type": "centered_gaussian", "std": 0.5}}}
    ],
    "bulk_motion": {"type": "sinusoid", "amplitude_nm": 50.0, "frequency_hz": 5.0, "phase": 0.0}
  }
}"#;

#[test]
fn simulate_minimal_scene_writes_consistent_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("scene.json"), MINIMAL_SCENE).unwrap();
    for out in ["a", "b"] {
        ok(d, &[
            "simulate", "--scene", "scene.json", "--seed", "7",
            "--out-stack", &format!("{out}.dstk"), "--out-truth", &format!("{out}.json"),
        ]);
    }
    let header = io::read_header(d.join("a.dstk")).unwrap();
    assert_eq!((header.width, header.height, header.frames), (8, 8, 64));
    let truth: SimGroundTruth =
        serde_json::from_str(&std::fs::read_to_string(d.join("a.json")).unwrap()).unwrap();
    assert_eq!(truth.label_map.len(), 64);
    assert_eq!(
        std::fs::read(d.join("a.dstk")).unwrap(),
        std::fs::read(d.join("b.dstk")).unwrap()
    );
    let manifest = json(d.join("a.dstk.manifest.json"));
    assert_eq!(manifest["config"]["simulate"]["simulation"]["rng_seed"], 7);
    assert_eq!(manifest["inputs"][0]["role"], "scene");
}

#[test]
fn scene_schema_errors_name_the_json_path() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad = MINIMAL_SCENE.replace("\"r_s\": 0.05", "\"r_s\": \"bright\"");
    std::fs::write(d.join("scene.json"), bad).unwrap();
    let out = dffoct(d, &["simulate", "--scene", "scene.json", "--out-stack", "s.dstk", "--out-truth", "t.json"]);
    assert_eq!(code(&out), 2);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("scene.regions[0]"), "{msg}");

    let unknown = MINIMAL_SCENE.replace("\"frames\": 64", "\"frames\": 64, \"fps\": 3");
    std::fs::write(d.join("scene.json"), unknown).unwrap();
    let out = dffoct(d, &["simulate", "--scene", "scene.json", "--out-stack", "s.dstk", "--out-truth", "t.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("fps"));
}

#[test]
fn lung_template_is_in_the_artifact_regime() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    template(d, "lung-like", "48", "256", "1", &[]);
    ok(d, &["dyn", "--input", "s.dstk", "--output", "sd.dstk"]);
    let truth: SimGroundTruth =
        serde_json::from_str(&std::fs::read_to_string(d.join("t.json")).unwrap()).unwrap();
    let e = artifact_energy(&io::read_image(d.join("sd.dstk")).unwrap(), &truth).unwrap();
    let (stat, motile) = (e.static_mean.unwrap(), e.motile_mean.unwrap());
    assert!(stat > 5.0 * motile, "static {stat} motile {motile}");
}

#[test]
fn filter_clean_and_moving_stacks() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    template(d, "lung-like", "48", "256", "0", &["--static-sample"]);
    ok(d, &["filter", "--input", "s.dstk", "--output", "f.dstk", "--report", "r.json"]);
    assert_eq!(json(d.join("r.json"))["rejected_indices"], serde_json::json!([]));

    template(d, "lung-like", "48", "256", "0", &[]);
    ok(d, &["filter", "--input", "s.dstk", "--output", "f.dstk", "--report", "r.json", "--artifact-image", "a.dstk"]);
    let report = json(d.join("r.json"));
    assert!(!report["rejected_indices"].as_array().unwrap().is_empty());
    assert!(report.get("wall_time_seconds").is_none());
    let truth: SimGroundTruth =
        serde_json::from_str(&std::fs::read_to_string(d.join("t.json")).unwrap()).unwrap();
    ok(d, &["dyn", "--input", "s.dstk", "--output", "raw_sd.dstk"]);
    ok(d, &["dyn", "--input", "f.dstk", "--output", "fil_sd.dstk"]);
    let raw = artifact_energy(&io::read_image(d.join("raw_sd.dstk")).unwrap(), &truth).unwrap();
    let fil = artifact_energy(&io::read_image(d.join("fil_sd.dstk")).unwrap(), &truth).unwrap();
    assert!(raw.static_mean.unwrap() >= 10.0 * fil.static_mean.unwrap());

    ok(d, &["filter", "--input", "s.dstk", "--output", "f.dstk", "--report", "r.json", "--manual-indices", "0,1"]);
    let report = json(d.join("r.json"));
    assert_eq!(report["detector"], "manual");
    assert_eq!(report["rejected_indices"], serde_json::json!([0, 1]));
}

#[test]
fn filter_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = dffoct(d, &["filter", "--input", "missing.dstk", "--output", "f.dstk", "--report", "r.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.dstk"));

    let s = Stack::from_fn(16, 16, 32, |x, y, t| ((x * 3 + y * 5 + t * 7) % 11) as f32).unwrap();
    io::write_stack(&s, d.join("s.dstk")).unwrap();
    let out = dffoct(d, &["filter", "--input", "s.dstk", "--output", "f.dstk", "--report", "r.json", "--memory-budget", "1000"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--tile"));

    let out = dffoct(d, &["filter", "--input", "s.dstk", "--output", "f.dstk", "--report", "r.json", "--tile", "1x1"]);
    assert_eq!(code(&out), 2);
    let out = dffoct(d, &["filter", "--input", "s.dstk", "--output", "f.dstk", "--report", "r.json", "--tile", "big"]);
    assert_eq!(code(&out), 2);

    std::fs::write(d.join("junk.dstk"), b"{\"magic\":\"NOPE\"}\n").unwrap();
    let out = dffoct(d, &["filter", "--input", "junk.dstk", "--output", "f.dstk", "--report", "r.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn dyn_on_constant_stack_is_zero_and_records_tau() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    io::write_stack(&Stack::new(3, 2, 120, vec![42.0; 720]).unwrap(), d.join("c.dstk")).unwrap();
    for method in ["std", "cumsum"] {
        ok(d, &["dyn", "--input", "c.dstk", "--output", "o.dstk", "--method", method, "--preview", "o.pgm"]);
        let img = io::read_image(d.join("o.dstk")).unwrap();
        assert!(img.values().iter().all(|&v| v == 0.0), "{method}");
        assert!(io::parse_pgm(&std::fs::read(d.join("o.pgm")).unwrap()).is_ok());
    }
    let manifest = json(d.join("o.dstk.manifest.json"));
    assert_eq!(manifest["config"]["dyn"]["dynamic"]["window_length"], 50);

    let out = dffoct(d, &["dyn", "--input", "c.dstk", "--output", "o.dstk", "--tau", "121"]);
    assert_eq!(code(&out), 2);
}

fn write_image(d: &Path, name: &str, values: Vec<f32>) {
    let img = DynamicImage::new(4, 2, values).unwrap();
    io::write_image(&img, d.join(name), ImageFormat::Dstk2d).unwrap();
}

#[test]
fn snr_gains_and_dimension_checks() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mask = MaskImage::new(4, 2, vec![0, 0, 1, 1, 0, 2, 2, 0]).unwrap();
    io::write_mask(&mask, d.join("m.pgm")).unwrap();
    let a = vec![1.0, 1.5, 4.0, 5.0, 0.5, 3.0, 7.0, 1.0];
    write_image(d, "a.dstk", a.clone());
    let mut b = a.clone();
    for (v, l) in b.iter_mut().zip(mask.labels()) {
        if *l > 0 {
            *v *= 2.0;
        }
    }
    write_image(d, "b.dstk", b);

    ok(d, &["snr", "--image-a", "a.dstk", "--image-b", "a.dstk", "--mask", "m.pgm", "--out-csv", "same.csv"]);
    let mut rows = csv::Reader::from_path(d.join("same.csv")).unwrap();
    for row in rows.records() {
        assert_eq!(row.unwrap()[3].parse::<f64>().unwrap(), 1.0);
    }
    ok(d, &["snr", "--image-a", "a.dstk", "--image-b", "b.dstk", "--mask", "m.pgm", "--out-csv", "double.csv"]);
    let summary = json(d.join("double.json"));
    assert!((summary["mean_gain"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(summary["n_cells"], 2);

    let img = DynamicImage::new(2, 4, a).unwrap();
    io::write_image(&img, d.join("t.dstk"), ImageFormat::Dstk2d).unwrap();
    let out = dffoct(d, &["snr", "--image-a", "a.dstk", "--image-b", "t.dstk", "--mask", "m.pgm", "--out-csv", "x.csv"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn cumsum_beats_std_on_drifting_cells() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    template(d, "macaque-like", "64", "256", "2", &[]);
    ok(d, &["dyn", "--input", "s.dstk", "--output", "sd.dstk", "--method", "std"]);
    ok(d, &["dyn", "--input", "s.dstk", "--output", "cs.dstk", "--method", "cumsum", "--tau", "50"]);
    ok(d, &["snr", "--image-a", "sd.dstk", "--image-b", "cs.dstk", "--mask", "m.pgm", "--out-csv", "g.csv"]);
    let summary = json(d.join("g.json"));
    assert!(summary["mean_gain"].as_f64().unwrap() >= 1.5, "{summary}");
}

#[test]
fn pipeline_on_moving_dim_cells_prefers_cumsum() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    template(d, "liver-like", "96", "512", "0", &[]);
    ok(d, &["pipeline", "--input", "s.dstk", "--mask", "m.pgm", "--outdir", "out"]);
    let report = json(d.join("out/report.json"));
    assert!(!report["rejected_indices"].as_array().unwrap().is_empty());
    let summary = json(d.join("out/snr.json"));
    let ratio = summary["mean_snr_b"].as_f64().unwrap() / summary["mean_snr_a"].as_f64().unwrap();
    assert!(ratio >= 2.0, "{summary}");
    let manifest = json(d.join("out/manifest.json"));
    let stages: Vec<&str> = manifest["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, ["read", "filter", "dyn_std", "dyn_cumsum", "snr"]);
}

#[test]
fn clean_pipeline_reduces_to_dynamic_images() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    template(d, "lung-like", "48", "256", "0", &["--static-sample"]);
    ok(d, &["pipeline", "--input", "s.dstk", "--outdir", "out"]);
    assert_eq!(json(d.join("out/report.json"))["rejected_indices"], serde_json::json!([]));
    ok(d, &["dyn", "--input", "s.dstk", "--output", "direct.dstk", "--method", "cumsum"]);
    let direct = io::read_image(d.join("direct.dstk")).unwrap();
    let piped = io::read_image(d.join("out/dyn_cumsum.dstk")).unwrap();
    for (a, b) in direct.values().iter().zip(piped.values()) {
        assert!((a - b).abs() <= 1e-4 * a.abs().max(1.0));
    }
    assert!(!d.join("out/snr.csv").exists());
}

#[test]
fn replay_reproduces_pipeline_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    template(d, "lung-like", "40", "128", "4", &[]);
    ok(d, &["pipeline", "--input", "s.dstk", "--mask", "m.pgm", "--outdir", "par", "--tile", "16x16", "--previews"]);
    ok(d, &["pipeline", "--input", "s.dstk", "--mask", "m.pgm", "--outdir", "ser", "--tile", "16x16", "--serial", "--previews"]);
    let out = ok(d, &["replay", "par/manifest.json", "--outdir", "again"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("byte for byte"));

    let names = ["filtered.dstk", "report.json", "artifact.dstk", "dyn_std.dstk", "dyn_cumsum.dstk", "dyn_std.pgm", "dyn_cumsum.pgm", "snr.csv", "snr.json"];
    for name in names {
        let par = std::fs::read(d.join("par").join(name)).unwrap();
        assert_eq!(par, std::fs::read(d.join("ser").join(name)).unwrap(), "{name}");
        assert_eq!(par, std::fs::read(d.join("again").join(name)).unwrap(), "{name}");
    }
    let recorded = json(d.join("par/manifest.json"));
    let replayed = json(d.join("again/manifest.json"));
    assert_eq!(recorded["config"], replayed["config"]);
    assert_eq!(recorded["config"]["pipeline"]["filter"]["tile"], serde_json::json!([16, 16]));

    let mut stack = io::read_stack(d.join("s.dstk")).unwrap().data().to_vec();
    stack[0] += 1.0;
    io::write_stack(&Stack::new(40, 40, 128, stack).unwrap(), d.join("s.dstk")).unwrap();
    let out = dffoct(d, &["replay", "par/manifest.json", "--outdir", "tampered"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}
