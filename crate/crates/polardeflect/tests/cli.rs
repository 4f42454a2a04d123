mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::*;
use polardeflect::artifacts::{self, FrameEntry, FRAMES_FILE, TRUTH_FILES};
use polardeflect::cli::{cmd_evaluate, cmd_reconstruct, cmd_simulate, truth_as_solution, FusionArgs};
use polardeflect::manifest::{Preset, SceneManifest};
use polardeflect::pipeline::{self, Mode};
use polardeflect::record::RunRecord;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polardeflect"))
        .args(args)
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn entries(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

const MULTI: FusionArgs = FusionArgs {
    mode: Mode::Multi,
    strict_dop: false,
    model: None,
};

#[test]
fn simulate_writes_four_channels_per_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let m = shrunk(Preset::BearingBall, 64);
    let sim = tmp.path().join("sim");
    cmd_simulate(&m, &sim).unwrap();

    let frames: Vec<FrameEntry> = artifacts::read_json(&sim.join(FRAMES_FILE)).unwrap();
    assert_eq!(frames.len(), m.pattern.frame_labels().len());
    let pfms = fs::read_dir(sim.join("frames")).unwrap().count();
    assert_eq!(pfms, 4 * frames.len());
    for f in TRUTH_FILES {
        assert!(sim.join(f).is_file(), "{f}");
    }
    let rec = RunRecord::load(&sim).unwrap();
    assert_eq!(rec.command, "simulate");
    assert!(rec.verify(&sim).unwrap().is_empty());
    assert_eq!(artifacts::load_manifest(&sim).unwrap(), m);
}

#[test]
fn seed_changes_noise_but_not_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let mut m = shrunk(Preset::BearingBallNoisy, 64);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    cmd_simulate(&m, &a).unwrap();
    m.seed += 1;
    cmd_simulate(&m, &b).unwrap();
    for f in TRUTH_FILES {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let f0 = "frames/f000_i0.pfm";
    assert_ne!(fs::read(a.join(f0)).unwrap(), fs::read(b.join(f0)).unwrap());
}

#[test]
fn reruns_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let m = shrunk(Preset::BearingBallNoisy, 96);
    let mut records = Vec::new();
    for run in ["a", "b"] {
        let root = tmp.path().join(run);
        cmd_simulate(&m, &root.join("sim")).unwrap();
        cmd_reconstruct(&root.join("sim"), &MULTI, &root.join("rec")).unwrap();
        cmd_evaluate(&root.join("rec"), &root.join("sim"), &root.join("eval")).unwrap();
        records.push(["sim", "rec", "eval"].map(|d| RunRecord::load(&root.join(d)).unwrap()));
    }
    for (ra, rb) in records[0].iter().zip(&records[1]) {
        assert_eq!(ra.outputs, rb.outputs);
        assert_eq!(ra.manifest_sha256, rb.manifest_sha256);
    }
    // b's digests describe a's files byte for byte
    for (d, rb) in ["sim", "rec", "eval"].iter().zip(&records[1]) {
        assert!(rb.verify(&tmp.path().join("a").join(d)).unwrap().is_empty(), "{d}");
    }
}

#[test]
fn evaluating_truth_against_itself_is_exact() {
    let m = shrunk(Preset::BearingBall, 96);
    let setup = m.build().unwrap();
    let sim = pipeline::simulate(&setup).unwrap();
    let truth = artifacts::TruthMaps::from_truth(&sim.truth);
    let mut sol = truth_as_solution(&truth);
    sol.points = sim.truth.samples.as_slice().iter().flatten().map(|t| t.point).collect();
    let ev = pipeline::evaluate(
        &setup.scene.camera,
        &sol,
        &truth.normals,
        &truth.depth,
        setup.reference_radius(),
    )
    .unwrap();
    assert_eq!(ev.report.normal.rmse, 0.0);
    assert_eq!(ev.report.normal.max, 0.0);
    assert_eq!(ev.report.depth.rmse, 0.0);
    assert_eq!(ev.report.valid_fraction, 1.0);
    assert!(ev.report.radius_error_um.unwrap().abs() < 1e-6);
}

#[test]
fn schema_error_exits_2_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&Preset::BearingBall.manifest().to_json()).unwrap();
    v["camera"]["width"] = serde_json::json!(-3);
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, v.to_string()).unwrap();
    let out = tmp.path().join("out");
    let o = bin(&["simulate", "--manifest", p(&bad), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("camera.width"));
    assert_eq!(entries(tmp.path()), ["bad.json"]);

    let mut m = Preset::BearingBall.manifest();
    m.working_distance = [300.0, 100.0];
    fs::write(&bad, m.to_json()).unwrap();
    let o = bin(&["simulate", "--manifest", p(&bad), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(entries(tmp.path()), ["bad.json"]);

    let o = bin(&["--threads", "0", "preset", "bearing-ball"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bin(&["preset", "teapot"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn data_errors_exit_3_and_leave_inputs_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("scene.json");
    fs::write(&manifest, shrunk(Preset::BearingBall, 48).to_json()).unwrap();
    let sim = tmp.path().join("sim");
    let o = bin(&[
        "--threads",
        "1",
        "simulate",
        "--manifest",
        p(&manifest),
        "--out",
        p(&sim),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = bin(&["reconstruct", "--input", p(&sim), "--mode", "single"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cross-sinusoid"));
    assert_eq!(entries(tmp.path()), ["scene.json", "sim"]);

    let o = bin(&["reconstruct", "--input", p(&sim), "--mode", "multi"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = tmp.path().join("reconstruction-multi");
    assert!(rec.join("solution.json").is_file());

    // a truth directory with a missing map is reported by name
    let broken = tmp.path().join("broken");
    fs::create_dir(&broken).unwrap();
    fs::copy(sim.join("manifest.json"), broken.join("manifest.json")).unwrap();
    let o = bin(&["evaluate", "--solution", p(&rec), "--truth", p(&broken)]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("truth/normals.pfm") && err.contains("truth/depth.pfm"),
        "{err}"
    );

    let o = bin(&["evaluate", "--solution", p(&rec), "--truth", p(&sim)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("evaluation-reconstruction-multi/report.json").is_file());

    for d in [&sim, &rec] {
        assert!(RunRecord::load(d).unwrap().verify(d).unwrap().is_empty());
    }
    assert!(!entries(tmp.path()).iter().any(|e| e.contains("partial")));
}

#[test]
fn preset_prints_a_loadable_manifest() {
    let o = bin(&["preset", "bearing-ball-single"]);
    assert!(o.status.success());
    let m = SceneManifest::from_json(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert_eq!(m, Preset::BearingBallSingle.manifest());
}

#[test]
fn model_and_strict_flags_reach_the_solver() {
    let tmp = tempfile::tempdir().unwrap();
    let mut m = shrunk(Preset::BearingBall, 96);
    m.synthesis = polardeflect_core::simulator::SynthesisModel::ExactFresnel;
    let sim = tmp.path().join("sim");
    cmd_simulate(&m, &sim).unwrap();
    let args = FusionArgs {
        model: Some(polardeflect::cli::ModelArg::Metal),
        strict_dop: true,
        ..MULTI
    };
    let info = cmd_reconstruct(&sim, &args, &tmp.path().join("rec")).unwrap();
    assert_eq!(info.model, polardeflect_core::DopModel::Metal);
    assert!(info.strict_dop);
    assert!(info.summary.saturated_dop > 0);
    let exact = FusionArgs {
        model: Some(polardeflect::cli::ModelArg::ExactFresnel),
        ..MULTI
    };
    let info = cmd_reconstruct(&sim, &exact, &tmp.path().join("rec2")).unwrap();
    assert_eq!(info.summary.saturated_dop, 0);
    assert_eq!(info.summary.ok, info.summary.masked);
}
