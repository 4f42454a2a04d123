//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use polardeflect_core::metrics::{EvaluationReport, ProfileBin};
use polardeflect_core::polarization::SaturationPolicy;
use polardeflect_core::DopModel;
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, SolutionInfo, TruthMaps};
use crate::error::{Error, Result};
use crate::manifest::{Preset, SceneManifest, Setup, OUTPUT_ENV};
use crate::pfm::Pfm;
use crate::pipeline::{self, Mode, Solution};
use crate::record::Staging;

#[derive(Debug, Parser)]
#[command(
    name = "polardeflect",
    version,
    about = "Specular surface reconstruction from polarimetric deflectometry"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

/// DoP model used to invert the measured degree of polarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Dielectric,
    Metal,
    ExactFresnel,
}

impl From<ModelArg> for DopModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Dielectric => DopModel::Dielectric,
            ModelArg::Metal => DopModel::Metal,
            ModelArg::ExactFresnel => DopModel::ExactFresnel,
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct FusionArgs {
    #[arg(long, value_enum, default_value = "multi")]
    pub mode: Mode,
    /// Leave pixels whose DoP exceeds the model maximum unsolved.
    #[arg(long)]
    pub strict_dop: bool,
    /// Override the manifest's DoP model.
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render polarization frames and ground truth for a scene manifest.
    Simulate {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory (default: `<output root>/<name>/simulation`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode a frame set and fuse polarization with deflectometry.
    Reconstruct {
        /// Directory written by `simulate`.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        fusion: FusionArgs,
        /// Output directory (default: `reconstruction-<mode>` beside the input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a reconstruction with ground truth.
    Evaluate {
        #[arg(long)]
        solution: PathBuf,
        /// Directory written by `simulate`.
        #[arg(long)]
        truth: PathBuf,
        /// Output directory (default: `evaluation-<solution dir>` beside the solution).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Orthographic shape-from-polarization on the same frames, scored by
    /// its best-case candidate.
    Baseline {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        fusion: FusionArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every built-in scene end to end and print the summary table.
    Reproduce {
        /// Output root.
        #[arg(long, env = OUTPUT_ENV, default_value = "runs")]
        out: PathBuf,
    },
    /// Print a built-in scene manifest.
    Preset {
        /// bearing-ball, bearing-ball-noisy, bearing-ball-single, horse-like or bird-like.
        name: String,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sibling(dir: &Path, name: &str) -> PathBuf {
    match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.join(name),
        _ => PathBuf::from(name),
    }
}

fn dir_name(dir: &Path) -> String {
    dir.file_name()
        .map_or_else(|| "solution".into(), |n| n.to_string_lossy().into_owned())
}

fn apply_fusion_args(mut setup: Setup, args: &FusionArgs) -> Result<Setup> {
    if let Some(m) = args.model {
        setup = setup.with_model(m.into())?;
    }
    if args.strict_dop {
        setup.fusion.saturation = SaturationPolicy::Strict;
    }
    Ok(setup)
}

pub fn cmd_simulate(manifest: &SceneManifest, out: &Path) -> Result<()> {
    let setup = manifest.build()?;
    let json = manifest.to_json();
    let mut st = Staging::new(out)?;
    let sim = st.stage("simulate", |_| pipeline::simulate(&setup))?;
    st.stage("write", |st| {
        artifacts::write_manifest(st, manifest)?;
        artifacts::write_frames(st, &sim.frames)?;
        artifacts::write_truth(st, &sim.truth)
    })?;
    st.commit("simulate", &json)?;
    Ok(())
}

pub fn cmd_reconstruct(input: &Path, args: &FusionArgs, out: &Path) -> Result<SolutionInfo> {
    let manifest = artifacts::load_manifest(input)?;
    let setup = apply_fusion_args(manifest.build()?, args)?;
    let json = manifest.to_json();
    let frames = artifacts::load_frames(input)?;
    let mut st = Staging::new(out)?;
    let decoded = st.stage("decode", |_| pipeline::decode(&setup, &frames, args.mode))?;
    let fusion = st.stage("fuse", |_| pipeline::fuse(&setup, &decoded))?;
    let info = SolutionInfo {
        scene: setup.name.clone(),
        mode: args.mode,
        model: setup.scene.material.model,
        strict_dop: args.strict_dop,
        ok_fraction: fusion.summary.ok_fraction(),
        summary: fusion.summary,
        qualitative: setup.qualitative,
    };
    st.stage("write", |st| artifacts::write_solution(st, &info, &fusion, &decoded))?;
    st.commit("reconstruct", &json)?;
    Ok(info)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationFile {
    pub scene: String,
    pub mode: Mode,
    pub qualitative: bool,
    pub report: EvaluationReport,
    pub field_profile: Vec<ProfileBin>,
}

pub fn evaluate_dirs(
    solution_dir: &Path,
    truth_dir: &Path,
) -> Result<(SceneManifest, SolutionInfo, pipeline::Evaluation)> {
    let manifest = artifacts::load_manifest(truth_dir)?;
    let setup = manifest.build()?;
    let (info, solution) = artifacts::load_solution(solution_dir)?;
    if info.scene != setup.name {
        return Err(Error::data(format!(
            "solution belongs to scene {:?} but the truth directory holds {:?}",
            info.scene, setup.name
        )));
    }
    let truth = artifacts::load_truth(truth_dir)?;
    let ev = pipeline::evaluate(
        &setup.scene.camera,
        &solution,
        &truth.normals,
        &truth.depth,
        setup.reference_radius(),
    )?;
    Ok((manifest, info, ev))
}

pub fn cmd_evaluate(solution_dir: &Path, truth_dir: &Path, out: &Path) -> Result<EvaluationFile> {
    let (manifest, info, ev) = evaluate_dirs(solution_dir, truth_dir)?;
    let file = EvaluationFile {
        scene: info.scene,
        mode: info.mode,
        qualitative: info.qualitative,
        report: ev.report,
        field_profile: ev.profile,
    };
    let mut st = Staging::new(out)?;
    st.stage("write", |st| {
        st.write_json("report.json", &file)?;
        let err = ev.errors.map(|e| e.unwrap_or(f64::NAN));
        st.write("normal_error.pfm", &Pfm::grey(&err).encode())
    })?;
    st.commit("evaluate", &manifest.to_json())?;
    Ok(file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFile {
    pub scene: String,
    pub mode: Mode,
    pub model: DopModel,
    pub best_case: polardeflect_core::metrics::ErrorStats,
    pub field_profile: Vec<ProfileBin>,
}

/// Scores the orthographic baseline over `mask` (all ground-truth pixels
/// when `None`).
pub fn cmd_baseline(
    input: &Path,
    args: &FusionArgs,
    mask: Option<&polardeflect_core::Raster<bool>>,
    out: &Path,
) -> Result<BaselineFile> {
    let manifest = artifacts::load_manifest(input)?;
    let setup = apply_fusion_args(manifest.build()?, args)?;
    let frames = artifacts::load_frames(input)?;
    let truth = artifacts::load_truth(input)?;
    let mut st = Staging::new(out)?;
    let decoded = st.stage("decode", |_| pipeline::decode(&setup, &frames, args.mode))?;
    let all = truth.normals.map(|n| n.is_some());
    let b = st.stage("baseline", |_| {
        pipeline::baseline(&setup, &decoded.stokes, &truth.normals, mask.unwrap_or(&all))
    })?;
    let file = BaselineFile {
        scene: setup.name.clone(),
        mode: args.mode,
        model: setup.scene.material.model,
        best_case: b.stats,
        field_profile: b.profile.clone(),
    };
    st.stage("write", |st| {
        st.write_json("baseline.json", &file)?;
        st.write(
            "best_normals.pfm",
            &Pfm::rgb(&b.best.map(|n| n.map_or([f64::NAN; 3], |n| n.to_array()))).encode(),
        )?;
        st.write(
            "normal_error.pfm",
            &Pfm::grey(&b.errors.map(|e| e.unwrap_or(f64::NAN))).encode(),
        )
    })?;
    st.commit("baseline", &manifest.to_json())?;
    Ok(file)
}

/// One line of the reproduction table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scene: String,
    pub method: String,
    pub ok_fraction: Option<f64>,
    pub normal_rmse_deg: f64,
    pub normal_rmse_central_deg: Option<f64>,
    pub outer_bin_error_deg: Option<f64>,
    pub radius_error_um: Option<f64>,
    pub fitted_diameter_mm: Option<f64>,
    pub reference: String,
}

/// Hardware figures quoted for the bearing ball, shown beside the
/// simulated results.
pub const REFERENCE_NOISY: &str = "hardware: RMSE 0.6 deg; diameter 25.47 mm vs 25.4 mm (70 um)";
pub const REFERENCE_BALL: &str = "ball diameter 25.4 mm";

fn outer_bin(profile: &[ProfileBin]) -> Option<f64> {
    profile.last().map(|b| b.mean_error)
}

fn row_from(file: &EvaluationFile, method: &str, reference: &str) -> SummaryRow {
    let r = &file.report;
    SummaryRow {
        scene: file.scene.clone(),
        method: method.into(),
        ok_fraction: Some(r.status.ok_fraction()),
        normal_rmse_deg: r.normal.rmse,
        normal_rmse_central_deg: Some(r.normal_central.rmse),
        outer_bin_error_deg: outer_bin(&file.field_profile),
        radius_error_um: r.radius_error_um,
        fitted_diameter_mm: r.sphere.map(|s| 2.0 * s.radius),
        reference: reference.into(),
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.prec$}"))
}

pub fn render_table(rows: &[SummaryRow]) -> String {
    let header = [
        "scene",
        "method",
        "ok %",
        "RMSE deg",
        "central deg",
        "outer bin deg",
        "radius err um",
        "diameter mm",
        "reference",
    ];
    let cells: Vec<[String; 9]> = rows
        .iter()
        .map(|r| {
            [
                r.scene.clone(),
                r.method.clone(),
                opt(r.ok_fraction.map(|f| 100.0 * f), 2),
                format!("{:.4}", r.normal_rmse_deg),
                opt(r.normal_rmse_central_deg, 4),
                opt(r.outer_bin_error_deg, 4),
                opt(r.radius_error_um, 2),
                opt(r.fitted_diameter_mm, 4),
                r.reference.clone(),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for c in &cells {
        for (w, s) in widths.iter_mut().zip(c) {
            *w = (*w).max(s.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, items: Vec<&str>| {
        let parts: Vec<String> = items.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join(" | ").trim_end());
    };
    line(&mut out, header.to_vec());
    line(
        &mut out,
        widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str)
            .collect(),
    );
    for c in &cells {
        line(&mut out, c.iter().map(String::as_str).collect());
    }
    out
}

/// Runs every preset through simulate, reconstruct, evaluate (and the
/// baseline for the noiseless ball) under `root`.
pub fn cmd_reproduce(root: &Path) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    let multi = FusionArgs {
        mode: Mode::Multi,
        strict_dop: false,
        model: None,
    };
    let single = FusionArgs {
        mode: Mode::Single,
        ..multi.clone()
    };
    for preset in Preset::ALL {
        let manifest = preset.manifest();
        let stage = |e: Error| e.in_stage(preset.name());
        let base = root.join(preset.name());
        let sim = base.join("simulation");
        cmd_simulate(&manifest, &sim).map_err(stage)?;
        let args = if preset == Preset::BearingBallSingle {
            &single
        } else {
            &multi
        };
        let rec = base.join(format!("reconstruction-{}", args.mode.name()));
        cmd_reconstruct(&sim, args, &rec).map_err(stage)?;
        let eval = cmd_evaluate(&rec, &sim, &base.join("evaluation")).map_err(stage)?;
        let (method, reference) = match preset {
            Preset::BearingBall => ("fused, multi-shot", REFERENCE_BALL),
            Preset::BearingBallNoisy => ("fused, multi-shot, 0.5% noise", REFERENCE_NOISY),
            Preset::BearingBallSingle => ("fused, single-shot", REFERENCE_BALL),
            Preset::HorseLike | Preset::BirdLike => ("fused, multi-shot", "qualitative stand-in"),
        };
        rows.push(row_from(&eval, method, reference));
        if preset == Preset::BearingBall {
            let (_, solution) = artifacts::load_solution(&rec).map_err(stage)?;
            let mask = solution.normals.map(|n| n.is_some());
            let b = cmd_baseline(&sim, args, Some(&mask), &base.join("baseline")).map_err(stage)?;
            rows.push(SummaryRow {
                scene: b.scene,
                method: "orthographic, best case".into(),
                ok_fraction: None,
                normal_rmse_deg: b.best_case.rmse,
                normal_rmse_central_deg: None,
                outer_bin_error_deg: outer_bin(&b.field_profile),
                radius_error_um: None,
                fitted_diameter_mm: None,
                reference: "errors of ~5 deg up to 25 deg off-centre".into(),
            });
        }
    }
    let table = render_table(&rows);
    let mut st = Staging::new(&root.join("summary"))?;
    st.write_json("summary.json", &rows)?;
    st.write("summary.txt", table.as_bytes())?;
    st.commit("reproduce", "")?;
    Ok(rows)
}

fn default_sim_out(manifest: &SceneManifest) -> PathBuf {
    manifest.default_output().join("simulation")
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    let command = cli.command;
    pipeline::with_threads(threads, move || match command {
        Command::Simulate { manifest, out } => {
            let m = SceneManifest::load(&manifest)?;
            let out = out.unwrap_or_else(|| default_sim_out(&m));
            cmd_simulate(&m, &out)?;
            println!("{}", out.display());
            Ok(())
        }
        Command::Reconstruct { input, fusion, out } => {
            let out = out.unwrap_or_else(|| sibling(&input, &format!("reconstruction-{}", fusion.mode.name())));
            let info = cmd_reconstruct(&input, &fusion, &out)?;
            let s = info.summary;
            println!(
                "{}: {} of {} pixels ok ({:.2}%), no-root {}, both-feasible {}, saturated {}, invalid-decode {}, degenerate {}",
                out.display(),
                s.ok,
                s.masked,
                100.0 * info.ok_fraction,
                s.no_root,
                s.both_feasible,
                s.saturated_dop,
                s.invalid_decode,
                s.degenerate_geometry
            );
            Ok(())
        }
        Command::Evaluate { solution, truth, out } => {
            let out = out.unwrap_or_else(|| sibling(&solution, &format!("evaluation-{}", dir_name(&solution))));
            let f = cmd_evaluate(&solution, &truth, &out)?;
            let r = &f.report;
            println!(
                "normal RMSE {:.4} deg (central {:.4}, p95 {:.4}, max {:.4}); depth RMSE {:.4} mm",
                r.normal.rmse, r.normal_central.rmse, r.normal.p95, r.normal.max, r.depth.rmse
            );
            if let (Some(s), Some(e)) = (r.sphere, r.radius_error_um) {
                println!(
                    "sphere radius {:.5} mm (error {e:.2} um, residual {:.5} mm)",
                    s.radius, s.rms_residual
                );
            }
            Ok(())
        }
        Command::Baseline { input, fusion, out } => {
            let out = out.unwrap_or_else(|| sibling(&input, &format!("baseline-{}", fusion.mode.name())));
            let b = cmd_baseline(&input, &fusion, None, &out)?;
            println!("orthographic best-case RMSE {:.4} deg", b.best_case.rmse);
            for bin in &b.field_profile {
                println!(
                    "  field {:5.1}-{:5.1} deg: {:.4} deg ({} px)",
                    bin.lo, bin.hi, bin.mean_error, bin.count
                );
            }
            Ok(())
        }
        Command::Reproduce { out } => {
            let rows = cmd_reproduce(&out)?;
            print!("{}", render_table(&rows));
            Ok(())
        }
        Command::Preset { name, out } => {
            let p = Preset::from_name(&name).ok_or_else(|| {
                let known: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::config(format!("unknown preset {name:?} (known: {})", known.join(", ")))
            })?;
            let json = p.manifest().to_json();
            match out {
                Some(path) => std::fs::write(&path, json).map_err(|e| Error::io(&path, e)),
                None => {
                    print!("{json}");
                    Ok(())
                }
            }
        }
    })?
}

/// Identity check used by tests: a truth directory scored against itself.
pub fn truth_as_solution(truth: &TruthMaps) -> Solution {
    let normals = truth.normals.clone();
    let depth = truth.depth.clone();
    let masked = normals.as_slice().iter().filter(|n| n.is_some()).count();
    Solution {
        normals,
        depth,
        points: Vec::new(),
        summary: polardeflect_core::reconstruct::FusionSummary {
            masked,
            ok: masked,
            ..Default::default()
        },
    }
}
