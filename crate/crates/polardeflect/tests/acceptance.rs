//! End-to-end acceptance checks, one line per criterion.
//!
//! Failures are printed, not hidden. The process exits non-zero on failure
//! only when `POLARDEFLECT_ACCEPTANCE_STRICT` is set.

mod common;

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use common::*;
use polardeflect::manifest::{Preset, Setup};
use polardeflect::pipeline::{self, Evaluation, Mode, Simulation, Solution};
use polardeflect_core::geometry::{half_angle, reflect};
use polardeflect_core::metrics::ProfileBin;
use polardeflect_core::polarization::{
    dop_dielectric, dop_exact_fresnel, wrap_pi, DopInverter, SaturationPolicy, GRAZING_EPS,
};
use polardeflect_core::reconstruct::{solve_depth_for_theta, PixelStatus};
use polardeflect_core::simulator::response;
use polardeflect_core::{DopModel, OpticalMaterial, Vec3, WorkingDistance};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

struct Outcome {
    pass: bool,
    detail: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            pass: true,
            detail: Vec::new(),
        }
    }

    /// Records one measured quantity against its limit.
    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.detail.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }
}

struct Run {
    setup: Setup,
    sim: Simulation,
    eval: Evaluation,
    seconds: f64,
    fusion: polardeflect_core::reconstruct::FusionResult,
    stokes: polardeflect_core::Raster<polardeflect_core::StokesEstimate>,
}

fn end_to_end(preset: Preset, mode: Mode) -> Run {
    pipeline::with_threads(Some(1), || {
        let t = Instant::now();
        let setup = preset.manifest().build().unwrap();
        let sim = pipeline::simulate(&setup).unwrap();
        let dec = pipeline::decode(&setup, &sim.frames, mode).unwrap();
        let fusion = pipeline::fuse(&setup, &dec).unwrap();
        let solution = Solution::from_fusion(&fusion);
        let truth_depth = sim.truth.samples.map(|t| t.map(|t| t.s));
        let eval = pipeline::evaluate(
            &setup.scene.camera,
            &solution,
            &sim.truth.normals(),
            &truth_depth,
            setup.reference_radius(),
        )
        .unwrap();
        Run {
            seconds: t.elapsed().as_secs_f64(),
            setup,
            sim,
            eval,
            fusion,
            stokes: dec.stokes,
        }
    })
    .unwrap()
}

fn outermost(profile: &[ProfileBin]) -> &ProfileBin {
    profile.last().expect("non-empty profile")
}

fn noiseless(run: &Run) -> Outcome {
    let mut o = Outcome::new();
    let r = &run.eval.report;
    o.check(
        r.normal.rmse <= 0.05,
        format!("normal RMSE {:.3e} deg (limit 0.05)", r.normal.rmse),
    );
    let e = r.radius_error_um.unwrap();
    o.check(e.abs() <= 10.0, format!("radius error {e:.3} um (limit 10)"));
    o.check(
        run.seconds <= 60.0,
        format!("runtime {:.2} s on one thread (limit 60)", run.seconds),
    );
    o.check(
        run.setup.scene.camera.width == 512 && run.setup.scene.camera.height == 512,
        format!(
            "sensor {}x{}",
            run.setup.scene.camera.width, run.setup.scene.camera.height
        ),
    );
    o.detail.push(format!(
        "     {} of {} ball pixels solved",
        r.status.ok,
        run.sim.truth.hit_count()
    ));
    o
}

fn noisy(run: &Run) -> Outcome {
    let mut o = Outcome::new();
    let r = &run.eval.report;
    o.check(
        run.setup.noise.sigma == 0.005,
        format!("noise sigma {} of full scale", run.setup.noise.sigma),
    );
    o.check(
        r.normal.rmse <= 0.6,
        format!("normal RMSE {:.4} deg (limit 0.6)", r.normal.rmse),
    );
    let e = r.radius_error_um.unwrap();
    o.check(e.abs() <= 70.0, format!("radius error {e:.1} um (limit 70)"));
    o.detail.push(format!(
        "     depth RMSE {:.3} mm; fitted radius {:.3} mm",
        r.depth.rmse,
        r.sphere.map_or(f64::NAN, |s| s.radius)
    ));
    o
}

fn single_shot(run: &Run) -> Outcome {
    let mut o = Outcome::new();
    let r = &run.eval.report;
    o.check(
        r.normal.count > 0,
        format!("{} pixels inside the guard-trimmed mask", r.normal.count),
    );
    o.check(
        r.normal.rmse <= 2.0,
        format!("normal RMSE {:.4} deg (limit 2)", r.normal.rmse),
    );
    o
}

fn contrast(run: &Run) -> Outcome {
    let mut o = Outcome::new();
    let half_fov = Preset::BearingBall.manifest().camera.half_fov_deg;
    o.check(
        half_fov >= 15.0,
        format!("half field of view {half_fov:.1} deg (at least 15)"),
    );
    let mask = pipeline::ok_mask(&run.fusion);
    let b = pipeline::baseline(&run.setup, &run.stokes, &run.sim.truth.normals(), &mask).unwrap();
    let ob = outermost(&b.profile);
    let of = outermost(&run.eval.profile);
    o.check(
        ob.mean_error >= 5.0,
        format!(
            "orthographic best case {:.3} deg in field bin {:.1}-{:.1} deg (at least 5)",
            ob.mean_error, ob.lo, ob.hi
        ),
    );
    o.check(
        of.mean_error <= 0.1,
        format!(
            "fused {:.2e} deg in field bin {:.1}-{:.1} deg (limit 0.1)",
            of.mean_error, of.lo, of.hi
        ),
    );
    o
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn property<S: Strategy>(
    o: &mut Outcome,
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) {
    let r = runner(cases).run(&strategy, test);
    o.check(
        r.is_ok(),
        match r {
            Ok(()) => format!("{name} ({cases} cases)"),
            Err(e) => format!("{name}: {e}"),
        },
    );
}

fn properties(reference: &Run) -> Outcome {
    let mut o = Outcome::new();
    let materials = [
        OpticalMaterial::bearing_steel(),
        OpticalMaterial::chrome(),
        OpticalMaterial::bearing_steel()
            .with_model(DopModel::ExactFresnel)
            .unwrap(),
        OpticalMaterial::new(1.5, 0.0, DopModel::Dielectric).unwrap(),
        OpticalMaterial::new(1.33, 0.0, DopModel::Dielectric).unwrap(),
    ];
    property(
        &mut o,
        "DoP inversion round trip within 1e-6 rad, both branches, all models",
        1000,
        (0..materials.len(), 0.0f64..1.0),
        |(k, f)| {
            let mat = materials[k];
            let inv = DopInverter::new(mat);
            let peak = inv.theta_peak();
            let lo = 1e-3 + f * (peak - 2e-3);
            let hi = peak + 1e-3 + f * (FRAC_PI_2 - GRAZING_EPS - peak - 2e-3);
            let c = inv.invert(mat.dop(lo), 1e-7, SaturationPolicy::Strict);
            prop_assert!((c.low.unwrap() - lo).abs() <= 1e-6);
            let c = inv.invert(mat.dop(hi), 1e-7, SaturationPolicy::Strict);
            prop_assert!((c.high.unwrap() - hi).abs() <= 1e-6);
            Ok(())
        },
    );

    let interval = WorkingDistance::new(1.0, 1000.0).unwrap();
    property(
        &mut o,
        "incidence along the ray is monotone with a unique root",
        1000,
        (
            prop::array::uniform3(-1.0f64..1.0),
            prop::array::uniform3(-300.0f64..300.0),
            5.0f64..500.0,
        ),
        |(dir, dpt, s_true)| {
            let Some(d) = Vec3::new(dir[0], dir[1], dir[2].abs() + 0.2).normalize() else {
                return Ok(());
            };
            let dp = Vec3::from(dpt);
            let sp = d * s_true;
            prop_assume!((dp - sp).norm() > 1.0 && dp.cross(d).norm() > 1e-3 * dp.norm());
            let Ok(theta) = half_angle(sp, Vec3::ZERO, dp) else {
                return Err(TestCaseError::reject("grazing"));
            };
            prop_assume!(theta > 1e-3 && theta < FRAC_PI_2 - 1e-3);
            let mut prev = f64::INFINITY;
            for k in 0..100 {
                let s = 1.0 + 10.0 * k as f64;
                if let Ok(g) = half_angle(d * s, Vec3::ZERO, dp) {
                    prop_assert!(g < prev, "g not decreasing at s = {s}");
                    prev = g;
                }
            }
            let s = solve_depth_for_theta(Vec3::ZERO, d, dp, theta, &interval, 1e-6).unwrap();
            prop_assert!(matches!(s, Some(s) if (s - s_true).abs() <= 1e-6 + 1e-9 * s_true));
            Ok(())
        },
    );

    let (_, sim, dec) = run(&shrunk(Preset::BearingBall, 256), Mode::Multi);
    let (rms, n) = correspondence_rms(&sim.truth, &dec);
    o.check(
        rms <= 0.1,
        format!("multi-shot codec round trip {rms:.2e} display px RMS over {n} px (limit 0.1)"),
    );
    let (_, sim, dec) = run(&Preset::BearingBallSingle.manifest(), Mode::Single);
    let (rms, n) = correspondence_rms(&sim.truth, &dec);
    o.check(
        rms <= 0.1,
        format!("single-shot codec round trip on the ball {rms:.3} display px RMS over {n} px (limit 0.1)"),
    );
    let (_, sim, dec) = run(&flat_single_shot(), Mode::Single);
    let (rms, n) = correspondence_rms(&sim.truth, &dec);
    o.check(
        rms <= 0.1,
        format!("single-shot codec round trip on a flat mirror {rms:.3} display px RMS over {n} px (limit 0.1)"),
    );

    property(
        &mut o,
        "exact Fresnel equals the dielectric DoP at kappa = 0 within 1e-9",
        1000,
        (1.01f64..3.0, 0.0f64..FRAC_PI_2 - 1e-3),
        |(m, theta)| {
            let a = dop_exact_fresnel(theta, m, 0.0);
            let b = dop_dielectric(theta, m);
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            Ok(())
        },
    );

    // reflection law and AoLP on every traced pixel of the reference scene
    let scene = &reference.setup.scene;
    let stokes = reference.sim.frames[0]
        .stack
        .stokes(reference.setup.decode.dark_threshold);
    let (mut law, mut aolp) = (0.0f64, 0.0f64);
    for (x, y, t) in reference.sim.truth.samples.iter_xy() {
        let Some(t) = t else { continue };
        let out = reflect(t.ray, t.normal);
        let to_display = (t.display_point - t.point).normalize().unwrap();
        law = law.max(out.cross(to_display).norm()).max((t.normal.norm() - 1.0).abs());
        let s = stokes.get(x, y);
        if s.valid && s.dop > 1e-3 {
            let d = wrap_pi(s.aolp - response(scene, t).aolp);
            aolp = aolp.max(d.min(PI - d));
        }
    }
    o.check(law <= 1e-6, format!("reflection law residual {law:.1e} (limit 1e-6)"));
    o.check(
        aolp <= 1e-6,
        format!("rendered AoLP vs s-axis {aolp:.1e} rad (limit 1e-6)"),
    );

    let again = pipeline::simulate(&reference.setup).unwrap();
    let same = again.frames.len() == reference.sim.frames.len()
        && again.frames.iter().zip(&reference.sim.frames).all(|(a, b)| {
            a.stack.channels().iter().zip(b.stack.channels()).all(|(p, q)| {
                p.as_slice()
                    .iter()
                    .zip(q.as_slice())
                    .all(|(u, v)| u.to_bits() == v.to_bits())
            })
        });
    o.check(same, "rerendered frames are bit-identical".into());
    o
}

fn degeneracy() -> Outcome {
    let mut o = Outcome::new();
    let (setup, _, dec) = run(&retro_mirror(), Mode::Multi);
    let fusion = pipeline::fuse(&setup, &dec).unwrap();
    let c = fusion.solutions.get(4, 4).unwrap();
    let filled = Solution::from_fusion(&fusion).normals.get(4, 4).is_some();
    o.check(
        c.status != PixelStatus::Ok && c.surface.is_none() && !filled,
        format!("retro-reflecting pixel reported as {}", c.status.name()),
    );

    let setup = saturating_ball(128);
    let sim = pipeline::simulate(&setup).unwrap();
    let dec = pipeline::decode(&setup, &sim.frames, Mode::Multi).unwrap();
    let rho_max = DopInverter::new(setup.scene.material).rho_max();
    for policy in [SaturationPolicy::Clamp, SaturationPolicy::Strict] {
        let mut s = setup.clone();
        s.fusion.saturation = policy;
        let fusion = pipeline::fuse(&s, &dec).unwrap();
        let normals = Solution::from_fusion(&fusion).normals;
        let (mut over, mut flagged) = (0, 0);
        for (x, y, t) in sim.truth.samples.iter_xy() {
            let Some(t) = t else { continue };
            if response(&setup.scene, t).dop() > rho_max + 1e-3 {
                over += 1;
                let p = fusion.solutions.get(x, y).unwrap();
                if p.status == PixelStatus::SaturatedDop && normals.get(x, y).is_none() {
                    flagged += 1;
                }
            }
        }
        o.check(
            over > 0 && flagged == over,
            format!("{policy:?} policy: {flagged} of {over} over-range pixels flagged saturated-dop"),
        );
    }
    o
}

fn main() {
    let t = Instant::now();
    let ball = end_to_end(Preset::BearingBall, Mode::Multi);
    let noisy_ball = end_to_end(Preset::BearingBallNoisy, Mode::Multi);
    let single = end_to_end(Preset::BearingBallSingle, Mode::Single);

    let criteria: [(&str, Outcome); 6] = [
        ("1 noiseless multi-shot bearing ball", noiseless(&ball)),
        ("2 multi-shot bearing ball with 0.5% noise", noisy(&noisy_ball)),
        ("3 single-shot cross-sinusoid", single_shot(&single)),
        ("4 orthographic contrast at the field edge", contrast(&ball)),
        ("5 property suites", properties(&ball)),
        ("6 degeneracy flags", degeneracy()),
    ];
    let mut failed = 0;
    for (name, o) in &criteria {
        println!("[{}] criterion {name}", if o.pass { "PASS" } else { "FAIL" });
        for d in &o.detail {
            println!("    {d}");
        }
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1} s",
        criteria.len() - failed,
        criteria.len(),
        t.elapsed().as_secs_f64()
    );
    if failed > 0 && std::env::var_os("POLARDEFLECT_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
