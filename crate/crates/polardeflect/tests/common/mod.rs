#![allow(dead_code)]

use polardeflect::manifest::{DisplaySpec, Preset, SceneManifest, Setup, SurfaceSpec};
use polardeflect::pipeline::{self, Decoded, Mode, Simulation};
use polardeflect_core::codec::PatternKind;
use polardeflect_core::simulator::GroundTruth;
use polardeflect_core::DopModel;

/// A preset with a smaller square sensor, same field of view.
pub fn shrunk(preset: Preset, size: usize) -> SceneManifest {
    let mut m = preset.manifest();
    m.camera.width = size;
    m.camera.height = size;
    m
}

/// Camera looking straight at a mirror, display coaxial behind the camera,
/// odd sensor so the centre pixel lies on the optical axis.
pub fn retro_mirror() -> SceneManifest {
    let mut m = Preset::BearingBall.manifest();
    m.name = "retro-mirror".into();
    m.camera.width = 9;
    m.camera.height = 9;
    m.camera.half_fov_deg = 2.0;
    m.camera.look_at = [0.0, 0.0, 1.0];
    m.surface = SurfaceSpec::Plane {
        point: [0.0, 0.0, 150.0],
        normal: [0.0, 0.0, -1.0],
    };
    m.display = DisplaySpec {
        center: [0.0, 0.0, -1.0],
        facing: [0.0, 0.0, 1.0],
        u_hint: [1.0, 0.0, 0.0],
        ..m.display
    };
    m
}

/// Bearing ball rendered with exact Fresnel but inverted with the simpler
/// metal model, whose DoP ceiling is far lower.
pub fn saturating_ball(size: usize) -> Setup {
    let mut m = shrunk(Preset::BearingBall, size);
    m.name = "saturating-ball".into();
    m.synthesis = polardeflect_core::simulator::SynthesisModel::ExactFresnel;
    m.build().unwrap().with_model(DopModel::Metal).unwrap()
}

/// Flat mirror filling a narrow view, cross-sinusoid with fine carriers.
pub fn flat_single_shot() -> SceneManifest {
    let mut m = Preset::BearingBallSingle.manifest();
    let relief = Preset::HorseLike.manifest();
    let SurfaceSpec::Procedural { center, normal, .. } = relief.surface else {
        unreachable!()
    };
    m.name = "flat-single-shot".into();
    m.surface = SurfaceSpec::Plane { point: center, normal };
    m.camera = relief.camera;
    m.camera.width = 128;
    m.camera.height = 128;
    m.camera.half_fov_deg = 4.0;
    m.decode.guard = 8;
    m.pattern.kind = PatternKind::CrossSinusoid {
        carrier_u: 60.0,
        carrier_v: 45.0,
    };
    m
}

pub fn run(m: &SceneManifest, mode: Mode) -> (Setup, Simulation, Decoded) {
    let setup = m.build().unwrap();
    let sim = pipeline::simulate(&setup).unwrap();
    let dec = pipeline::decode(&setup, &sim.frames, mode).unwrap();
    (setup, sim, dec)
}

/// RMS distance in display pixels between decoded and true correspondence,
/// and the number of pixels compared.
pub fn correspondence_rms(truth: &GroundTruth, dec: &Decoded) -> (f64, usize) {
    let c = &dec.correspondence;
    let (mut se, mut n) = (0.0, 0);
    for (x, y, t) in truth.samples.iter_xy() {
        if let Some(t) = t {
            if *c.valid.get(x, y) {
                let [i, j] = *c.coords.get(x, y);
                se += (i - t.display_ij[0]).powi(2) + (j - t.display_ij[1]).powi(2);
                n += 1;
            }
        }
    }
    ((se / n.max(1) as f64).sqrt(), n)
}
