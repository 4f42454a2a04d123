//! Scene manifests: the JSON document that fully determines a run.

use std::fs;
use std::path::{Path, PathBuf};

use polardeflect_core::codec::{AxisSet, PatternKind, PatternSpec};
use polardeflect_core::reconstruct::FusionConfig;
use polardeflect_core::simulator::{
    procedural_heightfield, NoiseModel, ProceduralShape, Scene, Surface, SynthesisModel,
};
use polardeflect_core::{
    DisplayPlane, DopModel, OpticalMaterial, PinholeCamera, RigidTransform, Vec3, WorkingDistance,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default output root when neither `--out` nor the manifest names one.
pub const OUTPUT_ENV: &str = "POLARDEFLECT_OUT";

pub const UNITS: &str =
    "lengths in mm, angles in degrees, display size in display pixels, noise sigma as a fraction of full scale";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    /// Horizontal half field of view.
    pub half_fov_deg: f64,
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    /// Direction the image `y` axis should point along.
    #[serde(default = "default_down")]
    pub down: [f64; 3],
}

fn default_down() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplaySpec {
    pub center: [f64; 3],
    /// Emission direction (panel normal).
    pub facing: [f64; 3],
    /// Approximate direction of the panel's `u` (column) axis.
    pub u_hint: [f64; 3],
    /// Pixel pitch, mm.
    pub pitch: f64,
    pub width_px: usize,
    pub height_px: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SurfaceSpec {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
    },
    /// Stand-in relief object on a square grid, its local `+z` along
    /// `normal`.
    Procedural {
        shape: ProceduralShape,
        size: f64,
        grid: usize,
        center: [f64; 3],
        normal: [f64; 3],
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    /// `bearing-steel` or `chrome`; exclusive with `m`/`kappa`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// DoP model used for inversion. Defaults to `metal` when `kappa > 0`,
    /// else `dielectric`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<DopModel>,
}

pub const MATERIAL_PRESETS: [&str; 2] = ["bearing-steel", "chrome"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub photon: bool,
    #[serde(default)]
    pub bits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSpec {
    /// Minimum frame-mean `s0` for a pixel to count as lit.
    pub dark_threshold: f64,
    /// Minimum fringe amplitude (in `s0` units).
    pub modulation_threshold: f64,
    /// Largest accepted unwrapping disagreement, rad.
    pub unwrap_residual: f64,
    /// Pixels trimmed from the image border and from the edge of the lit
    /// region in single-shot decoding.
    pub guard: usize,
    /// Single-shot pass-band radius in cycles; automatic when absent.
    pub bandwidth: Option<f64>,
}

impl Default for DecodeSpec {
    fn default() -> Self {
        Self {
            dark_threshold: 0.02,
            modulation_threshold: 0.02,
            unwrap_residual: 1.0,
            guard: 3,
            bandwidth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    #[serde(default = "default_units")]
    pub units: String,
    pub name: String,
    pub camera: CameraSpec,
    pub display: DisplaySpec,
    /// `[s_min, s_max]` along each camera ray, mm.
    pub working_distance: [f64; 2],
    pub surface: SurfaceSpec,
    pub material: MaterialSpec,
    #[serde(default)]
    pub synthesis: SynthesisModel,
    pub pattern: PatternSpec,
    /// Low-frequency phase-shift frames used to unwrap a single-shot decode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PatternSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub decode: DecodeSpec,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Marks stand-in objects whose results are for inspection only.
    #[serde(default)]
    pub qualitative: bool,
}

fn default_units() -> String {
    UNITS.to_string()
}

/// Everything a manifest resolves to.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub name: String,
    pub scene: Scene,
    pub pattern: PatternSpec,
    pub prior: Option<PatternSpec>,
    pub noise: NoiseModel,
    pub decode: DecodeSpec,
    pub fusion: FusionConfig,
    pub qualitative: bool,
}

impl Setup {
    /// Radius of the measured object when it is a sphere.
    pub fn reference_radius(&self) -> Option<f64> {
        match self.scene.surface {
            Surface::Sphere { radius, .. } => Some(radius),
            _ => None,
        }
    }

    pub fn with_model(mut self, model: DopModel) -> Result<Self> {
        self.scene.material = self.scene.material.with_model(model).map_err(Error::config)?;
        Ok(self)
    }
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn finite3(a: &[f64; 3]) -> bool {
    a.iter().all(|v| v.is_finite())
}

impl MaterialSpec {
    pub fn resolve(&self) -> Result<OpticalMaterial> {
        let base = match (&self.preset, self.m, self.kappa) {
            (Some(p), None, None) => match p.as_str() {
                "bearing-steel" => OpticalMaterial::bearing_steel(),
                "chrome" => OpticalMaterial::chrome(),
                other => {
                    return Err(Error::config(format!(
                        "material.preset: unknown preset {other:?} (known: {})",
                        MATERIAL_PRESETS.join(", ")
                    )))
                }
            },
            (Some(_), _, _) => return Err(Error::config("material: give either a preset or m/kappa, not both")),
            (None, Some(m), kappa) => {
                let kappa = kappa.unwrap_or(0.0);
                let model = if kappa > 0.0 {
                    DopModel::Metal
                } else {
                    DopModel::Dielectric
                };
                OpticalMaterial { m, kappa, model }
            }
            (None, None, _) => return Err(Error::config("material: needs a preset or a refractive index m")),
        };
        let model = self.model.unwrap_or(base.model);
        OpticalMaterial::new(base.m, base.kappa, model).map_err(|e| Error::config(format!("material: {e}")))
    }
}

impl SurfaceSpec {
    fn build(&self) -> Result<Surface> {
        let s = match self {
            SurfaceSpec::Sphere { center, radius } => {
                if !finite3(center) {
                    return Err(Error::config("surface.center must be finite"));
                }
                Surface::Sphere {
                    center: v3(*center),
                    radius: *radius,
                }
            }
            SurfaceSpec::Plane { point, normal } => {
                if !finite3(point) || !finite3(normal) {
                    return Err(Error::config("surface: plane point and normal must be finite"));
                }
                Surface::Plane {
                    point: v3(*point),
                    normal: v3(*normal),
                }
            }
            SurfaceSpec::Procedural {
                shape,
                size,
                grid,
                center,
                normal,
            } => {
                if !(*size > 0.0 && size.is_finite()) || *grid < 4 {
                    return Err(Error::config(
                        "surface: procedural size must be positive and grid at least 4",
                    ));
                }
                if !finite3(center) || !finite3(normal) {
                    return Err(Error::config("surface: procedural center and normal must be finite"));
                }
                let (c, n) = (v3(*center), v3(*normal));
                let hint = if n.cross(Vec3::Y).norm() > 1e-6 * n.norm() {
                    Vec3::Y
                } else {
                    Vec3::X
                };
                let frame = RigidTransform::look_at(c, c + n, hint)
                    .map_err(|e| Error::config(format!("surface.normal: {e}")))?;
                Surface::Heightfield(
                    procedural_heightfield(*shape, *size, *grid, frame)
                        .map_err(|e| Error::config(format!("surface: {e}")))?,
                )
            }
        };
        s.validate().map_err(|e| Error::config(format!("surface: {e}")))?;
        Ok(s)
    }
}

impl SceneManifest {
    /// Parses JSON, reporting schema errors with the path of the offending
    /// field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(format!("manifest schema error at `{path}`: {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Semantic validation and construction of every scene object.
    pub fn build(&self) -> Result<Setup> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name must be non-empty and free of path separators"));
        }
        let c = &self.camera;
        if !(c.half_fov_deg > 0.0 && c.half_fov_deg < 80.0) {
            return Err(Error::config("camera.half_fov_deg must lie in (0, 80)"));
        }
        if !(finite3(&c.position) && finite3(&c.look_at) && finite3(&c.down)) {
            return Err(Error::config("camera vectors must be finite"));
        }
        let pose = RigidTransform::look_at(v3(c.position), v3(c.look_at), v3(c.down))
            .map_err(|e| Error::config(format!("camera: {e}")))?;
        let camera = PinholeCamera::from_half_fov(c.half_fov_deg.to_radians(), c.width, c.height, pose)
            .map_err(|e| Error::config(format!("camera: {e}")))?;

        let d = &self.display;
        if !(finite3(&d.center) && finite3(&d.facing) && finite3(&d.u_hint)) {
            return Err(Error::config("display vectors must be finite"));
        }
        let display = DisplayPlane::centered(
            v3(d.center),
            v3(d.facing),
            v3(d.u_hint),
            d.pitch,
            d.width_px,
            d.height_px,
        )
        .map_err(|e| Error::config(format!("display: {e}")))?;

        let [s_min, s_max] = self.working_distance;
        let working =
            WorkingDistance::new(s_min, s_max).map_err(|e| Error::config(format!("working_distance: {e}")))?;
        let surface = self.surface.build()?;
        let material = self.material.resolve()?;

        self.pattern
            .validate()
            .map_err(|e| Error::config(format!("pattern: {e}")))?;
        if let Some(prior) = &self.prior {
            prior.validate().map_err(|e| Error::config(format!("prior: {e}")))?;
            match &prior.kind {
                PatternKind::PhaseShift { frequencies, .. } if frequencies == &[1.0] && prior.axes == AxisSet::Both => {
                }
                _ => {
                    return Err(Error::config(
                        "prior: must be a single-frequency (1 cycle) phase shift on both axes",
                    ))
                }
            }
        }
        match &self.pattern.kind {
            PatternKind::PhaseShift { frequencies, .. } => {
                if self.pattern.axes != AxisSet::Both {
                    return Err(Error::config("pattern.axes: reconstruction needs both display axes"));
                }
                if frequencies.len() > 1 {
                    for w in frequencies.windows(2) {
                        let r = w[1] / w[0];
                        if !(r >= 1.0 && r.fract() == 0.0) {
                            return Err(Error::config("pattern.frequencies: successive ratios must be integers"));
                        }
                    }
                } else if frequencies[0] != 1.0 {
                    return Err(Error::config("pattern.frequencies: a single frequency must be 1 cycle"));
                }
            }
            PatternKind::CrossSinusoid { carrier_u, carrier_v } => {
                if self.prior.is_none() {
                    return Err(Error::config(
                        "prior: a cross-sinusoid pattern needs prior frames for unwrapping",
                    ));
                }
                if carrier_u.fract() != 0.0 || carrier_v.fract() != 0.0 {
                    return Err(Error::config("pattern: cross-sinusoid carriers must be whole cycles"));
                }
            }
        }

        let noise = NoiseModel {
            sigma: self.noise.sigma,
            photon: self.noise.photon,
            bits: self.noise.bits,
            seed: self.seed,
        };
        noise.validate().map_err(|e| Error::config(format!("noise: {e}")))?;
        let dc = &self.decode;
        if !(dc.dark_threshold >= 0.0 && dc.modulation_threshold >= 0.0 && dc.unwrap_residual > 0.0) {
            return Err(Error::config(
                "decode: thresholds must be non-negative and unwrap_residual positive",
            ));
        }
        if matches!(dc.bandwidth, Some(b) if !(b > 0.0)) {
            return Err(Error::config("decode.bandwidth must be positive"));
        }
        self.fusion
            .validate()
            .map_err(|e| Error::config(format!("fusion: {e}")))?;

        Ok(Setup {
            name: self.name.clone(),
            scene: Scene {
                camera,
                display,
                working,
                surface,
                material,
                synthesis: self.synthesis,
            },
            pattern: self.pattern.clone(),
            prior: self.prior.clone(),
            noise,
            decode: *dc,
            fusion: self.fusion,
            qualitative: self.qualitative,
        })
    }

    /// Output directory: the manifest's own setting, else `$POLARDEFLECT_OUT/<name>`,
    /// else `runs/<name>`.
    pub fn default_output(&self) -> PathBuf {
        if let Some(p) = &self.output {
            return p.clone();
        }
        let root = std::env::var_os(OUTPUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(&self.name)
    }
}

/// Built-in scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Steel ball, 16-frame phase shift, model-matched and noiseless.
    BearingBall,
    /// Same ball, exact Fresnel rendering with 0.5 % sensor noise.
    BearingBallNoisy,
    /// Same ball seen by a narrower camera through one cross-sinusoid frame.
    BearingBallSingle,
    HorseLike,
    BirdLike,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::BearingBall,
        Preset::BearingBallNoisy,
        Preset::BearingBallSingle,
        Preset::HorseLike,
        Preset::BirdLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::BearingBall => "bearing-ball",
            Preset::BearingBallNoisy => "bearing-ball-noisy",
            Preset::BearingBallSingle => "bearing-ball-single",
            Preset::HorseLike => "horse-like",
            Preset::BirdLike => "bird-like",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn manifest(self) -> SceneManifest {
        match self {
            Preset::BearingBall => bearing_ball(),
            Preset::BearingBallNoisy => {
                let mut m = bearing_ball();
                m.name = self.name().into();
                m.synthesis = SynthesisModel::ExactFresnel;
                m.material.model = Some(DopModel::ExactFresnel);
                m.noise.sigma = 0.005;
                m.seed = 7;
                m
            }
            Preset::BearingBallSingle => {
                let mut m = bearing_ball();
                m.name = self.name().into();
                m.camera.width = 256;
                m.camera.height = 256;
                m.camera.half_fov_deg = 0.4;
                m.camera.look_at = [39.75, 0.0, 150.0];
                m.decode.guard = 6;
                m.pattern = PatternSpec {
                    kind: PatternKind::CrossSinusoid {
                        carrier_u: 60.0,
                        carrier_v: 120.0,
                    },
                    axes: AxisSet::Both,
                    mean: 0.5,
                    depth: 0.5,
                };
                m.prior = Some(PatternSpec {
                    kind: PatternKind::PhaseShift {
                        steps: 4,
                        frequencies: vec![1.0],
                    },
                    axes: AxisSet::Both,
                    mean: 0.5,
                    depth: 0.5,
                });
                m
            }
            Preset::HorseLike => relief(ProceduralShape::HorseLike, self.name()),
            Preset::BirdLike => relief(ProceduralShape::BirdLike, self.name()),
        }
    }
}

/// Display centre and facing for an object at `object` seen from the origin:
/// `distance` mm away from the object, `angle_deg` around the `y` axis from
/// the object→camera direction, towards `+x`.
fn display_beside(object: [f64; 3], angle_deg: f64, distance: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let back = (-object[0]).atan2(-object[2]);
    let a = back - angle_deg.to_radians();
    let dir = [a.sin(), 0.0, a.cos()];
    let center = [object[0] + distance * dir[0], object[1], object[2] + distance * dir[2]];
    let facing = [-dir[0], 0.0, -dir[2]];
    // u = y × facing
    let u = [facing[2], 0.0, -facing[0]];
    (center, facing, u)
}

fn base_manifest(name: &str, object: [f64; 3], surface: SurfaceSpec) -> SceneManifest {
    let (center, facing, u_hint) = display_beside(object, 110.0, 150.0);
    SceneManifest {
        units: default_units(),
        name: name.into(),
        camera: CameraSpec {
            width: 512,
            height: 512,
            half_fov_deg: 16.0,
            position: [0.0; 3],
            look_at: [0.0, 0.0, 1.0],
            down: default_down(),
        },
        display: DisplaySpec {
            center,
            facing,
            u_hint,
            pitch: 0.25,
            width_px: 800,
            height_px: 600,
        },
        working_distance: [120.0, 300.0],
        surface,
        material: MaterialSpec {
            preset: Some("bearing-steel".into()),
            ..Default::default()
        },
        synthesis: SynthesisModel::ModelMatched,
        pattern: PatternSpec::multi_shot_default(),
        prior: None,
        noise: NoiseSpec::default(),
        seed: 1,
        decode: DecodeSpec::default(),
        fusion: FusionConfig::default(),
        output: None,
        qualitative: false,
    }
}

fn bearing_ball() -> SceneManifest {
    let field = 11f64.to_radians();
    let center = [150.0 * field.sin(), 0.0, 150.0 * field.cos()];
    base_manifest(
        Preset::BearingBall.name(),
        center,
        SurfaceSpec::Sphere { center, radius: 12.7 },
    )
}

fn relief(shape: ProceduralShape, name: &str) -> SceneManifest {
    let center = [0.0, 0.0, 150.0];
    let mut m = base_manifest(name, center, SurfaceSpec::Sphere { center, radius: 1.0 });
    let (_, facing, _) = display_beside(center, 110.0, 150.0);
    // bisector of the directions to the camera and to the display
    let n = [-facing[0], 0.0, -1.0 - facing[2]];
    m.surface = SurfaceSpec::Procedural {
        shape,
        size: 40.0,
        grid: 97,
        center,
        normal: n,
    };
    m.qualitative = true;
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build_and_round_trip() {
        for p in Preset::ALL {
            let m = p.manifest();
            assert_eq!(m.name, p.name());
            m.build().unwrap();
            let back = SceneManifest::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m);
            assert_eq!(Preset::from_name(p.name()), Some(p));
        }
    }

    #[test]
    fn schema_errors_name_the_path() {
        let mut v: serde_json::Value = serde_json::from_str(&Preset::BearingBall.manifest().to_json()).unwrap();
        v["camera"]["width"] = serde_json::json!("wide");
        let err = SceneManifest::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("camera.width"), "{err}");
        assert_eq!(err.exit_code(), 2);

        let mut v: serde_json::Value = serde_json::from_str(&Preset::BearingBall.manifest().to_json()).unwrap();
        v["display"]["colour"] = serde_json::json!(1);
        let err = SceneManifest::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn semantic_errors() {
        let mut m = Preset::BearingBall.manifest();
        m.material.preset = Some("gold".into());
        assert!(m.build().unwrap_err().to_string().contains("gold"));

        let mut m = Preset::BearingBall.manifest();
        m.working_distance = [300.0, 100.0];
        assert!(m.build().is_err());

        let mut m = Preset::BearingBallSingle.manifest();
        m.prior = None;
        assert!(m.build().is_err());

        let mut m = Preset::BearingBall.manifest();
        m.pattern.kind = PatternKind::PhaseShift {
            steps: 4,
            frequencies: vec![1.0, 6.0, 16.0],
        };
        assert!(m.build().is_err());
    }

    #[test]
    fn material_resolution() {
        let steel = MaterialSpec {
            preset: Some("bearing-steel".into()),
            ..Default::default()
        };
        assert_eq!(steel.resolve().unwrap(), OpticalMaterial::bearing_steel());
        let glass = MaterialSpec {
            m: Some(1.5),
            ..Default::default()
        };
        assert_eq!(glass.resolve().unwrap().model, DopModel::Dielectric);
        let both = MaterialSpec {
            preset: Some("chrome".into()),
            m: Some(2.0),
            ..Default::default()
        };
        assert!(both.resolve().is_err());
    }
}
