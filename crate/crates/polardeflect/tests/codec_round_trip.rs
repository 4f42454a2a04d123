mod common;

use common::*;
use polardeflect::manifest::Preset;
use polardeflect::pipeline::{self, Mode};
use polardeflect_core::codec::{display_phase, PatternKind, PatternSpec};

#[test]
fn multi_shot_recovers_display_points() {
    let (_, sim, dec) = run(&shrunk(Preset::BearingBall, 256), Mode::Multi);
    let (rms, n) = correspondence_rms(&sim.truth, &dec);
    assert!(n > 300 && n == sim.truth.hit_count(), "{n}");
    assert!(rms <= 0.1, "rms {rms} px");
}

#[test]
fn single_shot_on_flat_mirror() {
    let (_, sim, dec) = run(&flat_single_shot(), Mode::Single);
    let (rms, n) = correspondence_rms(&sim.truth, &dec);
    assert!(n > 5000, "{n}");
    assert!(rms <= 0.1, "rms {rms} px");
}

#[test]
fn single_shot_on_sphere_matches_multi_shot_phase() {
    let m = Preset::BearingBallSingle.manifest();
    let PatternKind::CrossSinusoid { carrier_u, carrier_v } = m.pattern.kind else {
        unreachable!()
    };
    let (setup, sim, single) = run(&m, Mode::Single);
    let (rms, n) = correspondence_rms(&sim.truth, &single);
    assert!(n as f64 > 0.5 * sim.truth.hit_count() as f64, "{n}");
    assert!(rms <= 0.1, "rms {rms} px");

    let mut mm = m.clone();
    mm.pattern = PatternSpec::multi_shot_default();
    mm.prior = None;
    let (_, _, multi) = run(&mm, Mode::Multi);
    let d = &setup.scene.display;
    let (mut se, mut k) = (0.0, 0);
    for (x, y, &[i, j]) in single.correspondence.coords.iter_xy() {
        if !*single.correspondence.valid.get(x, y) || !*multi.correspondence.valid.get(x, y) {
            continue;
        }
        let [mi, mj] = *multi.correspondence.coords.get(x, y);
        let du = display_phase(i, carrier_u, d.width) - display_phase(mi, carrier_u, d.width);
        let dv = display_phase(j, carrier_v, d.height) - display_phase(mj, carrier_v, d.height);
        se += 0.5 * (du * du + dv * dv);
        k += 1;
    }
    let rad = (se / k as f64).sqrt();
    assert!(k == n, "{k} vs {n}");
    assert!(rad <= 0.05, "cross-method {rad} rad");
}

#[test]
fn decoding_ignores_global_intensity_scale() {
    let (setup, mut sim, dec) = run(&shrunk(Preset::BearingBall, 96), Mode::Multi);
    for f in &mut sim.frames {
        for ch in f.stack.channels_mut() {
            ch.as_mut_slice().iter_mut().for_each(|v| *v *= 3.0);
        }
    }
    let scaled = pipeline::decode(&setup, &sim.frames, Mode::Multi).unwrap();
    for (a, b) in dec
        .correspondence
        .coords
        .as_slice()
        .iter()
        .zip(scaled.correspondence.coords.as_slice())
    {
        assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
    }
}
