//! Spectral transform backed by `rustfft`.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use polardeflect_core::codec::SpectralTransform;
use rustfft::{Fft, FftDirection, FftPlanner};

/// Row-column 2-D FFT. Plans are cached per length and direction.
pub struct RustFft {
    planner: FftPlanner<f64>,
    plans: HashMap<(usize, bool), Arc<dyn Fft<f64>>>,
}

impl Default for RustFft {
    fn default() -> Self {
        Self {
            planner: FftPlanner::new(),
            plans: HashMap::new(),
        }
    }
}

impl RustFft {
    pub fn new() -> Self {
        Self::default()
    }

    fn plan(&mut self, n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
        let planner = &mut self.planner;
        self.plans
            .entry((n, forward))
            .or_insert_with(|| {
                let dir = if forward {
                    FftDirection::Forward
                } else {
                    FftDirection::Inverse
                };
                planner.plan_fft(n, dir)
            })
            .clone()
    }

    fn run(&mut self, data: &mut [Complex64], width: usize, height: usize, forward: bool) {
        let rows = self.plan(width, forward);
        rows.process(data);
        let cols = self.plan(height, forward);
        let mut col = vec![Complex64::new(0.0, 0.0); height];
        for x in 0..width {
            for y in 0..height {
                col[y] = data[y * width + x];
            }
            cols.process(&mut col);
            for y in 0..height {
                data[y * width + x] = col[y];
            }
        }
    }
}

impl SpectralTransform for RustFft {
    fn forward(&mut self, data: &mut [Complex64], width: usize, height: usize) {
        self.run(data, width, height, true);
    }

    fn inverse(&mut self, data: &mut [Complex64], width: usize, height: usize) {
        self.run(data, width, height, false);
    }
}
