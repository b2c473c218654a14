//! Dryden turbulence, low-altitude MIL-F-8785C parameterisation.
//!
//! Scale lengths and intensities (h in feet, clamped to the low-altitude
//! band 10..1000 ft):
//!
//! ```text
//! L_w = h            L_u = L_v = h / (0.177 + 0.000823 h)^1.2
//! σ_w = 0.1 W20      σ_u = σ_v = σ_w / (0.177 + 0.000823 h)^0.4
//! ```
//!
//! Forming filters, with V the vehicle airspeed:
//!
//! ```text
//! H_u(s) ∝ 1 / (1 + (L_u/V) s)
//! H_v(s) ∝ (1 + √3 (L_v/V) s) / (1 + (L_v/V) s)²      (same for w with L_w)
//! ```
//!
//! Each filter is discretised with the bilinear transform at the simulation
//! timestep and driven by unit Gaussian noise. The discrete gain is set so
//! the stationary output variance equals σ² exactly.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::flight::Vec3;

const FT: f64 = 0.3048;
/// Airspeed floor for the forming filters (the Dryden form is singular at V = 0).
pub const MIN_TURBULENCE_AIRSPEED: f64 = 1.0;
const SPIN_UP_TIME_CONSTANTS: f64 = 5.0;
const MAX_SPIN_UP_STEPS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrydenParams {
    /// Height above ground, m.
    pub altitude: f64,
    /// Mean wind speed at 6 m (20 ft), m/s.
    pub mean_wind_speed_6m: f64,
    /// Vehicle airspeed used to map spatial scales to time, m/s.
    pub airspeed: f64,
    /// Simulation timestep, s.
    pub timestep: f64,
}

/// `(σ_u, σ_v, σ_w)` in m/s and `(L_u, L_v, L_w)` in meters.
pub fn dryden_sigmas(altitude: f64, w20: f64) -> ([f64; 3], [f64; 3]) {
    let h = (altitude / FT).clamp(10.0, 1000.0);
    let base = 0.177 + 0.000823 * h;
    let lw = h * FT;
    let lu = h / base.powf(1.2) * FT;
    let sw = 0.1 * w20;
    let su = sw / base.powf(0.4);
    ([su, su, sw], [lu, lu, lw])
}

/// Second-order IIR section in direct form I, denominator normalised (a0 = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 3],
    x: [f64; 2],
    y: [f64; 2],
}

impl Biquad {
    /// Bilinear transform of `(n0 + n1 s + n2 s²) / (d0 + d1 s + d2 s²)`.
    fn bilinear(num: [f64; 3], den: [f64; 3], dt: f64) -> Self {
        let c = 2.0 / dt;
        let map = |p: [f64; 3]| {
            [
                p[0] + p[1] * c + p[2] * c * c,
                2.0 * p[0] - 2.0 * p[2] * c * c,
                p[0] - p[1] * c + p[2] * c * c,
            ]
        };
        let (b, a) = (map(num), map(den));
        Self {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [1.0, a[1] / a[0], a[2] / a[0]],
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    /// Bilinear transform of `(n0 + n1 s) / (d0 + d1 s)` as a first-order section.
    fn bilinear_first_order(num: [f64; 2], den: [f64; 2], dt: f64) -> Self {
        let c = 2.0 / dt;
        let b = [num[0] + num[1] * c, num[0] - num[1] * c];
        let a = [den[0] + den[1] * c, den[0] - den[1] * c];
        Self {
            b: [b[0] / a[0], b[1] / a[0], 0.0],
            a: [1.0, a[1] / a[0], 0.0],
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    #[inline]
    fn step(&mut self, input: f64) -> f64 {
        let out = self.b[0] * input + self.b[1] * self.x[0] + self.b[2] * self.x[1]
            - self.a[1] * self.y[0]
            - self.a[2] * self.y[1];
        self.x = [input, self.x[0]];
        self.y = [out, self.y[0]];
        out
    }

    /// Σ h[n]² of the impulse response, i.e. output variance for unit white input.
    fn impulse_energy(&self, steps: usize) -> f64 {
        let mut f = Self {
            x: [0.0; 2],
            y: [0.0; 2],
            ..*self
        };
        let mut sum = f.step(1.0).powi(2);
        for _ in 1..steps {
            sum += f.step(0.0).powi(2);
        }
        sum
    }
}

/// Per-run turbulence generator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrydenState {
    pub params: DrydenParams,
    pub sigmas: [f64; 3],
    pub scale_lengths: [f64; 3],
    filters: [Biquad; 3],
    gains: [f64; 3],
    spin_up_steps: usize,
}

impl DrydenState {
    pub fn new(params: DrydenParams) -> Self {
        let (sigmas, scale_lengths) = dryden_sigmas(params.altitude, params.mean_wind_speed_6m);
        let v = params.airspeed.max(MIN_TURBULENCE_AIRSPEED);
        let dt = params.timestep;
        let t = scale_lengths.map(|l| l / v);
        let filters = [
            Biquad::bilinear_first_order([1.0, 0.0], [1.0, t[0]], dt),
            Biquad::bilinear([1.0, 3f64.sqrt() * t[1], 0.0], [1.0, 2.0 * t[1], t[1] * t[1]], dt),
            Biquad::bilinear([1.0, 3f64.sqrt() * t[2], 0.0], [1.0, 2.0 * t[2], t[2] * t[2]], dt),
        ];
        let mut gains = [0.0; 3];
        for a in 0..3 {
            let steps = ((80.0 * t[a] / dt).ceil() as usize).clamp(1_000, 20_000_000);
            let energy = filters[a].impulse_energy(steps);
            gains[a] = if sigmas[a] > 0.0 { sigmas[a] / energy.sqrt() } else { 0.0 };
        }
        let t_max = t.iter().cloned().fold(0.0, f64::max);
        let spin_up_steps = ((SPIN_UP_TIME_CONSTANTS * t_max / dt).ceil() as usize).min(MAX_SPIN_UP_STEPS);
        Self {
            params,
            sigmas,
            scale_lengths,
            filters,
            gains,
            spin_up_steps,
        }
    }

    /// Advance past the zero-state transient so output is stationary.
    pub fn spin_up<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.gains.iter().all(|g| *g == 0.0) {
            return;
        }
        for _ in 0..self.spin_up_steps {
            dryden_step(self, rng);
        }
    }

    pub fn spin_up_steps(&self) -> usize {
        self.spin_up_steps
    }
}

/// One step of body-axis turbulence `(u, v, w)` in m/s.
pub fn dryden_step<R: Rng + ?Sized>(state: &mut DrydenState, rng: &mut R) -> Vec3 {
    let mut out = [0.0; 3];
    for (a, o) in out.iter_mut().enumerate() {
        let n: f64 = rng.sample(StandardNormal);
        *o = state.gains[a] * state.filters[a].step(n);
    }
    out
}

/// Rotate body-axis turbulence (x forward, y by the −yaw convention, z down)
/// into the inertial z-up frame.
pub fn body_to_inertial(turb: Vec3, yaw: f64) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    [c * turb[0] - s * turb[1], s * turb[0] + c * turb[1], -turb[2]]
}
