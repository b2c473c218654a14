//! Least-squares analytical power baseline.
//!
//! Power is modelled as a linear combination of the basis
//! `[1, v, v², v_z, v_z², m, α]`, which captures the induced, parasite and
//! climb trends of a multirotor. This is a stand-in baseline, not a
//! reproduction of any published parametric model.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flight::{ContextFeatures, FeatureFrame, ProcessedFlight};

pub const ANALYTICAL_BASIS: [&str; 7] = ["1", "v", "v^2", "vz", "vz^2", "payload_kg", "alpha"];

const CLAMP_FLOOR_W: f64 = 1.0;
// Smallest accepted singular value relative to the largest, after column scaling.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticalCoefficients {
    pub beta: [f64; 7],
}

impl AnalyticalCoefficients {
    pub fn new(beta: [f64; 7]) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::input("analytical coefficients must be finite"));
        }
        Ok(Self { beta })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::util::read_to_string(path)?;
        let c: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            offset: 0,
            message: e.to_string(),
        })?;
        Self::new(c.beta).map_err(|e| Error::load(path, e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "model": "analytical-least-squares",
            "basis": ANALYTICAL_BASIS,
            "beta": self.beta,
        }))
        .expect("coefficients serialise")
    }
}

fn basis(frame: &FeatureFrame, context: &ContextFeatures) -> [f64; 7] {
    let v = frame.airspeed;
    let vz = frame.vertical_speed;
    [1.0, v, v * v, vz, vz * vz, context.payload_mass, frame.angle_of_attack]
}

pub fn analytical_predict(coeffs: &AnalyticalCoefficients, frame: &FeatureFrame, context: &ContextFeatures) -> f64 {
    let p: f64 = coeffs
        .beta
        .iter()
        .zip(basis(frame, context))
        .map(|(b, x)| b * x)
        .sum();
    p.max(CLAMP_FLOOR_W)
}

/// Ordinary least squares over every frame of every flight.
pub fn fit_analytical(flights: &[ProcessedFlight]) -> Result<AnalyticalCoefficients> {
    if flights.is_empty() {
        return Err(Error::input("at least one flight is required"));
    }
    let rows: usize = flights.iter().map(|f| f.frames.len()).sum();
    if rows < 8 {
        return Err(Error::input(format!("at least 8 frames are required, got {rows}")));
    }
    let mut a = DMatrix::<f64>::zeros(rows, 7);
    let mut y = DVector::<f64>::zeros(rows);
    let mut r = 0;
    for f in flights {
        if f.measured_power.len() != f.frames.len() {
            return Err(Error::input("flight power and frame counts differ"));
        }
        for (frame, p) in f.frames.iter().zip(&f.measured_power) {
            for (c, x) in basis(frame, &f.context).into_iter().enumerate() {
                a[(r, c)] = x;
            }
            y[r] = *p;
            r += 1;
        }
    }

    let mut scale = [0.0; 7];
    for (c, s) in scale.iter_mut().enumerate() {
        let n = a.column(c).norm();
        if n == 0.0 {
            return Err(Error::Fit(format!(
                "basis column {} is identically zero; fit needs more varied data",
                ANALYTICAL_BASIS[c]
            )));
        }
        *s = n;
        a.column_mut(c).scale_mut(1.0 / n);
    }

    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let (max, min) = sv.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), s| (hi.max(*s), lo.min(*s)));
    if !(min > RANK_TOLERANCE * max) {
        return Err(Error::Fit(
            "basis matrix is rank deficient; fit needs more varied data (speeds, climb rates, payloads, pitch)".into(),
        ));
    }
    let sol = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let mut beta = [0.0; 7];
    for c in 0..7 {
        beta[c] = sol[c] / scale[c];
    }
    AnalyticalCoefficients::new(beta).map_err(|e| Error::Fit(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn synthetic_flights(beta: Option<[f64; 7]>, constant: Option<f64>) -> Vec<ProcessedFlight> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        (0..3)
            .map(|k| {
                let context = ContextFeatures::new(1.2, 0.25 * k as f64).unwrap();
                let n = 40;
                let frames: Vec<FeatureFrame> = (0..n)
                    .map(|_| FeatureFrame {
                        airspeed: rng.random_range(0.0..15.0),
                        airspeed_body_x: 0.0,
                        airspeed_body_y: 0.0,
                        vertical_speed: rng.random_range(-3.0..3.0),
                        angle_of_attack: rng.random_range(-0.3..0.3),
                    })
                    .collect();
                let measured_power = frames
                    .iter()
                    .map(|f| match (beta, constant) {
                        (Some(b), _) => basis(f, &context).iter().zip(b).map(|(x, b)| x * b).sum(),
                        (None, Some(c)) => c,
                        _ => unreachable!(),
                    })
                    .collect();
                ProcessedFlight {
                    sample_period: 0.1,
                    times: (0..n).map(|i| i as f64 * 0.1).collect(),
                    frames,
                    context,
                    measured_power,
                    yaw_series: vec![0.0; n],
                }
            })
            .collect()
    }

    #[test]
    fn constant_model_and_floor() {
        let ctx = ContextFeatures::default();
        let f = FeatureFrame {
            airspeed: 7.0,
            ..Default::default()
        };
        let c = AnalyticalCoefficients::new([250.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(analytical_predict(&c, &f, &ctx), 250.0);
        let z = AnalyticalCoefficients::new([0.0; 7]).unwrap();
        assert_eq!(analytical_predict(&z, &f, &ctx), 1.0);
    }

    #[test]
    fn recovers_known_coefficients() {
        let beta = [210.0, -3.5, 0.8, 12.0, 4.0, 55.0, -20.0];
        let fit = fit_analytical(&synthetic_flights(Some(beta), None)).unwrap();
        for (a, b) in fit.beta.iter().zip(beta) {
            assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", fit.beta, beta);
        }
    }

    #[test]
    fn constant_power_gives_intercept_only() {
        let fit = fit_analytical(&synthetic_flights(None, Some(321.0))).unwrap();
        assert!((fit.beta[0] - 321.0).abs() < 1e-6);
        for b in &fit.beta[1..] {
            assert!(b.abs() < 1e-6, "{:?}", fit.beta);
        }
    }

    #[test]
    fn rank_deficient_data_rejected() {
        let mut flights = synthetic_flights(None, Some(100.0));
        for f in &mut flights {
            f.context.payload_mass = 0.5;
        }
        assert!(matches!(fit_analytical(&flights), Err(Error::Fit(_))));
    }

    #[test]
    fn too_few_frames_rejected() {
        let mut flights = synthetic_flights(None, Some(100.0));
        flights.truncate(1);
        flights[0].frames.truncate(5);
        flights[0].measured_power.truncate(5);
        assert!(matches!(fit_analytical(&flights), Err(Error::Input(_))));
    }
}
