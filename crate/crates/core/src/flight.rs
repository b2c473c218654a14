//! Shared flight domain types and feature derivation.
//!
//! Frame convention: inertial frame is x/y horizontal, z up. Yaw is measured
//! from the inertial x-axis, counter-clockwise positive. Body components of the
//! horizontal air-relative velocity are obtained by rotating it by −yaw, so
//! `airspeed_body_x` is along the heading. Pitch is nose-up positive.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{preamble_pairs, read_to_string, wrap_angle};

pub type Vec3 = [f64; 3];

/// Frame-convention flag shared with exported weight files.
pub const FRAME_CONVENTION: &str = "inertial-zup_yaw-ccw-from-x_body-rot-neg-yaw_alpha-pitch";

pub(crate) fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub time: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub yaw: f64,
    pub pitch: f64,
}

impl VehicleState {
    /// Builds a state, normalising yaw into (−π, π].
    pub fn new(time: f64, position: Vec3, velocity: Vec3, yaw: f64, pitch: f64) -> Result<Self> {
        if !time.is_finite() || time < 0.0 {
            return Err(Error::input(format!("state time must be finite and >= 0, got {time}")));
        }
        if !(-std::f64::consts::FRAC_PI_2..=std::f64::consts::FRAC_PI_2).contains(&pitch) {
            return Err(Error::input(format!("pitch {pitch} outside [-pi/2, pi/2]")));
        }
        Ok(Self {
            time,
            position,
            velocity,
            yaw: wrap_angle(yaw),
            pitch,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Vec3,
    /// Radians.
    pub yaw: f64,
    /// m/s, strictly positive.
    pub target_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlan {
    pub name: String,
    waypoints: Vec<Waypoint>,
    pub final_time_hint: Option<f64>,
}

impl TrajectoryPlan {
    pub fn new(name: impl Into<String>, waypoints: Vec<Waypoint>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::input("trajectory needs at least 2 waypoints"));
        }
        for (i, w) in waypoints.iter().enumerate() {
            if !(w.target_speed > 0.0 && w.target_speed.is_finite()) {
                return Err(Error::input(format!("waypoint {i}: target_speed must be > 0")));
            }
            if w.position.iter().any(|c| !c.is_finite()) || !w.yaw.is_finite() {
                return Err(Error::input(format!("waypoint {i}: non-finite value")));
            }
        }
        for (i, pair) in waypoints.windows(2).enumerate() {
            if norm(sub(pair[1].position, pair[0].position)) < 1e-9 {
                return Err(Error::input(format!(
                    "waypoints {i} and {} are coincident",
                    i + 1
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            waypoints,
            final_time_hint: None,
        })
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    /// Total path length in meters.
    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|p| norm(sub(p[1].position, p[0].position)))
            .sum()
    }

    /// Mean waypoint altitude (z), used to parameterise turbulence.
    pub fn mean_altitude(&self) -> f64 {
        self.waypoints.iter().map(|w| w.position[2]).sum::<f64>() / self.waypoints.len() as f64
    }

    pub fn mean_target_speed(&self) -> f64 {
        self.waypoints.iter().map(|w| w.target_speed).sum::<f64>() / self.waypoints.len() as f64
    }

    /// Parse the `x,y,z,yaw_deg,speed` waypoint CSV.
    pub fn from_csv_str(text: &str, path: &Path) -> Result<Self> {
        let mut name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut waypoints = Vec::new();
        let mut header_seen = false;
        let mut offset = 0usize;
        for line in text.lines() {
            let line_offset = offset;
            offset += line.len() + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if trimmed.starts_with('#') {
                for (k, v) in preamble_pairs(trimmed) {
                    if k == "name" {
                        name = v.to_string();
                    }
                }
                continue;
            }
            if !header_seen {
                if trimmed.replace(' ', "") != "x,y,z,yaw_deg,speed" {
                    return Err(Error::Parse {
                        path: path.into(),
                        offset: line_offset,
                        message: format!("expected header x,y,z,yaw_deg,speed, got {trimmed:?}"),
                    });
                }
                header_seen = true;
                continue;
            }
            let vals = parse_row(trimmed, 5, path, line_offset)?;
            waypoints.push(Waypoint {
                position: [vals[0], vals[1], vals[2]],
                yaw: wrap_angle(vals[3].to_radians()),
                target_speed: vals[4],
            });
        }
        Self::new(name, waypoints).map_err(|e| Error::load(path, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv_str(&read_to_string(path)?, path)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!("# name={}\nx,y,z,yaw_deg,speed\n", self.name);
        for w in &self.waypoints {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                w.position[0],
                w.position[1],
                w.position[2],
                w.yaw.to_degrees(),
                w.target_speed
            );
        }
        out
    }
}

pub(crate) fn parse_row(line: &str, expected: usize, path: &Path, offset: usize) -> Result<Vec<f64>> {
    let vals: std::result::Result<Vec<f64>, _> =
        line.split(',').map(|c| c.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|e| Error::Parse {
        path: path.into(),
        offset,
        message: format!("bad number in row {line:?}: {e}"),
    })?;
    if vals.len() != expected {
        return Err(Error::Parse {
            path: path.into(),
            offset,
            message: format!("expected {expected} columns, got {}", vals.len()),
        });
    }
    Ok(vals)
}

/// Time-varying power-model inputs for one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub airspeed: f64,
    pub airspeed_body_x: f64,
    pub airspeed_body_y: f64,
    pub vertical_speed: f64,
    pub angle_of_attack: f64,
}

impl FeatureFrame {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.airspeed,
            self.airspeed_body_x,
            self.airspeed_body_y,
            self.vertical_speed,
            self.angle_of_attack,
        ]
    }
}

/// Time-invariant power-model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextFeatures {
    /// kg/m³
    pub air_density: f64,
    /// kg
    pub payload_mass: f64,
}

impl ContextFeatures {
    pub fn new(air_density: f64, payload_mass: f64) -> Result<Self> {
        if !(0.5..=1.5).contains(&air_density) {
            return Err(Error::input(format!("air_density {air_density} outside [0.5, 1.5]")));
        }
        if !(0.0..20.0).contains(&payload_mass) {
            return Err(Error::input(format!("payload_mass {payload_mass} outside [0, 20)")));
        }
        Ok(Self {
            air_density,
            payload_mass,
        })
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.air_density, self.payload_mass]
    }
}

impl Default for ContextFeatures {
    fn default() -> Self {
        Self {
            air_density: 1.225,
            payload_mass: 0.0,
        }
    }
}

/// Derive power-model features from a state history and the wind seen by the vehicle.
pub fn derive_features(states: &[VehicleState], wind_at_vehicle: &[Vec3]) -> Result<Vec<FeatureFrame>> {
    if states.is_empty() {
        return Err(Error::input("state history is empty"));
    }
    if states.len() != wind_at_vehicle.len() {
        return Err(Error::input(format!(
            "state history has {} entries but wind has {}",
            states.len(),
            wind_at_vehicle.len()
        )));
    }
    Ok(states
        .iter()
        .zip(wind_at_vehicle)
        .map(|(s, w)| feature_frame(s, *w))
        .collect())
}

pub(crate) fn feature_frame(state: &VehicleState, wind: Vec3) -> FeatureFrame {
    let air = sub(state.velocity, wind);
    let (sin, cos) = state.yaw.sin_cos();
    FeatureFrame {
        airspeed: norm(air),
        airspeed_body_x: cos * air[0] + sin * air[1],
        airspeed_body_y: -sin * air[0] + cos * air[1],
        vertical_speed: state.velocity[2],
        angle_of_attack: state.pitch,
    }
}

/// A recorded (or simulated) flight in canonical feature form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedFlight {
    pub sample_period: f64,
    pub times: Vec<f64>,
    pub frames: Vec<FeatureFrame>,
    pub context: ContextFeatures,
    pub measured_power: Vec<f64>,
    pub yaw_series: Vec<f64>,
}

/// One violated invariant found by [`validate_flight`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub invariant: &'static str,
    pub detail: String,
}

pub const UNIFORM_SAMPLING: &str = "uniform sampling";
pub const POWER_POSITIVE: &str = "measured_power positive";
pub const LENGTHS_MATCH: &str = "series lengths match";
pub const PERIOD_POSITIVE: &str = "sample_period positive";
pub const FRAMES_NONEMPTY: &str = "at least one frame";

pub fn validate_flight(flight: &ProcessedFlight) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = flight.frames.len();
    if n == 0 {
        out.push(Violation {
            invariant: FRAMES_NONEMPTY,
            detail: "flight has no frames".into(),
        });
    }
    if !(flight.sample_period > 0.0 && flight.sample_period.is_finite()) {
        out.push(Violation {
            invariant: PERIOD_POSITIVE,
            detail: format!("sample_period = {}", flight.sample_period),
        });
    }
    for (name, len) in [
        ("times", flight.times.len()),
        ("measured_power", flight.measured_power.len()),
        ("yaw_series", flight.yaw_series.len()),
    ] {
        if len != n {
            out.push(Violation {
                invariant: LENGTHS_MATCH,
                detail: format!("{name} has {len} entries, frames has {n}"),
            });
        }
    }
    if let Some((i, p)) = flight
        .measured_power
        .iter()
        .enumerate()
        .find(|(_, p)| !(**p > 0.0))
    {
        out.push(Violation {
            invariant: POWER_POSITIVE,
            detail: format!("sample {i} has power {p}"),
        });
    }
    if let Some((i, gap)) = flight
        .times
        .windows(2)
        .map(|w| w[1] - w[0])
        .enumerate()
        .find(|(_, g)| (g - flight.sample_period).abs() > 1e-9)
    {
        out.push(Violation {
            invariant: UNIFORM_SAMPLING,
            detail: format!(
                "gap {gap} between samples {i} and {} differs from period {}",
                i + 1,
                flight.sample_period
            ),
        });
    }
    out
}

const FLIGHT_HEADER: &str = "time_s,v,vx,vy,vz,alpha,power_w,yaw";

impl ProcessedFlight {
    pub fn from_csv_str(text: &str, path: &Path) -> Result<Self> {
        let mut rho = None;
        let mut payload = None;
        let mut dt = None;
        let mut header_seen = false;
        let mut flight = ProcessedFlight {
            sample_period: 0.0,
            times: Vec::new(),
            frames: Vec::new(),
            context: ContextFeatures::default(),
            measured_power: Vec::new(),
            yaw_series: Vec::new(),
        };
        let mut offset = 0usize;
        for line in text.lines() {
            let line_offset = offset;
            offset += line.len() + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if trimmed.starts_with('#') {
                for (k, v) in preamble_pairs(trimmed) {
                    let parsed = v.parse::<f64>().map_err(|e| Error::Parse {
                        path: path.into(),
                        offset: line_offset,
                        message: format!("bad preamble value {k}={v}: {e}"),
                    });
                    match k {
                        "rho" => rho = Some(parsed?),
                        "payload_kg" => payload = Some(parsed?),
                        "dt" => dt = Some(parsed?),
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                if trimmed.replace(' ', "") != FLIGHT_HEADER {
                    return Err(Error::Parse {
                        path: path.into(),
                        offset: line_offset,
                        message: format!("expected header {FLIGHT_HEADER}, got {trimmed:?}"),
                    });
                }
                header_seen = true;
                continue;
            }
            let v = parse_row(trimmed, 8, path, line_offset)?;
            flight.times.push(v[0]);
            flight.frames.push(FeatureFrame {
                airspeed: v[1],
                airspeed_body_x: v[2],
                airspeed_body_y: v[3],
                vertical_speed: v[4],
                angle_of_attack: v[5],
            });
            flight.measured_power.push(v[6]);
            flight.yaw_series.push(v[7]);
        }
        let missing = |k: &str| Error::load(path, format!("preamble is missing {k}"));
        flight.context = ContextFeatures::new(rho.ok_or_else(|| missing("rho"))?, payload.ok_or_else(|| missing("payload_kg"))?)
            .map_err(|e| Error::load(path, e.to_string()))?;
        flight.sample_period = dt.ok_or_else(|| missing("dt"))?;
        Ok(flight)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv_str(&read_to_string(path)?, path)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!(
            "# rho={} payload_kg={} dt={}\n{FLIGHT_HEADER}\n",
            self.context.air_density, self.context.payload_mass, self.sample_period
        );
        for i in 0..self.frames.len() {
            let f = &self.frames[i];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.times[i],
                f.airspeed,
                f.airspeed_body_x,
                f.airspeed_body_y,
                f.vertical_speed,
                f.angle_of_attack,
                self.measured_power[i],
                self.yaw_series[i]
            );
        }
        out
    }

    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 * self.sample_period
    }
}
