//! Closed-loop point-mass flight simulation.
//!
//! The vehicle is a 3-D point mass with linear air-relative drag. A
//! saturated PD waypoint tracker produces the commanded acceleration:
//! velocity feedback toward the active waypoint plus cross-track position
//! feedback toward the current segment. Yaw slews toward the segment heading
//! at a bounded rate and pitch is the tilt needed for the horizontal command.
//!
//! ```text
//! a = u − c·(v − w) + d,    d ~ N(0, diag(σ²))
//! v ← v + a·dt,  p ← p + v·dt                     (semi-implicit Euler)
//! ```

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flight::{norm, sub, TrajectoryPlan, Vec3, VehicleState};
use crate::util::wrap_angle;
use crate::GRAVITY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Cross-track position gain, 1/s².
    pub position_gain: f64,
    /// Velocity-tracking gain, 1/s.
    pub velocity_gain: f64,
    /// m/s²
    pub max_horizontal_accel: f64,
    /// m/s
    pub max_vertical_speed: f64,
    /// m
    pub capture_radius: f64,
    /// rad/s
    pub yaw_rate_limit: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            position_gain: 1.0,
            velocity_gain: 1.5,
            max_horizontal_accel: 4.0,
            max_vertical_speed: 3.0,
            capture_radius: 2.0,
            yaw_rate_limit: 1.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.position_gain,
            self.velocity_gain,
            self.max_horizontal_accel,
            self.max_vertical_speed,
            self.capture_radius,
            self.yaw_rate_limit,
        ];
        if all.iter().all(|x| *x > 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(Error::config("controller parameters must all be positive"))
        }
    }
}

/// Additive acceleration noise, per-axis standard deviation in m/s².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsNoise {
    pub accel_std: Vec3,
}

impl DynamicsNoise {
    pub fn validate(&self) -> Result<()> {
        if self.accel_std.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            Ok(())
        } else {
            Err(Error::config("dynamics noise standard deviations must be >= 0"))
        }
    }

    fn is_zero(&self) -> bool {
        self.accel_std.iter().all(|s| *s == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Integration step, s.
    pub dt: f64,
    /// Hard stop, s. `None` means three times the plan's nominal duration.
    pub max_sim_time: Option<f64>,
    /// Linear drag per unit mass on air-relative velocity, 1/s.
    pub drag_coefficient_per_mass: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            max_sim_time: None,
            drag_coefficient_per_mass: 0.1,
        }
    }
}

/// Safety factor applied to the nominal duration when no explicit limit is set.
pub const MAX_TIME_FACTOR: f64 = 3.0;

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.5) {
            return Err(Error::config(format!("dt must be in (0, 0.5], got {}", self.dt)));
        }
        if let Some(t) = self.max_sim_time {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("max_sim_time must be positive"));
            }
        }
        if !(self.drag_coefficient_per_mass >= 0.0 && self.drag_coefficient_per_mass.is_finite()) {
            return Err(Error::config("drag_coefficient_per_mass must be >= 0"));
        }
        Ok(())
    }

    pub fn time_limit(&self, plan: &TrajectoryPlan) -> f64 {
        self.max_sim_time
            .unwrap_or_else(|| MAX_TIME_FACTOR * plan_time_estimate(plan))
    }
}

/// State history of one simulated flight plus the total wind seen at each state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightHistory {
    pub states: Vec<VehicleState>,
    pub winds: Vec<Vec3>,
    /// False when the time limit was hit before the final waypoint was captured.
    pub complete: bool,
}

impl FlightHistory {
    pub fn duration(&self) -> f64 {
        self.states.last().map_or(0.0, |s| s.time)
    }
}

/// Nominal duration: Σ segment length / destination waypoint speed.
pub fn plan_time_estimate(plan: &TrajectoryPlan) -> f64 {
    plan.waypoints()
        .windows(2)
        .map(|w| norm(sub(w[1].position, w[0].position)) / w[1].target_speed)
        .sum()
}

fn saturate(cmd: Vec3, ctrl: &ControllerConfig) -> Vec3 {
    let h = (cmd[0] * cmd[0] + cmd[1] * cmd[1]).sqrt();
    let k = if h > ctrl.max_horizontal_accel {
        ctrl.max_horizontal_accel / h
    } else {
        1.0
    };
    let a = ctrl.max_horizontal_accel;
    [cmd[0] * k, cmd[1] * k, cmd[2].clamp(-a, a)]
}

fn command(plan: &TrajectoryPlan, target: usize, p: Vec3, v: Vec3, ctrl: &ControllerConfig) -> Vec3 {
    let wps = plan.waypoints();
    let goal = wps[target];
    let start = wps[target - 1].position;
    let to_goal = sub(goal.position, p);
    let dist = norm(to_goal);
    let mut speed = goal.target_speed;
    if target == wps.len() - 1 {
        // Brake into the final waypoint at half the acceleration budget.
        speed = speed.min((ctrl.max_horizontal_accel * dist).sqrt());
    }
    let mut v_ref = if dist > 1e-9 {
        [to_goal[0] / dist * speed, to_goal[1] / dist * speed, to_goal[2] / dist * speed]
    } else {
        [0.0; 3]
    };
    v_ref[2] = v_ref[2].clamp(-ctrl.max_vertical_speed, ctrl.max_vertical_speed);

    let seg = sub(goal.position, start);
    let seg_len = norm(seg);
    let rel = sub(p, start);
    let along = (rel[0] * seg[0] + rel[1] * seg[1] + rel[2] * seg[2]) / (seg_len * seg_len);
    let foot = [
        start[0] + along * seg[0],
        start[1] + along * seg[1],
        start[2] + along * seg[2],
    ];
    let cross = sub(foot, p);

    let cmd = [
        ctrl.position_gain * cross[0] + ctrl.velocity_gain * (v_ref[0] - v[0]),
        ctrl.position_gain * cross[1] + ctrl.velocity_gain * (v_ref[1] - v[1]),
        ctrl.position_gain * cross[2] + ctrl.velocity_gain * (v_ref[2] - v[2]),
    ];
    saturate(cmd, ctrl)
}

fn segment_heading(plan: &TrajectoryPlan, target: usize) -> f64 {
    let wps = plan.waypoints();
    let seg = sub(wps[target].position, wps[target - 1].position);
    if seg[0].hypot(seg[1]) > 1e-6 {
        seg[1].atan2(seg[0])
    } else {
        wps[target].yaw
    }
}

/// Nose-down (negative) when the horizontal command points ahead of the heading.
fn pitch_for(cmd: Vec3, yaw: f64) -> f64 {
    let h = cmd[0].hypot(cmd[1]);
    let tilt = (h / GRAVITY).atan();
    let forward = cmd[0] * yaw.cos() + cmd[1] * yaw.sin();
    if forward >= 0.0 {
        -tilt
    } else {
        tilt
    }
}

/// Fly `plan` from its first waypoint, at rest, until the final waypoint is
/// captured or the time limit is reached.
///
/// `wind_at` returns the constant wind at a position; `turbulence` is called
/// once per step with the current yaw and returns the inertial-frame gust.
pub fn simulate_flight<W, T, R>(
    plan: &TrajectoryPlan,
    ctrl: &ControllerConfig,
    noise: &DynamicsNoise,
    sim: &SimConfig,
    wind_at: W,
    mut turbulence: T,
    rng: &mut R,
) -> Result<FlightHistory>
where
    W: Fn(Vec3) -> Vec3,
    T: FnMut(f64) -> Vec3,
    R: Rng + ?Sized,
{
    ctrl.validate()?;
    noise.validate()?;
    sim.validate()?;
    let wps = plan.waypoints();
    let t_max = sim.time_limit(plan);
    let dt = sim.dt;
    let drag = sim.drag_coefficient_per_mass;
    let max_steps = (t_max / dt).ceil() as usize;

    let mut p = wps[0].position;
    let mut v = [0.0; 3];
    let mut yaw = wrap_angle(wps[0].yaw);
    let mut target = 1usize;
    let mut states = Vec::with_capacity(max_steps.min(1 << 20) + 1);
    let mut winds = Vec::with_capacity(states.capacity());
    let quiet = noise.is_zero();

    let mut step = 0usize;
    let complete = loop {
        if step > 0 {
            while target < wps.len() && norm(sub(wps[target].position, p)) <= ctrl.capture_radius {
                target += 1;
            }
        }
        let done = target >= wps.len();
        let constant = wind_at(p);
        let gust = turbulence(yaw);
        let w = [constant[0] + gust[0], constant[1] + gust[1], constant[2] + gust[2]];
        let cmd = if done { [0.0; 3] } else { command(plan, target, p, v, ctrl) };
        let t = step as f64 * dt;
        states.push(VehicleState {
            time: t,
            position: p,
            velocity: v,
            yaw,
            pitch: pitch_for(cmd, yaw),
        });
        winds.push(w);
        if done {
            break true;
        }
        if step >= max_steps {
            break false;
        }

        let mut a = [
            cmd[0] - drag * (v[0] - w[0]),
            cmd[1] - drag * (v[1] - w[1]),
            cmd[2] - drag * (v[2] - w[2]),
        ];
        if !quiet {
            for (ai, s) in a.iter_mut().zip(noise.accel_std) {
                let z: f64 = rng.sample(StandardNormal);
                *ai += s * z;
            }
        }
        for i in 0..3 {
            v[i] += a[i] * dt;
            p[i] += v[i] * dt;
        }
        let max_turn = ctrl.yaw_rate_limit * dt;
        let err = wrap_angle(segment_heading(plan, target) - yaw);
        yaw = wrap_angle(yaw + err.clamp(-max_turn, max_turn));
        step += 1;
    };

    Ok(FlightHistory {
        states,
        winds,
        complete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flight::Waypoint;
    use crate::rng::substream;

    fn wp(x: f64, y: f64, z: f64, speed: f64) -> Waypoint {
        Waypoint {
            position: [x, y, z],
            yaw: 0.0,
            target_speed: speed,
        }
    }

    fn calm(plan: &TrajectoryPlan, sim: &SimConfig, seed: u64) -> FlightHistory {
        simulate_flight(
            plan,
            &ControllerConfig::default(),
            &DynamicsNoise::default(),
            sim,
            |_| [0.0; 3],
            |_| [0.0; 3],
            &mut substream(seed, 0),
        )
        .unwrap()
    }

    pub(crate) fn fixture_plans() -> Vec<TrajectoryPlan> {
        let mk = |name: &str, w: Vec<Waypoint>| TrajectoryPlan::new(name, w).unwrap();
        vec![
            mk("straight", vec![wp(0.0, 0.0, 20.0, 5.0), wp(100.0, 0.0, 20.0, 5.0)]),
            mk("diagonal", vec![wp(0.0, 0.0, 20.0, 5.0), wp(60.0, 80.0, 20.0, 6.0)]),
            mk("climb", vec![wp(0.0, 0.0, 10.0, 4.0), wp(50.0, 0.0, 30.0, 4.0)]),
            mk("descend", vec![wp(0.0, 0.0, 40.0, 4.0), wp(0.0, 60.0, 15.0, 4.0)]),
            mk("vertical", vec![wp(0.0, 0.0, 5.0, 2.0), wp(0.0, 0.0, 25.0, 2.0)]),
            mk(
                "triangle",
                vec![
                    wp(0.0, 0.0, 20.0, 5.0),
                    wp(80.0, 0.0, 20.0, 5.0),
                    wp(40.0, 70.0, 20.0, 5.0),
                    wp(0.0, 0.0, 20.0, 5.0),
                ],
            ),
            mk(
                "square",
                vec![
                    wp(0.0, 0.0, 20.0, 6.0),
                    wp(50.0, 0.0, 20.0, 6.0),
                    wp(50.0, 50.0, 20.0, 6.0),
                    wp(0.0, 50.0, 20.0, 6.0),
                    wp(0.0, 0.0, 20.0, 6.0),
                ],
            ),
            mk("reverse", vec![wp(0.0, 0.0, 20.0, 5.0), wp(-70.0, -10.0, 20.0, 5.0)]),
            mk(
                "zigzag",
                vec![
                    wp(0.0, 0.0, 15.0, 7.0),
                    wp(40.0, 20.0, 18.0, 7.0),
                    wp(80.0, -20.0, 21.0, 7.0),
                    wp(120.0, 20.0, 24.0, 7.0),
                ],
            ),
            mk("short", vec![wp(0.0, 0.0, 20.0, 3.0), wp(8.0, 6.0, 20.0, 3.0)]),
        ]
    }

    #[test]
    fn time_estimate() {
        let p = TrajectoryPlan::new("a", vec![wp(0.0, 0.0, 0.0, 5.0), wp(100.0, 0.0, 0.0, 5.0)]).unwrap();
        assert_eq!(plan_time_estimate(&p), 20.0);
        let p = TrajectoryPlan::new(
            "b",
            vec![wp(0.0, 0.0, 0.0, 5.0), wp(100.0, 0.0, 0.0, 5.0), wp(150.0, 0.0, 0.0, 10.0)],
        )
        .unwrap();
        assert_eq!(plan_time_estimate(&p), 25.0);
    }

    #[test]
    fn straight_flight_progresses_and_captures() {
        let plan = &fixture_plans()[0];
        let h = calm(plan, &SimConfig::default(), 1);
        assert!(h.complete);
        assert!(h.states.len() >= 2);
        let xs: Vec<f64> = h.states.iter().map(|s| s.position[0]).collect();
        assert!(xs.windows(2).all(|w| w[1] >= w[0] - 1e-12), "non-monotone progress");
        assert!(h.duration() <= 20.0 * 1.5, "took {}", h.duration());
    }

    #[test]
    fn headwind_slows_flight() {
        let plan = &fixture_plans()[0];
        let sim = SimConfig::default();
        let calm_time = calm(plan, &sim, 1).duration();
        let windy = simulate_flight(
            plan,
            &ControllerConfig::default(),
            &DynamicsNoise::default(),
            &sim,
            |_| [-5.0, 0.0, 0.0],
            |_| [0.0; 3],
            &mut substream(1, 0),
        )
        .unwrap();
        assert!(windy.complete);
        assert!(windy.duration() > calm_time, "{} vs {calm_time}", windy.duration());
    }

    #[test]
    fn zero_noise_ignores_seed() {
        let plan = &fixture_plans()[5];
        let sim = SimConfig::default();
        assert_eq!(calm(plan, &sim, 1), calm(plan, &sim, 12345));
    }

    #[test]
    fn noise_changes_history() {
        let plan = &fixture_plans()[0];
        let noise = DynamicsNoise {
            accel_std: [0.3, 0.3, 0.1],
        };
        let run = |seed| {
            simulate_flight(
                plan,
                &ControllerConfig::default(),
                &noise,
                &SimConfig::default(),
                |_| [0.0; 3],
                |_| [0.0; 3],
                &mut substream(seed, 0),
            )
            .unwrap()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn kinematic_consistency() {
        for plan in fixture_plans() {
            let h = calm(&plan, &SimConfig::default(), 0);
            for w in h.states.windows(2) {
                for i in 0..3 {
                    let dp = w[1].position[i] - w[0].position[i];
                    let expected = w[1].velocity[i] * 0.1;
                    assert!((dp - expected).abs() <= 1e-9 * (1.0 + w[1].position[i].abs()), "{}", plan.name);
                }
            }
        }
    }

    #[test]
    fn fixture_plans_reach_every_waypoint() {
        let ctrl = ControllerConfig::default();
        for plan in fixture_plans() {
            let h = calm(&plan, &SimConfig::default(), 0);
            assert!(h.complete, "{} did not complete", plan.name);
            for (i, w) in plan.waypoints().iter().enumerate().skip(1) {
                let closest = h
                    .states
                    .iter()
                    .map(|s| norm(sub(s.position, w.position)))
                    .fold(f64::INFINITY, f64::min);
                assert!(closest <= ctrl.capture_radius, "{} waypoint {i}: {closest}", plan.name);
            }
        }
    }

    #[test]
    fn halving_dt_changes_flight_time_little() {
        for plan in fixture_plans() {
            let coarse = calm(&plan, &SimConfig::default(), 0).duration();
            let fine = calm(
                &plan,
                &SimConfig {
                    dt: 0.05,
                    ..SimConfig::default()
                },
                0,
            )
            .duration();
            let rel = (coarse - fine).abs() / fine;
            assert!(rel < 0.02, "{}: {coarse} vs {fine}", plan.name);
        }
    }

    #[test]
    fn timeout_is_flagged_incomplete() {
        let plan = &fixture_plans()[0];
        let sim = SimConfig {
            max_sim_time: Some(3.0),
            ..SimConfig::default()
        };
        let h = calm(plan, &sim, 0);
        assert!(!h.complete);
        assert!(h.states.len() >= 2);
        assert!((h.duration() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn pitch_and_yaw_stay_in_range() {
        for plan in fixture_plans() {
            let h = calm(&plan, &SimConfig::default(), 0);
            for s in &h.states {
                assert!(s.pitch.abs() <= std::f64::consts::FRAC_PI_2);
                assert!(s.yaw > -std::f64::consts::PI && s.yaw <= std::f64::consts::PI);
            }
        }
    }
}
