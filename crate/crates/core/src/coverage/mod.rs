//! Coverage evaluation around a take-off base.
//!
//! Goals are sampled uniformly in a disc, each gets an out-and-back path
//! from the grid planner (A* + line-of-sight shortcutting), a Monte Carlo
//! energy sweep, and a CVaR per risk profile. Energies are computed once
//! per goal and shared by every profile, so profile comparisons are on
//! identical samples.

mod map;
mod planner;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use map::{MapSidecar, OccupancyMap};
pub use planner::{astar, grid_neighbors, line_of_sight, plan_out_and_back, plan_path, plan_polyline, shortcut, supercover, StepCost};

use crate::dynamics::{ControllerConfig, DynamicsNoise, SimConfig};
use crate::error::{Error, Result};
use crate::flight::{ContextFeatures, TrajectoryPlan};
use crate::montecarlo::{run_mc_sequential, thread_pool, McConfig, Scenario};
use crate::power::PowerModel;
use crate::risk::{conditional_value_at_risk, risk_transform_values, RiskProfile};
use crate::rng::{derive_seed, substream};
use crate::wind::WindFieldSet;

pub const PLANNER_NOTE: &str =
    "planner: 8-connected grid A* with greedy line-of-sight shortcutting (substitute for a sampling-based planner)";

/// Stream index (under the master seed) used for goal sampling; MC seeds
/// per goal are `derive_seed(master_seed, goal_index)`.
const GOAL_STREAM: u64 = u64::MAX;

/// Uniform samples in the disc, rejecting points outside the map or in
/// occupied cells, with at most `100·count` attempts.
pub fn sample_goals<R: Rng + ?Sized>(center: [f64; 2], radius: f64, count: usize, map: &OccupancyMap, rng: &mut R) -> Result<Vec<[f64; 2]>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::input("radius must be > 0"));
    }
    if count < 1 {
        return Err(Error::input("goal count must be >= 1"));
    }
    let mut goals = Vec::with_capacity(count);
    for _ in 0..100 * count {
        let r = radius * rng.random::<f64>().sqrt();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        let p = [center[0] + r * theta.cos(), center[1] + r * theta.sin()];
        if map.is_free_at(p) {
            goals.push(p);
            if goals.len() == count {
                return Ok(goals);
            }
        }
    }
    Err(Error::Sampling(format!(
        "only {} of {count} free goals found in {} attempts; feasible area too small",
        goals.len(),
        100 * count
    )))
}

/// Vehicle, environment and flight settings shared by every goal.
#[derive(Clone, Copy)]
pub struct CoverageMission<'a> {
    pub controller: &'a ControllerConfig,
    pub noise: &'a DynamicsNoise,
    pub sim: &'a SimConfig,
    pub wind: &'a WindFieldSet,
    pub model: &'a dyn PowerModel,
    pub context: &'a ContextFeatures,
    pub cruise_altitude: f64,
    pub speed: f64,
    /// Fly to the goal and back (default) rather than one way.
    pub out_and_back: bool,
}

impl CoverageMission<'_> {
    pub fn plan(&self, map: &OccupancyMap, base: [f64; 2], goal: [f64; 2]) -> Result<TrajectoryPlan> {
        if self.out_and_back {
            plan_out_and_back(map, base, goal, self.cruise_altitude, self.speed)
        } else {
            plan_path(map, base, goal, self.cruise_altitude, self.speed)
        }
    }
}

/// Monte Carlo energies for one goal, or why it could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalEnergies {
    pub goal: [f64; 2],
    pub outcome: std::result::Result<GoalSamples, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSamples {
    pub path_length_m: f64,
    pub altitude_m: f64,
    pub energies: Vec<f64>,
    pub config_hash: String,
}

/// Plan and simulate every goal. Goals run in parallel on `mc.workers`
/// threads; each goal's sweep is sequential with seed
/// `derive_seed(mc.master_seed, goal_index)`, so results do not depend on
/// the worker count. Planning failures are recorded, not raised.
pub fn goal_energies(base: [f64; 2], goals: &[[f64; 2]], map: &OccupancyMap, mission: &CoverageMission<'_>, mc: &McConfig) -> Result<Vec<GoalEnergies>> {
    mc.validate()?;
    let pool = thread_pool(mc.workers)?;
    pool.install(|| {
        goals
            .par_iter()
            .enumerate()
            .map(|(i, goal)| {
                let plan = match mission.plan(map, base, *goal) {
                    Ok(p) => p,
                    Err(e @ (Error::Planning(_) | Error::Input(_))) => {
                        return Ok(GoalEnergies {
                            goal: *goal,
                            outcome: Err(e.to_string()),
                        })
                    }
                    Err(e) => return Err(e),
                };
                let scenario = Scenario {
                    plan: &plan,
                    controller: mission.controller,
                    noise: mission.noise,
                    sim: mission.sim,
                    wind: mission.wind,
                    model: mission.model,
                    context: mission.context,
                };
                let goal_mc = McConfig {
                    master_seed: derive_seed(mc.master_seed, i as u64),
                    workers: 1,
                    ..*mc
                };
                let samples = run_mc_sequential(&scenario, &goal_mc)?;
                Ok(GoalEnergies {
                    goal: *goal,
                    outcome: Ok(GoalSamples {
                        path_length_m: plan.length(),
                        altitude_m: plan.waypoints()[0].position[2],
                        energies: samples.energies,
                        config_hash: samples.metadata.config_hash,
                    }),
                })
            })
            .collect()
    })
}

/// Regular raster over the disc's bounding box; `NaN` outside the disc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvarRaster {
    /// Center of cell (0, 0).
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub dims: [usize; 2],
    /// Row-major, row = y index.
    pub values: Vec<f64>,
}

impl CvarRaster {
    /// `x,y,cvar` per cell, skipping cells outside the disc.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("x,y,cvar\n");
        for j in 0..self.dims[1] {
            for i in 0..self.dims[0] {
                let v = self.values[j * self.dims[0] + i];
                if v.is_finite() {
                    let x = self.origin[0] + i as f64 * self.cell_size;
                    let y = self.origin[1] + j as f64 * self.cell_size;
                    out.push_str(&format!("{x},{y},{v}\n"));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub base: [f64; 2],
    pub radius: f64,
    pub nu: f64,
    pub profile: RiskProfile,
    /// Successfully evaluated goals.
    pub goals: Vec<[f64; 2]>,
    pub cvar_values: Vec<f64>,
    pub path_lengths_m: Vec<f64>,
    pub altitudes_m: Vec<f64>,
    pub failed_plans: usize,
    pub failed_goals: Vec<[f64; 2]>,
    pub grid: Option<CvarRaster>,
    pub notes: Vec<String>,
}

impl CoverageResult {
    /// `x,y,cvar` per evaluated goal.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("x,y,cvar\n");
        for (g, c) in self.goals.iter().zip(&self.cvar_values) {
            out.push_str(&format!("{},{},{}\n", g[0], g[1], c));
        }
        out
    }
}

/// Inverse-distance-squared blend of goal values, exact at a goal.
pub fn idw_raster(base: [f64; 2], radius: f64, goals: &[[f64; 2]], values: &[f64], cells_per_axis: usize) -> Option<CvarRaster> {
    if goals.is_empty() || cells_per_axis < 2 {
        return None;
    }
    let cell = 2.0 * radius / (cells_per_axis - 1) as f64;
    let origin = [base[0] - radius, base[1] - radius];
    let mut grid = Vec::with_capacity(cells_per_axis * cells_per_axis);
    for j in 0..cells_per_axis {
        for i in 0..cells_per_axis {
            let p = [origin[0] + i as f64 * cell, origin[1] + j as f64 * cell];
            if (p[0] - base[0]).hypot(p[1] - base[1]) > radius * (1.0 + 1e-12) {
                grid.push(f64::NAN);
                continue;
            }
            let (mut num, mut den) = (0.0, 0.0);
            let mut exact = None;
            for (g, v) in goals.iter().zip(values) {
                let d2 = (p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2);
                if d2 < 1e-18 {
                    exact = Some(*v);
                    break;
                }
                num += v / d2;
                den += 1.0 / d2;
            }
            grid.push(exact.unwrap_or(num / den));
        }
    }
    Some(CvarRaster {
        origin,
        cell_size: cell,
        dims: [cells_per_axis, cells_per_axis],
        values: grid,
    })
}

/// CVaR per evaluated goal under `profile`.
pub fn coverage_from_energies(
    base: [f64; 2],
    radius: f64,
    evaluated: &[GoalEnergies],
    profile: &RiskProfile,
    nu: f64,
    raster_cells: usize,
) -> Result<CoverageResult> {
    let mut result = CoverageResult {
        base,
        radius,
        nu,
        profile: *profile,
        goals: Vec::new(),
        cvar_values: Vec::new(),
        path_lengths_m: Vec::new(),
        altitudes_m: Vec::new(),
        failed_plans: 0,
        failed_goals: Vec::new(),
        grid: None,
        notes: vec![PLANNER_NOTE.to_string()],
    };
    for g in evaluated {
        match &g.outcome {
            Ok(s) => {
                let risks = risk_transform_values(&s.energies, profile)?;
                result.goals.push(g.goal);
                result.cvar_values.push(conditional_value_at_risk(&risks.risks, nu)?);
                result.path_lengths_m.push(s.path_length_m);
                result.altitudes_m.push(s.altitude_m);
            }
            Err(msg) => {
                result.failed_plans += 1;
                result.failed_goals.push(g.goal);
                result.notes.push(format!("goal ({:.3}, {:.3}): {msg}", g.goal[0], g.goal[1]));
            }
        }
    }
    result.grid = idw_raster(base, radius, &result.goals, &result.cvar_values, raster_cells);
    Ok(result)
}

/// Coverage inputs other than the mission and profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub base: [f64; 2],
    pub radius: f64,
    pub goals: usize,
    pub nu: f64,
    pub raster_cells: usize,
}

/// Sample goals, evaluate energies once, and report CVaR per profile.
pub fn coverage_map_profiles(
    cfg: &CoverageConfig,
    map: &OccupancyMap,
    mission: &CoverageMission<'_>,
    profiles: &[RiskProfile],
    mc: &McConfig,
) -> Result<Vec<CoverageResult>> {
    for p in profiles {
        p.validate()?;
    }
    if !(cfg.nu > 0.0 && cfg.nu < 1.0) {
        return Err(Error::input(format!("risk level nu must lie in (0, 1), got {}", cfg.nu)));
    }
    if !map.is_free_at(cfg.base) {
        return Err(Error::input(format!("base {:?} is not in a free map cell", cfg.base)));
    }
    let mut rng = substream(mc.master_seed, GOAL_STREAM);
    let goals = sample_goals(cfg.base, cfg.radius, cfg.goals, map, &mut rng)?;
    let evaluated = goal_energies(cfg.base, &goals, map, mission, mc)?;
    profiles
        .iter()
        .map(|p| coverage_from_energies(cfg.base, cfg.radius, &evaluated, p, cfg.nu, cfg.raster_cells))
        .collect()
}

pub fn coverage_map(
    cfg: &CoverageConfig,
    map: &OccupancyMap,
    mission: &CoverageMission<'_>,
    profile: &RiskProfile,
    mc: &McConfig,
) -> Result<CoverageResult> {
    Ok(coverage_map_profiles(cfg, map, mission, std::slice::from_ref(profile), mc)?.remove(0))
}
