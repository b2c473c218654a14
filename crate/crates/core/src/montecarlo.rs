//! Monte Carlo forward simulation of mission energy.
//!
//! Run `i` draws from three ChaCha substreams of the master seed (inlet,
//! turbulence, dynamics noise), so its result is a pure function of
//! `(master_seed, i)` and the shared inputs. Results are assembled in run
//! order, independent of the worker count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_flight, ControllerConfig, DynamicsNoise, FlightHistory, SimConfig};
use crate::error::{Error, Result};
use crate::flight::{derive_features, ContextFeatures, TrajectoryPlan};
use crate::power::PowerModel;
use crate::rng::{substream, RNG_ALGORITHM};
use crate::util::sha256_hex;
use crate::wind::{body_to_inertial, dryden_step, lookup_wind, sample_inlet, DrydenParams, DrydenState, SampledInlet, WindFieldSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub runs: usize,
    pub master_seed: u64,
    pub histogram_bins: usize,
    /// Keep runs that hit the time limit (with their energy so far).
    pub include_incomplete: bool,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            runs: 1000,
            master_seed: 0,
            histogram_bins: 50,
            include_incomplete: true,
            workers: 0,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(Error::config("runs must be >= 1"));
        }
        if self.histogram_bins < 2 {
            return Err(Error::config("histogram_bins must be >= 2"));
        }
        Ok(())
    }
}

/// Everything one Monte Carlo sweep needs besides its [`McConfig`].
#[derive(Clone, Copy)]
pub struct Scenario<'a> {
    pub plan: &'a TrajectoryPlan,
    pub controller: &'a ControllerConfig,
    pub noise: &'a DynamicsNoise,
    pub sim: &'a SimConfig,
    pub wind: &'a WindFieldSet,
    pub model: &'a dyn PowerModel,
    pub context: &'a ContextFeatures,
}

impl Scenario<'_> {
    fn check(&self) -> Result<()> {
        self.controller.validate()?;
        self.noise.validate()?;
        self.sim.validate()?;
        if let Some(period) = self.model.sample_period() {
            if (period - self.sim.dt).abs() > 1e-9 {
                return Err(Error::config(format!(
                    "power model sample period {period} s does not match simulation dt {} s",
                    self.sim.dt
                )));
            }
        }
        Ok(())
    }

    /// Hash of the serialised configuration, embedded in every output.
    pub fn config_hash(&self, mc: &McConfig) -> String {
        let doc = serde_json::json!({
            "plan": self.plan,
            "controller": self.controller,
            "noise": self.noise,
            "sim": self.sim,
            "wind": {
                "inlet": self.wind.inlet,
                "grids": self.wind.grids().iter().map(|g| serde_json::json!({
                    "ref_angle_deg": g.ref_angle_deg,
                    "ref_speed": g.ref_speed,
                    "dims": g.dims,
                    "vectors_sha256": sha256_hex(&g.vectors.iter().flatten().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>()),
                })).collect::<Vec<_>>(),
            },
            "model": self.model.describe(),
            "context": self.context,
            "mc": { "runs": mc.runs, "master_seed": mc.master_seed, "histogram_bins": mc.histogram_bins, "include_incomplete": mc.include_incomplete },
        });
        sha256_hex(doc.to_string().as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub energy_j: f64,
    pub complete: bool,
    pub flight_time_s: f64,
    pub inlet: SampledInlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McMetadata {
    pub master_seed: u64,
    pub runs: usize,
    pub histogram_bins: usize,
    pub include_incomplete: bool,
    pub rng_algorithm: String,
    pub config_hash: String,
    pub power_model: String,
    pub integration_rule: String,
    pub notes: Vec<String>,
    /// Input file path → SHA-256, filled in by callers that loaded files.
    pub file_hashes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySamples {
    /// One record per run, ordered by run index.
    pub records: Vec<RunRecord>,
    /// Energies used downstream (J): every run, or complete runs only.
    pub energies: Vec<f64>,
    pub incomplete_count: usize,
    pub metadata: McMetadata,
}

impl EnergySamples {
    /// `run,energy_j,complete` CSV.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("run,energy_j,complete\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.run, r.energy_j, r.complete as u8));
        }
        out
    }

    pub fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(&self.metadata).expect("metadata serialises")
    }

    pub fn mean(&self) -> f64 {
        self.energies.iter().sum::<f64>() / self.energies.len() as f64
    }
}

/// Left-rectangle energy: Σ P[k]·dt over every interval of the history.
pub fn integrate_energy(power: &[f64], dt: f64) -> f64 {
    power
        .iter()
        .take(power.len().saturating_sub(1))
        .map(|p| p * dt)
        .sum()
}

/// Simulate run `index` and return its state history and sampled inlet.
pub fn simulate_run(scenario: &Scenario<'_>, master_seed: u64, index: usize) -> Result<(FlightHistory, SampledInlet)> {
    let i = index as u64;
    let mut inlet_rng = substream(master_seed, 3 * i);
    let mut turb_rng = substream(master_seed, 3 * i + 1);
    let mut noise_rng = substream(master_seed, 3 * i + 2);

    let inlet = sample_inlet(&scenario.wind.inlet, &mut inlet_rng);
    let mut dryden = DrydenState::new(DrydenParams {
        altitude: scenario.plan.mean_altitude(),
        mean_wind_speed_6m: inlet.speed,
        airspeed: scenario.plan.mean_target_speed(),
        timestep: scenario.sim.dt,
    });
    dryden.spin_up(&mut turb_rng);

    let wind = scenario.wind;
    let history = simulate_flight(
        scenario.plan,
        scenario.controller,
        scenario.noise,
        scenario.sim,
        |p| lookup_wind(wind, &inlet, p),
        |yaw| body_to_inertial(dryden_step(&mut dryden, &mut turb_rng), yaw),
        &mut noise_rng,
    )?;
    Ok((history, inlet))
}

fn run_one(scenario: &Scenario<'_>, master_seed: u64, index: usize) -> Result<RunRecord> {
    let (history, inlet) = simulate_run(scenario, master_seed, index)?;
    let frames = derive_features(&history.states, &history.winds)?;
    let power = scenario.model.predict_series(&frames, scenario.context);
    Ok(RunRecord {
        run: index,
        energy_j: integrate_energy(&power, scenario.sim.dt),
        complete: history.complete,
        flight_time_s: history.duration(),
        inlet,
    })
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

/// Run the Monte Carlo sweep.
pub fn run_mc(scenario: &Scenario<'_>, mc: &McConfig) -> Result<EnergySamples> {
    mc.validate()?;
    scenario.check()?;
    let pool = thread_pool(mc.workers)?;
    let records: Result<Vec<RunRecord>> = pool.install(|| {
        (0..mc.runs)
            .into_par_iter()
            .map(|i| run_one(scenario, mc.master_seed, i))
            .collect()
    });
    assemble(records?, scenario, mc)
}

/// Sequential variant used inside an outer parallel loop.
pub(crate) fn run_mc_sequential(scenario: &Scenario<'_>, mc: &McConfig) -> Result<EnergySamples> {
    mc.validate()?;
    scenario.check()?;
    let records: Result<Vec<RunRecord>> = (0..mc.runs).map(|i| run_one(scenario, mc.master_seed, i)).collect();
    assemble(records?, scenario, mc)
}

fn assemble(records: Vec<RunRecord>, scenario: &Scenario<'_>, mc: &McConfig) -> Result<EnergySamples> {
    let incomplete_count = records.iter().filter(|r| !r.complete).count();
    let energies: Vec<f64> = records
        .iter()
        .filter(|r| mc.include_incomplete || r.complete)
        .map(|r| r.energy_j)
        .collect();
    if energies.is_empty() {
        return Err(Error::Internal("every run was incomplete and excluded".into()));
    }
    if let Some(bad) = energies.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(Error::Internal(format!("non-positive or non-finite energy {bad}")));
    }
    Ok(EnergySamples {
        records,
        energies,
        incomplete_count,
        metadata: McMetadata {
            master_seed: mc.master_seed,
            runs: mc.runs,
            histogram_bins: mc.histogram_bins,
            include_incomplete: mc.include_incomplete,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            config_hash: scenario.config_hash(mc),
            power_model: scenario.model.describe(),
            integration_rule: "left-rectangle".into(),
            notes: vec![
                "constant wind: nearest reference-angle grid scaled linearly by sampled inlet speed".into(),
                "turbulence: Dryden low-altitude, W20 taken as the sampled inlet speed".into(),
            ],
            file_hashes: BTreeMap::new(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyHistogram {
    /// `bins + 1` edges in J.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Sums to exactly 1.
    pub probabilities: Vec<f64>,
}

/// Equal-width histogram over `[min, max]`, last bin right-inclusive.
///
/// A zero-width span collapses to a single bin of width 1 J.
pub fn energy_histogram(energies: &[f64], bins: usize) -> Result<EnergyHistogram> {
    if energies.is_empty() {
        return Err(Error::input("histogram needs at least one sample"));
    }
    if bins < 1 {
        return Err(Error::input("histogram needs at least one bin"));
    }
    let lo = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (bins, width) = if hi > lo {
        (bins, (hi - lo) / bins as f64)
    } else {
        (1, 1.0f64.max(f64::EPSILON * lo.abs()))
    };
    let mut counts = vec![0usize; bins];
    for e in energies {
        counts[bin_index(*e, lo, width, bins)] += 1;
    }
    let bin_edges = (0..=bins)
        .map(|i| if i == bins && hi > lo { hi } else { lo + width * i as f64 })
        .collect();
    Ok(EnergyHistogram {
        bin_edges,
        probabilities: probabilities(&counts, energies.len()),
        counts,
    })
}

pub(crate) fn bin_index(x: f64, lo: f64, width: f64, bins: usize) -> usize {
    let idx = ((x - lo) / width).floor();
    if idx < 0.0 {
        0
    } else {
        (idx as usize).min(bins - 1)
    }
}

/// Count fractions with the last bin absorbing rounding so the sum is exactly 1.
pub(crate) fn probabilities(counts: &[usize], n: usize) -> Vec<f64> {
    let mut p: Vec<f64> = counts.iter().map(|c| *c as f64 / n as f64).collect();
    let head: f64 = p[..p.len() - 1].iter().sum();
    if let Some(last) = p.last_mut() {
        *last = 1.0 - head;
    }
    p
}
