//! `assess`, `coverage` and `simulate`.

use std::path::Path;

use serde::Serialize;

use uavrisk::coverage::{coverage_map_profiles, CoverageConfig, CoverageMission, CoverageResult};
use uavrisk::flight::derive_features;
use uavrisk::montecarlo::{energy_histogram, integrate_energy, run_mc, simulate_run, McConfig, Scenario};
use uavrisk::risk::{risk_report, RiskProfile, RiskReport};
use uavrisk::Result;

use crate::config::Loaded;
use crate::output::OutDir;

fn mc_config(loaded: &Loaded, workers: Option<usize>) -> McConfig {
    let mut mc = loaded.config.mc;
    if let Some(w) = workers {
        mc.workers = w;
    }
    mc
}

#[derive(Serialize)]
struct AssessReport<'a> {
    report: &'a RiskReport,
    files: &'a std::collections::BTreeMap<String, String>,
}

pub fn assess(config: &Path, out: &Path, workers: Option<usize>) -> Result<()> {
    let loaded = Loaded::read(config, true, false)?;
    let plan = loaded.plan.as_ref().expect("trajectory required");
    let cfg = &loaded.config;
    let mc = mc_config(&loaded, workers);
    let scenario = Scenario {
        plan,
        controller: &cfg.controller,
        noise: &cfg.noise,
        sim: &cfg.sim,
        wind: &loaded.wind,
        model: loaded.model.as_ref(),
        context: &loaded.context,
    };
    let mut samples = run_mc(&scenario, &mc)?;
    samples.metadata.file_hashes = loaded.file_hashes.clone();
    let report = risk_report(&samples, &loaded.profile, cfg.risk.nu, mc.histogram_bins)?;
    let ehist = energy_histogram(&samples.energies, mc.histogram_bins)?;

    let mut dir = OutDir::create(out, &loaded.config_hash, mc.master_seed)?;
    dir.json(
        "report.json",
        &AssessReport {
            report: &report,
            files: &loaded.file_hashes,
        },
    )?;
    dir.csv("energy_samples.csv", &samples.to_csv_string())?;
    let mut body = String::from("bin_lo_j,bin_hi_j,count,probability\n");
    for i in 0..ehist.counts.len() {
        body.push_str(&format!(
            "{},{},{},{}\n",
            ehist.bin_edges[i],
            ehist.bin_edges[i + 1],
            ehist.counts[i],
            ehist.probabilities[i]
        ));
    }
    dir.csv("energy_histogram.csv", &body)?;
    let h = &report.histogram;
    let mut body = String::from("bin_lo,bin_hi,count,raw_probability,density\n");
    for i in 0..h.counts.len() {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            h.bin_edges[i],
            h.bin_edges[i + 1],
            h.counts[i],
            h.raw_probability[i],
            h.density[i]
        ));
    }
    dir.csv("risk_histogram.csv", &body)?;
    dir.finish("assess")?;

    println!("runs            {} ({} incomplete)", samples.records.len(), samples.incomplete_count);
    println!("mean energy     {:.1} J", report.mean_energy_j);
    println!("VaR energy      {:.1} J", report.var_energy_j);
    println!("VaR_{}        {:.6}", report.nu, report.var);
    println!("CVaR_{}       {:.6}  (cap {:.6})", report.nu, report.cvar, report.cap);
    println!("config hash     {}", loaded.config_hash);
    Ok(())
}

fn raster_csv(r: &CoverageResult) -> String {
    r.grid.as_ref().map_or_else(|| "x,y,cvar\n".to_string(), |g| g.to_csv_string())
}

pub fn coverage(config: &Path, out: &Path, workers: Option<usize>) -> Result<()> {
    let loaded = Loaded::read(config, false, true)?;
    let cfg = &loaded.config;
    let cov = cfg.coverage.as_ref().expect("coverage section checked on load");
    let map = loaded.map.as_ref().expect("map loaded");
    let mc = mc_config(&loaded, workers);
    let mission = CoverageMission {
        controller: &cfg.controller,
        noise: &cfg.noise,
        sim: &cfg.sim,
        wind: &loaded.wind,
        model: loaded.model.as_ref(),
        context: &loaded.context,
        cruise_altitude: cov.cruise_altitude,
        speed: cov.speed,
        out_and_back: cov.out_and_back,
    };
    let ccfg = CoverageConfig {
        base: cov.base,
        radius: cov.radius,
        goals: cov.goals,
        nu: cfg.risk.nu,
        raster_cells: cov.raster_cells,
    };
    let mut names = vec!["primary".to_string()];
    let mut profiles = vec![loaded.profile];
    for p in &cov.compare_profiles {
        names.push(p.name.clone());
        profiles.push(RiskProfile::new(p.gamma, p.lambda_floor, p.battery_capacity)?);
    }
    let results = coverage_map_profiles(&ccfg, map, &mission, &profiles, &mc)?;

    let mut dir = OutDir::create(out, &loaded.config_hash, mc.master_seed)?;
    for (name, r) in names.iter().zip(&results) {
        dir.json(&format!("coverage_{name}.json"), r)?;
        dir.csv(&format!("coverage_{name}.csv"), &r.to_csv_string())?;
        dir.csv(&format!("raster_{name}.csv"), &raster_csv(r))?;
        let max = r.cvar_values.iter().cloned().fold(f64::NAN, f64::max);
        println!(
            "{name:<10} goals {:>4}  failed plans {:>3}  max CVaR {max:.4}  (cap {:.4})",
            r.goals.len(),
            r.failed_plans,
            r.profile.cap()
        );
    }
    dir.finish("coverage")?;
    if let Some(r) = results.first() {
        println!("{}", r.notes[0]);
    }
    Ok(())
}

pub fn simulate(config: &Path, out: &Path, run_index: usize) -> Result<()> {
    let loaded = Loaded::read(config, true, false)?;
    let plan = loaded.plan.as_ref().expect("trajectory required");
    let cfg = &loaded.config;
    let scenario = Scenario {
        plan,
        controller: &cfg.controller,
        noise: &cfg.noise,
        sim: &cfg.sim,
        wind: &loaded.wind,
        model: loaded.model.as_ref(),
        context: &loaded.context,
    };
    let (history, inlet) = simulate_run(&scenario, cfg.mc.master_seed, run_index)?;
    let frames = derive_features(&history.states, &history.winds)?;
    let power = loaded.model.predict_series(&frames, &loaded.context);
    let energy = integrate_energy(&power, cfg.sim.dt);

    let mut body = String::from(
        "time_s,x,y,z,vx,vy,vz,yaw,pitch,wind_x,wind_y,wind_z,airspeed,airspeed_bx,airspeed_by,power_w\n",
    );
    for ((s, w), (f, p)) in history.states.iter().zip(&history.winds).zip(frames.iter().zip(&power)) {
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            s.time,
            s.position[0],
            s.position[1],
            s.position[2],
            s.velocity[0],
            s.velocity[1],
            s.velocity[2],
            s.yaw,
            s.pitch,
            w[0],
            w[1],
            w[2],
            f.airspeed,
            f.airspeed_body_x,
            f.airspeed_body_y,
            p
        ));
    }
    let mut dir = OutDir::create(out, &loaded.config_hash, cfg.mc.master_seed)?;
    dir.csv("trajectory.csv", &body)?;
    dir.json(
        "summary.json",
        &serde_json::json!({
            "run_index": run_index,
            "inlet": inlet,
            "complete": history.complete,
            "flight_time_s": history.duration(),
            "energy_j": energy,
            "power_model": loaded.model.describe(),
        }),
    )?;
    dir.finish("simulate")?;
    println!(
        "run {run_index}: inlet {:.2} deg / {:.2} m/s, {:.1} s, {:.1} J{}",
        inlet.angle_deg,
        inlet.speed,
        history.duration(),
        energy,
        if history.complete { "" } else { " (incomplete)" }
    );
    Ok(())
}
