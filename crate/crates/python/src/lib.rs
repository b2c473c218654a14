//! Python bindings: risk profiles and CVaR, plans, wind sets, power models,
//! Monte Carlo assessment, occupancy-map planning and coverage.
//!
//! Structured results (reports, coverage results) come back as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use uavrisk::coverage::{self, CoverageConfig, CoverageMission};
use uavrisk::dynamics::{ControllerConfig, DynamicsNoise, SimConfig};
use uavrisk::flight::{ContextFeatures, FeatureFrame, ProcessedFlight, Waypoint};
use uavrisk::metrics::{self, SegmentConfig};
use uavrisk::montecarlo::{run_mc, McConfig, Scenario};
use uavrisk::power::{self, AnalyticalCoefficients, ConstantPower};
use uavrisk::risk;
use uavrisk::wind::{self, InletDistribution, SampledInlet, WindGrid};
use uavrisk::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Input(_) | Error::Config(_) | Error::Load { .. } | Error::Parse { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Battery-depletion risk profile. All energies in joules.
#[pyclass(name = "RiskProfile", module = "uavrisk", frozen)]
struct PyRiskProfile {
    inner: risk::RiskProfile,
}

#[pymethods]
impl PyRiskProfile {
    #[new]
    fn new(gamma: f64, lambda_floor: f64, battery_capacity: f64) -> PyResult<Self> {
        Ok(Self {
            inner: risk::RiskProfile::new(gamma, lambda_floor, battery_capacity).map_err(err)?,
        })
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn lambda_floor(&self) -> f64 {
        self.inner.lambda_floor
    }

    #[getter]
    fn battery_capacity(&self) -> f64 {
        self.inner.battery_capacity
    }

    /// Largest attainable risk value.
    #[getter]
    fn cap(&self) -> f64 {
        self.inner.cap()
    }

    fn risk(&self, energy: f64) -> f64 {
        self.inner.risk(energy)
    }

    fn risks(&self, energies: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(risk::risk_transform_values(&energies, &self.inner).map_err(err)?.risks)
    }

    fn energy_for_risk(&self, risk: f64) -> Option<f64> {
        self.inner.energy_for_risk(risk)
    }

    fn __repr__(&self) -> String {
        format!(
            "RiskProfile(gamma={}, lambda_floor={}, battery_capacity={})",
            self.inner.gamma, self.inner.lambda_floor, self.inner.battery_capacity
        )
    }
}

#[pyfunction]
fn value_at_risk(risks: Vec<f64>, nu: f64) -> PyResult<f64> {
    risk::value_at_risk(&risks, nu).map_err(err)
}

#[pyfunction]
fn conditional_value_at_risk(risks: Vec<f64>, nu: f64) -> PyResult<f64> {
    risk::conditional_value_at_risk(&risks, nu).map_err(err)
}

/// Waypoint plan; waypoints are `(x, y, z, target_speed)` tuples.
#[pyclass(name = "TrajectoryPlan", module = "uavrisk", frozen)]
struct PyTrajectoryPlan {
    inner: uavrisk::flight::TrajectoryPlan,
}

#[pymethods]
impl PyTrajectoryPlan {
    #[new]
    #[pyo3(signature = (waypoints, name = "plan"))]
    fn new(waypoints: Vec<(f64, f64, f64, f64)>, name: &str) -> PyResult<Self> {
        let wps = waypoints
            .into_iter()
            .map(|(x, y, z, s)| Waypoint {
                position: [x, y, z],
                yaw: 0.0,
                target_speed: s,
            })
            .collect();
        Ok(Self {
            inner: uavrisk::flight::TrajectoryPlan::new(name, wps).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: uavrisk::flight::TrajectoryPlan::load(&path).map_err(err)?,
        })
    }

    #[getter]
    fn waypoints(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner
            .waypoints()
            .iter()
            .map(|w| (w.position[0], w.position[1], w.position[2], w.target_speed))
            .collect()
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length()
    }

    #[getter]
    fn mean_altitude(&self) -> f64 {
        self.inner.mean_altitude()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }

    fn __len__(&self) -> usize {
        self.inner.waypoints().len()
    }
}

/// Reference wind grids plus the inlet distribution runs draw from.
#[pyclass(name = "WindFieldSet", module = "uavrisk", frozen)]
struct PyWindFieldSet {
    inner: wind::WindFieldSet,
}

fn inlet(mean_angle_deg: f64, mean_speed: f64, std_angle_deg: f64, std_speed: f64) -> PyResult<InletDistribution> {
    InletDistribution::new(mean_angle_deg, mean_speed, std_angle_deg, std_speed).map_err(err)
}

#[pymethods]
impl PyWindFieldSet {
    /// Load grid CSVs.
    #[staticmethod]
    #[pyo3(signature = (paths, mean_angle_deg, mean_speed, std_angle_deg, std_speed))]
    fn load(paths: Vec<PathBuf>, mean_angle_deg: f64, mean_speed: f64, std_angle_deg: f64, std_speed: f64) -> PyResult<Self> {
        let grids = paths.iter().map(|p| WindGrid::load(p)).collect::<uavrisk::Result<Vec<_>>>().map_err(err)?;
        Ok(Self {
            inner: wind::WindFieldSet::new(grids, inlet(mean_angle_deg, mean_speed, std_angle_deg, std_speed)?).map_err(err)?,
        })
    }

    /// Spatially uniform unit fields every `step_deg`, each along its reference angle.
    #[staticmethod]
    #[pyo3(signature = (mean_angle_deg, mean_speed, std_angle_deg, std_speed, step_deg = 45.0, extent = 1000.0))]
    fn uniform(mean_angle_deg: f64, mean_speed: f64, std_angle_deg: f64, std_speed: f64, step_deg: f64, extent: f64) -> PyResult<Self> {
        if !(step_deg > 0.0 && step_deg <= 360.0) {
            return Err(PyValueError::new_err("step_deg must lie in (0, 360]"));
        }
        let n = (360.0 / step_deg).round().max(1.0) as usize;
        let grids = (0..n)
            .map(|k| {
                let ang = -180.0 + k as f64 * step_deg;
                let a = ang.to_radians();
                WindGrid::uniform([-extent / 2.0, -extent / 2.0, 0.0], extent / 2.0, [3, 3, 2], [a.cos(), a.sin(), 0.0], ang, 1.0)
            })
            .collect::<uavrisk::Result<Vec<_>>>()
            .map_err(err)?;
        Ok(Self {
            inner: wind::WindFieldSet::new(grids, inlet(mean_angle_deg, mean_speed, std_angle_deg, std_speed)?).map_err(err)?,
        })
    }

    /// Constant wind at `position` for a given inlet angle and speed.
    fn lookup(&self, angle_deg: f64, speed: f64, position: (f64, f64, f64)) -> (f64, f64, f64) {
        let w = wind::lookup_wind(&self.inner, &SampledInlet { angle_deg, speed }, [position.0, position.1, position.2]);
        (w[0], w[1], w[2])
    }

    fn __len__(&self) -> usize {
        self.inner.grids().len()
    }
}

/// Power model (TCN weights, analytical baseline or constant draw).
#[pyclass(name = "PowerModel", module = "uavrisk", frozen)]
struct PyPowerModel {
    inner: Box<dyn power::PowerModel>,
}

#[pymethods]
impl PyPowerModel {
    /// Load TCN weights or analytical coefficients from JSON.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: power::load_model(&path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn constant(watts: f64) -> PyResult<Self> {
        if !(watts > 0.0 && watts.is_finite()) {
            return Err(PyValueError::new_err("watts must be > 0"));
        }
        Ok(Self {
            inner: Box::new(ConstantPower(watts)),
        })
    }

    /// Seven coefficients over the basis `[1, v, v², vz, vz², payload_kg, alpha]`.
    #[staticmethod]
    fn analytical(beta: [f64; 7]) -> PyResult<Self> {
        Ok(Self {
            inner: Box::new(AnalyticalCoefficients::new(beta).map_err(err)?),
        })
    }

    /// Power per frame; frames are `(v, v_bx, v_by, v_z, alpha)` tuples.
    #[pyo3(signature = (frames, air_density = 1.225, payload_mass = 0.0))]
    fn predict(&self, frames: Vec<(f64, f64, f64, f64, f64)>, air_density: f64, payload_mass: f64) -> PyResult<Vec<f64>> {
        let ctx = ContextFeatures::new(air_density, payload_mass).map_err(err)?;
        let frames: Vec<FeatureFrame> = frames
            .into_iter()
            .map(|(a, b, c, d, e)| FeatureFrame {
                airspeed: a,
                airspeed_body_x: b,
                airspeed_body_y: c,
                vertical_speed: d,
                angle_of_attack: e,
            })
            .collect();
        Ok(self.inner.predict_series(&frames, &ctx))
    }

    #[getter]
    fn sample_period(&self) -> Option<f64> {
        self.inner.sample_period()
    }

    fn __repr__(&self) -> String {
        format!("PowerModel({})", self.inner.describe())
    }
}

/// Occupancy grid for coverage planning.
#[pyclass(name = "OccupancyMap", module = "uavrisk")]
struct PyOccupancyMap {
    inner: coverage::OccupancyMap,
}

#[pymethods]
impl PyOccupancyMap {
    #[staticmethod]
    fn empty(origin: (f64, f64), cell_size: f64, dims: (usize, usize)) -> PyResult<Self> {
        Ok(Self {
            inner: coverage::OccupancyMap::empty([origin.0, origin.1], cell_size, [dims.0, dims.1]).map_err(err)?,
        })
    }

    /// PGM image plus JSON sidecar (origin, cell size, optional heights).
    #[staticmethod]
    fn load(pgm: PathBuf, sidecar: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: coverage::OccupancyMap::load(&pgm, &sidecar).map_err(err)?,
        })
    }

    fn save(&self, pgm: PathBuf, sidecar: PathBuf) -> PyResult<()> {
        self.inner.save(&pgm, &sidecar).map_err(err)
    }

    fn set_occupied(&mut self, ix: usize, iy: usize, occupied: bool) -> PyResult<()> {
        if ix >= self.inner.dims[0] || iy >= self.inner.dims[1] {
            return Err(PyValueError::new_err("cell outside the map"));
        }
        self.inner.set_occupied([ix, iy], occupied);
        Ok(())
    }

    fn is_occupied(&self, ix: usize, iy: usize) -> bool {
        ix < self.inner.dims[0] && iy < self.inner.dims[1] && self.inner.is_occupied([ix, iy])
    }

    #[getter]
    fn dims(&self) -> (usize, usize) {
        (self.inner.dims[0], self.inner.dims[1])
    }

    /// One-way plan from `start` to `goal` at cruise altitude above the tallest crossed building.
    fn plan_path(&self, start: (f64, f64), goal: (f64, f64), cruise_altitude: f64, speed: f64) -> PyResult<PyTrajectoryPlan> {
        Ok(PyTrajectoryPlan {
            inner: coverage::plan_path(&self.inner, [start.0, start.1], [goal.0, goal.1], cruise_altitude, speed).map_err(err)?,
        })
    }

    fn plan_out_and_back(&self, base: (f64, f64), goal: (f64, f64), cruise_altitude: f64, speed: f64) -> PyResult<PyTrajectoryPlan> {
        Ok(PyTrajectoryPlan {
            inner: coverage::plan_out_and_back(&self.inner, [base.0, base.1], [goal.0, goal.1], cruise_altitude, speed).map_err(err)?,
        })
    }
}

struct Common {
    sim: SimConfig,
    noise: DynamicsNoise,
    controller: ControllerConfig,
    context: ContextFeatures,
    mc: McConfig,
}

#[allow(clippy::too_many_arguments)]
fn common(runs: usize, seed: u64, workers: usize, dt: f64, accel_std: f64, air_density: f64, payload_mass: f64) -> PyResult<Common> {
    Ok(Common {
        sim: SimConfig {
            dt,
            ..SimConfig::default()
        },
        noise: DynamicsNoise {
            accel_std: [accel_std; 3],
        },
        controller: ControllerConfig::default(),
        context: ContextFeatures::new(air_density, payload_mass).map_err(err)?,
        mc: McConfig {
            runs,
            master_seed: seed,
            workers,
            ..McConfig::default()
        },
    })
}

/// Monte Carlo energy sweep plus risk report, as a dict with `energies` and `report`.
#[pyfunction]
#[pyo3(signature = (plan, wind, model, profile, nu = 0.95, runs = 1000, seed = 0, workers = 0, dt = 0.1, accel_std = 0.0, air_density = 1.225, payload_mass = 0.0))]
#[allow(clippy::too_many_arguments)]
fn assess<'py>(
    py: Python<'py>,
    plan: &PyTrajectoryPlan,
    wind: &PyWindFieldSet,
    model: &PyPowerModel,
    profile: &PyRiskProfile,
    nu: f64,
    runs: usize,
    seed: u64,
    workers: usize,
    dt: f64,
    accel_std: f64,
    air_density: f64,
    payload_mass: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let c = common(runs, seed, workers, dt, accel_std, air_density, payload_mass)?;
    let scenario = Scenario {
        plan: &plan.inner,
        controller: &c.controller,
        noise: &c.noise,
        sim: &c.sim,
        wind: &wind.inner,
        model: model.inner.as_ref(),
        context: &c.context,
    };
    let prof = profile.inner;
    let (samples, report) = py
        .detach(|| {
            let samples = run_mc(&scenario, &c.mc)?;
            let report = risk::risk_report(&samples, &prof, nu, c.mc.histogram_bins)?;
            Ok::<_, Error>((samples, report))
        })
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("energies", samples.energies.clone())?;
    out.set_item("records", to_py(py, &samples.records)?)?;
    out.set_item("report", to_py(py, &report)?)?;
    Ok(out)
}

/// CVaR over goals sampled in a disc around `base`; returns the coverage result as a dict.
#[pyfunction]
#[pyo3(signature = (map, base, radius, goals, wind, model, profile, nu = 0.95, runs = 200, seed = 0, workers = 0, cruise_altitude = 30.0, speed = 5.0, out_and_back = true, raster_cells = 41, dt = 0.1, accel_std = 0.0, air_density = 1.225, payload_mass = 0.0))]
#[allow(clippy::too_many_arguments)]
fn coverage_map<'py>(
    py: Python<'py>,
    map: &PyOccupancyMap,
    base: (f64, f64),
    radius: f64,
    goals: usize,
    wind: &PyWindFieldSet,
    model: &PyPowerModel,
    profile: &PyRiskProfile,
    nu: f64,
    runs: usize,
    seed: u64,
    workers: usize,
    cruise_altitude: f64,
    speed: f64,
    out_and_back: bool,
    raster_cells: usize,
    dt: f64,
    accel_std: f64,
    air_density: f64,
    payload_mass: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let c = common(runs, seed, workers, dt, accel_std, air_density, payload_mass)?;
    let mission = CoverageMission {
        controller: &c.controller,
        noise: &c.noise,
        sim: &c.sim,
        wind: &wind.inner,
        model: model.inner.as_ref(),
        context: &c.context,
        cruise_altitude,
        speed,
        out_and_back,
    };
    let cfg = CoverageConfig {
        base: [base.0, base.1],
        radius,
        goals,
        nu,
        raster_cells,
    };
    let m = &map.inner;
    let prof = profile.inner;
    let result = py.detach(|| coverage::coverage_map(&cfg, m, &mission, &prof, &c.mc)).map_err(err)?;
    to_py(py, &result)
}

/// Per-timestep mean absolute percentage error, percent.
#[pyfunction]
fn mape(true_power: Vec<f64>, predicted_power: Vec<f64>) -> PyResult<f64> {
    metrics::mape(&true_power, &predicted_power).map_err(err)
}

/// MAPE and yaw-sectioned relative energy error of `model` (or of `predicted`) on a flight CSV.
#[pyfunction]
#[pyo3(signature = (flight_csv, model = None, predicted = None, threshold_deg = 15.0, dwell_s = 1.0))]
fn evaluate_flight<'py>(
    py: Python<'py>,
    flight_csv: PathBuf,
    model: Option<&PyPowerModel>,
    predicted: Option<Vec<f64>>,
    threshold_deg: f64,
    dwell_s: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let flight = ProcessedFlight::load(&flight_csv).map_err(err)?;
    let pred = match (model, predicted) {
        (Some(m), None) => m.inner.predict_series(&flight.frames, &flight.context),
        (None, Some(p)) => p,
        _ => return Err(PyValueError::new_err("pass exactly one of model or predicted")),
    };
    let ev = metrics::adjusted_re(&flight, &pred, &SegmentConfig { threshold_deg, dwell_s }).map_err(err)?;
    to_py(py, &ev)
}

/// Dryden turbulence intensities and length scales at `altitude` for the 6 m wind speed `w20`.
#[pyfunction]
fn dryden_sigmas(altitude: f64, w20: f64) -> ([f64; 3], [f64; 3]) {
    wind::dryden_sigmas(altitude, w20)
}

#[pymodule]
#[pyo3(name = "uavrisk")]
fn uavrisk_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyRiskProfile>()?;
    m.add_class::<PyTrajectoryPlan>()?;
    m.add_class::<PyWindFieldSet>()?;
    m.add_class::<PyPowerModel>()?;
    m.add_class::<PyOccupancyMap>()?;
    m.add_function(wrap_pyfunction!(value_at_risk, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_value_at_risk, m)?)?;
    m.add_function(wrap_pyfunction!(assess, m)?)?;
    m.add_function(wrap_pyfunction!(coverage_map, m)?)?;
    m.add_function(wrap_pyfunction!(mape, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_flight, m)?)?;
    m.add_function(wrap_pyfunction!(dryden_sigmas, m)?)?;
    Ok(())
}
