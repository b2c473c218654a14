//! Mission configuration: one TOML document, paths relative to its directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use uavrisk::coverage::OccupancyMap;
use uavrisk::dynamics::{ControllerConfig, DynamicsNoise, SimConfig};
use uavrisk::flight::{ContextFeatures, TrajectoryPlan};
use uavrisk::montecarlo::McConfig;
use uavrisk::power::{AnalyticalCoefficients, ConstantPower, PowerModel, TcnWeights};
use uavrisk::risk::RiskProfile;
use uavrisk::wind::{InletDistribution, WindFieldSet, WindGrid};
use uavrisk::{file_sha256, sha256_hex, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub files: FileConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub inlet: InletDistribution,
    pub risk: RiskConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub noise: DynamicsNoise,
    #[serde(default)]
    pub context: ContextSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageSection>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Waypoint CSV; required by `assess` and `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    /// One CSV per reference inlet angle.
    pub wind_grids: Vec<PathBuf>,
    /// TCN weights or analytical coefficients (JSON); unused for `kind = "constant"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_model: Option<PathBuf>,
    /// Occupancy PGM; required by `coverage`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<PathBuf>,
    /// Georeferencing JSON; defaults to the map path with a `.json` extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_sidecar: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Decide from the file content.
    #[default]
    Auto,
    Tcn,
    Analytical,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Power for `kind = "constant"`, W.
    pub constant_w: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Auto,
            constant_w: 250.0,
        }
    }
}

/// Risk profile in joules plus the CVaR level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskConfig {
    pub gamma: f64,
    pub lambda_floor: f64,
    pub battery_capacity: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
}

fn default_nu() -> f64 {
    0.95
}

impl RiskConfig {
    pub fn profile(&self) -> Result<RiskProfile> {
        RiskProfile::new(self.gamma, self.lambda_floor, self.battery_capacity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextSection {
    pub air_density: f64,
    pub payload_mass: f64,
}

impl Default for ContextSection {
    fn default() -> Self {
        let c = ContextFeatures::default();
        Self {
            air_density: c.air_density,
            payload_mass: c.payload_mass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSection {
    pub base: [f64; 2],
    pub radius: f64,
    pub goals: usize,
    #[serde(default = "default_cruise")]
    pub cruise_altitude: f64,
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_true")]
    pub out_and_back: bool,
    #[serde(default = "default_raster")]
    pub raster_cells: usize,
    /// Further profiles evaluated on the same energy samples.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compare_profiles: Vec<NamedProfile>,
}

fn default_cruise() -> f64 {
    30.0
}
fn default_speed() -> f64 {
    5.0
}
fn default_true() -> bool {
    true
}
fn default_raster() -> usize {
    41
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedProfile {
    pub name: String,
    pub gamma: f64,
    pub lambda_floor: f64,
    pub battery_capacity: f64,
}

impl MissionConfig {
    /// Every section with its default, file paths as placeholders.
    #[allow(clippy::approx_constant)] // 3.14 m/s is a wind speed
    pub fn template() -> Self {
        Self {
            files: FileConfig {
                trajectory: Some("trajectory.csv".into()),
                wind_grids: vec!["wind_000.csv".into(), "wind_090.csv".into()],
                power_model: Some("weights.json".into()),
                map: Some("map.pgm".into()),
                map_sidecar: Some("map.json".into()),
            },
            model: ModelConfig::default(),
            inlet: InletDistribution {
                mean_angle_deg: -2.53,
                mean_speed: 3.14,
                std_angle_deg: 28.47,
                std_speed: 1.55,
            },
            risk: RiskConfig {
                gamma: 64_000.0,
                lambda_floor: 92_340.0,
                battery_capacity: 369_360.0,
                nu: default_nu(),
            },
            mc: McConfig::default(),
            sim: SimConfig::default(),
            controller: ControllerConfig::default(),
            noise: DynamicsNoise::default(),
            context: ContextSection::default(),
            coverage: Some(CoverageSection {
                base: [0.0, 0.0],
                radius: 200.0,
                goals: 100,
                cruise_altitude: default_cruise(),
                speed: default_speed(),
                out_and_back: true,
                raster_cells: default_raster(),
                compare_profiles: vec![NamedProfile {
                    name: "generous".into(),
                    gamma: 64_000.0,
                    lambda_floor: 92_340.0,
                    battery_capacity: 738_720.0,
                }],
            }),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.into(),
            offset: e.span().map_or(0, |s| s.start),
            message: e.message().to_string(),
        })
    }
}

/// A config with every referenced file loaded and checked.
pub struct Loaded {
    pub config: MissionConfig,
    pub plan: Option<TrajectoryPlan>,
    pub wind: WindFieldSet,
    pub model: Box<dyn PowerModel>,
    pub context: ContextFeatures,
    pub profile: RiskProfile,
    pub map: Option<OccupancyMap>,
    /// Path as written in the config → SHA-256 of the file.
    pub file_hashes: BTreeMap<String, String>,
    /// Hash of the parsed config and every input file's hash.
    pub config_hash: String,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn must_exist(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Load {
            path: path.into(),
            message: format!("{what} file not found"),
        })
    }
}

pub fn load_model(kind: ModelKind, constant_w: f64, path: Option<&Path>) -> Result<Box<dyn PowerModel>> {
    if kind == ModelKind::Constant {
        if !(constant_w > 0.0 && constant_w.is_finite()) {
            return Err(Error::Config("model.constant_w must be > 0".into()));
        }
        return Ok(Box::new(ConstantPower(constant_w)));
    }
    let path = path.ok_or_else(|| Error::Config("files.power_model is required for this model kind".into()))?;
    must_exist(path, "power model")?;
    Ok(match kind {
        ModelKind::Tcn => Box::new(TcnWeights::load(path)?),
        ModelKind::Analytical => Box::new(AnalyticalCoefficients::load(path)?),
        _ => uavrisk::power::load_model(path)?,
    })
}

impl Loaded {
    pub fn read(config_path: &Path, need_trajectory: bool, need_map: bool) -> Result<Self> {
        must_exist(config_path, "config")?;
        let text = std::fs::read_to_string(config_path).map_err(|e| Error::Io {
            path: config_path.into(),
            source: e,
        })?;
        let config = MissionConfig::from_toml(&text, config_path)?;
        let base = config_path.parent().unwrap_or(Path::new("."));
        let mut file_hashes = BTreeMap::new();
        let mut hashed = |shown: &Path, real: &Path, what: &str| -> Result<()> {
            must_exist(real, what)?;
            file_hashes.insert(shown.display().to_string(), file_sha256(real)?);
            Ok(())
        };

        let plan = match (&config.files.trajectory, need_trajectory) {
            (Some(p), _) => {
                let real = resolve(base, p);
                hashed(p, &real, "trajectory")?;
                Some(TrajectoryPlan::load(&real)?)
            }
            (None, true) => return Err(Error::Config("files.trajectory is required".into())),
            (None, false) => None,
        };

        if config.files.wind_grids.is_empty() {
            return Err(Error::Config("files.wind_grids must list at least one grid".into()));
        }
        let mut grids = Vec::new();
        for p in &config.files.wind_grids {
            let real = resolve(base, p);
            hashed(p, &real, "wind grid")?;
            grids.push(WindGrid::load(&real)?);
        }
        config.inlet.validate()?;
        let wind = WindFieldSet::new(grids, config.inlet)?;

        let model_path = config.files.power_model.as_ref().map(|p| resolve(base, p));
        if let (Some(p), Some(real)) = (&config.files.power_model, &model_path) {
            if config.model.kind != ModelKind::Constant {
                hashed(p, real, "power model")?;
            }
        }
        let model = load_model(config.model.kind, config.model.constant_w, model_path.as_deref())?;

        config.sim.validate()?;
        config.controller.validate()?;
        config.noise.validate()?;
        config.mc.validate()?;
        if let Some(period) = model.sample_period() {
            if (period - config.sim.dt).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "power model sample period {period} s does not match sim.dt {} s",
                    config.sim.dt
                )));
            }
        }
        let context = ContextFeatures::new(config.context.air_density, config.context.payload_mass)?;
        let profile = config.risk.profile()?;
        if !(config.risk.nu > 0.0 && config.risk.nu < 1.0) {
            return Err(Error::Config(format!("risk.nu must lie in (0, 1), got {}", config.risk.nu)));
        }

        let map = if need_map {
            if config.coverage.is_none() {
                return Err(Error::Config("a [coverage] section is required".into()));
            }
            let p = config
                .files
                .map
                .as_ref()
                .ok_or_else(|| Error::Config("files.map is required".into()))?;
            let real = resolve(base, p);
            let side_shown = config.files.map_sidecar.clone().unwrap_or_else(|| p.with_extension("json"));
            let side = resolve(base, &side_shown);
            hashed(p, &real, "occupancy map")?;
            hashed(&side_shown, &side, "map sidecar")?;
            Some(OccupancyMap::load(&real, &side)?)
        } else {
            None
        };

        let doc = serde_json::json!({ "config": config, "files": file_hashes });
        let config_hash = sha256_hex(doc.to_string().as_bytes());
        Ok(Self {
            config,
            plan,
            wind,
            model,
            context,
            profile,
            map,
            file_hashes,
            config_hash,
        })
    }
}
