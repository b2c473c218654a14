//! Pre-flight energy-risk assessment for multirotor UAVs.
//!
//! A planned trajectory is flown many times in simulation under sampled wind
//! and dynamics noise. Each run is pushed through a power model to obtain an
//! energy sample; the energy samples are mapped into a bounded risk space by a
//! battery-depletion risk profile, and the tail of that distribution is
//! summarised with VaR and CVaR.
//!
//! Module map:
//!
//! * [`flight`]: vehicle state, trajectories, feature frames and recorded flights
//! * [`power`]: TCN inference and the least-squares analytical baseline
//! * [`wind`]: gridded constant wind, inlet sampling and Dryden turbulence
//! * [`dynamics`]: closed-loop point-mass simulation
//! * [`montecarlo`]: parallel, seed-deterministic forward simulation
//! * [`risk`]: risk profile, VaR, CVaR and risk histograms
//! * [`metrics`]: MAPE and yaw-sectioned relative energy error
//! * [`coverage`]: occupancy maps, grid A* and CVaR coverage rasters

pub mod coverage;
pub mod dynamics;
pub mod error;
pub mod flight;
pub mod metrics;
pub mod montecarlo;
pub mod power;
pub mod risk;
pub mod rng;
pub mod wind;

mod util;

pub use error::{Error, Result};
pub use util::{file_sha256, sha256_hex, wrap_angle};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.80665;
