//! Instantaneous power prediction.

mod analytical;
mod tcn;

pub use analytical::{analytical_predict, fit_analytical, AnalyticalCoefficients, ANALYTICAL_BASIS};
pub use tcn::{
    tcn_forward, ConvLayer, Normalization, PointwiseLayer, ResidualBlock, TcnHead, TcnWeights,
    DEFAULT_CLAMP_FLOOR_W, SCHEMA_VERSION,
};

use std::path::Path;

use crate::error::{Error, Result};
use crate::flight::{ContextFeatures, FeatureFrame};

/// A model that maps a feature history to per-timestep power (W).
///
/// Implementations are immutable and shared by all Monte Carlo workers.
pub trait PowerModel: Send + Sync {
    /// Power at every index of `frames`, each prediction seeing only frames up
    /// to and including its own index.
    fn predict_series(&self, frames: &[FeatureFrame], context: &ContextFeatures) -> Vec<f64>;

    /// Sample period the model was trained at, if it is history dependent.
    fn sample_period(&self) -> Option<f64> {
        None
    }

    fn describe(&self) -> String;
}

/// Fixed power draw regardless of state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPower(pub f64);

impl PowerModel for ConstantPower {
    fn predict_series(&self, frames: &[FeatureFrame], _context: &ContextFeatures) -> Vec<f64> {
        vec![self.0; frames.len()]
    }

    fn describe(&self) -> String {
        format!("constant {} W", self.0)
    }
}

impl PowerModel for AnalyticalCoefficients {
    fn predict_series(&self, frames: &[FeatureFrame], context: &ContextFeatures) -> Vec<f64> {
        frames
            .iter()
            .map(|f| analytical_predict(self, f, context))
            .collect()
    }

    fn describe(&self) -> String {
        format!("analytical least-squares baseline beta={:?}", self.beta)
    }
}

impl PowerModel for TcnWeights {
    fn predict_series(&self, frames: &[FeatureFrame], context: &ContextFeatures) -> Vec<f64> {
        self.predict_sequence(frames, context)
    }

    fn sample_period(&self) -> Option<f64> {
        Some(self.sample_period_s)
    }

    fn describe(&self) -> String {
        format!(
            "TCN {} blocks, {} channels, receptive field {}",
            self.blocks.len(),
            self.channels(),
            self.receptive_field
        )
    }
}

/// Load a model file, telling TCN weights (`blocks`) from analytical
/// coefficients (`beta`) by their top-level keys.
pub fn load_model(path: &Path) -> Result<Box<dyn PowerModel>> {
    let text = crate::util::read_to_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        offset: 0,
        message: e.to_string(),
    })?;
    if v.get("blocks").is_some() {
        Ok(Box::new(TcnWeights::from_json_str(&text, path)?))
    } else if v.get("beta").is_some() {
        Ok(Box::new(AnalyticalCoefficients::load(path)?))
    } else {
        Err(Error::load(path, "neither TCN weights (\"blocks\") nor analytical coefficients (\"beta\")"))
    }
}
