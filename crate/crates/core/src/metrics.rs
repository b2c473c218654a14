//! Power-model evaluation: per-timestep MAPE and yaw-sectioned relative
//! energy error.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flight::ProcessedFlight;
use crate::util::wrap_angle;

/// Mean absolute percentage error, in percent.
pub fn mape(true_power: &[f64], predicted_power: &[f64]) -> Result<f64> {
    if true_power.is_empty() || true_power.len() != predicted_power.len() {
        return Err(Error::input(format!(
            "mape needs equal non-empty series, got {} and {}",
            true_power.len(),
            predicted_power.len()
        )));
    }
    if let Some(i) = true_power.iter().position(|y| !(*y > 0.0)) {
        return Err(Error::input(format!("true power at index {i} is not positive")));
    }
    let sum: f64 = true_power
        .iter()
        .zip(predicted_power)
        .map(|(y, p)| (y - p).abs() / y)
        .sum();
    Ok(sum / true_power.len() as f64 * 100.0)
}

/// Parameters of the yaw sectioning rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    pub threshold_deg: f64,
    pub dwell_s: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            threshold_deg: 15.0,
            dwell_s: 1.0,
        }
    }
}

/// Running circular mean anchored at the first sample.
struct YawMean {
    anchor: f64,
    offset_sum: f64,
    n: usize,
}

impl YawMean {
    fn new(yaw: f64) -> Self {
        Self {
            anchor: yaw,
            offset_sum: 0.0,
            n: 1,
        }
    }

    fn push(&mut self, yaw: f64) {
        self.offset_sum += wrap_angle(yaw - self.anchor);
        self.n += 1;
    }

    fn deviation(&self, yaw: f64) -> f64 {
        wrap_angle(yaw - (self.anchor + self.offset_sum / self.n as f64)).abs()
    }
}

/// Split a flight into constant-heading sections.
///
/// A new section starts where yaw leaves the current section's mean by more
/// than the threshold and then holds a steady heading (within the threshold
/// of its own running mean) for at least the dwell time. Samples of a turn
/// that never settles stay in the preceding section.
pub fn segment_by_yaw(flight: &ProcessedFlight, cfg: &SegmentConfig) -> Vec<Range<usize>> {
    segment_yaw_series(&flight.yaw_series, flight.sample_period, cfg)
}

pub fn segment_yaw_series(yaw: &[f64], sample_period: f64, cfg: &SegmentConfig) -> Vec<Range<usize>> {
    if yaw.is_empty() {
        return Vec::new();
    }
    let threshold = cfg.threshold_deg.to_radians();
    let mut starts = vec![0usize];
    let mut section = YawMean::new(yaw[0]);
    let mut candidate: Option<(usize, YawMean)> = None;

    for (i, &y) in yaw.iter().enumerate().skip(1) {
        if section.deviation(y) <= threshold {
            section.push(y);
            candidate = None;
            continue;
        }
        match candidate.as_mut() {
            Some((_, mean)) if mean.deviation(y) <= threshold => mean.push(y),
            _ => candidate = Some((i, YawMean::new(y))),
        }
        let (start, _) = candidate.as_ref().expect("candidate set above");
        let held = (i - start + 1) as f64 * sample_period;
        if held >= cfg.dwell_s - 1e-9 {
            let (start, mean) = candidate.take().expect("candidate set above");
            starts.push(start);
            section = mean;
        }
    }

    let mut ranges: Vec<Range<usize>> = starts.windows(2).map(|w| w[0]..w[1]).collect();
    ranges.push(*starts.last().unwrap()..yaw.len());
    ranges
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionEnergy {
    pub true_j: f64,
    pub predicted_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightEvaluation {
    pub mape_percent: f64,
    pub re_percent: f64,
    pub section_count: usize,
    pub sections: Vec<SectionEnergy>,
}

impl FlightEvaluation {
    /// Relative error of the whole-flight energy, percent.
    pub fn whole_flight_error_percent(&self) -> f64 {
        let t: f64 = self.sections.iter().map(|s| s.true_j).sum();
        let p: f64 = self.sections.iter().map(|s| s.predicted_j).sum();
        (t - p).abs() / t * 100.0
    }
}

/// Mean per-section relative energy error over the given sections.
pub fn relative_error_over_sections(sections: &[SectionEnergy]) -> Result<f64> {
    if sections.is_empty() {
        return Err(Error::Internal("no sections".into()));
    }
    let mut sum = 0.0;
    for s in sections {
        if !(s.true_j > 0.0) {
            return Err(Error::Internal("section with zero true energy".into()));
        }
        sum += (s.true_j - s.predicted_j).abs() / s.true_j;
    }
    Ok(sum / sections.len() as f64 * 100.0)
}

/// MAPE plus the yaw-sectioned adjusted relative energy error.
pub fn adjusted_re(flight: &ProcessedFlight, predicted_power: &[f64], cfg: &SegmentConfig) -> Result<FlightEvaluation> {
    if predicted_power.len() != flight.measured_power.len() {
        return Err(Error::input(format!(
            "prediction has {} samples, flight has {}",
            predicted_power.len(),
            flight.measured_power.len()
        )));
    }
    let mape_percent = mape(&flight.measured_power, predicted_power)?;
    let dt = flight.sample_period;
    let sections: Vec<SectionEnergy> = segment_by_yaw(flight, cfg)
        .into_iter()
        .map(|r| SectionEnergy {
            true_j: flight.measured_power[r.clone()].iter().map(|y| y * dt).sum(),
            predicted_j: predicted_power[r].iter().map(|y| y * dt).sum(),
        })
        .collect();
    Ok(FlightEvaluation {
        mape_percent,
        re_percent: relative_error_over_sections(&sections)?,
        section_count: sections.len(),
        sections,
    })
}
