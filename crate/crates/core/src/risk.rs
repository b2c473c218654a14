//! Risk-space transform and tail statistics.
//!
//! Energy `e` maps to risk through the battery-depletion profile
//!
//! ```text
//! G(e, b) = exp(γ / max(b − e, λ)) − 1
//! ```
//!
//! which grows exponentially as the reserve `b − e` shrinks and saturates at
//! `exp(γ/λ) − 1` once the reserve falls below `λ`. VaR is the lower empirical
//! quantile (order statistic `⌈ν·N⌉`, no interpolation) and CVaR is the
//! discrete Rockafellar–Uryasev estimator
//!
//! ```text
//! CVaR_ν = VaR_ν + Σ max(r_i − VaR_ν, 0) / ((1 − ν)·N)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::{bin_index, EnergySamples, McMetadata};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub gamma: f64,
    /// Reserve floor λ, J.
    pub lambda_floor: f64,
    /// Usable battery capacity b, J.
    pub battery_capacity: f64,
}

impl RiskProfile {
    pub fn new(gamma: f64, lambda_floor: f64, battery_capacity: f64) -> Result<Self> {
        let p = Self {
            gamma,
            lambda_floor,
            battery_capacity,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("lambda_floor", self.lambda_floor),
            ("battery_capacity", self.battery_capacity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!("risk profile {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Largest attainable risk, `exp(γ/λ) − 1`.
    pub fn cap(&self) -> f64 {
        (self.gamma / self.lambda_floor).exp_m1()
    }

    /// `G(e, b)`.
    pub fn risk(&self, energy: f64) -> f64 {
        let reserve = (self.battery_capacity - energy).max(self.lambda_floor);
        (self.gamma / reserve).exp_m1()
    }

    /// Energy whose risk equals `risk`, for `risk` strictly below the cap.
    pub fn energy_for_risk(&self, risk: f64) -> Option<f64> {
        if !(risk > 0.0) || risk >= self.cap() {
            return None;
        }
        Some(self.battery_capacity - self.gamma / risk.ln_1p())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSamples {
    pub risks: Vec<f64>,
    pub profile: RiskProfile,
    pub source: Option<McMetadata>,
}

/// Apply the risk profile elementwise.
pub fn risk_transform(energies: &EnergySamples, profile: &RiskProfile) -> Result<RiskSamples> {
    let mut r = risk_transform_values(&energies.energies, profile)?;
    r.source = Some(energies.metadata.clone());
    Ok(r)
}

pub fn risk_transform_values(energies: &[f64], profile: &RiskProfile) -> Result<RiskSamples> {
    profile.validate()?;
    Ok(RiskSamples {
        risks: energies.iter().map(|e| profile.risk(*e)).collect(),
        profile: *profile,
        source: None,
    })
}

fn check_level(nu: f64) -> Result<()> {
    if nu > 0.0 && nu < 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("risk level nu must lie in (0, 1), got {nu}")))
    }
}

/// `⌈ν·N⌉`, snapping products within 1e−9 of an integer so that e.g.
/// 0.95·100 selects order statistic 95 despite binary rounding.
pub fn quantile_rank(nu: f64, n: usize) -> usize {
    let x = nu * n as f64;
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 * x.max(1.0) { r } else { x.ceil() };
    (k as usize).clamp(1, n)
}

fn sorted(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::input("risk statistics need at least one sample"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::input("risk samples contain NaN"));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Lower empirical ν-quantile.
pub fn value_at_risk(risks: &[f64], nu: f64) -> Result<f64> {
    check_level(nu)?;
    let s = sorted(risks)?;
    Ok(s[quantile_rank(nu, s.len()) - 1])
}

/// Discrete Rockafellar–Uryasev CVaR.
pub fn conditional_value_at_risk(risks: &[f64], nu: f64) -> Result<f64> {
    let var = value_at_risk(risks, nu)?;
    let excess: f64 = risks.iter().map(|r| (r - var).max(0.0)).sum();
    Ok(var + excess / ((1.0 - nu) * risks.len() as f64))
}

pub fn var(risks: &RiskSamples, nu: f64) -> Result<f64> {
    value_at_risk(&risks.risks, nu)
}

pub fn cvar(risks: &RiskSamples, nu: f64) -> Result<f64> {
    conditional_value_at_risk(&risks.risks, nu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// `(M/N)·count`, literal empirical bin estimate; a density only for unit-width bins.
    pub raw_probability: Vec<f64>,
    /// `count / (N·width)`, integrates to 1 over `[0, cap]`.
    pub density: Vec<f64>,
}

/// `bins` equal-width bins over `[0, cap]`.
pub fn risk_histogram(risks: &RiskSamples, bins: usize) -> Result<RiskHistogram> {
    if risks.risks.is_empty() {
        return Err(Error::input("risk histogram needs at least one sample"));
    }
    if bins < 1 {
        return Err(Error::input("risk histogram needs at least one bin"));
    }
    let cap = risks.profile.cap();
    let width = cap / bins as f64;
    let n = risks.risks.len() as f64;
    let mut counts = vec![0usize; bins];
    for r in &risks.risks {
        counts[bin_index(*r, 0.0, width, bins)] += 1;
    }
    let bin_edges = (0..=bins).map(|i| if i == bins { cap } else { width * i as f64 }).collect();
    Ok(RiskHistogram {
        bin_edges,
        raw_probability: counts.iter().map(|c| bins as f64 / n * *c as f64).collect(),
        density: counts.iter().map(|c| *c as f64 / (n * width)).collect(),
        counts,
    })
}

/// Full risk summary as written by `assess`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub nu: f64,
    pub profile: RiskProfile,
    pub cap: f64,
    pub mean_risk: f64,
    pub var: f64,
    pub cvar: f64,
    pub mean_energy_j: f64,
    pub var_energy_j: f64,
    pub max_energy_j: f64,
    pub samples: usize,
    pub incomplete_runs: usize,
    pub quantile_convention: String,
    pub histogram: RiskHistogram,
    pub provenance: Option<McMetadata>,
}

pub fn risk_report(energies: &EnergySamples, profile: &RiskProfile, nu: f64, bins: usize) -> Result<RiskReport> {
    let risks = risk_transform(energies, profile)?;
    let var = var(&risks, nu)?;
    let cvar = cvar(&risks, nu)?;
    let n = risks.risks.len();
    Ok(RiskReport {
        nu,
        profile: *profile,
        cap: profile.cap(),
        mean_risk: risks.risks.iter().sum::<f64>() / n as f64,
        var,
        cvar,
        mean_energy_j: energies.mean(),
        var_energy_j: value_at_risk(&energies.energies, nu)?,
        max_energy_j: energies.energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        samples: n,
        incomplete_runs: energies.incomplete_count,
        quantile_convention: "lower empirical quantile, order statistic ceil(nu*N), no interpolation".into(),
        histogram: risk_histogram(&risks, bins)?,
        provenance: risks.source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn samples(values: Vec<f64>) -> RiskSamples {
        RiskSamples {
            risks: values,
            profile: RiskProfile::new(1.0, 1.0, 10.0).unwrap(),
            source: None,
        }
    }

    #[test]
    fn cap_region_value() {
        let p = RiskProfile::new(6.93, 10.0, 40.0).unwrap();
        let expected = 0.693f64.exp() - 1.0;
        for e in [30.0, 35.0, 40.0, 100.0] {
            assert!((p.risk(e) - expected).abs() < 1e-12);
        }
        assert!((p.risk(30.0) - 0.999705).abs() < 1e-6);
    }

    #[test]
    fn zero_energy_value() {
        let p = RiskProfile::new(6.93, 10.0, 40.0).unwrap();
        assert!((p.risk(0.0) - 0.189163).abs() < 1e-6, "{}", p.risk(0.0));
    }

    #[test]
    fn cap_continuity() {
        let p = RiskProfile::new(6.93, 10.0, 40.0).unwrap();
        assert_eq!(p.risk(30.0), p.cap());
        assert_eq!(p.risk(30.0), p.risk(31.0));
    }

    #[test]
    fn var_hand_quantile() {
        let r: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(value_at_risk(&r, 0.95).unwrap(), 95.0);
        assert_eq!(conditional_value_at_risk(&r, 0.95).unwrap(), 98.0);
    }

    #[test]
    fn equal_and_single_samples() {
        let r = vec![0.3; 17];
        for nu in [0.01, 0.5, 0.95, 0.999] {
            assert_eq!(value_at_risk(&r, nu).unwrap(), 0.3);
            assert_eq!(conditional_value_at_risk(&r, nu).unwrap(), 0.3);
        }
        assert_eq!(value_at_risk(&[0.7], 0.95).unwrap(), 0.7);
        assert_eq!(conditional_value_at_risk(&[0.7], 0.95).unwrap(), 0.7);
    }

    #[test]
    fn level_bounds_checked() {
        let r = samples(vec![1.0, 2.0]);
        for nu in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(var(&r, nu).is_err());
            assert!(cvar(&r, nu).is_err());
        }
        assert!(value_at_risk(&[], 0.5).is_err());
    }

    #[test]
    fn cvar_approaches_mean_at_small_levels() {
        let r: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let c = conditional_value_at_risk(&r, 1e-12).unwrap();
        assert!((c - mean).abs() < 1e-9, "{c} vs {mean}");
    }

    #[test]
    fn histogram_cap_and_split() {
        let p = RiskProfile::new(6.93, 10.0, 40.0).unwrap();
        let cap = p.cap();
        let s = RiskSamples {
            risks: vec![cap; 5],
            profile: p,
            source: None,
        };
        let h = risk_histogram(&s, 10).unwrap();
        assert_eq!(h.counts[9], 5);
        assert_eq!(h.counts.iter().sum::<usize>(), 5);

        let s = RiskSamples {
            risks: vec![0.1 * cap, 0.9 * cap],
            profile: p,
            source: None,
        };
        let h = risk_histogram(&s, 2).unwrap();
        assert_eq!(h.density[0], h.density[1]);
        assert_eq!(h.raw_probability, vec![1.0, 1.0]);
        let integral: f64 = h.density.iter().map(|d| d * cap / 2.0).sum();
        assert!((integral - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_risks_give_flat_density() {
        use rand::Rng;
        let p = RiskProfile::new(6.93, 10.0, 40.0).unwrap();
        let cap = p.cap();
        let mut rng = crate::rng::substream(8, 0);
        let s = RiskSamples {
            risks: (0..200_000).map(|_| rng.random_range(0.0..cap)).collect(),
            profile: p,
            source: None,
        };
        let h = risk_histogram(&s, 10).unwrap();
        for d in &h.density {
            assert!((d * cap - 1.0).abs() < 0.1, "{d}");
        }
    }

    #[test]
    fn energy_for_risk_inverts_profile() {
        let p = RiskProfile::new(64.0, 92_340.0, 369_360.0).unwrap();
        for e in [0.0, 30_000.0, 150_000.0, 270_000.0] {
            let back = p.energy_for_risk(p.risk(e)).unwrap();
            assert!((back - e).abs() < 1e-6 * (1.0 + e), "{e} -> {back}");
        }
        assert!(p.energy_for_risk(p.cap()).is_none());
    }

    proptest! {
        #[test]
        fn cvar_bounds(values in prop::collection::vec(0.0f64..10.0, 1..200), nu in 0.01f64..0.99) {
            let var = value_at_risk(&values, nu).unwrap();
            let c = conditional_value_at_risk(&values, nu).unwrap();
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(c >= var);
            prop_assert!(c <= max * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn cvar_positively_homogeneous(values in prop::collection::vec(0.0f64..10.0, 1..100), nu in 0.01f64..0.99, scale in 0.1f64..10.0) {
            let c = conditional_value_at_risk(&values, nu).unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
            let cs = conditional_value_at_risk(&scaled, nu).unwrap();
            prop_assert!((cs - scale * c).abs() <= 1e-9 * (1.0 + cs.abs()));
        }

        #[test]
        fn cvar_monotone(values in prop::collection::vec(0.0f64..10.0, 1..100), bumps in prop::collection::vec(0.0f64..2.0, 100), nu in 0.01f64..0.99) {
            let dominating: Vec<f64> = values.iter().zip(&bumps).map(|(v, b)| v + b).collect();
            let c = conditional_value_at_risk(&values, nu).unwrap();
            let cd = conditional_value_at_risk(&dominating, nu).unwrap();
            prop_assert!(cd >= c - 1e-12);
        }
    }
}
