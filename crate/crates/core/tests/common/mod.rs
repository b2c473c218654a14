//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use uavrisk::flight::{TrajectoryPlan, Waypoint};
use uavrisk::power::{AnalyticalCoefficients, TcnWeights};
use uavrisk::rng::SimRng;
use uavrisk::wind::{InletDistribution, WindFieldSet, WindGrid};

pub fn wp(x: f64, y: f64, z: f64, speed: f64) -> Waypoint {
    Waypoint {
        position: [x, y, z],
        yaw: 0.0,
        target_speed: speed,
    }
}

/// Closed rectangle starting and ending at the origin.
pub fn rectangle_plan(width: f64, height: f64, altitude: f64, speed: f64) -> TrajectoryPlan {
    TrajectoryPlan::new(
        "rectangle",
        vec![
            wp(0.0, 0.0, altitude, speed),
            wp(width, 0.0, altitude, speed),
            wp(width, height, altitude, speed),
            wp(0.0, height, altitude, speed),
            wp(0.0, 0.0, altitude, speed),
        ],
    )
    .unwrap()
}

/// Uniform fields every 45°, each a unit vector along its reference angle.
pub fn uniform_wind_set(inlet: InletDistribution) -> WindFieldSet {
    let grids = (0..8)
        .map(|k| {
            let a = (k as f64 * 45.0 - 180.0).to_radians();
            WindGrid::uniform([-500.0, -500.0, 0.0], 500.0, [3, 3, 2], [a.cos(), a.sin(), 0.0], k as f64 * 45.0 - 180.0, 1.0).unwrap()
        })
        .collect();
    WindFieldSet::new(grids, inlet).unwrap()
}

/// Plausible multirotor baseline: ~280 W hover, drag and climb terms.
pub fn baseline_model() -> AnalyticalCoefficients {
    AnalyticalCoefficients::new([280.0, -6.0, 1.2, 25.0, 4.0, 30.0, -40.0]).unwrap()
}

/// Random weights for the given stack shape; He-style scaling keeps deep nets finite.
pub fn random_tcn(rng: &mut SimRng, channels: usize, kernel: usize, layers: usize, stacks: usize) -> TcnWeights {
    let mut w = TcnWeights::zeros(channels, kernel, layers, stacks);
    let mut fill = |v: &mut [f64], fan_in: usize| {
        let s = (2.0 / fan_in as f64).sqrt();
        for x in v.iter_mut() {
            *x = s * rng.sample::<f64, _>(StandardNormal);
        }
    };
    for b in &mut w.blocks {
        let (c1, c2) = (&mut b.conv1, &mut b.conv2);
        fill(&mut c1.weights, c1.in_channels * c1.kernel_size);
        fill(&mut c1.bias, 10);
        fill(&mut c2.weights, c2.in_channels * c2.kernel_size);
        fill(&mut c2.bias, 10);
        if let Some(ds) = &mut b.downsample {
            fill(&mut ds.weights, ds.in_channels);
            fill(&mut ds.bias, 10);
        }
    }
    let head_in = w.head.weights.len();
    fill(&mut w.head.weights, head_in);
    w.head.bias = 0.1;
    let n = &mut w.normalization;
    n.feature_means = vec![5.0, 4.0, 0.0, 0.0, -0.05];
    n.feature_stds = vec![3.0, 3.0, 1.0, 0.8, 0.1];
    n.context_means = vec![1.2, 0.5];
    n.context_stds = vec![0.05, 0.5];
    n.target_mean = 300.0;
    n.target_std = 40.0;
    w.validate().unwrap();
    w
}
