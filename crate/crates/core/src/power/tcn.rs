//! Temporal convolutional network inference.
//!
//! Each residual block applies two dilated causal convolutions with a ReLU
//! after each, adds the (optionally 1×1-projected) block input, and applies a
//! final ReLU. The channel vector at the last timestep is concatenated with
//! the normalised context features and fed to a dense head.
//!
//! Convolution tap `k` of a layer with kernel size `K` and dilation `d` reads
//! input timestep `t − (K − 1 − k)·d`; timesteps before the start of the
//! sequence read zero.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flight::{ContextFeatures, FeatureFrame, FRAME_CONVENTION};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_CLAMP_FLOOR_W: f64 = 1.0;

const N_FEATURES: usize = 5;
const N_CONTEXT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub context_means: Vec<f64>,
    pub context_stds: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Normalization {
    /// Unit statistics: inputs pass through unchanged.
    pub fn identity() -> Self {
        Self {
            feature_means: vec![0.0; N_FEATURES],
            feature_stds: vec![1.0; N_FEATURES],
            context_means: vec![0.0; N_CONTEXT],
            context_stds: vec![1.0; N_CONTEXT],
            target_mean: 0.0,
            target_std: 1.0,
        }
    }
}

/// Causal dilated 1-D convolution. `weights` is row-major `out × in × kernel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub kernel_size: usize,
    pub dilation: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(kernel_size: usize, dilation: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kernel_size,
            dilation,
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * in_channels * kernel_size],
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize, tap: usize) -> f64 {
        self.weights[(out * self.in_channels + inp) * self.kernel_size + tap]
    }

    /// `x` is channel-major `in_channels × len`; returns `out_channels × len`.
    fn apply(&self, x: &[f64], len: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.out_channels * len];
        for o in 0..self.out_channels {
            let row = &mut y[o * len..(o + 1) * len];
            row.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let xi = &x[i * len..(i + 1) * len];
                for k in 0..self.kernel_size {
                    let w = self.weight(o, i, k);
                    let shift = (self.kernel_size - 1 - k) * self.dilation;
                    if shift >= len {
                        continue;
                    }
                    for (yt, xs) in row[shift..].iter_mut().zip(xi) {
                        *yt += w * xs;
                    }
                }
            }
        }
        y
    }
}

/// 1×1 residual projection, row-major `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl PointwiseLayer {
    fn apply(&self, x: &[f64], len: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.out_channels * len];
        for o in 0..self.out_channels {
            let row = &mut y[o * len..(o + 1) * len];
            row.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let w = self.weights[o * self.in_channels + i];
                for (yt, xs) in row.iter_mut().zip(&x[i * len..(i + 1) * len]) {
                    *yt += w * xs;
                }
            }
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlock {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downsample: Option<PointwiseLayer>,
}

impl ResidualBlock {
    fn apply(&self, x: &[f64], len: usize) -> Vec<f64> {
        let mut h = self.conv1.apply(x, len);
        relu(&mut h);
        let mut h = self.conv2.apply(&h, len);
        relu(&mut h);
        match &self.downsample {
            Some(ds) => {
                let res = ds.apply(x, len);
                h.iter_mut().zip(&res).for_each(|(a, r)| *a += r);
            }
            None => h.iter_mut().zip(x).for_each(|(a, r)| *a += r),
        }
        relu(&mut h);
        h
    }
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Dense output layer over `[channels..., context...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnHead {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnWeights {
    pub schema_version: u32,
    pub convention: String,
    pub sample_period_s: f64,
    pub clamp_floor_w: f64,
    pub normalization: Normalization,
    pub blocks: Vec<ResidualBlock>,
    pub head: TcnHead,
    pub receptive_field: usize,
    /// Trainer-recorded choices (window length, padding, dropout, loss). Opaque here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<serde_json::Value>,
}

impl TcnWeights {
    /// A zero-weight network with the given stack shape; useful as a template.
    pub fn zeros(channels: usize, kernel_size: usize, layers_per_stack: usize, stacks: usize) -> Self {
        let mut blocks = Vec::with_capacity(layers_per_stack * stacks);
        for _ in 0..stacks {
            for l in 0..layers_per_stack {
                let dilation = 1usize << l;
                let in_ch = if blocks.is_empty() { N_FEATURES } else { channels };
                blocks.push(ResidualBlock {
                    conv1: ConvLayer::zeros(kernel_size, dilation, in_ch, channels),
                    conv2: ConvLayer::zeros(kernel_size, dilation, channels, channels),
                    downsample: (in_ch != channels).then(|| PointwiseLayer {
                        in_channels: in_ch,
                        out_channels: channels,
                        weights: vec![0.0; in_ch * channels],
                        bias: vec![0.0; channels],
                    }),
                });
            }
        }
        let mut w = Self {
            schema_version: SCHEMA_VERSION,
            convention: FRAME_CONVENTION.to_string(),
            sample_period_s: 0.1,
            clamp_floor_w: DEFAULT_CLAMP_FLOOR_W,
            normalization: Normalization::identity(),
            blocks,
            head: TcnHead {
                weights: vec![0.0; channels + N_CONTEXT],
                bias: 0.0,
            },
            receptive_field: 0,
            training: None,
        };
        w.receptive_field = w.computed_receptive_field();
        w
    }

    pub fn channels(&self) -> usize {
        self.blocks.last().map_or(N_FEATURES, |b| b.conv2.out_channels)
    }

    pub fn computed_receptive_field(&self) -> usize {
        1 + self
            .blocks
            .iter()
            .flat_map(|b| [&b.conv1, &b.conv2])
            .map(|c| (c.kernel_size.saturating_sub(1)) * c.dilation)
            .sum::<usize>()
    }

    /// Check every structural and numeric invariant, naming the first offending tensor.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::input(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.convention != FRAME_CONVENTION {
            return bad(format!(
                "convention {:?} does not match {FRAME_CONVENTION:?}",
                self.convention
            ));
        }
        if !(self.sample_period_s > 0.0 && self.sample_period_s.is_finite()) {
            return bad("sample_period_s must be positive".into());
        }
        if !self.clamp_floor_w.is_finite() {
            return bad("clamp_floor_w must be finite".into());
        }

        let n = &self.normalization;
        for (name, v, len) in [
            ("feature_means", &n.feature_means, N_FEATURES),
            ("feature_stds", &n.feature_stds, N_FEATURES),
            ("context_means", &n.context_means, N_CONTEXT),
            ("context_stds", &n.context_stds, N_CONTEXT),
        ] {
            if v.len() != len {
                return bad(format!("{name}: expected {len} values, got {}", v.len()));
            }
            check_finite(name, v)?;
        }
        check_finite("target_mean", &[n.target_mean])?;
        check_finite("target_std", &[n.target_std])?;
        for (name, v) in [
            ("feature_stds", &n.feature_stds[..]),
            ("context_stds", &n.context_stds[..]),
            ("target_std", std::slice::from_ref(&n.target_std)),
        ] {
            if v.iter().any(|s| !(*s > 0.0)) {
                return bad(format!("{name} must be positive"));
            }
        }

        if self.blocks.is_empty() {
            return bad("blocks: at least one residual block is required".into());
        }
        let mut expected_in = N_FEATURES;
        let mut prev_dilation = 0usize;
        for (bi, b) in self.blocks.iter().enumerate() {
            for (lname, c) in [("conv1", &b.conv1), ("conv2", &b.conv2)] {
                let tag = format!("blocks[{bi}].{lname}");
                if c.kernel_size == 0 || c.dilation == 0 || c.out_channels == 0 {
                    return bad(format!("{tag}: kernel_size, dilation and out_channels must be >= 1"));
                }
                let want = c.out_channels * c.in_channels * c.kernel_size;
                if c.weights.len() != want {
                    return bad(format!("{tag}.weights: expected {want} values, got {}", c.weights.len()));
                }
                if c.bias.len() != c.out_channels {
                    return bad(format!(
                        "{tag}.bias: expected {} values, got {}",
                        c.out_channels,
                        c.bias.len()
                    ));
                }
                check_finite(&format!("{tag}.weights"), &c.weights)?;
                check_finite(&format!("{tag}.bias"), &c.bias)?;
            }
            let tag = format!("blocks[{bi}]");
            if b.conv1.in_channels != expected_in {
                return bad(format!(
                    "{tag}.conv1: in_channels {} but previous output has {expected_in}",
                    b.conv1.in_channels
                ));
            }
            if b.conv2.in_channels != b.conv1.out_channels {
                return bad(format!("{tag}.conv2: in_channels must equal conv1.out_channels"));
            }
            if b.conv1.kernel_size != b.conv2.kernel_size || b.conv1.dilation != b.conv2.dilation {
                return bad(format!("{tag}: conv1 and conv2 must share kernel_size and dilation"));
            }
            let d = b.conv1.dilation;
            let schedule_ok = if bi == 0 { d == 1 } else { d == 1 || d == 2 * prev_dilation };
            if !schedule_ok {
                return bad(format!("{tag}: dilation {d} breaks the 2^l schedule"));
            }
            prev_dilation = d;
            let (cin, cout) = (b.conv1.in_channels, b.conv2.out_channels);
            match (&b.downsample, cin != cout) {
                (None, false) => {}
                (Some(ds), true) => {
                    if ds.in_channels != cin || ds.out_channels != cout {
                        return bad(format!("{tag}.downsample: shape must be {cout}x{cin}"));
                    }
                    if ds.weights.len() != cin * cout {
                        return bad(format!(
                            "{tag}.downsample.weights: expected {} values, got {}",
                            cin * cout,
                            ds.weights.len()
                        ));
                    }
                    if ds.bias.len() != cout {
                        return bad(format!("{tag}.downsample.bias: expected {cout} values, got {}", ds.bias.len()));
                    }
                    check_finite(&format!("{tag}.downsample.weights"), &ds.weights)?;
                    check_finite(&format!("{tag}.downsample.bias"), &ds.bias)?;
                }
                (None, true) => return bad(format!("{tag}: residual projection required ({cin} -> {cout})")),
                (Some(_), false) => return bad(format!("{tag}: residual projection present but channels match")),
            }
            expected_in = cout;
        }
        let stack_len = self
            .blocks
            .iter()
            .skip(1)
            .position(|b| b.conv1.dilation == 1)
            .map_or(self.blocks.len(), |p| p + 1);
        if !self.blocks.len().is_multiple_of(stack_len) {
            return bad(format!(
                "blocks: {} blocks do not form whole stacks of {stack_len}",
                self.blocks.len()
            ));
        }
        for (bi, b) in self.blocks.iter().enumerate() {
            if b.conv1.dilation != 1 << (bi % stack_len) {
                return bad(format!("blocks[{bi}]: stacks must repeat the same dilation schedule"));
            }
        }

        let want = expected_in + N_CONTEXT;
        if self.head.weights.len() != want {
            return bad(format!("head.weights: expected {want} values, got {}", self.head.weights.len()));
        }
        check_finite("head.weights", &self.head.weights)?;
        check_finite("head.bias", &[self.head.bias])?;

        let rf = self.computed_receptive_field();
        if self.receptive_field != rf {
            return bad(format!(
                "receptive_field {} does not match architecture ({rf})",
                self.receptive_field
            ));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str, path: &Path) -> Result<Self> {
        let weights: TcnWeights = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.into(),
            offset: byte_offset(text, e.line(), e.column()),
            message: e.to_string(),
        })?;
        weights.validate().map_err(|e| match e {
            Error::Input(m) => Error::load(path, m),
            other => other,
        })?;
        Ok(weights)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&crate::util::read_to_string(path)?, path)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialise")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    fn normalized_input(&self, frames: &[FeatureFrame], pad: usize) -> Vec<f64> {
        let len = pad + frames.len();
        let n = &self.normalization;
        let mut x = vec![0.0; N_FEATURES * len];
        for (t, f) in frames.iter().enumerate() {
            for (c, v) in f.as_array().into_iter().enumerate() {
                x[c * len + pad + t] = (v - n.feature_means[c]) / n.feature_stds[c];
            }
        }
        x
    }

    fn trunk(&self, mut x: Vec<f64>, len: usize) -> Vec<f64> {
        for b in &self.blocks {
            x = b.apply(&x, len);
        }
        x
    }

    fn head_output(&self, features: &[f64], len: usize, t: usize, ctx: &[f64; N_CONTEXT]) -> f64 {
        let channels = self.channels();
        let mut acc = self.head.bias;
        for c in 0..channels {
            acc += self.head.weights[c] * features[c * len + t];
        }
        for (j, v) in ctx.iter().enumerate() {
            acc += self.head.weights[channels + j] * v;
        }
        let n = &self.normalization;
        (n.target_mean + n.target_std * acc).max(self.clamp_floor_w)
    }

    fn normalized_context(&self, context: &ContextFeatures) -> [f64; N_CONTEXT] {
        let n = &self.normalization;
        let raw = context.as_array();
        [
            (raw[0] - n.context_means[0]) / n.context_stds[0],
            (raw[1] - n.context_means[1]) / n.context_stds[1],
        ]
    }

    /// Power for every prefix of `frames`, equal to calling [`tcn_forward`] on
    /// each prefix but sharing the convolution work.
    pub fn predict_sequence(&self, frames: &[FeatureFrame], context: &ContextFeatures) -> Vec<f64> {
        if frames.is_empty() {
            return Vec::new();
        }
        let pad = self.receptive_field - 1;
        let len = pad + frames.len();
        let x = self.normalized_input(frames, pad);
        let out = self.trunk(x, len);
        let ctx = self.normalized_context(context);
        (pad..len).map(|t| self.head_output(&out, len, t, &ctx)).collect()
    }
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::input(format!("{name}[{i}] is not finite"))),
        None => Ok(()),
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

/// Predict power at the last frame of `window`.
///
/// Windows longer than the receptive field are truncated to their last
/// `receptive_field` frames; shorter ones are left-padded with zeros in
/// normalised feature space.
pub fn tcn_forward(weights: &TcnWeights, window: &[FeatureFrame], context: &ContextFeatures) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::input("TCN window is empty"));
    }
    let tau = weights.receptive_field;
    let window = &window[window.len().saturating_sub(tau)..];
    let pad = tau - window.len();
    let x = weights.normalized_input(window, pad);
    let out = weights.trunk(x, tau);
    let ctx = weights.normalized_context(context);
    Ok(weights.head_output(&out, tau, tau - 1, &ctx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(v: f64) -> FeatureFrame {
        FeatureFrame {
            airspeed: v,
            airspeed_body_x: v * 0.8,
            airspeed_body_y: v * 0.6,
            vertical_speed: 0.1 * v,
            angle_of_attack: -0.05 * v,
        }
    }

    #[test]
    fn b_tcn_receptive_field_is_63() {
        let w = TcnWeights::zeros(64, 2, 5, 1);
        assert_eq!(w.receptive_field, 63);
        assert_eq!(w.blocks.len(), 5);
        w.validate().unwrap();
    }

    #[test]
    fn zero_weights_return_denormalised_bias() {
        let mut w = TcnWeights::zeros(8, 2, 3, 1);
        w.normalization.target_mean = 180.0;
        w.normalization.target_std = 40.0;
        w.head.bias = 0.5;
        let frames: Vec<_> = (0..10).map(|i| frame(i as f64)).collect();
        let p = tcn_forward(&w, &frames, &ContextFeatures::default()).unwrap();
        assert_eq!(p, 200.0);
    }

    #[test]
    fn output_clamped_at_floor() {
        let mut w = TcnWeights::zeros(4, 2, 2, 1);
        w.normalization.target_mean = -50.0;
        let p = tcn_forward(&w, &[frame(1.0)], &ContextFeatures::default()).unwrap();
        assert_eq!(p, DEFAULT_CLAMP_FLOOR_W);
    }

    #[test]
    fn empty_window_is_error() {
        let w = TcnWeights::zeros(4, 2, 2, 1);
        assert!(tcn_forward(&w, &[], &ContextFeatures::default()).is_err());
    }

    #[test]
    fn zero_std_rejected() {
        let mut w = TcnWeights::zeros(4, 2, 2, 1);
        w.normalization.feature_stds[2] = 0.0;
        let text = w.to_json_string();
        let err = TcnWeights::from_json_str(&text, Path::new("w.json")).unwrap_err();
        assert!(err.to_string().contains("feature_stds must be positive"), "{err}");
    }

    #[test]
    fn truncated_file_reports_byte_offset() {
        let w = TcnWeights::zeros(4, 2, 2, 1);
        let text = w.to_json_string();
        let cut = &text[..text.len() / 2];
        match TcnWeights::from_json_str(cut, Path::new("w.json")).unwrap_err() {
            Error::Parse { offset, .. } => assert!(offset > 0 && offset <= cut.len()),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn dimension_mismatch_names_tensor() {
        let mut w = TcnWeights::zeros(4, 2, 2, 1);
        w.blocks[1].conv2.weights.pop();
        let err = TcnWeights::from_json_str(&w.to_json_string(), Path::new("w.json")).unwrap_err();
        assert!(err.to_string().contains("blocks[1].conv2.weights"), "{err}");
    }

    #[test]
    fn bad_dilation_schedule_rejected() {
        let mut w = TcnWeights::zeros(4, 2, 3, 1);
        w.blocks[2].conv1.dilation = 3;
        w.blocks[2].conv2.dilation = 3;
        w.receptive_field = w.computed_receptive_field();
        assert!(w.validate().unwrap_err().to_string().contains("dilation"));
    }

    #[test]
    fn two_stacks_repeat_schedule() {
        let w = TcnWeights::zeros(4, 3, 3, 2);
        assert_eq!(w.receptive_field, 1 + 2 * 2 * 2 * (1 + 2 + 4));
        w.validate().unwrap();
    }

    #[test]
    fn save_load_round_trip() {
        let mut w = TcnWeights::zeros(3, 2, 2, 1);
        w.blocks[0].conv1.weights[1] = 0.123456789012345678;
        w.head.weights[0] = -1.0 / 3.0;
        let back = TcnWeights::from_json_str(&w.to_json_string(), Path::new("w.json")).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.to_json_string(), w.to_json_string());
    }
}
