//! Deterministic stand-ins for the learned video transforms.
//!
//! The analysis transform is a stride-`s` space-to-depth rearrangement
//! zero-padded into `C_y` channels and mixed by a seeded orthonormal
//! matrix, so synthesis is an exact linear inverse — every distortion the
//! pipeline reports comes from quantization, rate masking, or the channel,
//! never from the transform itself. The hyper pair maps pooled feature
//! magnitudes to strictly positive quantization steps and scales, and
//! temporal conditioning is a scalar-gain prediction from the reference
//! buffer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FeatureGrid, Frame};
use crate::linalg::{random_convex_mix, random_orthonormal, DenseMatrix};
use crate::rng::{substream, StreamTag};

use crate::bitstream::HyperLatent;

/// Feature depth per spatial unit (also the top admissible rate level).
pub const FEATURE_CHANNELS: usize = 128;
/// Hyperlatent depth; the first half drives quantization steps, the second
/// half drives scales.
pub const HYPER_CHANNELS: usize = 8;
/// Smallest admissible quantization step.
pub const W_MIN: f64 = 0.5;
/// Gain applied before rounding the hyperlatent so pooled magnitudes
/// survive integer quantization with useful resolution.
const HYPER_GAIN: f64 = 8.0;
/// Scale mapping hyperlatent values to quantization-step offsets.
const STEP_SCALE: f64 = 0.25;
/// Scale mapping hyperlatent values to Gaussian-scale offsets.
const SCALE_SCALE: f64 = 0.5;

/// `max(0, softplus(t) - ln 2)`: zero at zero input, strictly positive
/// slope for positive inputs, saturating to zero for negative ones.
fn positive_map(t: f64) -> f64 {
    let softplus = if t > 30.0 {
        t
    } else if t < -30.0 {
        0.0
    } else {
        t.exp().ln_1p()
    };
    (softplus - std::f64::consts::LN_2).max(0.0)
}

/// Codec knobs; everything else about the transforms is derived from the
/// seed.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    /// Spatial downsampling factor of the analysis transform.
    pub stride: usize,
    /// Temporal-prediction gain in `[0, 1)`.
    pub gamma: f64,
    /// Entropy-context gain: `mu_0 = delta * C_e`.
    pub delta: f64,
    /// Channel-wise scaling preset, `"p0"`..`"p4"` or `"unit"`.
    pub preset_id: String,
    /// Seed for the fixed random transforms.
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            stride: 8,
            gamma: 0.5,
            delta: 0.3,
            preset_id: "p4".into(),
            seed: 11,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        if !(self.gamma.is_finite() && (0.0..1.0).contains(&self.gamma)) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must be finite and nonnegative, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Channel-wise scaling vectors applied at the four preset hook points.
#[derive(Clone, Debug, PartialEq)]
pub struct PresetVector {
    id: String,
    q_ext_c: Vec<f64>,
    q_ext_f: Vec<f64>,
    q_g0: Vec<f64>,
    q_g1: Vec<f64>,
}

impl PresetVector {
    /// All-ones scaling: contexts and synthesis pass through untouched.
    pub fn identity(c_y: usize) -> Self {
        PresetVector {
            id: "unit".into(),
            q_ext_c: vec![1.0; c_y],
            q_ext_f: vec![1.0; c_y],
            q_g0: vec![1.0; c_y],
            q_g1: vec![1.0; c_y],
        }
    }

    /// The built-in preset family. Higher presets predict harder from the
    /// buffer (spending fewer symbols on static content) and synthesize at
    /// full amplitude (higher fidelity); `"p4"` equals the identity
    /// scaling.
    pub fn named(id: &str, c_y: usize) -> Result<Self> {
        if id == "unit" {
            return Ok(Self::identity(c_y));
        }
        let rank: usize = match id {
            "p0" => 0,
            "p1" => 1,
            "p2" => 2,
            "p3" => 3,
            "p4" => 4,
            _ => return Err(Error::InvalidConfig(format!("unknown preset {id:?}"))),
        };
        let ext_f = [0.25, 0.4, 0.6, 0.8, 1.0][rank];
        let g0 = [0.80, 0.85, 0.90, 0.95, 1.0][rank];
        Ok(PresetVector {
            id: id.into(),
            q_ext_c: vec![1.0; c_y],
            q_ext_f: vec![ext_f; c_y],
            q_g0: vec![g0; c_y],
            q_g1: vec![1.0; c_y],
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    fn validate(&self) -> Result<()> {
        let all = [&self.q_ext_c, &self.q_ext_f, &self.q_g0, &self.q_g1];
        if all.iter().any(|q| q.iter().any(|&v| !(v.is_finite() && v > 0.0))) {
            return Err(Error::InvalidConfig(format!(
                "preset {:?} has non-positive scale entries",
                self.id
            )));
        }
        Ok(())
    }
}

/// Temporal reference tensors derived from the buffered feature grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextPair {
    /// Entropy context: conditions the Gaussian means.
    pub c_e: FeatureGrid,
    /// Feature context: the temporal prediction subtracted before coding.
    pub c_f: FeatureGrid,
}

/// Per-element Gaussian coding parameters produced by the hyper decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    /// Quantization step per element, at least [`W_MIN`].
    pub w: FeatureGrid,
    /// Prior scale per element, floored by the entropy config.
    pub sigma0: FeatureGrid,
    /// Prior mean per element (in quantization-step units).
    pub mu0: FeatureGrid,
}

/// Which end of the link a reference buffer belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BufferSide {
    Tx,
    Rx,
}

/// Decoded-feature state carried between frames. Both ends hold one; the
/// transmitter refreshes its copy by decoding its own noiseless symbols so
/// the pair stays bit-identical over an error-free link.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceBuffer {
    /// Buffered feature grid `F`.
    pub feature: FeatureGrid,
    /// Buffered decoded state (merged dequantized features).
    pub state: FeatureGrid,
    pub side: BufferSide,
    /// Frame index of the last update, `None` right after a reset.
    pub last_frame: Option<u64>,
}

impl ReferenceBuffer {
    pub fn zeros(side: BufferSide, h_y: usize, w_y: usize, c_y: usize) -> Self {
        ReferenceBuffer {
            feature: FeatureGrid::zeros(h_y, w_y, c_y),
            state: FeatureGrid::zeros(h_y, w_y, c_y),
            side,
            last_frame: None,
        }
    }

    /// Zeroes both grids (start of a GOP).
    pub fn reset(&mut self) {
        self.feature = FeatureGrid::zeros(
            self.feature.height(),
            self.feature.width(),
            self.feature.channels(),
        );
        self.state = self.feature.clone();
        self.last_frame = None;
    }

    pub fn update(&mut self, feature: FeatureGrid, state: FeatureGrid, frame: u64) -> Result<()> {
        feature.check_finite("reference feature")?;
        state.check_finite("reference state")?;
        if feature.dims() != self.feature.dims() || state.dims() != self.state.dims() {
            return Err(Error::ShapeMismatch {
                context: "reference buffer update",
                expected: self.feature.as_slice().len(),
                got: feature.as_slice().len(),
            });
        }
        self.feature = feature;
        self.state = state;
        self.last_frame = Some(frame);
        Ok(())
    }
}

/// The full set of fixed transforms for one session.
#[derive(Clone, Debug)]
pub struct CodecModel {
    config: CodecConfig,
    frame_channels: usize,
    c_y: usize,
    c_z: usize,
    /// Orthonormal channel mixing of the analysis transform.
    analysis: DenseMatrix,
    /// Nonnegative convex-combination rows pooling `|y|` into hyper
    /// channels.
    hyper_mix: DenseMatrix,
    preset: PresetVector,
}

impl CodecModel {
    /// Builds the session transforms at the standard depths
    /// ([`FEATURE_CHANNELS`], [`HYPER_CHANNELS`]).
    pub fn new(config: &CodecConfig, frame_channels: usize) -> Result<Self> {
        Self::with_dims(config, frame_channels, FEATURE_CHANNELS, HYPER_CHANNELS)
    }

    /// Fully parameterized constructor (smaller depths keep tests fast).
    pub fn with_dims(
        config: &CodecConfig,
        frame_channels: usize,
        c_y: usize,
        c_z: usize,
    ) -> Result<Self> {
        config.validate()?;
        if frame_channels == 0 {
            return Err(Error::InvalidConfig("frames need at least one channel".into()));
        }
        let block = config.stride * config.stride * frame_channels;
        if block > c_y {
            return Err(Error::InvalidConfig(format!(
                "stride {} with {} frame channels needs {block} feature channels, have {c_y}",
                config.stride, frame_channels
            )));
        }
        if c_z < 2 || !c_z.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "hyper depth must be even and at least 2, got {c_z}"
            )));
        }
        let preset = PresetVector::named(&config.preset_id, c_y)?;
        preset.validate()?;
        let analysis = {
            let mut rng = substream(config.seed, 0, StreamTag::Analysis);
            random_orthonormal(c_y, &mut rng)
        };
        let hyper_mix = {
            let mut rng = substream(config.seed, 0, StreamTag::HyperMix);
            random_convex_mix(c_z, c_y, &mut rng)
        };
        Ok(CodecModel {
            config: config.clone(),
            frame_channels,
            c_y,
            c_z,
            analysis,
            hyper_mix,
            preset,
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn preset(&self) -> &PresetVector {
        &self.preset
    }

    pub fn stride(&self) -> usize {
        self.config.stride
    }

    pub fn gamma(&self) -> f64 {
        self.config.gamma
    }

    pub fn feature_channels(&self) -> usize {
        self.c_y
    }

    pub fn hyper_channels(&self) -> usize {
        self.c_z
    }

    pub fn frame_channels(&self) -> usize {
        self.frame_channels
    }

    /// Spatial feature dims for a frame, validating stride alignment.
    pub fn feature_dims(&self, frame: &Frame) -> Result<(usize, usize)> {
        let s = self.config.stride;
        let (h, w, c) = frame.dims();
        if c != self.frame_channels {
            return Err(Error::ShapeMismatch {
                context: "frame channels",
                expected: self.frame_channels,
                got: c,
            });
        }
        if h % s != 0 || w % s != 0 {
            return Err(Error::InvalidConfig(format!(
                "frame {h}x{w} is not a multiple of stride {s}; pad first"
            )));
        }
        Ok((h / s, w / s))
    }

    /// Hyper grid dims for given feature dims (2x2 pooling, ceil at odd
    /// edges).
    pub fn hyper_dims(&self, h_y: usize, w_y: usize) -> (usize, usize) {
        (h_y.div_ceil(2), w_y.div_ceil(2))
    }

    fn check_feature_shape(&self, grid: &FeatureGrid, context: &'static str) -> Result<()> {
        if grid.channels() != self.c_y {
            return Err(Error::ShapeMismatch {
                context,
                expected: self.c_y,
                got: grid.channels(),
            });
        }
        Ok(())
    }

    /// Derives the entropy and feature contexts from the buffered grid by
    /// channel-wise scaling.
    pub fn context_extract(&self, feature: &FeatureGrid) -> Result<ContextPair> {
        self.check_feature_shape(feature, "context_extract input")?;
        let (h, w, c) = feature.dims();
        let mut c_e = FeatureGrid::zeros(h, w, c);
        let mut c_f = FeatureGrid::zeros(h, w, c);
        let src = feature.as_slice();
        let (dst_e, dst_f) = (c_e.as_mut_slice(), c_f.as_mut_slice());
        for (n, &v) in src.iter().enumerate() {
            let ch = n % c;
            dst_e[n] = self.preset.q_ext_c[ch] * v;
            dst_f[n] = self.preset.q_ext_f[ch] * v;
        }
        Ok(ContextPair { c_e, c_f })
    }

    /// Gathers one stride-block of pixels into the head of a `C_y` vector,
    /// layout `(di * s + dj) * C + c`, zeros beyond.
    fn gather_block(&self, x: &Frame, i: usize, j: usize, out: &mut [f64]) {
        let s = self.config.stride;
        let c = self.frame_channels;
        out.fill(0.0);
        for di in 0..s {
            for dj in 0..s {
                for ch in 0..c {
                    out[(di * s + dj) * c + ch] = x.get(i * s + di, j * s + dj, ch);
                }
            }
        }
    }

    /// Analysis transform minus the temporal prediction:
    /// `y = A(x) - gamma * C_f`.
    pub fn feature_extract(&self, x: &Frame, c_f: &FeatureGrid) -> Result<FeatureGrid> {
        let (h_y, w_y) = self.feature_dims(x)?;
        self.check_feature_shape(c_f, "feature context")?;
        if c_f.dims() != (h_y, w_y, self.c_y) {
            return Err(Error::ShapeMismatch {
                context: "feature context cells",
                expected: h_y * w_y,
                got: c_f.height() * c_f.width(),
            });
        }
        let mut y = FeatureGrid::zeros(h_y, w_y, self.c_y);
        let mut block = vec![0.0; self.c_y];
        for i in 0..h_y {
            for j in 0..w_y {
                self.gather_block(x, i, j, &mut block);
                let mixed = self.analysis.matvec(&block);
                let cell = y.cell_mut(i, j);
                let ctx = c_f.cell(i, j);
                for ch in 0..self.c_y {
                    cell[ch] = mixed[ch] - self.config.gamma * ctx[ch];
                }
            }
        }
        Ok(y)
    }

    /// Exact inverse of the analysis mixing for one unit: transpose, then
    /// scatter the first `s*s*C` coefficients back to pixels.
    fn scatter_block(&self, u: &[f64], x: &mut Frame, i: usize, j: usize) {
        let s = self.config.stride;
        let c = self.frame_channels;
        let unmixed = self.analysis.matvec_t(u);
        for di in 0..s {
            for dj in 0..s {
                for ch in 0..c {
                    let v = unmixed[(di * s + dj) * c + ch];
                    x.set(i * s + di, j * s + dj, ch, v.clamp(0.0, 1.0));
                }
            }
        }
    }

    /// Synthesis: `u = ytilde + gamma * C_f`, pixels from `q_G0 ⊙ u`
    /// (clamped to `[0,1]`), next buffer feature from `q_G1 ⊙ u`.
    pub fn generate(&self, ytilde: &FeatureGrid, c_f: &FeatureGrid) -> Result<(Frame, FeatureGrid)> {
        self.check_feature_shape(ytilde, "generate input")?;
        if ytilde.dims() != c_f.dims() {
            return Err(Error::ShapeMismatch {
                context: "generate context",
                expected: ytilde.as_slice().len(),
                got: c_f.as_slice().len(),
            });
        }
        let (h_y, w_y, _) = ytilde.dims();
        let s = self.config.stride;
        let mut x = Frame::zeros(h_y * s, w_y * s, self.frame_channels);
        let mut feature = FeatureGrid::zeros(h_y, w_y, self.c_y);
        let mut synth = vec![0.0; self.c_y];
        for i in 0..h_y {
            for j in 0..w_y {
                let yt = ytilde.cell(i, j);
                let ctx = c_f.cell(i, j);
                {
                    let fcell = feature.cell_mut(i, j);
                    for ch in 0..self.c_y {
                        let u = yt[ch] + self.config.gamma * ctx[ch];
                        synth[ch] = self.preset.q_g0[ch] * u;
                        fcell[ch] = self.preset.q_g1[ch] * u;
                    }
                }
                self.scatter_block(&synth, &mut x, i, j);
            }
        }
        Ok((x, feature))
    }

    /// Pools `|y|` 2x2 (mean over in-bounds taps), mixes into `C_z`
    /// channels, and applies the fixed gain.
    pub fn hyper_encode(&self, y: &FeatureGrid) -> Result<FeatureGrid> {
        self.check_feature_shape(y, "hyper_encode input")?;
        let (h_y, w_y, _) = y.dims();
        let (h_z, w_z) = self.hyper_dims(h_y, w_y);
        let mut z = FeatureGrid::zeros(h_z, w_z, self.c_z);
        let mut pooled = vec![0.0; self.c_y];
        for i in 0..h_z {
            for j in 0..w_z {
                pooled.fill(0.0);
                let mut taps = 0.0;
                for di in 0..2 {
                    for dj in 0..2 {
                        let (pi, pj) = (2 * i + di, 2 * j + dj);
                        if pi < h_y && pj < w_y {
                            taps += 1.0;
                            for (acc, &v) in pooled.iter_mut().zip(y.cell(pi, pj)) {
                                *acc += v.abs();
                            }
                        }
                    }
                }
                for v in pooled.iter_mut() {
                    *v /= taps;
                }
                let mixed = self.hyper_mix.matvec(&pooled);
                let cell = z.cell_mut(i, j);
                for (dst, &m) in cell.iter_mut().zip(&mixed) {
                    *dst = HYPER_GAIN * m;
                }
            }
        }
        Ok(z)
    }

    /// Rounds the hyper grid to integers (ties away from zero).
    pub fn hyper_quantize(&self, z: &FeatureGrid) -> Result<HyperLatent> {
        z.check_finite("hyperlatent")?;
        let (h, w, c) = z.dims();
        let data = z.as_slice().iter().map(|&v| v.round() as i32).collect();
        HyperLatent::from_vec(data, h, w, c)
    }

    /// Expands the quantized hyper grid (nearest-neighbor 2x upsampling,
    /// cropped to the feature dims) into per-element Gaussian parameters.
    /// Runs identically at both ends given identical inputs.
    pub fn hyper_decode(
        &self,
        zhat: &HyperLatent,
        c_e: &FeatureGrid,
        sigma_floor: f64,
    ) -> Result<GaussianParams> {
        self.check_feature_shape(c_e, "entropy context")?;
        let (h_y, w_y, _) = c_e.dims();
        let (h_z, w_z) = self.hyper_dims(h_y, w_y);
        if zhat.dims() != (h_z, w_z, self.c_z) {
            return Err(Error::ShapeMismatch {
                context: "hyperlatent dims",
                expected: h_z * w_z * self.c_z,
                got: zhat.as_slice().len(),
            });
        }
        let half = self.c_z / 2;
        let mut w = FeatureGrid::zeros(h_y, w_y, self.c_y);
        let mut sigma0 = FeatureGrid::zeros(h_y, w_y, self.c_y);
        let mut mu0 = FeatureGrid::zeros(h_y, w_y, self.c_y);
        for i in 0..h_y {
            for j in 0..w_y {
                let (zi, zj) = (i / 2, j / 2); // nearest-neighbor upsample
                let wcell = w.cell_mut(i, j);
                let scell = sigma0.cell_mut(i, j);
                for ch in 0..self.c_y {
                    let u_w = f64::from(zhat.get(zi, zj, ch % half));
                    let u_s = f64::from(zhat.get(zi, zj, half + ch % half));
                    wcell[ch] = W_MIN + positive_map(STEP_SCALE * u_w);
                    scell[ch] = sigma_floor + positive_map(SCALE_SCALE * u_s);
                }
                let mcell = mu0.cell_mut(i, j);
                for (dst, &ctx) in mcell.iter_mut().zip(c_e.cell(i, j)) {
                    *dst = self.config.delta * ctx;
                }
            }
        }
        Ok(GaussianParams { w, sigma0, mu0 })
    }

    /// Distortion-reference decode that bypasses rate masking and the
    /// channel: dequantizes the true `ybar` with the merged means and
    /// synthesizes.
    pub fn ideal_decode(
        &self,
        ybar: &FeatureGrid,
        w: &FeatureGrid,
        mu_merged: &FeatureGrid,
        c_f: &FeatureGrid,
    ) -> Result<(Frame, FeatureGrid)> {
        if ybar.dims() != w.dims() || ybar.dims() != mu_merged.dims() {
            return Err(Error::ShapeMismatch {
                context: "ideal_decode params",
                expected: ybar.as_slice().len(),
                got: w.as_slice().len(),
            });
        }
        let (h, wd, c) = ybar.dims();
        let mut ytilde = FeatureGrid::zeros(h, wd, c);
        {
            let dst = ytilde.as_mut_slice();
            let (yb, ws, ms) = (ybar.as_slice(), w.as_slice(), mu_merged.as_slice());
            for n in 0..dst.len() {
                dst[n] = ws[n] * (yb[n] + ms[n]);
            }
        }
        self.generate(&ytilde, c_f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn test_config(stride: usize, gamma: f64, preset: &str) -> CodecConfig {
        CodecConfig {
            stride,
            gamma,
            delta: 0.3,
            preset_id: preset.into(),
            seed: 77,
        }
    }

    fn small_model(gamma: f64) -> CodecModel {
        // stride 2, 1 frame channel, 8 feature channels, 4 hyper channels
        CodecModel::with_dims(&test_config(2, gamma, "unit"), 1, 8, 4).unwrap()
    }

    fn random_frame(h: usize, w: usize, c: usize, seed: u64) -> Frame {
        let mut rng = substream(seed, 0, StreamTag::Synthetic);
        let mut frame = Frame::zeros(h, w, c);
        for v in frame.as_mut_slice() {
            *v = 0.05 + 0.9 * rng.random::<f64>();
        }
        frame
    }

    #[test]
    fn config_validation() {
        assert!(test_config(0, 0.5, "unit").validate().is_err());
        assert!(test_config(2, 1.0, "unit").validate().is_err());
        assert!(test_config(2, -0.1, "unit").validate().is_err());
        assert!(test_config(2, 0.5, "unit").validate().is_ok());
        // stride/channel capacity check
        assert!(CodecModel::with_dims(&test_config(4, 0.5, "unit"), 1, 8, 4).is_err());
        assert!(CodecModel::with_dims(&test_config(2, 0.5, "nope"), 1, 8, 4).is_err());
        assert!(CodecModel::with_dims(&test_config(2, 0.5, "unit"), 1, 8, 3).is_err());
    }

    #[test]
    fn default_config_round_trips_through_json() {
        let cfg = CodecConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: CodecConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        // unknown keys are rejected
        assert!(serde_json::from_str::<CodecConfig>("{\"strides\":2}").is_err());
        // partial configs fill in defaults
        let partial: CodecConfig = serde_json::from_str("{\"gamma\":0.25}").unwrap();
        assert_eq!(partial.gamma, 0.25);
        assert_eq!(partial.stride, 8);
    }

    #[test]
    fn analysis_and_synthesis_are_exact_inverses() {
        let model = small_model(0.5);
        let x = random_frame(6, 8, 1, 1);
        let c_f = FeatureGrid::zeros(3, 4, 8);
        let y = model.feature_extract(&x, &c_f).unwrap();
        let (xhat, _) = model.generate(&y, &c_f).unwrap();
        for (a, b) in x.as_slice().iter().zip(xhat.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn inverse_survives_zero_padded_channels() {
        // feature depth wider than the pixel block: the pad lanes must
        // carry no information loss
        let model = CodecModel::with_dims(&test_config(2, 0.0, "unit"), 1, 16, 4).unwrap();
        let x = random_frame(4, 4, 1, 2);
        let c_f = FeatureGrid::zeros(2, 2, 16);
        let y = model.feature_extract(&x, &c_f).unwrap();
        let (xhat, _) = model.generate(&y, &c_f).unwrap();
        for (a, b) in x.as_slice().iter().zip(xhat.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_frame_and_context_give_zero_feature() {
        let model = small_model(0.5);
        let x = Frame::zeros(4, 4, 1);
        let c_f = FeatureGrid::zeros(2, 2, 8);
        let y = model.feature_extract(&x, &c_f).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
        let (xhat, feature) = model.generate(&y, &c_f).unwrap();
        assert!(xhat.as_slice().iter().all(|&v| v == 0.0));
        assert!(feature.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gamma_zero_ignores_the_context() {
        let model = small_model(0.0);
        let x = random_frame(4, 4, 1, 3);
        let zeros = FeatureGrid::zeros(2, 2, 8);
        let mut junk = FeatureGrid::zeros(2, 2, 8);
        junk.as_mut_slice().fill(123.0);
        let y0 = model.feature_extract(&x, &zeros).unwrap();
        let y1 = model.feature_extract(&x, &junk).unwrap();
        assert_eq!(y0, y1);
    }

    #[test]
    fn context_extract_identity_and_linearity() {
        let model = small_model(0.5);
        let mut feature = FeatureGrid::zeros(2, 2, 8);
        for (n, v) in feature.as_mut_slice().iter_mut().enumerate() {
            *v = n as f64 * 0.25 - 1.0;
        }
        let ctx = model.context_extract(&feature).unwrap();
        assert_eq!(ctx.c_e, feature); // unit preset: identity
        assert_eq!(ctx.c_f, feature);

        // scaling one channel scales the same channel of both outputs
        let mut scaled = feature.clone();
        for i in 0..2 {
            for j in 0..2 {
                scaled.cell_mut(i, j)[3] *= 5.0;
            }
        }
        let ctx2 = model.context_extract(&scaled).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(ctx2.c_e.cell(i, j)[3], 5.0 * ctx.c_e.cell(i, j)[3]);
                assert_abs_diff_eq!(ctx2.c_f.cell(i, j)[3], 5.0 * ctx.c_f.cell(i, j)[3]);
            }
        }

        let zero_ctx = model.context_extract(&FeatureGrid::zeros(2, 2, 8)).unwrap();
        assert!(zero_ctx.c_e.as_slice().iter().all(|&v| v == 0.0));
        assert!(zero_ctx.c_f.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn static_video_feature_norm_contracts_by_one_minus_gamma() {
        // closed loop without quantization: after the first frame the
        // buffer holds A(x) exactly, so every later residual is
        // (1 - gamma) * A(x)
        let gamma = 0.5;
        let model = small_model(gamma);
        let x = random_frame(6, 6, 1, 4);
        let mut buffer = FeatureGrid::zeros(3, 3, 8);
        let mut norms = Vec::new();
        for _ in 0..4 {
            let ctx = model.context_extract(&buffer).unwrap();
            let y = model.feature_extract(&x, &ctx.c_f).unwrap();
            norms.push(y.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt());
            let (_, feature) = model.generate(&y, &ctx.c_f).unwrap();
            buffer = feature;
        }
        for t in 1..4 {
            assert_abs_diff_eq!(norms[t] / norms[0], 1.0 - gamma, epsilon = 1e-12);
        }
    }

    #[test]
    fn quantization_noise_matches_the_uniform_model() {
        // square transform (no pad lanes): pixel MSE should track the
        // w^2/12 law of uniform quantization error
        let model = CodecModel::with_dims(&test_config(2, 0.0, "unit"), 1, 4, 4).unwrap();
        let c_f = FeatureGrid::zeros(16, 16, 4);
        let x = random_frame(32, 32, 1, 5);
        let y = model.feature_extract(&x, &c_f).unwrap();
        let step = 0.75;
        let mut ytilde = y.clone();
        for v in ytilde.as_mut_slice() {
            *v = step * (*v / step).round();
        }
        let (xhat, _) = model.generate(&ytilde, &c_f).unwrap();
        let n = x.as_slice().len() as f64;
        let mse: f64 = x
            .as_slice()
            .iter()
            .zip(xhat.as_slice())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / n;
        let predicted = step * step / 12.0;
        assert!(
            mse < predicted * 1.3 && mse > predicted * 0.5,
            "mse {mse} vs uniform-noise prediction {predicted}"
        );
    }

    #[test]
    fn hyper_path_floors_at_zero_input() {
        let model = small_model(0.5);
        let y = FeatureGrid::zeros(4, 3, 8); // odd width exercises the crop
        let z = model.hyper_encode(&y).unwrap();
        assert_eq!(z.dims(), (2, 2, 4));
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        let zhat = model.hyper_quantize(&z).unwrap();
        let c_e = FeatureGrid::zeros(4, 3, 8);
        let params = model.hyper_decode(&zhat, &c_e, 0.11).unwrap();
        assert!(params.w.as_slice().iter().all(|&v| v == W_MIN));
        assert!(params.sigma0.as_slice().iter().all(|&v| v == 0.11));
        assert!(params.mu0.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hyper_params_are_positive_and_deterministic() {
        let model = small_model(0.5);
        let mut y = FeatureGrid::zeros(5, 4, 8);
        let mut rng = substream(9, 0, StreamTag::Synthetic);
        for v in y.as_mut_slice() {
            *v = 3.0 * (rng.random::<f64>() - 0.5);
        }
        let mut c_e = FeatureGrid::zeros(5, 4, 8);
        for v in c_e.as_mut_slice() {
            *v = rng.random::<f64>() - 0.5;
        }
        let z = model.hyper_encode(&y).unwrap();
        assert_eq!(z.dims(), (3, 2, 4));
        let zhat = model.hyper_quantize(&z).unwrap();
        let a = model.hyper_decode(&zhat, &c_e, 0.11).unwrap();
        let b = model.hyper_decode(&zhat, &c_e, 0.11).unwrap();
        assert_eq!(a, b);
        assert!(a.w.as_slice().iter().all(|&v| v >= W_MIN));
        assert!(a.sigma0.as_slice().iter().all(|&v| v >= 0.11));
        // mu0 = delta * C_e
        for (m, c) in a.mu0.as_slice().iter().zip(c_e.as_slice()) {
            assert_abs_diff_eq!(*m, 0.3 * c, epsilon = 1e-15);
        }
    }

    #[test]
    fn delta_zero_decouples_means_from_context() {
        let cfg = CodecConfig {
            delta: 0.0,
            ..test_config(2, 0.5, "unit")
        };
        let model = CodecModel::with_dims(&cfg, 1, 8, 4).unwrap();
        let mut c_e = FeatureGrid::zeros(2, 2, 8);
        c_e.as_mut_slice().fill(7.0);
        let zhat = model
            .hyper_quantize(&model.hyper_encode(&FeatureGrid::zeros(2, 2, 8)).unwrap())
            .unwrap();
        let params = model.hyper_decode(&zhat, &c_e, 0.11).unwrap();
        assert!(params.mu0.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ideal_decode_matches_generate_on_dequantized_input() {
        let model = small_model(0.5);
        let mut ybar = FeatureGrid::zeros(2, 2, 8);
        let mut w = FeatureGrid::zeros(2, 2, 8);
        let mut mu = FeatureGrid::zeros(2, 2, 8);
        for (n, v) in ybar.as_mut_slice().iter_mut().enumerate() {
            *v = (n % 5) as f64 - 2.0;
        }
        for (n, v) in w.as_mut_slice().iter_mut().enumerate() {
            *v = 0.5 + 0.1 * (n % 3) as f64;
        }
        for (n, v) in mu.as_mut_slice().iter_mut().enumerate() {
            *v = 0.25 * ((n % 4) as f64 - 1.5);
        }
        let c_f = FeatureGrid::zeros(2, 2, 8);
        let (x_ideal, f_ideal) = model.ideal_decode(&ybar, &w, &mu, &c_f).unwrap();

        let mut ytilde = FeatureGrid::zeros(2, 2, 8);
        for (n, v) in ytilde.as_mut_slice().iter_mut().enumerate() {
            *v = w.as_slice()[n] * (ybar.as_slice()[n] + mu.as_slice()[n]);
        }
        let (x_direct, f_direct) = model.generate(&ytilde, &c_f).unwrap();
        assert_eq!(x_ideal, x_direct);
        assert_eq!(f_ideal, f_direct);
    }

    #[test]
    fn ideal_decode_of_zeros_equals_generate_of_zeros() {
        let model = small_model(0.5);
        let zeros = FeatureGrid::zeros(2, 2, 8);
        let mut w = FeatureGrid::zeros(2, 2, 8);
        w.as_mut_slice().fill(0.5);
        let mut c_f = FeatureGrid::zeros(2, 2, 8);
        for (n, v) in c_f.as_mut_slice().iter_mut().enumerate() {
            *v = 0.1 * n as f64;
        }
        let (a, fa) = model.ideal_decode(&zeros, &w, &zeros, &c_f).unwrap();
        let (b, fb) = model.generate(&zeros, &c_f).unwrap();
        assert_eq!(a, b);
        assert_eq!(fa, fb);
    }

    #[test]
    fn preset_family_orders_prediction_and_fidelity() {
        let mut prev_ext = 0.0;
        let mut prev_g0 = 0.0;
        for id in ["p0", "p1", "p2", "p3", "p4"] {
            let p = PresetVector::named(id, 8).unwrap();
            assert!(p.q_ext_f[0] > prev_ext);
            assert!(p.q_g0[0] > prev_g0);
            prev_ext = p.q_ext_f[0];
            prev_g0 = p.q_g0[0];
            assert!(p.q_ext_c.iter().all(|&v| v == 1.0));
            assert!(p.q_g1.iter().all(|&v| v == 1.0));
        }
        let p4 = PresetVector::named("p4", 8).unwrap();
        assert_eq!(p4.q_ext_f, vec![1.0; 8]);
        assert_eq!(p4.q_g0, vec![1.0; 8]);
    }

    #[test]
    fn lower_presets_predict_less_and_synthesize_dimmer() {
        let x = random_frame(4, 4, 1, 6);
        let mut feature = FeatureGrid::zeros(2, 2, 8);
        for (n, v) in feature.as_mut_slice().iter_mut().enumerate() {
            *v = 0.3 * ((n % 7) as f64 - 3.0);
        }
        let m0 = CodecModel::with_dims(&test_config(2, 0.5, "p0"), 1, 8, 4).unwrap();
        let m4 = CodecModel::with_dims(&test_config(2, 0.5, "p4"), 1, 8, 4).unwrap();
        let c0 = m0.context_extract(&feature).unwrap();
        let c4 = m4.context_extract(&feature).unwrap();
        let e0: f64 = c0.c_f.as_slice().iter().map(|v| v * v).sum();
        let e4: f64 = c4.c_f.as_slice().iter().map(|v| v * v).sum();
        assert!(e0 < e4);

        // identical features synthesize dimmer pixels at p0
        let y = m4.feature_extract(&x, &FeatureGrid::zeros(2, 2, 8)).unwrap();
        let zeros = FeatureGrid::zeros(2, 2, 8);
        let (x0, _) = m0.generate(&y, &zeros).unwrap();
        let (x4, _) = m4.generate(&y, &zeros).unwrap();
        let err0: f64 = x.as_slice().iter().zip(x0.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
        let err4: f64 = x.as_slice().iter().zip(x4.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(err4 < err0 * 0.25, "p4 err {err4} vs p0 err {err0}");
    }

    #[test]
    fn reference_buffer_reset_and_update() {
        let mut buf = ReferenceBuffer::zeros(BufferSide::Tx, 2, 3, 4);
        assert_eq!(buf.last_frame, None);
        let mut f = FeatureGrid::zeros(2, 3, 4);
        f.as_mut_slice().fill(1.5);
        buf.update(f.clone(), f.clone(), 9).unwrap();
        assert_eq!(buf.last_frame, Some(9));
        assert_eq!(buf.feature, f);
        buf.reset();
        assert_eq!(buf.last_frame, None);
        assert!(buf.feature.as_slice().iter().all(|&v| v == 0.0));

        let wrong = FeatureGrid::zeros(2, 3, 5);
        assert!(buf.update(wrong.clone(), wrong, 0).is_err());
        let mut bad = FeatureGrid::zeros(2, 3, 4);
        bad.as_mut_slice()[0] = f64::NAN;
        assert!(buf.update(bad.clone(), bad, 0).is_err());
    }

    #[test]
    fn positive_map_is_zero_at_zero_and_monotone() {
        assert_eq!(positive_map(0.0), 0.0);
        assert_eq!(positive_map(-5.0), 0.0);
        assert!(positive_map(1e6) > 0.0);
        let mut prev = 0.0;
        for i in 1..100 {
            let v = positive_map(i as f64 * 0.1);
            assert!(v >= prev);
            prev = v;
        }
        // large inputs behave linearly instead of overflowing
        assert_abs_diff_eq!(positive_map(50.0), 50.0 - std::f64::consts::LN_2);
    }
}
