//! Per-frame transmission and reception: fixed stage ordering, GOP state,
//! power normalization, and the session driver that walks a frame list
//! through encode → channel → equalize → decode while collecting reports.
//!
//! Both link ends refresh their reference buffers by running the *same*
//! reconstruction routine on the *same* inputs (the power-normalized
//! symbol stream descaled by the `f32` scale carried in side info), so on
//! a noiseless link the transmitter and receiver stay bit-identical frame
//! after frame.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bitstream::{
    decode_hyperlatent, decode_rate_map, encode_hyperlatent, encode_rate_map, parse_side_info,
    FactorizedPrior, SideInfoFrame,
};
use crate::channel::{mmse_equalize, transmit, zf_equalize, ChannelConfig};
use crate::codec::{BufferSide, CodecConfig, CodecModel, ReferenceBuffer};
use crate::entropy::{
    block_cells, cell_parity, quantize_center, spatial_prior_predict, symbol_length_factor,
    EntropyConfig,
};
use crate::error::{Error, Result};
use crate::grid::{FeatureGrid, Frame};
use crate::metrics::{cbr_frame, distortion, rate_loss, LinkReport};
use crate::rate::{map_unit, rate_match, unmap_unit, RateMap, RateSet, UnitProjector};
use crate::rng::{substream, StreamTag};

/// Spread of the factorized hyperlatent prior.
const PRIOR_SCALE: f64 = 1.5;
/// Tail cutoff of the prior alphabet; values beyond escape to raw bytes.
const PRIOR_Z_MAX: i32 = 64;

/// Which linear equalizer the receiver applies after the channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equalizer {
    #[default]
    Zf,
    Mmse,
}

/// Everything one session needs: frame geometry, the channel, the entropy
/// and codec settings, the rate levels, and the side-link budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    /// Frames per GOP; buffers reset at every multiple.
    pub gop_len: usize,
    pub frame_height: usize,
    pub frame_width: usize,
    pub frame_channels: usize,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub entropy: EntropyConfig,
    pub rate_set: RateSet,
    pub codec: CodecConfig,
    /// Side-link spectral efficiency in bits per channel use.
    #[serde(default = "default_side_eff")]
    pub side_spectral_eff: f64,
    #[serde(default)]
    pub equalizer: Equalizer,
}

fn default_side_eff() -> f64 {
    2.0
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gop_len == 0 {
            return Err(Error::InvalidConfig("gop_len must be at least 1".into()));
        }
        if self.frame_height == 0 || self.frame_width == 0 || self.frame_channels == 0 {
            return Err(Error::InvalidConfig(format!(
                "frame dims must be positive, got {}x{}x{}",
                self.frame_height, self.frame_width, self.frame_channels
            )));
        }
        if !(self.side_spectral_eff.is_finite() && self.side_spectral_eff > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "side-link spectral efficiency must be positive, got {}",
                self.side_spectral_eff
            )));
        }
        self.channel.validate()?;
        self.entropy.validate()?;
        self.codec.validate()
    }
}

/// One frame ready for the air: the normalized symbol stream plus the
/// side packet that makes it decodable.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTransmission {
    pub frame_index: u64,
    /// Power-normalized complex stream.
    pub symbols: Vec<Complex64>,
    pub side: SideInfoFrame,
    /// Symbols per unit in row-major cell order; sums to `symbols.len()`.
    pub unit_symbol_counts: Vec<usize>,
    /// Matched rate level per unit, same order.
    pub unit_levels: Vec<u16>,
    pub diagnostics: EncodeDiagnostics,
}

/// Encoder-side accounting for one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodeDiagnostics {
    /// Sum of matched rate levels over all units.
    pub sum_k: u64,
    /// Rate-map payload size in bits.
    pub ratemap_bits: u64,
    /// Hyperlatent payload size in bits.
    pub hyper_bits: u64,
    /// Ideal codelength of the hyperlatent under the prior, in bits.
    pub hyper_model_bits: f64,
    /// Power scale as carried in side info.
    pub power_scale: f32,
    /// Pre-normalization energy of the symbol stream.
    pub symbol_energy: f64,
}

/// Result of encoding one frame at the transmitter.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodeResult {
    pub transmission: FrameTransmission,
    /// The transmitter's own reconstruction (clean link), cropped to the
    /// configured frame size. A noiseless receiver reproduces it exactly.
    pub local: Frame,
    /// Reference reconstruction that skips rate masking and the channel.
    pub ideal: Frame,
}

/// Result of decoding one frame at the receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub frame: Frame,
    /// Side info failed to parse: `frame` repeats the last reconstruction
    /// and the buffers were left untouched.
    pub lost: bool,
}

/// Transmitter-side state between frames.
#[derive(Clone, Debug, PartialEq)]
pub struct TxState {
    pub buffer: ReferenceBuffer,
}

/// Receiver-side state between frames.
#[derive(Clone, Debug, PartialEq)]
pub struct RxState {
    pub buffer: ReferenceBuffer,
    last_output: Frame,
}

impl RxState {
    /// Most recent reconstruction (zeros before the first decode); the
    /// fallback output for lost frames.
    pub fn last_output(&self) -> &Frame {
        &self.last_output
    }
}

/// Options for [`SessionModel::run_sequence`].
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Write per-frame symbol and side-info captures into this directory.
    pub capture_dir: Option<PathBuf>,
}

/// Aggregate over one GOP of a sequence run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GopSummary {
    pub start_frame: u64,
    pub frames: usize,
    /// Mean per-frame bandwidth ratio over the GOP.
    pub cbr: f64,
    pub mean_psnr: f64,
}

/// Everything a sequence run produces.
#[derive(Clone, Debug)]
pub struct SequenceOutcome {
    pub reports: Vec<LinkReport>,
    pub gops: Vec<GopSummary>,
    pub reconstructions: Vec<Frame>,
}

/// A fully instantiated session: validated config plus the deterministic
/// transforms derived from its seeds.
#[derive(Clone, Debug)]
pub struct SessionModel {
    config: SessionConfig,
    codec: CodecModel,
    projector: UnitProjector,
    prior: FactorizedPrior,
    /// Feature-grid height/width for the configured (padded) frame size.
    h_y: usize,
    w_y: usize,
}

impl SessionModel {
    /// Builds a session at the standard transform depths.
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let codec = CodecModel::new(&config.codec, config.frame_channels)?;
        Self::assemble(config, codec)
    }

    /// Fully parameterized constructor (smaller depths keep tests fast).
    pub fn with_dims(config: SessionConfig, c_y: usize, c_z: usize) -> Result<Self> {
        config.validate()?;
        let codec = CodecModel::with_dims(&config.codec, config.frame_channels, c_y, c_z)?;
        Self::assemble(config, codec)
    }

    fn assemble(config: SessionConfig, codec: CodecModel) -> Result<Self> {
        let c_y = codec.feature_channels();
        config.rate_set.validate_for(c_y)?;
        let projector = UnitProjector::seeded(config.rate_set.clone(), c_y, config.codec.seed)?;
        let prior =
            FactorizedPrior::discretized_gaussian(codec.hyper_channels(), 0.0, PRIOR_SCALE, PRIOR_Z_MAX)?;
        let s = codec.stride();
        let h_y = config.frame_height.div_ceil(s);
        let w_y = config.frame_width.div_ceil(s);
        Ok(SessionModel {
            config,
            codec,
            projector,
            prior,
            h_y,
            w_y,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn codec(&self) -> &CodecModel {
        &self.codec
    }

    pub fn projector(&self) -> &UnitProjector {
        &self.projector
    }

    pub fn prior(&self) -> &FactorizedPrior {
        &self.prior
    }

    /// Feature-grid dims `(h_y, w_y)` for configured frames.
    pub fn feature_grid_dims(&self) -> (usize, usize) {
        (self.h_y, self.w_y)
    }

    pub fn tx_state(&self) -> TxState {
        TxState {
            buffer: ReferenceBuffer::zeros(
                BufferSide::Tx,
                self.h_y,
                self.w_y,
                self.codec.feature_channels(),
            ),
        }
    }

    pub fn rx_state(&self) -> RxState {
        RxState {
            buffer: ReferenceBuffer::zeros(
                BufferSide::Rx,
                self.h_y,
                self.w_y,
                self.codec.feature_channels(),
            ),
            last_output: Frame::zeros(
                self.config.frame_height,
                self.config.frame_width,
                self.config.frame_channels,
            ),
        }
    }

    fn check_frame(&self, x: &Frame) -> Result<()> {
        let want = (
            self.config.frame_height,
            self.config.frame_width,
            self.config.frame_channels,
        );
        if x.dims() != want {
            return Err(Error::ShapeMismatch {
                context: "session frame dims",
                expected: want.0 * want.1 * want.2,
                got: x.as_slice().len(),
            });
        }
        x.check_finite("session frame")
    }

    /// Encodes one frame: context, features, hyper path, two-pass
    /// checkerboard quantization, rate matching, symbol mapping, power
    /// normalization, and the transmitter's own buffer refresh.
    pub fn encode_frame(&self, frame_index: u64, x: &Frame, tx: &mut TxState) -> Result<EncodeResult> {
        self.check_frame(x)?;
        let wire_index = u32::try_from(frame_index).map_err(|_| {
            Error::InvalidConfig(format!("frame index {frame_index} exceeds the wire format"))
        })?;
        let c_y = self.codec.feature_channels();
        let x_pad = x.pad_to_multiple(self.codec.stride());
        let ctx = self.codec.context_extract(&tx.buffer.feature)?;
        let y = self.codec.feature_extract(&x_pad, &ctx.c_f)?;

        // hyper path: code the quantized grid, then decode it locally so
        // both ends derive coding parameters from identical integers
        let zhat = self.codec.hyper_quantize(&self.codec.hyper_encode(&y)?)?;
        let payload_z = encode_hyperlatent(&zhat, &self.prior)?;
        let hyper_model_bits = self.prior.model_bits(&zhat)?;
        let params = self
            .codec
            .hyper_decode(&zhat, &ctx.c_e, self.config.entropy.sigma_floor)?;

        // checkerboard pass 0: quantize the anchor cells on the hyper prior
        let (h_y, w_y) = (self.h_y, self.w_y);
        let cells1 = block_cells(h_y, w_y, 1);
        let mut ybar = FeatureGrid::zeros(h_y, w_y, c_y);
        let mut ybar0 = Vec::with_capacity(block_cells(h_y, w_y, 0).len() * c_y);
        for (i, j) in block_cells(h_y, w_y, 0) {
            let q = quantize_center(y.cell(i, j), params.w.cell(i, j), params.mu0.cell(i, j))?;
            ybar.cell_mut(i, j).copy_from_slice(&q);
            ybar0.extend_from_slice(&q);
        }

        // pass 1: predict the offset cells from their quantized neighbors
        let (mu1, sigma1) =
            spatial_prior_predict(&ybar0, &params.mu0, &params.sigma0, &self.config.entropy);
        let mut mu_merged = params.mu0.clone();
        let mut sigma_eff = params.sigma0.clone();
        for (n, &(i, j)) in cells1.iter().enumerate() {
            let mu_c = &mu1[n * c_y..(n + 1) * c_y];
            let q = quantize_center(y.cell(i, j), params.w.cell(i, j), mu_c)?;
            ybar.cell_mut(i, j).copy_from_slice(&q);
            mu_merged.cell_mut(i, j).copy_from_slice(mu_c);
            sigma_eff
                .cell_mut(i, j)
                .copy_from_slice(&sigma1[n * c_y..(n + 1) * c_y]);
        }

        // per-unit rate decision, row-major over cells
        let mut indices = Vec::with_capacity(h_y * w_y);
        for i in 0..h_y {
            for j in 0..w_y {
                let k_raw = symbol_length_factor(
                    ybar.cell(i, j),
                    sigma_eff.cell(i, j),
                    self.config.entropy.eta,
                );
                let (_, idx) = rate_match(k_raw, &self.config.rate_set);
                indices.push(idx as u8);
            }
        }
        let rate_map = RateMap::new(indices, h_y, w_y, self.config.rate_set.clone())?;
        let payload_k = encode_rate_map(&rate_map)?;

        // analog mapping, row-major over cells
        let mut symbols = Vec::with_capacity(rate_map.total_symbols());
        let mut unit_symbol_counts = Vec::with_capacity(h_y * w_y);
        let mut unit_levels = Vec::with_capacity(h_y * w_y);
        for i in 0..h_y {
            for j in 0..w_y {
                let unit = map_unit(ybar.cell(i, j), rate_map.index_at(i, j), &self.projector)?;
                unit_symbol_counts.push(unit.len());
                unit_levels.push(rate_map.level_at(i, j));
                symbols.extend_from_slice(&unit);
            }
        }

        // normalize mean per-symbol power to P exactly (f64); the side
        // info carries the scale rounded to f32, and *both* ends descale
        // with that f32 so their reconstructions agree bit for bit
        let energy: f64 = symbols.iter().map(|s| s.norm_sqr()).sum();
        let alpha = if symbols.is_empty() || energy == 0.0 {
            1.0
        } else {
            (self.config.channel.power * symbols.len() as f64 / energy).sqrt()
        };
        let power_scale = alpha as f32;
        if !(power_scale.is_finite() && power_scale > 0.0) {
            return Err(Error::NonFinite {
                context: "power scale",
                index: frame_index as usize,
            });
        }
        for s in symbols.iter_mut() {
            *s *= alpha;
        }

        let side = SideInfoFrame {
            frame_index: wire_index,
            power_scale,
            payload_z,
            payload_k,
        };
        let diagnostics = EncodeDiagnostics {
            sum_k: rate_map.total_rate(),
            ratemap_bits: 8 * side.payload_k.len() as u64,
            hyper_bits: 8 * side.payload_z.len() as u64,
            hyper_model_bits,
            power_scale,
            symbol_energy: energy,
        };

        // refresh the transmitter buffer by decoding its own clean stream
        // through the shared receiver path
        let (local_pad, feature, state) = self.reconstruct(&side, &symbols, &tx.buffer.feature)?;
        tx.buffer.update(feature, state, frame_index)?;
        let local = local_pad.crop(self.config.frame_height, self.config.frame_width);

        // masking- and channel-free reference branch
        let (ideal_pad, _) = self
            .codec
            .ideal_decode(&ybar, &params.w, &mu_merged, &ctx.c_f)?;
        let ideal = ideal_pad.crop(self.config.frame_height, self.config.frame_width);

        Ok(EncodeResult {
            transmission: FrameTransmission {
                frame_index,
                symbols,
                side,
                unit_symbol_counts,
                unit_levels,
                diagnostics,
            },
            local,
            ideal,
        })
    }

    /// Decodes one frame from the equalized symbol stream plus the side
    /// packet. A side packet that fails to decode marks the frame lost:
    /// the previous reconstruction is repeated and no state changes.
    /// A symbol count that contradicts a *valid* rate map is a hard
    /// protocol error.
    pub fn decode_frame(
        &self,
        symbols: &[Complex64],
        side_bytes: &[u8],
        rx: &mut RxState,
    ) -> Result<DecodeResult> {
        let side = match parse_side_info(side_bytes) {
            Ok(side) => side,
            Err(_) => {
                return Ok(DecodeResult {
                    frame: rx.last_output.clone(),
                    lost: true,
                })
            }
        };
        let (frame_pad, feature, state) = self.reconstruct(&side, symbols, &rx.buffer.feature)?;
        rx.buffer
            .update(feature, state, u64::from(side.frame_index))?;
        let frame = frame_pad.crop(self.config.frame_height, self.config.frame_width);
        rx.last_output = frame.clone();
        Ok(DecodeResult { frame, lost: false })
    }

    /// The shared reception path: rate map, hyperlatent, contexts, unmap,
    /// two-pass dequantization, synthesis. Returns the padded frame, the
    /// next reference feature, and the merged dequantized state.
    fn reconstruct(
        &self,
        side: &SideInfoFrame,
        symbols: &[Complex64],
        ref_feature: &FeatureGrid,
    ) -> Result<(Frame, FeatureGrid, FeatureGrid)> {
        let c_y = self.codec.feature_channels();
        let (h_y, w_y) = (self.h_y, self.w_y);
        let rate_map = decode_rate_map(&side.payload_k, self.config.rate_set.clone())?;
        if (rate_map.height(), rate_map.width()) != (h_y, w_y) {
            return Err(Error::Protocol(format!(
                "rate map is {}x{}, session features are {h_y}x{w_y}",
                rate_map.height(),
                rate_map.width()
            )));
        }
        if symbols.len() != rate_map.total_symbols() {
            return Err(Error::Protocol(format!(
                "stream carries {} symbols, rate map promises {}",
                symbols.len(),
                rate_map.total_symbols()
            )));
        }
        let alpha = f64::from(side.power_scale);

        let (h_z, w_z) = self.codec.hyper_dims(h_y, w_y);
        let zhat = decode_hyperlatent(
            &side.payload_z,
            &self.prior,
            (h_z, w_z, self.codec.hyper_channels()),
        )?;
        let ctx = self.codec.context_extract(ref_feature)?;
        let params = self
            .codec
            .hyper_decode(&zhat, &ctx.c_e, self.config.entropy.sigma_floor)?;

        // descale and unmap every unit back into feature-index space
        let mut ybar = FeatureGrid::zeros(h_y, w_y, c_y);
        let mut cursor = 0usize;
        let mut unit = Vec::new();
        for i in 0..h_y {
            for j in 0..w_y {
                let count = crate::rate::symbols_for_level(usize::from(rate_map.level_at(i, j)));
                unit.clear();
                unit.extend(symbols[cursor..cursor + count].iter().map(|s| s / alpha));
                cursor += count;
                let coeffs = unmap_unit(&unit, rate_map.index_at(i, j), &self.projector)?;
                ybar.cell_mut(i, j).copy_from_slice(&coeffs);
            }
        }

        // dequantize anchors, predict the offset cells from them, merge
        let cells0 = block_cells(h_y, w_y, 0);
        let mut ybar0 = Vec::with_capacity(cells0.len() * c_y);
        for &(i, j) in &cells0 {
            ybar0.extend_from_slice(ybar.cell(i, j));
        }
        let (mu1, _) =
            spatial_prior_predict(&ybar0, &params.mu0, &params.sigma0, &self.config.entropy);
        let mut ytilde = FeatureGrid::zeros(h_y, w_y, c_y);
        let mut offset = 0usize;
        for i in 0..h_y {
            for j in 0..w_y {
                let mu_c: &[f64] = if cell_parity(i, j) == 0 {
                    params.mu0.cell(i, j)
                } else {
                    let c = &mu1[offset..offset + c_y];
                    offset += c_y;
                    c
                };
                let cell = ytilde.cell_mut(i, j);
                let w_c = params.w.cell(i, j);
                let yb = ybar.cell(i, j);
                for ch in 0..c_y {
                    cell[ch] = w_c[ch] * (yb[ch] + mu_c[ch]);
                }
            }
        }

        let (frame, feature) = self.codec.generate(&ytilde, &ctx.c_f)?;
        Ok((frame, feature, ytilde))
    }

    /// Drives a whole sequence through the link. Buffers reset at every
    /// GOP boundary; each frame uses its own channel substream so runs
    /// reproduce exactly.
    pub fn run_sequence(&self, frames: &[Frame], opts: &RunOptions) -> Result<SequenceOutcome> {
        if frames.is_empty() {
            return Err(Error::InvalidConfig("run_sequence needs at least one frame".into()));
        }
        if let Some(dir) = &opts.capture_dir {
            std::fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.display().to_string(),
                source,
            })?;
        }
        let mut tx = self.tx_state();
        let mut rx = self.rx_state();
        let mut reports = Vec::with_capacity(frames.len());
        let mut reconstructions = Vec::with_capacity(frames.len());
        let frame_dims = (
            self.config.frame_height,
            self.config.frame_width,
            self.config.frame_channels,
        );
        for (t, x) in frames.iter().enumerate() {
            let t64 = t as u64;
            if t % self.config.gop_len == 0 {
                tx.buffer.reset();
                rx.buffer.reset();
            }
            let step = (|| -> Result<(LinkReport, Frame)> {
                let enc = self.encode_frame(t64, x, &mut tx)?;
                let mut rng = substream(self.config.channel.seed, t64, StreamTag::Channel);
                let (received, realization) =
                    transmit(&enc.transmission.symbols, &self.config.channel, &mut rng)?;
                let (equalized, zf_clamps) = match self.config.equalizer {
                    Equalizer::Zf => zf_equalize(&received, &realization.gains_est),
                    Equalizer::Mmse => (
                        mmse_equalize(
                            &received,
                            &realization.gains_est,
                            self.config.channel.noise_variance(),
                        ),
                        0,
                    ),
                };
                let side_bytes = enc.transmission.side.to_bytes()?;
                if let Some(dir) = &opts.capture_dir {
                    write_capture(dir, t, &enc.transmission.symbols, &side_bytes)?;
                }
                let dec = self.decode_frame(&equalized, &side_bytes, &mut rx)?;

                let d = distortion(x, &dec.frame)?;
                let d_ideal = distortion(x, &enc.ideal)?;
                let diag = enc.transmission.diagnostics;
                let side_bits = enc.transmission.side.side_bits();
                let l_t = enc.transmission.symbols.len();
                let report = LinkReport {
                    frame_index: t64,
                    symbol_count: l_t,
                    side_bits,
                    cbr: cbr_frame(l_t, side_bits, frame_dims, self.config.side_spectral_eff)?,
                    psnr: d.psnr,
                    mse: d.mse,
                    l1: d.l1,
                    sum_k: diag.sum_k,
                    rate_loss: rate_loss(
                        &enc.transmission.unit_levels,
                        diag.ratemap_bits as f64,
                        diag.hyper_model_bits,
                        self.config.entropy.eta,
                    ),
                    ratemap_bits: diag.ratemap_bits,
                    hyper_bits: diag.hyper_bits,
                    hyper_model_bits: diag.hyper_model_bits,
                    zf_clamps,
                    psnr_ideal: d_ideal.psnr,
                    buffer_divergence: grid_divergence(&tx.buffer.feature, &rx.buffer.feature),
                    frame_lost: dec.lost,
                };
                Ok((report, dec.frame))
            })()
            .map_err(|e| e.at_frame(t64))?;
            reports.push(step.0);
            reconstructions.push(step.1);
        }
        let gops = summarize_gops(&reports, self.config.gop_len);
        Ok(SequenceOutcome {
            reports,
            gops,
            reconstructions,
        })
    }
}

/// Largest absolute element difference between two equally shaped grids.
fn grid_divergence(a: &FeatureGrid, b: &FeatureGrid) -> f64 {
    debug_assert_eq!(a.dims(), b.dims());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn summarize_gops(reports: &[LinkReport], gop_len: usize) -> Vec<GopSummary> {
    reports
        .chunks(gop_len)
        .map(|chunk| GopSummary {
            start_frame: chunk[0].frame_index,
            frames: chunk.len(),
            cbr: chunk.iter().map(|r| r.cbr).sum::<f64>() / chunk.len() as f64,
            mean_psnr: chunk.iter().map(|r| r.psnr).sum::<f64>() / chunk.len() as f64,
        })
        .collect()
}

fn write_capture(dir: &Path, t: usize, symbols: &[Complex64], side_bytes: &[u8]) -> Result<()> {
    let sym_path = dir.join(format!("frame_{t:05}.sym"));
    let mut bytes = Vec::with_capacity(8 * symbols.len());
    for s in symbols {
        bytes.extend_from_slice(&(s.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    write_file(&sym_path, &bytes)?;
    write_file(&dir.join(format!("frame_{t:05}.side")), side_bytes)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io_err)?;
    f.write_all(bytes).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelKind, CsiQuality, NoiseLevel};
    use rand::Rng;

    fn noiseless_channel(seed: u64) -> ChannelConfig {
        ChannelConfig {
            kind: ChannelKind::Awgn,
            snr_db: NoiseLevel::Disabled,
            coherence_len: 16,
            csi_nmse_db: CsiQuality::Perfect,
            power: 1.0,
            seed,
        }
    }

    fn small_config(gop_len: usize) -> SessionConfig {
        SessionConfig {
            gop_len,
            frame_height: 8,
            frame_width: 8,
            frame_channels: 1,
            channel: noiseless_channel(5),
            entropy: EntropyConfig::default(),
            rate_set: RateSet::new(vec![0, 2, 4, 6, 8]).unwrap(),
            codec: CodecConfig {
                stride: 2,
                gamma: 0.5,
                delta: 0.3,
                preset_id: "unit".into(),
                seed: 9,
            },
            side_spectral_eff: 2.0,
            equalizer: Equalizer::Zf,
        }
    }

    fn small_session(gop_len: usize) -> SessionModel {
        SessionModel::with_dims(small_config(gop_len), 8, 4).unwrap()
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
    fn config_validation_rejects_bad_fields() {
        let mut cfg = small_config(12);
        cfg.gop_len = 0;
        assert!(cfg.validate().is_err());
        cfg = small_config(12);
        cfg.frame_width = 0;
        assert!(cfg.validate().is_err());
        cfg = small_config(12);
        cfg.side_spectral_eff = 0.0;
        assert!(cfg.validate().is_err());
        assert!(small_config(1).validate().is_ok());
        // rate levels above the feature depth are caught at session build
        let mut cfg = small_config(12);
        cfg.rate_set = RateSet::new(vec![0, 16]).unwrap();
        assert!(SessionModel::with_dims(cfg, 8, 4).is_err());
    }

    #[test]
    fn session_config_round_trips_through_json() {
        let cfg = small_config(12);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: SessionConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        // the two defaulted fields may be omitted
        let slim = r#"{
            "gop_len": 2, "frame_height": 8, "frame_width": 8, "frame_channels": 1,
            "channel": {"kind":"awgn","snr_db":"inf","coherence_len":16,
                        "csi_nmse_db":"perfect","power":1.0,"seed":5},
            "rate_set": [0, 2, 4],
            "codec": {"stride": 2}
        }"#;
        let parsed: SessionConfig = serde_json::from_str(slim).unwrap();
        assert_eq!(parsed.side_spectral_eff, 2.0);
        assert_eq!(parsed.equalizer, Equalizer::Zf);
        assert!(serde_json::from_str::<SessionConfig>("{\"gop\":1}").is_err());
    }

    #[test]
    fn zero_frame_uses_one_rate_level_everywhere() {
        let session = small_session(12);
        let mut tx = session.tx_state();
        let x = Frame::zeros(8, 8, 1);
        let enc = session.encode_frame(0, &x, &mut tx).unwrap();
        let first = enc.transmission.unit_levels[0];
        assert!(enc.transmission.unit_levels.iter().all(|&k| k == first));
        assert!(enc
            .transmission
            .symbols
            .iter()
            .all(|s| s.re.is_finite() && s.im.is_finite()));
    }

    #[test]
    fn encode_is_deterministic() {
        let x = random_frame(8, 8, 1, 77);
        let run = || {
            let session = small_session(12);
            let mut tx = session.tx_state();
            session.encode_frame(0, &x, &mut tx).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.transmission.symbols, b.transmission.symbols);
        assert_eq!(a.transmission.side, b.transmission.side);
        assert_eq!(a.local, b.local);
    }

    #[test]
    fn unit_counts_sum_to_stream_length() {
        let session = small_session(12);
        let mut tx = session.tx_state();
        for t in 0..3u64 {
            let x = random_frame(8, 8, 1, 100 + t);
            let enc = session.encode_frame(t, &x, &mut tx).unwrap();
            let total: usize = enc.transmission.unit_symbol_counts.iter().sum();
            assert_eq!(total, enc.transmission.symbols.len());
            let sum_k: u64 = enc.transmission.unit_levels.iter().map(|&k| u64::from(k)).sum();
            assert_eq!(sum_k, enc.transmission.diagnostics.sum_k);
        }
    }

    #[test]
    fn transmitted_power_is_exactly_the_constraint() {
        let session = small_session(12);
        let mut tx = session.tx_state();
        for t in 0..4u64 {
            let x = random_frame(8, 8, 1, 7 + t);
            let enc = session.encode_frame(t, &x, &mut tx).unwrap();
            let l = enc.transmission.symbols.len();
            if l == 0 {
                continue;
            }
            let mean: f64 =
                enc.transmission.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / l as f64;
            let p = session.config().channel.power;
            assert!(
                ((mean - p) / p).abs() < 1e-9,
                "frame {t}: mean power {mean} vs {p}"
            );
        }
    }

    #[test]
    fn noiseless_link_stays_bit_exact_for_a_full_gop() {
        let session = small_session(12);
        let mut tx = session.tx_state();
        let mut rx = session.rx_state();
        for t in 0..12u64 {
            let x = random_frame(8, 8, 1, 40 + t);
            let enc = session.encode_frame(t, &x, &mut tx).unwrap();
            let side_bytes = enc.transmission.side.to_bytes().unwrap();
            let dec = session
                .decode_frame(&enc.transmission.symbols, &side_bytes, &mut rx)
                .unwrap();
            assert!(!dec.lost);
            // receiver output equals the transmitter's own reconstruction,
            // and both reference buffers match, to the last bit
            assert_eq!(dec.frame.as_slice(), enc.local.as_slice(), "frame {t}");
            assert_eq!(
                tx.buffer.feature.as_slice(),
                rx.buffer.feature.as_slice(),
                "feature buffers at {t}"
            );
            assert_eq!(
                tx.buffer.state.as_slice(),
                rx.buffer.state.as_slice(),
                "state buffers at {t}"
            );
        }
    }

    #[test]
    fn truncated_stream_is_a_protocol_error() {
        let session = small_session(12);
        let mut tx = session.tx_state();
        let mut rx = session.rx_state();
        let x = random_frame(8, 8, 1, 3);
        let enc = session.encode_frame(0, &x, &mut tx).unwrap();
        let side_bytes = enc.transmission.side.to_bytes().unwrap();
        let mut cut = enc.transmission.symbols.clone();
        assert!(!cut.is_empty());
        cut.pop();
        let err = session.decode_frame(&cut, &side_bytes, &mut rx).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "got {err}");
    }

    #[test]
    fn corrupt_side_info_freezes_the_receiver() {
        let session = small_session(12);
        let mut tx = session.tx_state();
        let mut rx = session.rx_state();
        let x0 = random_frame(8, 8, 1, 50);
        let enc0 = session.encode_frame(0, &x0, &mut tx).unwrap();
        let side0 = enc0.transmission.side.to_bytes().unwrap();
        let good = session
            .decode_frame(&enc0.transmission.symbols, &side0, &mut rx)
            .unwrap();
        let buffer_before = rx.buffer.clone();

        let x1 = random_frame(8, 8, 1, 51);
        let enc1 = session.encode_frame(1, &x1, &mut tx).unwrap();
        let mut bad = enc1.transmission.side.to_bytes().unwrap();
        bad[0] ^= 0xFF; // break the magic
        let dec = session
            .decode_frame(&enc1.transmission.symbols, &bad, &mut rx)
            .unwrap();
        assert!(dec.lost);
        assert_eq!(dec.frame.as_slice(), good.frame.as_slice());
        assert_eq!(rx.buffer, buffer_before);
    }

    #[test]
    fn run_sequence_reports_are_consistent() {
        let session = small_session(2);
        let frames: Vec<Frame> = (0..4).map(|t| random_frame(8, 8, 1, 60 + t)).collect();
        let out = session.run_sequence(&frames, &RunOptions::default()).unwrap();
        assert_eq!(out.reports.len(), 4);
        assert_eq!(out.reconstructions.len(), 4);
        assert_eq!(out.gops.len(), 2);
        assert_eq!(out.gops[0].start_frame, 0);
        assert_eq!(out.gops[1].start_frame, 2);
        for (t, r) in out.reports.iter().enumerate() {
            assert_eq!(r.frame_index, t as u64);
            assert!(r.cbr > 0.0);
            assert!(r.psnr.is_finite() && r.psnr > 0.0);
            assert!(!r.frame_lost);
            // noiseless link: both ends hold identical buffers
            assert_eq!(r.buffer_divergence, 0.0);
            assert!(r.rate_loss >= r.sum_k as f64);
        }
        // reconstruction in the outcome is the decoded frame
        let d = distortion(&frames[3], &out.reconstructions[3]).unwrap();
        assert_abs_diff_eq(d.psnr, out.reports[3].psnr);
    }

    fn assert_abs_diff_eq(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn gop_reset_makes_frames_independent_of_history() {
        let session = small_session(3);
        let x = random_frame(8, 8, 1, 70);
        // same frame content everywhere: after a reset the pipeline sees
        // exactly the zero-context situation of frame 0 again
        let frames = vec![x.clone(); 6];
        let out = session.run_sequence(&frames, &RunOptions::default()).unwrap();
        let r0 = &out.reports[0];
        let r3 = &out.reports[3];
        assert_eq!(
            out.reconstructions[0].as_slice(),
            out.reconstructions[3].as_slice()
        );
        assert_eq!(r0.sum_k, r3.sum_k);
        assert_eq!(r0.symbol_count, r3.symbol_count);
        assert_abs_diff_eq(r0.psnr, r3.psnr);
    }

    /// On a perfectly static clip the predictor should pick up more of each
    /// frame from the reference buffer: every inter frame spends fewer rate
    /// units and lands closer to the source than the intra frame, and quality
    /// keeps trending upward as the loop converges. Adjacent frames can still
    /// trade fractions of a dB (requantization jitters around the convergence
    /// floor, and the rate map never covers every coefficient), so the trend
    /// is asserted on halves rather than on consecutive pairs.
    #[test]
    fn static_noiseless_link_converges_within_a_gop() {
        let mut cfg = small_config(6);
        cfg.frame_height = 16;
        cfg.frame_width = 16;
        cfg.entropy.eta = 0.5;
        cfg.codec.gamma = 0.8;
        cfg.rate_set = RateSet::new(vec![0, 1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let session = SessionModel::with_dims(cfg, 8, 4).unwrap();
        let frames = vec![random_frame(16, 16, 1, 80); 6];
        let out = session.run_sequence(&frames, &RunOptions::default()).unwrap();
        let intra = &out.reports[0];
        for inter in &out.reports[1..] {
            assert!(
                inter.psnr > intra.psnr,
                "inter frame {} did not beat the intra frame: {} <= {}",
                inter.frame_index,
                inter.psnr,
                intra.psnr
            );
            assert!(
                inter.sum_k < intra.sum_k,
                "inter frame {} spent as much rate as the intra frame",
                inter.frame_index
            );
        }
        let mean = |r: &[LinkReport]| r.iter().map(|x| x.psnr).sum::<f64>() / r.len() as f64;
        assert!(
            mean(&out.reports[3..]) > mean(&out.reports[..3]),
            "quality stopped improving across the gop"
        );
    }

    #[test]
    fn mmse_matches_zf_on_a_clean_awgn_link() {
        let frames: Vec<Frame> = (0..3).map(|t| random_frame(8, 8, 1, 90 + t)).collect();
        let run = |eq: Equalizer| {
            let mut cfg = small_config(12);
            cfg.equalizer = eq;
            let session = SessionModel::with_dims(cfg, 8, 4).unwrap();
            session.run_sequence(&frames, &RunOptions::default()).unwrap()
        };
        let (zf, mmse) = (run(Equalizer::Zf), run(Equalizer::Mmse));
        for (a, b) in zf.reconstructions.iter().zip(&mmse.reconstructions) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
    }

    #[test]
    fn capture_files_mirror_the_stream() {
        let dir = tempfile::tempdir().unwrap();
        let session = small_session(12);
        let frames: Vec<Frame> = (0..2).map(|t| random_frame(8, 8, 1, 95 + t)).collect();
        let opts = RunOptions {
            capture_dir: Some(dir.path().to_path_buf()),
        };
        let out = session.run_sequence(&frames, &opts).unwrap();
        for (t, report) in out.reports.iter().enumerate() {
            let sym = std::fs::read(dir.path().join(format!("frame_{t:05}.sym"))).unwrap();
            assert_eq!(sym.len(), 8 * report.symbol_count);
            let side = std::fs::read(dir.path().join(format!("frame_{t:05}.side"))).unwrap();
            assert_eq!(8 * side.len() as u64, report.side_bits);
        }
        // re-encode and compare the first capture word for word
        let mut tx = session.tx_state();
        let enc = session.encode_frame(0, &frames[0], &mut tx).unwrap();
        let sym = std::fs::read(dir.path().join("frame_00000.sym")).unwrap();
        let mut expect = Vec::new();
        for s in &enc.transmission.symbols {
            expect.extend_from_slice(&(s.re as f32).to_le_bytes());
            expect.extend_from_slice(&(s.im as f32).to_le_bytes());
        }
        assert_eq!(sym, expect);
    }

    #[test]
    fn errors_carry_the_frame_index() {
        let session = small_session(12);
        let mut bad = random_frame(8, 8, 1, 99);
        bad.set(0, 0, 0, f64::NAN);
        let frames = vec![random_frame(8, 8, 1, 98), bad];
        let err = session.run_sequence(&frames, &RunOptions::default()).unwrap_err();
        match err {
            Error::Frame { frame, .. } => assert_eq!(frame, 1),
            other => panic!("expected frame-tagged error, got {other}"),
        }
    }
}
