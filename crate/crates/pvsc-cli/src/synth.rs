//! Input sequences: deterministic synthetic generators and raw planar
//! video I/O.
//!
//! Synthetic clips cover the three behaviors the link cares about: `static`
//! rewards temporal prediction, `shift` exercises motion, and `noise`
//! produces incompressible frames. Raw files are headerless planar 8-bit
//! (per frame: one full plane per channel), so no container parsing is
//! involved anywhere.

use std::path::{Path, PathBuf};

use pvsc_core::rng::{substream, StreamTag};
use pvsc_core::Frame;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::CliError;

/// Where frames come from: generated on the fly or read from disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    Synthetic(SyntheticSpec),
    Raw(RawSpec),
}

/// Deterministic generator spec: dims, length, motion model, and seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub height: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub channels: usize,
    pub frames: usize,
    #[serde(default)]
    pub motion: MotionModel,
    pub seed: u64,
}

fn one() -> usize {
    1
}

/// Frame-to-frame dynamics of a synthetic clip.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotionModel {
    /// Every frame equals the seeded base texture.
    #[default]
    Static,
    /// Each frame is the previous one cyclically shifted by (dx, dy).
    Shift { dx: i64, dy: i64 },
    /// Frames are independent Gaussian noise around mid-gray.
    Noise { sigma: f64 },
}

/// Headerless planar video on disk; `frames` may be omitted to take every
/// complete frame the file holds.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpec {
    pub path: PathBuf,
    pub height: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub channels: usize,
    #[serde(default)]
    pub frames: Option<usize>,
}

impl InputSpec {
    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            InputSpec::Synthetic(s) => (s.height, s.width, s.channels),
            InputSpec::Raw(r) => (r.height, r.width, r.channels),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let (h, w, c) = self.dims();
        if h == 0 || w == 0 || c == 0 {
            return Err("dims must be positive".into());
        }
        match self {
            InputSpec::Synthetic(s) => {
                if s.frames == 0 {
                    return Err("frame count must be at least 1".into());
                }
                if let MotionModel::Noise { sigma } = s.motion {
                    if !(sigma >= 0.0 && sigma.is_finite()) {
                        return Err(format!("noise sigma must be finite and >= 0, got {sigma}"));
                    }
                }
                Ok(())
            }
            InputSpec::Raw(r) => {
                if r.frames == Some(0) {
                    return Err("frame count must be at least 1".into());
                }
                Ok(())
            }
        }
    }

    /// Produces the full frame list, generating or reading as configured.
    pub fn load(&self) -> Result<Vec<Frame>, CliError> {
        match self {
            InputSpec::Synthetic(s) => Ok(generate(s)),
            InputSpec::Raw(r) => load_raw(r),
        }
    }
}

/// The seeded base texture: dense uniform detail kept inside [0.05, 0.95]
/// so quantization clamps stay out of the way.
fn base_texture(height: usize, width: usize, channels: usize, seed: u64) -> Frame {
    let mut rng = substream(seed, 0, StreamTag::Synthetic);
    let mut frame = Frame::zeros(height, width, channels);
    for v in frame.as_mut_slice() {
        *v = 0.05 + 0.9 * rng.random::<f64>();
    }
    frame
}

/// Deterministic synthetic clip per the spec'd motion model.
pub fn generate(spec: &SyntheticSpec) -> Vec<Frame> {
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    match spec.motion {
        MotionModel::Static => {
            vec![base_texture(h, w, c, spec.seed); spec.frames]
        }
        MotionModel::Shift { dx, dy } => {
            let base = base_texture(h, w, c, spec.seed);
            (0..spec.frames)
                .map(|t| cyclic_shift(&base, t as i64 * dx, t as i64 * dy))
                .collect()
        }
        MotionModel::Noise { sigma } => (0..spec.frames as u64)
            .map(|t| {
                let mut rng = substream(spec.seed, t, StreamTag::Synthetic);
                let mut frame = Frame::zeros(h, w, c);
                for v in frame.as_mut_slice() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = (0.5 + sigma * z).clamp(0.0, 1.0);
                }
                frame
            })
            .collect(),
    }
}

/// Cyclically shifts a frame by `dx` columns and `dy` rows (positive moves
/// content right/down).
fn cyclic_shift(frame: &Frame, dx: i64, dy: i64) -> Frame {
    let (h, w, c) = frame.dims();
    let mut out = Frame::zeros(h, w, c);
    for i in 0..h {
        let src_i = (i as i64 - dy).rem_euclid(h as i64) as usize;
        for j in 0..w {
            let src_j = (j as i64 - dx).rem_euclid(w as i64) as usize;
            for ch in 0..c {
                out.set(i, j, ch, frame.get(src_i, src_j, ch));
            }
        }
    }
    out
}

/// Reads planar 8-bit frames; the file must hold a whole number of frames.
fn load_raw(spec: &RawSpec) -> Result<Vec<Frame>, CliError> {
    let bytes = std::fs::read(&spec.path)
        .map_err(|e| CliError::in_file(&spec.path, e))?;
    let frame_len = spec.height * spec.width * spec.channels;
    if frame_len == 0 || bytes.len() % frame_len != 0 {
        return Err(CliError::new(format!(
            "{}: {} bytes is not a whole number of {}x{}x{} frames",
            spec.path.display(),
            bytes.len(),
            spec.height,
            spec.width,
            spec.channels
        )));
    }
    let available = bytes.len() / frame_len;
    let take = spec.frames.unwrap_or(available);
    if take == 0 || take > available {
        return Err(CliError::new(format!(
            "{}: requested {take} frames but the file holds {available}",
            spec.path.display()
        )));
    }
    Ok((0..take)
        .map(|t| frame_from_planar(&bytes[t * frame_len..(t + 1) * frame_len], spec))
        .collect())
}

fn frame_from_planar(plane_bytes: &[u8], spec: &RawSpec) -> Frame {
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    let mut frame = Frame::zeros(h, w, c);
    for ch in 0..c {
        let plane = &plane_bytes[ch * h * w..(ch + 1) * h * w];
        for i in 0..h {
            for j in 0..w {
                frame.set(i, j, ch, plane[i * w + j] as f64 / 255.0);
            }
        }
    }
    frame
}

/// Writes frames as headerless planar 8-bit, the same layout `load` reads.
pub fn write_raw(frames: &[Frame], path: &Path) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    for frame in frames {
        let (h, w, c) = frame.dims();
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let v = (frame.get(i, j, ch) * 255.0).round().clamp(0.0, 255.0);
                    bytes.push(v as u8);
                }
            }
        }
    }
    std::fs::write(path, bytes).map_err(|e| CliError::in_file(path, e))
}
