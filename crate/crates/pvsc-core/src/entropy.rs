//! Conditional Gaussian entropy model and checkerboard spatial context.
//!
//! Features are quantized to integer centers with a per-element step `w`
//! and mean `mu`:
//!
//! ```text
//! ybar = round(y / w - mu)          (ties away from zero)
//! ytilde = w * (ybar + mu)
//! ```
//!
//! Each quantized element is priced under a Gaussian with scale `sigma`:
//! the probability mass of the unit interval around `ybar` is
//! `Phi((ybar + 1/2) / sigma) - Phi((ybar - 1/2) / sigma)` and the element
//! costs `-log2` of that mass, clamped to `[0, BITS_MAX]`. Summing over a
//! unit's channels and scaling by `eta` yields the raw per-unit symbol
//! budget consumed by rate matching.
//!
//! Spatial context is a two-block checkerboard: cells with even `i + j`
//! form block 0 and are coded with the hyper-decoded `(mu0, sigma0)`;
//! block-1 cells get `(mu1, sigma1)` predicted from their quantized block-0
//! 4-neighborhood, so transmitter and receiver can form identical block-1
//! parameters from identical block-0 reconstructions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FeatureGrid;

/// Ceiling on the per-element price in bits; masses that underflow to zero
/// are charged exactly this much.
pub const BITS_MAX: f64 = 32.0;

/// Entropy-model parameters.
///
/// `eta` scales summed bits into symbol counts (spectral-efficiency knob),
/// `sigma_floor` lower-bounds every Gaussian scale, and `rho`/`beta` shape
/// the block-1 spatial prior (neighbor-mean weight and scale inflation).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntropyConfig {
    pub eta: f64,
    pub sigma_floor: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        EntropyConfig {
            eta: 0.2,
            sigma_floor: 0.11,
            rho: 0.5,
            beta: 1.0,
        }
    }
}

impl EntropyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "entropy.eta must be finite and >= 0, got {}",
                self.eta
            )));
        }
        if !(self.sigma_floor.is_finite() && self.sigma_floor > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "entropy.sigma_floor must be finite and > 0, got {}",
                self.sigma_floor
            )));
        }
        if !(self.rho.is_finite() && self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidConfig(
                "entropy.rho must be finite and entropy.beta finite and > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Rounds to the nearest integer with ties away from zero
/// (`-1.5 -> -2`, `0.5 -> 1`), matching `f64::round`.
#[inline]
pub fn round_half_away(v: f64) -> f64 {
    v.round()
}

/// Quantizes `y` to integer centers: `round(y / w - mu)` elementwise.
///
/// Errors if any step is non-positive or any operand is non-finite.
pub fn quantize_center(y: &[f64], w: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
    if y.len() != w.len() || y.len() != mu.len() {
        return Err(Error::ShapeMismatch {
            context: "quantize_center",
            expected: y.len(),
            got: w.len().min(mu.len()),
        });
    }
    let mut out = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        if !(w[i].is_finite() && w[i] > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "quantization step must be positive, got {} at index {i}",
                w[i]
            )));
        }
        if !(y[i].is_finite() && mu[i].is_finite()) {
            return Err(Error::NonFinite {
                context: "quantize_center",
                index: i,
            });
        }
        out.push(round_half_away(y[i] / w[i] - mu[i]));
    }
    Ok(out)
}

/// Inverse of [`quantize_center`] up to quantization error:
/// `w * (ybar + mu)` elementwise.
pub fn dequantize_center(ybar: &[f64], w: &[f64], mu: &[f64]) -> Vec<f64> {
    assert_eq!(ybar.len(), w.len());
    assert_eq!(ybar.len(), mu.len());
    (0..ybar.len()).map(|i| w[i] * (ybar[i] + mu[i])).collect()
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Standard normal mass of the interval `(a, b]`, evaluated through the
/// complementary error function on whichever tail avoids cancellation.
/// Direct subtraction of CDFs loses all precision once both endpoints sit
/// in the same far tail; the complementary form keeps the relative error
/// near machine epsilon everywhere the mass is representable.
pub(crate) fn normal_interval_mass(a: f64, b: f64) -> f64 {
    debug_assert!(a <= b);
    if a >= 0.0 {
        0.5 * (libm::erfc(a * FRAC_1_SQRT_2) - libm::erfc(b * FRAC_1_SQRT_2))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b * FRAC_1_SQRT_2) - libm::erfc(-a * FRAC_1_SQRT_2))
    } else {
        // interval straddles zero: both erf terms are nonnegative, no
        // cancellation
        0.5 * (libm::erf(b * FRAC_1_SQRT_2) + libm::erf(-a * FRAC_1_SQRT_2))
    }
}

/// Price in bits of one quantized element under a zero-mean Gaussian with
/// scale `sigma`, clamped to `[0, BITS_MAX]`.
pub fn unit_bits(ybar: f64, sigma: f64) -> f64 {
    assert!(sigma > 0.0, "sigma must be positive, got {sigma}");
    let p = normal_interval_mass((ybar - 0.5) / sigma, (ybar + 0.5) / sigma);
    if p <= 0.0 {
        return BITS_MAX;
    }
    (-p.log2()).clamp(0.0, BITS_MAX)
}

/// Raw (real-valued) symbol budget of one unit: `eta * sum_k bits(ybar_k,
/// sigma_k)` over the unit's channels.
pub fn symbol_length_factor(ybar: &[f64], sigma: &[f64], eta: f64) -> f64 {
    assert_eq!(ybar.len(), sigma.len());
    let total: f64 = ybar
        .iter()
        .zip(sigma)
        .map(|(&v, &s)| unit_bits(v, s))
        .sum();
    eta * total
}

/// Parity of a checkerboard cell: 0 when `i + j` is even (block 0).
#[inline]
pub fn cell_parity(i: usize, j: usize) -> usize {
    (i + j) % 2
}

/// The two checkerboard half-grids of a feature tensor, each packed densely
/// in row-major cell order with contiguous channel vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckerboardBlocks {
    pub block0: Vec<f64>,
    pub block1: Vec<f64>,
    height: usize,
    width: usize,
    channels: usize,
}

impl CheckerboardBlocks {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }
}

/// Row-major list of cells with the given parity.
pub fn block_cells(height: usize, width: usize, parity: usize) -> Vec<(usize, usize)> {
    let mut cells = Vec::with_capacity(height * width / 2 + 1);
    for i in 0..height {
        for j in 0..width {
            if cell_parity(i, j) == parity {
                cells.push((i, j));
            }
        }
    }
    cells
}

/// Splits a grid into its two checkerboard blocks.
pub fn checkerboard_split(grid: &FeatureGrid) -> CheckerboardBlocks {
    let (h, w, c) = grid.dims();
    let mut block0 = Vec::with_capacity(h * w * c / 2 + c);
    let mut block1 = Vec::with_capacity(h * w * c / 2 + c);
    for i in 0..h {
        for j in 0..w {
            let dst = if cell_parity(i, j) == 0 {
                &mut block0
            } else {
                &mut block1
            };
            dst.extend_from_slice(grid.cell(i, j));
        }
    }
    CheckerboardBlocks {
        block0,
        block1,
        height: h,
        width: w,
        channels: c,
    }
}

/// Reassembles a grid from its checkerboard blocks; exact inverse of
/// [`checkerboard_split`].
pub fn checkerboard_merge(blocks: &CheckerboardBlocks) -> FeatureGrid {
    let (h, w, c) = blocks.dims();
    let mut grid = FeatureGrid::zeros(h, w, c);
    let (mut n0, mut n1) = (0usize, 0usize);
    for i in 0..h {
        for j in 0..w {
            let src = if cell_parity(i, j) == 0 {
                let s = &blocks.block0[n0 * c..(n0 + 1) * c];
                n0 += 1;
                s
            } else {
                let s = &blocks.block1[n1 * c..(n1 + 1) * c];
                n1 += 1;
                s
            };
            grid.cell_mut(i, j).copy_from_slice(src);
        }
    }
    grid
}

/// Predicts block-1 Gaussian parameters from the quantized block-0 values.
///
/// For every block-1 cell and channel:
///
/// ```text
/// mu1    = mu0 + rho * mean_over_in-bounds_4-neighbors(ybar0 + mu0)
/// sigma1 = max(beta * sigma0, sigma_floor)
/// ```
///
/// Neighbors are visited in the fixed order up, down, left, right so both
/// link ends accumulate the mean identically. `ybar0` is the dense block-0
/// half (as produced by [`checkerboard_split`]); `mu0`/`sigma0` are full
/// grids. Returns dense block-1 `(mu1, sigma1)` halves.
pub fn spatial_prior_predict(
    ybar0: &[f64],
    mu0: &FeatureGrid,
    sigma0: &FeatureGrid,
    cfg: &EntropyConfig,
) -> (Vec<f64>, Vec<f64>) {
    let (h, w, c) = mu0.dims();
    debug_assert_eq!(sigma0.dims(), (h, w, c));
    debug_assert_eq!(ybar0.len(), block_cells(h, w, 0).len() * c);

    // block-index of each block-0 cell, for dense lookups
    let mut block0_index = vec![usize::MAX; h * w];
    for (n, (i, j)) in block_cells(h, w, 0).iter().enumerate() {
        block0_index[i * w + j] = n;
    }

    let cells1 = block_cells(h, w, 1);
    let mut mu1 = Vec::with_capacity(cells1.len() * c);
    let mut sigma1 = Vec::with_capacity(cells1.len() * c);
    for &(i, j) in &cells1 {
        let neighbors = [
            (i.wrapping_sub(1), j),
            (i + 1, j),
            (i, j.wrapping_sub(1)),
            (i, j + 1),
        ];
        for ch in 0..c {
            let mut sum = 0.0;
            let mut count = 0usize;
            for &(ni, nj) in &neighbors {
                if ni < h && nj < w {
                    let n = block0_index[ni * w + nj];
                    debug_assert_ne!(n, usize::MAX);
                    sum += ybar0[n * c + ch] + mu0.get(ni, nj, ch);
                    count += 1;
                }
            }
            let mean = if count > 0 { sum / count as f64 } else { 0.0 };
            mu1.push(mu0.get(i, j, ch) + cfg.rho * mean);
            sigma1.push((cfg.beta * sigma0.get(i, j, ch)).max(cfg.sigma_floor));
        }
    }
    (mu1, sigma1)
}
