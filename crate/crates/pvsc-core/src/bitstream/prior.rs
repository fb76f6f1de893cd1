//! Factorized entropy model for integer hyperlatents.
//!
//! Each channel gets an independent discretized-Gaussian table over the
//! alphabet `-z_max ..= z_max` plus an escape symbol carrying the residual
//! tail mass. Escaped values are coded as the escape symbol followed by the
//! raw 32-bit integer, little-endian, one uniform byte at a time, so *any*
//! integer grid round-trips regardless of how badly the model fits.

use crate::entropy::normal_interval_mass;
use crate::error::{Error, Result};

use super::range::{CdfTable, RangeDecoder, RangeEncoder, CDF_TOTAL};

/// Integer tensor produced by rounding the hyper-encoder output; laid out
/// row-major as `(i * width + j) * channels + c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HyperLatent {
    data: Vec<i32>,
    height: usize,
    width: usize,
    channels: usize,
}

impl HyperLatent {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        HyperLatent {
            data: vec![0; height * width * channels],
            height,
            width,
            channels,
        }
    }

    pub fn from_vec(data: Vec<i32>, height: usize, width: usize, channels: usize) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch {
                context: "hyperlatent data",
                expected: height * width * channels,
                got: data.len(),
            });
        }
        Ok(HyperLatent {
            data,
            height,
            width,
            channels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> i32 {
        self.data[(i * self.width + j) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: i32) {
        self.data[(i * self.width + j) * self.channels + c] = v;
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.data
    }
}

/// Per-channel discretized-Gaussian coding tables with an escape symbol.
#[derive(Clone, Debug)]
pub struct FactorizedPrior {
    tables: Vec<CdfTable>,
    z_max: i32,
}

impl FactorizedPrior {
    /// Builds `channels` identical tables for a Gaussian of the given mean
    /// and scale, covering integers in `-z_max ..= z_max`; the two tails
    /// beyond that fund the escape symbol.
    pub fn discretized_gaussian(channels: usize, mean: f64, scale: f64, z_max: i32) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidConfig("prior needs at least one channel".into()));
        }
        if !(scale.is_finite() && scale > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "prior scale must be positive and finite, got mean {mean} scale {scale}"
            )));
        }
        if z_max < 1 {
            return Err(Error::InvalidConfig(format!(
                "prior alphabet bound must be at least 1, got {z_max}"
            )));
        }
        let mut pmf = Vec::with_capacity(2 * z_max as usize + 2);
        for v in -z_max..=z_max {
            let v = f64::from(v);
            pmf.push(normal_interval_mass((v - mean - 0.5) / scale, (v - mean + 0.5) / scale));
        }
        // escape carries both tails
        let lo_tail = normal_interval_mass(f64::NEG_INFINITY, (f64::from(-z_max) - mean - 0.5) / scale);
        let hi_tail = normal_interval_mass((f64::from(z_max) - mean + 0.5) / scale, f64::INFINITY);
        pmf.push(lo_tail + hi_tail);
        let table = CdfTable::from_pmf(&pmf)?;
        Ok(FactorizedPrior {
            tables: vec![table; channels],
            z_max,
        })
    }

    pub fn channels(&self) -> usize {
        self.tables.len()
    }

    pub fn z_max(&self) -> i32 {
        self.z_max
    }

    fn escape_index(&self) -> usize {
        2 * self.z_max as usize + 1
    }

    /// Symbol index for an in-range value, or `None` if it must escape.
    fn symbol_of(&self, v: i32) -> Option<usize> {
        if -self.z_max <= v && v <= self.z_max {
            Some((v + self.z_max) as usize)
        } else {
            None
        }
    }

    fn value_of(&self, sym: usize) -> i32 {
        sym as i32 - self.z_max
    }

    fn table(&self, element: usize) -> &CdfTable {
        &self.tables[element % self.tables.len()]
    }

    /// Ideal codelength of a grid under this prior, in bits. Escaped
    /// elements cost the escape symbol plus 32 raw bits.
    pub fn model_bits(&self, z: &HyperLatent) -> Result<f64> {
        self.check_channels(z)?;
        let mut bits = 0.0;
        for (n, &v) in z.as_slice().iter().enumerate() {
            let table = self.table(n);
            match self.symbol_of(v) {
                Some(sym) => bits += table.bits(sym),
                None => bits += table.bits(self.escape_index()) + 32.0,
            }
        }
        Ok(bits)
    }

    fn check_channels(&self, z: &HyperLatent) -> Result<()> {
        if z.channels() != self.channels() {
            return Err(Error::ShapeMismatch {
                context: "prior channels",
                expected: self.channels(),
                got: z.channels(),
            });
        }
        Ok(())
    }
}

fn uniform_byte_table() -> CdfTable {
    CdfTable::from_freqs(&[CDF_TOTAL / 256; 256]).expect("uniform byte table")
}

/// Range-codes a hyperlatent grid under the prior.
pub fn encode_hyperlatent(z: &HyperLatent, prior: &FactorizedPrior) -> Result<Vec<u8>> {
    prior.check_channels(z)?;
    let bytes = uniform_byte_table();
    let mut enc = RangeEncoder::new();
    for (n, &v) in z.as_slice().iter().enumerate() {
        let table = prior.table(n);
        match prior.symbol_of(v) {
            Some(sym) => enc.encode_symbol(sym, table)?,
            None => {
                enc.encode_symbol(prior.escape_index(), table)?;
                for b in v.to_le_bytes() {
                    enc.encode_symbol(usize::from(b), &bytes)?;
                }
            }
        }
    }
    Ok(enc.finish())
}

/// Inverse of [`encode_hyperlatent`]; `dims` must match what was encoded.
pub fn decode_hyperlatent(
    data: &[u8],
    prior: &FactorizedPrior,
    dims: (usize, usize, usize),
) -> Result<HyperLatent> {
    let (height, width, channels) = dims;
    if channels != prior.channels() {
        return Err(Error::ShapeMismatch {
            context: "prior channels",
            expected: prior.channels(),
            got: channels,
        });
    }
    let bytes = uniform_byte_table();
    let mut dec = RangeDecoder::new(data);
    let count = height * width * channels;
    let mut out = Vec::with_capacity(count);
    for n in 0..count {
        let table = prior.table(n);
        let sym = dec.decode_symbol(table);
        if sym == prior.escape_index() {
            let mut raw = [0u8; 4];
            for b in &mut raw {
                *b = dec.decode_symbol(&bytes) as u8;
            }
            out.push(i32::from_le_bytes(raw));
        } else {
            out.push(prior.value_of(sym));
        }
    }
    HyperLatent::from_vec(out, height, width, channels)
}
