//! Carry-less byte-oriented range coder.
//!
//! 32-bit state with 16-bit cumulative-frequency precision. Renormalization
//! emits the top byte once it can no longer change; when the range gets too
//! small while a carry is still possible, the range is truncated to the
//! next 2^16 boundary instead of propagating carries into emitted bytes.
//! The truncation costs a fraction of a bit on rare occasions, which keeps
//! the total overhead within a hundredth of a bit per symbol plus a
//! constant flush tail.

use crate::error::{Error, Result};

/// Log2 of the cumulative-frequency total.
pub const CDF_BITS: u32 = 16;
/// All CDF tables sum to this.
pub const CDF_TOTAL: u32 = 1 << CDF_BITS;

const TOP: u32 = 1 << 24;
const BOTTOM: u32 = 1 << 16;

/// A quantized cumulative distribution: `cum[0] = 0`, `cum[n] = CDF_TOTAL`,
/// nondecreasing. Symbols with nonzero mass have strictly increasing bounds
/// and are encodable; zero-frequency symbols are representable but any
/// attempt to encode one errors.
#[derive(Clone, Debug, PartialEq)]
pub struct CdfTable {
    cum: Vec<u32>,
}

impl CdfTable {
    /// Builds a table from integer frequencies that must sum to
    /// [`CDF_TOTAL`].
    pub fn from_freqs(freqs: &[u32]) -> Result<Self> {
        if freqs.is_empty() {
            return Err(Error::Bitstream("empty alphabet".into()));
        }
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        let mut acc: u64 = 0;
        cum.push(0);
        for &f in freqs {
            acc += u64::from(f);
            if acc > u64::from(CDF_TOTAL) {
                return Err(Error::Bitstream(format!(
                    "frequencies exceed total: {acc} > {CDF_TOTAL}"
                )));
            }
            cum.push(acc as u32);
        }
        if acc != u64::from(CDF_TOTAL) {
            return Err(Error::Bitstream(format!(
                "frequencies sum to {acc}, expected {CDF_TOTAL}"
            )));
        }
        Ok(CdfTable { cum })
    }

    /// Quantizes a probability vector to 16-bit frequencies, guaranteeing
    /// every symbol at least one count so any value stays encodable.
    ///
    /// The vector needs nonnegative finite entries and positive mass; it is
    /// normalized internally. Rounding surplus/deficit is settled against
    /// the heaviest bins, largest first, which keeps the quantization error
    /// where it matters least.
    pub fn from_pmf(pmf: &[f64]) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::Bitstream("empty alphabet".into()));
        }
        if pmf.len() as u32 > CDF_TOTAL / 4 {
            return Err(Error::Bitstream(format!(
                "alphabet of {} cannot be quantized to {CDF_TOTAL} counts",
                pmf.len()
            )));
        }
        let mass: f64 = pmf.iter().sum();
        if !(mass.is_finite() && mass > 0.0) || pmf.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
            return Err(Error::Bitstream(
                "pmf entries must be finite, nonnegative, with positive total mass".into(),
            ));
        }
        let mut freqs: Vec<u32> = pmf
            .iter()
            .map(|&p| (((p / mass) * f64::from(CDF_TOTAL)).round() as u32).max(1))
            .collect();
        let mut total: i64 = freqs.iter().map(|&f| i64::from(f)).sum();
        while total != i64::from(CDF_TOTAL) {
            if total > i64::from(CDF_TOTAL) {
                // shave the largest bin that can still spare a count
                let (idx, _) = freqs
                    .iter()
                    .enumerate()
                    .filter(|(_, &f)| f > 1)
                    .max_by_key(|&(i, &f)| (f, std::cmp::Reverse(i)))
                    .expect("total counts exceed alphabet size");
                let give = ((total - i64::from(CDF_TOTAL)) as u32).min(freqs[idx] - 1);
                freqs[idx] -= give;
                total -= i64::from(give);
            } else {
                let (idx, _) = freqs
                    .iter()
                    .enumerate()
                    .max_by_key(|&(i, &f)| (f, std::cmp::Reverse(i)))
                    .unwrap();
                let take = (i64::from(CDF_TOTAL) - total) as u32;
                freqs[idx] += take;
                total += i64::from(take);
            }
        }
        CdfTable::from_freqs(&freqs)
    }

    /// Number of symbols in the alphabet.
    pub fn len(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn cum(&self, sym: usize) -> u32 {
        self.cum[sym]
    }

    #[inline]
    pub fn freq(&self, sym: usize) -> u32 {
        self.cum[sym + 1] - self.cum[sym]
    }

    /// Symbol whose interval contains a scaled cumulative value in
    /// `[0, CDF_TOTAL)`.
    #[inline]
    pub fn lookup(&self, scaled: u32) -> usize {
        debug_assert!(scaled < CDF_TOTAL);
        self.cum[1..].partition_point(|&c| c <= scaled)
    }

    /// `-log2(freq / CDF_TOTAL)` for one symbol.
    pub fn bits(&self, sym: usize) -> f64 {
        let f = self.freq(sym);
        assert!(f > 0, "zero-frequency symbol has no codelength");
        f64::from(CDF_BITS) - f64::from(f).log2()
    }
}

/// Streaming encoder; call [`RangeEncoder::finish`] to flush.
#[derive(Debug)]
pub struct RangeEncoder {
    low: u32,
    range: u32,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            out: Vec::new(),
        }
    }

    /// Encodes one symbol given its cumulative bound and frequency.
    pub fn encode(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0);
        debug_assert!(cum + freq <= CDF_TOTAL);
        let r = self.range / CDF_TOTAL;
        self.low = self.low.wrapping_add(r * cum);
        self.range = r * freq;
        self.normalize();
    }

    /// Encodes `sym` under `cdf`; errors on zero-frequency symbols.
    pub fn encode_symbol(&mut self, sym: usize, cdf: &CdfTable) -> Result<()> {
        if sym >= cdf.len() {
            return Err(Error::Bitstream(format!(
                "symbol {sym} outside alphabet of {}",
                cdf.len()
            )));
        }
        let freq = cdf.freq(sym);
        if freq == 0 {
            return Err(Error::Bitstream(format!(
                "symbol {sym} has zero frequency"
            )));
        }
        self.encode(cdf.cum(sym), freq);
        Ok(())
    }

    fn normalize(&mut self) {
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) < TOP {
                // top byte settled, safe to emit
            } else if self.range < BOTTOM {
                // carry still possible but the range is too small to wait:
                // truncate it to the next 2^16 boundary below low + range
                self.range = self.low.wrapping_neg() & (BOTTOM - 1);
            } else {
                break;
            }
            self.out.push((self.low >> 24) as u8);
            self.low <<= 8;
            self.range <<= 8;
        }
    }

    /// Flushes the state and returns the coded bytes.
    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..4 {
            self.out.push((self.low >> 24) as u8);
            self.low <<= 8;
        }
        self.out
    }
}

/// Streaming decoder over a coded byte slice. Reading past the end yields
/// zero bytes, which is harmless for well-formed streams because the
/// encoder's 4-byte flush covers every live state bit.
#[derive(Debug)]
pub struct RangeDecoder<'a> {
    low: u32,
    range: u32,
    code: u32,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        let mut d = RangeDecoder {
            low: 0,
            range: u32::MAX,
            code: 0,
            input,
            pos: 0,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | u32::from(d.next_byte());
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Decodes one symbol under `cdf`.
    pub fn decode_symbol(&mut self, cdf: &CdfTable) -> usize {
        let r = self.range / CDF_TOTAL;
        let scaled = (self.code.wrapping_sub(self.low) / r).min(CDF_TOTAL - 1);
        let sym = cdf.lookup(scaled);
        let (cum, freq) = (cdf.cum(sym), cdf.freq(sym));
        self.low = self.low.wrapping_add(r * cum);
        self.range = r * freq;
        self.normalize();
        sym
    }

    fn normalize(&mut self) {
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) < TOP {
            } else if self.range < BOTTOM {
                self.range = self.low.wrapping_neg() & (BOTTOM - 1);
            } else {
                break;
            }
            self.code = (self.code << 8) | u32::from(self.next_byte());
            self.low <<= 8;
            self.range <<= 8;
        }
    }
}

/// One-shot encode of a symbol slice. `cdfs` supplies one table per symbol,
/// or a single shared table for the whole stream.
pub fn range_encode(symbols: &[usize], cdfs: &[&CdfTable]) -> Result<Vec<u8>> {
    check_cdf_count(symbols.len(), cdfs.len())?;
    let mut enc = RangeEncoder::new();
    for (i, &sym) in symbols.iter().enumerate() {
        let cdf = cdfs[if cdfs.len() == 1 { 0 } else { i }];
        enc.encode_symbol(sym, cdf)?;
    }
    Ok(enc.finish())
}

/// One-shot decode of `count` symbols; mirror of [`range_encode`].
pub fn range_decode(bytes: &[u8], cdfs: &[&CdfTable], count: usize) -> Result<Vec<usize>> {
    check_cdf_count(count, cdfs.len())?;
    let mut dec = RangeDecoder::new(bytes);
    Ok((0..count)
        .map(|i| dec.decode_symbol(cdfs[if cdfs.len() == 1 { 0 } else { i }]))
        .collect())
}

fn check_cdf_count(symbols: usize, cdfs: usize) -> Result<()> {
    if cdfs != 1 && cdfs != symbols {
        return Err(Error::ShapeMismatch {
            context: "range coder cdfs",
            expected: symbols,
            got: cdfs,
        });
    }
    if cdfs == 0 {
        return Err(Error::Bitstream("no cdf tables supplied".into()));
    }
    Ok(())
}
