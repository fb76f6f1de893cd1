//! Discrete rate control: quantizing raw symbol budgets onto a small set
//! of levels, mask-based mapping of feature units onto complex channel
//! symbols, and distillation of a rate set from observed usage.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{random_orthonormal, DenseMatrix};
use crate::rng::{substream, StreamTag};

/// Strictly increasing admissible symbol counts per unit, always starting
/// at zero. Serializes as a plain JSON integer array.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u16>", into = "Vec<u16>")]
pub struct RateSet {
    levels: Vec<u16>,
}

impl RateSet {
    pub const MAX_LEVELS: usize = 256;

    pub fn new(levels: Vec<u16>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidConfig("rate set must not be empty".into()));
        }
        if levels[0] != 0 {
            return Err(Error::InvalidConfig(format!(
                "rate set must start at level 0, got {}",
                levels[0]
            )));
        }
        if !levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "rate set levels must be strictly increasing".into(),
            ));
        }
        if levels.len() > Self::MAX_LEVELS {
            return Err(Error::InvalidConfig(format!(
                "rate set of {} levels exceeds the limit of {}",
                levels.len(),
                Self::MAX_LEVELS
            )));
        }
        Ok(RateSet { levels })
    }

    /// Looks up a named built-in set. `"paper_iv_a"` is the published
    /// 16-level pruning of `{0..128}`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper_iv_a" => RateSet::new(vec![
                0, 4, 8, 12, 16, 20, 24, 28, 36, 44, 52, 60, 68, 84, 100, 128,
            ]),
            _ => Err(Error::InvalidConfig(format!("unknown rate-set preset {name:?}"))),
        }
    }

    pub fn levels(&self) -> &[u16] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, index: usize) -> u16 {
        self.levels[index]
    }

    pub fn max_level(&self) -> u16 {
        *self.levels.last().unwrap()
    }

    /// Checks the set fits a feature depth of `c_y` channels.
    pub fn validate_for(&self, c_y: usize) -> Result<()> {
        if usize::from(self.max_level()) > c_y {
            return Err(Error::InvalidConfig(format!(
                "rate level {} exceeds feature depth {c_y}",
                self.max_level()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<u16>> for RateSet {
    type Error = Error;
    fn try_from(levels: Vec<u16>) -> Result<Self> {
        RateSet::new(levels)
    }
}

impl From<RateSet> for Vec<u16> {
    fn from(rs: RateSet) -> Vec<u16> {
        rs.levels
    }
}

/// Per-unit rate decisions for one frame: an `height x width` grid of
/// indices into the rate set that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct RateMap {
    indices: Vec<u8>,
    height: usize,
    width: usize,
    rate_set: RateSet,
}

impl RateMap {
    pub fn new(indices: Vec<u8>, height: usize, width: usize, rate_set: RateSet) -> Result<Self> {
        if indices.len() != height * width {
            return Err(Error::ShapeMismatch {
                context: "rate map indices",
                expected: height * width,
                got: indices.len(),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&ix| usize::from(ix) >= rate_set.len()) {
            return Err(Error::InvalidConfig(format!(
                "rate map index {bad} outside rate set of {} levels",
                rate_set.len()
            )));
        }
        Ok(RateMap {
            indices,
            height,
            width,
            rate_set,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rate_set(&self) -> &RateSet {
        &self.rate_set
    }

    pub fn indices(&self) -> &[u8] {
        &self.indices
    }

    #[inline]
    pub fn index_at(&self, i: usize, j: usize) -> usize {
        usize::from(self.indices[i * self.width + j])
    }

    #[inline]
    pub fn level_at(&self, i: usize, j: usize) -> u16 {
        self.rate_set.level(self.index_at(i, j))
    }

    /// Total complex symbols the frame occupies: sum of `ceil(k/2)` over
    /// units, the quantity both ends must agree on before demapping.
    pub fn total_symbols(&self) -> usize {
        self.indices
            .iter()
            .map(|&ix| symbols_for_level(usize::from(self.rate_set.level(usize::from(ix)))))
            .sum()
    }

    /// Sum of the per-unit rate levels.
    pub fn total_rate(&self) -> u64 {
        self.indices
            .iter()
            .map(|&ix| u64::from(self.rate_set.level(usize::from(ix))))
            .sum()
    }

    /// Adds this map's level choices into a usage histogram indexed by
    /// level value (length `c_y + 1`), the input to [`distill_rate_set`].
    pub fn accumulate_usage(&self, histogram: &mut [u64]) {
        for &ix in &self.indices {
            histogram[usize::from(self.rate_set.level(usize::from(ix)))] += 1;
        }
    }
}

/// Snaps a raw (real-valued) symbol budget onto the nearest level; ties go
/// to the smaller level and budgets above the top level clamp to it.
/// Returns `(level, index)`.
pub fn rate_match(k_raw: f64, rs: &RateSet) -> (u16, usize) {
    assert!(k_raw >= 0.0, "raw rate must be nonnegative, got {k_raw}");
    let levels = rs.levels();
    let hi = levels.partition_point(|&l| f64::from(l) < k_raw);
    if hi == levels.len() {
        return (levels[hi - 1], hi - 1);
    }
    if hi == 0 {
        return (levels[0], 0);
    }
    let (lo_level, hi_level) = (levels[hi - 1], levels[hi]);
    if k_raw - f64::from(lo_level) <= f64::from(hi_level) - k_raw {
        (lo_level, hi - 1)
    } else {
        (hi_level, hi)
    }
}

/// First `k` coefficients pass, the rest are zeroed.
pub fn build_mask(k: usize, c_y: usize) -> Result<Vec<f64>> {
    if k > c_y {
        return Err(Error::InvalidConfig(format!(
            "mask length {k} exceeds unit depth {c_y}"
        )));
    }
    let mut mask = vec![0.0; c_y];
    mask[..k].fill(1.0);
    Ok(mask)
}

/// Per-level realization of the unit mapper: one orthonormal mixing
/// matrix per rate level (decode side uses the transpose, an exact
/// inverse) and an optional additive embedding per level.
#[derive(Clone, Debug)]
pub struct UnitProjector {
    rate_set: RateSet,
    c_y: usize,
    matrices: Vec<DenseMatrix>,
    embeddings: Vec<Vec<f64>>,
}

impl UnitProjector {
    /// Seeded random rotations, one per level; embeddings start disabled
    /// (all zero).
    pub fn seeded(rate_set: RateSet, c_y: usize, seed: u64) -> Result<Self> {
        rate_set.validate_for(c_y)?;
        let matrices = (0..rate_set.len())
            .map(|i| {
                let mut rng = substream(seed, i as u64, StreamTag::Projector);
                random_orthonormal(c_y, &mut rng)
            })
            .collect();
        let embeddings = vec![vec![0.0; c_y]; rate_set.len()];
        Ok(UnitProjector {
            rate_set,
            c_y,
            matrices,
            embeddings,
        })
    }

    /// Identity mixing at every level — handy for pinning the pairing rule
    /// in tests.
    pub fn identity(rate_set: RateSet, c_y: usize) -> Result<Self> {
        rate_set.validate_for(c_y)?;
        let matrices = vec![DenseMatrix::identity(c_y); rate_set.len()];
        let embeddings = vec![vec![0.0; c_y]; rate_set.len()];
        Ok(UnitProjector {
            rate_set,
            c_y,
            matrices,
            embeddings,
        })
    }

    /// Switches on per-level additive rate embeddings, drawn as seeded
    /// Gaussians scaled by `scale`.
    pub fn with_random_embeddings(mut self, seed: u64, scale: f64) -> Self {
        use rand::Rng;
        use rand_distr::StandardNormal;
        for (i, embed) in self.embeddings.iter_mut().enumerate() {
            let mut rng = substream(seed, i as u64, StreamTag::Projector);
            for e in embed.iter_mut() {
                *e = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        self
    }

    pub fn rate_set(&self) -> &RateSet {
        &self.rate_set
    }

    pub fn unit_depth(&self) -> usize {
        self.c_y
    }

    fn check_level(&self, level_index: usize) -> Result<usize> {
        if level_index >= self.rate_set.len() {
            return Err(Error::InvalidConfig(format!(
                "level index {level_index} outside rate set of {}",
                self.rate_set.len()
            )));
        }
        Ok(usize::from(self.rate_set.level(level_index)))
    }
}

/// Number of complex symbols a unit occupies at rate `k`.
pub fn symbols_for_level(k: usize) -> usize {
    k.div_ceil(2)
}

/// Mixes one unit, masks all but the first `k` coefficients, and packs
/// them into `ceil(k/2)` complex symbols (odd `k` pads the final
/// imaginary part with zero).
pub fn map_unit(
    unit: &[f64],
    level_index: usize,
    proj: &UnitProjector,
) -> Result<Vec<Complex64>> {
    let k = proj.check_level(level_index)?;
    if unit.len() != proj.c_y {
        return Err(Error::ShapeMismatch {
            context: "map_unit input",
            expected: proj.c_y,
            got: unit.len(),
        });
    }
    let embed = &proj.embeddings[level_index];
    let shifted: Vec<f64> = unit.iter().zip(embed).map(|(u, e)| u + e).collect();
    let mixed = proj.matrices[level_index].matvec(&shifted);
    let mut symbols = Vec::with_capacity(symbols_for_level(k));
    for m in 0..symbols_for_level(k) {
        let re = mixed[2 * m];
        let im = if 2 * m + 1 < k { mixed[2 * m + 1] } else { 0.0 };
        symbols.push(Complex64::new(re, im));
    }
    Ok(symbols)
}

/// Inverse of [`map_unit`]: unpacks the symbols into the first `k`
/// coefficients, zero-fills the masked tail, unmixes, and removes the
/// embedding. Reconstruction error is exactly the energy the mask dropped.
pub fn unmap_unit(
    symbols: &[Complex64],
    level_index: usize,
    proj: &UnitProjector,
) -> Result<Vec<f64>> {
    let k = proj.check_level(level_index)?;
    let l = symbols_for_level(k);
    if symbols.len() != l {
        return Err(Error::ShapeMismatch {
            context: "unmap_unit symbols",
            expected: l,
            got: symbols.len(),
        });
    }
    let mut mixed = vec![0.0; proj.c_y];
    for (m, s) in symbols.iter().enumerate() {
        mixed[2 * m] = s.re;
        if 2 * m + 1 < k {
            mixed[2 * m + 1] = s.im;
        }
    }
    let unmixed = proj.matrices[level_index].matvec_t(&mixed);
    let embed = &proj.embeddings[level_index];
    Ok(unmixed.iter().zip(embed).map(|(u, e)| u - e).collect())
}

/// Rebuilds a `k`-level rate set from a usage histogram over `0..=c_y`
/// (index = level, value = times chosen). The bottom and top levels are
/// always retained; the rest go to the most used levels, ties toward the
/// smaller. If fewer levels were used than slots remain, the gaps are
/// filled with evenly spaced levels, then with the smallest unused ones.
pub fn distill_rate_set(histogram: &[u64], k: usize) -> Result<RateSet> {
    if histogram.len() < 2 {
        return Err(Error::InvalidConfig(
            "usage histogram must cover at least levels 0 and 1".into(),
        ));
    }
    let c_y = histogram.len() - 1;
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "distilled rate set needs at least 2 levels, got {k}"
        )));
    }
    if k > c_y + 1 || k > RateSet::MAX_LEVELS {
        return Err(Error::InvalidConfig(format!(
            "cannot distill {k} distinct levels from 0..={c_y}"
        )));
    }
    let mut chosen = vec![false; c_y + 1];
    chosen[0] = true;
    chosen[c_y] = true;
    let mut remaining = k - 2;

    let mut by_usage: Vec<usize> = (1..c_y).filter(|&l| histogram[l] > 0).collect();
    by_usage.sort_by_key(|&l| (std::cmp::Reverse(histogram[l]), l));
    for l in by_usage.into_iter().take(remaining) {
        chosen[l] = true;
        remaining -= 1;
    }

    // pad: evenly spaced targets first, then the smallest unused levels
    if remaining > 0 {
        for i in 1..k - 1 {
            if remaining == 0 {
                break;
            }
            let target = ((i * c_y) as f64 / (k - 1) as f64).round() as usize;
            if !chosen[target] {
                chosen[target] = true;
                remaining -= 1;
            }
        }
        for slot in chosen[1..c_y].iter_mut() {
            if remaining == 0 {
                break;
            }
            if !*slot {
                *slot = true;
                remaining -= 1;
            }
        }
    }

    let levels: Vec<u16> = (0..=c_y).filter(|&l| chosen[l]).map(|l| l as u16).collect();
    RateSet::new(levels)
}
