//! Efficiency and quality accounting: channel bandwidth ratio with
//! side-link costing, PSNR/MSE/L1 distortion, the combined rate-loss
//! objective, and Bjontegaard-style curve comparison on monotone cubic
//! interpolants.

use crate::error::{Error, Result};
use crate::grid::Frame;

/// Per-frame outcome of one trip through the link.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkReport {
    pub frame_index: u64,
    /// Complex channel uses spent on feature symbols (`l_t`).
    pub symbol_count: usize,
    /// Framed side-info size in bits.
    pub side_bits: u64,
    /// This frame's bandwidth cost per source sample.
    pub cbr: f64,
    pub psnr: f64,
    pub mse: f64,
    pub l1: f64,
    /// Sum of the per-unit rate levels.
    pub sum_k: u64,
    /// Combined rate objective for the frame.
    pub rate_loss: f64,
    /// PNG payload size of the rate map, in bits.
    pub ratemap_bits: u64,
    /// Coded hyperlatent payload size, in bits.
    pub hyper_bits: u64,
    /// Ideal codelength of the hyperlatent under the prior, in bits.
    pub hyper_model_bits: f64,
    /// Equalizer clamp events (near-singular gains).
    pub zf_clamps: usize,
    /// PSNR of the ideal decoding branch (no rate masking, no channel).
    pub psnr_ideal: f64,
    /// `max |F_tx - F_rx|` after the frame, zero on a clean link.
    pub buffer_divergence: f64,
    /// Side info failed to parse; reconstruction froze.
    pub frame_lost: bool,
}

/// Channel uses the side link needs for `side_bits` at `bits_per_use`.
pub fn side_channel_uses(side_bits: u64, bits_per_use: f64) -> Result<u64> {
    if !(bits_per_use.is_finite() && bits_per_use > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "side-link spectral efficiency must be positive, got {bits_per_use}"
        )));
    }
    Ok((side_bits as f64 / bits_per_use).ceil() as u64)
}

/// Bandwidth cost of one frame: `(l + ceil(side_bits / eff)) / (H*W*C)`.
pub fn cbr_frame(
    symbol_count: usize,
    side_bits: u64,
    dims: (usize, usize, usize),
    side_spectral_eff: f64,
) -> Result<f64> {
    let (h, w, c) = dims;
    let samples = h * w * c;
    if samples == 0 {
        return Err(Error::InvalidConfig("frame has zero samples".into()));
    }
    let uses = symbol_count as u64 + side_channel_uses(side_bits, side_spectral_eff)?;
    Ok(uses as f64 / samples as f64)
}

/// Sequence-level bandwidth ratio:
/// `sum_t (l_t + ceil(side_bits_t / eff)) / (T*H*W*C)`.
pub fn cbr(
    symbol_counts: &[usize],
    side_bits: &[u64],
    dims: (usize, usize, usize),
    side_spectral_eff: f64,
) -> Result<f64> {
    if symbol_counts.len() != side_bits.len() {
        return Err(Error::ShapeMismatch {
            context: "cbr frame lists",
            expected: symbol_counts.len(),
            got: side_bits.len(),
        });
    }
    if symbol_counts.is_empty() {
        return Err(Error::InvalidConfig("cbr of an empty sequence".into()));
    }
    let mut total = 0.0;
    for (&l, &bits) in symbol_counts.iter().zip(side_bits) {
        total += cbr_frame(l, bits, dims, side_spectral_eff)?;
    }
    Ok(total / symbol_counts.len() as f64)
}

/// MSE, PSNR (dB, infinite on an exact match), and mean absolute error in
/// one pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Distortion {
    pub mse: f64,
    pub psnr: f64,
    pub l1: f64,
}

pub fn distortion(x: &Frame, xhat: &Frame) -> Result<Distortion> {
    if x.dims() != xhat.dims() {
        return Err(Error::ShapeMismatch {
            context: "distortion frames",
            expected: x.as_slice().len(),
            got: xhat.as_slice().len(),
        });
    }
    let n = x.as_slice().len();
    if n == 0 {
        return Err(Error::InvalidConfig("distortion of an empty frame".into()));
    }
    let mut se = 0.0;
    let mut ae = 0.0;
    for (a, b) in x.as_slice().iter().zip(xhat.as_slice()) {
        let d = a - b;
        se += d * d;
        ae += d.abs();
    }
    let mse = se / n as f64;
    let psnr = if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() };
    Ok(Distortion {
        mse,
        psnr,
        l1: ae / n as f64,
    })
}

pub fn mse(x: &Frame, xhat: &Frame) -> Result<f64> {
    Ok(distortion(x, xhat)?.mse)
}

pub fn psnr(x: &Frame, xhat: &Frame) -> Result<f64> {
    Ok(distortion(x, xhat)?.psnr)
}

pub fn l1(x: &Frame, xhat: &Frame) -> Result<f64> {
    Ok(distortion(x, xhat)?.l1)
}

/// Combined per-frame rate objective: realized symbol budget plus the
/// side-bit terms weighted by `eta`.
pub fn rate_loss(k_values: &[u16], ratemap_bits: f64, hyper_model_bits: f64, eta: f64) -> f64 {
    let sum_k: f64 = k_values.iter().map(|&k| f64::from(k)).sum();
    sum_k + eta * (ratemap_bits + hyper_model_bits)
}

/// A rate-quality trade-off curve: `(cbr, quality)` points with strictly
/// increasing cbr and strictly monotone quality.
#[derive(Clone, Debug, PartialEq)]
pub struct RateQualityCurve {
    points: Vec<(f64, f64)>,
    metric: String,
}

impl RateQualityCurve {
    pub fn new(mut points: Vec<(f64, f64)>, metric: &str) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Curve(format!(
                "curve needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points
            .iter()
            .any(|&(c, q)| !(c.is_finite() && q.is_finite() && c > 0.0))
        {
            return Err(Error::Curve(
                "curve points must be finite with positive cbr".into(),
            ));
        }
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if !points.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(Error::Curve("cbr values must be distinct".into()));
        }
        let increasing = points.windows(2).all(|w| w[0].1 < w[1].1);
        let decreasing = points.windows(2).all(|w| w[0].1 > w[1].1);
        if !increasing && !decreasing {
            return Err(Error::Curve(
                "quality must be strictly monotone in cbr for interpolation".into(),
            ));
        }
        Ok(RateQualityCurve {
            points,
            metric: metric.into(),
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn metric(&self) -> &str {
        &self.metric
    }

    /// Knots as (quality, log10 cbr) sorted by quality ascending.
    fn quality_knots(&self) -> (Vec<f64>, Vec<f64>) {
        let mut pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .map(|&(c, q)| (q, c.log10()))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pts.into_iter().unzip()
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes
/// with three-point one-sided end conditions).
struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    fn new(xs: Vec<f64>, ys: Vec<f64>) -> Pchip {
        let n = xs.len();
        debug_assert!(n >= 2);
        debug_assert!(xs.windows(2).all(|w| w[0] < w[1]));
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let d: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut m = vec![0.0; n];
        if n == 2 {
            m[0] = d[0];
            m[1] = d[0];
        } else {
            for k in 1..n - 1 {
                if d[k - 1] * d[k] <= 0.0 {
                    m[k] = 0.0;
                } else {
                    // weighted harmonic mean keeps the interpolant monotone
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
                }
            }
            m[0] = Self::edge_slope(h[0], h[1], d[0], d[1]);
            m[n - 1] = Self::edge_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
        }
        Pchip { xs, ys, slopes: m }
    }

    /// Three-point estimate for a boundary slope, shape-limited so the end
    /// segment stays monotone.
    fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
        fn sign(x: f64) -> i8 {
            if x > 0.0 {
                1
            } else if x < 0.0 {
                -1
            } else {
                0
            }
        }
        let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if sign(m) != sign(d0) {
            0.0
        } else if sign(d0) != sign(d1) && m.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            m
        }
    }

    fn segment_of(&self, x: f64) -> usize {
        // clamp so evaluation at the boundaries lands in a valid segment
        let n = self.xs.len();
        let i = self.xs.partition_point(|&k| k <= x);
        i.clamp(1, n - 1) - 1
    }

    fn eval(&self, x: f64) -> f64 {
        let k = self.segment_of(x);
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * (t3 - t2)
    }

    fn knots(&self) -> &[f64] {
        &self.xs
    }
}

/// Average rate change of `test` against `anchor` over their shared
/// quality range, in percent (negative = bandwidth savings).
///
/// Both curves are interpolated as log10(cbr) over quality with a monotone
/// cubic; the difference is integrated exactly (Simpson on every
/// subinterval of the union knot grid, exact for cubics) and averaged.
pub fn bd_cbr(anchor: &RateQualityCurve, test: &RateQualityCurve) -> Result<f64> {
    let (ax, ay) = anchor.quality_knots();
    let (tx, ty) = test.quality_knots();
    let lo = ax[0].max(tx[0]);
    let hi = ax[ax.len() - 1].min(tx[tx.len() - 1]);
    if hi <= lo {
        return Err(Error::Curve("disjoint quality ranges".into()));
    }
    let pa = Pchip::new(ax, ay);
    let pt = Pchip::new(tx, ty);

    // union of both knot sets clipped to the overlap, so each subinterval
    // is a single cubic for both interpolants
    let mut cuts: Vec<f64> = pa
        .knots()
        .iter()
        .chain(pt.knots())
        .copied()
        .filter(|&x| x > lo && x < hi)
        .collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();

    let diff = |x: f64| pt.eval(x) - pa.eval(x);
    let mut integral = 0.0;
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let mid = 0.5 * (a + b);
        integral += (b - a) / 6.0 * (diff(a) + 4.0 * diff(mid) + diff(b));
    }
    let delta = integral / (hi - lo);
    Ok(100.0 * (10f64.powf(delta) - 1.0))
}
