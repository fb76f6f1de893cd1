//! Complex baseband channel simulation and equalization.
//!
//! The link model is `received = h .* s + n` per complex channel use:
//!
//! - AWGN: `h = 1` for every use.
//! - Block-fading Rayleigh: `h` is constant over each coherence block of
//!   `coherence_len` uses and i.i.d. `CN(0, 1)` across blocks, so
//!   `E[|h|^2] = 1`.
//!
//! Noise is circularly symmetric `CN(0, sigma^2)` where `sigma^2` is the
//! *total* complex variance (each of the real and imaginary parts carries
//! `sigma^2 / 2`), calibrated from the configured per-use SNR as
//! `SNR_dB = 10 log10(E[|h|^2] P / sigma^2)`.
//!
//! Receivers see an imperfect channel estimate `h_est = h + e` with
//! `e ~ CN(0, sigma_e^2)` i.i.d.; the estimation quality is configured as
//! `NMSE_dB = 10 log10(E||e||^2 / E||h||^2)`, which reduces to
//! `sigma_e^2 = 10^(NMSE_dB / 10)` under the unit-power gain model.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Magnitude floor for zero-forcing; estimates at or below this are scaled
/// up to it (phase preserved) and counted in the clamp diagnostic.
pub const ZF_EPSILON: f64 = 1e-6;

/// Fading model selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Awgn,
    RayleighBlock,
}

/// Configured per-use SNR: a finite dB value, or noise disabled entirely.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseLevel {
    /// No additive noise (infinite SNR).
    Disabled,
    /// Finite SNR in dB.
    SnrDb(f64),
}

/// Channel-state information quality at the receiver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CsiQuality {
    /// `h_est == h`.
    Perfect,
    /// Estimation error with the given NMSE in dB (typically negative).
    NmseDb(f64),
}

/// One channel configuration: fading kind, SNR, coherence length, CSI
/// quality, per-use transmit power constraint, and the noise seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub snr_db: NoiseLevel,
    pub coherence_len: usize,
    pub csi_nmse_db: CsiQuality,
    pub power: f64,
    pub seed: u64,
}

impl ChannelConfig {
    /// Validates field ranges; call once at session setup.
    pub fn validate(&self) -> Result<()> {
        if self.coherence_len == 0 {
            return Err(Error::InvalidConfig(
                "channel.coherence_len must be >= 1".into(),
            ));
        }
        if !(self.power.is_finite() && self.power > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "channel.power must be finite and positive, got {}",
                self.power
            )));
        }
        if let NoiseLevel::SnrDb(v) = self.snr_db {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(
                    "channel.snr_db must be finite or \"inf\"".into(),
                ));
            }
        }
        if let CsiQuality::NmseDb(v) = self.csi_nmse_db {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(
                    "channel.csi_nmse_db must be finite or \"perfect\"".into(),
                ));
            }
        }
        Ok(())
    }

    /// Total complex noise variance implied by the SNR calibration
    /// (`E[|h|^2] = 1` for both fading kinds).
    pub fn noise_variance(&self) -> f64 {
        match self.snr_db {
            NoiseLevel::Disabled => 0.0,
            NoiseLevel::SnrDb(db) => self.power * 10f64.powf(-db / 10.0),
        }
    }
}

/// Per-batch channel draw: true gains, receiver-side estimates, and the
/// additive noise, all aligned with the transmitted symbol vector.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub gains: Vec<Complex64>,
    pub gains_est: Vec<Complex64>,
    pub noise: Vec<Complex64>,
}

impl ChannelRealization {
    /// `h_est - h`, elementwise.
    pub fn estimation_error(&self) -> Vec<Complex64> {
        self.gains_est
            .iter()
            .zip(&self.gains)
            .map(|(e, h)| e - h)
            .collect()
    }
}

/// Draws a circularly symmetric complex Gaussian with total variance `var`.
#[inline]
fn complex_gaussian<R: Rng>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Passes a symbol batch through the configured channel.
///
/// Returns the received vector and the full realization (gains, estimates,
/// noise). Draw order from `rng` is fixed — gains, then noise, then CSI
/// error — so a given `(cfg, rng stream)` reproduces byte-identically.
///
/// Errors if any input symbol is non-finite. An empty batch yields an empty
/// realization.
pub fn transmit<R: Rng>(
    s: &[Complex64],
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<(Vec<Complex64>, ChannelRealization)> {
    for (i, v) in s.iter().enumerate() {
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite {
                context: "channel input",
                index: i,
            });
        }
    }

    let n = s.len();
    let mut gains = Vec::with_capacity(n);
    match cfg.kind {
        ChannelKind::Awgn => gains.resize(n, Complex64::new(1.0, 0.0)),
        ChannelKind::RayleighBlock => {
            let mut block_gain = Complex64::new(0.0, 0.0);
            for i in 0..n {
                if i % cfg.coherence_len == 0 {
                    block_gain = complex_gaussian(rng, 1.0);
                }
                gains.push(block_gain);
            }
        }
    }

    let sigma2 = cfg.noise_variance();
    let noise: Vec<Complex64> = if sigma2 == 0.0 {
        vec![Complex64::new(0.0, 0.0); n]
    } else {
        (0..n).map(|_| complex_gaussian(rng, sigma2)).collect()
    };

    let received: Vec<Complex64> = (0..n).map(|i| gains[i] * s[i] + noise[i]).collect();
    let gains_est = corrupt_csi(&gains, cfg.csi_nmse_db, rng);

    Ok((
        received,
        ChannelRealization {
            gains,
            gains_est,
            noise,
        },
    ))
}

/// Adds i.i.d. complex Gaussian estimation error to a gain vector at the
/// requested NMSE. `Perfect` returns the gains unchanged.
pub fn corrupt_csi<R: Rng>(
    gains: &[Complex64],
    quality: CsiQuality,
    rng: &mut R,
) -> Vec<Complex64> {
    match quality {
        CsiQuality::Perfect => gains.to_vec(),
        CsiQuality::NmseDb(db) => {
            let var_e = 10f64.powf(db / 10.0);
            gains
                .iter()
                .map(|h| h + complex_gaussian(rng, var_e))
                .collect()
        }
    }
}

/// Zero-forcing equalizer: `out = conj(h_est) / |h_est|^2 * received`.
///
/// Estimates with magnitude at or below [`ZF_EPSILON`] are rescaled to that
/// magnitude (phase preserved; an exactly-zero estimate becomes the real
/// value `ZF_EPSILON`). The second return value counts how many uses were
/// clamped, for per-frame diagnostics.
pub fn zf_equalize(received: &[Complex64], gains_est: &[Complex64]) -> (Vec<Complex64>, usize) {
    assert_eq!(received.len(), gains_est.len());
    let mut clamped = 0usize;
    let out = received
        .iter()
        .zip(gains_est)
        .map(|(r, g)| {
            let mag = g.norm();
            let g_eff = if mag <= ZF_EPSILON {
                clamped += 1;
                if mag == 0.0 {
                    Complex64::new(ZF_EPSILON, 0.0)
                } else {
                    g * (ZF_EPSILON / mag)
                }
            } else {
                *g
            };
            r * g_eff.conj() / g_eff.norm_sqr()
        })
        .collect();
    (out, clamped)
}

/// Linear MMSE equalizer: `out = conj(h_est) / (|h_est|^2 + noise_var) * r`.
///
/// With `noise_var = 0` this coincides with unclamped zero-forcing; a fully
/// degenerate `h_est = 0, noise_var = 0` use yields 0.
pub fn mmse_equalize(
    received: &[Complex64],
    gains_est: &[Complex64],
    noise_var: f64,
) -> Vec<Complex64> {
    assert_eq!(received.len(), gains_est.len());
    received
        .iter()
        .zip(gains_est)
        .map(|(r, g)| {
            let denom = g.norm_sqr() + noise_var;
            if denom == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                r * g.conj() / denom
            }
        })
        .collect()
}

/// Empirical per-use SNR of one realization in dB:
/// `10 log10( sum |h_i s_i|^2 / sum |r_i - h_i s_i|^2 )`.
///
/// Returns `f64::INFINITY` when the batch carries no noise energy.
pub fn measure_snr(
    s: &[Complex64],
    received: &[Complex64],
    realization: &ChannelRealization,
) -> f64 {
    assert_eq!(s.len(), received.len());
    assert_eq!(s.len(), realization.gains.len());
    let mut sig = 0.0;
    let mut noi = 0.0;
    for i in 0..s.len() {
        let faded = realization.gains[i] * s[i];
        sig += faded.norm_sqr();
        noi += (received[i] - faded).norm_sqr();
    }
    if noi == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (sig / noi).log10()
    }
}

// --- serde forms -----------------------------------------------------------
//
// `snr_db` accepts a JSON number or the string "inf" (noise disabled);
// `csi_nmse_db` accepts a number or the string "perfect". Serialization
// round-trips the same forms.

impl Serialize for NoiseLevel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NoiseLevel::Disabled => serializer.serialize_str("inf"),
            NoiseLevel::SnrDb(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for NoiseLevel {
    fn deserialize<D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = NoiseLevel;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an SNR in dB or the string \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<NoiseLevel, E> {
                Ok(NoiseLevel::SnrDb(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<NoiseLevel, E> {
                Ok(NoiseLevel::SnrDb(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<NoiseLevel, E> {
                Ok(NoiseLevel::SnrDb(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<NoiseLevel, E> {
                match v {
                    "inf" | "off" => Ok(NoiseLevel::Disabled),
                    other => Err(E::custom(format!(
                        "snr_db must be a number, \"inf\", or \"off\", got {other:?}"
                    ))),
                }
            }
        }
        deserializer.deserialize_any(V)
    }
}

impl Serialize for CsiQuality {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CsiQuality::Perfect => serializer.serialize_str("perfect"),
            CsiQuality::NmseDb(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for CsiQuality {
    fn deserialize<D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = CsiQuality;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an NMSE in dB or the string \"perfect\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<CsiQuality, E> {
                Ok(CsiQuality::NmseDb(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<CsiQuality, E> {
                Ok(CsiQuality::NmseDb(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<CsiQuality, E> {
                Ok(CsiQuality::NmseDb(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<CsiQuality, E> {
                if v == "perfect" {
                    Ok(CsiQuality::Perfect)
                } else {
                    Err(E::custom(format!(
                        "csi_nmse_db must be a number or \"perfect\", got {v:?}"
                    )))
                }
            }
        }
        deserializer.deserialize_any(V)
    }
}
