//! Experiment configuration: the base session, the sweep axes, the input
//! description, and output file names. Everything arrives as one JSON
//! document so a run is fully described by a single file plus a seed.

use std::fmt;
use std::path::Path;

use pvsc_core::channel::{CsiQuality, NoiseLevel};
use pvsc_core::codec::PresetVector;
use pvsc_core::pipeline::SessionConfig;
use serde::{Deserialize, Serialize};

use crate::synth::InputSpec;

/// One experiment: a base session swept over channel SNR, GOP length,
/// codec preset, and CSI quality. The grid is the cartesian product of the
/// four axes, executed point by point on the same input sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub session: SessionConfig,
    pub sweep: SweepAxes,
    pub input: InputSpec,
    /// Master seed. Each grid point derives its channel seed from this and
    /// its grid index, so points stay decorrelated but reproducible. The
    /// PVSC_SEED environment variable overrides it.
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Sweep axes; every axis must be nonempty. Axis entries reuse the channel
/// config notation: `"inf"` for a noiseless run, `"perfect"` for exact CSI.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub snr_db: Vec<NoiseLevel>,
    pub gop: Vec<usize>,
    pub preset: Vec<String>,
    pub nmse: Vec<CsiQuality>,
}

/// Output file names, resolved against the `--out-dir` flag.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_frames_csv")]
    pub frames_csv: String,
    #[serde(default = "default_summary_csv")]
    pub summary_csv: String,
}

fn default_frames_csv() -> String {
    "frames.csv".into()
}

fn default_summary_csv() -> String {
    "summary.csv".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            frames_csv: default_frames_csv(),
            summary_csv: default_summary_csv(),
        }
    }
}

/// One sweep point, carrying its position in the flattened grid.
#[derive(Clone, Debug)]
pub struct GridPoint {
    pub index: usize,
    pub snr_db: NoiseLevel,
    pub gop: usize,
    pub preset: String,
    pub nmse: CsiQuality,
}

impl GridPoint {
    /// Stable human-readable label; doubles as the CSV `seq_id`.
    pub fn seq_id(&self) -> String {
        let snr = match self.snr_db {
            NoiseLevel::Disabled => "inf".to_string(),
            NoiseLevel::SnrDb(v) => format!("{v}"),
        };
        let nmse = match self.nmse {
            CsiQuality::Perfect => "perfect".to_string(),
            CsiQuality::NmseDb(v) => format!("{v}"),
        };
        format!("snr{snr}_gop{}_{}_nmse{nmse}", self.gop, self.preset)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.session
            .validate()
            .map_err(|e| format!("session: {e}"))?;
        if self.sweep.snr_db.is_empty()
            || self.sweep.gop.is_empty()
            || self.sweep.preset.is_empty()
            || self.sweep.nmse.is_empty()
        {
            return Err("sweep: every axis needs at least one entry".into());
        }
        for &gop in &self.sweep.gop {
            if gop == 0 {
                return Err("sweep.gop: lengths must be at least 1".into());
            }
        }
        for id in &self.sweep.preset {
            PresetVector::named(id, 1).map_err(|e| format!("sweep.preset: {e}"))?;
        }
        self.input.validate().map_err(|e| format!("input: {e}"))?;
        let (h, w, c) = self.input.dims();
        let session_dims = (
            self.session.frame_height,
            self.session.frame_width,
            self.session.frame_channels,
        );
        if (h, w, c) != session_dims {
            return Err(format!(
                "input dims {h}x{w}x{c} do not match the session's {}x{}x{}",
                session_dims.0, session_dims.1, session_dims.2
            ));
        }
        Ok(())
    }

    /// Flattens the sweep axes in row-major order: SNR outermost, then GOP,
    /// preset, and CSI quality innermost.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points = Vec::new();
        for &snr_db in &self.sweep.snr_db {
            for &gop in &self.sweep.gop {
                for preset in &self.sweep.preset {
                    for &nmse in &self.sweep.nmse {
                        points.push(GridPoint {
                            index: points.len(),
                            snr_db,
                            gop,
                            preset: preset.clone(),
                            nmse,
                        });
                    }
                }
            }
        }
        points
    }
}

/// Command-level error: a message plus optional file context, printed to
/// stderr before a nonzero exit.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
}

impl CliError {
    pub fn new(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
        }
    }

    pub fn in_file(path: &Path, err: impl fmt::Display) -> Self {
        CliError::new(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(e.to_string())
    }
}

impl From<pvsc_core::error::Error> for CliError {
    fn from(e: pvsc_core::error::Error) -> Self {
        CliError::new(e.to_string())
    }
}
