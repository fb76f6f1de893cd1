//! Dense row-major pixel and feature containers.
//!
//! Both containers store `f64` values in `(row, col, channel)` order:
//! `index = (i * width + j) * channels + c`. Every module in the crate
//! assumes this layout, and all cross-module iteration is row-major so that
//! transmitter and receiver walk cells in the same order.

use crate::error::{Error, Result};

/// A raster frame, `height x width x channels`, values nominally in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    data: Vec<f64>,
    height: usize,
    width: usize,
    channels: usize,
}

/// A feature tensor, `height x width x channels`, unbounded values.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    data: Vec<f64>,
    height: usize,
    width: usize,
    channels: usize,
}

macro_rules! grid_impl {
    ($ty:ident) => {
        impl $ty {
            /// All-zero container of the given shape.
            pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
                Self {
                    data: vec![0.0; height * width * channels],
                    height,
                    width,
                    channels,
                }
            }

            /// Wraps existing data; `data.len()` must equal `h * w * c`.
            pub fn from_vec(
                data: Vec<f64>,
                height: usize,
                width: usize,
                channels: usize,
            ) -> Result<Self> {
                if data.len() != height * width * channels {
                    return Err(Error::ShapeMismatch {
                        context: concat!(stringify!($ty), "::from_vec"),
                        expected: height * width * channels,
                        got: data.len(),
                    });
                }
                Ok(Self {
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

            /// `(height, width, channels)`.
            pub fn dims(&self) -> (usize, usize, usize) {
                (self.height, self.width, self.channels)
            }

            /// Flat index of `(i, j, c)`.
            #[inline]
            pub fn idx(&self, i: usize, j: usize, c: usize) -> usize {
                (i * self.width + j) * self.channels + c
            }

            #[inline]
            pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
                self.data[self.idx(i, j, c)]
            }

            #[inline]
            pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
                let k = self.idx(i, j, c);
                self.data[k] = v;
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.data
            }

            pub fn as_mut_slice(&mut self) -> &mut [f64] {
                &mut self.data
            }

            /// The channel vector at cell `(i, j)`.
            #[inline]
            pub fn cell(&self, i: usize, j: usize) -> &[f64] {
                let base = (i * self.width + j) * self.channels;
                &self.data[base..base + self.channels]
            }

            #[inline]
            pub fn cell_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
                let base = (i * self.width + j) * self.channels;
                &mut self.data[base..base + self.channels]
            }

            /// Errors if any element is NaN or infinite.
            pub fn check_finite(&self, context: &'static str) -> Result<()> {
                match self.data.iter().position(|v| !v.is_finite()) {
                    Some(index) => Err(Error::NonFinite { context, index }),
                    None => Ok(()),
                }
            }
        }
    };
}

grid_impl!(Frame);
grid_impl!(FeatureGrid);

impl Frame {
    /// Pads the frame so height and width become multiples of `stride`,
    /// replicating the last row/column. Returns the frame unchanged when it
    /// is already aligned.
    pub fn pad_to_multiple(&self, stride: usize) -> Frame {
        let ph = self.height.div_ceil(stride) * stride;
        let pw = self.width.div_ceil(stride) * stride;
        if ph == self.height && pw == self.width {
            return self.clone();
        }
        let mut out = Frame::zeros(ph, pw, self.channels);
        for i in 0..ph {
            let si = i.min(self.height - 1);
            for j in 0..pw {
                let sj = j.min(self.width - 1);
                for c in 0..self.channels {
                    out.set(i, j, c, self.get(si, sj, c));
                }
            }
        }
        out
    }

    /// Truncates to the top-left `height x width` region.
    pub fn crop(&self, height: usize, width: usize) -> Frame {
        assert!(height <= self.height && width <= self.width);
        let mut out = Frame::zeros(height, width, self.channels);
        for i in 0..height {
            for j in 0..width {
                for c in 0..self.channels {
                    out.set(i, j, c, self.get(i, j, c));
                }
            }
        }
        out
    }
}
