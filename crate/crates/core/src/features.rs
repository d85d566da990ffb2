//! Frame-level feature sequences and frame/time arithmetic.
//!
//! The audio frontend (in the companion crate) produces a [`FeatureMatrix`];
//! everything downstream only needs the matrix plus its [`FrameTiming`] to
//! convert between frame indices and seconds for span labels and span
//! prediction.

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("feature matrix must be 2-D [frames, bins], got rank {rank}")]
    NotMatrix { rank: usize },
    #[error("feature matrix must have at least one frame")]
    Empty,
}

/// Analysis frame geometry, in samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameTiming {
    pub window: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl FrameTiming {
    /// 30 ms window / 10 ms hop at 16 kHz: the only geometry the system
    /// uses in practice.
    pub fn default_16k() -> Self {
        FrameTiming {
            window: 480,
            hop: 160,
            sample_rate: 16_000,
        }
    }

    /// Frame count for a signal of `n` samples: 1 + floor((N − window)/hop)
    /// when N ≥ window, else a single (zero-padded) frame. Depends only on
    /// the sample count.
    pub fn num_frames(&self, n: usize) -> usize {
        if n >= self.window {
            1 + (n - self.window) / self.hop
        } else {
            1
        }
    }

    pub fn frame_start_s(&self, t: usize) -> f64 {
        (t * self.hop) as f64 / self.sample_rate as f64
    }

    pub fn frame_end_s(&self, t: usize) -> f64 {
        (t * self.hop + self.window) as f64 / self.sample_rate as f64
    }

    pub fn frame_center_s(&self, t: usize) -> f64 {
        ((t * self.hop) as f64 + self.window as f64 / 2.0) / self.sample_rate as f64
    }
}

/// T × F feature sequence (log-mel energies) with its frame geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub frames: Tensor,
    pub timing: FrameTiming,
}

impl FeatureMatrix {
    pub fn new(frames: Tensor, timing: FrameTiming) -> Result<Self, FeatureError> {
        if frames.shape().len() != 2 {
            return Err(FeatureError::NotMatrix {
                rank: frames.shape().len(),
            });
        }
        if frames.rows() == 0 {
            return Err(FeatureError::Empty);
        }
        Ok(FeatureMatrix { frames, timing })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }
}
