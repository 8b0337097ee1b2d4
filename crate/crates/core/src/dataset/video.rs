use crate::error::{Error, Result};

use super::transcript::LabelStream;

/// Frames of one video (single-channel `height × width` maps) with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: String,
    pub user: String,
    pub height: usize,
    pub width: usize,
    frames: Vec<f64>,
    labels: LabelStream,
}

impl Video {
    pub fn new(id: String, user: String, height: usize, width: usize, frames: Vec<f64>, labels: LabelStream) -> Result<Self> {
        let pixels = height * width;
        if pixels == 0 || frames.len() != pixels * labels.len() {
            return Err(Error::Dimension(format!(
                "video {id}: {} values for {} frames of {height}×{width}",
                frames.len(),
                labels.len()
            )));
        }
        Ok(Self { id, user, height, width, frames, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let p = self.pixels();
        &self.frames[t * p..(t + 1) * p]
    }

    pub fn frames(&self) -> &[f64] {
        &self.frames
    }

    pub fn labels(&self) -> &LabelStream {
        &self.labels
    }
}
