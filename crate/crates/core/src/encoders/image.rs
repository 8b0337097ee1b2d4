use rand::Rng;

use crate::autodiff::{Bound, ParamId, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::sampling::{FrameClip, CLIP_LEN};

/// Per-frame encoder: flatten → linear → tanh → linear.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEncoder {
    pub height: usize,
    pub width: usize,
    pub hidden: usize,
    pub dim: usize,
    pub params: ParamSet,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl ImageEncoder {
    pub fn new<R: Rng>(height: usize, width: usize, hidden: usize, dim: usize, rng: &mut R) -> Self {
        let pixels = height * width;
        let mut params = ParamSet::new();
        let w1 = params.add("image.w1", Tensor::randn(vec![pixels, hidden], 1.0 / (pixels as f64).sqrt(), rng));
        let b1 = params.add("image.b1", Tensor::zeros(vec![hidden]));
        let w2 = params.add("image.w2", Tensor::randn(vec![hidden, dim], 1.0 / (hidden as f64).sqrt(), rng));
        let b2 = params.add("image.b2", Tensor::zeros(vec![dim]));
        Self { height, width, hidden, dim, params, w1, b1, w2, b2 }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Embed the rows of `frames` (`[N × pixels]`) into `[N × dim]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, frames: Var) -> Result<Var> {
        let cols = tape.shape(frames).get(1).copied();
        if cols != Some(self.pixels()) {
            return Err(Error::Dimension(format!(
                "image encoder expects {}×{} frames, got rows of {:?} values",
                self.height, self.width, cols
            )));
        }
        let h = tape.matmul(frames, p.get(self.w1))?;
        let h = tape.add_row_bias(h, p.get(self.b1))?;
        let h = tape.tanh(h)?;
        let z = tape.matmul(h, p.get(self.w2))?;
        tape.add_row_bias(z, p.get(self.b2))
    }

    /// Embeddings of the 16 frames of a clip, `[16 × dim]`.
    pub fn encode_clip(&self, tape: &mut Tape, p: &Bound, clip: &FrameClip) -> Result<Var> {
        if clip.height != self.height || clip.width != self.width {
            return Err(Error::Dimension(format!(
                "clip frames are {}×{}, encoder expects {}×{}",
                clip.height, clip.width, self.height, self.width
            )));
        }
        let frames = tape.constant(Tensor::matrix(CLIP_LEN, self.pixels(), clip.frames.clone())?);
        self.forward(tape, p, frames)
    }

    /// Frozen frame-wise embedding of a whole frame sequence, `[T × dim]`.
    pub fn embed(&self, frames: &[f64]) -> Result<Tensor> {
        let p = self.pixels();
        if frames.len() % p != 0 {
            return Err(Error::Dimension(format!("{} values is not a whole number of {p}-pixel frames", frames.len())));
        }
        let n = frames.len() / p;
        let mut out = Vec::with_capacity(n * self.dim);
        // chunked so each tape stays small
        for chunk in frames.chunks(256 * p) {
            let mut tape = Tape::new();
            let bound = self.params.bind_frozen(&mut tape);
            let x = tape.constant(Tensor::matrix(chunk.len() / p, p, chunk.to_vec())?);
            let z = self.forward(&mut tape, &bound, x)?;
            out.extend_from_slice(tape.value(z).data());
        }
        Tensor::matrix(n, self.dim, out)
    }
}
