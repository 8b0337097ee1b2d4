//! Image encoder, text encoder and fusion module, with checkpointing.

pub mod checkpoint;
mod fusion;
mod image;
mod text;

pub use fusion::{FusionModule, FusionOutput, FusionVars};
pub use image::ImageEncoder;
pub use text::{tokenize, Lexicon, TextEncoder, UNKNOWN};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Bound, ParamSet, Tape};
use crate::dataset::GestureVocabulary;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub height: usize,
    pub width: usize,
    pub hidden: usize,
    pub dim: usize,
    pub heads: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { height: 16, width: 16, hidden: 64, dim: 64, heads: 4 }
    }
}

/// The three trainable parts used during contrastive pre-training.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoders {
    pub config: EncoderConfig,
    pub image: ImageEncoder,
    pub text: TextEncoder,
    pub fusion: FusionModule,
}

/// Tape bindings for all three parameter sets.
#[derive(Debug, Clone)]
pub struct BoundEncoders {
    pub image: Bound,
    pub text: Bound,
    pub fusion: Bound,
}

impl Encoders {
    /// Seeded initialization; the lexicon covers every prompt over `vocab`.
    pub fn init(config: EncoderConfig, vocab: &GestureVocabulary, seed: u64) -> Result<Self> {
        Self::with_lexicon(config, Lexicon::for_vocabulary(vocab), seed)
    }

    pub fn with_lexicon(config: EncoderConfig, lexicon: Lexicon, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = ImageEncoder::new(config.height, config.width, config.hidden, config.dim, &mut rng);
        let text = TextEncoder::new(lexicon, config.dim, &mut rng);
        let fusion = FusionModule::new(config.dim, config.heads, &mut rng)?;
        Ok(Self { config, image, text, fusion })
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundEncoders {
        BoundEncoders {
            image: self.image.params.bind(tape),
            text: self.text.params.bind(tape),
            fusion: self.fusion.params.bind(tape),
        }
    }

    pub fn param_sets(&self) -> [&ParamSet; 3] {
        [&self.image.params, &self.text.params, &self.fusion.params]
    }

    pub fn param_sets_mut(&mut self) -> [&mut ParamSet; 3] {
        [&mut self.image.params, &mut self.text.params, &mut self.fusion.params]
    }
}
