//! Label transcripts, vocabularies, splits, synthetic corpora and their
//! on-disk formats.

pub mod io;
mod splits;
pub mod synth;
mod transcript;
mod video;
mod vocab;

pub use splits::{explicit_holdout, louo_splits, seeded_holdout, Fold};
pub use synth::{generate_synthetic_corpus, SynthConfig};
pub use transcript::{LabelStream, Record, Transcript};
pub use video::Video;
pub use vocab::{GestureVocabulary, Label, BEGIN_DESCRIPTION, END_DESCRIPTION};

use std::collections::BTreeSet;

use crate::sampling::FrameClip;

/// Keep the clips whose every frame is a placeholder or a gesture in
/// `allowed`.
pub fn zero_shot_filter(clips: &[FrameClip], allowed: &BTreeSet<u16>) -> Vec<FrameClip> {
    clips
        .iter()
        .filter(|c| c.labels.iter().all(|l| l.gesture().map_or(true, |g| allowed.contains(&g))))
        .cloned()
        .collect()
}
