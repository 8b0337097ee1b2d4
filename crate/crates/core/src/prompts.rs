//! The four text prompts derived from a clip's label runs.

use crate::dataset::{GestureVocabulary, Label};
use crate::error::{Error, Result};
use crate::sampling::{LabelRun, CLIP_LEN};

const ORDINALS: [&str; CLIP_LEN] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
    "eleventh", "twelfth", "thirteenth", "fourteenth", "fifteenth", "sixteenth",
];

const ADVERBS: [&str; CLIP_LEN] = [
    "Firstly", "Secondly", "Thirdly", "Fourthly", "Fifthly", "Sixthly", "Seventhly", "Eighthly",
    "Ninthly", "Tenthly", "Eleventhly", "Twelfthly", "Thirteenthly", "Fourteenthly", "Fifteenthly",
    "Sixteenthly",
];

/// How a gesture is named inside semantic prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PromptMode {
    /// Lower-cased vocabulary description.
    #[default]
    Text,
    /// Categorical `Gesture {k}`.
    Index,
}

impl std::str::FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Self::Text),
            "index" => Ok(Self::Index),
            _ => Err(Error::Config(format!("prompt mode must be `text` or `index`, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for PromptMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Text => "text",
            Self::Index => "index",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub statistical: String,
    pub ordinals: Vec<String>,
    pub semantics: Vec<String>,
    pub integrated: String,
}

impl PromptSet {
    pub fn run_count(&self) -> usize {
        self.ordinals.len()
    }
}

pub fn statistical_prompt(k: usize) -> String {
    format!("this video contains {k} actions in total")
}

/// `i` is 1-based.
pub fn ordinal_prompt(i: usize) -> Result<String> {
    let word = ORDINALS
        .get(i.wrapping_sub(1))
        .ok_or_else(|| Error::Contract(format!("ordinal {i} outside 1..={CLIP_LEN}")))?;
    Ok(format!("this is the {word} action in the video"))
}

/// Text naming `label` in a semantic prompt.
pub fn gesture_phrase(label: Label, vocab: &GestureVocabulary, mode: PromptMode) -> Result<String> {
    let description = vocab.description(label)?;
    Ok(match (mode, label) {
        (PromptMode::Index, Label::Gesture(k)) => format!("Gesture {k}"),
        // placeholders have no index; they keep their description in both modes
        _ => description.to_lowercase(),
    })
}

/// `i` is 1-based.
pub fn semantic_prompt(i: usize, phrase: &str) -> Result<String> {
    let adverb = ADVERBS
        .get(i.wrapping_sub(1))
        .ok_or_else(|| Error::Contract(format!("ordinal {i} outside 1..={CLIP_LEN}")))?;
    Ok(format!("{adverb}, the person is performing {phrase}"))
}

pub fn build_prompts(runs: &[LabelRun], vocab: &GestureVocabulary, mode: PromptMode) -> Result<PromptSet> {
    if runs.is_empty() {
        return Err(Error::Contract("prompts need at least one label run".into()));
    }
    let mut ordinals = Vec::with_capacity(runs.len());
    let mut semantics = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        ordinals.push(ordinal_prompt(i + 1)?);
        semantics.push(semantic_prompt(i + 1, &gesture_phrase(run.label, vocab, mode)?)?);
    }
    Ok(PromptSet {
        statistical: statistical_prompt(runs.len()),
        integrated: semantics.join(" "),
        ordinals,
        semantics,
    })
}
