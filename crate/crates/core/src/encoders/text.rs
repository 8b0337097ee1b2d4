use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::{Bound, ParamId, ParamSet, Tape, Tensor, Var};
use crate::dataset::GestureVocabulary;
use crate::error::{Error, Result};
use crate::prompts::{gesture_phrase, ordinal_prompt, semantic_prompt, statistical_prompt, PromptMode};
use crate::sampling::CLIP_LEN;

/// Reserved token for words outside the lexicon.
pub const UNKNOWN: &str = "<unk>";

/// Word-level tokenizer vocabulary. Id 0 is [`UNKNOWN`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    words: Vec<String>,
    ids: HashMap<String, usize>,
}

/// Lower-cased alphanumeric words.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl Lexicon {
    pub fn from_words(words: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = words.into_iter().filter(|w| w != UNKNOWN).collect();
        let words: Vec<String> = std::iter::once(UNKNOWN.to_string()).chain(set).collect();
        let ids = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, ids }
    }

    /// Every word any prompt over `vocab` can contain, in either mode.
    pub fn for_vocabulary(vocab: &GestureVocabulary) -> Self {
        let mut text = String::new();
        for i in 1..=CLIP_LEN {
            text.push_str(&statistical_prompt(i));
            text.push(' ');
            text.push_str(&ordinal_prompt(i).expect("ordinal in range"));
            text.push(' ');
            text.push_str(&semantic_prompt(i, "").expect("ordinal in range"));
            text.push(' ');
        }
        for label in vocab.classes() {
            for mode in [PromptMode::Text, PromptMode::Index] {
                text.push_str(&gesture_phrase(label, vocab, mode).expect("label from vocabulary"));
                text.push(' ');
            }
        }
        Self::from_words(tokenize(&text))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> usize {
        self.ids.get(word).copied().unwrap_or(0)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|w| self.id(w)).collect()
    }

    /// SHA-256 of the newline-joined word list, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.words.join("\n").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Bag-of-words text encoder: mean token embedding → linear.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    pub lexicon: Lexicon,
    pub dim: usize,
    pub params: ParamSet,
    embed: ParamId,
    w: ParamId,
    b: ParamId,
}

impl TextEncoder {
    pub fn new<R: Rng>(lexicon: Lexicon, dim: usize, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let embed = params.add("text.embed", Tensor::randn(vec![lexicon.len(), dim], 1.0, rng));
        let w = params.add("text.w", Tensor::randn(vec![dim, dim], 1.0 / (dim as f64).sqrt(), rng));
        let b = params.add("text.b", Tensor::zeros(vec![dim]));
        Self { lexicon, dim, params, embed, w, b }
    }

    /// Embed each prompt; returns `[N × dim]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, prompts: &[&str]) -> Result<Var> {
        let mut pooled = Vec::with_capacity(prompts.len());
        for prompt in prompts {
            let ids = self.lexicon.encode(prompt);
            if ids.is_empty() {
                return Err(Error::Contract(format!("prompt {prompt:?} has no tokens")));
            }
            let rows = tape.select_rows(p.get(self.embed), ids)?;
            pooled.push(tape.mean_pool(rows, 0)?);
        }
        let x = tape.concat_rows(&pooled)?;
        let z = tape.matmul(x, p.get(self.w))?;
        tape.add_row_bias(z, p.get(self.b))
    }

    /// Embedding of a single prompt.
    pub fn encode(&self, prompt: &str) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let z = self.forward(&mut tape, &bound, &[prompt])?;
        tape.value(z).clone().reshape(vec![self.dim])
    }
}
