use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, AdamConfig, Tape};
use crate::dataset::GestureVocabulary;
use crate::encoders::Encoders;
use crate::error::{Error, Result};
use crate::prompts::{build_prompts, PromptMode};
use crate::sampling::{label_runs, FrameClip};

use super::loss::{total_loss, LossBreakdown, Sample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub seed: u64,
    pub prompt_mode: PromptMode,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 8,
            learning_rate: 1e-3,
            temperature: 0.07,
            seed: 0,
            prompt_mode: PromptMode::Text,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be > 0, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// Mean batch loss of one epoch (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

impl fmt::Display for EpochLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.epoch, self.loss)
    }
}

/// Attach label runs and prompts to every clip.
pub fn prepare_samples(clips: Vec<FrameClip>, vocab: &GestureVocabulary, mode: PromptMode) -> Result<Vec<Sample>> {
    clips
        .into_iter()
        .map(|clip| {
            let runs = label_runs(&clip.labels);
            let prompts = build_prompts(&runs, vocab, mode)?;
            Ok(Sample { clip, runs, prompts })
        })
        .collect()
}

/// Whether two samples would share a semantic prompt at some run position.
fn collide(a: &Sample, b: &Sample) -> bool {
    a.runs.iter().zip(&b.runs).any(|(x, y)| x.label == y.label)
}

/// Split samples into batches of equal run count.
///
/// Each group is shuffled and clips are dealt into the first open batch
/// holding no clip with the same label at any run position, so matching
/// texts rarely appear as negatives. A lone leftover clip joins the
/// previous batch of its group; groups with a single clip are dropped.
/// Batch order is shuffled.
pub fn make_batches(samples: &[Sample], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry(s.runs.len()).or_default().push(i);
    }
    let mut batches = Vec::new();
    for (_, mut idx) in groups {
        if idx.len() < 2 {
            continue;
        }
        idx.shuffle(rng);
        let mut chunks: Vec<Vec<usize>> = Vec::new();
        for i in idx {
            let open = chunks
                .iter_mut()
                .find(|c| c.len() < batch_size && c.iter().all(|&j| !collide(&samples[i], &samples[j])));
            match open {
                Some(c) => c.push(i),
                None => chunks.push(vec![i]),
            }
        }
        let (mut kept, lone): (Vec<_>, Vec<_>) = chunks.into_iter().partition(|c| c.len() > 1);
        for c in lone {
            match kept.last_mut() {
                Some(last) => last.extend(c),
                None => kept.push(c),
            }
        }
        batches.extend(kept.into_iter().filter(|c| c.len() > 1));
    }
    batches.shuffle(rng);
    batches
}

/// Loss of every batch under the current weights, without updating them.
pub fn evaluate(enc: &Encoders, samples: &[Sample], batches: &[Vec<usize>], temperature: f64) -> Result<LossBreakdown> {
    let mut acc = LossBreakdown::default();
    for batch in batches {
        let mut tape = Tape::new();
        let p = enc.bind(&mut tape);
        let refs: Vec<&Sample> = batch.iter().map(|&i| &samples[i]).collect();
        let l = total_loss(&mut tape, enc, &p, &refs, temperature)?.breakdown(&tape);
        accumulate(&mut acc, &l);
    }
    Ok(average(acc, batches.len()))
}

fn accumulate(acc: &mut LossBreakdown, l: &LossBreakdown) {
    acc.sem += l.sem;
    acc.int += l.int;
    acc.stat += l.stat;
    acc.total += l.total;
}

fn average(acc: LossBreakdown, n: usize) -> LossBreakdown {
    let n = n.max(1) as f64;
    LossBreakdown { sem: acc.sem / n, int: acc.int / n, stat: acc.stat / n, total: acc.total / n }
}

/// Contrastive pre-training of all three encoder parts with Adam.
///
/// Returns one [`EpochLoss`] per epoch. A non-finite value anywhere in a
/// step aborts with [`Error::Divergence`].
pub fn pretrain(enc: &mut Encoders, samples: &[Sample], config: &PretrainConfig) -> Result<Vec<EpochLoss>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    if make_batches(samples, config.batch_size, &mut rng.clone()).is_empty() {
        return Err(Error::Config("no two clips share a run count, so no batch can be formed".into()));
    }
    let adam = AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() };
    let mut optimizers: Vec<Adam> = enc.param_sets().iter().map(|p| Adam::new(adam, p)).collect();

    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let batches = make_batches(samples, config.batch_size, &mut rng);
        let mut acc = LossBreakdown::default();
        for (b, batch) in batches.iter().enumerate() {
            let diverged = |e: Error| match e {
                Error::NonFinite { op } => Error::Divergence { epoch, batch: b + 1, msg: format!("non-finite {op}") },
                other => other,
            };
            let mut tape = Tape::new();
            let p = enc.bind(&mut tape);
            let refs: Vec<&Sample> = batch.iter().map(|&i| &samples[i]).collect();
            let vars = total_loss(&mut tape, enc, &p, &refs, config.temperature).map_err(diverged)?;
            let l = vars.breakdown(&tape);
            if !l.total.is_finite() {
                return Err(Error::Divergence { epoch, batch: b + 1, msg: "non-finite loss".into() });
            }
            tape.backward(vars.total).map_err(diverged)?;
            let bounds = [&p.image, &p.text, &p.fusion];
            for ((set, opt), bound) in enc.param_sets_mut().into_iter().zip(&mut optimizers).zip(bounds) {
                let grads = set.grads(&tape, bound);
                if grads.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Divergence { epoch, batch: b + 1, msg: "non-finite gradient".into() });
                }
                opt.step(set, &grads);
            }
            accumulate(&mut acc, &l);
        }
        log.push(EpochLoss { epoch, loss: average(acc, batches.len()) });
    }
    Ok(log)
}
