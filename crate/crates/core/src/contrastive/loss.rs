use std::fmt;

use crate::autodiff::{Tape, Tensor, Var};
use crate::encoders::{BoundEncoders, Encoders};
use crate::error::{Error, Result};
use crate::prompts::PromptSet;
use crate::sampling::{FrameClip, LabelRun, CLIP_LEN};

use super::similarity::{batch_similarity, channel_loss_var, similarity_var, Channel, SimilarityMatrix};

/// A clip with its label runs and prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub clip: FrameClip,
    pub runs: Vec<LabelRun>,
    pub prompts: PromptSet,
}

/// Loss components of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    /// Summed over runs `k`.
    pub sem: f64,
    pub int: f64,
    pub stat: f64,
    pub total: f64,
}

impl fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} {:.6} {:.6} {:.6}", self.total, self.sem, self.int, self.stat)
    }
}

/// Differentiable loss terms of one batch.
#[derive(Debug, Clone)]
pub struct LossVars {
    pub sem: Var,
    pub int: Var,
    pub stat: Var,
    pub total: Var,
    /// `S_sem^1..K`, `S_int`, `S_stat` as tape variables.
    pub similarities: Vec<(Channel, Var)>,
}

impl LossVars {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            sem: tape.value(self.sem).item(),
            int: tape.value(self.int).item(),
            stat: tape.value(self.stat).item(),
            total: tape.value(self.total).item(),
        }
    }

    pub fn matrices(&self, tape: &Tape) -> Result<Vec<SimilarityMatrix>> {
        self.similarities
            .iter()
            .map(|(c, v)| SimilarityMatrix::new(*c, tape.shape(*v)[0], tape.value(*v).data().to_vec()))
            .collect()
    }
}

/// Build the three contrastive losses for a batch sharing one run count.
pub fn total_loss(
    tape: &mut Tape,
    enc: &Encoders,
    p: &BoundEncoders,
    batch: &[&Sample],
    temperature: f64,
) -> Result<LossVars> {
    let b = batch.len();
    if b < 2 {
        return Err(Error::Contract(format!("contrastive batches need at least 2 clips, got {b}")));
    }
    let k = batch[0].runs.len();
    if batch.iter().any(|s| s.runs.len() != k || s.prompts.run_count() != k) {
        return Err(Error::Contract("every clip in a batch must have the same run count".into()));
    }

    let pixels = enc.image.pixels();
    let mut frames = Vec::with_capacity(b * CLIP_LEN * pixels);
    for s in batch {
        if s.clip.frames.len() != CLIP_LEN * pixels {
            return Err(Error::Dimension(format!("clip frames do not match the {pixels}-pixel encoder")));
        }
        frames.extend_from_slice(&s.clip.frames);
    }
    let frames = tape.constant(Tensor::matrix(b * CLIP_LEN, pixels, frames)?);
    let frame_embs = enc.image.forward(tape, &p.image, frames)?;

    // prompt rows per clip: K ordinals, K semantics, integrated, statistical
    let stride = 2 * k + 2;
    let mut prompts: Vec<&str> = Vec::with_capacity(b * stride);
    for s in batch {
        prompts.extend(s.prompts.ordinals.iter().map(String::as_str));
        prompts.extend(s.prompts.semantics.iter().map(String::as_str));
        prompts.push(&s.prompts.integrated);
        prompts.push(&s.prompts.statistical);
    }
    let text = enc.text.forward(tape, &p.text, &prompts)?;

    let mut fused = Vec::with_capacity(b);
    for (i, s) in batch.iter().enumerate() {
        let f = tape.select_rows(frame_embs, (i * CLIP_LEN..(i + 1) * CLIP_LEN).collect())?;
        let o = tape.select_rows(text, (i * stride..i * stride + k).collect())?;
        fused.push(enc.fusion.forward(tape, &p.fusion, f, o, &s.runs)?);
    }

    let text_rows = |offset: usize| (0..b).map(|i| i * stride + offset).collect::<Vec<_>>();
    let mut similarities = Vec::with_capacity(k + 2);
    let mut sem_terms = Vec::with_capacity(k);
    for r in 0..k {
        let zc: Vec<Var> = fused.iter().map(|f| f.per_run[r]).collect();
        let zc = tape.concat_rows(&zc)?;
        let zt = tape.select_rows(text, text_rows(k + r))?;
        let s = similarity_var(tape, zc, zt)?;
        similarities.push((Channel::Semantic(r + 1), s));
        sem_terms.push(channel_loss_var(tape, s, temperature)?);
    }
    let mut sem = sem_terms[0];
    for t in &sem_terms[1..] {
        sem = tape.add(sem, *t)?;
    }

    let zc: Vec<Var> = fused.iter().map(|f| f.clip).collect();
    let zc = tape.concat_rows(&zc)?;
    let zt = tape.select_rows(text, text_rows(2 * k))?;
    let s_int = similarity_var(tape, zc, zt)?;
    similarities.push((Channel::Integrated, s_int));
    let int = channel_loss_var(tape, s_int, temperature)?;

    let zn: Vec<Var> = fused.iter().map(|f| f.count).collect();
    let zn = tape.concat_rows(&zn)?;
    let zt = tape.select_rows(text, text_rows(2 * k + 1))?;
    let s_stat = similarity_var(tape, zn, zt)?;
    similarities.push((Channel::Statistical, s_stat));
    let stat = channel_loss_var(tape, s_stat, temperature)?;

    let total = tape.add(sem, int)?;
    let total = tape.add(total, stat)?;
    Ok(LossVars { sem, int, stat, total, similarities })
}

/// Plain-value similarity matrices of embeddings, for inspection.
pub fn similarity_of(zx: &Tensor, zy: &Tensor, channel: Channel) -> Result<SimilarityMatrix> {
    batch_similarity(zx, zy, channel)
}
