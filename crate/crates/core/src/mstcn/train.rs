use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, AdamConfig, Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::model::{feature_input, MsTcn, MsTcnConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub model: MsTcnConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight of the smoothing term.
    pub smoothing: f64,
    /// Clip threshold on squared log-probability differences.
    pub smoothing_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: MsTcnConfig::default(),
            epochs: 40,
            learning_rate: 5e-3,
            smoothing: 0.15,
            smoothing_clip: 16.0,
            seed: 0,
        }
    }
}

/// A feature sequence `[T × d]` with one class index per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

/// Cross-entropy of one stage's scores `[C × T]` (mean over frames).
pub fn cross_entropy(tape: &mut Tape, scores: Var, labels: &[usize]) -> Result<Var> {
    let t = tape.shape(scores)[1];
    let lp = tape.log_softmax(scores, 0)?;
    let picked = tape.gather(lp, labels.iter().enumerate().map(|(j, &c)| c * t + j).collect())?;
    let m = tape.mean(picked)?;
    tape.scale(m, -1.0)
}

/// Mean over classes and frame pairs of `min((Δ log p)², clip)`; zero for
/// a single frame.
pub fn smoothing_term(tape: &mut Tape, scores: Var, clip: f64) -> Result<Option<Var>> {
    let (c, t) = (tape.shape(scores)[0], tape.shape(scores)[1]);
    if t < 2 {
        return Ok(None);
    }
    let lp = tape.log_softmax(scores, 0)?;
    let later: Vec<usize> = (0..c).flat_map(|i| (1..t).map(move |j| i * t + j)).collect();
    let earlier: Vec<usize> = later.iter().map(|k| k - 1).collect();
    let a = tape.gather(lp, later)?;
    let b = tape.gather(lp, earlier)?;
    let d = tape.sub(a, b)?;
    let sq = tape.mul(d, d)?;
    let sq = tape.clamp_max(sq, clip)?;
    Ok(Some(tape.mean(sq)?))
}

/// Sum over stages of cross-entropy plus `λ ×` the smoothing term.
pub fn sequence_loss(tape: &mut Tape, stages: &[Var], labels: &[usize], smoothing: f64, clip: f64) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &s in stages {
        let mut l = cross_entropy(tape, s, labels)?;
        if smoothing != 0.0 {
            if let Some(sm) = smoothing_term(tape, s, clip)? {
                let sm = tape.scale(sm, smoothing)?;
                l = tape.add(l, sm)?;
            }
        }
        total = Some(match total {
            Some(t) => tape.add(t, l)?,
            None => l,
        });
    }
    total.ok_or_else(|| Error::Contract("model produced no stages".into()))
}

/// Train a fresh recognizer, one sequence per step in a seeded order.
/// Returns the model and the mean loss of every epoch.
pub fn train_recognizer(data: &[Sequence], classes: usize, config: &TrainConfig) -> Result<(MsTcn, Vec<f64>)> {
    let first = data.first().ok_or_else(|| Error::Config("recognizer training set is empty".into()))?;
    let dim = first.features.cols();
    for (i, s) in data.iter().enumerate() {
        if s.features.shape() != [s.labels.len(), dim] || s.labels.is_empty() {
            return Err(Error::Dimension(format!(
                "sequence {i}: features {:?} do not match {} labels of width {dim}",
                s.features.shape(),
                s.labels.len()
            )));
        }
        if !s.features.is_finite() {
            return Err(Error::Data(format!("sequence {i}: features contain non-finite values")));
        }
        if let Some(&bad) = s.labels.iter().find(|&&c| c >= classes) {
            return Err(Error::Data(format!("sequence {i}: label {bad} outside 0..{classes}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MsTcn::new(config.model, dim, classes, &mut rng)?;
    let mut adam = Adam::new(AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() }, &model.params);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (step, &i) in order.iter().enumerate() {
            let diverged = |msg: String| Error::Divergence { epoch, batch: step + 1, msg };
            let mut tape = Tape::new();
            let p = model.params.bind(&mut tape);
            let x = feature_input(&mut tape, &data[i].features)?;
            let loss = model
                .forward(&mut tape, &p, x)
                .and_then(|stages| {
                    sequence_loss(&mut tape, &stages, &data[i].labels, config.smoothing, config.smoothing_clip)
                })
                .map_err(|e| match e {
                    Error::NonFinite { op } => diverged(format!("non-finite {op}")),
                    other => other,
                })?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(diverged("non-finite loss".into()));
            }
            tape.backward(loss)?;
            let grads = model.params.grads(&tape, &p);
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(diverged("non-finite gradient".into()));
            }
            adam.step(&mut model.params, &grads);
            sum += value;
        }
        log.push(sum / data.len() as f64);
    }
    Ok((model, log))
}
