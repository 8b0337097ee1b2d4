use rand::Rng;

use crate::autodiff::{Bound, ParamId, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::sampling::{LabelRun, CLIP_LEN};

/// One multi-head self-attention block over
/// `[16 frame tokens ⊕ K ordinal-prompt tokens ⊕ 1 count token]`.
///
/// Indicator signals are learned vectors added to the tokens: a clip
/// position offset for every frame, a run-membership offset shared by the
/// frames of run `k` and the `k`-th ordinal token, a type offset for
/// ordinal tokens, and the count token itself.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModule {
    pub dim: usize,
    pub heads: usize,
    pub params: ParamSet,
    position: ParamId,
    run: ParamId,
    ordinal_type: ParamId,
    count: ParamId,
    query: Vec<ParamId>,
    key: Vec<ParamId>,
    value: Vec<ParamId>,
    output: Vec<ParamId>,
}

/// Fusion outputs as tape variables.
#[derive(Debug, Clone)]
pub struct FusionVars {
    /// `z_c^k`, one `[dim]` vector per run.
    pub per_run: Vec<Var>,
    /// Mean of `per_run`.
    pub clip: Var,
    /// Output at the count-token position.
    pub count: Var,
}

/// Fusion outputs as plain values.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    pub per_run: Vec<Tensor>,
    pub clip: Tensor,
    pub count: Tensor,
}

impl FusionVars {
    pub fn values(&self, tape: &Tape) -> FusionOutput {
        FusionOutput {
            per_run: self.per_run.iter().map(|v| tape.value(*v).clone()).collect(),
            clip: tape.value(self.clip).clone(),
            count: tape.value(self.count).clone(),
        }
    }
}

impl FusionModule {
    pub fn new<R: Rng>(dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Parameter(format!("{heads} heads do not divide dimension {dim}")));
        }
        let head_dim = dim / heads;
        let mut params = ParamSet::new();
        let position = params.add("fusion.position", Tensor::randn(vec![CLIP_LEN, dim], 0.1, rng));
        let run = params.add("fusion.run", Tensor::randn(vec![CLIP_LEN, dim], 0.1, rng));
        let ordinal_type = params.add("fusion.ordinal_type", Tensor::randn(vec![dim], 0.1, rng));
        let count = params.add("fusion.count", Tensor::randn(vec![dim], 0.1, rng));
        let proj = 1.0 / (dim as f64).sqrt();
        let (mut query, mut key, mut value, mut output) = (vec![], vec![], vec![], vec![]);
        for h in 0..heads {
            query.push(params.add(format!("fusion.query{h}"), Tensor::randn(vec![dim, head_dim], proj, rng)));
            key.push(params.add(format!("fusion.key{h}"), Tensor::randn(vec![dim, head_dim], proj, rng)));
            value.push(params.add(format!("fusion.value{h}"), Tensor::randn(vec![dim, head_dim], proj, rng)));
            let out_std = 1.0 / (dim as f64).sqrt();
            output.push(params.add(format!("fusion.output{h}"), Tensor::randn(vec![head_dim, dim], out_std, rng)));
        }
        Ok(Self { dim, heads, params, position, run, ordinal_type, count, query, key, value, output })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, frames: Var, ordinals: Var, runs: &[LabelRun]) -> Result<FusionVars> {
        let k = runs.len();
        if k == 0 {
            return Err(Error::Contract("fusion needs at least one run".into()));
        }
        if k > CLIP_LEN {
            return Err(Error::Contract(format!("{k} runs exceed the clip length")));
        }
        if tape.shape(frames) != [CLIP_LEN, self.dim] || tape.shape(ordinals) != [k, self.dim] {
            return Err(Error::Dimension(format!(
                "fusion expects [{CLIP_LEN}×{d}] frames and [{k}×{d}] ordinals, got {:?} and {:?}",
                tape.shape(frames),
                tape.shape(ordinals),
                d = self.dim
            )));
        }
        let mut run_of_frame = vec![usize::MAX; CLIP_LEN];
        for (r, run) in runs.iter().enumerate() {
            for slot in &mut run_of_frame[run.first..=run.last] {
                *slot = r;
            }
        }
        if run_of_frame.contains(&usize::MAX) {
            return Err(Error::Contract("runs do not cover the clip".into()));
        }

        let frame_tokens = tape.add(frames, p.get(self.position))?;
        let membership = tape.select_rows(p.get(self.run), run_of_frame)?;
        let frame_tokens = tape.add(frame_tokens, membership)?;
        let ord_membership = tape.select_rows(p.get(self.run), (0..k).collect())?;
        let ord_tokens = tape.add(ordinals, ord_membership)?;
        let ord_tokens = tape.add_row_bias(ord_tokens, p.get(self.ordinal_type))?;
        let x = tape.concat_rows(&[frame_tokens, ord_tokens, p.get(self.count)])?;

        let mut y = x;
        let scale = (self.head_dim() as f64).sqrt();
        for h in 0..self.heads {
            let q = tape.matmul(x, p.get(self.query[h]))?;
            let kk = tape.matmul(x, p.get(self.key[h]))?;
            let v = tape.matmul(x, p.get(self.value[h]))?;
            let kt = tape.transpose(kk)?;
            let scores = tape.matmul(q, kt)?;
            let attn = tape.softmax(scores, 1, scale)?;
            let mixed = tape.matmul(attn, v)?;
            let out = tape.matmul(mixed, p.get(self.output[h]))?;
            y = tape.add(y, out)?;
        }

        let mut per_run = Vec::with_capacity(k);
        for run in runs {
            let rows = tape.select_rows(y, (run.first..=run.last).collect())?;
            per_run.push(tape.mean_pool(rows, 0)?);
        }
        let stacked = tape.concat_rows(&per_run)?;
        let clip = tape.mean_pool(stacked, 0)?;
        let count_row = tape.select_rows(y, vec![CLIP_LEN + k])?;
        let count = tape.reshape(count_row, vec![self.dim])?;
        Ok(FusionVars { per_run, clip, count })
    }
}
