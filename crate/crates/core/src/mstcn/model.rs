use rand::Rng;

use crate::autodiff::{Bound, ParamId, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsTcnConfig {
    /// Dual-dilated layers in the prediction stage.
    pub generation_layers: usize,
    /// Number of refinement stages.
    pub refinement_stages: usize,
    /// Dilated residual layers per refinement stage.
    pub refinement_layers: usize,
    pub channels: usize,
}

impl Default for MsTcnConfig {
    fn default() -> Self {
        Self { generation_layers: 5, refinement_stages: 2, refinement_layers: 5, channels: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

impl Conv {
    fn new<R: Rng>(params: &mut ParamSet, name: &str, out: usize, inp: usize, taps: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((inp * taps) as f64).sqrt();
        let shape = if taps == 1 { vec![out, inp] } else { vec![out, inp, taps] };
        let w = params.add(format!("{name}.w"), Tensor::uniform(shape, bound, rng));
        let b = params.add(format!("{name}.b"), Tensor::uniform(vec![out], bound, rng));
        Self { w, b }
    }

    fn pointwise(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(p.get(self.w), x)?;
        tape.add_col_bias(y, p.get(self.b))
    }

    fn dilated(&self, tape: &mut Tape, p: &Bound, x: Var, dilation: usize) -> Result<Var> {
        let y = tape.conv1d_dilated(x, p.get(self.w), dilation)?;
        tape.add_col_bias(y, p.get(self.b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct DualLayer {
    first: Conv,
    second: Conv,
    fusion: Conv,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ResidualLayer {
    dilated: Conv,
    pointwise: Conv,
}

#[derive(Debug, Clone, PartialEq)]
struct Refinement {
    input: Conv,
    layers: Vec<ResidualLayer>,
    output: Conv,
}

/// Multi-stage temporal convolutional recognizer over `[d × T]` feature
/// sequences (channels first).
#[derive(Debug, Clone, PartialEq)]
pub struct MsTcn {
    pub config: MsTcnConfig,
    pub input_dim: usize,
    pub classes: usize,
    pub params: ParamSet,
    input: Conv,
    dual: Vec<DualLayer>,
    output: Conv,
    refinements: Vec<Refinement>,
}

impl MsTcn {
    pub fn new<R: Rng>(config: MsTcnConfig, input_dim: usize, classes: usize, rng: &mut R) -> Result<Self> {
        if config.generation_layers == 0 || config.channels == 0 || input_dim == 0 || classes < 2 {
            return Err(Error::Parameter(format!(
                "need at least one layer, one channel, one input dimension and two classes: {config:?}, d={input_dim}, C={classes}"
            )));
        }
        let f = config.channels;
        let mut params = ParamSet::new();
        let input = Conv::new(&mut params, "gen.in", f, input_dim, 1, rng);
        let dual = (0..config.generation_layers)
            .map(|l| DualLayer {
                first: Conv::new(&mut params, &format!("gen.{l}.d1"), f, f, 3, rng),
                second: Conv::new(&mut params, &format!("gen.{l}.d2"), f, f, 3, rng),
                fusion: Conv::new(&mut params, &format!("gen.{l}.fuse"), f, 2 * f, 1, rng),
            })
            .collect();
        let output = Conv::new(&mut params, "gen.out", classes, f, 1, rng);
        let refinements = (0..config.refinement_stages)
            .map(|s| Refinement {
                input: Conv::new(&mut params, &format!("ref{s}.in"), f, classes, 1, rng),
                layers: (0..config.refinement_layers)
                    .map(|l| ResidualLayer {
                        dilated: Conv::new(&mut params, &format!("ref{s}.{l}.dil"), f, f, 3, rng),
                        pointwise: Conv::new(&mut params, &format!("ref{s}.{l}.pw"), f, f, 1, rng),
                    })
                    .collect(),
                output: Conv::new(&mut params, &format!("ref{s}.out"), classes, f, 1, rng),
            })
            .collect();
        Ok(Self { config, input_dim, classes, params, input, dual, output, refinements })
    }

    /// Score sequences `[C × T]` of every stage, prediction stage first.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, features: Var) -> Result<Vec<Var>> {
        match tape.shape(features) {
            &[d, t] if d == self.input_dim && t > 0 => {}
            s => {
                return Err(Error::Dimension(format!(
                    "features must be {}×T with T ≥ 1, got {s:?}",
                    self.input_dim
                )))
            }
        }
        let n = self.dual.len();
        let mut x = self.input.pointwise(tape, p, features)?;
        for (l, layer) in self.dual.iter().enumerate() {
            let a = layer.first.dilated(tape, p, x, 1 << l)?;
            let b = layer.second.dilated(tape, p, x, 1 << (n - 1 - l))?;
            let both = tape.concat_rows(&[a, b])?;
            let fused = layer.fusion.pointwise(tape, p, both)?;
            let fused = tape.relu(fused)?;
            x = tape.add(fused, x)?;
        }
        let mut stages = vec![self.output.pointwise(tape, p, x)?];
        for stage in &self.refinements {
            let prev = *stages.last().expect("prediction stage exists");
            let probs = tape.softmax(prev, 0, 1.0)?;
            let mut x = stage.input.pointwise(tape, p, probs)?;
            for (l, layer) in stage.layers.iter().enumerate() {
                let h = layer.dilated.dilated(tape, p, x, 1 << l)?;
                let h = tape.relu(h)?;
                let h = layer.pointwise.pointwise(tape, p, h)?;
                x = tape.add(x, h)?;
            }
            stages.push(stage.output.pointwise(tape, p, x)?);
        }
        Ok(stages)
    }

    /// Final-stage scores `[C × T]` for a `[T × d]` feature matrix.
    pub fn scores(&self, features: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let x = feature_input(&mut tape, features)?;
        let stages = self.forward(&mut tape, &p, x)?;
        Ok(tape.value(*stages.last().expect("at least one stage")).clone())
    }

    /// Per-frame class indices of the final stage; ties go to the lower index.
    pub fn predict(&self, features: &Tensor) -> Result<Vec<usize>> {
        Ok(argmax_columns(&self.scores(features)?))
    }
}

/// Place a `[T × d]` feature matrix on the tape as `[d × T]`.
pub fn feature_input(tape: &mut Tape, features: &Tensor) -> Result<Var> {
    if features.shape().len() != 2 {
        return Err(Error::Dimension(format!("features must be T×d, got {:?}", features.shape())));
    }
    let x = tape.constant(features.clone());
    tape.transpose(x)
}

/// Column-wise argmax of a `[C × T]` score matrix, first maximum wins.
pub fn argmax_columns(scores: &Tensor) -> Vec<usize> {
    let (c, t) = (scores.shape()[0], scores.shape()[1]);
    (0..t)
        .map(|j| {
            let mut best = 0;
            for i in 1..c {
                if scores.get2(i, j) > scores.get2(best, j) {
                    best = i;
                }
            }
            best
        })
        .collect()
}
