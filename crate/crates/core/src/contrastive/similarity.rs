use std::fmt;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Which prompt channel a similarity matrix compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Per-run clip embeddings vs semantic prompts of run `k` (1-based).
    Semantic(usize),
    /// Pooled clip embedding vs integrated prompt.
    Integrated,
    /// Pooled count embedding vs statistical prompt.
    Statistical,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Semantic(k) => write!(f, "sem{k}"),
            Channel::Integrated => f.write_str("int"),
            Channel::Statistical => f.write_str("stat"),
        }
    }
}

/// `B × B` cosine similarities between two batches of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub channel: Channel,
    size: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(channel: Channel, size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(Error::Dimension(format!("{} values do not form a {size}×{size} matrix", values.len())));
        }
        Ok(Self { channel, size, values })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `z_x · z_y / (‖z_x‖ ‖z_y‖)`.
pub fn cosine_similarity(zx: &[f64], zy: &[f64]) -> Result<f64> {
    if zx.len() != zy.len() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", zx.len(), zy.len())));
    }
    let (nx, ny) = (norm(zx), norm(zy));
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = zx.iter().zip(zy).map(|(a, b)| a * b).sum();
    Ok((dot / (nx * ny)).clamp(-1.0, 1.0))
}

/// Entry `(i, j)` is the cosine similarity of row `i` of `zx` and row `j` of `zy`.
pub fn batch_similarity(zx: &Tensor, zy: &Tensor, channel: Channel) -> Result<SimilarityMatrix> {
    if zx.shape().len() != 2 || zx.shape() != zy.shape() {
        return Err(Error::Dimension(format!("batches of shape {:?} and {:?}", zx.shape(), zy.shape())));
    }
    let b = zx.rows();
    let mut values = Vec::with_capacity(b * b);
    for i in 0..b {
        for j in 0..b {
            values.push(cosine_similarity(zx.row(i), zy.row(j))?);
        }
    }
    SimilarityMatrix::new(channel, b, values)
}

/// Differentiable similarity matrix: `normalize(zx) · normalize(zy)ᵀ`.
pub fn similarity_var(tape: &mut Tape, zx: Var, zy: Var) -> Result<Var> {
    if tape.shape(zx) != tape.shape(zy) || tape.shape(zx).len() != 2 {
        return Err(Error::Dimension(format!(
            "batches of shape {:?} and {:?}",
            tape.shape(zx),
            tape.shape(zy)
        )));
    }
    let nx = tape.normalize_rows(zx)?;
    let ny = tape.normalize_rows(zy)?;
    let nyt = tape.transpose(ny)?;
    tape.matmul(nx, nyt)
}

/// `D[A‖B] = Σ_ij A_ij log(A_ij / B_ij)` over square matrices, with
/// `0 · log 0 = 0`.
pub fn generalized_kl(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("matrices of {} and {} entries", a.len(), b.len())));
    }
    let mut total = 0.0;
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        if x < 0.0 || y < 0.0 {
            return Err(Error::Support(format!("negative entry at flat index {i}")));
        }
        if x == 0.0 {
            continue;
        }
        if y == 0.0 {
            return Err(Error::Support(format!("A has mass where B is zero at flat index {i}")));
        }
        total += x * (x / y).ln();
    }
    Ok(total)
}

/// Row-wise (`rows = true`) or column-wise softmax of `S / τ`.
pub fn softmax_matrix(s: &SimilarityMatrix, temperature: f64, rows: bool) -> Vec<f64> {
    let n = s.size();
    let at = |line: usize, k: usize| if rows { line * n + k } else { k * n + line };
    let mut out = vec![0.0; n * n];
    for line in 0..n {
        let max = (0..n).map(|k| s.values()[at(line, k)]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..n).map(|k| ((s.values()[at(line, k)] - max) / temperature).exp()).sum();
        for k in 0..n {
            out[at(line, k)] = ((s.values()[at(line, k)] - max) / temperature).exp() / z;
        }
    }
    out
}

fn identity(n: usize) -> Vec<f64> {
    let mut eye = vec![0.0; n * n];
    for i in 0..n {
        eye[i * n + i] = 1.0;
    }
    eye
}

/// `½ (D[I ‖ rowsoftmax(S/τ)] + D[I ‖ colsoftmax(S/τ)]) / B`.
pub fn channel_loss(s: &SimilarityMatrix, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::Parameter(format!("temperature must be > 0, got {temperature}")));
    }
    let n = s.size();
    if n == 0 {
        return Err(Error::Dimension("empty similarity matrix".into()));
    }
    let eye = identity(n);
    let text_wise = generalized_kl(&eye, &softmax_matrix(s, temperature, true))?;
    let clip_wise = generalized_kl(&eye, &softmax_matrix(s, temperature, false))?;
    Ok(0.5 * (text_wise + clip_wise) / n as f64)
}

/// Differentiable [`channel_loss`] of a `[B × B]` similarity variable.
pub fn channel_loss_var(tape: &mut Tape, s: Var, temperature: f64) -> Result<Var> {
    let &[n, m] = tape.shape(s) else {
        return Err(Error::Dimension(format!("similarity must be a matrix, got {:?}", tape.shape(s))));
    };
    if n != m || n == 0 {
        return Err(Error::Dimension(format!("similarity matrix is {n}×{m}")));
    }
    if !(temperature > 0.0) {
        return Err(Error::Parameter(format!("temperature must be > 0, got {temperature}")));
    }
    let logits = tape.scale(s, 1.0 / temperature)?;
    let diagonal: Vec<usize> = (0..n).map(|i| i * n + i).collect();
    let row = tape.log_softmax(logits, 1)?;
    let row_diag = tape.gather(row, diagonal.clone())?;
    let col = tape.log_softmax(logits, 0)?;
    let col_diag = tape.gather(col, diagonal)?;
    let both = tape.add(row_diag, col_diag)?;
    let total = tape.sum(both)?;
    tape.scale(total, -0.5 / n as f64)
}
