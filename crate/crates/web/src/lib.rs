//! WebAssembly bindings for the static demo page in `www/`.

use promptseg::contrastive::{channel_loss as loss_of, Channel, SimilarityMatrix};
use promptseg::dataset::{GestureVocabulary, Label};
use promptseg::metrics::{per_class_csv, report_csv, score};
use promptseg::prompts::{build_prompts, PromptMode};
use promptseg::sampling::label_runs;
use wasm_bindgen::prelude::*;

fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty())
}

/// The four prompts of a clip given as labels like `G1 G1 G3`.
#[wasm_bindgen]
pub fn prompts(labels: &str, mode: &str) -> Result<String, String> {
    let mode: PromptMode = mode.parse().map_err(|e: promptseg::Error| e.to_string())?;
    let labels = tokens(labels)
        .map(|t| Label::parse(t).ok_or_else(|| format!("{t:?} is not a label such as G3")))
        .collect::<Result<Vec<_>, _>>()?;
    if labels.is_empty() {
        return Err("enter at least one label".into());
    }
    let set = build_prompts(&label_runs(&labels), &GestureVocabulary::jigsaws(), mode).map_err(|e| e.to_string())?;
    let mut out = vec![format!("statistical: {}", set.statistical)];
    for (o, s) in set.ordinals.iter().zip(&set.semantics) {
        out.push(format!("ordinal: {o}"));
        out.push(format!("semantic: {s}"));
    }
    out.push(format!("integrated: {}", set.integrated));
    Ok(out.join("\n"))
}

/// Channel loss of a square similarity matrix, one row per line.
#[wasm_bindgen]
pub fn channel_loss(matrix: &str, temperature: f64) -> Result<f64, String> {
    let rows: Vec<Vec<f64>> = matrix
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| tokens(l).map(|t| t.parse::<f64>().map_err(|_| format!("{t:?} is not a number"))).collect())
        .collect::<Result<_, _>>()?;
    let b = rows.len();
    if b == 0 || rows.iter().any(|r| r.len() != b) {
        return Err(format!("the matrix must be square, got {b} rows of lengths {:?}", rows.iter().map(Vec::len).collect::<Vec<_>>()));
    }
    let s = SimilarityMatrix::new(Channel::Integrated, b, rows.concat()).map_err(|e| e.to_string())?;
    loss_of(&s, temperature).map_err(|e| e.to_string())
}

/// Scores of a predicted frame stream against the ground truth, as CSV.
#[wasm_bindgen]
pub fn score_streams(pred: &str, gt: &str) -> Result<String, String> {
    let pred: Vec<&str> = tokens(pred).collect();
    let gt: Vec<&str> = tokens(gt).collect();
    let mut classes: Vec<&str> = gt.iter().chain(&pred).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let report = score(&pred, &gt, &[], &classes).map_err(|e| e.to_string())?;
    Ok(format!("{}\n{}", report_csv([("demo", "streams", &report)]), per_class_csv(&report)))
}
