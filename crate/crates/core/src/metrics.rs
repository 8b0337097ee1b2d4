//! Frame accuracy, segmental edit score and segmental F1.
//!
//! Everything here is generic over the label type, so the same code scores
//! [`Label`](crate::dataset::Label) streams and plain class indices.

use std::collections::BTreeMap;
use std::fmt::Display;

use crate::error::{Error, Result};

/// Overlap thresholds reported in every score table.
pub const THRESHOLDS: [f64; 3] = [0.10, 0.25, 0.50];

pub const REPORT_HEADER: &str = "split,task,acc,edit,f1_10,f1_25,f1_50";
pub const PER_CLASS_HEADER: &str = "class,f1_10";

/// A maximal run of one class; `end` is inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment<T> {
    pub class: T,
    pub start: usize,
    pub end: usize,
}

impl<T> Segment<T> {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn iou(&self, other: &Segment<T>) -> f64 {
        let inter = (self.end.min(other.end) + 1).saturating_sub(self.start.max(other.start));
        let union = self.end.max(other.end) + 1 - self.start.min(other.start);
        inter as f64 / union as f64
    }
}

pub fn segments<T: PartialEq + Clone>(stream: &[T]) -> Result<Vec<Segment<T>>> {
    if stream.is_empty() {
        return Err(Error::Contract("cannot segment an empty stream".into()));
    }
    let mut out: Vec<Segment<T>> = Vec::new();
    for (t, c) in stream.iter().enumerate() {
        match out.last_mut() {
            Some(s) if s.class == *c => s.end = t,
            _ => out.push(Segment { class: c.clone(), start: t, end: t }),
        }
    }
    Ok(out)
}

/// Percent of frames whose ground truth is not in `ignore` that match.
pub fn frame_accuracy<T: PartialEq>(pred: &[T], gt: &[T], ignore: &[T]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension(format!("prediction has {} frames, ground truth {}", pred.len(), gt.len())));
    }
    let (mut hits, mut counted) = (0usize, 0usize);
    for (p, g) in pred.iter().zip(gt) {
        if ignore.contains(g) {
            continue;
        }
        counted += 1;
        hits += usize::from(p == g);
    }
    if counted == 0 {
        return Err(Error::UndefinedMetric("every frame is ignored".into()));
    }
    Ok(100.0 * hits as f64 / counted as f64)
}

fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit score between two segment class sequences.
pub fn sequence_edit_score<T: PartialEq>(pred: &[T], gt: &[T]) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Contract("edit score needs two nonempty sequences".into()));
    }
    let d = levenshtein(pred, gt) as f64;
    Ok((100.0 * (1.0 - d / pred.len().max(gt.len()) as f64)).max(0.0))
}

/// Segmental edit score of two frame streams.
pub fn edit_score<T: PartialEq + Clone>(pred: &[T], gt: &[T]) -> Result<f64> {
    let p: Vec<T> = segments(pred)?.into_iter().map(|s| s.class).collect();
    let g: Vec<T> = segments(gt)?.into_iter().map(|s| s.class).collect();
    sequence_edit_score(&p, &g)
}

fn check_threshold(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("overlap threshold must lie in (0, 1], got {tau}")))
    }
}

/// Greedy in-order one-to-one matching of predicted to ground-truth segments.
fn segment_f1<T: PartialEq>(pred: &[Segment<T>], gt: &[Segment<T>], tau: f64) -> f64 {
    if pred.is_empty() && gt.is_empty() {
        return 100.0;
    }
    let mut matched = vec![false; gt.len()];
    let (mut tp, mut fp) = (0usize, 0usize);
    for p in pred {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gt.iter().enumerate() {
            if g.class != p.class {
                continue;
            }
            let iou = p.iou(g);
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        match best {
            Some((j, iou)) if iou >= tau && !matched[j] => {
                matched[j] = true;
                tp += 1;
            }
            _ => fp += 1,
        }
    }
    let fn_ = matched.iter().filter(|m| !**m).count();
    100.0 * 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

pub fn f1_at<T: PartialEq + Clone>(pred: &[T], gt: &[T], tau: f64) -> Result<f64> {
    check_threshold(tau)?;
    Ok(segment_f1(&segments(pred)?, &segments(gt)?, tau))
}

/// F1 restricted to segments of `class`; 100 when the class is absent from
/// both streams.
pub fn per_class_f1<T: PartialEq + Clone>(pred: &[T], gt: &[T], tau: f64, class: &T) -> Result<f64> {
    check_threshold(tau)?;
    let keep = |s: &Vec<Segment<T>>| s.iter().filter(|x| x.class == *class).cloned().collect::<Vec<_>>();
    Ok(segment_f1(&keep(&segments(pred)?), &keep(&segments(gt)?), tau))
}

/// The five scores of one prediction, optionally with per-class F1@10.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreReport {
    pub accuracy: f64,
    pub edit: f64,
    pub f1_10: f64,
    pub f1_25: f64,
    pub f1_50: f64,
    pub per_class: BTreeMap<String, f64>,
}

impl ScoreReport {
    pub fn values(&self) -> [f64; 5] {
        [self.accuracy, self.edit, self.f1_10, self.f1_25, self.f1_50]
    }

    /// Mean of each score; per-class entries average over the reports
    /// that carry them.
    pub fn mean(reports: &[ScoreReport]) -> Result<ScoreReport> {
        if reports.is_empty() {
            return Err(Error::UndefinedMetric("no reports to average".into()));
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&ScoreReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in reports {
            for (k, v) in &r.per_class {
                let e = sums.entry(k.clone()).or_default();
                e.0 += v;
                e.1 += 1;
            }
        }
        Ok(ScoreReport {
            accuracy: avg(|r| r.accuracy),
            edit: avg(|r| r.edit),
            f1_10: avg(|r| r.f1_10),
            f1_25: avg(|r| r.f1_25),
            f1_50: avg(|r| r.f1_50),
            per_class: sums.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect(),
        })
    }

    pub fn csv_row(&self, split: &str, task: &str) -> String {
        let [a, e, f1, f2, f3] = self.values();
        format!("{split},{task},{a:.2},{e:.2},{f1:.2},{f2:.2},{f3:.2}")
    }
}

/// Score whole streams after dropping frames whose ground truth is in
/// `ignore`. Per-class F1@10 is computed for every class in `classes`.
pub fn score<T: PartialEq + Clone + Display>(pred: &[T], gt: &[T], ignore: &[T], classes: &[T]) -> Result<ScoreReport> {
    let accuracy = frame_accuracy(pred, gt, ignore)?;
    let (p, g): (Vec<T>, Vec<T>) =
        pred.iter().zip(gt).filter(|(_, g)| !ignore.contains(g)).map(|(p, g)| (p.clone(), g.clone())).unzip();
    let mut per_class = BTreeMap::new();
    for c in classes {
        per_class.insert(c.to_string(), per_class_f1(&p, &g, THRESHOLDS[0], c)?);
    }
    Ok(ScoreReport {
        accuracy,
        edit: edit_score(&p, &g)?,
        f1_10: f1_at(&p, &g, THRESHOLDS[0])?,
        f1_25: f1_at(&p, &g, THRESHOLDS[1])?,
        f1_50: f1_at(&p, &g, THRESHOLDS[2])?,
        per_class,
    })
}

/// Report CSV from `(split, task, report)` rows.
pub fn report_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str, &'a ScoreReport)>) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for (split, task, r) in rows {
        out.push_str(&r.csv_row(split, task));
        out.push('\n');
    }
    out
}

pub fn per_class_csv(report: &ScoreReport) -> String {
    let mut out = format!("{PER_CLASS_HEADER}\n");
    for (class, f1) in &report.per_class {
        out.push_str(&format!("{class},{f1:.2}\n"));
    }
    out
}
