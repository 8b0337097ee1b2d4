use std::collections::BTreeSet;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::contrastive::{prepare_samples, pretrain, EpochLoss};
use crate::dataset::io::{prediction_text, read_corpus, read_features, read_text, write_bytes, write_corpus, write_features};
use crate::dataset::{generate_synthetic_corpus, louo_splits, zero_shot_filter, Fold, GestureVocabulary, Label, LabelStream, Video};
use crate::encoders::{checkpoint, Encoders};
use crate::error::{Error, Result};
use crate::metrics::{per_class_csv, report_csv, score, ScoreReport};
use crate::mstcn::{train_recognizer, Sequence};
use crate::sampling::extract_clips;

use super::config::{ExperimentConfig, FeatureSource, SplitScheme};

const CONFIG_FILE: &str = "config.txt";
const TRAINING_FILE: &str = "training.txt";
const SOURCE_FILE: &str = "source.txt";
pub const SCORES_FILE: &str = "scores.csv";
pub const PER_CLASS_FILE: &str = "per_class.csv";
pub const LOSS_FILE: &str = "loss.log";
pub const REPORT_FILE: &str = "report.csv";
/// Split name of the row averaging every fold.
pub const MEAN_SPLIT: &str = "mean";

fn write_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    write_bytes(&dir.join(CONFIG_FILE), cfg.to_text().as_bytes())
}

/// Generate the synthetic corpus into the corpus directory.
pub fn run_synth(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Video>> {
    cfg.validate()?;
    let videos = generate_synthetic_corpus(&cfg.synth).map_err(|e| Error::Config(e.to_string()))?;
    let vocab = GestureVocabulary::jigsaws_prefix(cfg.synth.n_gestures).map_err(|e| Error::Config(e.to_string()))?;
    let dir = cfg.corpus_dir(out);
    write_corpus(&dir, &videos, &vocab, &[])?;
    write_config(cfg, &dir)?;
    Ok(videos)
}

/// Folds of the configured split over `videos`.
pub fn folds(cfg: &ExperimentConfig, videos: &[Video]) -> Result<Vec<Fold>> {
    match &cfg.split {
        SplitScheme::Louo => louo_splits(videos, |v| v.user.clone()),
        SplitScheme::Test(ids) => {
            let mut test = Vec::with_capacity(ids.len());
            for id in ids {
                let i = videos
                    .iter()
                    .position(|v| &v.id == id)
                    .ok_or_else(|| Error::Split(format!("test video {id} is not in the corpus")))?;
                test.push(i);
            }
            test.sort_unstable();
            test.dedup();
            if test.len() == videos.len() {
                return Err(Error::Split("every video is a test video".into()));
            }
            Ok(vec![crate::dataset::explicit_holdout(videos.len(), &test, "heldout")])
        }
    }
}

fn load_corpus(cfg: &ExperimentConfig, out: &Path) -> Result<(Vec<Video>, GestureVocabulary)> {
    let (videos, vocab) = read_corpus(&cfg.corpus_dir(out))?;
    if videos.is_empty() {
        return Err(Error::Data("the corpus lists no videos".into()));
    }
    Ok((videos, vocab))
}

/// Contrastive pre-training; writes checkpoint, loss log and config.
pub fn run_pretrain(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<EpochLoss>> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let (videos, vocab) = load_corpus(cfg, out)?;
    let chosen: Vec<usize> = match (&cfg.split, cfg.pretrain_on_all) {
        (_, true) => (0..videos.len()).collect(),
        (SplitScheme::Test(_), false) => folds(cfg, &videos)?.remove(0).train,
        // one checkpoint serves every fold, so it cannot exclude each fold's test user
        (SplitScheme::Louo, false) => {
            return Err(Error::Config(
                "a leave-one-user-out split has no single training set; set `pretrain_videos = all`".into(),
            ))
        }
    };

    let allowed: BTreeSet<u16> = match &cfg.allowed_gestures {
        None => vocab.gestures().collect(),
        Some(a) => a.iter().copied().filter(|g| vocab.contains(Label::Gesture(*g))).collect(),
    };
    if allowed.is_empty() {
        return Err(Error::Config("allowed_gestures excludes every gesture of the corpus".into()));
    }
    let mut clips = Vec::new();
    for &i in &chosen {
        clips.extend(extract_clips(&videos[i], &cfg.strides, cfg.hop)?);
    }
    let unfiltered = clips.len();
    let clips = zero_shot_filter(&clips, &allowed);
    if clips.is_empty() {
        return Err(Error::Config("no clip survives the allowed-gesture filter".into()));
    }
    let kept = clips.len();
    let epochs = if cfg.match_unfiltered_budget {
        (cfg.pretrain.epochs * unfiltered + kept / 2) / kept
    } else {
        cfg.pretrain.epochs
    };

    let first = &videos[0];
    let enc_config = crate::encoders::EncoderConfig { height: first.height, width: first.width, ..cfg.encoder };
    let mut enc = Encoders::init(enc_config, &vocab, seed)?;
    let log = if epochs == 0 {
        Vec::new()
    } else {
        let samples = prepare_samples(clips, &vocab, cfg.pretrain.prompt_mode)?;
        let pcfg = crate::contrastive::PretrainConfig { epochs, seed: seed ^ 0x70726574, ..cfg.pretrain };
        pretrain(&mut enc, &samples, &pcfg)?
    };

    let dir = cfg.checkpoint_dir(out);
    checkpoint::save(&enc, &dir)?;
    let lines: String = log.iter().map(|l| format!("{l}\n")).collect();
    write_bytes(&dir.join(LOSS_FILE), lines.as_bytes())?;
    let training = format!(
        "pretrain_epochs {epochs}\nclips {}\nunfiltered_clips {unfiltered}\nallowed_gestures {}\nprompt_mode {}\n",
        kept,
        allowed.iter().map(u16::to_string).collect::<Vec<_>>().join(","),
        cfg.pretrain.prompt_mode
    );
    write_bytes(&dir.join(TRAINING_FILE), training.as_bytes())?;
    write_config(cfg, &dir)?;
    Ok(log)
}

fn one_hot(labels: &LabelStream, classes: &[Label]) -> Result<Tensor> {
    let c = classes.len();
    let mut data = vec![0.0; labels.len() * c];
    for (t, l) in labels.labels().iter().enumerate() {
        let k = classes
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| Error::Data(format!("label {l} is not in the vocabulary")))?;
        data[t * c + k] = 1.0;
    }
    Tensor::matrix(labels.len(), c, data)
}

/// Whether a checkpoint directory holds an untrained initialization.
fn untrained(dir: &Path) -> bool {
    read_text(&dir.join(TRAINING_FILE)).map_or(false, |t| t.lines().any(|l| l == "pretrain_epochs 0"))
}

/// Frame-wise features of every video; returns the number written.
pub fn run_extract(cfg: &ExperimentConfig, out: &Path) -> Result<usize> {
    cfg.validate()?;
    let (videos, vocab) = load_corpus(cfg, out)?;
    let dir = cfg.features_dir(out);
    let source = match cfg.feature_source {
        FeatureSource::Oracle => {
            let classes = vocab.classes();
            for v in &videos {
                write_features(&dir.join(format!("{}.bin", v.id)), &one_hot(v.labels(), &classes)?)?;
            }
            "oracle one-hot labels\n".to_string()
        }
        FeatureSource::Checkpoint => {
            let ck = cfg.checkpoint_dir(out);
            let enc = checkpoint::load(&ck)?;
            for v in &videos {
                if (v.height, v.width) != (enc.image.height, enc.image.width) {
                    return Err(Error::Dimension(format!(
                        "video {} has {}×{} frames, the checkpoint expects {}×{}",
                        v.id, v.height, v.width, enc.image.height, enc.image.width
                    )));
                }
                write_features(&dir.join(format!("{}.bin", v.id)), &enc.image.embed(v.frames())?)?;
            }
            if untrained(&ck) {
                "checkpoint untrained random-init\n".to_string()
            } else {
                "checkpoint pretrained\n".to_string()
            }
        }
    };
    write_bytes(&dir.join(SOURCE_FILE), source.as_bytes())?;
    write_config(cfg, &dir)?;
    Ok(videos.len())
}

/// Scores of one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Task label written to the CSV.
    pub task: String,
    pub folds: Vec<(String, ScoreReport)>,
    pub mean: ScoreReport,
}

impl Evaluation {
    pub fn csv(&self) -> String {
        let rows = self
            .folds
            .iter()
            .map(|(n, r)| (n.as_str(), self.task.as_str(), r))
            .chain(std::iter::once((MEAN_SPLIT, self.task.as_str(), &self.mean)));
        report_csv(rows)
    }
}

/// Train the recognizer on every fold and score the held-out videos.
pub fn run_train_eval(cfg: &ExperimentConfig, out: &Path) -> Result<Evaluation> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let (videos, vocab) = load_corpus(cfg, out)?;
    let classes = vocab.classes();
    let fdir = cfg.features_dir(out);
    let mut data = Vec::with_capacity(videos.len());
    for v in &videos {
        let features = read_features(&fdir.join(format!("{}.bin", v.id)))?;
        if features.rows() != v.len() {
            return Err(Error::Dimension(format!(
                "video {}: {} feature rows for {} frames",
                v.id,
                features.rows(),
                v.len()
            )));
        }
        let labels = v
            .labels()
            .labels()
            .iter()
            .map(|l| classes.iter().position(|c| c == l).ok_or_else(|| Error::Data(format!("unknown label {l}"))))
            .collect::<Result<Vec<_>>>()?;
        data.push(Sequence { features, labels });
    }
    let source = read_text(&fdir.join(SOURCE_FILE)).unwrap_or_default();
    let task = if source.contains("random-init") { format!("{}-random-init", cfg.task) } else { cfg.task.clone() };

    let edir = out.join("eval");
    let ignore = [Label::Begin, Label::End];
    let gestures: Vec<Label> = vocab.gestures().map(Label::Gesture).collect();
    let mut fold_reports = Vec::new();
    for fold in folds(cfg, &videos)? {
        if fold.test.is_empty() || fold.train.is_empty() {
            return Err(Error::Split(format!("fold {} has no train or no test videos", fold.name)));
        }
        let train: Vec<Sequence> = fold.train.iter().map(|&i| data[i].clone()).collect();
        let (model, _) = train_recognizer(&train, classes.len(), &cfg.recognizer_config(seed))?;
        let mut reports = Vec::with_capacity(fold.test.len());
        for &i in &fold.test {
            let pred: Vec<Label> = model.predict(&data[i].features)?.into_iter().map(|k| classes[k]).collect();
            let gt = videos[i].labels().labels();
            reports.push(score(&pred, gt, &ignore, &gestures)?);
            let path = edir.join("predictions").join(&fold.name).join(format!("{}.txt", videos[i].id));
            write_bytes(&path, prediction_text(&LabelStream::new(pred)).as_bytes())?;
        }
        fold_reports.push((fold.name.clone(), ScoreReport::mean(&reports)?));
    }
    let mean = ScoreReport::mean(&fold_reports.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>())?;
    let eval = Evaluation { task, folds: fold_reports, mean };
    write_bytes(&edir.join(SCORES_FILE), eval.csv().as_bytes())?;
    write_bytes(&edir.join(PER_CLASS_FILE), per_class_csv(&eval.mean).as_bytes())?;
    write_config(cfg, &edir)?;
    Ok(eval)
}

/// Collect the mean rows of several evaluation directories into one CSV.
pub fn run_report(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    cfg.validate()?;
    if cfg.runs.is_empty() {
        return Err(Error::Config("report needs `runs = name=path;...`".into()));
    }
    let mut csv = format!("{}\n", crate::metrics::REPORT_HEADER);
    for (name, dir) in &cfg.runs {
        let text = read_text(&dir.join(SCORES_FILE))?;
        let mut lines = text.lines();
        if lines.next() != Some(crate::metrics::REPORT_HEADER) {
            return Err(Error::Data(format!("{} has an unexpected header", dir.join(SCORES_FILE).display())));
        }
        let row = lines
            .find(|l| l.split(',').next() == Some(MEAN_SPLIT))
            .ok_or_else(|| Error::Data(format!("{} has no `{MEAN_SPLIT}` row", dir.display())))?;
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Data(format!("malformed score row {row:?}")));
        }
        csv.push_str(&format!("{MEAN_SPLIT},{name},{}\n", fields[2..].join(",")));
    }
    write_bytes(&out.join(REPORT_FILE), csv.as_bytes())?;
    write_config(cfg, out)?;
    Ok(csv)
}
