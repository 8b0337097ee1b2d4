use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::contrastive::PretrainConfig;
use crate::dataset::SynthConfig;
use crate::encoders::EncoderConfig;
use crate::error::{Error, Result};
use crate::mstcn::{MsTcnConfig, TrainConfig};
use crate::prompts::PromptMode;

/// How videos are divided into train and test sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitScheme {
    /// One fold per user.
    Louo,
    /// A single fold testing on the listed video ids.
    Test(Vec<String>),
}

impl FromStr for SplitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "louo" {
            return Ok(SplitScheme::Louo);
        }
        let ids = s
            .strip_prefix("test:")
            .ok_or_else(|| Error::Config(format!("split must be `louo` or `test:<id>,<id>...`, got {s:?}")))?;
        let ids: Vec<String> = ids.split(',').map(str::trim).filter(|i| !i.is_empty()).map(String::from).collect();
        if ids.is_empty() {
            return Err(Error::Config("split `test:` lists no videos".into()));
        }
        Ok(SplitScheme::Test(ids))
    }
}

impl std::fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitScheme::Louo => f.write_str("louo"),
            SplitScheme::Test(ids) => write!(f, "test:{}", ids.join(",")),
        }
    }
}

/// Where frame-wise features come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    /// The frozen image encoder of a checkpoint.
    Checkpoint,
    /// One-hot encodings of the true labels.
    Oracle,
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "checkpoint" => Ok(FeatureSource::Checkpoint),
            "oracle" => Ok(FeatureSource::Oracle),
            _ => Err(Error::Config(format!("encoder must be `checkpoint` or `oracle`, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureSource::Checkpoint => "checkpoint",
            FeatureSource::Oracle => "oracle",
        })
    }
}

/// Every knob of an experiment, read from `key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub task: String,
    pub synth: SynthConfig,
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub strides: Vec<usize>,
    pub hop: usize,
    pub encoder: EncoderConfig,
    pub pretrain: PretrainConfig,
    /// `None` allows every gesture.
    pub allowed_gestures: Option<BTreeSet<u16>>,
    pub split: SplitScheme,
    /// Pre-train on every video instead of only the training videos.
    pub pretrain_on_all: bool,
    /// Scale the epoch count so a filtered clip set gets as many clip
    /// visits as the unfiltered set would.
    pub match_unfiltered_budget: bool,
    pub feature_source: FeatureSource,
    pub recognizer: TrainConfig,
    /// `name=path` pairs of evaluation directories for `report`.
    pub runs: Vec<(String, PathBuf)>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        Self {
            seed: None,
            task: "synthetic".into(),
            corpus: None,
            checkpoint: None,
            features: None,
            strides: vec![4, 8, 16],
            hop: 16,
            encoder: EncoderConfig { height: synth.height, width: synth.width, ..EncoderConfig::default() },
            pretrain: PretrainConfig::default(),
            allowed_gestures: None,
            split: SplitScheme::Test((17..=20).map(|i| format!("video{i:03}")).collect()),
            pretrain_on_all: false,
            match_unfiltered_budget: false,
            feature_source: FeatureSource::Checkpoint,
            recognizer: TrainConfig::default(),
            runs: Vec::new(),
            synth,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("bad value {value:?} for `{key}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v)).collect()
}

/// `all`, or comma-separated gesture numbers and `a-b` ranges.
fn parse_gestures(value: &str) -> Result<Option<BTreeSet<u16>>> {
    if value.trim() == "all" {
        return Ok(None);
    }
    let mut out = BTreeSet::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let part = part.trim_start_matches(['G', 'g']);
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u16, u16) = (parse("allowed_gestures", a)?, parse("allowed_gestures", b.trim_start_matches(['G', 'g']))?);
                if a > b {
                    return Err(Error::Config(format!("empty gesture range {a}-{b}")));
                }
                out.extend(a..=b);
            }
            None => {
                out.insert(parse("allowed_gestures", part)?);
            }
        }
    }
    Ok(Some(out))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let s = &mut self.synth;
        let r = &mut self.recognizer;
        match key {
            "seed" => self.seed = if value.is_empty() { None } else { Some(parse(key, value)?) },
            "task" => {
                if value.is_empty() || value.contains(',') || value.contains('\n') {
                    return Err(Error::Config(format!("task name {value:?} must be nonempty without commas")));
                }
                self.task = value.to_string();
            }
            "data_seed" => s.seed = parse(key, value)?,
            "videos" => s.n_videos = parse(key, value)?,
            "gestures" => s.n_gestures = parse(key, value)?,
            "frames" => s.frames_per_video = parse(key, value)?,
            "height" => {
                s.height = parse(key, value)?;
                self.encoder.height = s.height;
            }
            "width" => {
                s.width = parse(key, value)?;
                self.encoder.width = s.width;
            }
            "pattern_band" => s.pattern_band = parse(key, value)?,
            "noise" => s.noise = parse(key, value)?,
            "scene" => s.scene = parse(key, value)?,
            "scene_memory" => s.scene_memory = parse(key, value)?,
            "users" => s.n_users = parse(key, value)?,
            "min_segment" => s.min_segment = parse(key, value)?,
            "max_segment" => s.max_segment = parse(key, value)?,
            "corpus" => self.corpus = opt_path(value),
            "checkpoint" => self.checkpoint = opt_path(value),
            "features" => self.features = opt_path(value),
            "strides" => self.strides = parse_list(key, value)?,
            "hop" => self.hop = parse(key, value)?,
            "dim" => self.encoder.dim = parse(key, value)?,
            "hidden" => self.encoder.hidden = parse(key, value)?,
            "heads" => self.encoder.heads = parse(key, value)?,
            "temperature" => self.pretrain.temperature = parse(key, value)?,
            "pretrain_epochs" => self.pretrain.epochs = parse(key, value)?,
            "pretrain_lr" => self.pretrain.learning_rate = parse(key, value)?,
            "batch_size" => self.pretrain.batch_size = parse(key, value)?,
            "allowed_gestures" => self.allowed_gestures = parse_gestures(value)?,
            "prompt_mode" => {
                self.pretrain.prompt_mode = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?
            }
            "split" => self.split = value.parse()?,
            "pretrain_videos" => {
                self.pretrain_on_all = match value {
                    "train" => false,
                    "all" => true,
                    _ => return Err(Error::Config(format!("pretrain_videos must be `train` or `all`, got {value:?}"))),
                }
            }
            "pretrain_budget" => {
                self.match_unfiltered_budget = match value {
                    "epochs" => false,
                    "unfiltered" => true,
                    _ => {
                        return Err(Error::Config(format!(
                            "pretrain_budget must be `epochs` or `unfiltered`, got {value:?}"
                        )))
                    }
                }
            }
            "encoder" => self.feature_source = value.parse()?,
            "tcn_epochs" => r.epochs = parse(key, value)?,
            "tcn_lr" => r.learning_rate = parse(key, value)?,
            "tcn_channels" => r.model.channels = parse(key, value)?,
            "tcn_generation_layers" => r.model.generation_layers = parse(key, value)?,
            "tcn_refinement_stages" => r.model.refinement_stages = parse(key, value)?,
            "tcn_refinement_layers" => r.model.refinement_layers = parse(key, value)?,
            "smoothing" => r.smoothing = parse(key, value)?,
            "smoothing_clip" => r.smoothing_clip = parse(key, value)?,
            "runs" => {
                self.runs = value
                    .split(';')
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                    .map(|p| {
                        let (n, path) = p
                            .split_once('=')
                            .ok_or_else(|| Error::Config(format!("run {p:?} is not `name=path`")))?;
                        Ok((n.trim().to_string(), PathBuf::from(path.trim())))
                    })
                    .collect::<Result<_>>()?;
            }
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Check every field before any stage runs.
    pub fn validate(&self) -> Result<()> {
        self.synth.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.pretrain.validate()?;
        if self.strides.is_empty() || self.strides.contains(&0) || self.hop == 0 {
            return Err(Error::Config("strides and hop must be positive".into()));
        }
        let e = &self.encoder;
        if e.dim == 0 || e.hidden == 0 || e.heads == 0 || e.dim % e.heads != 0 {
            return Err(Error::Config(format!("dim {} must be a positive multiple of heads {}", e.dim, e.heads)));
        }
        if matches!(&self.allowed_gestures, Some(a) if a.is_empty()) {
            return Err(Error::Config("allowed_gestures is empty".into()));
        }
        let r = &self.recognizer;
        if r.model.channels == 0 || r.model.generation_layers == 0 {
            return Err(Error::Config("recognizer needs at least one channel and one layer".into()));
        }
        if !(r.learning_rate >= 0.0 && r.learning_rate.is_finite()) {
            return Err(Error::Config(format!("tcn_lr must be finite and >= 0, got {}", r.learning_rate)));
        }
        if !(r.smoothing >= 0.0 && r.smoothing.is_finite() && r.smoothing_clip > 0.0) {
            return Err(Error::Config("smoothing must be >= 0 and smoothing_clip > 0".into()));
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("this stage needs a seed (`--seed N`)".into()))
    }

    pub fn corpus_dir(&self, out: &Path) -> PathBuf {
        self.corpus.clone().unwrap_or_else(|| out.join("corpus"))
    }

    pub fn checkpoint_dir(&self, out: &Path) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| out.join("checkpoint"))
    }

    pub fn features_dir(&self, out: &Path) -> PathBuf {
        self.features.clone().unwrap_or_else(|| out.join("features"))
    }

    /// Resolved configuration as sorted `key = value` lines.
    pub fn to_text(&self) -> String {
        let s = &self.synth;
        let r = &self.recognizer;
        let mut pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.map(|v| v.to_string()).unwrap_or_default()),
            ("task", self.task.clone()),
            ("data_seed", s.seed.to_string()),
            ("videos", s.n_videos.to_string()),
            ("gestures", s.n_gestures.to_string()),
            ("frames", s.frames_per_video.to_string()),
            ("height", s.height.to_string()),
            ("width", s.width.to_string()),
            ("pattern_band", s.pattern_band.to_string()),
            ("noise", s.noise.to_string()),
            ("scene", s.scene.to_string()),
            ("scene_memory", s.scene_memory.to_string()),
            ("users", s.n_users.to_string()),
            ("min_segment", s.min_segment.to_string()),
            ("max_segment", s.max_segment.to_string()),
            ("corpus", show_path(&self.corpus)),
            ("checkpoint", show_path(&self.checkpoint)),
            ("features", show_path(&self.features)),
            ("strides", join(&self.strides)),
            ("hop", self.hop.to_string()),
            ("dim", self.encoder.dim.to_string()),
            ("hidden", self.encoder.hidden.to_string()),
            ("heads", self.encoder.heads.to_string()),
            ("temperature", self.pretrain.temperature.to_string()),
            ("pretrain_epochs", self.pretrain.epochs.to_string()),
            ("pretrain_lr", self.pretrain.learning_rate.to_string()),
            ("batch_size", self.pretrain.batch_size.to_string()),
            (
                "allowed_gestures",
                match &self.allowed_gestures {
                    None => "all".into(),
                    Some(a) => join(&a.iter().copied().collect::<Vec<_>>()),
                },
            ),
            ("prompt_mode", self.pretrain.prompt_mode.to_string()),
            ("split", self.split.to_string()),
            ("pretrain_budget", if self.match_unfiltered_budget { "unfiltered" } else { "epochs" }.into()),
            ("pretrain_videos", if self.pretrain_on_all { "all" } else { "train" }.into()),
            ("encoder", self.feature_source.to_string()),
            ("tcn_epochs", r.epochs.to_string()),
            ("tcn_lr", r.learning_rate.to_string()),
            ("tcn_channels", r.model.channels.to_string()),
            ("tcn_generation_layers", r.model.generation_layers.to_string()),
            ("tcn_refinement_stages", r.model.refinement_stages.to_string()),
            ("tcn_refinement_layers", r.model.refinement_layers.to_string()),
            ("smoothing", r.smoothing.to_string()),
            ("smoothing_clip", r.smoothing_clip.to_string()),
            (
                "runs",
                self.runs.iter().map(|(n, p)| format!("{n}={}", p.display())).collect::<Vec<_>>().join(";"),
            ),
        ];
        pairs.sort_by(|a, b| a.0.cmp(b.0));
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Settings used by the recognizer, with the experiment seed.
    pub fn recognizer_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.recognizer }
    }

    pub fn recognizer_model(&self) -> MsTcnConfig {
        self.recognizer.model
    }

    pub fn prompt_mode(&self) -> PromptMode {
        self.pretrain.prompt_mode
    }
}
