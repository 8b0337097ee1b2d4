//! Fixed-length sub-video windows at several temporal strides.

use crate::dataset::{Label, Video};
use crate::error::{Error, Result};

/// Frames per sub-video.
pub const CLIP_LEN: usize = 16;

/// Strides used for the suturing/knot-tying videos.
pub const JIGSAWS_STRIDES: [usize; 3] = [4, 8, 16];
/// Strides used for the prostatectomy videos.
pub const RARP_STRIDES: [usize; 3] = [6, 15, 30];

/// One 16-frame window of a video.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameClip {
    pub video_id: String,
    pub start: usize,
    pub stride: usize,
    pub height: usize,
    pub width: usize,
    /// `CLIP_LEN` frames, row-major.
    pub frames: Vec<f64>,
    pub labels: Vec<Label>,
}

impl FrameClip {
    pub fn frame(&self, i: usize) -> &[f64] {
        let p = self.height * self.width;
        &self.frames[i * p..(i + 1) * p]
    }

    /// Source-video frame index of clip position `i`.
    pub fn source_index(&self, i: usize) -> usize {
        self.start + i * self.stride
    }
}

/// A maximal run of one label inside a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelRun {
    pub label: Label,
    /// 1-based position of the run in the clip.
    pub ordinal: usize,
    pub first: usize,
    pub last: usize,
}

/// Windows `{t, t+s, …, t+15s}` for `t = 0, hop, 2·hop, …` while
/// `t + 15s < len`, for every stride `s` in ascending order.
pub fn extract_clips(video: &Video, strides: &[usize], hop: usize) -> Result<Vec<FrameClip>> {
    if strides.is_empty() || strides.contains(&0) {
        return Err(Error::Parameter(format!("strides must be nonempty and positive, got {strides:?}")));
    }
    if hop == 0 {
        return Err(Error::Parameter("hop must be at least 1".into()));
    }
    let mut sorted = strides.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut clips = Vec::new();
    let labels = video.labels().labels();
    for &s in &sorted {
        let span = (CLIP_LEN - 1) * s;
        let mut t = 0;
        while t + span < video.len() {
            let idx = (0..CLIP_LEN).map(|i| t + i * s);
            let mut frames = Vec::with_capacity(CLIP_LEN * video.pixels());
            for f in idx.clone() {
                frames.extend_from_slice(video.frame(f));
            }
            clips.push(FrameClip {
                video_id: video.id.clone(),
                start: t,
                stride: s,
                height: video.height,
                width: video.width,
                frames,
                labels: idx.map(|f| labels[f]).collect(),
            });
            t += hop;
        }
    }
    Ok(clips)
}

/// Maximal runs of equal labels, ordinals from 1.
pub fn label_runs(labels: &[Label]) -> Vec<LabelRun> {
    let mut runs: Vec<LabelRun> = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.label == label => r.last = i,
            _ => {
                let ordinal = runs.len() + 1;
                runs.push(LabelRun { label, ordinal, first: i, last: i });
            }
        }
    }
    runs
}
