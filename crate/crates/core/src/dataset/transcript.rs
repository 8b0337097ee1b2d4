use crate::error::{Error, Result};

use super::vocab::{GestureVocabulary, Label};

/// One annotated interval, `end` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Record {
    pub start: usize,
    pub end: usize,
    pub gesture: u16,
}

/// Validated gesture annotation of one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub video_id: String,
    pub user_id: String,
    pub frame_count: usize,
    records: Vec<Record>,
}

/// Fully labeled frame sequence of one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelStream(Vec<Label>);

impl LabelStream {
    pub fn new(labels: Vec<Label>) -> Self {
        Self(labels)
    }

    pub fn labels(&self) -> &[Label] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Transcript records for the gesture runs; placeholder runs become gaps.
    pub fn to_records(&self) -> Vec<Record> {
        let mut out: Vec<Record> = Vec::new();
        for (t, label) in self.0.iter().enumerate() {
            let Label::Gesture(g) = *label else { continue };
            match out.last_mut() {
                Some(r) if r.gesture == g && r.end + 1 == t => r.end = t,
                _ => out.push(Record { start: t, end: t, gesture: g }),
            }
        }
        out
    }
}

impl Transcript {
    /// Parse `start end G<k>` lines, sort them by start and validate them
    /// against `frame_count`.
    pub fn parse(video_id: &str, text: &str, frame_count: usize, vocab: &GestureVocabulary) -> Result<Self> {
        let mut lines = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let [start, end, gesture] = fields[..] else {
                return Err(err(format!("expected `start end G<k>`, got {line:?}")));
            };
            let start: usize = start.parse().map_err(|_| err(format!("bad start frame {start:?}")))?;
            let end: usize = end.parse().map_err(|_| err(format!("bad end frame {end:?}")))?;
            let gesture = match Label::parse(gesture) {
                Some(Label::Gesture(k)) if vocab.contains(Label::Gesture(k)) => k,
                _ => return Err(err(format!("unknown gesture index {gesture:?}"))),
            };
            lines.push((line_no, Record { start, end, gesture }));
        }
        lines.sort_by_key(|(_, r)| r.start);
        Self::validate(&lines, frame_count)?;
        Ok(Self {
            video_id: video_id.to_string(),
            user_id: String::new(),
            frame_count,
            records: lines.into_iter().map(|(_, r)| r).collect(),
        })
    }

    fn validate(lines: &[(usize, Record)], frame_count: usize) -> Result<()> {
        let mut prev: Option<&Record> = None;
        for (line, r) in lines {
            let err = |msg: String| Error::Parse { line: *line, msg };
            if r.start > r.end {
                return Err(err(format!("inverted interval {}..{}", r.start, r.end)));
            }
            if r.end >= frame_count {
                return Err(err(format!("end frame {} beyond frame count {frame_count}", r.end)));
            }
            if let Some(p) = prev {
                if r.start <= p.end {
                    return Err(err(format!("interval {}..{} overlaps {}..{}", r.start, r.end, p.start, p.end)));
                }
                if r.start > p.end + 1 {
                    return Err(err(format!("interior gap between frames {} and {}", p.end, r.start)));
                }
            }
            prev = Some(r);
        }
        Ok(())
    }

    /// Build from records already known to be valid (e.g. a label stream).
    pub fn from_records(video_id: &str, user_id: &str, frame_count: usize, records: Vec<Record>) -> Result<Self> {
        let lines: Vec<_> = records.iter().enumerate().map(|(i, r)| (i + 1, *r)).collect();
        Self::validate(&lines, frame_count)?;
        Ok(Self { video_id: video_id.into(), user_id: user_id.into(), frame_count, records })
    }

    pub fn with_user(mut self, user_id: impl Into<String>) -> Self {
        self.user_id = user_id.into();
        self
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// Transcript file text: one `start end G<k>` line per record.
    pub fn to_text(&self) -> String {
        self.records.iter().map(|r| format!("{} {} G{}\n", r.start, r.end, r.gesture)).collect()
    }

    /// Per-frame labels; head gap → `Begin`, tail gap → `End`.
    pub fn to_label_stream(&self) -> LabelStream {
        let Some(first) = self.records.first() else {
            // nothing annotated: the whole video is preparation
            return LabelStream(vec![Label::Begin; self.frame_count]);
        };
        let mut labels = vec![Label::Begin; first.start];
        for r in &self.records {
            labels.extend(std::iter::repeat(Label::Gesture(r.gesture)).take(r.end - r.start + 1));
        }
        labels.resize(self.frame_count, Label::End);
        LabelStream(labels)
    }
}
