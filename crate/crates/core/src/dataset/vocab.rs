use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Description used for unlabeled frames before the first annotated gesture.
pub const BEGIN_DESCRIPTION: &str = "Waiting and preparing for the surgery";
/// Description used for unlabeled frames after the last annotated gesture.
pub const END_DESCRIPTION: &str = "Finishing the surgery";

/// Per-frame label: an annotated gesture or one of the two placeholders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Begin,
    Gesture(u16),
    End,
}

impl Label {
    pub fn is_placeholder(self) -> bool {
        !matches!(self, Label::Gesture(_))
    }

    pub fn gesture(self) -> Option<u16> {
        match self {
            Label::Gesture(k) => Some(k),
            _ => None,
        }
    }

    /// Parse `G<k>`, `BEGIN` or `END`.
    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "BEGIN" => Some(Label::Begin),
            "END" => Some(Label::End),
            _ => token.strip_prefix('G')?.parse().ok().filter(|k| *k > 0).map(Label::Gesture),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Begin => f.write_str("BEGIN"),
            Label::Gesture(k) => write!(f, "G{k}"),
            Label::End => f.write_str("END"),
        }
    }
}

const JIGSAWS: [&str; 15] = [
    "Reaching for needle with right hand",
    "Positioning needle",
    "Pushing needle through tissue",
    "Transferring needle from left to right",
    "Moving to center with needle in grip",
    "Pulling suture with left hand",
    "Pulling suture with right hand",
    "Orienting needle",
    "Using right hand to help tighten suture",
    "Loosening more suture",
    "Dropping suture at end and moving to end points",
    "Reaching for needle with left hand",
    "Making C loop around right hand",
    "Reaching for needle with right hand",
    "Pulling suture with both hands",
];

/// Gesture index → text description, plus the two placeholder entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GestureVocabulary {
    entries: BTreeMap<u16, String>,
}

impl GestureVocabulary {
    pub fn new(entries: BTreeMap<u16, String>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Vocabulary("vocabulary has no gestures".into()));
        }
        if let Some((k, _)) = entries.iter().find(|(k, d)| **k == 0 || d.trim().is_empty()) {
            return Err(Error::Vocabulary(format!("gesture G{k} has an empty description or index 0")));
        }
        Ok(Self { entries })
    }

    /// The fifteen suturing gestures of the JIGSAWS reference table.
    pub fn jigsaws() -> Self {
        let entries = JIGSAWS.iter().enumerate().map(|(i, d)| (i as u16 + 1, d.to_string())).collect();
        Self { entries }
    }

    /// First `n` JIGSAWS gestures, used to describe synthetic corpora.
    pub fn jigsaws_prefix(n: usize) -> Result<Self> {
        if n == 0 || n > JIGSAWS.len() {
            return Err(Error::Vocabulary(format!(
                "the built-in vocabulary describes 1..={} gestures, asked for {n}",
                JIGSAWS.len()
            )));
        }
        let mut v = Self::jigsaws();
        v.entries.retain(|k, _| (*k as usize) <= n);
        Ok(v)
    }

    /// Parse `G<k><TAB>description` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (idx, desc) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "expected G<k><TAB>description".into(),
            })?;
            let Some(Label::Gesture(k)) = Label::parse(idx.trim()) else {
                return Err(Error::Parse { line: line_no, msg: format!("bad gesture index {idx:?}") });
            };
            let desc = desc.trim();
            if desc.is_empty() {
                return Err(Error::Parse { line: line_no, msg: "empty description".into() });
            }
            if entries.insert(k, desc.to_string()).is_some() {
                return Err(Error::Parse { line: line_no, msg: format!("duplicate gesture G{k}") });
            }
        }
        Self::new(entries)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, d)| format!("G{k}\t{d}\n")).collect()
    }

    pub fn contains(&self, label: Label) -> bool {
        match label {
            Label::Gesture(k) => self.entries.contains_key(&k),
            _ => true,
        }
    }

    pub fn description(&self, label: Label) -> Result<&str> {
        match label {
            Label::Begin => Ok(BEGIN_DESCRIPTION),
            Label::End => Ok(END_DESCRIPTION),
            Label::Gesture(k) => self
                .entries
                .get(&k)
                .map(String::as_str)
                .ok_or_else(|| Error::Vocabulary(format!("unknown gesture G{k}"))),
        }
    }

    pub fn gestures(&self) -> impl Iterator<Item = u16> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All labels, placeholders included, in a fixed order: gestures
    /// ascending, then `Begin`, then `End`.
    pub fn classes(&self) -> Vec<Label> {
        self.gestures().map(Label::Gesture).chain([Label::Begin, Label::End]).collect()
    }
}
