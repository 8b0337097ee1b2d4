//! On-disk formats: headed binary matrices, transcripts and corpus
//! directories.
//!
//! Binary payloads are little-endian `f64`, row-major, preceded by one
//! ASCII header line of space-separated dimensions.

use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

use super::transcript::{LabelStream, Transcript};
use super::video::Video;
use super::vocab::GestureVocabulary;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Encode `dims` header plus values.
pub fn encode_headed(dims: &[usize], values: &[f64]) -> Vec<u8> {
    let header = dims.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let mut out = Vec::with_capacity(header.len() + 1 + values.len() * 8);
    out.extend_from_slice(header.as_bytes());
    out.push(b'\n');
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decode a headed binary blob with `rank` header dimensions.
pub fn decode_headed(bytes: &[u8], rank: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let nl = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::Data("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Data("header is not UTF-8".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|d| d.parse().map_err(|_| Error::Data(format!("bad header field {d:?}"))))
        .collect::<Result<_>>()?;
    if dims.len() != rank {
        return Err(Error::Data(format!("expected {rank} header dimensions, got {header:?}")));
    }
    let body = &bytes[nl + 1..];
    let n: usize = dims.iter().product();
    if body.len() != n * 8 {
        return Err(Error::Data(format!("header {header:?} needs {} bytes, found {}", n * 8, body.len())));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((dims, values))
}

/// Frame file: header `H W T`.
pub fn write_frames(path: &Path, video: &Video) -> Result<()> {
    write_bytes(path, &encode_headed(&[video.height, video.width, video.len()], video.frames()))
}

pub fn read_frames(path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (dims, values) = decode_headed(&bytes, 3)?;
    Ok((dims[0], dims[1], dims[2], values))
}

/// Feature file: header `T d`.
pub fn write_features(path: &Path, features: &Tensor) -> Result<()> {
    let [t, d] = features.shape() else {
        return Err(Error::Dimension(format!("features must be T×d, got {:?}", features.shape())));
    };
    write_bytes(path, &encode_headed(&[*t, *d], features.data()))
}

pub fn read_features(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (dims, values) = decode_headed(&bytes, 2)?;
    Tensor::new(dims, values)
}

const MANIFEST: &str = "manifest.txt";
const VOCAB: &str = "vocab.txt";

/// Write a corpus: `manifest.txt`, `vocab.txt` and one directory per video
/// holding `frames.bin` and `labels.txt`.
///
/// `header` lines are written verbatim at the top of the manifest.
pub fn write_corpus(dir: &Path, videos: &[Video], vocab: &GestureVocabulary, header: &[String]) -> Result<()> {
    let mut manifest = String::new();
    for h in header {
        manifest.push_str(h);
        manifest.push('\n');
    }
    for v in videos {
        manifest.push_str(&format!("video {} {} {}\n", v.id, v.user, v.len()));
        let vdir = dir.join(&v.id);
        write_frames(&vdir.join("frames.bin"), v)?;
        let t = Transcript::from_records(&v.id, &v.user, v.len(), v.labels().to_records())?;
        write_bytes(&vdir.join("labels.txt"), t.to_text().as_bytes())?;
    }
    write_bytes(&dir.join(VOCAB), vocab.to_text().as_bytes())?;
    write_bytes(&dir.join(MANIFEST), manifest.as_bytes())
}

/// Corpus entries listed in a manifest: (id, user, frame count).
pub fn read_manifest(dir: &Path) -> Result<Vec<(String, String, usize)>> {
    let text = read_text(&dir.join(MANIFEST))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.first() != Some(&"video") {
            continue;
        }
        let [_, id, user, t] = fields[..] else {
            return Err(Error::Parse { line: i + 1, msg: format!("bad manifest entry {line:?}") });
        };
        let t = t.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad frame count {t:?}") })?;
        out.push((id.to_string(), user.to_string(), t));
    }
    Ok(out)
}

pub fn read_vocab(dir: &Path) -> Result<GestureVocabulary> {
    GestureVocabulary::parse(&read_text(&dir.join(VOCAB))?)
}

/// Load every video of a corpus directory, in manifest order.
pub fn read_corpus(dir: &Path) -> Result<(Vec<Video>, GestureVocabulary)> {
    let vocab = read_vocab(dir)?;
    let mut videos = Vec::new();
    for (id, user, t) in read_manifest(dir)? {
        let vdir = dir.join(&id);
        let (h, w, frames_t, values) = read_frames(&vdir.join("frames.bin"))?;
        if frames_t != t {
            return Err(Error::Data(format!("video {id}: manifest says {t} frames, frame file has {frames_t}")));
        }
        let transcript = Transcript::parse(&id, &read_text(&vdir.join("labels.txt"))?, t, &vocab)?;
        videos.push(Video::new(id, user, h, w, values, transcript.to_label_stream())?);
    }
    Ok((videos, vocab))
}

/// Prediction file: one label per line.
pub fn prediction_text(labels: &LabelStream) -> String {
    labels.labels().iter().map(|l| format!("{l}\n")).collect()
}
