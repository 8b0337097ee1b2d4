//! Versioned encoder checkpoints.
//!
//! A checkpoint directory holds `weights.bin`, `manifest.txt` and
//! `lexicon.txt`. `weights.bin` layout (little-endian):
//!
//! ```text
//! b"PSCK" | version: u32 | count: u32 |
//!   count × ( name_len: u32 | name: utf-8 | rank: u32 | dims: rank × u64 | values: f64… )
//! ```

use std::path::Path;

use crate::autodiff::Tensor;
use crate::dataset::io::{read_text, write_bytes};
use crate::error::{Error, Result};

use super::{EncoderConfig, Encoders, Lexicon};

const MAGIC: &[u8; 4] = b"PSCK";
pub const VERSION: u32 = 1;

pub fn encode_named(tensors: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Data("truncated checkpoint".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_named(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Data("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Data(format!("checkpoint version {version}, expected {VERSION}")));
    }
    let count = r.u32()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Data("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let values = r.take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect();
        out.push((name, Tensor::new(shape, values)?));
    }
    if r.at != bytes.len() {
        return Err(Error::Data("trailing bytes after checkpoint".into()));
    }
    Ok(out)
}

fn named(enc: &Encoders) -> Vec<(String, Tensor)> {
    enc.param_sets()
        .iter()
        .flat_map(|ps| ps.iter().map(|(n, t)| (n.to_string(), t.clone())))
        .collect()
}

pub fn manifest(enc: &Encoders) -> String {
    let c = enc.config;
    format!(
        "version {VERSION}\ndim {}\nhidden {}\nheight {}\nwidth {}\nheads {}\nlexicon_size {}\nlexicon_hash {}\n",
        c.dim,
        c.hidden,
        c.height,
        c.width,
        c.heads,
        enc.text.lexicon.len(),
        enc.text.lexicon.hash()
    )
}

pub fn save(enc: &Encoders, dir: &Path) -> Result<()> {
    write_bytes(&dir.join("weights.bin"), &encode_named(&named(enc)))?;
    let lexicon: String = enc.text.lexicon.words().iter().map(|w| format!("{w}\n")).collect();
    write_bytes(&dir.join("lexicon.txt"), lexicon.as_bytes())?;
    write_bytes(&dir.join("manifest.txt"), manifest(enc).as_bytes())
}

pub fn load(dir: &Path) -> Result<Encoders> {
    let text = read_text(&dir.join("manifest.txt"))?;
    let field = |key: &str| -> Result<&str> {
        text.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
            .ok_or_else(|| Error::Data(format!("checkpoint manifest lacks `{key}`")))
    };
    let num = |key: &str| -> Result<usize> {
        field(key)?.trim().parse().map_err(|_| Error::Data(format!("bad manifest value for `{key}`")))
    };
    if num("version")? != VERSION as usize {
        return Err(Error::Data("unsupported checkpoint version".into()));
    }
    let config = EncoderConfig {
        dim: num("dim")?,
        hidden: num("hidden")?,
        height: num("height")?,
        width: num("width")?,
        heads: num("heads")?,
    };
    let words = read_text(&dir.join("lexicon.txt"))?;
    let lexicon = Lexicon::from_words(words.lines().map(str::to_string));
    if lexicon.hash() != field("lexicon_hash")?.trim() {
        return Err(Error::Data("lexicon does not match the manifest hash".into()));
    }
    let mut enc = Encoders::with_lexicon(config, lexicon, 0)?;
    let bytes = std::fs::read(dir.join("weights.bin")).map_err(|e| Error::io(dir.join("weights.bin"), e))?;
    let tensors = decode_named(&bytes)?;
    for ps in enc.param_sets_mut() {
        let mine: Vec<(String, Tensor)> = tensors
            .iter()
            .filter(|(n, _)| ps.iter().any(|(m, _)| m == n))
            .cloned()
            .collect();
        ps.load_named(&mine)?;
    }
    let total: usize = enc.param_sets().iter().map(|p| p.len()).sum();
    if total != tensors.len() {
        return Err(Error::Data("checkpoint holds tensors no encoder expects".into()));
    }
    Ok(enc)
}
