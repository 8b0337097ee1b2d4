//! Desk-scale stand-in for surgical footage.
//!
//! Every gesture owns a fixed base pattern built from low-frequency 2-D
//! cosine basis functions. Every frame adds a slowly drifting scene drawn
//! from a disjoint, higher-frequency band (orthogonal to every gesture
//! pattern) whose coefficients follow independent AR(1) processes, plus
//! i.i.d. Gaussian pixel noise. Because the scene is orthogonal to the
//! gesture band, the nearest base pattern is unaffected by it, while an
//! encoder has to learn to ignore it.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};

use super::transcript::LabelStream;
use super::video::Video;
use super::vocab::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_videos: usize,
    pub n_gestures: usize,
    pub frames_per_video: usize,
    pub height: usize,
    pub width: usize,
    /// Highest spatial frequency `u + v` of the gesture patterns, below the
    /// scene band; the patterns span `(b + 1)(b + 2)/2 - 1` dimensions.
    pub pattern_band: usize,
    /// Pixel noise standard deviation, relative to the gesture pattern RMS.
    pub noise: f64,
    /// Expected RMS of the scene, relative to the gesture pattern RMS.
    pub scene: f64,
    /// Frame-to-frame autocorrelation of the scene coefficients, in `[0, 1]`.
    pub scene_memory: f64,
    pub n_users: usize,
    pub min_segment: usize,
    pub max_segment: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_videos: 20,
            n_gestures: 8,
            frames_per_video: 256,
            height: 16,
            width: 16,
            pattern_band: 4,
            noise: 0.1,
            scene: 2.25,
            scene_memory: 0.98,
            n_users: 4,
            min_segment: 20,
            max_segment: 60,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Parameter(m));
        if self.n_gestures < 2 {
            return fail(format!("n_gestures must be at least 2, got {}", self.n_gestures));
        }
        if self.frames_per_video < 64 {
            return fail(format!("frames_per_video must be at least 64, got {}", self.frames_per_video));
        }
        if self.n_videos == 0 || self.n_users == 0 {
            return fail("n_videos and n_users must be positive".into());
        }
        if self.height < 8 || self.width < 8 {
            return fail(format!("frames must be at least 8×8, got {}×{}", self.height, self.width));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite() && self.scene >= 0.0 && self.scene.is_finite()) {
            return fail("noise and scene amplitudes must be finite and non-negative".into());
        }
        if !(1..SCENE_BAND.0).contains(&self.pattern_band) {
            return fail(format!("pattern_band must lie in 1..{}, got {}", SCENE_BAND.0, self.pattern_band));
        }
        if !(0.0..=1.0).contains(&self.scene_memory) {
            return fail(format!("scene_memory must lie in [0, 1], got {}", self.scene_memory));
        }
        if self.min_segment == 0 || self.min_segment > self.max_segment || self.frames_per_video < self.min_segment {
            return fail(format!("bad segment range [{}, {}]", self.min_segment, self.max_segment));
        }
        Ok(())
    }
}

/// Spatial frequencies `u + v` of the drifting scene.
const SCENE_BAND: (usize, usize) = (5, 12);

/// Orthonormal 2-D DCT-II basis function `(u, v)` sampled on the grid.
fn cosine_basis(u: usize, v: usize, h: usize, w: usize) -> Vec<f64> {
    let a = |k: usize, n: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    let (au, av) = (a(u, h), a(v, w));
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let cy = (PI * (2 * y + 1) as f64 * u as f64 / (2 * h) as f64).cos();
        for x in 0..w {
            let cx = (PI * (2 * x + 1) as f64 * v as f64 / (2 * w) as f64).cos();
            out.push(au * av * cy * cx);
        }
    }
    out
}

fn band(h: usize, w: usize, lo: usize, hi: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for s in lo..=hi {
        for u in 0..=s {
            let v = s - u;
            if u < h && v < w {
                out.push(cosine_basis(u, v, h, w));
            }
        }
    }
    out
}

/// Random combination of `basis` rescaled to the requested pixel RMS.
fn random_pattern<R: Rng>(basis: &[Vec<f64>], rms: f64, rng: &mut R) -> Vec<f64> {
    let n = basis[0].len();
    let mut out = vec![0.0; n];
    for b in basis {
        let c: f64 = StandardNormal.sample(rng);
        for (o, v) in out.iter_mut().zip(b) {
            *o += c * v;
        }
    }
    let cur = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let s = if cur > 0.0 { rms / cur } else { 0.0 };
    out.iter_mut().for_each(|v| *v *= s);
    out
}

/// The base pattern of every gesture (index 0 is gesture 1).
pub fn base_patterns(config: &SynthConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let basis = band(config.height, config.width, 1, config.pattern_band);
    (0..config.n_gestures).map(|_| random_pattern(&basis, 1.0, &mut rng)).collect()
}

/// Segment lengths in `[min, max]` summing to `total`.
fn segment_lengths<R: Rng>(total: usize, min: usize, max: usize, rng: &mut R) -> Vec<usize> {
    let mut out = Vec::new();
    let mut remaining = total;
    while remaining > max {
        // leave at least `min` frames for the final segment
        let hi = max.min(remaining - min);
        let len = rng.gen_range(min..=hi.max(min));
        out.push(len);
        remaining -= len;
    }
    out.push(remaining);
    out
}

/// Generate `n_videos` synthetic videos. Pure in `config`.
pub fn generate_synthetic_corpus(config: &SynthConfig) -> Result<Vec<Video>> {
    config.validate()?;
    let patterns = base_patterns(config);
    let scene_basis = band(config.height, config.width, SCENE_BAND.0, SCENE_BAND.1);
    let pixels = config.height * config.width;
    let noise = Normal::new(0.0, config.noise).map_err(|e| Error::Parameter(e.to_string()))?;

    let mut master = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut videos = Vec::with_capacity(config.n_videos);
    for i in 0..config.n_videos {
        let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
        let mut labels = Vec::with_capacity(config.frames_per_video);
        let mut prev: Option<u16> = None;
        for len in segment_lengths(config.frames_per_video, config.min_segment, config.max_segment, &mut rng) {
            let g = loop {
                let g = rng.gen_range(1..=config.n_gestures as u16);
                if Some(g) != prev {
                    break g;
                }
            };
            prev = Some(g);
            labels.extend(std::iter::repeat(Label::Gesture(g)).take(len));
        }
        let rho = config.scene_memory;
        let innovation = (1.0 - rho * rho).sqrt();
        let gain = config.scene / (scene_basis.len() as f64 / pixels as f64).sqrt();
        let mut coeffs: Vec<f64> = scene_basis.iter().map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut frames = Vec::with_capacity(pixels * labels.len());
        let mut scene = vec![0.0; pixels];
        for label in &labels {
            scene.iter_mut().for_each(|v| *v = 0.0);
            for (c, b) in coeffs.iter_mut().zip(&scene_basis) {
                let e: f64 = StandardNormal.sample(&mut rng);
                *c = rho * *c + innovation * e;
                for (s, v) in scene.iter_mut().zip(b) {
                    *s += gain * *c * v;
                }
            }
            let g = label.gesture().expect("synthetic frames are always annotated") as usize;
            for (p, s) in patterns[g - 1].iter().zip(&scene) {
                let n = if config.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                frames.push(p + s + n);
            }
        }
        let user = format!("U{}", i % config.n_users + 1);
        videos.push(Video::new(
            format!("video{:03}", i + 1),
            user,
            config.height,
            config.width,
            frames,
            LabelStream::new(labels),
        )?);
    }
    Ok(videos)
}

/// Index (0-based) of the base pattern closest in Euclidean distance.
pub fn nearest_pattern(frame: &[f64], patterns: &[Vec<f64>]) -> usize {
    let dist = |p: &Vec<f64>| frame.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let mut best = 0;
    for (i, p) in patterns.iter().enumerate() {
        if dist(p) < dist(&patterns[best]) {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        let b = band(16, 16, 1, 12);
        for (i, x) in b.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                let dot: f64 = x.iter().zip(y).map(|(a, c)| a * c).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn segment_lengths_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for total in [64, 65, 100, 256, 999] {
            let lens = segment_lengths(total, 20, 60, &mut rng);
            assert_eq!(lens.iter().sum::<usize>(), total);
            assert!(lens.iter().all(|l| (20..=60).contains(l)), "{lens:?}");
        }
    }
}
