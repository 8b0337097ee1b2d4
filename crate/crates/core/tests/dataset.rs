use std::collections::BTreeSet;

use promptseg::dataset::synth::{base_patterns, nearest_pattern};
use promptseg::dataset::{
    generate_synthetic_corpus, io, louo_splits, seeded_holdout, zero_shot_filter, GestureVocabulary, Label,
    LabelStream, SynthConfig, Transcript,
};
use promptseg::sampling::FrameClip;
use promptseg::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vocab() -> GestureVocabulary {
    GestureVocabulary::jigsaws()
}

#[test]
fn vocabulary_table() {
    let v = vocab();
    assert_eq!(v.len(), 15);
    assert_eq!(v.description(Label::Gesture(1)).unwrap(), "Reaching for needle with right hand");
    assert_eq!(v.description(Label::Gesture(9)).unwrap(), "Using right hand to help tighten suture");
    assert_eq!(v.description(Label::Begin).unwrap(), "Waiting and preparing for the surgery");
    assert_eq!(v.description(Label::End).unwrap(), "Finishing the surgery");
    assert!(matches!(v.description(Label::Gesture(16)), Err(Error::Vocabulary(_))));
    assert_eq!(GestureVocabulary::parse(&v.to_text()).unwrap(), v);
    assert!(GestureVocabulary::parse("G1\tA\nG1\tB").is_err());
    assert!(GestureVocabulary::parse("G1\t  ").is_err());
}

#[test]
fn parse_minimal_transcript() {
    let t = Transcript::parse("v", "0 9 G1\n10 19 G2", 20, &vocab()).unwrap();
    assert_eq!(t.records().len(), 2);
    assert_eq!(t.to_label_stream().labels(), [vec![Label::Gesture(1); 10], vec![Label::Gesture(2); 10]].concat());
}

#[test]
fn parse_sorts_lines() {
    let t = Transcript::parse("v", "10 19 G2\n0 9 G1\n", 20, &vocab()).unwrap();
    assert_eq!(t.records()[0].gesture, 1);
}

#[test]
fn boundary_gaps_become_placeholders() {
    let t = Transcript::parse("v", "5 9 G1", 12, &vocab()).unwrap();
    let s = t.to_label_stream();
    assert_eq!(&s.labels()[..5], &[Label::Begin; 5]);
    assert_eq!(&s.labels()[5..10], &[Label::Gesture(1); 5]);
    assert_eq!(&s.labels()[10..], &[Label::End; 2]);

    let t = Transcript::parse("v", "3 5 G1", 8, &vocab()).unwrap();
    let mut want = vec![Label::Begin; 3];
    want.extend([Label::Gesture(1); 3]);
    want.extend([Label::End; 2]);
    assert_eq!(t.to_label_stream().labels(), want);

    let t = Transcript::parse("v", "0 9 G1", 10, &vocab()).unwrap();
    assert_eq!(t.to_label_stream().labels(), vec![Label::Gesture(1); 10]);
}

fn parse_err_line(text: &str, frames: usize) -> usize {
    match Transcript::parse("v", text, frames, &vocab()) {
        Err(Error::Parse { line, .. }) => line,
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn transcript_violations() {
    assert_eq!(parse_err_line("0 9 G1\n5 14 G2", 20), 2);
    assert_eq!(parse_err_line("9 0 G1", 20), 1);
    assert_eq!(parse_err_line("0 9 G1\n12 19 G2", 20), 2);
    assert_eq!(parse_err_line("0 9 G99", 20), 1);
    assert_eq!(parse_err_line("0 9 X1", 20), 1);
    assert_eq!(parse_err_line("0 25 G1", 20), 1);
    assert_eq!(parse_err_line("0 9", 20), 1);
}

/// Frame-by-frame oracle for the placeholder fill rule.
fn frame_oracle(t: &Transcript) -> Vec<Label> {
    let first = t.records().first().map(|r| r.start).unwrap_or(t.frame_count);
    (0..t.frame_count)
        .map(|f| {
            if let Some(r) = t.records().iter().find(|r| r.start <= f && f <= r.end) {
                Label::Gesture(r.gesture)
            } else if f < first {
                Label::Begin
            } else {
                Label::End
            }
        })
        .collect()
}

fn random_transcript_text(rng: &mut ChaCha8Rng) -> (String, usize) {
    let frames = rng.gen_range(1..200);
    let mut start = rng.gen_range(0..frames);
    let mut text = String::new();
    while start < frames && rng.gen_bool(0.8) {
        let end = rng.gen_range(start..frames.min(start + 30));
        text.push_str(&format!("{start} {end} G{}\n", rng.gen_range(1..=15)));
        start = end + 1;
    }
    (text, frames)
}

#[test]
fn label_stream_matches_frame_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let (text, frames) = random_transcript_text(&mut rng);
        let t = Transcript::parse("v", &text, frames, &vocab()).unwrap();
        let s = t.to_label_stream();
        assert_eq!(s.len(), frames);
        assert_eq!(s.labels(), frame_oracle(&t));
        // round trip through records
        let again = Transcript::parse("v", &t.to_text(), frames, &vocab()).unwrap();
        assert_eq!(again.to_label_stream(), s);
    }
}

#[test]
fn louo_examples() {
    let users: Vec<String> = (0..16).map(|i| format!("S{}", i % 8)).collect();
    let folds = louo_splits(&users, |u| u.clone()).unwrap();
    assert_eq!(folds.len(), 8);

    let two = ["A", "B"];
    let folds = louo_splits(&two, |u| u.to_string()).unwrap();
    assert_eq!((folds[0].train.clone(), folds[0].test.clone()), (vec![1], vec![0]));
    assert_eq!((folds[1].train.clone(), folds[1].test.clone()), (vec![0], vec![1]));

    assert!(matches!(louo_splits(&["A", "A"], |u| u.to_string()), Err(Error::Split(_))));
}

#[test]
fn louo_partitions_test_role() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.gen_range(2..30);
        let users: Vec<u32> = (0..n).map(|_| rng.gen_range(0..6)).collect();
        let distinct: BTreeSet<u32> = users.iter().copied().collect();
        let Ok(folds) = louo_splits(&users, |u| *u) else {
            assert_eq!(distinct.len(), 1);
            continue;
        };
        assert_eq!(folds.len(), distinct.len());
        let mut seen = vec![0; n];
        for f in &folds {
            for &i in &f.test {
                seen[i] += 1;
            }
            let train: BTreeSet<usize> = f.train.iter().copied().collect();
            assert!(f.test.iter().all(|i| !train.contains(i)));
            assert_eq!(train.len() + f.test.len(), n);
        }
        assert!(seen.iter().all(|c| *c == 1));
    }
}

#[test]
fn seeded_holdout_is_deterministic() {
    let a = seeded_holdout(36, 10, 3).unwrap();
    assert_eq!(a, seeded_holdout(36, 10, 3).unwrap());
    assert_eq!(a.test.len(), 10);
    assert_eq!(a.train.len(), 26);
    assert!(seeded_holdout(5, 5, 0).is_err());
}

fn clip(labels: Vec<Label>) -> FrameClip {
    FrameClip {
        video_id: "v".into(),
        start: 0,
        stride: 1,
        height: 1,
        width: 1,
        frames: vec![0.0; labels.len()],
        labels,
    }
}

#[test]
fn zero_shot_filter_examples() {
    let all: BTreeSet<u16> = (1..=15).collect();
    let small: BTreeSet<u16> = (1..=5).collect();
    let a = clip(vec![Label::Gesture(1); 16]);
    let mut b_labels = vec![Label::Gesture(2); 16];
    b_labels[7] = Label::Gesture(12);
    let b = clip(b_labels);
    let c = clip([vec![Label::Begin; 4], vec![Label::Gesture(3); 12]].concat());
    let clips = vec![a.clone(), b.clone(), c.clone()];
    assert_eq!(zero_shot_filter(&clips, &all), clips);
    assert_eq!(zero_shot_filter(&clips, &small), vec![a, c]);
}

#[test]
fn zero_shot_filter_matches_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let clips: Vec<FrameClip> = (0..rng.gen_range(0..20))
            .map(|_| clip((0..16).map(|_| Label::Gesture(rng.gen_range(1..=8))).collect()))
            .collect();
        let allowed: BTreeSet<u16> = (1..=8).filter(|_| rng.gen_bool(0.6)).collect();
        let kept = zero_shot_filter(&clips, &allowed);
        let mut oracle = Vec::new();
        for c in &clips {
            let mut ok = true;
            for l in &c.labels {
                if let Label::Gesture(g) = l {
                    if !allowed.contains(g) {
                        ok = false;
                    }
                }
            }
            if ok {
                oracle.push(c.clone());
            }
        }
        assert_eq!(kept, oracle);
        assert_eq!(zero_shot_filter(&kept, &allowed), kept);
    }
}

#[test]
fn synthetic_corpus_is_deterministic() {
    let cfg = SynthConfig { n_videos: 3, ..SynthConfig::default() };
    let a = generate_synthetic_corpus(&cfg).unwrap();
    let b = generate_synthetic_corpus(&cfg).unwrap();
    assert_eq!(a, b);
    let c = generate_synthetic_corpus(&SynthConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn synthetic_segments_in_range() {
    let cfg = SynthConfig::default();
    for v in generate_synthetic_corpus(&cfg).unwrap() {
        assert_eq!(v.len(), cfg.frames_per_video);
        let recs = v.labels().to_records();
        assert!(recs.iter().all(|r| (20..=60).contains(&(r.end - r.start + 1))), "{recs:?}");
        assert!(recs.windows(2).all(|w| w[0].gesture != w[1].gesture));
    }
}

#[test]
fn zero_noise_frames_repeat() {
    let cfg = SynthConfig { n_videos: 4, noise: 0.0, scene: 0.0, ..SynthConfig::default() };
    let videos = generate_synthetic_corpus(&cfg).unwrap();
    let mut seen: std::collections::HashMap<Label, Vec<f64>> = Default::default();
    for v in &videos {
        for (t, l) in v.labels().labels().iter().enumerate() {
            let f = seen.entry(*l).or_insert_with(|| v.frame(t).to_vec());
            assert_eq!(f.as_slice(), v.frame(t));
        }
    }
    // a frozen scene without pixel noise repeats frames within a video
    let cfg = SynthConfig { noise: 0.0, scene: 2.0, scene_memory: 1.0, ..cfg };
    for v in generate_synthetic_corpus(&cfg).unwrap() {
        let mut seen: std::collections::HashMap<Label, Vec<f64>> = Default::default();
        for (t, l) in v.labels().labels().iter().enumerate() {
            let f = seen.entry(*l).or_insert_with(|| v.frame(t).to_vec());
            assert_eq!(f.as_slice(), v.frame(t));
        }
    }
}

#[test]
fn scene_lies_outside_the_gesture_patterns() {
    // without pixel noise, every frame minus its gesture pattern is
    // orthogonal to all patterns
    let cfg = SynthConfig { n_videos: 2, noise: 0.0, ..SynthConfig::default() };
    let patterns = base_patterns(&cfg);
    for v in generate_synthetic_corpus(&cfg).unwrap() {
        for (t, l) in v.labels().labels().iter().enumerate().step_by(7) {
            let own = &patterns[l.gesture().unwrap() as usize - 1];
            let residual: Vec<f64> = v.frame(t).iter().zip(own).map(|(a, b)| a - b).collect();
            for p in &patterns {
                let dot: f64 = residual.iter().zip(p).map(|(a, b)| a * b).sum();
                assert!(dot.abs() < 1e-9, "{dot}");
            }
        }
    }
}

#[test]
fn nearest_pattern_classifier_accuracy() {
    let cfg = SynthConfig::default();
    let patterns = base_patterns(&cfg);
    let (mut hit, mut total) = (0usize, 0usize);
    for v in generate_synthetic_corpus(&cfg).unwrap() {
        for (t, l) in v.labels().labels().iter().enumerate() {
            total += 1;
            if nearest_pattern(v.frame(t), &patterns) + 1 == l.gesture().unwrap() as usize {
                hit += 1;
            }
        }
    }
    let acc = hit as f64 / total as f64;
    assert!(acc >= 0.99, "nearest-pattern accuracy {acc}");
}

fn rank(rows: &[Vec<f64>]) -> usize {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let mut v = r.clone();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            basis.push(v.iter().map(|x| x / norm).collect());
        }
    }
    basis.len()
}

#[test]
fn pattern_band_bounds_the_pattern_rank() {
    // band b holds the frequencies u+v in 1..=b, i.e. b(b+3)/2 directions
    for (band, dims) in [(1, 2), (2, 5), (4, 8)] {
        let cfg = SynthConfig { pattern_band: band, ..SynthConfig::default() };
        assert_eq!(rank(&base_patterns(&cfg)), dims, "band {band}");
    }
}

#[test]
fn synthetic_parameter_bounds() {
    for cfg in [
        SynthConfig { n_gestures: 1, ..SynthConfig::default() },
        SynthConfig { frames_per_video: 63, ..SynthConfig::default() },
        SynthConfig { pattern_band: 0, ..SynthConfig::default() },
        SynthConfig { pattern_band: 5, ..SynthConfig::default() },
    ] {
        assert!(matches!(generate_synthetic_corpus(&cfg), Err(Error::Parameter(_))));
    }
}

#[test]
fn corpus_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { n_videos: 2, ..SynthConfig::default() };
    let videos = generate_synthetic_corpus(&cfg).unwrap();
    let vocab = GestureVocabulary::jigsaws_prefix(8).unwrap();
    io::write_corpus(dir.path(), &videos, &vocab, &["seed 7".into()]).unwrap();
    let (back, vocab_back) = io::read_corpus(dir.path()).unwrap();
    assert_eq!(back, videos);
    assert_eq!(vocab_back, vocab);
    let header = std::fs::read(dir.path().join("video001/frames.bin")).unwrap();
    assert!(header.starts_with(b"16 16 256\n"));
}

#[test]
fn headed_binary_rejects_truncation() {
    let bytes = io::encode_headed(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
    assert_eq!(io::decode_headed(&bytes, 2).unwrap(), (vec![2, 3], vec![1., 2., 3., 4., 5., 6.]));
    assert!(io::decode_headed(&bytes[..bytes.len() - 1], 2).is_err());
    assert!(io::decode_headed(&bytes, 3).is_err());
}

proptest! {
    #[test]
    fn records_round_trip(labels in prop::collection::vec(1u16..5, 1..80)) {
        let stream = LabelStream::new(labels.iter().map(|g| Label::Gesture(*g)).collect());
        let t = Transcript::from_records("v", "u", stream.len(), stream.to_records()).unwrap();
        prop_assert_eq!(t.to_label_stream(), stream);
    }
}
