use promptseg::autodiff::{gradcheck, Bound, Tape, Tensor};
use promptseg::contrastive::*;
use promptseg::dataset::{GestureVocabulary, Label};
use promptseg::encoders::{EncoderConfig, Encoders};
use promptseg::prompts::PromptMode;
use promptseg::sampling::{FrameClip, CLIP_LEN};
use promptseg::Error;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn matrix(n: usize, values: Vec<f64>) -> SimilarityMatrix {
    SimilarityMatrix::new(Channel::Integrated, n, values).unwrap()
}

fn margin_matrix(n: usize, margin: f64) -> SimilarityMatrix {
    matrix(n, (0..n * n).map(|i| if i % (n + 1) == 0 { margin } else { 0.0 }).collect())
}

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() < tol, "{a} vs {b}");
}

#[test]
fn cosine_examples() {
    close(cosine_similarity(&[3.0, -1.0, 2.0], &[3.0, -1.0, 2.0]).unwrap(), 1.0, 1e-15);
    assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    close(cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), 0.5f64.sqrt(), 1e-15);
    assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Degenerate(_))));
    assert!(matches!(cosine_similarity(&[1.0], &[1.0, 0.0]), Err(Error::Dimension(_))));
}

#[test]
fn batch_similarity_examples() {
    let eye = Tensor::matrix(3, 4, vec![1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 0.]).unwrap();
    let s = batch_similarity(&eye, &eye, Channel::Integrated).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(s.get(i, j), if i == j { 1.0 } else { 0.0 });
        }
    }
    let one = Tensor::matrix(1, 2, vec![1., 1.]).unwrap();
    let other = Tensor::matrix(1, 2, vec![1., 0.]).unwrap();
    let s = batch_similarity(&one, &other, Channel::Statistical).unwrap();
    assert_eq!(s.size(), 1);
    close(s.get(0, 0), 0.5f64.sqrt(), 1e-15);

    let zero = Tensor::matrix(2, 2, vec![1., 0., 0., 0.]).unwrap();
    assert!(matches!(batch_similarity(&zero, &zero, Channel::Integrated), Err(Error::Degenerate(_))));
}

#[test]
fn batch_similarity_matches_double_loop() {
    let zx = Tensor::randn(vec![4, 8], 1.0, &mut rng(1));
    let zy = Tensor::randn(vec![4, 8], 1.0, &mut rng(2));
    let s = batch_similarity(&zx, &zy, Channel::Semantic(2)).unwrap();
    assert_eq!(s.channel, Channel::Semantic(2));
    for i in 0..4 {
        for j in 0..4 {
            let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
            for k in 0..8 {
                dot += zx.get2(i, k) * zy.get2(j, k);
                nx += zx.get2(i, k) * zx.get2(i, k);
                ny += zy.get2(j, k) * zy.get2(j, k);
            }
            close(s.get(i, j), dot / (nx.sqrt() * ny.sqrt()), 1e-14);
            assert!((-1.0..=1.0).contains(&s.get(i, j)));
        }
    }
}

#[test]
fn similarity_var_matches_value_route() {
    let zx = Tensor::randn(vec![5, 3], 1.0, &mut rng(3));
    let zy = Tensor::randn(vec![5, 3], 1.0, &mut rng(4));
    let mut tape = Tape::new();
    let (a, b) = (tape.constant(zx.clone()), tape.constant(zy.clone()));
    let s = similarity_var(&mut tape, a, b).unwrap();
    let oracle = batch_similarity(&zx, &zy, Channel::Integrated).unwrap();
    for (x, y) in tape.value(s).data().iter().zip(oracle.values()) {
        close(*x, *y, 1e-14);
    }
}

#[test]
fn generalized_kl_examples() {
    let p = [0.2, 0.8, 0.6, 0.4];
    assert_eq!(generalized_kl(&p, &p).unwrap(), 0.0);
    close(generalized_kl(&[1., 0., 0., 1.], &[0.5; 4]).unwrap(), 2.0 * 2f64.ln(), 1e-15);
    assert!(matches!(generalized_kl(&[0.5, 0.5, 0., 1.], &[1., 0., 0., 1.]), Err(Error::Support(_))));
    assert!(matches!(generalized_kl(&[1.0], &[0.5, 0.5]), Err(Error::Dimension(_))));
}

#[test]
fn channel_loss_examples() {
    let want = -(10f64.exp() / (10f64.exp() + 1.0)).ln();
    close(channel_loss(&margin_matrix(2, 10.0), 1.0).unwrap(), want, 1e-15);
    assert!(want > 4.5e-5 && want < 4.6e-5);
    for b in [2, 4, 8] {
        close(channel_loss(&matrix(b, vec![0.3; b * b]), 1.0).unwrap(), (b as f64).ln(), 1e-9);
        close(channel_loss(&matrix(b, vec![-0.7; b * b]), 0.07).unwrap(), (b as f64).ln(), 1e-9);
        assert!(channel_loss(&margin_matrix(b, 10.0), 1.0).unwrap() < 1e-3);
    }
    assert!(matches!(channel_loss(&margin_matrix(2, 1.0), 0.0), Err(Error::Parameter(_))));
    assert!(SimilarityMatrix::new(Channel::Integrated, 2, vec![0.0; 3]).is_err());
}

#[test]
fn channel_loss_falls_with_margin() {
    for b in [2, 4, 8] {
        let losses: Vec<f64> = [1.0, 5.0, 10.0].iter().map(|&m| channel_loss(&margin_matrix(b, m), 1.0).unwrap()).collect();
        assert!(losses[0] > losses[1] && losses[1] > losses[2] && losses[2] >= 0.0, "{losses:?}");
    }
}

#[test]
fn channel_loss_is_invariant_to_joint_permutation() {
    let n = 5;
    let mut r = rng(6);
    let s: Vec<f64> = (0..n * n).map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0)).collect();
    let base = channel_loss(&matrix(n, s.clone()), 0.07).unwrap();
    for seed in 0..20 {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng(seed));
        let permuted: Vec<f64> = (0..n * n).map(|k| s[perm[k / n] * n + perm[k % n]]).collect();
        close(channel_loss(&matrix(n, permuted), 0.07).unwrap(), base, 1e-12);
    }
}

#[test]
fn tape_route_matches_value_route() {
    for (seed, n) in [(1u64, 2usize), (2, 3), (3, 7)] {
        let mut r = rng(seed);
        let s: Vec<f64> = (0..n * n).map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0)).collect();
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::matrix(n, n, s.clone()).unwrap());
        let l = channel_loss_var(&mut tape, v, 0.07).unwrap();
        close(tape.value(l).item(), channel_loss(&matrix(n, s), 0.07).unwrap(), 1e-12);
    }
}

#[test]
fn scaling_embeddings_leaves_loss_unchanged() {
    let zx = Tensor::randn(vec![4, 6], 1.0, &mut rng(7));
    let zy = Tensor::randn(vec![4, 6], 1.0, &mut rng(8));
    let base = channel_loss(&batch_similarity(&zx, &zy, Channel::Integrated).unwrap(), 0.07).unwrap();
    for c in [1e-3, 0.5, 3.0, 1e4] {
        let scaled = Tensor::matrix(4, 6, zx.data().iter().map(|v| v * c).collect()).unwrap();
        let l = channel_loss(&batch_similarity(&scaled, &zy, Channel::Integrated).unwrap(), 0.07).unwrap();
        close(l, base, 1e-12);
    }
}

#[test]
fn true_pairing_is_optimal() {
    // orthonormal matched embeddings: rows of a random rotation
    let b = 6;
    let mut q: Vec<Vec<f64>> = Vec::new();
    let raw = Tensor::randn(vec![b, 8], 1.0, &mut rng(9));
    for i in 0..b {
        let mut v = raw.row(i).to_vec();
        for u in &q {
            let d: f64 = v.iter().zip(u).map(|(a, c)| a * c).sum();
            v.iter_mut().zip(u).for_each(|(a, c)| *a -= d * c);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        q.push(v.into_iter().map(|a| a / n).collect());
    }
    let z = Tensor::matrix(b, 8, q.concat()).unwrap();
    let truth = channel_loss(&batch_similarity(&z, &z, Channel::Integrated).unwrap(), 0.07).unwrap();
    for seed in 0..100 {
        let mut perm: Vec<usize> = (0..b).collect();
        perm.shuffle(&mut rng(seed));
        let shuffled = Tensor::matrix(b, 8, perm.iter().flat_map(|&i| z.row(i).to_vec()).collect()).unwrap();
        let l = channel_loss(&batch_similarity(&z, &shuffled, Channel::Integrated).unwrap(), 0.07).unwrap();
        assert!(l >= truth - 1e-12, "shuffle {seed}: {l} < {truth}");
    }
}

#[test]
fn channel_loss_gradients_match_finite_differences() {
    for (seed, (n, d)) in [(2usize, 3usize), (3, 5), (5, 4)].into_iter().enumerate() {
        let inputs = [
            Tensor::randn(vec![n, d], 1.0, &mut rng(seed as u64)),
            Tensor::randn(vec![n, d], 1.0, &mut rng(100 + seed as u64)),
        ];
        let err = gradcheck::max_relative_error(&inputs, |tape, v| {
            let s = similarity_var(tape, v[0], v[1])?;
            channel_loss_var(tape, s, 0.5)
        })
        .unwrap();
        assert!(err < 1e-4, "B={n}: {err}");
    }
}

fn vocab() -> GestureVocabulary {
    GestureVocabulary::jigsaws_prefix(4).unwrap()
}

fn config(dim: usize) -> EncoderConfig {
    EncoderConfig { height: 4, width: 4, hidden: 6, dim, heads: 2 }
}

fn labels(pattern: &[(u16, usize)]) -> Vec<Label> {
    pattern.iter().flat_map(|&(g, n)| std::iter::repeat(Label::Gesture(g)).take(n)).collect()
}

fn clip(pattern: &[(u16, usize)], seed: u64) -> FrameClip {
    FrameClip {
        video_id: format!("v{seed}"),
        start: 0,
        stride: 4,
        height: 4,
        width: 4,
        frames: Tensor::randn(vec![CLIP_LEN * 16], 1.0, &mut rng(seed)).into_data(),
        labels: labels(pattern),
    }
}

fn samples(patterns: &[&[(u16, usize)]]) -> Vec<Sample> {
    let clips = patterns.iter().enumerate().map(|(i, p)| clip(p, i as u64 + 1)).collect();
    prepare_samples(clips, &vocab(), PromptMode::Text).unwrap()
}

fn loss_of(enc: &Encoders, batch: &[Sample]) -> promptseg::Result<LossBreakdown> {
    let mut tape = Tape::new();
    let p = enc.bind(&mut tape);
    let refs: Vec<&Sample> = batch.iter().collect();
    Ok(total_loss(&mut tape, enc, &p, &refs, 0.07)?.breakdown(&tape))
}

#[test]
fn total_loss_contracts() {
    let enc = Encoders::init(config(8), &vocab(), 1).unwrap();
    let one = samples(&[&[(1, 16)]]);
    assert!(matches!(loss_of(&enc, &one), Err(Error::Contract(_))));
    let mixed = samples(&[&[(1, 16)], &[(1, 8), (2, 8)]]);
    assert!(matches!(loss_of(&enc, &mixed), Err(Error::Contract(_))));

    let batch = samples(&[&[(1, 4), (2, 12)], &[(3, 10), (1, 6)], &[(2, 1), (4, 15)]]);
    let l = loss_of(&enc, &batch).unwrap();
    assert_eq!(l.total, l.sem + l.int + l.stat);
    assert!(l.sem >= 0.0 && l.int >= 0.0 && l.stat >= 0.0);
}

#[test]
fn identical_pairs_give_chance_level() {
    let enc = Encoders::init(config(8), &vocab(), 2).unwrap();
    let mut batch = samples(&[&[(1, 5), (3, 11)]]);
    batch.push(batch[0].clone());
    let l = loss_of(&enc, &batch).unwrap();
    let ln2 = 2f64.ln();
    close(l.sem, 2.0 * ln2, 1e-6);
    close(l.int, ln2, 1e-6);
    close(l.stat, ln2, 1e-6);
}

#[test]
fn scaling_frames_keeps_loss_finite_and_symmetric_in_batch_order() {
    let enc = Encoders::init(config(8), &vocab(), 3).unwrap();
    let batch = samples(&[&[(1, 16)], &[(2, 16)], &[(4, 16)]]);
    let a = loss_of(&enc, &batch).unwrap();
    let reversed: Vec<Sample> = batch.iter().rev().cloned().collect();
    let b = loss_of(&enc, &reversed).unwrap();
    close(a.total, b.total, 1e-12);
}

#[test]
fn total_loss_gradients_match_finite_differences() {
    let cases: [(usize, Vec<&[(u16, usize)]>); 3] = [
        (8, vec![&[(1, 16)], &[(2, 16)]]),
        (4, vec![&[(1, 7), (2, 9)], &[(3, 3), (1, 13)], &[(4, 8), (3, 8)]]),
        (6, vec![&[(1, 5), (2, 5), (3, 6)], &[(2, 2), (4, 4), (1, 10)]]),
    ];
    for (seed, (dim, patterns)) in cases.into_iter().enumerate() {
        let enc = Encoders::init(config(dim), &vocab(), seed as u64).unwrap();
        let batch = samples(&patterns);
        let sets = enc.param_sets();
        let sizes: Vec<usize> = sets.iter().map(|s| s.len()).collect();
        let inputs: Vec<Tensor> = sets.iter().flat_map(|s| s.tensors().to_vec()).collect();
        let err = gradcheck::max_relative_error(&inputs, |tape, vars| {
            let (img, rest) = vars.split_at(sizes[0]);
            let (txt, fus) = rest.split_at(sizes[1]);
            let p = promptseg::encoders::BoundEncoders {
                image: Bound::from_vars(img.to_vec()),
                text: Bound::from_vars(txt.to_vec()),
                fusion: Bound::from_vars(fus.to_vec()),
            };
            let refs: Vec<&Sample> = batch.iter().collect();
            Ok(total_loss(tape, &enc, &p, &refs, 0.5)?.total)
        })
        .unwrap();
        assert!(err < 1e-4, "case {seed}: {err}");
    }
}

fn corpus() -> Vec<Sample> {
    let patterns: Vec<Vec<(u16, usize)>> = (0..12u16)
        .map(|i| if i % 2 == 0 { vec![(i % 4 + 1, 16)] } else { vec![(i % 4 + 1, 6), ((i + 1) % 4 + 1, 10)] })
        .collect();
    let refs: Vec<&[(u16, usize)]> = patterns.iter().map(Vec::as_slice).collect();
    samples(&refs)
}

#[test]
fn batches_share_run_count_and_cover_each_clip_once() {
    let data = corpus();
    let batches = make_batches(&data, 4, &mut rng(1));
    let mut seen = vec![0; data.len()];
    for b in &batches {
        assert!(b.len() >= 2);
        assert!(b.iter().all(|&i| data[i].runs.len() == data[b[0]].runs.len()));
        b.iter().for_each(|&i| seen[i] += 1);
    }
    assert!(seen.iter().all(|&c| c <= 1));
    assert_eq!(make_batches(&data, 4, &mut rng(1)), batches);
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let data = corpus();
    let init = Encoders::init(config(8), &vocab(), 4).unwrap();
    let mut enc = init.clone();
    let cfg = PretrainConfig { epochs: 3, batch_size: 4, learning_rate: 0.0, seed: 2, ..Default::default() };
    let log = pretrain(&mut enc, &data, &cfg).unwrap();
    assert_eq!(enc, init);
    assert_eq!(log.len(), 3);
    // per-epoch batch partitions differ, so compare against a direct evaluation
    let batches = make_batches(&data, 4, &mut rng(2));
    let direct = evaluate(&init, &data, &batches, 0.07).unwrap();
    close(log[0].loss.total, direct.total, 1e-12);
}

#[test]
fn pretraining_is_deterministic_and_lowers_loss() {
    let data = corpus();
    let cfg = PretrainConfig { epochs: 8, batch_size: 4, learning_rate: 1e-2, seed: 5, ..Default::default() };
    let mut a = Encoders::init(config(8), &vocab(), 4).unwrap();
    let mut b = a.clone();
    let la = pretrain(&mut a, &data, &cfg).unwrap();
    let lb = pretrain(&mut b, &data, &cfg).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a, b);
    assert!(la.last().unwrap().loss.total < la[0].loss.total);
    let line = la[0].to_string();
    let fields: Vec<&str> = line.split(' ').collect();
    assert_eq!(fields.len(), 5);
    assert_eq!(fields[0], "1");
    assert!(fields[1..].iter().all(|f| f.split('.').nth(1).map(str::len) == Some(6)), "{line}");
}

#[test]
fn pretraining_errors() {
    let mut enc = Encoders::init(config(8), &vocab(), 4).unwrap();
    let lonely = samples(&[&[(1, 16)], &[(1, 8), (2, 8)]]);
    assert!(matches!(pretrain(&mut enc, &lonely, &PretrainConfig::default()), Err(Error::Config(_))));
    assert!(matches!(pretrain(&mut enc, &[], &PretrainConfig::default()), Err(Error::Config(_))));
    let bad = PretrainConfig { batch_size: 1, ..Default::default() };
    assert!(matches!(pretrain(&mut enc, &corpus(), &bad), Err(Error::Config(_))));

    let mut poisoned = corpus();
    poisoned[0].clip.frames[3] = f64::NAN;
    poisoned[1].clip.frames[3] = f64::NAN;
    let cfg = PretrainConfig { epochs: 1, batch_size: 12, ..Default::default() };
    match pretrain(&mut enc, &poisoned, &cfg) {
        Err(Error::Divergence { epoch: 1, .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}
