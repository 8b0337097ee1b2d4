use promptseg::autodiff::{gradcheck, Bound, Tape, Tensor, Var};
use promptseg::dataset::{GestureVocabulary, Label};
use promptseg::encoders::{checkpoint, EncoderConfig, Encoders, FusionModule, ImageEncoder, Lexicon, TextEncoder};
use promptseg::sampling::{label_runs, FrameClip, CLIP_LEN};
use promptseg::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_config() -> EncoderConfig {
    EncoderConfig { height: 4, width: 4, hidden: 8, dim: 8, heads: 2 }
}

fn vocab() -> GestureVocabulary {
    GestureVocabulary::jigsaws_prefix(4).unwrap()
}

fn probe(tape: &mut Tape, y: Var, seed: u64) -> promptseg::Result<Var> {
    let w = Tensor::randn(tape.shape(y).to_vec(), 1.0, &mut rng(seed ^ 0x5eed));
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

fn clip_with(labels: Vec<Label>, pixels: usize, seed: u64) -> FrameClip {
    FrameClip {
        video_id: "v".into(),
        start: 0,
        stride: 1,
        height: 4,
        width: pixels / 4,
        frames: Tensor::randn(vec![CLIP_LEN * pixels], 1.0, &mut rng(seed)).into_data(),
        labels,
    }
}

fn gestures(pattern: &[(u16, usize)]) -> Vec<Label> {
    pattern.iter().flat_map(|&(g, n)| std::iter::repeat(Label::Gesture(g)).take(n)).collect()
}

#[test]
fn initialization_is_seeded() {
    let a = Encoders::init(small_config(), &vocab(), 3).unwrap();
    let b = Encoders::init(small_config(), &vocab(), 3).unwrap();
    let c = Encoders::init(small_config(), &vocab(), 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn image_shapes_and_frozen_embedding_agree() {
    let enc = Encoders::init(small_config(), &vocab(), 1).unwrap();
    let clip = clip_with(gestures(&[(1, 16)]), 16, 2);
    let mut tape = Tape::new();
    let p = enc.bind(&mut tape);
    let z = enc.image.encode_clip(&mut tape, &p.image, &clip).unwrap();
    assert_eq!(tape.shape(z), &[CLIP_LEN, 8]);

    // 300 frames crosses the internal chunk boundary
    let frames = Tensor::randn(vec![300 * 16], 1.0, &mut rng(5)).into_data();
    let emb = enc.image.embed(&frames).unwrap();
    assert_eq!(emb.shape(), &[300, 8]);
    for t in [0, 255, 256, 299] {
        let mut tape = Tape::new();
        let p = enc.image.params.bind_frozen(&mut tape);
        let x = tape.constant(Tensor::matrix(1, 16, frames[t * 16..(t + 1) * 16].to_vec()).unwrap());
        let y = enc.image.forward(&mut tape, &p, x).unwrap();
        assert_eq!(tape.value(y).data(), emb.row(t));
    }
    assert!(matches!(enc.image.embed(&frames[..17]), Err(Error::Dimension(_))));
}

#[test]
fn frame_embeddings_do_not_mix_across_rows() {
    let enc = ImageEncoder::new(4, 4, 8, 8, &mut rng(1));
    let frames = Tensor::randn(vec![5, 16], 1.0, &mut rng(2));
    let mut swapped = frames.clone().into_data();
    for i in 0..16 {
        swapped.swap(i, 3 * 16 + i);
    }
    let a = enc.embed(frames.data()).unwrap();
    let b = enc.embed(&swapped).unwrap();
    assert_eq!(a.row(0), b.row(3));
    assert_eq!(a.row(3), b.row(0));
    assert_eq!(a.row(1), b.row(1));
}

#[test]
fn image_gradients_match_finite_differences() {
    for (s, &(pixels, hidden, dim)) in [(4, 3, 2), (6, 5, 4), (9, 4, 3)].iter().enumerate() {
        let enc = ImageEncoder::new(1, pixels, hidden, dim, &mut rng(s as u64));
        let frames = Tensor::randn(vec![2, pixels], 1.0, &mut rng(10 + s as u64));
        let mut inputs: Vec<Tensor> = enc.params.tensors().to_vec();
        inputs.push(frames);
        let n = enc.params.len();
        let err = gradcheck::max_relative_error(&inputs, |tape, vars| {
            let p = Bound::from_vars(vars[..n].to_vec());
            let y = enc.forward(tape, &p, vars[n])?;
            probe(tape, y, s as u64)
        })
        .unwrap();
        assert!(err < 1e-4, "shape {s}: {err}");
    }
}

#[test]
fn unknown_words_share_one_embedding() {
    let lex = Lexicon::from_words(["alpha", "beta"].map(String::from));
    assert_eq!(lex.encode("zeta"), lex.encode("omega"));
    assert_eq!(lex.id("zeta"), 0);
    let text = TextEncoder::new(lex, 6, &mut rng(1));
    assert_eq!(text.encode("alpha zeta").unwrap(), text.encode("alpha omega").unwrap());
    assert_ne!(text.encode("alpha").unwrap(), text.encode("beta").unwrap());
    assert_eq!(text.encode("Alpha, BETA").unwrap(), text.encode("alpha beta").unwrap());
}

#[test]
fn empty_prompt_is_rejected() {
    let text = TextEncoder::new(Lexicon::for_vocabulary(&vocab()), 4, &mut rng(1));
    assert!(matches!(text.encode(""), Err(Error::Contract(_))));
    assert!(matches!(text.encode(" ,. "), Err(Error::Contract(_))));
}

#[test]
fn lexicon_covers_every_prompt_word() {
    let lex = Lexicon::for_vocabulary(&vocab());
    let words = "this video contains 3 actions in total is the sixteenth action firstly person performing gesture 4 \
                 waiting and preparing for surgery finishing";
    for w in words.split_whitespace() {
        assert_ne!(lex.id(w), 0, "{w} missing");
    }
}

#[test]
fn text_gradients_match_finite_differences() {
    let prompts = ["firstly the person is performing gesture 2", "this video contains 2 actions in total", "zzz"];
    for (s, dim) in [2usize, 4, 6].into_iter().enumerate() {
        let text = TextEncoder::new(Lexicon::for_vocabulary(&vocab()), dim, &mut rng(s as u64));
        let inputs = text.params.tensors().to_vec();
        let err = gradcheck::max_relative_error(&inputs, |tape, vars| {
            let p = Bound::from_vars(vars.to_vec());
            let y = text.forward(tape, &p, &prompts)?;
            probe(tape, y, s as u64)
        })
        .unwrap();
        assert!(err < 1e-4, "dim {dim}: {err}");
    }
}

fn fusion_values(f: &FusionModule, frames: &Tensor, ords: &Tensor, labels: &[Label]) -> promptseg::encoders::FusionOutput {
    let mut tape = Tape::new();
    let p = f.params.bind_frozen(&mut tape);
    let (x, o) = (tape.constant(frames.clone()), tape.constant(ords.clone()));
    f.forward(&mut tape, &p, x, o, &label_runs(labels)).unwrap().values(&tape)
}

#[test]
fn single_run_pooled_output_equals_the_run_output() {
    let f = FusionModule::new(8, 2, &mut rng(1)).unwrap();
    let frames = Tensor::randn(vec![16, 8], 1.0, &mut rng(2));
    let ords = Tensor::randn(vec![1, 8], 1.0, &mut rng(3));
    let out = fusion_values(&f, &frames, &ords, &gestures(&[(2, 16)]));
    assert_eq!(out.per_run.len(), 1);
    for (a, b) in out.clip.data().iter().zip(out.per_run[0].data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn pooled_output_is_the_mean_of_run_outputs() {
    let f = FusionModule::new(8, 4, &mut rng(1)).unwrap();
    for (seed, pattern) in [vec![(1, 5), (2, 11)], vec![(3, 2), (1, 7), (4, 4), (2, 3)]].into_iter().enumerate() {
        let labels = gestures(&pattern);
        let k = pattern.len();
        let frames = Tensor::randn(vec![16, 8], 1.0, &mut rng(seed as u64));
        let ords = Tensor::randn(vec![k, 8], 1.0, &mut rng(50 + seed as u64));
        let out = fusion_values(&f, &frames, &ords, &labels);
        assert_eq!(out.per_run.len(), k);
        assert_eq!(out.count.len(), 8);
        for i in 0..8 {
            let mean = out.per_run.iter().map(|z| z.data()[i]).sum::<f64>() / k as f64;
            assert!((out.clip.data()[i] - mean).abs() < 1e-9);
        }
    }
}

#[test]
fn fusion_rejects_bad_inputs() {
    let f = FusionModule::new(8, 2, &mut rng(1)).unwrap();
    assert!(FusionModule::new(8, 3, &mut rng(1)).is_err());
    let mut tape = Tape::new();
    let p = f.params.bind_frozen(&mut tape);
    let x = tape.constant(Tensor::zeros(vec![16, 8]));
    let o = tape.constant(Tensor::zeros(vec![2, 8]));
    let runs = label_runs(&gestures(&[(1, 16)]));
    assert!(matches!(f.forward(&mut tape, &p, x, o, &runs), Err(Error::Dimension(_))));
    assert!(matches!(f.forward(&mut tape, &p, x, o, &[]), Err(Error::Contract(_))));
}

#[test]
fn fusion_gradients_match_finite_differences() {
    let cases: [(usize, usize, Vec<(u16, usize)>); 3] =
        [(8, 2, vec![(1, 16)]), (4, 1, vec![(1, 6), (2, 10)]), (6, 3, vec![(2, 3), (1, 9), (3, 4)])];
    for (s, (dim, heads, pattern)) in cases.into_iter().enumerate() {
        let f = FusionModule::new(dim, heads, &mut rng(s as u64)).unwrap();
        let runs = label_runs(&gestures(&pattern));
        let k = runs.len();
        let mut inputs = f.params.tensors().to_vec();
        inputs.push(Tensor::randn(vec![16, dim], 1.0, &mut rng(20 + s as u64)));
        inputs.push(Tensor::randn(vec![k, dim], 1.0, &mut rng(40 + s as u64)));
        let n = f.params.len();
        let err = gradcheck::max_relative_error(&inputs, |tape, vars| {
            let p = Bound::from_vars(vars[..n].to_vec());
            let out = f.forward(tape, &p, vars[n], vars[n + 1], &runs)?;
            let mut parts = out.per_run.clone();
            parts.push(out.clip);
            parts.push(out.count);
            let all = tape.concat_rows(&parts)?;
            probe(tape, all, s as u64)
        })
        .unwrap();
        assert!(err < 1e-4, "case {s}: {err}");
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let enc = Encoders::init(small_config(), &vocab(), 9).unwrap();
    checkpoint::save(&enc, dir.path()).unwrap();
    let back = checkpoint::load(dir.path()).unwrap();
    assert_eq!(enc, back);

    std::fs::write(dir.path().join("lexicon.txt"), "<unk>\nalpha\n").unwrap();
    assert!(checkpoint::load(dir.path()).is_err());
}

#[test]
fn checkpoint_rejects_truncated_weights() {
    let enc = Encoders::init(small_config(), &vocab(), 9).unwrap();
    let named: Vec<(String, Tensor)> =
        enc.image.params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
    let bytes = checkpoint::encode_named(&named);
    assert_eq!(checkpoint::decode_named(&bytes).unwrap(), named);
    assert!(checkpoint::decode_named(&bytes[..bytes.len() - 3]).is_err());
    assert!(checkpoint::decode_named(b"XXXX").is_err());
}
