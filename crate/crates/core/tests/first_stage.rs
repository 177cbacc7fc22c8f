mod common;

use common::*;
use hbpe::first_stage::MIN_TARGET_VOCAB;
use hbpe::{load_external, train_bpe, FirstStageVocab, Pretokenize, Stage1Error, TokenId};
use proptest::prelude::*;
use rand::Rng;

fn trained_on_sample(target: usize, pretok: Pretokenize) -> FirstStageVocab {
    train_bpe(&sample_corpus(), target, pretok).unwrap()
}

#[test]
fn heap_encoder_matches_reference_on_random_inputs() {
    let mut r = rng(11);
    for case in 0..200 {
        let alphabet: &[u8] = if case % 2 == 0 { b"ab " } else { b"abcdxy \n" };
        let len = r.gen_range(1..=200);
        let corpus = random_text(&mut r, alphabet, len);
        let target = r.gen_range(MIN_TARGET_VOCAB..=300);
        let pretok = if case % 3 == 0 {
            Pretokenize::Whitespace
        } else {
            Pretokenize::None
        };
        let vocab = train_bpe(&corpus, target, pretok).unwrap();
        let len = r.gen_range(0..120);
        for text in [corpus.clone(), random_text(&mut r, alphabet, len)] {
            assert_eq!(vocab.encode(&text), reference_encode(&vocab, &text));
        }
    }
}

#[test]
fn incremental_trainer_matches_recounting_reference() {
    let mut r = rng(12);
    for case in 0..200 {
        let alphabet: &[u8] = match case % 3 {
            0 => b"ab",
            1 => b"abc ",
            _ => b"the cat sat",
        };
        let len = r.gen_range(1..=200);
        let corpus = random_text(&mut r, alphabet, len);
        let target = r.gen_range(MIN_TARGET_VOCAB..=300);
        let pretok = if case % 2 == 0 {
            Pretokenize::Whitespace
        } else {
            Pretokenize::None
        };
        let vocab = train_bpe(&corpus, target, pretok).unwrap();
        let got: Vec<(u32, u32, u32)> = vocab
            .merges()
            .iter()
            .map(|m| (m.left.0, m.right.0, m.result.0))
            .collect();
        assert_eq!(got, reference_train(&corpus, target, pretok), "case {case}");
    }
}

#[test]
fn vocabulary_stops_one_short_of_target() {
    let corpus = sample_corpus();
    for target in [257, 258, 300, 400] {
        let v = train_bpe(&corpus, target, Pretokenize::Whitespace).unwrap();
        assert_eq!(v.len(), target - 1);
    }
}

#[test]
fn training_is_deterministic() {
    let a = trained_on_sample(400, Pretokenize::Whitespace);
    let b = trained_on_sample(400, Pretokenize::Whitespace);
    assert_eq!(a.vocab_json(), b.vocab_json());
    assert_eq!(a.merges_txt(), b.merges_txt());
}

#[test]
fn training_rejects_bad_arguments() {
    assert!(matches!(
        train_bpe(b"", 300, Pretokenize::None),
        Err(Stage1Error::EmptyCorpus)
    ));
    assert!(matches!(
        train_bpe(b"abc", 256, Pretokenize::None),
        Err(Stage1Error::VocabTooSmall(256))
    ));
}

#[test]
fn whitespace_chunks_never_merge_across_space_boundaries() {
    let v = trained_on_sample(500, Pretokenize::Whitespace);
    for (_, bytes) in v.tokens() {
        let spaces = bytes
            .iter()
            .filter(|&&b| hbpe::text::is_space_like(b))
            .count();
        assert!(spaces == 0 || spaces == bytes.len(), "{bytes:?}");
    }
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (vp, mp) = (dir.path().join("vocab.json"), dir.path().join("merges.txt"));
    let v = trained_on_sample(420, Pretokenize::Whitespace);
    v.save(&vp, &mp).unwrap();
    let back = load_external(&vp, &mp).unwrap();
    assert_eq!(back, v);
    assert_eq!(back.pretokenize(), Pretokenize::Whitespace);
    let text = sample_corpus();
    assert_eq!(back.encode(&text), v.encode(&text));
}

#[test]
fn external_vocab_with_space_marker_character() {
    let dir = tempfile::tempdir().unwrap();
    let mut entries: Vec<String> = (0..=255u8)
        .map(|b| {
            let key =
                serde_json::to_string(&hbpe::first_stage::gpt2::byte_to_unicode(b).to_string())
                    .unwrap();
            format!("{key}: {b}")
        })
        .collect();
    entries.push("\"\u{120}a\": 256".into());
    let vp = dir.path().join("vocab.json");
    let mp = dir.path().join("merges.txt");
    std::fs::write(&vp, format!("{{{}}}", entries.join(", "))).unwrap();
    std::fs::write(&mp, "#version: 0.2\n\u{120} a\n").unwrap();
    let v = load_external(&vp, &mp).unwrap();
    assert_eq!(v.token_bytes(TokenId(256)), Some(&b" a"[..]));
    assert_eq!(v.encode(b" a"), vec![TokenId(256)]);
}

#[test]
fn loader_reports_line_of_bad_merge() {
    let dir = tempfile::tempdir().unwrap();
    let (vp, mp) = (dir.path().join("vocab.json"), dir.path().join("merges.txt"));
    let v = trained_on_sample(300, Pretokenize::None);
    v.save(&vp, &mp).unwrap();
    let mut lines: Vec<String> = std::fs::read_to_string(&mp)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    lines[3] = "only-one-field".into();
    std::fs::write(&mp, lines.join("\n")).unwrap();
    match load_external(&vp, &mp) {
        Err(Stage1Error::Malformed { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected a malformed-line error, got {other:?}"),
    }
}

#[test]
fn loader_reports_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let err = load_external(&missing, &missing).unwrap_err();
    assert!(matches!(err, Stage1Error::Io { .. }));
    assert!(err.to_string().contains("nope.json"));
}

#[test]
fn gpt2_files_load_with_expected_shape() {
    let (vp, mp) = gpt2_files();
    let v = load_external(&vp, &mp).unwrap();
    assert_eq!(v.len(), 50_257);
    assert_eq!(v.merges().len(), 50_000);
    let h = v.token_length_histogram();
    assert_eq!(h.total(), 50_257);
    assert_eq!(h.counts()[&1], 256);
    assert_eq!(h.max_len(), Some(128));
    assert!(h.count_shorter_than(15) * 2 > h.total());
}

#[test]
fn gpt2_encodes_common_phrase_like_reference() {
    let (vp, mp) = gpt2_files();
    let v = load_external(&vp, &mp).unwrap();
    assert_eq!(v.encode(b"Hello world"), vec![TokenId(15496), TokenId(995)]);
    let mut r = rng(5);
    let text = mixed_text(&mut r, 300);
    let ids = v.encode(&text);
    assert_eq!(v.decode(&ids).unwrap(), text);
    assert_eq!(ids, reference_encode(&v, &text));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decode_inverts_encode_on_arbitrary_bytes(
        text in proptest::collection::vec(any::<u8>(), 0..2048),
        pretok in prop_oneof![Just(Pretokenize::None), Just(Pretokenize::Whitespace)],
    ) {
        let v = train_bpe(&sample_corpus(), 600, pretok).unwrap();
        prop_assert_eq!(v.decode(&v.encode(&text)).unwrap(), text);
    }

    #[test]
    fn decode_inverts_encode_on_utf8(text in "[a-z 中文模型\\n\u{0}\u{ff}]{0,200}") {
        let v = train_bpe(&sample_corpus(), 600, Pretokenize::Whitespace).unwrap();
        let bytes = text.into_bytes();
        prop_assert_eq!(v.decode(&v.encode(&bytes)).unwrap(), bytes);
    }

    #[test]
    fn byte_level_vocab_is_identity(text in proptest::collection::vec(any::<u8>(), 0..512)) {
        let v = FirstStageVocab::byte_level(Pretokenize::None);
        let ids: Vec<u32> = v.encode(&text).into_iter().map(|t| t.0).collect();
        let bytes: Vec<u32> = text.iter().map(|&b| b as u32).collect();
        prop_assert_eq!(ids, bytes);
    }
}
