//! Brute-force references and fixtures shared by the integration tests.
//!
//! Nothing here calls into the incremental training or heap-based encoding
//! code paths it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use hbpe::{FirstStageVocab, Pretokenize, TokenId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MARKER: u32 = 256;

/// Fixture directory of the core crate, reachable from any workspace member.
const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures");

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(FIXTURES).join(name)
}

pub fn gpt2_files() -> (PathBuf, PathBuf) {
    (fixture("gpt2/vocab.json"), fixture("gpt2/merges.txt"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_bytes(rng: &mut impl Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.gen()).collect()
}

/// Random bytes drawn from a small alphabet so that pairs repeat.
pub fn random_text(rng: &mut impl Rng, alphabet: &[u8], len: usize) -> Vec<u8> {
    (0..len)
        .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
        .collect()
}

/// First-stage vocabulary whose merges build each word left to right.
pub fn vocab_building(words: &[&[u8]]) -> FirstStageVocab {
    let mut merges: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for w in words {
        for end in 2..=w.len() {
            let pair = (w[..end - 1].to_vec(), w[end - 1..end].to_vec());
            if !merges.contains(&pair) {
                merges.push(pair);
            }
        }
    }
    let borrowed: Vec<(&[u8], &[u8])> = merges
        .iter()
        .map(|(l, r)| (l.as_slice(), r.as_slice()))
        .collect();
    FirstStageVocab::from_byte_merges(&borrowed, Pretokenize::None).unwrap()
}

/// The four-token toy tokenizer splitting "This is a test!" into
/// "This is", " a", " test", "!".
pub fn this_is_a_test_vocab() -> FirstStageVocab {
    vocab_building(&[b"This is", b" a", b" test"])
}

pub fn token_id(vocab: &FirstStageVocab, bytes: &[u8]) -> TokenId {
    vocab
        .tokens()
        .find(|(_, b)| *b == bytes)
        .map(|(id, _)| id)
        .expect("token present")
}

/// Plain-text corpus bundled with the tests.
pub fn sample_corpus() -> Vec<u8> {
    std::fs::read(fixture("sample.txt")).unwrap()
}

fn merge_all(seq: &[u32], pair: (u32, u32), new: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(seq.len());
    let mut i = 0;
    while i < seq.len() {
        if i + 1 < seq.len() && seq[i] == pair.0 && seq[i + 1] == pair.1 {
            out.push(new);
            i += 2;
        } else {
            out.push(seq[i]);
            i += 1;
        }
    }
    out
}

/// Reference BPE encoding: scan every adjacent pair for the lowest-ranked
/// merge, apply it everywhere left to right, repeat until nothing applies.
pub fn reference_encode(vocab: &FirstStageVocab, text: &[u8]) -> Vec<TokenId> {
    let mut ranks: HashMap<(u32, u32), (usize, u32)> = HashMap::new();
    for (rank, m) in vocab.merges().iter().enumerate() {
        ranks
            .entry((m.left.0, m.right.0))
            .or_insert((rank, m.result.0));
    }
    let mut out = Vec::new();
    for chunk in vocab.pretokenize().chunks(text) {
        let mut word: Vec<u32> = chunk.iter().map(|&b| vocab.byte_token(b).0).collect();
        loop {
            let best = word
                .windows(2)
                .filter_map(|w| {
                    ranks
                        .get(&(w[0], w[1]))
                        .map(|&(r, new)| (r, (w[0], w[1]), new))
                })
                .min();
            let Some((_, pair, new)) = best else { break };
            word = merge_all(&word, pair, new);
        }
        out.extend(word.into_iter().map(TokenId));
    }
    out
}

/// Reference first-stage trainer recounting every pair from scratch.
/// Returns merges as `(left, right, result)` ids.
pub fn reference_train(corpus: &[u8], target: usize, pretok: Pretokenize) -> Vec<(u32, u32, u32)> {
    let mut words: Vec<Vec<u32>> = pretok
        .chunks(corpus)
        .into_iter()
        .map(|c| c.iter().map(|&b| b as u32).collect())
        .collect();
    let mut token_bytes: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut merges = Vec::new();
    while token_bytes.len() < target - 1 {
        let mut counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for w in &words {
            for p in w.windows(2) {
                *counts.entry((p[0], p[1])).or_insert(0) += 1;
            }
        }
        let mut best: Option<((u32, u32), u64)> = None;
        for (pair, c) in counts {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((pair, c));
            }
        }
        let Some((pair, _)) = best else { break };
        let joined = [
            token_bytes[pair.0 as usize].clone(),
            token_bytes[pair.1 as usize].clone(),
        ]
        .concat();
        let result = match token_bytes.iter().position(|t| *t == joined) {
            Some(i) => i as u32,
            None => {
                token_bytes.push(joined);
                token_bytes.len() as u32 - 1
            }
        };
        for w in &mut words {
            *w = merge_all(w, pair, result);
        }
        merges.push((pair.0, pair.1, result));
    }
    merges
}

/// A merge as `(left, right, new)` raw ids.
pub type Triple = (u32, u32, u32);

/// Reference second stage: recompute all pair counts over the active set on
/// every iteration. Returns `(merges, patches)` as raw ids.
pub fn reference_hier(tokens: &[Vec<u8>], s: usize) -> (Vec<Triple>, Vec<Vec<u32>>) {
    let mut seqs: Vec<Vec<u32>> = tokens
        .iter()
        .map(|t| t.iter().map(|&b| b as u32).chain([MARKER]).collect())
        .collect();
    let mut active: Vec<usize> = (0..seqs.len()).filter(|&i| seqs[i].len() > s).collect();
    let mut merges = Vec::new();
    while !active.is_empty() {
        let mut counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for &i in &active {
            for p in seqs[i].windows(2) {
                if p[0] != MARKER && p[1] != MARKER {
                    *counts.entry((p[0], p[1])).or_insert(0) += 1;
                }
            }
        }
        let mut best: Option<((u32, u32), u64)> = None;
        for (pair, c) in counts {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((pair, c));
            }
        }
        let (pair, _) = best.expect("an over-long sequence always has a pair");
        let new = 257 + merges.len() as u32;
        for &i in &active {
            seqs[i] = merge_all(&seqs[i], pair, new);
        }
        active.retain(|&i| seqs[i].len() > s);
        merges.push((pair.0, pair.1, new));
    }
    (merges, seqs)
}

/// Random multi-byte token list over a small alphabet.
pub fn random_tokens(rng: &mut impl Rng, count: usize, max_len: usize) -> Vec<Vec<u8>> {
    let alphabets: [&[u8]; 3] = [b"ab", b"abcde", b"etaoin shrdlu"];
    let alphabet = alphabets[rng.gen_range(0..alphabets.len())];
    (0..count)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            random_text(rng, alphabet, len)
        })
        .collect()
}

/// Random first-stage vocabulary: byte coverage plus `extra` multi-byte tokens
/// with no merges (second-stage training only looks at token bytes).
pub fn random_vocab(rng: &mut impl Rng, extra: usize, max_len: usize) -> FirstStageVocab {
    let mut bytes: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    for t in random_tokens(rng, extra, max_len) {
        if t.len() > 1 && !bytes.contains(&t) {
            bytes.push(t);
        }
    }
    FirstStageVocab::from_parts(bytes, vec![], Pretokenize::None).unwrap()
}

/// Mixed English and Chinese UTF-8 text.
pub fn mixed_text(rng: &mut impl Rng, words: usize) -> Vec<u8> {
    const EN: &[&str] = &["the", "model", "patch", "token", "byte", "of", "and", "in"];
    const ZH: &[&str] = &["中文", "模型", "字节", "分词", "语言", "数据"];
    let mut s = String::new();
    for _ in 0..words {
        let w = if rng.gen_bool(0.4) {
            ZH[rng.gen_range(0..ZH.len())]
        } else {
            EN[rng.gen_range(0..EN.len())]
        };
        s.push_str(w);
        s.push(if rng.gen_bool(0.1) { '\n' } else { ' ' });
    }
    s.into_bytes()
}
