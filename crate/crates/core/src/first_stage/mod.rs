//! Byte-level first-stage BPE: training, encoding and decoding.
//!
//! Every byte value has a dedicated base token, so encoding is total and
//! `decode(encode(x)) == x` for arbitrary bytes. Trained vocabularies assign
//! ids `0..=255` to the raw bytes and `256 + k` to the token created by the
//! `k`-th merge; loaded vocabularies keep whatever ids their files use.

pub mod gpt2;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::pairs::PairStats;
use crate::text::is_space_like;

pub use gpt2::{byte_to_unicode, load_external, unicode_to_byte};

/// Minimum target vocabulary size accepted by [`train_bpe`].
pub const MIN_TARGET_VOCAB: usize = 257;

/// Identifier of a first-stage token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One learned merge: `left ++ right -> result`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenMerge {
    pub left: TokenId,
    pub right: TokenId,
    pub result: TokenId,
}

/// Pre-tokenization boundary rule. Merges never cross a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pretokenize {
    /// The whole input is one chunk.
    #[default]
    None,
    /// Chunks are maximal runs of space-like bytes or of non-space bytes.
    Whitespace,
}

impl Pretokenize {
    pub fn as_str(self) -> &'static str {
        match self {
            Pretokenize::None => "none",
            Pretokenize::Whitespace => "whitespace",
        }
    }

    /// Splits `text` into the chunks that merges may not cross.
    pub fn chunks(self, text: &[u8]) -> Vec<&[u8]> {
        match self {
            Pretokenize::None if text.is_empty() => Vec::new(),
            Pretokenize::None => vec![text],
            Pretokenize::Whitespace => {
                let mut out = Vec::new();
                let mut start = 0;
                for i in 1..text.len() {
                    if is_space_like(text[i]) != is_space_like(text[i - 1]) {
                        out.push(&text[start..i]);
                        start = i;
                    }
                }
                if start < text.len() {
                    out.push(&text[start..]);
                }
                out
            }
        }
    }
}

impl FromStr for Pretokenize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Pretokenize::None),
            "whitespace" => Ok(Pretokenize::Whitespace),
            other => Err(format!("unknown pre-tokenization rule {other:?}")),
        }
    }
}

impl fmt::Display for Pretokenize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum Stage1Error {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("target vocabulary size {0} is below the minimum of {MIN_TARGET_VOCAB}")]
    VocabTooSmall(usize),
    #[error("token id {id} is out of range for a vocabulary of {size} tokens")]
    TokenOutOfRange { id: u32, size: usize },
    #[error("token {0} has an empty byte sequence")]
    EmptyToken(u32),
    #[error("no single-byte token covers byte 0x{0:02x}")]
    MissingByteToken(u8),
    #[error("merge {index} is inconsistent: {reason}")]
    InvalidMerge { index: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: unknown symbol {symbol:?}")]
    UnknownSymbol {
        path: PathBuf,
        line: usize,
        symbol: String,
    },
}

impl Stage1Error {
    pub fn code(&self) -> &'static str {
        match self {
            Stage1Error::EmptyCorpus => "S1-001",
            Stage1Error::VocabTooSmall(_) => "S1-002",
            Stage1Error::TokenOutOfRange { .. } => "S1-003",
            Stage1Error::EmptyToken(_) => "S1-004",
            Stage1Error::MissingByteToken(_) => "S1-005",
            Stage1Error::InvalidMerge { .. } => "S1-006",
            Stage1Error::Io { .. } => "S1-007",
            Stage1Error::Malformed { .. } => "S1-008",
            Stage1Error::UnknownSymbol { .. } => "S1-009",
        }
    }
}

/// A byte-level BPE vocabulary with its ordered merge list.
///
/// Immutable once built; share it freely between threads.
#[derive(Debug, Clone)]
pub struct FirstStageVocab {
    token_bytes: Vec<Vec<u8>>,
    merges: Vec<TokenMerge>,
    byte_tokens: [TokenId; 256],
    /// pair -> (rank, result)
    ranks: HashMap<(u32, u32), (u32, u32)>,
    pretokenize: Pretokenize,
}

impl PartialEq for FirstStageVocab {
    fn eq(&self, other: &Self) -> bool {
        self.token_bytes == other.token_bytes
            && self.merges == other.merges
            && self.pretokenize == other.pretokenize
    }
}

impl Eq for FirstStageVocab {}

impl FirstStageVocab {
    /// The 256 raw byte tokens and no merges.
    pub fn byte_level(pretokenize: Pretokenize) -> Self {
        let token_bytes = (0..=255u8).map(|b| vec![b]).collect();
        Self::from_parts(token_bytes, Vec::new(), pretokenize)
            .expect("byte-level vocabulary is well-formed")
    }

    /// Builds a vocabulary from explicit token bytes and merges, checking that
    /// every byte is covered and every merge concatenates its parents.
    pub fn from_parts(
        token_bytes: Vec<Vec<u8>>,
        merges: Vec<TokenMerge>,
        pretokenize: Pretokenize,
    ) -> Result<Self, Stage1Error> {
        let size = token_bytes.len();
        let mut byte_tokens: [Option<TokenId>; 256] = [None; 256];
        for (id, bytes) in token_bytes.iter().enumerate() {
            if bytes.is_empty() {
                return Err(Stage1Error::EmptyToken(id as u32));
            }
            if bytes.len() == 1 && byte_tokens[bytes[0] as usize].is_none() {
                byte_tokens[bytes[0] as usize] = Some(TokenId(id as u32));
            }
        }
        let mut covered = [TokenId(0); 256];
        for (b, slot) in byte_tokens.iter().enumerate() {
            covered[b] = slot.ok_or(Stage1Error::MissingByteToken(b as u8))?;
        }

        let mut ranks = HashMap::with_capacity(merges.len());
        for (index, m) in merges.iter().enumerate() {
            for id in [m.left, m.right, m.result] {
                if id.index() >= size {
                    return Err(Stage1Error::InvalidMerge {
                        index,
                        reason: format!("token id {id} is out of range"),
                    });
                }
            }
            let joined_len = token_bytes[m.left.index()].len() + token_bytes[m.right.index()].len();
            let result = &token_bytes[m.result.index()];
            if result.len() != joined_len
                || !result.starts_with(&token_bytes[m.left.index()])
                || !result.ends_with(&token_bytes[m.right.index()])
            {
                return Err(Stage1Error::InvalidMerge {
                    index,
                    reason: "result bytes are not the concatenation of its parents".into(),
                });
            }
            // First occurrence of a pair wins, matching GPT-2 loaders.
            ranks
                .entry((m.left.0, m.right.0))
                .or_insert((index as u32, m.result.0));
        }

        Ok(Self {
            token_bytes,
            merges,
            byte_tokens: covered,
            ranks,
            pretokenize,
        })
    }

    /// Builds a trained-style vocabulary from merges given as byte strings.
    /// Each side must already be a token; the result gets the next free id
    /// unless its bytes are already present.
    pub fn from_byte_merges(
        merges: &[(&[u8], &[u8])],
        pretokenize: Pretokenize,
    ) -> Result<Self, Stage1Error> {
        let mut token_bytes: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let mut lookup: HashMap<Vec<u8>, u32> = token_bytes
            .iter()
            .enumerate()
            .map(|(i, b)| (b.clone(), i as u32))
            .collect();
        let mut out = Vec::with_capacity(merges.len());
        for (index, (l, r)) in merges.iter().enumerate() {
            let find = |bytes: &[u8]| {
                lookup
                    .get(bytes)
                    .copied()
                    .ok_or_else(|| Stage1Error::InvalidMerge {
                        index,
                        reason: format!("{:?} is not a token", String::from_utf8_lossy(bytes)),
                    })
            };
            let left = find(l)?;
            let right = find(r)?;
            let joined = [*l, *r].concat();
            let result = match lookup.get(&joined) {
                Some(&id) => id,
                None => {
                    let id = token_bytes.len() as u32;
                    token_bytes.push(joined.clone());
                    lookup.insert(joined, id);
                    id
                }
            };
            out.push(TokenMerge {
                left: TokenId(left),
                right: TokenId(right),
                result: TokenId(result),
            });
        }
        Self::from_parts(token_bytes, out, pretokenize)
    }

    /// Number of tokens `V`.
    pub fn len(&self) -> usize {
        self.token_bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_bytes.is_empty()
    }

    pub fn merges(&self) -> &[TokenMerge] {
        &self.merges
    }

    pub fn pretokenize(&self) -> Pretokenize {
        self.pretokenize
    }

    /// Base token covering a single byte.
    pub fn byte_token(&self, b: u8) -> TokenId {
        self.byte_tokens[b as usize]
    }

    pub fn token_bytes(&self, id: TokenId) -> Option<&[u8]> {
        self.token_bytes.get(id.index()).map(Vec::as_slice)
    }

    /// All tokens in id order.
    pub fn tokens(&self) -> impl Iterator<Item = (TokenId, &[u8])> + '_ {
        self.token_bytes
            .iter()
            .enumerate()
            .map(|(i, b)| (TokenId(i as u32), b.as_slice()))
    }

    /// Splits `text` into tokens. Never fails.
    pub fn encode(&self, text: &[u8]) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(text.len() / 2 + 1);
        for chunk in self.pretokenize.chunks(text) {
            self.encode_chunk(chunk, &mut out);
        }
        out
    }

    /// Reference BPE on one chunk: repeatedly take the lowest-rank adjacent
    /// pair and merge all of its occurrences left to right.
    fn encode_chunk(&self, chunk: &[u8], out: &mut Vec<TokenId>) {
        const NONE: usize = usize::MAX;
        let n = chunk.len();
        if n == 0 {
            return;
        }
        if n == 1 || self.ranks.is_empty() {
            out.extend(chunk.iter().map(|&b| self.byte_token(b)));
            return;
        }
        let mut ids: Vec<u32> = chunk.iter().map(|&b| self.byte_token(b).0).collect();
        let mut next: Vec<usize> = (1..=n).map(|i| if i == n { NONE } else { i }).collect();
        let mut prev: Vec<usize> = (0..n).map(|i| if i == 0 { NONE } else { i - 1 }).collect();
        let mut alive = vec![true; n];

        let mut heap = BinaryHeap::new();
        for i in 0..n - 1 {
            if let Some(&(rank, _)) = self.ranks.get(&(ids[i], ids[i + 1])) {
                heap.push(Reverse((rank, i)));
            }
        }

        let mut batch = Vec::new();
        while let Some(&Reverse((rank, _))) = heap.peek() {
            batch.clear();
            while let Some(&Reverse((r, pos))) = heap.peek() {
                if r != rank {
                    break;
                }
                heap.pop();
                batch.push(pos);
            }
            batch.sort_unstable();
            for &i in &batch {
                if !alive[i] {
                    continue;
                }
                let j = next[i];
                if j == NONE {
                    continue;
                }
                let result = match self.ranks.get(&(ids[i], ids[j])) {
                    Some(&(r, result)) if r == rank => result,
                    _ => continue,
                };
                ids[i] = result;
                alive[j] = false;
                next[i] = next[j];
                if next[j] != NONE {
                    prev[next[j]] = i;
                }
                if prev[i] != NONE {
                    if let Some(&(r, _)) = self.ranks.get(&(ids[prev[i]], ids[i])) {
                        heap.push(Reverse((r, prev[i])));
                    }
                }
                if next[i] != NONE {
                    if let Some(&(r, _)) = self.ranks.get(&(ids[i], ids[next[i]])) {
                        heap.push(Reverse((r, i)));
                    }
                }
            }
        }

        let mut i = 0;
        while i != NONE {
            out.push(TokenId(ids[i]));
            i = next[i];
        }
    }

    /// Concatenates the bytes of `ids`.
    pub fn decode(&self, ids: &[TokenId]) -> Result<Vec<u8>, Stage1Error> {
        let mut out = Vec::with_capacity(ids.len() * 4);
        for &id in ids {
            let bytes = self.token_bytes(id).ok_or(Stage1Error::TokenOutOfRange {
                id: id.0,
                size: self.len(),
            })?;
            out.extend_from_slice(bytes);
        }
        Ok(out)
    }

    /// Distribution of token byte lengths over the whole vocabulary.
    pub fn token_length_histogram(&self) -> LengthHistogram {
        let mut counts = BTreeMap::new();
        for bytes in &self.token_bytes {
            *counts.entry(bytes.len()).or_insert(0) += 1;
        }
        LengthHistogram { counts }
    }
}

/// Trains a byte-level BPE vocabulary.
///
/// The vocabulary grows by one token per merge until it holds
/// `target_vocab_size - 1` tokens (one id is left for an end-of-text marker,
/// as in GPT-2's 50,257 = 256 + 50,000 + 1), or until no adjacent pair is
/// left inside any pre-tokenization chunk.
pub fn train_bpe(
    corpus: &[u8],
    target_vocab_size: usize,
    pretokenize: Pretokenize,
) -> Result<FirstStageVocab, Stage1Error> {
    if target_vocab_size < MIN_TARGET_VOCAB {
        return Err(Stage1Error::VocabTooSmall(target_vocab_size));
    }
    if corpus.is_empty() {
        return Err(Stage1Error::EmptyCorpus);
    }

    let mut chunk_freq: BTreeMap<&[u8], u64> = BTreeMap::new();
    for chunk in pretokenize.chunks(corpus) {
        *chunk_freq.entry(chunk).or_insert(0) += 1;
    }
    let seqs: Vec<Vec<u32>> = chunk_freq
        .keys()
        .map(|c| c.iter().map(|&b| b as u32).collect())
        .collect();
    let weights: Vec<u64> = chunk_freq.values().copied().collect();
    let active = vec![true; seqs.len()];
    let mut stats = PairStats::new(seqs, weights, active, None);

    let mut token_bytes: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut by_bytes: HashMap<Vec<u8>, u32> = token_bytes
        .iter()
        .enumerate()
        .map(|(i, b)| (b.clone(), i as u32))
        .collect();
    let mut merges = Vec::new();

    while token_bytes.len() < target_vocab_size - 1 {
        let Some((pair, _)) = stats.best_pair() else {
            break;
        };
        let joined = [
            token_bytes[pair.0 as usize].as_slice(),
            token_bytes[pair.1 as usize].as_slice(),
        ]
        .concat();
        let result = match by_bytes.get(&joined) {
            Some(&id) => id,
            None => {
                let id = token_bytes.len() as u32;
                token_bytes.push(joined.clone());
                by_bytes.insert(joined, id);
                id
            }
        };
        stats.apply_merge(pair, result);
        merges.push(TokenMerge {
            left: TokenId(pair.0),
            right: TokenId(pair.1),
            result: TokenId(result),
        });
    }

    FirstStageVocab::from_parts(token_bytes, merges, pretokenize)
}

/// Token byte-length counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthHistogram {
    counts: BTreeMap<usize, usize>,
}

impl LengthHistogram {
    pub fn counts(&self) -> &BTreeMap<usize, usize> {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn max_len(&self) -> Option<usize> {
        self.counts.keys().next_back().copied()
    }

    /// Number of tokens strictly shorter than `len` bytes.
    pub fn count_shorter_than(&self, len: usize) -> usize {
        self.counts.range(..len).map(|(_, c)| c).sum()
    }

    /// Smallest length `L` such that at least a fraction `q` of tokens have
    /// length `<= L`.
    pub fn quantile(&self, q: f64) -> Option<usize> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let needed = (q.clamp(0.0, 1.0) * total as f64).ceil() as usize;
        let mut seen = 0;
        for (&len, &c) in &self.counts {
            seen += c;
            if seen >= needed.max(1) {
                return Some(len);
            }
        }
        self.max_len()
    }
}
