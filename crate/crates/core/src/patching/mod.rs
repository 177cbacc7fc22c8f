//! Baseline byte-grouping strategies and comparable patch statistics.

mod entropy;

use std::collections::BTreeMap;

use num_rational::Ratio;
use thiserror::Error;

use crate::first_stage::FirstStageVocab;
use crate::hier_bpe::{HierError, PatchTable};
use crate::num::Real;
use crate::text::{is_space_like, word_count};

pub use entropy::{NgramEntropyScorer, ScorerError, MAX_ORDER};

#[derive(Debug, Error)]
pub enum PatchingError {
    #[error("patch size must be at least 1")]
    ZeroPatchSize,
    #[error("threshold must be non-negative")]
    NegativeThreshold,
    #[error("patch ends must be strictly increasing and finish at the input length")]
    BadBoundaries,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Hier(#[from] HierError),
}

impl PatchingError {
    pub fn code(&self) -> &'static str {
        match self {
            PatchingError::ZeroPatchSize => "PS-101",
            PatchingError::NegativeThreshold => "PS-102",
            PatchingError::BadBoundaries => "PS-103",
            PatchingError::Scorer(e) => e.code(),
            PatchingError::Hier(e) => e.code(),
        }
    }
}

/// A partition of `0..len` into non-empty consecutive patches, stored as the
/// exclusive end offset of each patch.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Boundaries {
    ends: Vec<usize>,
}

impl Boundaries {
    pub fn from_ends(ends: Vec<usize>) -> Result<Self, PatchingError> {
        let mut prev = 0;
        for &e in &ends {
            if e <= prev {
                return Err(PatchingError::BadBoundaries);
            }
            prev = e;
        }
        Ok(Self { ends })
    }

    /// Builds the partition from patch lengths.
    pub fn from_lengths<I: IntoIterator<Item = usize>>(lengths: I) -> Result<Self, PatchingError> {
        let mut ends = Vec::new();
        let mut at = 0;
        for l in lengths {
            at += l;
            ends.push(at);
        }
        Self::from_ends(ends)
    }

    pub fn ends(&self) -> &[usize] {
        &self.ends
    }

    /// Start offsets of every patch after the first.
    pub fn cut_points(&self) -> &[usize] {
        match self.ends.split_last() {
            Some((_, rest)) => rest,
            None => &[],
        }
    }

    pub fn patch_count(&self) -> usize {
        self.ends.len()
    }

    pub fn byte_len(&self) -> usize {
        self.ends.last().copied().unwrap_or(0)
    }

    pub fn lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.ends.iter().scan(0, |prev, &e| {
            let l = e - *prev;
            *prev = e;
            Some(l)
        })
    }

    pub fn patches<'a>(&'a self, bytes: &'a [u8]) -> impl Iterator<Item = &'a [u8]> + 'a {
        self.ends.iter().scan(0, move |prev, &e| {
            let p = &bytes[*prev..e];
            *prev = e;
            Some(p)
        })
    }
}

/// Greedy segmentation: a patch ends before `i` when `starts_patch(i)` holds
/// or the patch has reached `max_size`.
fn segment<P>(len: usize, max_size: Option<usize>, mut starts_patch: P) -> Boundaries
where
    P: FnMut(usize) -> bool,
{
    let mut ends = Vec::new();
    let mut start = 0;
    for i in 1..len {
        let full = max_size.is_some_and(|m| i - start >= m);
        if full || starts_patch(i) {
            ends.push(i);
            start = i;
        }
    }
    if len > 0 {
        ends.push(len);
    }
    Boundaries { ends }
}

/// Cuts after every space-like byte and whenever a patch reaches `max_size`.
pub fn space_patch(bytes: &[u8], max_size: usize) -> Result<Boundaries, PatchingError> {
    if max_size == 0 {
        return Err(PatchingError::ZeroPatchSize);
    }
    Ok(segment(bytes.len(), Some(max_size), |i| {
        is_space_like(bytes[i - 1])
    }))
}

/// Consecutive patches of `k` bytes; the last may be shorter.
pub fn fixed_patch(bytes: &[u8], k: usize) -> Result<Boundaries, PatchingError> {
    if k == 0 {
        return Err(PatchingError::ZeroPatchSize);
    }
    Ok(segment(bytes.len(), Some(k), |_| false))
}

fn check_threshold<F: Real>(threshold: F, max_size: Option<usize>) -> Result<(), PatchingError> {
    if threshold.is_nan() || threshold < F::zero() {
        return Err(PatchingError::NegativeThreshold);
    }
    if max_size == Some(0) {
        return Err(PatchingError::ZeroPatchSize);
    }
    Ok(())
}

/// Starts a new patch before byte `i` when the entropy of the scorer's
/// prediction for byte `i` exceeds `threshold`, or when `max_size` is reached.
/// `max_size = None` leaves patch lengths unbounded.
pub fn entropy_patch<F: Real>(
    bytes: &[u8],
    scorer: &NgramEntropyScorer<F>,
    threshold: F,
    max_size: Option<usize>,
) -> Result<Boundaries, PatchingError> {
    check_threshold(threshold, max_size)?;
    Ok(segment(bytes.len(), max_size, |i| {
        scorer.entropy_at(bytes, i) > threshold
    }))
}

/// Like [`entropy_patch`] but thresholds the surprisal of the byte that
/// actually occurs, `-log2 p(bytes[i] | context)`.
pub fn surprisal_patch<F: Real>(
    bytes: &[u8],
    scorer: &NgramEntropyScorer<F>,
    threshold: F,
    max_size: Option<usize>,
) -> Result<Boundaries, PatchingError> {
    check_threshold(threshold, max_size)?;
    Ok(segment(bytes.len(), max_size, |i| {
        scorer.surprisal_at(bytes, i) > threshold
    }))
}

/// Patch-length summary. The average is kept as an exact ratio.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PatchStats {
    pub patch_count: u64,
    pub byte_count: u64,
    pub word_count: u64,
    pub histogram: BTreeMap<usize, u64>,
}

impl PatchStats {
    pub fn from_lengths<I: IntoIterator<Item = usize>>(lengths: I, word_count: u64) -> Self {
        let mut s = PatchStats {
            word_count,
            ..Default::default()
        };
        for l in lengths {
            s.patch_count += 1;
            s.byte_count += l as u64;
            *s.histogram.entry(l).or_insert(0) += 1;
        }
        s
    }

    /// `byte_count / patch_count`, or `None` when there are no patches.
    pub fn avg_patch_len_exact(&self) -> Option<Ratio<u64>> {
        (self.patch_count > 0).then(|| Ratio::new(self.byte_count, self.patch_count))
    }

    pub fn avg_patch_len<F: Real>(&self) -> Option<F> {
        (self.patch_count > 0)
            .then(|| F::from_count(self.byte_count) / F::from_count(self.patch_count))
    }

    /// Patches per word, or `None` when the word count is zero.
    pub fn fertility<F: Real>(&self) -> Option<F> {
        (self.word_count > 0)
            .then(|| F::from_count(self.patch_count) / F::from_count(self.word_count))
    }

    pub fn max_len(&self) -> Option<usize> {
        self.histogram.keys().next_back().copied()
    }
}

/// Summarizes a partition; `word_count` feeds the fertility figure.
pub fn stats(b: &Boundaries, word_count: u64) -> PatchStats {
    PatchStats::from_lengths(b.lengths(), word_count)
}

/// The three ways of measuring BPE-patch lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpePatchStats {
    /// Raw content bytes per patch (first-stage token lengths).
    pub content: PatchStats,
    /// Content bytes plus one marker per patch, before second-stage compression.
    pub with_marker: PatchStats,
    /// Second-stage symbols per patch, marker included.
    pub symbols: PatchStats,
}

impl BpePatchStats {
    pub fn boundaries(text: &[u8], vocab: &FirstStageVocab) -> Boundaries {
        let lengths = vocab
            .encode(text)
            .into_iter()
            .map(|id| vocab.token_bytes(id).map_or(0, <[u8]>::len));
        Boundaries::from_lengths(lengths).expect("tokens are non-empty")
    }
}

/// Patch statistics for the BPE-patch strategy on `text`.
pub fn bpe_patch_stats(
    text: &[u8],
    vocab: &FirstStageVocab,
    table: &PatchTable,
) -> Result<BpePatchStats, PatchingError> {
    let words = word_count(text);
    let ids = vocab.encode(text);
    let mut content = Vec::with_capacity(ids.len());
    let mut symbols = Vec::with_capacity(ids.len());
    for id in ids {
        let patch = table.get(id).ok_or(HierError::MissingToken(id.0))?;
        content.push(vocab.token_bytes(id).map_or(0, <[u8]>::len));
        symbols.push(patch.len());
    }
    Ok(BpePatchStats {
        with_marker: PatchStats::from_lengths(content.iter().map(|l| l + 1), words),
        content: PatchStats::from_lengths(content, words),
        symbols: PatchStats::from_lengths(symbols, words),
    })
}
