//! Hierarchical byte-pair encoding.
//!
//! A first-stage byte-level BPE splits text into subword tokens. A second
//! BPE then rewrites each token's bytes, followed by an end-of-patch marker,
//! into a patch of at most `S` symbols. Patches padded to `S` are what a
//! hierarchical language model consumes.
//!
//! The crate also provides baseline patching strategies (whitespace, n-gram
//! entropy, fixed length), bits-per-byte and fertility metrics, a FLOP
//! estimator for hierarchical models, and the binary batch file format.
//!
//! Numeric code is generic over [`num::Real`]; the aliases at the crate root
//! pin it to `f64`.

pub mod corpus_io;
pub mod first_stage;
pub mod fsutil;
pub mod hier_bpe;
pub mod metrics;
pub mod num;
mod pairs;
pub mod patching;
pub mod text;

use thiserror::Error;

pub use first_stage::{
    load_external, train_bpe, FirstStageVocab, LengthHistogram, Pretokenize, Stage1Error, TokenId,
    TokenMerge,
};
pub use hier_bpe::{
    decode_patch, encode_patches, most_freq_pair, pad_patch, train_hier_bpe, train_hier_bpe_with,
    train_on_tokens, HierBpeConfig, HierError, MergeTable, Patch, PatchTable, SymbolId,
    SymbolMerge,
};
pub use metrics::{MetricsError, NllUnit};
pub use patching::{Boundaries, PatchStats, PatchingError, ScorerError};

/// Entropy scorer over `f64`.
pub type EntropyScorer = patching::NgramEntropyScorer<f64>;
/// Negative log-likelihood record over `f64`.
pub type NllRecord = metrics::NllRecord<f64>;
/// FLOP estimate inputs over `f64`.
pub type FlopsConfig = metrics::FlopsConfig<f64>;
/// FLOP estimate over `f64`.
pub type FlopsBreakdown = metrics::FlopsBreakdown<f64>;

/// Any error raised by the toolkit, tagged with the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Stage1(#[from] Stage1Error),
    #[error(transparent)]
    Hier(#[from] HierError),
    #[error(transparent)]
    Patching(#[from] PatchingError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] corpus_io::CorpusError),
}

impl Error {
    pub fn module(&self) -> &'static str {
        match self {
            Error::Stage1(_) => "bpe_first_stage",
            Error::Hier(_) => "hier_bpe",
            Error::Patching(_) | Error::Scorer(_) => "patch_strategies",
            Error::Metrics(_) => "metrics",
            Error::Corpus(_) => "corpus_io",
        }
    }

    /// Stable identifier, e.g. `H2-007`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Stage1(e) => e.code(),
            Error::Hier(e) => e.code(),
            Error::Patching(e) => e.code(),
            Error::Scorer(e) => e.code(),
            Error::Metrics(e) => e.code(),
            Error::Corpus(e) => e.code(),
        }
    }

    /// Whether the failure came from the filesystem rather than the data.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Stage1(Stage1Error::Io { .. })
                | Error::Hier(HierError::Io { .. })
                | Error::Scorer(ScorerError::Io { .. })
                | Error::Patching(PatchingError::Scorer(ScorerError::Io { .. }))
                | Error::Corpus(corpus_io::CorpusError::Io { .. })
        )
    }
}
