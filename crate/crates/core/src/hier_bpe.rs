//! Second-stage BPE that bounds every first-stage token to a patch of at
//! most `S` symbols.
//!
//! Each token's bytes are followed by the end-of-patch marker (256), which
//! counts towards the bound but never takes part in a merge. Training keeps
//! an active set of over-long tokens, repeatedly merges the most frequent pair
//! among them, and freezes a token as soon as it fits. Encoding is a table
//! lookup per first-stage token.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::first_stage::{FirstStageVocab, TokenId};
use crate::fsutil::write_atomic;
use crate::pairs::PairStats;

/// Second-stage alphabet member: raw byte, end-of-patch marker, or merged symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymbolId(pub u32);

impl SymbolId {
    pub const MARKER: SymbolId = SymbolId(256);
    pub const FIRST_MERGED: SymbolId = SymbolId(257);

    pub fn byte(b: u8) -> Self {
        SymbolId(b as u32)
    }

    pub fn is_marker(self) -> bool {
        self == Self::MARKER
    }
}

impl fmt::Display for SymbolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum HierError {
    #[error("maximum patch size {0} is below 2")]
    PatchSizeTooSmall(usize),
    #[error("first-stage vocabulary is empty")]
    EmptyVocab,
    #[error("no mergeable pair among the active sequences")]
    NoCandidatePair,
    #[error("token weights cover {got} tokens, vocabulary has {expected}")]
    WeightMismatch { got: usize, expected: usize },
    #[error("symbol {symbol} is outside the {v_prime}-symbol alphabet")]
    SymbolOutOfRange { symbol: u32, v_prime: u32 },
    #[error("patch is not terminated by exactly one trailing end-of-patch marker")]
    MalformedPatch,
    #[error("patch of length {len} exceeds the maximum patch size {max}")]
    PatchTooLong { len: usize, max: usize },
    #[error("token {0} has no patch in the table")]
    MissingToken(u32),
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
}

impl HierError {
    pub fn code(&self) -> &'static str {
        match self {
            HierError::PatchSizeTooSmall(_) => "H2-001",
            HierError::EmptyVocab => "H2-002",
            HierError::NoCandidatePair => "H2-003",
            HierError::WeightMismatch { .. } => "H2-004",
            HierError::SymbolOutOfRange { .. } => "H2-005",
            HierError::MalformedPatch => "H2-006",
            HierError::PatchTooLong { .. } => "H2-007",
            HierError::MissingToken(_) => "H2-008",
            HierError::Io { .. } => "H2-009",
            HierError::Malformed { .. } => "H2-010",
        }
    }
}

/// A marker-terminated symbol sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Patch(Vec<SymbolId>);

impl Patch {
    /// Checks that the marker occurs exactly once, at the end.
    pub fn new(symbols: Vec<SymbolId>) -> Result<Self, HierError> {
        match symbols.split_last() {
            Some((last, body)) if last.is_marker() && !body.iter().any(|s| s.is_marker()) => {
                Ok(Patch(symbols))
            }
            _ => Err(HierError::MalformedPatch),
        }
    }

    /// Raw bytes followed by the marker, uncompressed.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let mut symbols: Vec<SymbolId> = bytes.iter().map(|&b| SymbolId::byte(b)).collect();
        symbols.push(SymbolId::MARKER);
        Patch(symbols)
    }

    pub fn symbols(&self) -> &[SymbolId] {
        &self.0
    }

    /// Length including the marker.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One second-stage merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolMerge {
    pub left: SymbolId,
    pub right: SymbolId,
    pub new: SymbolId,
}

/// Ordered second-stage merges; the `n`-th creates symbol `257 + n`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeTable {
    merges: Vec<SymbolMerge>,
}

impl MergeTable {
    /// Validates id assignment and well-foundedness.
    pub fn new(merges: Vec<SymbolMerge>) -> Result<Self, HierError> {
        for n in 1..=merges.len() {
            check_merge(&merges[..n])?;
        }
        Ok(Self { merges })
    }

    pub fn merges(&self) -> &[SymbolMerge] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// Alphabet size: 256 bytes, the marker, and one symbol per merge.
    pub fn v_prime(&self) -> u32 {
        SymbolId::FIRST_MERGED.0 + self.merges.len() as u32
    }

    fn expand_into(&self, sym: SymbolId, out: &mut Vec<u8>) -> Result<(), HierError> {
        let mut stack = vec![sym];
        while let Some(s) = stack.pop() {
            match s.0 {
                0..=255 => out.push(s.0 as u8),
                256 => return Err(HierError::MalformedPatch),
                n => {
                    let m = self
                        .merges
                        .get((n - SymbolId::FIRST_MERGED.0) as usize)
                        .ok_or(HierError::SymbolOutOfRange {
                            symbol: n,
                            v_prime: self.v_prime(),
                        })?;
                    stack.push(m.right);
                    stack.push(m.left);
                }
            }
        }
        Ok(())
    }
}

fn check_merge(merges: &[SymbolMerge]) -> Result<(), HierError> {
    let n = merges.len() - 1;
    let m = merges[n];
    let expected = SymbolId::FIRST_MERGED.0 + n as u32;
    if m.new.0 != expected {
        return Err(HierError::SymbolOutOfRange {
            symbol: m.new.0,
            v_prime: expected,
        });
    }
    for part in [m.left, m.right] {
        if part.is_marker() {
            return Err(HierError::MalformedPatch);
        }
        if part >= m.new {
            return Err(HierError::SymbolOutOfRange {
                symbol: part.0,
                v_prime: m.new.0,
            });
        }
    }
    Ok(())
}

/// First-stage token id -> frozen patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchTable {
    patches: Vec<Patch>,
    max_patch_len: usize,
    v_prime: u32,
}

impl PatchTable {
    /// Checks that every patch fits the bound and uses only known symbols.
    pub fn new(patches: Vec<Patch>, max_patch_len: usize, v_prime: u32) -> Result<Self, HierError> {
        for p in &patches {
            if p.len() > max_patch_len {
                return Err(HierError::PatchTooLong {
                    len: p.len(),
                    max: max_patch_len,
                });
            }
            if let Some(s) = p.symbols().iter().find(|s| s.0 >= v_prime) {
                return Err(HierError::SymbolOutOfRange {
                    symbol: s.0,
                    v_prime,
                });
            }
        }
        Ok(Self {
            patches,
            max_patch_len,
            v_prime,
        })
    }

    /// The bound `S`.
    pub fn max_patch_len(&self) -> usize {
        self.max_patch_len
    }

    pub fn v_prime(&self) -> u32 {
        self.v_prime
    }

    /// Padding symbol; one past the last merged symbol.
    pub fn pad_id(&self) -> SymbolId {
        SymbolId(self.v_prime)
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn get(&self, token: TokenId) -> Option<&Patch> {
        self.patches.get(token.index())
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }
}

/// Training options.
#[derive(Debug, Clone)]
pub struct HierBpeConfig {
    /// The bound `S`, marker included.
    pub max_patch_len: usize,
    /// Optional per-token corpus frequencies. A token's pairs are then
    /// counted `1 + frequency` times instead of once.
    pub token_weights: Option<Vec<u64>>,
}

impl HierBpeConfig {
    pub fn new(max_patch_len: usize) -> Self {
        Self {
            max_patch_len,
            token_weights: None,
        }
    }
}

/// Trains the second stage with unweighted pair counts.
pub fn train_hier_bpe(
    vocab: &FirstStageVocab,
    max_patch_len: usize,
) -> Result<(MergeTable, PatchTable), HierError> {
    train_hier_bpe_with(vocab, &HierBpeConfig::new(max_patch_len))
}

pub fn train_hier_bpe_with(
    vocab: &FirstStageVocab,
    config: &HierBpeConfig,
) -> Result<(MergeTable, PatchTable), HierError> {
    let tokens: Vec<&[u8]> = vocab.tokens().map(|(_, b)| b).collect();
    train_on_tokens(&tokens, config)
}

/// Second-stage training over raw token byte strings; patch `i` belongs to
/// `tokens[i]`.
pub fn train_on_tokens<T: AsRef<[u8]>>(
    tokens: &[T],
    config: &HierBpeConfig,
) -> Result<(MergeTable, PatchTable), HierError> {
    let s = config.max_patch_len;
    if s < 2 {
        return Err(HierError::PatchSizeTooSmall(s));
    }
    if tokens.is_empty() {
        return Err(HierError::EmptyVocab);
    }
    let weights = match &config.token_weights {
        Some(w) if w.len() != tokens.len() => {
            return Err(HierError::WeightMismatch {
                got: w.len(),
                expected: tokens.len(),
            })
        }
        Some(w) => w.iter().map(|&f| f.saturating_add(1)).collect(),
        None => vec![1; tokens.len()],
    };

    let seqs: Vec<Vec<u32>> = tokens
        .iter()
        .map(|bytes| {
            let mut seq: Vec<u32> = bytes.as_ref().iter().map(|&b| b as u32).collect();
            seq.push(SymbolId::MARKER.0);
            seq
        })
        .collect();
    let active: Vec<bool> = seqs.iter().map(|q| q.len() > s).collect();
    let mut stats = PairStats::new(seqs, weights, active, Some(SymbolId::MARKER.0));

    let mut merges = Vec::new();
    while stats.n_active() > 0 {
        let (pair, _) = stats.best_pair().ok_or(HierError::NoCandidatePair)?;
        let new = SymbolId::FIRST_MERGED.0 + merges.len() as u32;
        for idx in stats.apply_merge(pair, new) {
            if stats.is_active(idx) && stats.seq(idx).len() <= s {
                stats.deactivate(idx);
            }
        }
        merges.push(SymbolMerge {
            left: SymbolId(pair.0),
            right: SymbolId(pair.1),
            new: SymbolId(new),
        });
    }

    let table = MergeTable::new(merges)?;
    let patches = stats
        .into_seqs()
        .into_iter()
        .map(|seq| Patch(seq.into_iter().map(SymbolId).collect()))
        .collect();
    let patch_table = PatchTable::new(patches, s, table.v_prime())?;
    Ok((table, patch_table))
}

/// A pair with its occurrence count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCount {
    pub left: SymbolId,
    pub right: SymbolId,
    pub count: u64,
}

/// Most frequent adjacent pair over `active`, counting overlapping
/// occurrences once per sequence position and skipping pairs that touch the
/// marker. Ties go to the smallest `(left, right)`.
pub fn most_freq_pair<S: AsRef<[SymbolId]>>(active: &[S]) -> Result<PairCount, HierError> {
    let mut counts: BTreeMap<(SymbolId, SymbolId), u64> = BTreeMap::new();
    for seq in active {
        for w in seq.as_ref().windows(2) {
            if !w[0].is_marker() && !w[1].is_marker() {
                *counts.entry((w[0], w[1])).or_insert(0) += 1;
            }
        }
    }
    // BTreeMap iterates ascending, so the first maximum is the tie-break winner.
    let mut best: Option<PairCount> = None;
    for ((left, right), count) in counts {
        if best.is_none_or(|b| count > b.count) {
            best = Some(PairCount { left, right, count });
        }
    }
    best.ok_or(HierError::NoCandidatePair)
}

/// First-stage encode followed by a patch lookup per token.
pub fn encode_patches<'t>(
    text: &[u8],
    vocab: &FirstStageVocab,
    table: &'t PatchTable,
) -> Result<Vec<&'t Patch>, HierError> {
    vocab
        .encode(text)
        .into_iter()
        .map(|id| table.get(id).ok_or(HierError::MissingToken(id.0)))
        .collect()
}

/// Expands merged symbols and strips the trailing marker.
pub fn decode_patch(patch: &[SymbolId], merges: &MergeTable) -> Result<Vec<u8>, HierError> {
    let (last, body) = patch.split_last().ok_or(HierError::MalformedPatch)?;
    if !last.is_marker() {
        return Err(HierError::MalformedPatch);
    }
    let mut out = Vec::with_capacity(body.len() * 2);
    for &s in body {
        merges.expand_into(s, &mut out)?;
    }
    Ok(out)
}

/// Concatenated bytes of a patch sequence.
pub fn decode_patches<'a, I>(patches: I, merges: &MergeTable) -> Result<Vec<u8>, HierError>
where
    I: IntoIterator<Item = &'a [SymbolId]>,
{
    let mut out = Vec::new();
    for p in patches {
        out.extend(decode_patch(p, merges)?);
    }
    Ok(out)
}

/// Right-pads a patch with the pad symbol to exactly `S` entries.
pub fn pad_patch(patch: &Patch, table: &PatchTable) -> Result<Vec<SymbolId>, HierError> {
    let s = table.max_patch_len();
    if patch.len() > s {
        return Err(HierError::PatchTooLong {
            len: patch.len(),
            max: s,
        });
    }
    let mut row = patch.symbols().to_vec();
    row.resize(s, table.pad_id());
    Ok(row)
}

const STAGE2_MAGIC: &str = "HBPE-V1 stage2";

/// Text form of a trained second stage: header, merges, then patches.
pub fn stage2_to_string(merges: &MergeTable, table: &PatchTable) -> String {
    let mut out = format!(
        "{STAGE2_MAGIC} S={} vprime={} pad={}\n",
        table.max_patch_len(),
        table.v_prime(),
        table.pad_id()
    );
    for m in merges.merges() {
        out.push_str(&format!("{} {} {}\n", m.left, m.right, m.new));
    }
    for (id, p) in table.patches().iter().enumerate() {
        out.push_str(&id.to_string());
        out.push(':');
        for s in p.symbols() {
            out.push(' ');
            out.push_str(&s.0.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn save_stage2(path: &Path, merges: &MergeTable, table: &PatchTable) -> Result<(), HierError> {
    write_atomic(path, stage2_to_string(merges, table).as_bytes()).map_err(|source| HierError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_stage2(path: &Path) -> Result<(MergeTable, PatchTable), HierError> {
    let text = std::fs::read_to_string(path).map_err(|source| HierError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_stage2(&text).map_err(|(line, reason)| HierError::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    })
}

pub fn parse_stage2(text: &str) -> Result<(MergeTable, PatchTable), (usize, String)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or((1, "missing header".to_string()))?;
    let rest = header
        .strip_prefix(STAGE2_MAGIC)
        .ok_or((1, format!("unsupported header {header:?}")))?;
    let (mut s, mut v_prime, mut pad) = (None, None, None);
    for field in rest.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or((1, format!("bad header field {field:?}")))?;
        let v: u64 = v
            .parse()
            .map_err(|_| (1, format!("bad number in {field:?}")))?;
        match k {
            "S" => s = Some(v as usize),
            "vprime" => v_prime = Some(v as u32),
            "pad" => pad = Some(v as u32),
            _ => return Err((1, format!("unknown header field {field:?}"))),
        }
    }
    let s = s.ok_or((1, "missing S".to_string()))?;
    let v_prime = v_prime.ok_or((1, "missing vprime".to_string()))?;
    let pad = pad.ok_or((1, "missing pad".to_string()))?;
    if pad != v_prime {
        return Err((1, format!("pad {pad} must equal vprime {v_prime}")));
    }

    let parse_num = |line: usize, t: &str| -> Result<u32, (usize, String)> {
        t.parse().map_err(|_| (line, format!("bad number {t:?}")))
    };
    let mut merges = Vec::new();
    let mut patches = Vec::new();
    for (line, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        if let Some((id, body)) = l.split_once(':') {
            let id = parse_num(line, id.trim())? as usize;
            if id != patches.len() {
                return Err((
                    line,
                    format!("expected token {}, found {id}", patches.len()),
                ));
            }
            let symbols = body
                .split_whitespace()
                .map(|t| parse_num(line, t).map(SymbolId))
                .collect::<Result<Vec<_>, _>>()?;
            let patch = Patch::new(symbols).map_err(|e| (line, e.to_string()))?;
            PatchTable::new(vec![patch.clone()], s, v_prime).map_err(|e| (line, e.to_string()))?;
            patches.push(patch);
        } else {
            if !patches.is_empty() {
                return Err((line, "merge after the patch table".to_string()));
            }
            let nums = l
                .split_whitespace()
                .map(|t| parse_num(line, t))
                .collect::<Result<Vec<_>, _>>()?;
            let [left, right, new] = nums[..] else {
                return Err((line, "expected \"left right new\"".to_string()));
            };
            merges.push(SymbolMerge {
                left: SymbolId(left),
                right: SymbolId(right),
                new: SymbolId(new),
            });
            if let Err(e) = check_merge(&merges) {
                return Err((line, e.to_string()));
            }
        }
    }
    let table = MergeTable { merges };
    if table.v_prime() != v_prime {
        return Err((
            1,
            format!("vprime {v_prime} does not match {} merges", table.len()),
        ));
    }
    let patch_table = PatchTable::new(patches, s, v_prime).map_err(|e| (0, e.to_string()))?;
    Ok((table, patch_table))
}
