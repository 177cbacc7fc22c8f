//! Corpus reading and the padded patch batch file.
//!
//! Batch file layout, all integers little-endian:
//!
//! ```text
//! "HBPB"  u32 version=1  u32 S  u32 v_prime  u32 pad_id  u64 row_count
//! row_count * S * u32
//! ```

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::first_stage::FirstStageVocab;
use crate::fsutil::write_atomic;
use crate::hier_bpe::{decode_patch, pad_patch, HierError, MergeTable, PatchTable, SymbolId};
use crate::text::is_space_like;

pub const BATCH_MAGIC: &[u8; 4] = b"HBPB";
pub const BATCH_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 8;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:?}, expected \"HBPB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported batch file version {0}")]
    BadVersion(u32),
    #[error("truncated batch file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{0} unexpected bytes after the last row")]
    TrailingData(u64),
    #[error("row {row}: {reason}")]
    InvalidRow { row: u64, reason: String },
    #[error(transparent)]
    Hier(#[from] HierError),
}

impl CorpusError {
    pub fn code(&self) -> &'static str {
        match self {
            CorpusError::Io { .. } => "CI-001",
            CorpusError::BadMagic(_) => "CI-002",
            CorpusError::BadVersion(_) => "CI-003",
            CorpusError::Truncated { .. } => "CI-004",
            CorpusError::TrailingData(_) => "CI-005",
            CorpusError::InvalidRow { .. } => "CI-006",
            CorpusError::Hier(e) => e.code(),
        }
    }
}

/// Byte, word and line counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorpusStats {
    pub byte_count: u64,
    pub word_count: u64,
    pub line_count: u64,
    in_word: bool,
}

impl CorpusStats {
    pub fn of(bytes: &[u8]) -> Self {
        let mut s = Self::default();
        s.update(bytes);
        s
    }

    /// Feeds the next chunk; words spanning chunk edges are counted once.
    pub fn update(&mut self, chunk: &[u8]) {
        self.byte_count += chunk.len() as u64;
        for &b in chunk {
            if b == b'\n' {
                self.line_count += 1;
            }
            let space = is_space_like(b);
            if !space && !self.in_word {
                self.word_count += 1;
            }
            self.in_word = !space;
        }
    }
}

/// Reads the files in order as raw bytes.
///
/// Word state carries across files, so a word split between two files
/// without separating whitespace is counted once.
pub fn stream_corpus<P: AsRef<Path>>(paths: &[P]) -> Result<(Vec<u8>, CorpusStats), CorpusError> {
    let mut out = Vec::new();
    let mut stats = CorpusStats::default();
    let mut buf = vec![0u8; 1 << 16];
    for path in paths {
        let path = path.as_ref();
        let io_err = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = BufReader::new(File::open(path).map_err(io_err)?);
        loop {
            let n = reader.read(&mut buf).map_err(io_err)?;
            if n == 0 {
                break;
            }
            stats.update(&buf[..n]);
            out.extend_from_slice(&buf[..n]);
        }
    }
    Ok((out, stats))
}

/// Header fields of a batch file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchHeader {
    pub max_patch_len: u32,
    pub v_prime: u32,
    pub pad_id: u32,
    pub row_count: u64,
}

/// A decoded batch file: header plus row-major symbol ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchFile {
    pub header: BatchHeader,
    pub data: Vec<u32>,
}

impl BatchFile {
    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.data.chunks(self.header.max_patch_len.max(1) as usize)
    }

    /// Reassembles the original bytes by stripping padding and expanding
    /// every row.
    pub fn decode(&self, merges: &MergeTable) -> Result<Vec<u8>, CorpusError> {
        let mut out = Vec::new();
        for row in self.rows() {
            let end = row
                .iter()
                .position(|&s| s == SymbolId::MARKER.0)
                .map_or(row.len(), |i| i + 1);
            let symbols: Vec<SymbolId> = row[..end].iter().copied().map(SymbolId).collect();
            out.extend(decode_patch(&symbols, merges)?);
        }
        Ok(out)
    }
}

/// What [`emit_batches`] wrote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchSummary {
    pub rows: u64,
    pub content_bytes: u64,
    /// Mean content bytes per row; `None` for an empty file.
    pub avg_content_len: Option<f64>,
}

fn check_row(row: &[u32], header: &BatchHeader, index: u64) -> Result<(), CorpusError> {
    let invalid = |reason: String| CorpusError::InvalidRow { row: index, reason };
    let marker = row
        .iter()
        .position(|&s| s == SymbolId::MARKER.0)
        .ok_or_else(|| invalid("no end-of-patch marker".into()))?;
    for (i, &s) in row.iter().enumerate() {
        if i < marker && (s >= header.v_prime || s == SymbolId::MARKER.0) {
            return Err(invalid(format!("symbol {s} at position {i}")));
        }
        if i > marker && s != header.pad_id {
            return Err(invalid(format!("non-pad symbol {s} after the marker")));
        }
    }
    Ok(())
}

/// Serializes rows into the batch layout.
pub fn encode_batch_file(header: &BatchHeader, data: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    out.extend_from_slice(BATCH_MAGIC);
    out.extend_from_slice(&BATCH_VERSION.to_le_bytes());
    out.extend_from_slice(&header.max_patch_len.to_le_bytes());
    out.extend_from_slice(&header.v_prime.to_le_bytes());
    out.extend_from_slice(&header.pad_id.to_le_bytes());
    out.extend_from_slice(&header.row_count.to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Builds the padded rows for `text`, one per first-stage token.
pub fn build_batch(
    text: &[u8],
    vocab: &FirstStageVocab,
    table: &PatchTable,
) -> Result<(BatchFile, BatchSummary), CorpusError> {
    let ids = vocab.encode(text);
    let s = table.max_patch_len();
    let mut data = Vec::with_capacity(ids.len() * s);
    let mut content_bytes = 0u64;
    for id in &ids {
        let patch = table.get(*id).ok_or(HierError::MissingToken(id.0))?;
        content_bytes += vocab.token_bytes(*id).map_or(0, |b| b.len() as u64);
        data.extend(pad_patch(patch, table)?.into_iter().map(|s| s.0));
    }
    let header = BatchHeader {
        max_patch_len: s as u32,
        v_prime: table.v_prime(),
        pad_id: table.pad_id().0,
        row_count: ids.len() as u64,
    };
    let file = BatchFile { header, data };
    for (i, row) in file.rows().enumerate() {
        // A violation here is a tokenizer bug, not bad input.
        if let Err(e) = check_row(row, &header, i as u64) {
            panic!("emitted row breaks the batch invariants: {e}");
        }
    }
    let rows = ids.len() as u64;
    let summary = BatchSummary {
        rows,
        content_bytes,
        avg_content_len: (rows > 0).then(|| content_bytes as f64 / rows as f64),
    };
    Ok((file, summary))
}

/// Writes the batch file for `text` to `out` atomically.
pub fn emit_batches(
    text: &[u8],
    vocab: &FirstStageVocab,
    table: &PatchTable,
    out: &Path,
) -> Result<BatchSummary, CorpusError> {
    let (file, summary) = build_batch(text, vocab, table)?;
    write_atomic(out, &encode_batch_file(&file.header, &file.data)).map_err(|source| {
        CorpusError::Io {
            path: out.to_path_buf(),
            source,
        }
    })?;
    Ok(summary)
}

/// Parses and validates a batch file image.
pub fn parse_batch_file(bytes: &[u8]) -> Result<BatchFile, CorpusError> {
    let found = bytes.len() as u64;
    if bytes.len() < 4 {
        return Err(CorpusError::Truncated {
            expected: HEADER_LEN as u64,
            found,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
    if &magic != BATCH_MAGIC {
        return Err(CorpusError::BadMagic(magic));
    }
    if bytes.len() < 8 {
        return Err(CorpusError::Truncated {
            expected: HEADER_LEN as u64,
            found,
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("in range"));
    let version = u32_at(4);
    if version != BATCH_VERSION {
        return Err(CorpusError::BadVersion(version));
    }
    if bytes.len() < HEADER_LEN {
        return Err(CorpusError::Truncated {
            expected: HEADER_LEN as u64,
            found,
        });
    }
    let header = BatchHeader {
        max_patch_len: u32_at(8),
        v_prime: u32_at(12),
        pad_id: u32_at(16),
        row_count: u64::from_le_bytes(bytes[20..28].try_into().expect("in range")),
    };
    if header.pad_id != header.v_prime {
        return Err(CorpusError::InvalidRow {
            row: 0,
            reason: format!(
                "header pad {} differs from vprime {}",
                header.pad_id, header.v_prime
            ),
        });
    }
    let expected =
        (HEADER_LEN as u128) + header.row_count as u128 * header.max_patch_len as u128 * 4;
    if (found as u128) < expected {
        return Err(CorpusError::Truncated {
            expected: expected.min(u64::MAX as u128) as u64,
            found,
        });
    }
    if (found as u128) > expected {
        return Err(CorpusError::TrailingData((found as u128 - expected) as u64));
    }
    let data: Vec<u32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("exact chunks")))
        .collect();
    let file = BatchFile { header, data };
    if header.row_count > 0 && header.max_patch_len == 0 {
        return Err(CorpusError::InvalidRow {
            row: 0,
            reason: "zero-width rows".into(),
        });
    }
    for (i, row) in file.rows().enumerate() {
        check_row(row, &header, i as u64)?;
    }
    Ok(file)
}

pub fn read_batches(path: &Path) -> Result<BatchFile, CorpusError> {
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_batch_file(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_examples() {
        let s = CorpusStats::of(b"ab cd\n");
        assert_eq!((s.byte_count, s.word_count, s.line_count), (6, 2, 1));
        assert_eq!(CorpusStats::of(b""), CorpusStats::default());
    }

    #[test]
    fn stats_are_chunking_invariant() {
        let text = b"one two  three\nfour";
        let whole = CorpusStats::of(text);
        for cut in 0..text.len() {
            let mut s = CorpusStats::default();
            s.update(&text[..cut]);
            s.update(&text[cut..]);
            assert_eq!(s, whole);
        }
    }

    #[test]
    fn stream_reads_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let empty = dir.path().join("empty");
        std::fs::write(&a, b"ab cd\n").unwrap();
        std::fs::write(&b, b"xyz").unwrap();
        std::fs::write(&empty, b"").unwrap();
        let (bytes, stats) = stream_corpus(&[&a, &empty, &b]).unwrap();
        assert_eq!(bytes, b"ab cd\nxyz");
        assert_eq!(stats.byte_count, 9);
        assert_eq!(stats.word_count, 3);

        let (bytes, stats) = stream_corpus(&[&empty]).unwrap();
        assert!(bytes.is_empty());
        assert_eq!(stats, CorpusStats::default());

        let missing = dir.path().join("missing");
        match stream_corpus(&[&missing]) {
            Err(CorpusError::Io { path, .. }) => assert_eq!(path, missing),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn header(rows: u64) -> BatchHeader {
        BatchHeader {
            max_patch_len: 3,
            v_prime: 258,
            pad_id: 258,
            row_count: rows,
        }
    }

    #[test]
    fn parse_errors_are_distinct() {
        let good = encode_batch_file(&header(1), &[97, 256, 258]);
        assert!(parse_batch_file(&good).is_ok());

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(
            parse_batch_file(&bad),
            Err(CorpusError::BadMagic(_))
        ));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(
            parse_batch_file(&bad),
            Err(CorpusError::BadVersion(2))
        ));

        assert!(matches!(
            parse_batch_file(&good[..good.len() - 1]),
            Err(CorpusError::Truncated { .. })
        ));
        assert!(matches!(
            parse_batch_file(&good[..10]),
            Err(CorpusError::Truncated { .. })
        ));

        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(
            parse_batch_file(&bad),
            Err(CorpusError::TrailingData(1))
        ));

        let header_only = encode_batch_file(&header(0), &[]);
        assert_eq!(parse_batch_file(&header_only).unwrap().rows().count(), 0);
    }

    #[test]
    fn row_invariants() {
        for row in [
            [97, 258, 256],
            [97, 98, 99],
            [256, 97, 258],
            [300, 256, 258],
        ] {
            let img = encode_batch_file(&header(1), &row);
            assert!(
                matches!(
                    parse_batch_file(&img),
                    Err(CorpusError::InvalidRow { row: 0, .. })
                ),
                "{row:?}"
            );
        }
    }
}
