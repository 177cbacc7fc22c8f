//! The two-file `vocab.json` / `merges.txt` convention used by GPT-2.
//!
//! Token strings are stored with every byte remapped to a printable unicode
//! character. Files written here carry an `HBPE-V1 stage1` first line in
//! `merges.txt` recording the pre-tokenization rule; GPT-2's own files start
//! with `#version:` instead and are loaded without pre-tokenization.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use super::{FirstStageVocab, Pretokenize, Stage1Error, TokenId, TokenMerge};
use crate::fsutil::write_atomic;

const STAGE1_HEADER: &str = "HBPE-V1 stage1";

fn tables() -> &'static ([char; 256], HashMap<char, u8>) {
    static TABLES: OnceLock<([char; 256], HashMap<char, u8>)> = OnceLock::new();
    TABLES.get_or_init(|| {
        let printable = |b: u32| {
            (b'!' as u32..=b'~' as u32).contains(&b)
                || (0xA1..=0xAC).contains(&b)
                || (0xAE..=0xFF).contains(&b)
        };
        let mut forward = ['\0'; 256];
        let mut shift = 0;
        for b in 0..256u32 {
            let c = if printable(b) {
                b
            } else {
                shift += 1;
                255 + shift
            };
            forward[b as usize] = char::from_u32(c).expect("valid scalar value");
        }
        let inverse = forward
            .iter()
            .enumerate()
            .map(|(b, &c)| (c, b as u8))
            .collect();
        (forward, inverse)
    })
}

/// Printable character standing in for byte `b`.
pub fn byte_to_unicode(b: u8) -> char {
    tables().0[b as usize]
}

/// Inverse of [`byte_to_unicode`].
pub fn unicode_to_byte(c: char) -> Option<u8> {
    tables().1.get(&c).copied()
}

fn encode_token(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| byte_to_unicode(b)).collect()
}

fn decode_token(s: &str) -> Option<Vec<u8>> {
    s.chars().map(unicode_to_byte).collect()
}

fn read(path: &Path) -> Result<String, Stage1Error> {
    std::fs::read_to_string(path).map_err(|source| Stage1Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a vocabulary from GPT-2 style files.
pub fn load_external(
    vocab_file: &Path,
    merges_file: &Path,
) -> Result<FirstStageVocab, Stage1Error> {
    let vocab_text = read(vocab_file)?;
    let raw: HashMap<String, u32> =
        serde_json::from_str(&vocab_text).map_err(|e| Stage1Error::Malformed {
            path: vocab_file.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })?;

    let malformed = |reason: String| Stage1Error::Malformed {
        path: vocab_file.to_path_buf(),
        line: 0,
        reason,
    };
    let mut slots: Vec<Option<Vec<u8>>> = vec![None; raw.len()];
    for (token, &id) in &raw {
        let slot = slots
            .get_mut(id as usize)
            .ok_or_else(|| malformed(format!("id {id} exceeds the {} entries", raw.len())))?;
        if slot.is_some() {
            return Err(malformed(format!("id {id} is assigned twice")));
        }
        let bytes = decode_token(token).ok_or_else(|| {
            malformed(format!(
                "token {token:?} uses a character outside the byte map"
            ))
        })?;
        *slot = Some(bytes);
    }
    let token_bytes: Vec<Vec<u8>> = slots
        .into_iter()
        .map(|s| s.expect("ids are dense"))
        .collect();

    let merges_text = read(merges_file)?;
    let mut pretokenize = Pretokenize::None;
    let mut merges = Vec::new();
    for (i, line) in merges_text.lines().enumerate() {
        let line_no = i + 1;
        if i == 0 && line.starts_with("#version") {
            continue;
        }
        if i == 0 && line.starts_with("HBPE-") {
            pretokenize = parse_stage1_header(line).map_err(|reason| Stage1Error::Malformed {
                path: merges_file.to_path_buf(),
                line: line_no,
                reason,
            })?;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
            return Err(Stage1Error::Malformed {
                path: merges_file.to_path_buf(),
                line: line_no,
                reason: format!("expected \"left right\", got {line:?}"),
            });
        }
        let lookup = |s: &str| {
            raw.get(s)
                .copied()
                .ok_or_else(|| Stage1Error::UnknownSymbol {
                    path: merges_file.to_path_buf(),
                    line: line_no,
                    symbol: s.to_string(),
                })
        };
        let left = lookup(parts[0])?;
        let right = lookup(parts[1])?;
        let result = lookup(&format!("{}{}", parts[0], parts[1]))?;
        merges.push(TokenMerge {
            left: TokenId(left),
            right: TokenId(right),
            result: TokenId(result),
        });
    }

    FirstStageVocab::from_parts(token_bytes, merges, pretokenize)
}

fn parse_stage1_header(line: &str) -> Result<Pretokenize, String> {
    let rest = line
        .strip_prefix(STAGE1_HEADER)
        .ok_or_else(|| format!("unsupported header {line:?}"))?;
    let mut pretokenize = Pretokenize::None;
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("pretokenize", v)) => pretokenize = v.parse()?,
            _ => return Err(format!("unknown header field {field:?}")),
        }
    }
    Ok(pretokenize)
}

impl FirstStageVocab {
    /// `vocab.json` contents, entries in id order.
    pub fn vocab_json(&self) -> String {
        let mut out = String::from("{");
        for (i, (id, bytes)) in self.tokens().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let key = serde_json::to_string(&encode_token(bytes)).expect("strings serialize");
            out.push_str(&key);
            out.push_str(": ");
            out.push_str(&id.0.to_string());
        }
        out.push_str("}\n");
        out
    }

    /// `merges.txt` contents: header line, then one merge per line.
    pub fn merges_txt(&self) -> String {
        let mut out = format!("{STAGE1_HEADER} pretokenize={}\n", self.pretokenize());
        for m in self.merges() {
            let l = self.token_bytes(m.left).expect("valid merge");
            let r = self.token_bytes(m.right).expect("valid merge");
            out.push_str(&encode_token(l));
            out.push(' ');
            out.push_str(&encode_token(r));
            out.push('\n');
        }
        out
    }

    /// Writes both files atomically.
    pub fn save(&self, vocab_file: &Path, merges_file: &Path) -> Result<(), Stage1Error> {
        for (path, contents) in [
            (vocab_file, self.vocab_json()),
            (merges_file, self.merges_txt()),
        ] {
            write_atomic(path, contents.as_bytes()).map_err(|source| Stage1Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
        Ok(())
    }
}
