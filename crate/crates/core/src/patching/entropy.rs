//! Byte n-gram model used to score how unpredictable the next byte is.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fsutil::write_atomic;
use crate::num::Real;

/// Largest supported context length in bytes.
pub const MAX_ORDER: usize = 4;

const HEADER: &str = "HBPE-V1 entropy";

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("order {0} is outside 0..={MAX_ORDER}")]
    BadOrder(usize),
    #[error("smoothing must be finite and non-negative")]
    BadSmoothing,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

impl ScorerError {
    pub fn code(&self) -> &'static str {
        match self {
            ScorerError::EmptyCorpus => "PS-001",
            ScorerError::BadOrder(_) => "PS-002",
            ScorerError::BadSmoothing => "PS-003",
            ScorerError::Io { .. } => "PS-004",
            ScorerError::Malformed { .. } => "PS-005",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct NextCounts {
    total: u64,
    next: BTreeMap<u8, u64>,
}

/// Next-byte count table with additive smoothing.
///
/// With smoothing `a > 0` every byte has probability
/// `(n(c, b) + a) / (N(c) + 256 a)`; with `a = 0` only bytes seen after the
/// context have mass. Contexts never seen in training, and positions with
/// fewer than `order` preceding bytes, use the order-0 distribution.
#[derive(Debug, Clone)]
pub struct NgramEntropyScorer<F: Real> {
    order: usize,
    smoothing: F,
    contexts: HashMap<Vec<u8>, NextCounts>,
    entropies: HashMap<Vec<u8>, F>,
}

impl<F: Real> NgramEntropyScorer<F> {
    pub fn train(corpus: &[u8], order: usize, smoothing: F) -> Result<Self, ScorerError> {
        if order > MAX_ORDER {
            return Err(ScorerError::BadOrder(order));
        }
        if !smoothing.is_finite() || smoothing < F::zero() {
            return Err(ScorerError::BadSmoothing);
        }
        if corpus.is_empty() {
            return Err(ScorerError::EmptyCorpus);
        }
        let mut contexts: HashMap<Vec<u8>, NextCounts> = HashMap::new();
        let mut bump = |ctx: &[u8], b: u8| {
            let entry = contexts.entry(ctx.to_vec()).or_default();
            entry.total += 1;
            *entry.next.entry(b).or_insert(0) += 1;
        };
        for (i, &b) in corpus.iter().enumerate() {
            bump(&[], b);
            if order > 0 && i >= order {
                bump(&corpus[i - order..i], b);
            }
        }
        Ok(Self::finish(order, smoothing, contexts))
    }

    fn finish(order: usize, smoothing: F, contexts: HashMap<Vec<u8>, NextCounts>) -> Self {
        let entropies = contexts
            .iter()
            .map(|(ctx, counts)| (ctx.clone(), entropy_of(counts, smoothing)))
            .collect();
        Self {
            order,
            smoothing,
            contexts,
            entropies,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> F {
        self.smoothing
    }

    fn resolve<'a>(&'a self, context: &'a [u8]) -> &'a [u8] {
        if context.len() == self.order && self.contexts.contains_key(context) {
            context
        } else {
            &[]
        }
    }

    /// Shannon entropy in bits of the next-byte distribution after `context`.
    pub fn entropy(&self, context: &[u8]) -> F {
        self.entropies[self.resolve(context)]
    }

    /// Probability of `next` following `context`.
    pub fn probability(&self, context: &[u8], next: u8) -> F {
        let counts = &self.contexts[self.resolve(context)];
        let n = F::from_count(counts.next.get(&next).copied().unwrap_or(0));
        let denom = F::from_count(counts.total) + self.smoothing * F::lit(256.0);
        (n + self.smoothing) / denom
    }

    fn context_at<'a>(&self, bytes: &'a [u8], i: usize) -> &'a [u8] {
        if i >= self.order {
            &bytes[i - self.order..i]
        } else {
            &[]
        }
    }

    /// Entropy of the prediction for `bytes[i]` given the preceding bytes.
    pub fn entropy_at(&self, bytes: &[u8], i: usize) -> F {
        self.entropy(self.context_at(bytes, i))
    }

    /// `-log2 p(bytes[i] | preceding bytes)`; infinite when the byte has no
    /// mass under zero smoothing.
    pub fn surprisal_at(&self, bytes: &[u8], i: usize) -> F {
        -self.probability(self.context_at(bytes, i), bytes[i]).log2()
    }

    /// Count-table file: header, then `context_hex next_byte count` lines
    /// sorted by context and byte. The empty context is written as `-`.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{HEADER} order={} smoothing={}\n",
            self.order, self.smoothing
        );
        let mut keys: Vec<&Vec<u8>> = self.contexts.keys().collect();
        keys.sort();
        for ctx in keys {
            let hex = if ctx.is_empty() {
                "-".to_string()
            } else {
                ctx.iter().map(|b| format!("{b:02x}")).collect()
            };
            for (b, c) in &self.contexts[ctx].next {
                out.push_str(&format!("{hex} {b} {c}\n"));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ScorerError> {
        let bad = |line: usize, reason: String| ScorerError::Malformed { line, reason };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines
            .next()
            .ok_or_else(|| bad(1, "missing header".into()))?;
        let rest = header
            .strip_prefix(HEADER)
            .ok_or_else(|| bad(1, format!("unsupported header {header:?}")))?;
        let (mut order, mut smoothing) = (None, None);
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("order", v)) => order = v.parse::<usize>().ok(),
                Some(("smoothing", v)) => smoothing = v.parse::<f64>().ok().and_then(F::from_f64),
                _ => return Err(bad(1, format!("unknown header field {field:?}"))),
            }
        }
        let order = order.ok_or_else(|| bad(1, "missing or bad order".into()))?;
        let smoothing = smoothing.ok_or_else(|| bad(1, "missing or bad smoothing".into()))?;
        if order > MAX_ORDER {
            return Err(ScorerError::BadOrder(order));
        }
        if !smoothing.is_finite() || smoothing < F::zero() {
            return Err(ScorerError::BadSmoothing);
        }

        let mut contexts: HashMap<Vec<u8>, NextCounts> = HashMap::new();
        for (line, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = l.split_whitespace().collect();
            let [hex, b, c] = fields[..] else {
                return Err(bad(line, "expected \"context_hex next_byte count\"".into()));
            };
            let ctx = if hex == "-" {
                Vec::new()
            } else {
                parse_hex(hex).ok_or_else(|| bad(line, format!("bad context {hex:?}")))?
            };
            if !ctx.is_empty() && ctx.len() != order {
                return Err(bad(
                    line,
                    format!("context length {} != order {order}", ctx.len()),
                ));
            }
            let b: u8 = b
                .parse()
                .map_err(|_| bad(line, format!("bad byte {b:?}")))?;
            let c: u64 = c
                .parse()
                .map_err(|_| bad(line, format!("bad count {c:?}")))?;
            let entry = contexts.entry(ctx).or_default();
            entry.total += c;
            *entry.next.entry(b).or_insert(0) += c;
        }
        if contexts.get(&Vec::new()).is_none_or(|c| c.total == 0) {
            return Err(ScorerError::EmptyCorpus);
        }
        Ok(Self::finish(order, smoothing, contexts))
    }

    pub fn save(&self, path: &Path) -> Result<(), ScorerError> {
        write_atomic(path, self.to_text().as_bytes()).map_err(|source| ScorerError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScorerError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScorerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}

impl<F: Real> PartialEq for NgramEntropyScorer<F> {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
            && self.smoothing == other.smoothing
            && self.contexts == other.contexts
    }
}

fn parse_hex(s: &str) -> Option<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
        .collect()
}

fn entropy_of<F: Real>(counts: &NextCounts, smoothing: F) -> F {
    let denom = F::from_count(counts.total) + smoothing * F::lit(256.0);
    let term = |p: F| {
        if p > F::zero() {
            -p * p.log2()
        } else {
            F::zero()
        }
    };
    let mut h = F::zero();
    for &c in counts.next.values() {
        h = h + term((F::from_count(c) + smoothing) / denom);
    }
    let unseen = 256 - counts.next.len() as u64;
    if smoothing > F::zero() && unseen > 0 {
        h = h + F::from_count(unseen) * term(smoothing / denom);
    }
    // Clamp the rounding residue on deterministic distributions.
    h.max(F::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_distribution_has_zero_entropy() {
        let s = NgramEntropyScorer::<f64>::train(b"aaaa", 0, 0.0).unwrap();
        assert_eq!(s.entropy(&[]), 0.0);
        assert_eq!(s.entropy_at(b"aaaa", 3), 0.0);
    }

    #[test]
    fn two_symbols_give_one_bit() {
        let s = NgramEntropyScorer::<f64>::train(b"ab", 0, 0.0).unwrap();
        assert_eq!(s.entropy(&[]), 1.0);
        let s = NgramEntropyScorer::<f32>::train(b"ab", 0, 0.0).unwrap();
        assert_eq!(s.entropy(&[]), 1.0f32);
    }

    #[test]
    fn order_one_alternation() {
        let s = NgramEntropyScorer::<f64>::train(b"abababab", 1, 0.0).unwrap();
        assert_eq!(s.entropy(b"a"), 0.0);
        assert_eq!(s.entropy(b"b"), 0.0);
        // unseen context falls back to order 0: a and b equally likely
        assert_eq!(s.entropy(b"x"), 1.0);
        assert_eq!(s.probability(b"a", b'b'), 1.0);
    }

    #[test]
    fn uniform_smoothing_limit() {
        // A single observation drowned by heavy smoothing approaches 8 bits.
        let s = NgramEntropyScorer::<f64>::train(b"a", 0, 1e9).unwrap();
        assert!((s.entropy(&[]) - 8.0).abs() < 1e-6);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            NgramEntropyScorer::<f64>::train(b"", 1, 0.1),
            Err(ScorerError::EmptyCorpus)
        ));
        assert!(matches!(
            NgramEntropyScorer::<f64>::train(b"a", 5, 0.1),
            Err(ScorerError::BadOrder(5))
        ));
        assert!(matches!(
            NgramEntropyScorer::<f64>::train(b"a", 1, -1.0),
            Err(ScorerError::BadSmoothing)
        ));
        assert!(matches!(
            NgramEntropyScorer::<f64>::train(b"a", 1, f64::NAN),
            Err(ScorerError::BadSmoothing)
        ));
    }

    #[test]
    fn text_round_trip() {
        let s =
            NgramEntropyScorer::<f64>::train(b"the cat sat on the mat\x00\xff", 2, 0.05).unwrap();
        let text = s.to_text();
        assert!(text.starts_with("HBPE-V1 entropy order=2 smoothing=0.05\n"));
        let back = NgramEntropyScorer::<f64>::from_text(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn malformed_text() {
        assert!(NgramEntropyScorer::<f64>::from_text("").is_err());
        assert!(NgramEntropyScorer::<f64>::from_text("HBPE-V1 entropy order=1\n").is_err());
        let e = NgramEntropyScorer::<f64>::from_text(
            "HBPE-V1 entropy order=1 smoothing=0\n- 97 1\nzz 97 1\n",
        )
        .unwrap_err();
        assert!(matches!(e, ScorerError::Malformed { line: 3, .. }));
        let e = NgramEntropyScorer::<f64>::from_text(
            "HBPE-V1 entropy order=1 smoothing=0\n6162 97 1\n",
        )
        .unwrap_err();
        assert!(matches!(e, ScorerError::Malformed { line: 2, .. }));
    }
}
