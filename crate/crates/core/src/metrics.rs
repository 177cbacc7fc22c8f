//! Segmentation-invariant evaluation metrics and forward-pass FLOP estimates.

use std::fmt::Write as _;

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("byte count is zero")]
    ZeroBytes,
    #[error("token count is zero")]
    ZeroTokens,
    #[error("word count is zero")]
    ZeroWords,
    #[error("negative log-likelihood must be finite and non-negative")]
    BadNll,
    #[error("average patch length must be positive and finite")]
    BadPatchLength,
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        match self {
            MetricsError::ZeroBytes => "MT-001",
            MetricsError::ZeroTokens => "MT-002",
            MetricsError::ZeroWords => "MT-003",
            MetricsError::BadNll => "MT-004",
            MetricsError::BadPatchLength => "MT-005",
        }
    }
}

/// Unit of a negative log-likelihood. Never inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NllUnit {
    Bits,
    Nats,
}

/// Total negative log-likelihood of a test set with its size in each unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllRecord<F: Real> {
    pub total_nll: F,
    pub unit: NllUnit,
    pub byte_count: u64,
    pub token_count: u64,
    pub word_count: u64,
}

impl<F: Real> NllRecord<F> {
    pub fn new(
        total_nll: F,
        unit: NllUnit,
        byte_count: u64,
        token_count: u64,
        word_count: u64,
    ) -> Result<Self, MetricsError> {
        if !total_nll.is_finite() || total_nll < F::zero() {
            return Err(MetricsError::BadNll);
        }
        if byte_count == 0 {
            return Err(MetricsError::ZeroBytes);
        }
        if token_count == 0 {
            return Err(MetricsError::ZeroTokens);
        }
        if word_count == 0 {
            return Err(MetricsError::ZeroWords);
        }
        Ok(Self {
            total_nll,
            unit,
            byte_count,
            token_count,
            word_count,
        })
    }

    /// Total information content in bits.
    pub fn total_bits(&self) -> F {
        match self.unit {
            NllUnit::Bits => self.total_nll,
            NllUnit::Nats => self.total_nll / F::LN_2(),
        }
    }
}

/// Bits per byte.
pub fn bpb<F: Real>(r: &NllRecord<F>) -> Result<F, MetricsError> {
    if r.byte_count == 0 {
        return Err(MetricsError::ZeroBytes);
    }
    Ok(r.total_bits() / F::from_count(r.byte_count))
}

/// Bits per token.
pub fn bits_per_token<F: Real>(r: &NllRecord<F>) -> Result<F, MetricsError> {
    if r.token_count == 0 {
        return Err(MetricsError::ZeroTokens);
    }
    Ok(r.total_bits() / F::from_count(r.token_count))
}

/// Bits per token recovered from bits per byte: `|bytes| / |tokens| * bpb`.
pub fn bits_per_token_from_bpb<F: Real>(
    bpb: F,
    byte_count: u64,
    token_count: u64,
) -> Result<F, MetricsError> {
    if token_count == 0 {
        return Err(MetricsError::ZeroTokens);
    }
    Ok(F::from_count(byte_count) / F::from_count(token_count) * bpb)
}

/// Tokens per word.
pub fn fertility<F: Real>(token_count: u64, word_count: u64) -> Result<F, MetricsError> {
    if word_count == 0 {
        return Err(MetricsError::ZeroWords);
    }
    Ok(F::from_count(token_count) / F::from_count(word_count))
}

/// Forward-pass FLOPs of a decoder-only transformer, embeddings free:
///
/// `n_ctx * (n_layer * (8 d^2 + 4 d d_ffn + 2 n_ctx d) + 2 d vocab)`
///
/// covering the QKV and output projections, the two FFN matmuls, the
/// attention score/value products, and the logits. Works over integers for
/// exact counts and over floats for fractional context lengths.
pub fn transformer_flops<T>(n_ctx: T, d_model: T, d_ffn: T, n_layer: T, vocab: T) -> T
where
    T: Num + Copy + FromPrimitive,
{
    let c = |x: u8| T::from_u8(x).expect("small constants fit");
    let per_layer = c(8) * d_model * d_model + c(4) * d_model * d_ffn + c(2) * n_ctx * d_model;
    n_ctx * (n_layer * per_layer + c(2) * d_model * vocab)
}

/// Shape of one transformer stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackDims {
    pub layers: u64,
    pub hidden: u64,
    pub ffn: u64,
    pub heads: u64,
}

/// Inputs of the hierarchical FLOP estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real + Serialize + serde::de::DeserializeOwned")]
pub struct FlopsConfig<F: Real> {
    pub encoder: StackDims,
    pub decoder: StackDims,
    pub latent: StackDims,
    /// Output alphabet of the local decoder.
    pub v_prime: u64,
    /// Average patch length `p`.
    pub avg_patch_len: F,
    /// Total input length `Y` in bytes.
    pub total_bytes: u64,
}

/// Per-component FLOPs of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlopsBreakdown<F: Real> {
    /// Number of latent positions, `ceil(Y / p)`.
    pub latent_len: F,
    pub encoder: F,
    pub decoder: F,
    pub latent: F,
}

impl<F: Real> FlopsBreakdown<F> {
    pub fn total(&self) -> F {
        self.encoder + self.decoder + self.latent
    }
}

fn stack_flops<F: Real>(n_ctx: F, dims: &StackDims, vocab: u64) -> F {
    transformer_flops(
        n_ctx,
        F::from_count(dims.hidden),
        F::from_count(dims.ffn),
        F::from_count(dims.layers),
        F::from_count(vocab),
    )
}

/// `T * Tr(p, enc, V=0) + T * Tr(p, dec, V=V') + Tr(T, latent, V=0)` with
/// `T = ceil(Y / p)`.
pub fn hierarchical_flops<F: Real>(c: &FlopsConfig<F>) -> Result<FlopsBreakdown<F>, MetricsError> {
    let p = c.avg_patch_len;
    if !p.is_finite() || p <= F::zero() {
        return Err(MetricsError::BadPatchLength);
    }
    let t = (F::from_count(c.total_bytes) / p).ceil();
    Ok(FlopsBreakdown {
        latent_len: t,
        encoder: t * stack_flops(p, &c.encoder, 0),
        decoder: t * stack_flops(p, &c.decoder, c.v_prime),
        latent: stack_flops(t, &c.latent, 0),
    })
}

/// One row of a stats report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StatsReport {
    pub strategy: String,
    #[serde(rename = "S")]
    pub max_patch_len: Option<usize>,
    pub avg_patch_len: Option<f64>,
    pub fertility: Option<f64>,
    pub bpb: Option<f64>,
    pub flops: Option<f64>,
}

impl StatsReport {
    /// `key=value` lines; absent values are written as `na`.
    pub fn to_key_value(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("na".to_string(), |x| x.to_string());
        let mut out = String::new();
        let _ = writeln!(out, "strategy={}", self.strategy);
        let _ = writeln!(
            out,
            "S={}",
            self.max_patch_len
                .map_or("na".to_string(), |s| s.to_string())
        );
        let _ = writeln!(out, "avg_patch_len={}", opt(self.avg_patch_len));
        let _ = writeln!(out, "fertility={}", opt(self.fertility));
        let _ = writeln!(out, "bpb={}", opt(self.bpb));
        let _ = writeln!(out, "flops={}", opt(self.flops));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(nll: f64, unit: NllUnit, bytes: u64, toks: u64) -> NllRecord<f64> {
        NllRecord::new(nll, unit, bytes, toks, 1).unwrap()
    }

    #[test]
    fn bpb_examples() {
        assert_eq!(bpb(&rec(8.0, NllUnit::Bits, 8, 1)).unwrap(), 1.0);
        let v = bpb(&rec(100.0, NllUnit::Nats, 50, 1)).unwrap();
        assert!((v - 2.885390081777927).abs() < 1e-12);
    }

    #[test]
    fn bits_per_token_examples() {
        assert_eq!(bits_per_token(&rec(8.0, NllUnit::Bits, 8, 4)).unwrap(), 2.0);
        assert_eq!(bits_per_token_from_bpb(1.0f64, 8, 4).unwrap(), 2.0);
        assert_eq!(
            bits_per_token_from_bpb(1.0f64, 8, 0),
            Err(MetricsError::ZeroTokens)
        );
    }

    #[test]
    fn zero_counts_are_errors() {
        let mut r = rec(1.0, NllUnit::Bits, 1, 1);
        r.byte_count = 0;
        assert_eq!(bpb(&r), Err(MetricsError::ZeroBytes));
        r.token_count = 0;
        assert_eq!(bits_per_token(&r), Err(MetricsError::ZeroTokens));
        assert_eq!(
            NllRecord::new(1.0, NllUnit::Bits, 0, 1, 1),
            Err(MetricsError::ZeroBytes)
        );
        assert_eq!(
            NllRecord::new(-1.0, NllUnit::Bits, 1, 1, 1),
            Err(MetricsError::BadNll)
        );
    }

    #[test]
    fn fertility_examples() {
        assert_eq!(fertility::<f64>(15, 10).unwrap(), 1.5);
        assert_eq!(fertility::<f64>(7, 7).unwrap(), 1.0);
        assert_eq!(fertility::<f64>(7, 0), Err(MetricsError::ZeroWords));
    }

    #[test]
    fn transformer_flops_hand_case() {
        assert_eq!(transformer_flops(4u128, 2, 4, 1, 3), 368);
        assert_eq!(transformer_flops(4.0f64, 2.0, 4.0, 1.0, 3.0), 368.0);
        assert_eq!(transformer_flops(0u64, 2, 4, 1, 3), 0);
        assert_eq!(
            transformer_flops(4u64, 2, 4, 1, 0),
            transformer_flops(4u64, 2, 4, 1, 3) - 4 * 2 * 2 * 3
        );
    }

    fn small() -> FlopsConfig<f64> {
        let local = StackDims {
            layers: 3,
            hidden: 512,
            ffn: 512,
            heads: 8,
        };
        FlopsConfig {
            encoder: local,
            decoder: local,
            latent: StackDims {
                layers: 12,
                hidden: 768,
                ffn: 2048,
                heads: 12,
            },
            v_prime: 1000,
            avg_patch_len: 4.0,
            total_bytes: 8192,
        }
    }

    #[test]
    fn zero_layer_locals_leave_only_latent() {
        let mut c = small();
        c.encoder.layers = 0;
        c.decoder.layers = 0;
        c.v_prime = 0;
        let f = hierarchical_flops(&c).unwrap();
        assert_eq!(
            f.total(),
            transformer_flops(2048.0, 768.0, 2048.0, 12.0, 0.0)
        );
    }

    #[test]
    fn latent_len_rounds_up() {
        let mut c = small();
        c.avg_patch_len = 3.0;
        assert_eq!(hierarchical_flops(&c).unwrap().latent_len, 2731.0);
        c.avg_patch_len = 0.0;
        assert_eq!(hierarchical_flops(&c), Err(MetricsError::BadPatchLength));
    }

    #[test]
    fn config_json_round_trip() {
        let c = small();
        let json = serde_json::to_string(&c).unwrap();
        let back: FlopsConfig<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn report_formats() {
        let r = StatsReport {
            strategy: "space".into(),
            max_patch_len: Some(6),
            avg_patch_len: Some(2.5),
            ..Default::default()
        };
        assert_eq!(
            r.to_key_value(),
            "strategy=space\nS=6\navg_patch_len=2.5\nfertility=na\nbpb=na\nflops=na\n"
        );
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["S"], 6);
        assert!(json["bpb"].is_null());
    }
}
