//! Decoding transforms over a single next-token logit vector.
//!
//! The four hyperparameters act in a fixed order: repetition penalty, then
//! temperature, then top-k, then softmax and top-p. Masked tokens carry a
//! logit of negative infinity and come out of the softmax with probability
//! exactly zero.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = usize;

/// Logit value used for tokens removed by top-k.
pub const MASKED: f64 = f64::NEG_INFINITY;

/// Tolerance on probability mass used for validation and the nucleus cutoff.
pub const MASS_TOLERANCE: f64 = 1e-9;

const NUCLEUS_EPSILON: f64 = 1e-12;

/// Per-token unnormalised scores. Entries are finite, or [`MASKED`] after
/// top-k filtering; at least one entry is always unmasked.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    scores: Vec<f64>,
}

impl LogitVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidInput("logit vector is empty".into()));
        }
        if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "logit at token {pos} is not finite ({})",
                scores[pos]
            )));
        }
        Ok(Self { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn vocab_size(&self) -> usize {
        self.scores.len()
    }

    pub fn is_masked(&self, token: TokenId) -> bool {
        self.scores[token] == MASKED
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.scores
    }

    /// Normalises to probabilities. Masked tokens get exactly zero.
    pub fn softmax(&self) -> ProbVector {
        let max = self
            .scores
            .iter()
            .copied()
            .filter(|s| *s != MASKED)
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self
            .scores
            .iter()
            .map(|&s| if s == MASKED { 0.0 } else { (s - max).exp() })
            .collect();
        let total: f64 = exps.iter().sum();
        ProbVector {
            probs: exps.into_iter().map(|e| e / total).collect(),
        }
    }
}

/// A categorical distribution over token ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("probability vector is empty".into()));
        }
        if let Some(pos) = probs.iter().position(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "probability at token {pos} outside [0, 1] ({})",
                probs[pos]
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    /// Token ids with non-zero probability, ascending.
    pub fn support(&self) -> Vec<TokenId> {
        (0..self.probs.len()).filter(|&i| self.probs[i] > 0.0).collect()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

/// One point in the decoding hyperparameter space.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct HyperparamConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub repetition_penalty: f64,
}

#[derive(Deserialize)]
struct RawConfig {
    temperature: f64,
    top_p: f64,
    top_k: u32,
    repetition_penalty: f64,
}

impl TryFrom<RawConfig> for HyperparamConfig {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        HyperparamConfig::new(raw.temperature, raw.top_p, raw.top_k, raw.repetition_penalty)
    }
}

impl HyperparamConfig {
    pub const TEMPERATURE_MIN: f64 = 0.1;
    pub const TEMPERATURE_MAX: f64 = 2.0;
    pub const TOP_P_MIN: f64 = 0.01;
    pub const TOP_P_MAX: f64 = 1.0;
    pub const TOP_K_MIN: u32 = 1;
    pub const TOP_K_MAX: u32 = 100;
    pub const REPETITION_PENALTY_MIN: f64 = 1.0;
    pub const REPETITION_PENALTY_MAX: f64 = 1.5;

    pub fn new(temperature: f64, top_p: f64, top_k: u32, repetition_penalty: f64) -> Result<Self> {
        let in_range = |v: f64, lo: f64, hi: f64| v.is_finite() && v >= lo && v <= hi;
        if !in_range(temperature, Self::TEMPERATURE_MIN, Self::TEMPERATURE_MAX) {
            return Err(Error::InvalidParameter(format!(
                "temperature {temperature} outside [{}, {}]",
                Self::TEMPERATURE_MIN,
                Self::TEMPERATURE_MAX
            )));
        }
        if !in_range(top_p, Self::TOP_P_MIN, Self::TOP_P_MAX) {
            return Err(Error::InvalidParameter(format!(
                "top_p {top_p} outside [{}, {}]",
                Self::TOP_P_MIN,
                Self::TOP_P_MAX
            )));
        }
        if !(Self::TOP_K_MIN..=Self::TOP_K_MAX).contains(&top_k) {
            return Err(Error::InvalidParameter(format!(
                "top_k {top_k} outside [{}, {}]",
                Self::TOP_K_MIN,
                Self::TOP_K_MAX
            )));
        }
        if !in_range(
            repetition_penalty,
            Self::REPETITION_PENALTY_MIN,
            Self::REPETITION_PENALTY_MAX,
        ) {
            return Err(Error::InvalidParameter(format!(
                "repetition_penalty {repetition_penalty} outside [{}, {}]",
                Self::REPETITION_PENALTY_MIN,
                Self::REPETITION_PENALTY_MAX
            )));
        }
        Ok(Self {
            temperature,
            top_p,
            top_k,
            repetition_penalty,
        })
    }

    fn key(&self) -> (u64, u64, u32, u64) {
        (
            self.temperature.to_bits(),
            self.top_p.to_bits(),
            self.top_k,
            self.repetition_penalty.to_bits(),
        )
    }
}

impl PartialEq for HyperparamConfig {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for HyperparamConfig {}

impl Hash for HyperparamConfig {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

/// Lexicographic on (temperature, top_p, top_k, repetition_penalty).
impl Ord for HyperparamConfig {
    fn cmp(&self, other: &Self) -> Ordering {
        self.temperature
            .total_cmp(&other.temperature)
            .then(self.top_p.total_cmp(&other.top_p))
            .then(self.top_k.cmp(&other.top_k))
            .then(self.repetition_penalty.total_cmp(&other.repetition_penalty))
    }
}

impl PartialOrd for HyperparamConfig {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for HyperparamConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::space::render_config_text(self))
    }
}

pub fn apply_temperature(logits: &LogitVector, temperature: f64) -> Result<LogitVector> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    Ok(LogitVector {
        scores: logits.scores.iter().map(|s| s / temperature).collect(),
    })
}

/// CTRL-style penalty: logits of tokens seen in `context` are divided by the
/// penalty when positive and multiplied by it when negative.
pub fn apply_repetition_penalty(logits: &LogitVector, context: &[TokenId], penalty: f64) -> Result<LogitVector> {
    if !penalty.is_finite() || penalty < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "repetition penalty must be >= 1.0, got {penalty}"
        )));
    }
    let mut scores = logits.scores.clone();
    if penalty == 1.0 {
        return Ok(LogitVector { scores });
    }
    let seen: HashSet<TokenId> = context.iter().copied().collect();
    for token in seen {
        if let Some(s) = scores.get_mut(token) {
            if *s > 0.0 {
                *s /= penalty;
            } else if *s < 0.0 {
                *s *= penalty;
            }
        }
    }
    Ok(LogitVector { scores })
}

/// Keeps the `k` highest logits; ties at the cutoff go to the lower token id.
pub fn apply_top_k(logits: &LogitVector, k: usize) -> LogitVector {
    let n = logits.scores.len();
    if k >= n {
        return logits.clone();
    }
    let mut order: Vec<TokenId> = (0..n).collect();
    order.sort_by(|&a, &b| logits.scores[b].total_cmp(&logits.scores[a]).then(a.cmp(&b)));
    let mut scores = vec![MASKED; n];
    for &token in &order[..k.max(1)] {
        scores[token] = logits.scores[token];
    }
    LogitVector { scores }
}

/// Nucleus filter: keeps the shortest descending-probability prefix whose
/// mass reaches `p`, then renormalises.
pub fn apply_top_p(probs: &ProbVector, p: f64) -> Result<ProbVector> {
    if !p.is_finite() || p <= 0.0 {
        return Err(Error::InvalidParameter(format!("top_p must be in (0, 1], got {p}")));
    }
    if p >= 1.0 {
        return Ok(probs.clone());
    }
    let mut order: Vec<TokenId> = (0..probs.probs.len()).filter(|&i| probs.probs[i] > 0.0).collect();
    order.sort_by(|&a, &b| probs.probs[b].total_cmp(&probs.probs[a]).then(a.cmp(&b)));

    let mut kept = Vec::new();
    let mut mass = 0.0;
    for token in order {
        kept.push(token);
        mass += probs.probs[token];
        if mass >= p - NUCLEUS_EPSILON {
            break;
        }
    }
    let mut out = vec![0.0; probs.probs.len()];
    for token in kept {
        out[token] = probs.probs[token] / mass;
    }
    Ok(ProbVector { probs: out })
}

/// Draws one token id proportionally to `probs`.
pub fn sample_token<R: Rng + ?Sized>(probs: &ProbVector, rng: &mut R) -> Result<TokenId> {
    let last = probs
        .probs
        .iter()
        .rposition(|p| *p > 0.0)
        .ok_or_else(|| Error::DegenerateDistribution("no token has positive probability".into()))?;
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for (token, &p) in probs.probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cumulative += p;
        if u < cumulative {
            return Ok(token);
        }
    }
    Ok(last)
}

/// repetition penalty -> temperature -> top-k -> softmax -> top-p.
pub fn transform_pipeline(logits: &LogitVector, context: &[TokenId], config: &HyperparamConfig) -> Result<ProbVector> {
    let penalized = apply_repetition_penalty(logits, context, config.repetition_penalty)?;
    let scaled = apply_temperature(&penalized, config.temperature)?;
    let filtered = apply_top_k(&scaled, config.top_k as usize);
    apply_top_p(&filtered.softmax(), config.top_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lv(v: &[f64]) -> LogitVector {
        LogitVector::new(v.to_vec()).unwrap()
    }

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn temperature_divides() {
        let l = lv(&[2.0, 1.0, 0.0]);
        assert_eq!(apply_temperature(&l, 1.0).unwrap().scores(), &[2.0, 1.0, 0.0]);
        assert_eq!(apply_temperature(&l, 0.5).unwrap().scores(), &[4.0, 2.0, 0.0]);
        assert_eq!(apply_temperature(&l, 2.0).unwrap().scores(), &[1.0, 0.5, 0.0]);
        assert!(matches!(apply_temperature(&l, 0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(apply_temperature(&l, -1.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(
            apply_temperature(&l, f64::NAN),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn logit_vector_rejects_non_finite() {
        assert!(LogitVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(LogitVector::new(vec![f64::INFINITY]).is_err());
        assert!(LogitVector::new(vec![]).is_err());
    }

    #[test]
    fn repetition_penalty_ctrl_rule() {
        // formula oracle: positive / p, negative * p
        let oracle = |x: f64, p: f64| if x > 0.0 { x / p } else { x * p };
        let l = lv(&[2.0, -1.0, 0.5, 3.0]);
        let out = apply_repetition_penalty(&l, &[0, 1, 1], 1.25).unwrap();
        assert_eq!(out.scores()[0], oracle(2.0, 1.25));
        assert_eq!(out.scores()[0], 1.6);
        assert_eq!(out.scores()[1], -1.25);
        assert_eq!(out.scores()[2].to_bits(), 0.5f64.to_bits());
        assert_eq!(out.scores()[3].to_bits(), 3.0f64.to_bits());

        let same = apply_repetition_penalty(&l, &[0, 1, 2, 3], 1.0).unwrap();
        assert_eq!(same, l);
        assert!(apply_repetition_penalty(&l, &[0], 0.9).is_err());
    }

    #[test]
    fn repetition_penalty_ignores_out_of_vocab_context() {
        let l = lv(&[1.0, 2.0]);
        let out = apply_repetition_penalty(&l, &[7], 1.5).unwrap();
        assert_eq!(out, l);
    }

    #[test]
    fn top_k_examples() {
        let l = lv(&[2.0, 1.0, 0.0]);
        assert_eq!(apply_top_k(&l, 3), l);
        assert_eq!(apply_top_k(&l, 10), l);
        let one = apply_top_k(&l, 1);
        assert!(!one.is_masked(0) && one.is_masked(1) && one.is_masked(2));

        let l = lv(&[0.1, 0.3, 0.2, 0.9]);
        let two = apply_top_k(&l, 2);
        let kept: Vec<_> = (0..4).filter(|&i| !two.is_masked(i)).collect();
        assert_eq!(kept, vec![1, 3]);
    }

    #[test]
    fn top_k_ties_prefer_lower_id() {
        let l = lv(&[1.0, 5.0, 1.0, 1.0]);
        let out = apply_top_k(&l, 2);
        let kept: Vec<_> = (0..4).filter(|&i| !out.is_masked(i)).collect();
        assert_eq!(kept, vec![0, 1]);
    }

    #[test]
    fn top_p_examples() {
        let p = pv(&[0.5, 0.3, 0.2]);
        assert_eq!(apply_top_p(&p, 1.0).unwrap(), p);
        let out = apply_top_p(&p, 0.7).unwrap();
        for (got, want) in out.probs().iter().zip([0.625, 0.375, 0.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        let out = apply_top_p(&p, 0.5).unwrap();
        assert_eq!(out.probs(), &[1.0, 0.0, 0.0]);
        assert!(apply_top_p(&p, 0.0).is_err());
        assert!(apply_top_p(&p, -0.2).is_err());
    }

    #[test]
    fn softmax_masks_to_exact_zero() {
        let l = apply_top_k(&lv(&[3.0, 1.0, 2.0]), 2);
        let p = l.softmax();
        assert_eq!(p.probs()[1], 0.0);
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_one_hot_and_seeded() {
        let p = pv(&[0.0, 0.0, 1.0]);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(sample_token(&p, &mut rng).unwrap(), 2);
        }
        let p = pv(&[0.2, 0.5, 0.3]);
        let a = sample_token(&p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_token(&p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_frequency_matches_distribution() {
        let p = pv(&[0.7, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let draws = 10_000;
        let zeros = (0..draws).filter(|_| sample_token(&p, &mut rng).unwrap() == 0).count();
        let freq = zeros as f64 / draws as f64;
        assert!((freq - 0.7).abs() <= 0.02, "frequency {freq}");
    }

    #[test]
    fn degenerate_distribution_errors() {
        let p = ProbVector { probs: vec![0.0, 0.0] };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_token(&p, &mut rng),
            Err(Error::DegenerateDistribution(_))
        ));
    }

    #[test]
    fn pipeline_examples() {
        let logits = lv(&[2.0, 1.0, 0.0]);
        let identity = HyperparamConfig::new(1.0, 1.0, 3, 1.0).unwrap();
        let out = transform_pipeline(&logits, &[], &identity).unwrap();
        assert_eq!(out, logits.softmax());

        let greedy = HyperparamConfig::new(1.0, 1.0, 1, 1.0).unwrap();
        let out = transform_pipeline(&logits, &[], &greedy).unwrap();
        assert_eq!(out.probs(), &[1.0, 0.0, 0.0]);

        // oracle: 2.0 / 1.5 for the seen token, then softmax by hand
        let penalized = HyperparamConfig::new(1.0, 1.0, 3, 1.5).unwrap();
        let out = transform_pipeline(&logits, &[0], &penalized).unwrap();
        let e = [(2.0f64 / 1.5).exp(), 1.0f64.exp(), 1.0];
        let z: f64 = e.iter().sum();
        for (got, want) in out.probs().iter().zip(e.iter().map(|x| x / z)) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn config_bounds() {
        assert!(HyperparamConfig::new(0.6, 0.9, 50, 1.0).is_ok());
        assert!(HyperparamConfig::new(0.05, 0.9, 50, 1.0).is_err());
        assert!(HyperparamConfig::new(2.1, 0.9, 50, 1.0).is_err());
        assert!(HyperparamConfig::new(0.6, 0.0, 50, 1.0).is_err());
        assert!(HyperparamConfig::new(0.6, 0.9, 0, 1.0).is_err());
        assert!(HyperparamConfig::new(0.6, 0.9, 101, 1.0).is_err());
        assert!(HyperparamConfig::new(0.6, 0.9, 50, 1.6).is_err());
        let bad: std::result::Result<HyperparamConfig, _> =
            serde_json::from_str(r#"{"temperature":0.6,"top_p":0.9,"top_k":50,"repetition_penalty":0.5}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn config_ordering_is_lexicographic() {
        let a = HyperparamConfig::new(0.1, 0.9, 50, 1.0).unwrap();
        let b = HyperparamConfig::new(0.1, 1.0, 10, 1.0).unwrap();
        let c = HyperparamConfig::new(0.3, 0.1, 10, 1.0).unwrap();
        assert!(a < b && b < c);
    }
}
