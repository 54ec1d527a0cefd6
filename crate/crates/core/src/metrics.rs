//! Sentence BLEU, Self-BLEU and summary statistics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentence BLEU settings. Recorded in report metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuOptions {
    /// Highest n-gram order, 1..=4.
    pub max_order: usize,
    /// Add-one smoothing of orders >= 2 that have no matches.
    pub add_one_smoothing: bool,
}

impl Default for BleuOptions {
    fn default() -> Self {
        Self {
            max_order: 4,
            add_one_smoothing: true,
        }
    }
}

impl BleuOptions {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.max_order) {
            return Err(Error::InvalidParameter(format!(
                "BLEU max order must be in [1, 4], got {}",
                self.max_order
            )));
        }
        Ok(())
    }
}

/// Lowercases and splits on whitespace; every punctuation character becomes
/// its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            tokens.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence-level BLEU of `candidate` against `references`, in [0, 1].
pub fn bleu(candidate: &str, references: &[&str], options: &BleuOptions) -> Result<f64> {
    options.validate()?;
    if references.is_empty() {
        return Err(Error::InvalidInput("BLEU needs at least one reference".into()));
    }
    let cand = tokenize(candidate);
    if cand.is_empty() {
        return Ok(0.0);
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();

    let mut log_sum = 0.0;
    for n in 1..=options.max_order {
        let cand_counts = ngram_counts(&cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (gram, count) in ngram_counts(r, n) {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(count);
            }
        }
        let total: usize = cand_counts.values().sum();
        let matched: usize = cand_counts
            .iter()
            .map(|(gram, &count)| count.min(max_ref.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if matched > 0 {
            matched as f64 / total as f64
        } else if n >= 2 && options.add_one_smoothing {
            1.0 / (total as f64 + 1.0)
        } else {
            return Ok(0.0);
        };
        log_sum += precision.ln();
    }

    let c = cand.len();
    // closest reference length, shorter wins ties
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let brevity = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    let score = brevity * (log_sum / options.max_order as f64).exp();
    Ok(score.clamp(0.0, 1.0))
}

/// Mean leave-one-out BLEU across samples; lower means more diverse.
pub fn self_bleu<S: AsRef<str>>(samples: &[S], options: &BleuOptions) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "Self-BLEU needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let mut total = 0.0;
    for i in 0..samples.len() {
        let others: Vec<&str> = samples
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, s)| s.as_ref())
            .collect();
        total += bleu(samples[i].as_ref(), &others, options)?;
    }
    Ok(total / samples.len() as f64)
}

/// Arithmetic mean and population variance.
pub fn mean_and_variance(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidInput("mean of an empty list".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, variance))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    mean_and_variance(values).ok().map(|(m, _)| m)
}
