//! Character-level n-gram model with additive smoothing, sampled through the
//! decoding pipeline. A desk-scale stand-in for a real language model.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, GenerationRequest, GenerationResult};
use crate::decoding::{sample_token, transform_pipeline, LogitVector, TokenId};
use crate::error::{Error, Result};
use crate::space::{HyperparamConfig, TOY_DEFAULT};

const FORMAT_VERSION: u32 = 1;
pub const MAX_ORDER: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    version: u32,
    order: usize,
    smoothing_alpha: f64,
    /// Sorted, deduplicated characters; a token id is an index here.
    vocabulary: Vec<char>,
    /// Context string (0 to order-1 characters) -> next-character counts.
    counts: BTreeMap<String, BTreeMap<char, u64>>,
}

impl ToyModel {
    pub fn train(corpus: &str, order: usize, smoothing_alpha: f64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Data("toy corpus is empty".into()));
        }
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::InvalidParameter(format!(
                "n-gram order must be in [1, {MAX_ORDER}], got {order}"
            )));
        }
        if !smoothing_alpha.is_finite() || smoothing_alpha <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "smoothing alpha must be positive, got {smoothing_alpha}"
            )));
        }
        let chars: Vec<char> = corpus.chars().collect();
        let mut vocabulary = chars.clone();
        vocabulary.sort_unstable();
        vocabulary.dedup();

        let mut counts: BTreeMap<String, BTreeMap<char, u64>> = BTreeMap::new();
        for (i, &next) in chars.iter().enumerate() {
            for ctx_len in 0..order.min(i + 1) {
                let context: String = chars[i - ctx_len..i].iter().collect();
                *counts.entry(context).or_default().entry(next).or_insert(0) += 1;
            }
        }
        Ok(Self {
            version: FORMAT_VERSION,
            order,
            smoothing_alpha,
            vocabulary,
            counts,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing_alpha(&self) -> f64 {
        self.smoothing_alpha
    }

    pub fn vocabulary(&self) -> &[char] {
        &self.vocabulary
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn token_id(&self, ch: char) -> Option<TokenId> {
        self.vocabulary.binary_search(&ch).ok()
    }

    pub fn token(&self, id: TokenId) -> char {
        self.vocabulary[id]
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        text.chars().filter_map(|c| self.token_id(c)).collect()
    }

    /// Counts for the longest suffix of `history` seen in training.
    fn row(&self, history: &[TokenId]) -> Option<&BTreeMap<char, u64>> {
        let max_ctx = (self.order - 1).min(history.len());
        (0..=max_ctx).rev().find_map(|len| {
            let context: String = history[history.len() - len..]
                .iter()
                .map(|&t| self.vocabulary[t])
                .collect();
            self.counts.get(&context)
        })
    }

    /// Next-token log-probabilities `ln(count + alpha)` (unnormalised).
    pub fn logits(&self, history: &[TokenId]) -> LogitVector {
        let row = self.row(history);
        let scores = self
            .vocabulary
            .iter()
            .map(|ch| {
                let count = row.and_then(|r| r.get(ch)).copied().unwrap_or(0);
                (count as f64 + self.smoothing_alpha).ln()
            })
            .collect();
        LogitVector::new(scores).expect("smoothed counts are finite and vocabulary non-empty")
    }

    /// Exact smoothed conditional distribution for `history`.
    pub fn conditional(&self, history: &[TokenId]) -> Vec<f64> {
        let row = self.row(history);
        let weights: Vec<f64> = self
            .vocabulary
            .iter()
            .map(|ch| row.and_then(|r| r.get(ch)).copied().unwrap_or(0) as f64 + self.smoothing_alpha)
            .collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ToyModel = serde_json::from_str(text)?;
        if model.version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported toy model version {} (expected {FORMAT_VERSION})",
                model.version
            )));
        }
        if model.vocabulary.is_empty() || !(1..=MAX_ORDER).contains(&model.order) {
            return Err(Error::Data("toy model has an empty vocabulary or bad order".into()));
        }
        if model.vocabulary.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("toy model vocabulary must be sorted and unique".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Autoregressive sampling of up to `max_new_tokens` characters.
    pub fn generate(&self, request: &GenerationRequest) -> Result<(String, usize)> {
        request.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
        let mut history = self.encode(&request.prompt);
        let prompt_len = history.len();
        let mut text = String::new();
        for _ in 0..request.max_new_tokens {
            let logits = self.logits(&history);
            let probs = transform_pipeline(&logits, &history[prompt_len..], &request.config)?;
            let token = sample_token(&probs, &mut rng)?;
            history.push(token);
            text.push(self.vocabulary[token]);
            if let Some(stop) = request
                .stop
                .iter()
                .find(|s| !s.is_empty() && text.ends_with(s.as_str()))
            {
                text.truncate(text.len() - stop.len());
                break;
            }
        }
        let count = text.chars().count();
        Ok((text, count))
    }
}

/// [`ToyModel`] as a [`Backend`].
#[derive(Debug, Clone)]
pub struct ToyBackend {
    model: Arc<ToyModel>,
    id: String,
    default: HyperparamConfig,
}

impl ToyBackend {
    pub fn new(model: ToyModel) -> Self {
        let id = format!("toy-ngram-o{}", model.order);
        Self {
            model: Arc::new(model),
            id,
            default: TOY_DEFAULT,
        }
    }

    pub fn with_default(mut self, default: HyperparamConfig) -> Self {
        self.default = default;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn model(&self) -> &ToyModel {
        &self.model
    }
}

impl Backend for ToyBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult> {
        let (text, token_count) = self.model.generate(request)?;
        Ok(GenerationResult {
            text,
            token_count,
            backend_id: self.id.clone(),
            config_echo: request.config,
            warnings: Vec::new(),
        })
    }

    fn default_config(&self) -> HyperparamConfig {
        self.default
    }
}
