//! Generation backends behind one interface: `generate(request) -> result`.

mod remote;
mod scripted;
mod toy;

pub use remote::{EndpointSpec, RemoteBackend, RetryPolicy};
pub use scripted::{FnBackend, ScriptedBackend};
pub use toy::{ToyBackend, ToyModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::HyperparamConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub config: HyperparamConfig,
    pub max_new_tokens: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, config: HyperparamConfig, max_new_tokens: usize, seed: u64) -> Self {
        Self {
            prompt: prompt.into(),
            config,
            max_new_tokens,
            seed,
            stop: Vec::new(),
        }
    }

    pub fn with_stop(mut self, stop: Vec<String>) -> Self {
        self.stop = stop;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompt.is_empty() {
            return Err(Error::InvalidInput("prompt is empty".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::InvalidInput("max_new_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub token_count: usize,
    pub backend_id: String,
    /// The config the backend actually applied.
    pub config_echo: HyperparamConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// A model that can be asked to continue a prompt under a decoding config.
pub trait Backend: Send + Sync {
    /// Stable identifier recorded in traces and reports.
    fn id(&self) -> &str;

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult>;

    /// Config used by the Default baseline.
    fn default_config(&self) -> HyperparamConfig;

    /// Upper bound on concurrent requests this backend tolerates.
    fn max_parallelism(&self) -> usize {
        usize::MAX
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult> {
        (**self).generate(request)
    }
    fn default_config(&self) -> HyperparamConfig {
        (**self).default_config()
    }
    fn max_parallelism(&self) -> usize {
        (**self).max_parallelism()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult> {
        (**self).generate(request)
    }
    fn default_config(&self) -> HyperparamConfig {
        (**self).default_config()
    }
    fn max_parallelism(&self) -> usize {
        (**self).max_parallelism()
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult> {
        (**self).generate(request)
    }
    fn default_config(&self) -> HyperparamConfig {
        (**self).default_config()
    }
    fn max_parallelism(&self) -> usize {
        (**self).max_parallelism()
    }
}
