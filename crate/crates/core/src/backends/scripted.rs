//! Test doubles: an ordered script of responses, and a pure function of the
//! request.

use std::collections::VecDeque;
use std::sync::Mutex;

use super::{Backend, GenerationRequest, GenerationResult};
use crate::error::{Error, Result};
use crate::space::{HyperparamConfig, TOY_DEFAULT};

/// Returns scripted responses in order and records every request.
#[derive(Debug)]
pub struct ScriptedBackend {
    id: String,
    default: HyperparamConfig,
    script: Mutex<VecDeque<String>>,
    requests: Mutex<Vec<GenerationRequest>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let script: VecDeque<String> = responses.into_iter().map(Into::into).collect();
        if script.is_empty() {
            return Err(Error::Harness("script must contain at least one response".into()));
        }
        Ok(Self {
            id: "scripted".into(),
            default: TOY_DEFAULT,
            script: Mutex::new(script),
            requests: Mutex::new(Vec::new()),
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_default(mut self, default: HyperparamConfig) -> Self {
        self.default = default;
        self
    }

    /// Requests received so far, in call order.
    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.requests.lock().expect("request log poisoned").clone()
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().expect("script poisoned").len()
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult> {
        self.requests
            .lock()
            .expect("request log poisoned")
            .push(request.clone());
        let text = self
            .script
            .lock()
            .expect("script poisoned")
            .pop_front()
            .ok_or_else(|| Error::Harness("scripted backend exhausted".into()))?;
        Ok(GenerationResult {
            token_count: text.chars().count(),
            text,
            backend_id: self.id.clone(),
            config_echo: request.config,
            warnings: Vec::new(),
        })
    }

    fn default_config(&self) -> HyperparamConfig {
        self.default
    }

    fn max_parallelism(&self) -> usize {
        1
    }
}

type ResponseFn = dyn Fn(&GenerationRequest) -> String + Send + Sync;

/// Deterministic backend whose response is a pure function of the request.
pub struct FnBackend {
    id: String,
    default: HyperparamConfig,
    respond: Box<ResponseFn>,
}

impl FnBackend {
    pub fn new(respond: impl Fn(&GenerationRequest) -> String + Send + Sync + 'static) -> Self {
        Self {
            id: "fn".into(),
            default: TOY_DEFAULT,
            respond: Box::new(respond),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_default(mut self, default: HyperparamConfig) -> Self {
        self.default = default;
        self
    }
}

impl std::fmt::Debug for FnBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnBackend").field("id", &self.id).finish()
    }
}

impl Backend for FnBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult> {
        let text = (self.respond)(request);
        Ok(GenerationResult {
            token_count: text.chars().count(),
            text,
            backend_id: self.id.clone(),
            config_echo: request.config,
            warnings: Vec::new(),
        })
    }

    fn default_config(&self) -> HyperparamConfig {
        self.default
    }
}
