//! The discrete hyperparameter grid, baseline configs, and the textual config
//! format (`{'temperature': 0.6, 'top_p': 0.9, ...}`).

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

use crate::error::{Error, Result};

pub use crate::decoding::HyperparamConfig;

/// Cartesian grid over the four decoding axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub temperature: Vec<f64>,
    pub top_p: Vec<f64>,
    pub top_k: Vec<u32>,
    pub repetition_penalty: Vec<f64>,
}

impl Default for ConfigSpace {
    /// 11 temperatures (0.1..1.9 step 0.2, plus 0.6) x 10 top_p x 10 top_k x
    /// 6 repetition penalties = 6600 configs.
    fn default() -> Self {
        let mut temperature: Vec<f64> = (0..10).map(|i| (2 * i + 1) as f64 / 10.0).collect();
        temperature.push(0.6);
        temperature.sort_by(f64::total_cmp);
        Self {
            temperature,
            top_p: (1..=10).map(|i| i as f64 / 10.0).collect(),
            top_k: (1..=10).map(|i| i * 10).collect(),
            repetition_penalty: (0..=5).map(|i| (10 + i) as f64 / 10.0).collect(),
        }
    }
}

impl ConfigSpace {
    pub fn new(temperature: Vec<f64>, top_p: Vec<f64>, top_k: Vec<u32>, repetition_penalty: Vec<f64>) -> Result<Self> {
        let space = Self {
            temperature,
            top_p,
            top_k,
            repetition_penalty,
        };
        space.validate()?;
        Ok(space)
    }

    /// Space override file: a JSON object with one array per axis.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let space: ConfigSpace =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        fn increasing<T: PartialOrd>(name: &str, axis: &[T]) -> Result<()> {
            if axis.is_empty() {
                return Err(Error::Config(format!("axis {name} is empty")));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("axis {name} is not strictly increasing")));
            }
            Ok(())
        }
        increasing("temperature", &self.temperature)?;
        increasing("top_p", &self.top_p)?;
        increasing("top_k", &self.top_k)?;
        increasing("repetition_penalty", &self.repetition_penalty)?;
        // Every corner of the grid must be a valid config.
        let lo = |v: &[f64]| v[0];
        let hi = |v: &[f64]| v[v.len() - 1];
        for (t, p, k, r) in [
            (
                lo(&self.temperature),
                lo(&self.top_p),
                self.top_k[0],
                lo(&self.repetition_penalty),
            ),
            (
                hi(&self.temperature),
                hi(&self.top_p),
                self.top_k[self.top_k.len() - 1],
                hi(&self.repetition_penalty),
            ),
        ] {
            HyperparamConfig::new(t, p, k, r).map_err(|e| Error::Config(format!("axis value out of bounds: {e}")))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.temperature.len() * self.top_p.len() * self.top_k.len() * self.repetition_penalty.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Config at position `index` of [`ConfigSpace::enumerate`].
    pub fn get(&self, index: usize) -> Option<HyperparamConfig> {
        if index >= self.len() {
            return None;
        }
        let nr = self.repetition_penalty.len();
        let nk = self.top_k.len();
        let np = self.top_p.len();
        let r = index % nr;
        let k = (index / nr) % nk;
        let p = (index / (nr * nk)) % np;
        let t = index / (nr * nk * np);
        Some(HyperparamConfig {
            temperature: self.temperature[t],
            top_p: self.top_p[p],
            top_k: self.top_k[k],
            repetition_penalty: self.repetition_penalty[r],
        })
    }

    /// Full product in lexicographic axis order.
    pub fn enumerate(&self) -> Vec<HyperparamConfig> {
        (0..self.len()).filter_map(|i| self.get(i)).collect()
    }

    pub fn contains(&self, config: &HyperparamConfig) -> bool {
        self.temperature.contains(&config.temperature)
            && self.top_p.contains(&config.top_p)
            && self.top_k.contains(&config.top_k)
            && self.repetition_penalty.contains(&config.repetition_penalty)
    }

    /// Uniform draw over the grid.
    pub fn random_config<R: Rng + ?Sized>(&self, rng: &mut R) -> HyperparamConfig {
        let index = rng.random_range(0..self.len());
        self.get(index).expect("index within space")
    }

    /// Copy of the space with `axis` replaced by `values`; used for one-axis sweeps.
    pub fn with_axis(&self, axis: Axis, values: &[f64]) -> Result<Self> {
        let mut space = self.clone();
        match axis {
            Axis::Temperature => space.temperature = values.to_vec(),
            Axis::TopP => space.top_p = values.to_vec(),
            Axis::TopK => space.top_k = values.iter().map(|v| v.round() as u32).collect(),
            Axis::RepetitionPenalty => space.repetition_penalty = values.to_vec(),
        }
        space.validate()?;
        Ok(space)
    }
}

/// One of the four decoding axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Temperature,
    TopP,
    TopK,
    RepetitionPenalty,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::Temperature, Axis::TopP, Axis::TopK, Axis::RepetitionPenalty];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Temperature => "temperature",
            Axis::TopP => "top_p",
            Axis::TopK => "top_k",
            Axis::RepetitionPenalty => "repetition_penalty",
        }
    }

    pub fn value(self, config: &HyperparamConfig) -> f64 {
        match self {
            Axis::Temperature => config.temperature,
            Axis::TopP => config.top_p,
            Axis::TopK => config.top_k as f64,
            Axis::RepetitionPenalty => config.repetition_penalty,
        }
    }

    /// Returns `config` with this axis set to `value`.
    pub fn set(self, config: &HyperparamConfig, value: f64) -> Result<HyperparamConfig> {
        let c = *config;
        match self {
            Axis::Temperature => HyperparamConfig::new(value, c.top_p, c.top_k, c.repetition_penalty),
            Axis::TopP => HyperparamConfig::new(c.temperature, value, c.top_k, c.repetition_penalty),
            Axis::TopK => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(Error::InvalidParameter(format!("top_k must be integral, got {value}")));
                }
                HyperparamConfig::new(c.temperature, c.top_p, value as u32, c.repetition_penalty)
            }
            Axis::RepetitionPenalty => HyperparamConfig::new(c.temperature, c.top_p, c.top_k, value),
        }
    }

    /// Lower and upper config bounds for this axis.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Axis::Temperature => (HyperparamConfig::TEMPERATURE_MIN, HyperparamConfig::TEMPERATURE_MAX),
            Axis::TopP => (HyperparamConfig::TOP_P_MIN, HyperparamConfig::TOP_P_MAX),
            Axis::TopK => (HyperparamConfig::TOP_K_MIN as f64, HyperparamConfig::TOP_K_MAX as f64),
            Axis::RepetitionPenalty => (
                HyperparamConfig::REPETITION_PENALTY_MIN,
                HyperparamConfig::REPETITION_PENALTY_MAX,
            ),
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown axis `{s}`")))
    }
}

/// Which generation backend a default config is requested for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Toy,
    Remote,
    Scripted,
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(BackendKind::Toy),
            "remote" => Ok(BackendKind::Remote),
            "scripted" => Ok(BackendKind::Scripted),
            other => Err(Error::Config(format!("unknown backend kind `{other}`"))),
        }
    }
}

/// Default decoding config of the toy backend (and the scripted test double).
pub const TOY_DEFAULT: HyperparamConfig = HyperparamConfig {
    temperature: 0.6,
    top_p: 0.9,
    top_k: 50,
    repetition_penalty: 1.0,
};

/// Documented default for a backend. Remote backends have no built-in
/// default and must supply a defaults file (a JSON object with the four keys).
pub fn default_config(kind: BackendKind, defaults_file: Option<&Path>) -> Result<HyperparamConfig> {
    match kind {
        BackendKind::Toy | BackendKind::Scripted => Ok(TOY_DEFAULT),
        BackendKind::Remote => {
            let path = defaults_file.ok_or_else(|| Error::Config("remote backend requires a defaults file".into()))?;
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }
}

/// Outcome of [`parse_config_text`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    /// All four fields present and inside the config bounds.
    Ok,
    /// Parsed, but at least one field was pulled into bounds.
    Clamped,
    /// Nothing usable was found; the default config was substituted.
    Fallback,
}

impl ParseStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseStatus::Ok => "ok",
            ParseStatus::Clamped => "clamped",
            ParseStatus::Fallback => "fallback",
        }
    }
}

static BRACED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{[^{}]*\}").unwrap());

/// Extracts a config from free-form model output. Never fails: anything
/// unparseable yields `fallback` together with `fallback` status.
pub fn parse_config_text(text: &str, fallback: &HyperparamConfig) -> (HyperparamConfig, ParseStatus) {
    match try_parse(text) {
        Some(parsed) => parsed,
        None => (*fallback, ParseStatus::Fallback),
    }
}

fn try_parse(text: &str) -> Option<(HyperparamConfig, ParseStatus)> {
    let object = BRACED.find(text)?.as_str();
    let normalized = object.replace('\'', "\"");
    let value: serde_json::Value = serde_json::from_str(&normalized).ok()?;
    let map = value.as_object()?;
    let field = |name: &str| -> Option<f64> {
        match map.get(name)? {
            serde_json::Value::Number(n) => n.as_f64(),
            serde_json::Value::String(s) => s.trim().parse::<f64>().ok(),
            _ => None,
        }
        .filter(|v| v.is_finite())
    };
    let temperature = field("temperature")?;
    let top_p = field("top_p")?;
    let top_k = field("top_k")?;
    let repetition_penalty = field("repetition_penalty")?;

    let mut clamped = false;
    let mut clamp = |v: f64, lo: f64, hi: f64| {
        let c = v.clamp(lo, hi);
        if c != v {
            clamped = true;
        }
        c
    };
    let temperature = clamp(
        temperature,
        HyperparamConfig::TEMPERATURE_MIN,
        HyperparamConfig::TEMPERATURE_MAX,
    );
    let top_p = clamp(top_p, HyperparamConfig::TOP_P_MIN, HyperparamConfig::TOP_P_MAX);
    let top_k = clamp(
        top_k.round(),
        HyperparamConfig::TOP_K_MIN as f64,
        HyperparamConfig::TOP_K_MAX as f64,
    ) as u32;
    let repetition_penalty = clamp(
        repetition_penalty,
        HyperparamConfig::REPETITION_PENALTY_MIN,
        HyperparamConfig::REPETITION_PENALTY_MAX,
    );
    if field("top_k")?.fract() != 0.0 {
        clamped = true;
    }
    let config = HyperparamConfig::new(temperature, top_p, top_k, repetition_penalty).ok()?;
    let status = if clamped { ParseStatus::Clamped } else { ParseStatus::Ok };
    Some((config, status))
}

/// Canonical single-line rendering in the prompt's brace format.
pub fn render_config_text(config: &HyperparamConfig) -> String {
    format!(
        "{{'temperature': {:?}, 'top_p': {:?}, 'top_k': {}, 'repetition_penalty': {:?}}}",
        config.temperature, config.top_p, config.top_k, config.repetition_penalty
    )
}
