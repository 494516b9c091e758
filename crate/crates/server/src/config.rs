use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vpsim_core::adapters::{MockDelays, StageTimeouts};
use vpsim_core::pipeline::DEFAULT_BUDGET_S;
use vpsim_core::scenario::{PromptPolicy, DEFAULT_CHAR_BUDGET, DEFAULT_WINDOW};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("environment variable {key}: {message}")]
    Env { key: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterMode {
    #[default]
    Mock,
    Remote,
}

impl std::str::FromStr for AdapterMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mock" => Ok(AdapterMode::Mock),
            "remote" => Ok(AdapterMode::Remote),
            other => Err(format!("unknown adapter mode `{other}` (expected mock or remote)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterConfig {
    pub mode: AdapterMode,
    pub transcriber_url: Option<String>,
    pub patient_model_url: Option<String>,
    pub synthesizer_url: Option<String>,
    pub transcriber_timeout_s: f64,
    pub patient_model_timeout_s: f64,
    pub synthesizer_timeout_s: f64,
    pub temperature: f64,
    /// Stage delays for mock mode, in seconds.
    pub mock_stt_s: f64,
    pub mock_llm_s: f64,
    pub mock_tts_s: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        let t = StageTimeouts::default();
        AdapterConfig {
            mode: AdapterMode::Mock,
            transcriber_url: None,
            patient_model_url: None,
            synthesizer_url: None,
            transcriber_timeout_s: t.transcriber.as_secs_f64(),
            patient_model_timeout_s: t.patient_model.as_secs_f64(),
            synthesizer_timeout_s: t.synthesizer.as_secs_f64(),
            temperature: 0.7,
            mock_stt_s: 0.0,
            mock_llm_s: 0.0,
            mock_tts_s: 0.0,
        }
    }
}

impl AdapterConfig {
    pub fn timeouts(&self) -> StageTimeouts {
        StageTimeouts {
            transcriber: Duration::from_secs_f64(self.transcriber_timeout_s),
            patient_model: Duration::from_secs_f64(self.patient_model_timeout_s),
            synthesizer: Duration::from_secs_f64(self.synthesizer_timeout_s),
        }
    }

    pub fn mock_delays(&self) -> MockDelays {
        MockDelays::from_secs(self.mock_stt_s, self.mock_llm_s, self.mock_tts_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SentimentConfig {
    /// `rule` for the lexicon baseline; any other id names a remote model.
    pub model: String,
    pub url: Option<String>,
    pub blocking: bool,
    pub timeout_s: f64,
    pub max_in_flight: usize,
}

impl Default for SentimentConfig {
    fn default() -> Self {
        SentimentConfig {
            model: "rule".into(),
            url: None,
            blocking: false,
            timeout_s: 10.0,
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub window: usize,
    pub char_budget: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            window: DEFAULT_WINDOW,
            char_budget: DEFAULT_CHAR_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    /// Knowledge-base snapshot; the bundled demo set when absent.
    pub kb_path: Option<PathBuf>,
    pub latency_budget_s: f64,
    /// Per-session event buffer; consumers further behind are disconnected.
    pub event_buffer: usize,
    pub adapter: AdapterConfig,
    pub sentiment: SentimentConfig,
    pub memory: MemoryConfig,
    pub prompt: PromptPolicy,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("vpsim-data"),
            kb_path: None,
            latency_budget_s: DEFAULT_BUDGET_S,
            event_buffer: 256,
            adapter: AdapterConfig::default(),
            sentiment: SentimentConfig::default(),
            memory: MemoryConfig::default(),
            prompt: PromptPolicy::default(),
        }
    }
}

pub const ENV_PREFIX: &str = "VPSIM_";

impl ServiceConfig {
    /// Defaults, then the file (if any), then `VPSIM_*` environment variables.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => ServiceConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Applies overrides from `lookup`, keyed by `VPSIM_` + the upper-case
    /// dotted path with dots as underscores (e.g. `VPSIM_ADAPTER_MODE`).
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let get = |suffix: &str| lookup(&format!("{ENV_PREFIX}{suffix}"));
        fn parse<T: std::str::FromStr>(key: &str, v: String) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            v.trim().parse().map_err(|e: T::Err| ConfigError::Env {
                key: format!("{ENV_PREFIX}{key}"),
                message: e.to_string(),
            })
        }
        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some(v) = get($key) {
                    $field = parse($key, v)?;
                }
            };
            ($key:literal, opt $field:expr) => {
                if let Some(v) = get($key) {
                    $field = if v.trim().is_empty() { None } else { Some(parse($key, v)?) };
                }
            };
        }
        set!("LISTEN", self.listen);
        set!("DATA_DIR", self.data_dir);
        set!("KB_PATH", opt self.kb_path);
        set!("LATENCY_BUDGET_S", self.latency_budget_s);
        set!("EVENT_BUFFER", self.event_buffer);
        set!("ADAPTER_MODE", self.adapter.mode);
        set!("ADAPTER_TRANSCRIBER_URL", opt self.adapter.transcriber_url);
        set!("ADAPTER_PATIENT_MODEL_URL", opt self.adapter.patient_model_url);
        set!("ADAPTER_SYNTHESIZER_URL", opt self.adapter.synthesizer_url);
        set!("ADAPTER_TRANSCRIBER_TIMEOUT_S", self.adapter.transcriber_timeout_s);
        set!("ADAPTER_PATIENT_MODEL_TIMEOUT_S", self.adapter.patient_model_timeout_s);
        set!("ADAPTER_SYNTHESIZER_TIMEOUT_S", self.adapter.synthesizer_timeout_s);
        set!("ADAPTER_TEMPERATURE", self.adapter.temperature);
        set!("ADAPTER_MOCK_STT_S", self.adapter.mock_stt_s);
        set!("ADAPTER_MOCK_LLM_S", self.adapter.mock_llm_s);
        set!("ADAPTER_MOCK_TTS_S", self.adapter.mock_tts_s);
        set!("SENTIMENT_MODEL", self.sentiment.model);
        set!("SENTIMENT_URL", opt self.sentiment.url);
        set!("SENTIMENT_BLOCKING", self.sentiment.blocking);
        set!("SENTIMENT_TIMEOUT_S", self.sentiment.timeout_s);
        set!("SENTIMENT_MAX_IN_FLIGHT", self.sentiment.max_in_flight);
        set!("MEMORY_WINDOW", self.memory.window);
        set!("MEMORY_CHAR_BUDGET", self.memory.char_budget);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("latency_budget_s", self.latency_budget_s),
            ("adapter.transcriber_timeout_s", self.adapter.transcriber_timeout_s),
            ("adapter.patient_model_timeout_s", self.adapter.patient_model_timeout_s),
            ("adapter.synthesizer_timeout_s", self.adapter.synthesizer_timeout_s),
            ("sentiment.timeout_s", self.sentiment.timeout_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("event_buffer", self.event_buffer),
            ("sentiment.max_in_flight", self.sentiment.max_in_flight),
            ("memory.window", self.memory.window),
            ("memory.char_budget", self.memory.char_budget),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("adapter.mock_stt_s", self.adapter.mock_stt_s),
            ("adapter.mock_llm_s", self.adapter.mock_llm_s),
            ("adapter.mock_tts_s", self.adapter.mock_tts_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..=2.0).contains(&self.adapter.temperature) {
            return Err(ConfigError::Invalid("adapter.temperature must be in [0, 2]".into()));
        }
        if self.adapter.mode == AdapterMode::Remote {
            for (name, url) in [
                ("adapter.transcriber_url", &self.adapter.transcriber_url),
                ("adapter.patient_model_url", &self.adapter.patient_model_url),
                ("adapter.synthesizer_url", &self.adapter.synthesizer_url),
            ] {
                if url.is_none() {
                    return Err(ConfigError::Invalid(format!("{name} is required in remote mode")));
                }
            }
        }
        if self.sentiment.model != "rule" && self.sentiment.url.is_none() {
            return Err(ConfigError::Invalid(format!(
                "sentiment model `{}` needs sentiment.url",
                self.sentiment.model
            )));
        }
        Ok(())
    }
}
