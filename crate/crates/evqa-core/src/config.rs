//! Pipeline configuration.
//!
//! Every hyperparameter used anywhere in the pipeline resolves through
//! [`PipelineConfig`]; no module carries a shadow default. The on-disk format
//! is a flat TOML document whose keys are exactly the field names below, plus
//! an optional `[backends]` section. Unknown keys are a hard error.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::ConfigError;

/// All pipeline hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Number of keyframes retrieved per question (K).
    pub top_k: usize,
    /// Similarity weight for the original query.
    pub omega_main: f64,
    /// Similarity weight for the object-level query term.
    pub omega_object: f64,
    /// Similarity weight for the scene-level query term.
    pub omega_scene: f64,
    /// Minimum temporal gap in seconds separating consecutive events.
    pub delta_t_s: f64,
    /// Spatial/flow balance in the spatio-temporal difference score.
    pub alpha: f64,
    /// Expansion stops at the first candidate whose score exceeds this.
    pub tau_st: f64,
    /// Maximum frames added per event side during expansion.
    pub l_max: usize,
    /// Confidence threshold for accepting a memory during reasoning.
    pub tau_conf: f64,
    /// Maximum recursion depth for memory refinement.
    pub d_max: usize,
    /// Maximum frames ingested per video.
    pub frame_cap: usize,
    /// Named prompt-template bundle.
    pub prompt_set: String,
    /// Scale applied to the spatial difference term before combining.
    pub spatial_scale: f64,
    /// Scale applied to the flow difference term before combining.
    pub flow_scale: f64,
    /// Accept `alpha` outside [0,1]. Off by default; the score then mixes the
    /// two terms with a negative weight on one of them.
    pub allow_unbounded_alpha: bool,
}

/// Returns the default configuration:
/// Δt=3, τ_st=2, L_max=3, τ=0.6, D_max=3, frame_cap=1024, top_k=32,
/// ω=(0.5, 0.25, 0.25), α=0.5.
pub fn default_config() -> PipelineConfig {
    PipelineConfig {
        top_k: 32,
        omega_main: 0.5,
        omega_object: 0.25,
        omega_scene: 0.25,
        delta_t_s: 3.0,
        alpha: 0.5,
        tau_st: 2.0,
        l_max: 3,
        tau_conf: 0.6,
        d_max: 3,
        frame_cap: 1024,
        prompt_set: "default".to_string(),
        spatial_scale: 1.0,
        flow_scale: 1.0,
        allow_unbounded_alpha: false,
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        default_config()
    }
}

impl PipelineConfig {
    /// Check every config invariant. Called after any load or merge.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, reason: String| ConfigError::Invalid {
            key: key.to_string(),
            reason,
        };
        if self.top_k == 0 {
            return Err(invalid("top_k", "must be positive".into()));
        }
        if self.omega_main < 0.0 || self.omega_object < 0.0 || self.omega_scene < 0.0 {
            return Err(invalid("omega_main", "weights must be non-negative".into()));
        }
        let omega_sum = self.omega_main + self.omega_object + self.omega_scene;
        if omega_sum <= 0.0 {
            return Err(invalid(
                "omega_main",
                format!("omega weights sum to {omega_sum}; must be > 0"),
            ));
        }
        if self.delta_t_s <= 0.0 {
            return Err(invalid("delta_t_s", "must be positive".into()));
        }
        if !self.allow_unbounded_alpha && !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(
                "alpha",
                format!(
                    "{} is outside [0,1]; set allow_unbounded_alpha to accept it",
                    self.alpha
                ),
            ));
        }
        if self.tau_st <= 0.0 {
            return Err(invalid("tau_st", "must be positive".into()));
        }
        if self.l_max == 0 {
            return Err(invalid("l_max", "must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tau_conf) {
            return Err(invalid("tau_conf", "must be in [0,1]".into()));
        }
        if self.d_max < 1 {
            return Err(invalid("d_max", "must be at least 1".into()));
        }
        if self.frame_cap == 0 {
            return Err(invalid("frame_cap", "must be positive".into()));
        }
        if self.spatial_scale < 0.0 || self.flow_scale < 0.0 {
            return Err(invalid(
                "spatial_scale",
                "scale factors must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// What kind of model a backend profile fronts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    TextEmbed,
    Caption,
    Agent,
    Answerer,
}

impl BackendKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::TextEmbed => "text-embed",
            BackendKind::Caption => "caption",
            BackendKind::Agent => "agent",
            BackendKind::Answerer => "answerer",
        }
    }

    /// Environment variable consulted for this profile's credential.
    pub fn api_key_env(&self) -> &'static str {
        match self {
            BackendKind::TextEmbed => "TEXT_EMBED_API_KEY",
            BackendKind::Caption => "CAPTION_API_KEY",
            BackendKind::Agent => "AGENT_API_KEY",
            BackendKind::Answerer => "ANSWERER_API_KEY",
        }
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_retries() -> u32 {
    2
}

/// Connection settings for one external model.
///
/// `endpoint` is either an `http(s)://` chat-completions URL or
/// `mock:{scenario}` naming a registered deterministic scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendProfile {
    pub endpoint: String,
    #[serde(default)]
    pub model_name: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Milliseconds between retries; zero for tests.
    #[serde(default)]
    pub retry_backoff_ms: u64,
    /// Maximum frames a request may carry (answerer only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_limit: Option<usize>,
}

impl BackendProfile {
    pub fn mock(scenario: &str) -> Self {
        Self {
            endpoint: format!("mock:{scenario}"),
            model_name: String::new(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            retry_backoff_ms: 0,
            frame_limit: None,
        }
    }

    pub fn mock_scenario(&self) -> Option<&str> {
        self.endpoint.strip_prefix("mock:")
    }
}

/// The `[backends]` section of the config file, keyed by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    pub text_embed: BackendProfile,
    pub caption: BackendProfile,
    pub agent: BackendProfile,
    pub answerer: BackendProfile,
}

impl Default for BackendsConfig {
    fn default() -> Self {
        let mut answerer = BackendProfile::mock("overlap");
        answerer.frame_limit = Some(32);
        Self {
            text_embed: BackendProfile::mock("hash"),
            caption: BackendProfile::mock("synthetic"),
            agent: BackendProfile::mock("keyword"),
            answerer,
        }
    }
}

/// Partial config document as read from a TOML file. Every pipeline key is
/// optional so a file can override just a few values; unknown keys fail.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    pub top_k: Option<usize>,
    pub omega_main: Option<f64>,
    pub omega_object: Option<f64>,
    pub omega_scene: Option<f64>,
    pub delta_t_s: Option<f64>,
    pub alpha: Option<f64>,
    pub tau_st: Option<f64>,
    pub l_max: Option<usize>,
    pub tau_conf: Option<f64>,
    pub d_max: Option<usize>,
    pub frame_cap: Option<usize>,
    pub prompt_set: Option<String>,
    pub spatial_scale: Option<f64>,
    pub flow_scale: Option<f64>,
    pub allow_unbounded_alpha: Option<bool>,
    pub backends: Option<BackendsConfig>,
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Overlay this document's set keys onto `cfg`.
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            };
        }
        set!(top_k);
        set!(omega_main);
        set!(omega_object);
        set!(omega_scene);
        set!(delta_t_s);
        set!(alpha);
        set!(tau_st);
        set!(l_max);
        set!(tau_conf);
        set!(d_max);
        set!(frame_cap);
        set!(prompt_set);
        set!(spatial_scale);
        set!(flow_scale);
        set!(allow_unbounded_alpha);
    }
}

/// Overlay `EVQA_*` environment variables onto `cfg`. Each pipeline key maps
/// to `EVQA_` plus the key upper-cased, e.g. `EVQA_TOP_K`.
pub fn apply_env(
    cfg: &mut PipelineConfig,
    env: &BTreeMap<String, String>,
) -> Result<(), ConfigError> {
    fn parse<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, ConfigError> {
        raw.parse().map_err(|_| ConfigError::Invalid {
            key: key.to_string(),
            reason: format!("cannot parse environment value `{raw}`"),
        })
    }
    for (key, raw) in env {
        let Some(name) = key.strip_prefix("EVQA_") else {
            continue;
        };
        match name {
            "TOP_K" => cfg.top_k = parse(key, raw)?,
            "OMEGA_MAIN" => cfg.omega_main = parse(key, raw)?,
            "OMEGA_OBJECT" => cfg.omega_object = parse(key, raw)?,
            "OMEGA_SCENE" => cfg.omega_scene = parse(key, raw)?,
            "DELTA_T_S" => cfg.delta_t_s = parse(key, raw)?,
            "ALPHA" => cfg.alpha = parse(key, raw)?,
            "TAU_ST" => cfg.tau_st = parse(key, raw)?,
            "L_MAX" => cfg.l_max = parse(key, raw)?,
            "TAU_CONF" => cfg.tau_conf = parse(key, raw)?,
            "D_MAX" => cfg.d_max = parse(key, raw)?,
            "FRAME_CAP" => cfg.frame_cap = parse(key, raw)?,
            "PROMPT_SET" => cfg.prompt_set = raw.clone(),
            "SPATIAL_SCALE" => cfg.spatial_scale = parse(key, raw)?,
            "FLOW_SCALE" => cfg.flow_scale = parse(key, raw)?,
            "ALLOW_UNBOUNDED_ALPHA" => cfg.allow_unbounded_alpha = parse(key, raw)?,
            _ => {
                return Err(ConfigError::Invalid {
                    key: key.to_string(),
                    reason: "unknown EVQA_ configuration variable".to_string(),
                })
            }
        }
    }
    Ok(())
}
