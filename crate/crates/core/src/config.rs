//! Global configuration: one structured document covering every subsystem,
//! loadable from TOML with `ASH_`-prefixed environment overrides.

use crate::env::EnvConfig;
use crate::error::{AshError, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Corpus generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CorpusSection {
    /// Total number of videos to generate.
    pub num_videos: usize,
    /// Fraction of videos that are non-decoy (counted exactly, not sampled).
    pub relevance_fraction: f64,
    /// Per-video expert noise drawn uniformly from this closed range.
    pub noise_range: [f64; 2],
    /// Fraction of the non-decoy videos cut down to a contiguous sub-segment.
    pub partial_fraction: f64,
    /// Seed for the corpus generator RNG streams.
    pub seed: u64,
    /// Hard cap on simulated env steps per source playthrough.
    pub max_steps: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            num_videos: 1000,
            relevance_fraction: 0.08,
            noise_range: [0.05, 0.25],
            partial_fraction: 0.5,
            seed: 101,
            max_steps: 2400,
        }
    }
}

/// Retrieval parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RetrievalSection {
    /// Videos retrieved per agent trajectory.
    pub k: usize,
    /// Match window width, in index rows.
    pub w_r: usize,
    /// Index stride: one embedding row per this many corpus frames.
    pub stride: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection {
            k: 20,
            w_r: 32,
            stride: 4,
        }
    }
}

/// Key-moment clustering parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KeyMomentSection {
    /// Minimum distinct source trajectories per retained cluster.
    pub c_min: usize,
    /// Density smoothing: neighbor count for core distances, and the minimum
    /// cluster size during extraction.
    pub min_samples: usize,
    /// Exemplars kept per cluster for approximate prediction.
    pub max_exemplars: usize,
}

impl Default for KeyMomentSection {
    fn default() -> Self {
        KeyMomentSection {
            c_min: 6,
            min_samples: 6,
            max_exemplars: 16,
        }
    }
}

/// Sequence-model shape shared by the IDM and the policy.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelSection {
    /// Hidden width of the transformer stack.
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    /// Short-term memory length (observations per window).
    pub w_s: usize,
    /// Long-term memory length (key moments in the prefix).
    pub w_l: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: 128,
            layers: 2,
            heads: 4,
            w_s: 64,
            w_l: 10,
        }
    }
}

/// Optimizer and training-loop parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainingSection {
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Sampling temperature used by the policy at inference.
    pub temperature: f64,
    /// Early-stop patience: consecutive holdout-loss increases tolerated.
    pub patience: usize,
    /// Fraction of extra IDM windows generated with a uniform random policy.
    pub idm_random_fraction: f64,
    /// Fraction of samples held out from training.
    pub holdout_fraction: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            lr: 5e-5,
            weight_decay: 1e-5,
            warmup_ratio: 0.05,
            batch: 4,
            max_epochs: 3,
            temperature: 1.0,
            patience: 2,
            idm_random_fraction: 0.25,
            holdout_fraction: 0.1,
        }
    }
}

/// Outer-loop parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LoopSection {
    /// Number of parallel agents under the shared policy.
    pub agents: usize,
    /// Stuck threshold: env steps without a new key moment before a bootstrap.
    pub delta: usize,
    /// Total env-step budget across all agents.
    pub budget: usize,
    /// Env steps of random-policy rollout used to warm-start the IDM.
    pub warmup_random_steps: usize,
}

impl Default for LoopSection {
    fn default() -> Self {
        LoopSection {
            agents: 4,
            delta: 600,
            budget: 24_000,
            warmup_random_steps: 1600,
        }
    }
}

/// Seed section: one master seed from which every subsystem stream derives.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SeedSection {
    pub master: u64,
}

impl Default for SeedSection {
    fn default() -> Self {
        SeedSection { master: 7 }
    }
}

/// The whole configuration document.
#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(default)]
pub struct GlobalConfig {
    pub env: EnvConfig,
    pub corpus: CorpusSection,
    pub retrieval: RetrievalSection,
    pub keymoments: KeyMomentSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    #[serde(rename = "loop")]
    pub run_loop: LoopSection,
    pub seeds: SeedSection,
}

impl GlobalConfig {
    /// Desk preset: every knob scaled down so a full loop, including repeated
    /// policy retraining, runs in minutes on a laptop CPU.
    pub fn desk() -> Self {
        let mut cfg = GlobalConfig::default();
        cfg.env.grid_width = 48;
        cfg.env.grid_height = 9;
        cfg.corpus.num_videos = 220;
        cfg.corpus.relevance_fraction = 80.0 / 220.0;
        cfg.corpus.max_steps = 1600;
        cfg.retrieval.k = 10;
        cfg.retrieval.w_r = 16;
        cfg.model.hidden = 64;
        cfg.model.w_s = 8;
        cfg.training.lr = 2e-3;
        cfg.run_loop.delta = 150;
        cfg.run_loop.budget = 4800;
        cfg.run_loop.warmup_random_steps = 1200;
        cfg
    }

    /// Resolve a named preset or a file path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match name_or_path {
            "default" => Ok(GlobalConfig::default()),
            "desk" => Ok(GlobalConfig::desk()),
            path => GlobalConfig::load(Path::new(path)),
        }
    }

    /// Load a TOML config, then apply `ASH_`-prefixed environment overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AshError::io(path, e))?;
        let mut cfg: GlobalConfig =
            toml::from_str(&text).map_err(|e| AshError::config(format!("{path:?}: {e}")))?;
        cfg.apply_env_overrides(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| AshError::io(path, e))
    }

    /// Apply overrides of the form `ASH_<SECTION>_<FIELD>=<toml value>`, e.g.
    /// `ASH_RETRIEVAL_K=40` or `ASH_CORPUS_NOISE_RANGE=[0.0,0.1]`. The first
    /// underscore-separated segment names the section, the remainder the
    /// field.
    pub fn apply_env_overrides<I>(&mut self, vars: I) -> Result<()>
    where
        I: Iterator<Item = (String, String)>,
    {
        let mut pairs: Vec<(String, String)> = vars
            .filter(|(k, _)| k.starts_with("ASH_") && k.len() > 4)
            .collect();
        pairs.sort();
        if pairs.is_empty() {
            return Ok(());
        }
        let mut doc = toml::Value::try_from(&*self).expect("config converts to toml value");
        for (key, raw) in pairs {
            let dotted = key[4..].to_ascii_lowercase();
            let (section, field) = dotted
                .split_once('_')
                .ok_or_else(|| AshError::config(format!("override {key}: missing field name")))?;
            let value: toml::Value = parse_override_value(&raw)
                .ok_or_else(|| AshError::config(format!("override {key}: unparseable value")))?;
            let table = doc
                .get_mut(section)
                .and_then(|v| v.as_table_mut())
                .ok_or_else(|| AshError::config(format!("override {key}: unknown section")))?;
            if !table.contains_key(field) {
                return Err(AshError::config(format!(
                    "override {key}: unknown field `{section}.{field}`"
                )));
            }
            table.insert(field.to_string(), value);
        }
        *self = doc
            .try_into()
            .map_err(|e| AshError::config(format!("applying overrides: {e}")))?;
        Ok(())
    }

    /// Reject configurations that cannot run, naming the failing field.
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.model.w_l == 0 {
            return Err(AshError::config("model.w_l must be > 0"));
        }
        if self.model.w_s <= 1 {
            return Err(AshError::config("model.w_s must be > 1"));
        }
        if self.run_loop.delta == 0 {
            return Err(AshError::config("loop.delta must be > 0"));
        }
        if self.model.hidden == 0 || self.model.hidden % self.model.heads != 0 {
            return Err(AshError::config(
                "model.hidden must be a positive multiple of model.heads",
            ));
        }
        if self.corpus.relevance_fraction <= 0.0 || self.corpus.relevance_fraction > 1.0 {
            return Err(AshError::config(
                "corpus.relevance_fraction must be in (0, 1]",
            ));
        }
        if self.corpus.noise_range[0] > self.corpus.noise_range[1]
            || self.corpus.noise_range[0] < 0.0
            || self.corpus.noise_range[1] > 1.0
        {
            return Err(AshError::config(
                "corpus.noise_range must be an ordered subrange of [0, 1]",
            ));
        }
        if self.retrieval.k == 0 {
            return Err(AshError::config("retrieval.k must be >= 1"));
        }
        if self.retrieval.w_r == 0 {
            return Err(AshError::config("retrieval.w_r must be >= 1"));
        }
        if self.retrieval.stride == 0 {
            return Err(AshError::config("retrieval.stride must be >= 1"));
        }
        if self.training.batch == 0 {
            return Err(AshError::config("training.batch must be >= 1"));
        }
        if !(0.0..0.5).contains(&self.training.holdout_fraction) {
            return Err(AshError::config(
                "training.holdout_fraction must be in [0, 0.5)",
            ));
        }
        if self.run_loop.agents == 0 {
            return Err(AshError::config("loop.agents must be >= 1"));
        }
        Ok(())
    }
}

fn parse_override_value(raw: &str) -> Option<toml::Value> {
    // Try as a bare TOML literal first, then as a string.
    toml::from_str::<toml::Value>(&format!("v = {raw}"))
        .ok()
        .and_then(|v| v.get("v").cloned())
        .or_else(|| Some(toml::Value::String(raw.to_string())))
}
