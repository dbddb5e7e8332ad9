use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use drnews::corpus::{FeatureConfig, TokenizerConfig};
use drnews::pipeline::ElementConfig;
use drnews::predictor::{PredictorConfig, SampleConfig};
use drnews::subnode::TrainConfig;
use drnews::swarch::FitConfig;
use drnews::synth::SynthConfig;
use drnews::walk::WalkConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Input locations. Unset inputs default to files inside `artifacts`, so a
/// `synth` run followed by the other stages works without a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub artifacts: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub lexicon_positive: Option<PathBuf>,
    pub lexicon_negative: Option<PathBuf>,
    pub returns: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwarchSection {
    #[serde(flatten)]
    pub fit: FitConfig,
    /// Crisis threshold on the high-regime probability.
    pub threshold: f64,
    #[serde(flatten, skip_serializing)]
    unknown: BTreeMap<String, toml::Value>,
}

impl Default for SwarchSection {
    fn default() -> Self {
        SwarchSection {
            fit: FitConfig::default(),
            threshold: 0.5,
            unknown: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelerKind {
    #[default]
    Movement,
    Direction,
    Crisis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplesSection {
    #[serde(flatten)]
    pub samples: SampleConfig,
    pub labeler: LabelerKind,
    pub up_threshold: f64,
    pub down_threshold: f64,
    #[serde(flatten, skip_serializing)]
    unknown: BTreeMap<String, toml::Value>,
}

impl Default for SamplesSection {
    fn default() -> Self {
        SamplesSection {
            samples: SampleConfig::default(),
            labeler: LabelerKind::Movement,
            up_threshold: drnews::predictor::UP_THRESHOLD,
            down_threshold: drnews::predictor::DOWN_THRESHOLD,
            unknown: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Trading days before an onset in which a positive prediction counts.
    pub lookahead: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { lookahead: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed copied into every stage.
    pub seed: u64,
    pub paths: Paths,
    pub tokenizer: TokenizerConfig,
    pub elements: ElementConfig,
    pub features: FeatureConfig,
    pub walk: WalkConfig,
    pub train: TrainConfig,
    pub swarch: SwarchSection,
    pub samples: SamplesSection,
    pub predictor: PredictorConfig,
    pub eval: EvalSection,
    pub synth: SynthConfig,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// Propagates the global seed and validates every section.
    pub fn finalize(mut self, seed: Option<u64>) -> Result<Self, CliError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.walk.seed = self.seed;
        self.train.seed = self.seed;
        self.swarch.fit.seed = self.seed;
        self.predictor.seed = self.seed;
        self.synth.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        for (section, unknown) in [("swarch", &self.swarch.unknown), ("samples", &self.samples.unknown)] {
            if let Some(key) = unknown.keys().next() {
                return Err(CliError::config(format!("unknown field `{key}` in [{section}]")));
            }
        }
        let q = self.elements.quantile;
        if !(q > 0.0 && q <= 1.0) {
            return Err(CliError::config(format!(
                "elements.quantile must be in (0, 1], got {q}"
            )));
        }
        if !(0.0..=1.0).contains(&self.swarch.threshold) {
            return Err(CliError::config("swarch.threshold must be in [0, 1]"));
        }
        if self.swarch.fit.starts == 0
            || self.swarch.fit.max_iterations == 0
            || self.swarch.fit.tolerance.is_nan()
            || self.swarch.fit.tolerance <= 0.0
        {
            return Err(CliError::config(
                "swarch needs starts, max_iterations and tolerance > 0",
            ));
        }
        if self.eval.lookahead == 0 {
            return Err(CliError::config("eval.lookahead must be >= 1"));
        }
        if self.samples.up_threshold < self.samples.down_threshold {
            return Err(CliError::config(
                "samples.up_threshold must not be below down_threshold",
            ));
        }
        self.walk.validate()?;
        self.train.validate()?;
        self.samples.samples.validate()?;
        self.predictor.validate()?;
        self.synth.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form without paths.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serialises");
        if let Some(map) = value.as_object_mut() {
            map.remove("paths");
        }
        let canonical = serde_json::to_string(&value).expect("value serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn artifacts(&self) -> PathBuf {
        self.paths
            .artifacts
            .clone()
            .unwrap_or_else(|| PathBuf::from("artifacts"))
    }

    fn input(&self, set: &Option<PathBuf>, default: &str) -> PathBuf {
        set.clone().unwrap_or_else(|| self.artifacts().join(default))
    }

    pub fn corpus(&self) -> PathBuf {
        self.input(&self.paths.corpus, drnews::synth::CORPUS_FILE)
    }

    pub fn returns(&self) -> PathBuf {
        self.input(&self.paths.returns, drnews::synth::RETURNS_FILE)
    }

    pub fn lexicon_paths(&self) -> (PathBuf, PathBuf) {
        (
            self.input(&self.paths.lexicon_positive, drnews::synth::POSITIVE_FILE),
            self.input(&self.paths.lexicon_negative, drnews::synth::NEGATIVE_FILE),
        )
    }
}
