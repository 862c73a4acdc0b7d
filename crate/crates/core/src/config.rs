//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::FlagSource;
use crate::learn::{FeatureSpec, LearnConfig, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommendConfig {
    pub flag_source: FlagSource,
    /// Historian spec and model; both `None` picks them from the grid.
    pub historian_spec: Option<FeatureSpec>,
    pub historian_model: Option<ModelKind>,
    pub collection_spec: FeatureSpec,
    pub collection_model: Option<ModelKind>,
    pub limit: usize,
}

impl Default for RecommendConfig {
    fn default() -> Self {
        RecommendConfig {
            flag_source: FlagSource::Annotations,
            historian_spec: None,
            historian_model: None,
            collection_spec: FeatureSpec::parse("bio").expect("valid spec"),
            collection_model: None,
            limit: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Dump manifest to load. Relative paths resolve against the config file.
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/decisions.jsonl`.
    pub decision_log: Option<PathBuf>,
    pub seed: u64,
    pub learn: LearnConfig,
    pub recommend: RecommendConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: None,
            out_dir: PathBuf::from("out"),
            decision_log: None,
            seed: LearnConfig::default().seed,
            learn: LearnConfig::default(),
            recommend: RecommendConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.manifest, &mut config.decision_log].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if config.out_dir.is_relative() {
            config.out_dir = base.join(&config.out_dir);
        }
        config.learn.seed = config.seed;
        Ok(config)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.learn.seed = seed;
        self
    }

    pub fn decision_log_path(&self) -> PathBuf {
        self.decision_log
            .clone()
            .unwrap_or_else(|| self.out_dir.join("decisions.jsonl"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.learn.k < 2 {
            return Err(Error::Configuration(format!("k must be at least 2, got {}", self.learn.k)));
        }
        if self.recommend.limit == 0 {
            return Err(Error::Configuration("recommend.limit must be positive".into()));
        }
        if self.recommend.historian_model.is_some() && self.recommend.historian_spec.is_none() {
            return Err(Error::Configuration("historian_model needs historian_spec".into()));
        }
        Ok(())
    }
}
