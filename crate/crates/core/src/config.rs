//! Run configuration: demographic schemas and targets, retrieval sizes,
//! training hyperparameters, decoding settings and seeds.
//!
//! Stored as TOML. Target weights are renormalized to sum to one when the
//! distributions are built, so published percentages that do not add up
//! exactly can be pasted in unchanged.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{Embedder, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::fairness::{AttributeSchema, CategoricalDistribution, DEFAULT_SCORE_SCALE};
use crate::lm::{DEFAULT_ALPHA, DEFAULT_MAX_LEN, DEFAULT_ORDER, DEFAULT_VOCAB_SIZE};
use crate::matchengine::{CandidateIndex, HardFilter, DEFAULT_POOL_K};
use crate::metrics::DEFAULT_SELECT_K;
use crate::pipeline::{AttributeTarget, Evaluator, ProfileField};
use crate::rlrefine::{QHyper, DEFAULT_BETA};

/// One attribute: category order and target weights in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeConfig {
    pub field: ProfileField,
    pub categories: Vec<String>,
    pub target: Vec<f64>,
}

impl AttributeConfig {
    pub fn schema(&self) -> Result<AttributeSchema> {
        AttributeSchema::new(self.field.name(), self.categories.iter().cloned())
    }

    pub fn target_distribution(&self) -> Result<CategoricalDistribution> {
        let schema = self.schema()?;
        let total: f64 = self.target.iter().sum();
        if self.target.len() != schema.len() {
            return Err(Error::Config(format!(
                "`{}` lists {} categories but {} target weights",
                schema.name(),
                schema.len(),
                self.target.len()
            )));
        }
        if !(total.is_finite() && total > 0.0) || self.target.iter().any(|w| *w < 0.0) {
            return Err(Error::Config(format!(
                "`{}` target weights must be nonnegative with a positive sum",
                schema.name()
            )));
        }
        let weights = self.target.iter().map(|w| w / total).collect();
        CategoricalDistribution::new(schema, weights)
    }

    pub fn to_target(&self) -> Result<AttributeTarget> {
        Ok(AttributeTarget {
            field: self.field,
            target: self.target_distribution()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub order: usize,
    pub alpha: f64,
    pub vocab_size: usize,
    /// Share of the job corpus used for training, taken in file order.
    pub corpus_fraction: f64,
    /// Only meaningful for gradient-trained backends; the counting trainer
    /// ignores it.
    pub epochs: usize,
    /// Only meaningful for gradient-trained backends.
    pub learning_rate: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            alpha: DEFAULT_ALPHA,
            vocab_size: DEFAULT_VOCAB_SIZE,
            corpus_fraction: 1.0,
            epochs: 7,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub attributes: Vec<AttributeConfig>,
    pub k_pool: usize,
    pub k_select: usize,
    pub score_scale: f64,
    pub embedding_dim: usize,
    pub beta: f64,
    pub seed: u64,
    pub max_len: usize,
    pub samples_per_prompt: usize,
    pub lm: LmConfig,
    pub q: QHyper,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for Config {
    fn default() -> Self {
        Self {
            attributes: vec![
                AttributeConfig {
                    field: ProfileField::Gender,
                    categories: strings(&["female", "male"]),
                    target: vec![0.5, 0.5],
                },
                AttributeConfig {
                    field: ProfileField::Geolocation,
                    categories: strings(&[
                        "NA",
                        "Europe",
                        "SA",
                        "Asia",
                        "Africa",
                        "Remote",
                        "Australia",
                        "Unknown",
                    ]),
                    target: vec![0.55, 0.21, 0.03, 0.10, 0.01, 0.01, 0.01, 0.06],
                },
            ],
            k_pool: DEFAULT_POOL_K,
            k_select: DEFAULT_SELECT_K,
            score_scale: DEFAULT_SCORE_SCALE,
            embedding_dim: DEFAULT_DIM,
            beta: DEFAULT_BETA,
            seed: 0,
            max_len: DEFAULT_MAX_LEN,
            samples_per_prompt: 4,
            lm: LmConfig::default(),
            q: QHyper::default(),
        }
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Config = toml::from_str(&raw).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, raw).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_select == 0 || self.k_pool < self.k_select {
            return Err(Error::Config(format!(
                "need 0 < k_select <= k_pool, got {} and {}",
                self.k_select, self.k_pool
            )));
        }
        if !(self.score_scale > 0.0) {
            return Err(Error::Config("score_scale must be positive".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config("beta must be nonnegative".into()));
        }
        if !(self.lm.corpus_fraction > 0.0 && self.lm.corpus_fraction <= 1.0) {
            return Err(Error::Config("lm.corpus_fraction must be in (0, 1]".into()));
        }
        self.targets().map(|_| ())
    }

    pub fn targets(&self) -> Result<Vec<AttributeTarget>> {
        self.attributes
            .iter()
            .map(AttributeConfig::to_target)
            .collect()
    }

    /// An evaluator over `index` using this config's targets and sizes.
    pub fn evaluator(
        &self,
        index: CandidateIndex,
        embedder: Box<dyn Embedder>,
        filter: HardFilter,
    ) -> Result<Evaluator> {
        self.validate()?;
        Ok(Evaluator {
            attributes: self.targets()?,
            index,
            embedder,
            filter,
            k_pool: self.k_pool,
            k_select: self.k_select,
            scale: self.score_scale,
        })
    }

    pub fn attribute(&self, field: ProfileField) -> Option<&AttributeConfig> {
        self.attributes.iter().find(|a| a.field == field)
    }

    /// Schema of `field`, or an error if the config does not declare it.
    pub fn schema(&self, field: ProfileField) -> Result<AttributeSchema> {
        self.attribute(field)
            .ok_or_else(|| Error::Config(format!("no `{}` attribute declared", field.name())))?
            .schema()
    }
}
