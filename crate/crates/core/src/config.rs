// SPDX-License-Identifier: Apache-2.0

//! Run configuration: one JSON file with `run`, `scoring`, `backend` and
//! `proposer` sections. Every field has a default, so `{}` is a valid
//! configuration for the built-in backend.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendConfig;
use crate::proposer::ProposerConfig;
use crate::scoring::ScoreWeights;
use crate::trajectory::DEFAULT_EPSILON;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Iteration budget K.
    pub iterations: usize,
    /// Critical paths diagnosed per iteration.
    pub top_k: usize,
    /// Minimum best-so-far improvement that counts toward convergence.
    pub epsilon: f64,
    /// Overrides the backend's SEC sampling seed when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Stop before K once further iterations cannot change the outcome.
    pub early_stop: bool,
    /// Feed skills distilled in this run back into later iterations.
    pub skill_feedback: bool,
    /// Candidates evaluated at once; defaults to the group size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concurrency: Option<usize>,
    /// Evaluate candidates on the rayon pool.
    pub parallel: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            iterations: 10,
            top_k: 3,
            epsilon: DEFAULT_EPSILON,
            seed: None,
            early_stop: false,
            skill_feedback: true,
            concurrency: None,
            parallel: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub scoring: ScoreWeights,
    pub backend: BackendConfig,
    pub proposer: ProposerConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, ConfigError> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.run.iterations < 1 {
            return bad("run.iterations must be at least 1".into());
        }
        if self.run.top_k < 1 {
            return bad("run.top_k must be at least 1".into());
        }
        if !(self.run.epsilon.is_finite() && self.run.epsilon > 0.0) {
            return bad(format!(
                "run.epsilon must be positive, got {}",
                self.run.epsilon
            ));
        }
        if self.run.concurrency == Some(0) {
            return bad("run.concurrency must be at least 1".into());
        }
        self.scoring
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.proposer.validate().map_err(ConfigError::Invalid)?;
        self.backend
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn group_size(&self) -> usize {
        self.proposer.n_candidates
    }

    pub fn concurrency(&self) -> usize {
        self.run.concurrency.unwrap_or(self.group_size())
    }

    /// Backend settings with the run seed applied.
    pub fn effective_backend(&self) -> BackendConfig {
        let mut b = self.backend.clone();
        if let Some(seed) = self.run.seed {
            b.sec_seed = seed;
        }
        b
    }
}
