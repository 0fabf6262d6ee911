//! Experiment specification files.
//!
//! A spec names one environment, an agent template and optional sweep lists.
//! Jobs are the cross product of the sweep lists times `runs`, enumerated in a
//! fixed order so that job indices (and therefore seeds) are stable.

use std::fs;
use std::path::{Path, PathBuf};

use remdyna_core::agents::{AgentConfig, Variant};
use remdyna_core::derive_seed;
use remdyna_core::envs::EnvConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub env: EnvConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub sweep: Sweep,
    pub runs: usize,
    pub steps: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Store cumulative reward every this many steps instead of every reward.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
}

/// Per-field value lists. An empty list keeps the template value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub variant: Vec<Variant>,
    pub alpha: Vec<f64>,
    pub n: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub model_alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub index: usize,
    /// Index of the swept configuration this job belongs to.
    pub config_index: usize,
    pub run: usize,
    pub seed: u64,
    pub config: AgentConfig,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid spec:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Read, parse and validate a spec file.
    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let spec = Self::from_toml(&text).map_err(|message| SpecError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec is always representable as TOML")
    }

    /// Every offending field, not just the first.
    pub fn validate(&self) -> Result<(), SpecError> {
        let mut problems = Vec::new();
        if self.runs == 0 {
            problems.push("runs: must be positive".to_string());
        }
        if self.steps == 0 {
            problems.push("steps: must be positive".to_string());
        }
        if self.checkpoint_every == Some(0) {
            problems.push("checkpoint_every: must be positive".to_string());
        }
        if let Err(e) = self.env.build() {
            problems.push(format!("env: {e}"));
        }
        for (i, cfg) in self.configs().iter().enumerate() {
            if let Err(e) = cfg.validate() {
                let msg = format!("agent (sweep point {i}, {}): {e}", cfg.variant);
                if !problems.contains(&msg) {
                    problems.push(msg);
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SpecError::Invalid(problems))
        }
    }

    /// The swept configurations, variant-major.
    pub fn configs(&self) -> Vec<AgentConfig> {
        fn axis<T: Clone>(values: &[T], default: T) -> Vec<T> {
            if values.is_empty() {
                vec![default]
            } else {
                values.to_vec()
            }
        }
        let t = &self.agent;
        let mut out = Vec::new();
        for variant in axis(&self.sweep.variant, t.variant) {
            for alpha in axis(&self.sweep.alpha, t.alpha) {
                for n in axis(&self.sweep.n, t.n) {
                    for epsilon in axis(&self.sweep.epsilon, t.epsilon) {
                        for model_alpha in axis(&self.sweep.model_alpha, t.model_alpha) {
                            out.push(AgentConfig {
                                variant,
                                alpha,
                                n,
                                epsilon,
                                model_alpha,
                                ..t.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Configurations × runs. Job `i` gets seed `derive_seed(master_seed, i)`.
    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for (config_index, config) in self.configs().into_iter().enumerate() {
            for run in 0..self.runs {
                let index = jobs.len();
                jobs.push(Job {
                    index,
                    config_index,
                    run,
                    seed: derive_seed(self.master_seed, index as u64),
                    config: config.clone(),
                });
            }
        }
        jobs
    }
}
