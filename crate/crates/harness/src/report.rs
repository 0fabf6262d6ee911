//! Directory-level summaries of finished experiments.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use remdyna_core::agents::{AgentConfig, Variant};
use remdyna_core::envs::{riverswim_optimal_return, EnvConfig};
use thiserror::Error;

use crate::aggregate::{aggregate, Aggregate, AggregateError};
use crate::metrics::{steps_to_ratio, RATIO_THRESHOLDS};
use crate::runner::{load_records, JobRecord, Manifest, RunError, Trace};

pub const AGGREGATE_DIR: &str = "aggregate";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TABLE_FILE: &str = "ratio_table.csv";

/// Seeds used to estimate the always-right baseline.
pub const BASELINE_SEEDS: usize = 30;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("configuration {config_index}: {source}")]
    Aggregate {
        config_index: usize,
        #[source]
        source: AggregateError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Unsupported(String),
}

/// Statistics of one swept configuration.
#[derive(Debug, Clone)]
pub struct ConfigSummary {
    pub config_index: usize,
    pub config: AgentConfig,
    pub runs: usize,
    pub steps: Vec<usize>,
    pub curve: Aggregate,
}

impl ConfigSummary {
    pub fn final_mean(&self) -> f64 {
        *self.curve.mean.last().unwrap_or(&0.0)
    }

    pub fn final_stderr(&self) -> f64 {
        *self.curve.stderr.last().unwrap_or(&0.0)
    }
}

fn group(records: Vec<(JobRecord, Trace)>) -> BTreeMap<usize, Vec<(JobRecord, Trace)>> {
    let mut groups: BTreeMap<usize, Vec<(JobRecord, Trace)>> = BTreeMap::new();
    for r in records {
        groups.entry(r.0.config_index).or_default().push(r);
    }
    groups
}

/// Mean and standard-error cumulative-reward curves per configuration.
pub fn summarize(dir: &Path) -> Result<(Manifest, Vec<ConfigSummary>), ReportError> {
    let (manifest, records) = load_records(dir)?;
    let mut out = Vec::new();
    for (config_index, runs) in group(records) {
        let curves: Vec<Vec<f64>> = runs.iter().map(|(_, t)| t.cumulative()).collect();
        let curve = aggregate(&curves).map_err(|source| ReportError::Aggregate { config_index, source })?;
        out.push(ConfigSummary {
            config_index,
            config: runs[0].0.config.clone(),
            runs: runs.len(),
            steps: runs[0].1.steps(),
            curve,
        });
    }
    Ok((manifest, out))
}

/// Write `aggregate/config_NNN.csv` (step, mean, stderr) for every
/// configuration plus `aggregate/summary.csv`.
pub fn write_aggregates(dir: &Path) -> Result<Vec<ConfigSummary>, ReportError> {
    let (_, summaries) = summarize(dir)?;
    let out = dir.join(AGGREGATE_DIR);
    fs::create_dir_all(&out).map_err(|source| ReportError::Io { path: out.clone(), source })?;
    for s in &summaries {
        let path = out.join(format!("config_{:03}.csv", s.config_index));
        let mut text = String::from("step,mean,stderr\n");
        for ((step, m), e) in s.steps.iter().zip(&s.curve.mean).zip(&s.curve.stderr) {
            text.push_str(&format!("{step},{m},{e}\n"));
        }
        fs::write(&path, text).map_err(|source| ReportError::Io { path, source })?;
    }
    let mut text = String::from("config,variant,alpha,n,epsilon,model_alpha,runs,final_mean,final_stderr\n");
    for s in &summaries {
        let c = &s.config;
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.config_index,
            c.variant,
            c.alpha,
            c.n,
            c.epsilon,
            c.model_alpha,
            s.runs,
            s.final_mean(),
            s.final_stderr()
        ));
    }
    let path = out.join(SUMMARY_FILE);
    fs::write(&path, text).map_err(|source| ReportError::Io { path, source })?;
    Ok(summaries)
}

/// One row of the steps-to-ratio table.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub variant: Variant,
    pub alpha: f64,
    /// Steps to each of [`RATIO_THRESHOLDS`], `None` when not reached.
    pub steps: Vec<Option<usize>>,
}

/// Steps-to-ratio per agent variant on a riverswim experiment. Each variant
/// is represented by its best configuration (highest final mean cumulative
/// reward), whose mean reward trace is compared with the always-right
/// baseline.
pub fn ratio_table(dir: &Path) -> Result<Vec<RatioRow>, ReportError> {
    let (manifest, records) = load_records(dir)?;
    let EnvConfig::RiverSwim { noise_std } = manifest.spec.env else {
        return Err(ReportError::Unsupported(format!(
            "ratio table needs river_swim records, found {}",
            manifest.spec.env.name()
        )));
    };
    let steps = manifest.spec.steps;
    let baseline = riverswim_optimal_return(steps, BASELINE_SEEDS, noise_std, manifest.spec.master_seed) / steps as f64;

    let mut best: BTreeMap<String, (f64, RatioRow)> = BTreeMap::new();
    for (_, runs) in group(records) {
        let traces: Vec<&[f64]> = runs
            .iter()
            .map(|(_, t)| {
                t.rewards()
                    .ok_or_else(|| ReportError::Unsupported("ratio table needs per-step reward traces".into()))
            })
            .collect::<Result<_, _>>()?;
        let mut mean = vec![0.0; traces[0].len()];
        for t in &traces {
            for (m, r) in mean.iter_mut().zip(t.iter()) {
                *m += r / traces.len() as f64;
            }
        }
        let total: f64 = mean.iter().sum();
        let cfg = &runs[0].0.config;
        let row = RatioRow {
            variant: cfg.variant,
            alpha: cfg.alpha,
            steps: steps_to_ratio(&mean, baseline, &RATIO_THRESHOLDS)
                .into_iter()
                .map(|(_, s)| s)
                .collect(),
        };
        let key = cfg.variant.to_string();
        if best.get(&key).is_none_or(|(t, _)| total > *t) {
            best.insert(key, (total, row));
        }
    }
    Ok(best.into_values().map(|(_, r)| r).collect())
}

pub fn ratio_table_csv(rows: &[RatioRow]) -> String {
    let mut text = String::from("variant");
    for t in RATIO_THRESHOLDS {
        text.push_str(&format!(",{t:.2}"));
    }
    text.push('\n');
    for r in rows {
        text.push_str(&r.variant.to_string());
        for s in &r.steps {
            text.push(',');
            if let Some(s) = s {
                text.push_str(&s.to_string());
            }
        }
        text.push('\n');
    }
    text
}
