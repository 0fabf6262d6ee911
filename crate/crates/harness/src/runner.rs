//! Job execution and on-disk records.
//!
//! Layout of an output directory:
//!
//! ```text
//! manifest.json
//! runs/job_00000.csv   step,reward            (or step,cumulative_reward)
//! ```

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use remdyna_core::agents::{run_stream, Agent, AgentConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::cumulative;
use crate::spec::{ExperimentSpec, Job, SpecError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUNS_DIR: &str = "runs";
pub const WORKERS_VAR: &str = "REMDYNA_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: usize,
    pub config_index: usize,
    pub run: usize,
    pub seed: u64,
    pub config: AgentConfig,
    /// Run file relative to the output directory.
    pub file: Option<String>,
    pub status: JobStatus,
    pub error: Option<String>,
    pub total_reward: Option<f64>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ExperimentSpec,
    pub jobs: Vec<JobRecord>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| RunError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| RunError::Manifest {
            path,
            message: e.to_string(),
        })
    }

    pub fn failed(&self) -> impl Iterator<Item = &JobRecord> {
        self.jobs.iter().filter(|j| j.status == JobStatus::Failed)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Trace { path: PathBuf, message: String },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

impl RunError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A stored reward trace.
#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    Rewards(Vec<f64>),
    /// `(step, cumulative reward)` checkpoints.
    Checkpoints(Vec<(usize, f64)>),
}

impl Trace {
    /// Cumulative reward at each stored step.
    pub fn cumulative(&self) -> Vec<f64> {
        match self {
            Trace::Rewards(r) => cumulative(r),
            Trace::Checkpoints(c) => c.iter().map(|(_, v)| *v).collect(),
        }
    }

    pub fn steps(&self) -> Vec<usize> {
        match self {
            Trace::Rewards(r) => (1..=r.len()).collect(),
            Trace::Checkpoints(c) => c.iter().map(|(s, _)| *s).collect(),
        }
    }

    pub fn rewards(&self) -> Option<&[f64]> {
        match self {
            Trace::Rewards(r) => Some(r),
            Trace::Checkpoints(_) => None,
        }
    }
}

/// Pool size: `REMDYNA_WORKERS` if set and positive, else the machine's
/// parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_VAR)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// One agent-environment interaction stream.
pub fn run_job(spec: &ExperimentSpec, job: &Job) -> Result<Vec<f64>, String> {
    let mut env = spec.env.build().map_err(|e| e.to_string())?;
    let mut agent = Agent::new(job.config.clone(), env.as_ref(), job.seed);
    Ok(run_stream(&mut agent, env.as_mut(), spec.steps, job.seed))
}

/// Run every job of `spec` on `workers` threads, writing run files and the
/// manifest into `spec.output_dir`. A failing job (error or panic) is
/// recorded in the manifest and does not stop the others.
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> Result<Manifest, RunError> {
    run_experiment_with(spec, workers, run_job)
}

/// [`run_experiment`] with a custom job body.
pub fn run_experiment_with<F>(spec: &ExperimentSpec, workers: usize, body: F) -> Result<Manifest, RunError>
where
    F: Fn(&ExperimentSpec, &Job) -> Result<Vec<f64>, String> + Sync,
{
    spec.validate()?;
    let out = &spec.output_dir;
    let runs_dir = out.join(RUNS_DIR);
    fs::create_dir_all(&runs_dir).map_err(|e| RunError::io(&runs_dir, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let jobs = spec.jobs();
    let records: Vec<JobRecord> = pool.install(|| jobs.par_iter().map(|job| execute(spec, job, out, &body)).collect());

    let manifest = Manifest {
        spec: spec.clone(),
        jobs: records,
    };
    let path = out.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| RunError::io(&path, e))?;
    Ok(manifest)
}

fn execute<F>(spec: &ExperimentSpec, job: &Job, out: &Path, body: &F) -> JobRecord
where
    F: Fn(&ExperimentSpec, &Job) -> Result<Vec<f64>, String>,
{
    let started = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(|| body(spec, job)))
        .unwrap_or_else(|p| Err(panic_message(p.as_ref())));
    let mut record = JobRecord {
        id: job.index,
        config_index: job.config_index,
        run: job.run,
        seed: job.seed,
        config: job.config.clone(),
        file: None,
        status: JobStatus::Failed,
        error: None,
        total_reward: None,
        wall_clock_seconds: 0.0,
    };
    match result {
        Ok(rewards) => {
            let rel = format!("{RUNS_DIR}/job_{:05}.csv", job.index);
            match write_trace(&out.join(&rel), &rewards, spec.checkpoint_every) {
                Ok(()) => {
                    record.status = JobStatus::Ok;
                    record.file = Some(rel);
                    record.total_reward = Some(rewards.iter().sum());
                }
                Err(e) => record.error = Some(e.to_string()),
            }
        }
        Err(e) => record.error = Some(e),
    }
    record.wall_clock_seconds = started.elapsed().as_secs_f64();
    record
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    let msg = p
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".to_string());
    format!("panicked: {msg}")
}

pub fn write_trace(path: &Path, rewards: &[f64], checkpoint_every: Option<usize>) -> Result<(), RunError> {
    let csv_err = |e: csv::Error| RunError::Trace {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    match checkpoint_every {
        None => {
            w.write_record(["step", "reward"]).map_err(csv_err)?;
            for (i, r) in rewards.iter().enumerate() {
                w.write_record([(i + 1).to_string(), r.to_string()]).map_err(csv_err)?;
            }
        }
        Some(every) => {
            w.write_record(["step", "cumulative_reward"]).map_err(csv_err)?;
            let cum = cumulative(rewards);
            for (i, c) in cum.iter().enumerate() {
                let step = i + 1;
                if step % every == 0 || step == cum.len() {
                    w.write_record([step.to_string(), c.to_string()]).map_err(csv_err)?;
                }
            }
        }
    }
    w.flush().map_err(|e| RunError::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Trace, RunError> {
    let err = |message: String| RunError::Trace {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let headers = r.headers().map_err(|e| err(e.to_string()))?.clone();
    let cumulative = match headers.get(1) {
        Some("reward") => false,
        Some("cumulative_reward") => true,
        other => return Err(err(format!("unexpected second column {other:?}"))),
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let step: usize = rec[0].parse().map_err(|e| err(format!("bad step {:?}: {e}", &rec[0])))?;
        let v: f64 = rec[1].parse().map_err(|e| err(format!("bad value {:?}: {e}", &rec[1])))?;
        rows.push((step, v));
    }
    Ok(if cumulative {
        Trace::Checkpoints(rows)
    } else {
        Trace::Rewards(rows.into_iter().map(|(_, v)| v).collect())
    })
}

/// Successful jobs of a finished experiment with their traces.
pub fn load_records(dir: &Path) -> Result<(Manifest, Vec<(JobRecord, Trace)>), RunError> {
    let manifest = Manifest::load(dir)?;
    let mut out = Vec::new();
    for job in manifest.jobs.iter().filter(|j| j.status == JobStatus::Ok) {
        let file = job.file.as_ref().expect("successful jobs have a run file");
        out.push((job.clone(), read_trace(&dir.join(file))?));
    }
    Ok((manifest, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rewards = vec![0.0, 1.0, 0.5, 0.25];
        write_trace(&p, &rewards, None).unwrap();
        assert_eq!(read_trace(&p).unwrap(), Trace::Rewards(rewards.clone()));
        write_trace(&p, &rewards, Some(3)).unwrap();
        let t = read_trace(&p).unwrap();
        assert_eq!(t.steps(), vec![3, 4]);
        assert_eq!(t.cumulative(), vec![1.5, 1.75]);
    }

    #[test]
    fn workers_from_environment() {
        // only this test touches the variable
        std::env::set_var(WORKERS_VAR, "3");
        assert_eq!(worker_count(), 3);
        std::env::set_var(WORKERS_VAR, "zero");
        assert!(worker_count() >= 1);
        std::env::remove_var(WORKERS_VAR);
    }
}
