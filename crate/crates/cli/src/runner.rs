//! Seeded batches of episodes and their on-disk outputs.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use pcrb_core::controller::{Policy, Solvers};
use pcrb_core::episode::{run_episode, summarize, EpisodeLog};
use pcrb_core::scenario::Scenario;

use crate::output::{csv_name, policy_logs, read_log, write_log, write_summary, PolicyEntry, SummaryDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    /// Moment-SDP inner solves.
    Sdp,
    /// Companion-matrix roots for every inner problem.
    Roots,
}

impl SolverChoice {
    pub fn solvers(self) -> Solvers {
        match self {
            Self::Sdp => Solvers::default(),
            Self::Roots => Solvers::root_oracle(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sdp => "sdp",
            Self::Roots => "roots",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub scenario: Scenario,
    pub policies: Vec<Policy>,
    pub trials: u64,
    pub solver: SolverChoice,
    pub jobs: usize,
}

/// Runs every (policy, trial) pair on a pool of `jobs` threads. Results come
/// back grouped by policy and ordered by trial regardless of scheduling.
pub fn run_batch(batch: &Batch) -> Result<Vec<(Policy, Vec<EpisodeLog>)>> {
    if batch.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(batch.jobs.max(1))
        .build()
        .context("building worker pool")?;
    let solvers = batch.solver.solvers();
    let jobs: Vec<(Policy, u64)> = batch
        .policies
        .iter()
        .flat_map(|&p| (0..batch.trials).map(move |t| (p, t)))
        .collect();
    let logs: Vec<EpisodeLog> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, t)| run_episode(&batch.scenario, p, t, &solvers).with_context(|| format!("{p} trial {t}")))
            .collect::<Result<_>>()
    })?;
    let mut grouped: Vec<(Policy, Vec<EpisodeLog>)> = batch.policies.iter().map(|&p| (p, Vec::new())).collect();
    for log in logs {
        let slot = grouped
            .iter_mut()
            .find(|(p, _)| *p == log.policy)
            .expect("policy was requested");
        slot.1.push(log);
    }
    Ok(grouped)
}

fn summary_doc(batch: &Batch, results: &[(Policy, Vec<EpisodeLog>)]) -> SummaryDoc {
    SummaryDoc {
        seed: batch.scenario.init.seed,
        e_tot_j: batch.scenario.mission.e_tot,
        n_slots: batch.scenario.mission.n_slots,
        solver: batch.solver.as_str().to_string(),
        policies: results
            .iter()
            .map(|(p, logs)| PolicyEntry::from(&summarize(*p, logs, batch.scenario.mission.x_f)))
            .collect(),
    }
}

/// Runs the batch and writes one CSV per (trial, policy) plus `summary.json`
/// into `dir`. All writes happen here, after the workers finish, in trial order.
pub fn simulate_into(dir: &Path, batch: &Batch) -> Result<SummaryDoc> {
    let results = run_batch(batch)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (_, logs) in &results {
        for log in logs {
            write_log(&dir.join(csv_name(log.policy, log.trial)), log)?;
        }
    }
    let doc = summary_doc(batch, &results);
    write_summary(&dir.join("summary.json"), &doc)?;
    Ok(doc)
}

/// Rebuilds the per-policy summary entries from the CSV files in `dir`.
pub fn summary_from_csv(dir: &Path, policies: &[Policy], x_f: f64) -> Result<Vec<PolicyEntry>> {
    policies
        .iter()
        .map(|&p| {
            let logs = policy_logs(dir, p)?
                .iter()
                .map(|path| read_log(path))
                .collect::<Result<Vec<_>>>()?;
            Ok(PolicyEntry::from(&summarize(p, &logs, x_f)))
        })
        .collect()
}

/// Subdirectory used for one sweep value.
pub fn sweep_dir_name(value: f64) -> String {
    format!("e_tot_{value}")
}

pub const SWEEP_HEADER: [&str; 8] = [
    "e_tot_j",
    "policy",
    "trials",
    "mean_weighted_actual_pcrb",
    "energy_mean_j",
    "energy_max_j",
    "turning_point_mean",
    "terminal_error_max_m",
];

/// One batch per budget value under `dir`, plus `sweep.csv` with a row per
/// (value, policy).
pub fn sweep_into(dir: &Path, batch: &Batch, values: &[f64]) -> Result<Vec<(f64, SummaryDoc)>> {
    if values.is_empty() {
        bail!("--values needs at least one value");
    }
    let mut docs = Vec::with_capacity(values.len());
    for &v in values {
        let scenario = batch.scenario.with_budget(v)?;
        let b = Batch {
            scenario,
            ..batch.clone()
        };
        docs.push((v, simulate_into(&dir.join(sweep_dir_name(v)), &b)?));
    }
    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(SWEEP_HEADER)?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for (v, doc) in &docs {
        for p in &doc.policies {
            w.write_record([
                v.to_string(),
                p.policy.clone(),
                p.trials.to_string(),
                opt(p.mean_weighted_actual_pcrb),
                opt(p.energy_mean_j),
                opt(p.energy_max_j),
                opt(p.turning_point_mean),
                p.terminal_error_max_m.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> Scenario {
        let mut sc = Scenario::default();
        sc.mission.n_slots = 8;
        sc.mission.x_f = 8.0;
        sc.mission.e_tot = 1e6;
        sc
    }

    #[test]
    fn results_are_grouped_and_ordered() {
        let batch = Batch {
            scenario: short(),
            policies: vec![Policy::Benchmark, Policy::Proposed],
            trials: 3,
            solver: SolverChoice::Roots,
            jobs: 2,
        };
        let out = run_batch(&batch).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].0, Policy::Benchmark);
        for (p, logs) in &out {
            assert_eq!(logs.iter().map(|l| l.trial).collect::<Vec<_>>(), [0, 1, 2]);
            assert!(logs.iter().all(|l| l.policy == *p));
        }
    }

    #[test]
    fn zero_trials_is_an_error() {
        let batch = Batch {
            scenario: short(),
            policies: vec![Policy::Proposed],
            trials: 0,
            solver: SolverChoice::Roots,
            jobs: 1,
        };
        assert!(run_batch(&batch).is_err());
    }

    #[test]
    fn job_count_does_not_change_results() {
        let mk = |jobs| Batch {
            scenario: short(),
            policies: vec![Policy::Proposed],
            trials: 4,
            solver: SolverChoice::Roots,
            jobs,
        };
        assert_eq!(run_batch(&mk(1)).unwrap(), run_batch(&mk(3)).unwrap());
    }
}
