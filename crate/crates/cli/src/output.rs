//! Per-slot CSV logs and the JSON summary document.
//!
//! Floats are written with `Display`, which prints the shortest string that
//! parses back to the same value, so summaries recomputed from the CSV files
//! match the emitted ones bit for bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pcrb_core::controller::{ModeTag, Policy};
use pcrb_core::episode::{EpisodeLog, PolicySummary, SlotRecord};

pub const CSV_HEADER: [&str; 21] = [
    "trial",
    "slot",
    "time_s",
    "policy",
    "mode_tag",
    "target_pos_m",
    "uav_pos_m",
    "uav_vel_mps",
    "rel_x_m",
    "rel_v_mps",
    "est_x_m",
    "est_v_mps",
    "pred_pcrb_x",
    "pred_pcrb_v",
    "actual_pcrb_x",
    "actual_pcrb_v",
    "weighted_actual",
    "slot_energy_j",
    "cumulative_energy_j",
    "e_b_j",
    "gate",
];

pub fn parse_policy(s: &str) -> Option<Policy> {
    match s {
        "proposed" => Some(Policy::Proposed),
        "benchmark" => Some(Policy::Benchmark),
        _ => None,
    }
}

pub fn csv_name(policy: Policy, trial: u64) -> String {
    format!("trial_{trial:04}_{}.csv", policy.as_str())
}

fn record_fields(r: &SlotRecord) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    vec![
        r.trial.to_string(),
        r.slot.to_string(),
        r.time.to_string(),
        r.policy.as_str().to_string(),
        r.mode_tag.as_str().to_string(),
        r.target_pos.to_string(),
        r.uav_pos.to_string(),
        r.uav_vel.to_string(),
        r.rel_x.to_string(),
        r.rel_v.to_string(),
        r.est_x.to_string(),
        r.est_v.to_string(),
        r.pred_pcrb_x.to_string(),
        r.pred_pcrb_v.to_string(),
        r.actual_pcrb_x.to_string(),
        r.actual_pcrb_v.to_string(),
        r.weighted_actual.to_string(),
        r.slot_energy.to_string(),
        r.cumulative_energy.to_string(),
        opt(r.e_b),
        r.gate.map(|g| g.to_string()).unwrap_or_default(),
    ]
}

pub fn write_log(path: &Path, log: &EpisodeLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(CSV_HEADER)?;
    for r in &log.records {
        w.write_record(record_fields(r))?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| anyhow::anyhow!("column {} has unparsable value {raw:?}", CSV_HEADER[i]))
}

fn optional<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<Option<T>> {
    if rec.get(i).unwrap_or("").is_empty() {
        Ok(None)
    } else {
        field(rec, i).map(Some)
    }
}

/// Reads back a log written by [`write_log`].
pub fn read_log(path: &Path) -> Result<EpisodeLog> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    if rdr.headers()?.iter().ne(CSV_HEADER) {
        bail!("{}: unexpected header", path.display());
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let policy_s: String = field(&rec, 3)?;
        let tag_s: String = field(&rec, 4)?;
        records.push(SlotRecord {
            trial: field(&rec, 0)?,
            slot: field(&rec, 1)?,
            time: field(&rec, 2)?,
            policy: parse_policy(&policy_s).with_context(|| format!("unknown policy {policy_s:?}"))?,
            mode_tag: ModeTag::parse(&tag_s).with_context(|| format!("unknown mode tag {tag_s:?}"))?,
            target_pos: field(&rec, 5)?,
            uav_pos: field(&rec, 6)?,
            uav_vel: field(&rec, 7)?,
            rel_x: field(&rec, 8)?,
            rel_v: field(&rec, 9)?,
            est_x: field(&rec, 10)?,
            est_v: field(&rec, 11)?,
            pred_pcrb_x: field(&rec, 12)?,
            pred_pcrb_v: field(&rec, 13)?,
            actual_pcrb_x: field(&rec, 14)?,
            actual_pcrb_v: field(&rec, 15)?,
            weighted_actual: field(&rec, 16)?,
            slot_energy: field(&rec, 17)?,
            cumulative_energy: field(&rec, 18)?,
            e_b: optional(&rec, 19)?,
            gate: optional(&rec, 20)?,
        });
    }
    let first = records
        .first()
        .with_context(|| format!("{}: no rows", path.display()))?;
    Ok(EpisodeLog {
        trial: first.trial,
        policy: first.policy,
        records,
    })
}

/// Serialized form of [`PolicySummary`]. Undefined means become `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub policy: String,
    pub trials: usize,
    pub mean_weighted_actual_pcrb: Option<f64>,
    pub energy_mean_j: Option<f64>,
    pub energy_max_j: Option<f64>,
    pub turning_point_mean: Option<f64>,
    pub turning_points: Vec<Option<usize>>,
    pub terminal_error_max_m: f64,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl From<&PolicySummary> for PolicyEntry {
    fn from(s: &PolicySummary) -> Self {
        Self {
            policy: s.policy.as_str().to_string(),
            trials: s.trials,
            mean_weighted_actual_pcrb: finite(s.mean_weighted_actual_pcrb),
            energy_mean_j: finite(s.energy_mean),
            energy_max_j: finite(s.energy_max),
            turning_point_mean: finite(s.turning_point_mean),
            turning_points: s.turning_points.clone(),
            terminal_error_max_m: s.terminal_error_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub seed: u64,
    pub e_tot_j: f64,
    pub n_slots: usize,
    pub solver: String,
    pub policies: Vec<PolicyEntry>,
}

pub fn write_summary(path: &Path, doc: &SummaryDoc) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_summary(path: &Path) -> Result<SummaryDoc> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// CSV files of one policy in `dir`, ordered by trial.
pub fn policy_logs(dir: &Path, policy: Policy) -> Result<Vec<PathBuf>> {
    let suffix = format!("_{}.csv", policy.as_str());
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trial_") && n.ends_with(&suffix))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

fn fmt_opt(x: Option<f64>, prec: usize) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.prec$}"))
}

pub fn print_table(out: &mut impl Write, label: &str, doc: &SummaryDoc) -> std::io::Result<()> {
    writeln!(
        out,
        "{label:<12} {:<10} {:>6} {:>14} {:>11} {:>11} {:>9} {:>12}",
        "policy", "trials", "mean_w_pcrb", "E_mean[J]", "E_max[J]", "turn_pt", "term_err[m]"
    )?;
    for p in &doc.policies {
        writeln!(
            out,
            "{:<12} {:<10} {:>6} {:>14} {:>11} {:>11} {:>9} {:>12.3e}",
            "",
            p.policy,
            p.trials,
            fmt_opt(p.mean_weighted_actual_pcrb, 6),
            fmt_opt(p.energy_mean_j, 1),
            fmt_opt(p.energy_max_j, 1),
            fmt_opt(p.turning_point_mean, 2),
            p.terminal_error_max_m
        )?;
    }
    Ok(())
}
