//! Versioned CSV artifacts: the per-slot trace and the per-episode summary.
//!
//! Both carry a `schema_version` column. The trace has a variable number of
//! trailing `ru*` columns (one per radio unit), so it is written and parsed
//! by hand; the episode summary is a fixed record.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};

pub const TRACE_SCHEMA_VERSION: u32 = 1;
pub const EPISODE_SCHEMA_VERSION: u32 = 1;

/// One slot of one episode, as persisted to the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub episode: u32,
    pub seed: u64,
    pub slot: u64,
    pub ee: f64,
    pub rho_d: f64,
    pub rho_m: f64,
    /// Constraint-machine states; absent under non-RM regimes.
    pub rm_d: Option<usize>,
    pub rm_m: Option<usize>,
    pub reward: f64,
    pub power_actual_w: f64,
    pub power_all_active_w: f64,
    pub switch_energy_j: f64,
    pub served_bits_deadline: u64,
    pub served_bits_constant: u64,
    pub dropped_packets: u64,
    pub arrivals: u64,
    pub mean_drop_rate: f64,
    pub mean_throughput_mbps: f64,
    /// Mode of each RU during the slot.
    pub ru_modes: Vec<usize>,
}

const TRACE_FIXED_COLUMNS: [&str; 18] = [
    "schema_version",
    "episode",
    "seed",
    "slot",
    "ee",
    "rho_d",
    "rho_m",
    "rm_d",
    "rm_m",
    "reward",
    "power_actual_w",
    "power_all_active_w",
    "switch_energy_j",
    "served_bits_deadline",
    "served_bits_constant",
    "dropped_packets",
    "arrivals",
    "mean_drop_rate",
];
// mean_throughput_mbps then ru0..ru{G-1} follow; see header().

fn header(g_rus: usize) -> Vec<String> {
    let mut cols: Vec<String> = TRACE_FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    cols.push("mean_throughput_mbps".into());
    cols.extend((0..g_rus).map(|g| format!("ru{g}")));
    cols
}

/// Append-only trace writer.
pub struct TraceWriter {
    inner: csv::Writer<File>,
    g_rus: usize,
}

impl TraceWriter {
    pub fn create(path: &Path, g_rus: usize) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header(g_rus))?;
        Ok(TraceWriter { inner, g_rus })
    }

    pub fn write(&mut self, row: &TraceRow) -> Result<()> {
        if row.ru_modes.len() != self.g_rus {
            return Err(Error::Trace(format!(
                "row has {} RU modes, trace was created for {}",
                row.ru_modes.len(),
                self.g_rus
            )));
        }
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut record: Vec<String> = vec![
            TRACE_SCHEMA_VERSION.to_string(),
            row.episode.to_string(),
            row.seed.to_string(),
            row.slot.to_string(),
            row.ee.to_string(),
            row.rho_d.to_string(),
            row.rho_m.to_string(),
            opt(row.rm_d),
            opt(row.rm_m),
            row.reward.to_string(),
            row.power_actual_w.to_string(),
            row.power_all_active_w.to_string(),
            row.switch_energy_j.to_string(),
            row.served_bits_deadline.to_string(),
            row.served_bits_constant.to_string(),
            row.dropped_packets.to_string(),
            row.arrivals.to_string(),
            row.mean_drop_rate.to_string(),
            row.mean_throughput_mbps.to_string(),
        ];
        record.extend(row.ru_modes.iter().map(|m| m.to_string()));
        self.inner.write_record(&record)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::Trace(format!("flush failed: {e}")))?;
        Ok(())
    }
}

/// Read a whole trace back. Verifies the schema version and column layout.
pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let g_rus = cols.iter().filter(|c| c.starts_with("ru")).count();
    let expected = header(g_rus);
    if cols != expected.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
        return Err(Error::Trace(format!("unexpected trace header: {cols:?}")));
    }
    let parse_f = |s: &str, col: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Trace(format!("bad float {s:?} in column {col}")))
    };
    let parse_u = |s: &str, col: &str| -> Result<u64> {
        s.parse()
            .map_err(|_| Error::Trace(format!("bad integer {s:?} in column {col}")))
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let get = |i: usize| record.get(i).unwrap_or("");
        let version: u32 = get(0)
            .parse()
            .map_err(|_| Error::Trace("bad schema_version".into()))?;
        if version != TRACE_SCHEMA_VERSION {
            return Err(Error::Trace(format!("unsupported trace schema version {version}")));
        }
        let opt = |s: &str| -> Result<Option<usize>> {
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(s.parse().map_err(|_| Error::Trace(format!("bad rm state {s:?}")))?))
            }
        };
        let mut ru_modes = Vec::with_capacity(g_rus);
        for g in 0..g_rus {
            ru_modes.push(parse_u(get(19 + g), "ru")? as usize);
        }
        rows.push(TraceRow {
            episode: parse_u(get(1), "episode")? as u32,
            seed: parse_u(get(2), "seed")?,
            slot: parse_u(get(3), "slot")?,
            ee: parse_f(get(4), "ee")?,
            rho_d: parse_f(get(5), "rho_d")?,
            rho_m: parse_f(get(6), "rho_m")?,
            rm_d: opt(get(7))?,
            rm_m: opt(get(8))?,
            reward: parse_f(get(9), "reward")?,
            power_actual_w: parse_f(get(10), "power_actual_w")?,
            power_all_active_w: parse_f(get(11), "power_all_active_w")?,
            switch_energy_j: parse_f(get(12), "switch_energy_j")?,
            served_bits_deadline: parse_u(get(13), "served_bits_deadline")?,
            served_bits_constant: parse_u(get(14), "served_bits_constant")?,
            dropped_packets: parse_u(get(15), "dropped_packets")?,
            arrivals: parse_u(get(16), "arrivals")?,
            mean_drop_rate: parse_f(get(17), "mean_drop_rate")?,
            mean_throughput_mbps: parse_f(get(18), "mean_throughput_mbps")?,
            ru_modes,
        });
    }
    Ok(rows)
}

/// Per-episode training summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub schema_version: u32,
    pub episode: u32,
    pub seed: u64,
    pub steps: u32,
    pub mean_ee: f64,
    pub mean_rho_d: f64,
    pub mean_rho_m: f64,
    pub final_rho_d: f64,
    pub final_rho_m: f64,
    pub mean_reward: f64,
    pub total_reward: f64,
    pub mean_drop_rate: f64,
    pub mean_throughput_mbps: f64,
    pub cum_switch_energy_j: f64,
    /// Multipliers after the episode's dual update; Lagrangian runs only.
    pub lambda_d: Option<f64>,
    pub lambda_m: Option<f64>,
    /// Fraction of slots spent at machine saturation; RM runs only.
    pub rm_saturation_d: Option<f64>,
    pub rm_saturation_m: Option<f64>,
    /// Total RU mode changes between consecutive slots.
    pub sm_changes: u64,
}

pub struct EpisodeWriter {
    inner: csv::Writer<File>,
}

impl EpisodeWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(EpisodeWriter {
            inner: csv::Writer::from_writer(file),
        })
    }

    pub fn write(&mut self, row: &EpisodeRow) -> Result<()> {
        self.inner.serialize(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::Trace(format!("flush failed: {e}")))?;
        Ok(())
    }
}

pub fn read_episodes(path: &Path) -> Result<Vec<EpisodeRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let row: EpisodeRow = record?;
        if row.schema_version != EPISODE_SCHEMA_VERSION {
            return Err(Error::Trace(format!(
                "unsupported episode schema version {}",
                row.schema_version
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}
