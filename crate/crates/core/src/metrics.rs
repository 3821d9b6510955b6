//! Latency bookkeeping: per-stage samples, summaries and file export.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use bitvec::vec::BitVec;
use serde::{Deserialize, Serialize};

use crate::ran::TrafficClass;
use crate::sim::SimTime;
use crate::transport::StageTimestamps;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("packet {packet_id} already has a {stage} sample")]
    Duplicate { packet_id: u64, stage: StagePair },
    #[error("no samples for {class} {stage}")]
    Empty { class: &'static str, stage: StagePair },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StagePair {
    /// Wait at the RAN scheduler until the slot is on air and sent.
    UeRu,
    /// Fronthaul: ONU queueing, upstream transmission, propagation.
    RuDu,
    /// DU/CU processing plus transport to the application.
    DuApp,
    UeDu,
    UeApp,
}

impl StagePair {
    pub const ALL: [StagePair; 5] = [
        StagePair::UeRu,
        StagePair::RuDu,
        StagePair::DuApp,
        StagePair::UeDu,
        StagePair::UeApp,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            StagePair::UeRu => "UE->RU",
            StagePair::RuDu => "RU->DU",
            StagePair::DuApp => "DU->APP",
            StagePair::UeDu => "UE->DU",
            StagePair::UeApp => "UE->APP",
        }
    }

    fn endpoints(&self, ts: &StageTimestamps) -> Option<(SimTime, SimTime)> {
        let (a, b) = match self {
            StagePair::UeRu => (ts.ue_arrival, ts.ran_transmit),
            StagePair::RuDu => (ts.ran_transmit, ts.du_arrival),
            StagePair::DuApp => (ts.du_arrival, ts.app_arrival),
            StagePair::UeDu => (ts.ue_arrival, ts.du_arrival),
            StagePair::UeApp => (ts.ue_arrival, ts.app_arrival),
        };
        Some((a?, b?))
    }
}

impl fmt::Display for StagePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencySample {
    pub packet_id: u64,
    pub class: TrafficClass,
    pub stage: StagePair,
    pub latency: SimTime,
}

const BIN_NS: u64 = 1_000;

#[derive(Debug, Clone, Default)]
struct Series {
    bins: Vec<u64>,
    count: u64,
    sum_ns: u128,
    min_ns: u64,
    max_ns: u64,
    seen: BitVec,
}

impl Series {
    fn add(&mut self, ns: u64) {
        let bin = (ns / BIN_NS) as usize;
        if bin >= self.bins.len() {
            self.bins.resize(bin + 1, 0);
        }
        self.bins[bin] += 1;
        if self.count == 0 {
            self.min_ns = ns;
            self.max_ns = ns;
        } else {
            self.min_ns = self.min_ns.min(ns);
            self.max_ns = self.max_ns.max(ns);
        }
        self.count += 1;
        self.sum_ns += u128::from(ns);
    }

    /// Upper edge of the bin holding the q-quantile, clamped to the
    /// observed range.
    fn quantile_ns(&self, q: f64) -> u64 {
        let rank = ((q * self.count as f64).ceil() as u64).max(1);
        let mut cum = 0;
        for (i, c) in self.bins.iter().enumerate() {
            cum += c;
            if cum >= rank {
                return ((i as u64 + 1) * BIN_NS).clamp(self.min_ns, self.max_ns);
            }
        }
        self.max_ns
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub class: TrafficClass,
    pub stage: StagePair,
    pub count: u64,
    pub mean_us: f64,
    pub max_us: f64,
    pub min_us: f64,
    pub p50_us: f64,
    pub p99_us: f64,
}

/// Collects samples for one simulation run.
#[derive(Debug, Clone)]
pub struct MetricsRecorder {
    warmup: SimTime,
    series: BTreeMap<(TrafficClass, StagePair), Series>,
}

impl MetricsRecorder {
    pub fn new(warmup: SimTime) -> Self {
        MetricsRecorder {
            warmup,
            series: BTreeMap::new(),
        }
    }

    pub fn warmup(&self) -> SimTime {
        self.warmup
    }

    pub fn record(&mut self, s: LatencySample) -> Result<(), MetricsError> {
        let series = self.series.entry((s.class, s.stage)).or_default();
        let idx = s.packet_id as usize;
        if idx >= series.seen.len() {
            series.seen.resize((idx + 1).max(series.seen.len() * 2), false);
        }
        if series.seen[idx] {
            return Err(MetricsError::Duplicate {
                packet_id: s.packet_id,
                stage: s.stage,
            });
        }
        series.seen.set(idx, true);
        series.add(s.latency.as_nanos());
        Ok(())
    }

    /// Records every stage pair whose endpoints are set, unless the packet
    /// arrived during warm-up. Returns false for skipped packets.
    pub fn record_packet(
        &mut self,
        packet_id: u64,
        class: TrafficClass,
        ts: &StageTimestamps,
    ) -> Result<bool, MetricsError> {
        match ts.ue_arrival {
            Some(t) if t >= self.warmup => {}
            _ => return Ok(false),
        }
        for stage in StagePair::ALL {
            if let Some((a, b)) = stage.endpoints(ts) {
                self.record(LatencySample {
                    packet_id,
                    class,
                    stage,
                    latency: b - a,
                })?;
            }
        }
        Ok(true)
    }

    pub fn count(&self, class: TrafficClass, stage: StagePair) -> u64 {
        self.series.get(&(class, stage)).map_or(0, |s| s.count)
    }

    pub fn summarize(
        &self,
        stage: StagePair,
        class: TrafficClass,
    ) -> Result<StatSummary, MetricsError> {
        let s = self
            .series
            .get(&(class, stage))
            .filter(|s| s.count > 0)
            .ok_or(MetricsError::Empty {
                class: class.as_str(),
                stage,
            })?;
        let us = |ns: u64| ns as f64 / 1e3;
        Ok(StatSummary {
            class,
            stage,
            count: s.count,
            mean_us: s.sum_ns as f64 / s.count as f64 / 1e3,
            max_us: us(s.max_ns),
            min_us: us(s.min_ns),
            p50_us: us(s.quantile_ns(0.50)),
            p99_us: us(s.quantile_ns(0.99)),
        })
    }

    /// Summaries of every non-empty series, ordered by class then stage.
    pub fn summaries(&self) -> Vec<StatSummary> {
        self.series
            .iter()
            .filter(|(_, s)| s.count > 0)
            .map(|((c, st), _)| self.summarize(*st, *c).expect("non-empty series"))
            .collect()
    }
}

/// Scenario parameters attached to every exported row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTags {
    pub scenario_id: String,
    pub load_pct: f64,
    pub slot_ms: f64,
    pub cgs_pct: f64,
    pub dl_fraction: f64,
    pub policy: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario_id: String,
    pub load_pct: f64,
    pub slot_ms: f64,
    pub cgs_pct: f64,
    pub dl_fraction: f64,
    pub policy: String,
    pub class: String,
    pub stage_pair: String,
    pub count: u64,
    pub mean_us: f64,
    pub max_us: f64,
    pub p50_us: f64,
    pub p99_us: f64,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 14] = [
    "scenario_id",
    "load_pct",
    "slot_ms",
    "cgs_pct",
    "dl_fraction",
    "policy",
    "class",
    "stage_pair",
    "count",
    "mean_us",
    "max_us",
    "p50_us",
    "p99_us",
    "seed",
];

impl SummaryRow {
    pub fn new(tags: &ScenarioTags, s: &StatSummary) -> Self {
        SummaryRow {
            scenario_id: tags.scenario_id.clone(),
            load_pct: tags.load_pct,
            slot_ms: tags.slot_ms,
            cgs_pct: tags.cgs_pct,
            dl_fraction: tags.dl_fraction,
            policy: tags.policy.clone(),
            class: s.class.as_str().to_string(),
            stage_pair: s.stage.label().to_string(),
            count: s.count,
            mean_us: s.mean_us,
            max_us: s.max_us,
            p50_us: s.p50_us,
            p99_us: s.p99_us,
            seed: tags.seed,
        }
    }
}

pub fn rows_for(tags: &ScenarioTags, rec: &MetricsRecorder) -> Vec<SummaryRow> {
    rec.summaries()
        .iter()
        .map(|s| SummaryRow::new(tags, s))
        .collect()
}

pub fn export_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), MetricsError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_json(path: &Path, rows: &[SummaryRow]) -> Result<(), MetricsError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, rows)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<SummaryRow>, MetricsError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
