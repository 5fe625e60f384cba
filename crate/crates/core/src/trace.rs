use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::energy::EnergyBreakdown;
use crate::error::Result;

/// One processed frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub t: usize,
    pub action: Action,
    pub accuracy: f64,
    /// Energy of processing the frame with `action`.
    pub energy: EnergyBreakdown,
    /// Energy the policy spent deciding (probe rounds, network inference).
    pub extra: EnergyBreakdown,
    pub reward: f64,
}

impl FrameRecord {
    /// Everything the frame cost: processing plus decision overhead.
    pub fn consumed(&self) -> EnergyBreakdown {
        self.energy + self.extra
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceMeta {
    pub seed: u64,
    pub policy_id: String,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub meta: TraceMeta,
    pub records: Vec<FrameRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    t: usize,
    action: Action,
    accuracy: f64,
    sensor_mj: f64,
    isp_mj: f64,
    host_mj: f64,
    comm_mj: f64,
    total_mj: f64,
    reward: f64,
}

impl EpisodeTrace {
    pub fn new(meta: TraceMeta) -> Self {
        Self {
            meta,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_consumed_mj(&self) -> f64 {
        self.records.iter().map(|r| r.consumed().total_mj).sum()
    }

    pub fn total_extra_mj(&self) -> f64 {
        self.records.iter().map(|r| r.extra.total_mj).sum()
    }

    pub fn mean_accuracy(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.accuracy).sum::<f64>() / self.records.len() as f64
    }

    pub fn key_count(&self) -> usize {
        self.records.iter().filter(|r| r.action.is_key()).count()
    }

    pub fn actions(&self) -> Vec<Action> {
        self.records.iter().map(|r| r.action).collect()
    }

    /// Writes `t,action,accuracy,sensor_mj,isp_mj,host_mj,comm_mj,total_mj,reward`.
    /// Energy columns report consumed energy, decision overhead included.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            let e = r.consumed();
            w.serialize(CsvRow {
                t: r.t,
                action: r.action,
                accuracy: r.accuracy,
                sensor_mj: e.sensor_mj,
                isp_mj: e.isp_mj,
                host_mj: e.host_mj,
                comm_mj: e.comm_mj,
                total_mj: e.total_mj,
                reward: r.reward,
            })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a trace written by [`EpisodeTrace::write_csv`]. Overhead is folded into `energy`.
    pub fn read_csv<R: Read>(input: R, meta: TraceMeta) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut records = Vec::new();
        for row in r.deserialize() {
            let row: CsvRow = row?;
            records.push(FrameRecord {
                t: row.t,
                action: row.action,
                accuracy: row.accuracy,
                energy: EnergyBreakdown {
                    sensor_mj: row.sensor_mj,
                    isp_mj: row.isp_mj,
                    host_mj: row.host_mj,
                    comm_mj: row.comm_mj,
                    total_mj: row.total_mj,
                },
                extra: EnergyBreakdown::zero(),
                reward: row.reward,
            });
        }
        Ok(Self { meta, records })
    }
}
