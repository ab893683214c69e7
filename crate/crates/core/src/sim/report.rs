use serde::{Deserialize, Serialize};

use crate::accelerator::{BufferChecks, PassTimeline};
use crate::bus::BusChecks;
use crate::dram::{CommandStats, DramChecks};
use crate::workload::{LayerShape, TileConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    CommLimited,
    CompLimited,
}

/// Invariant violations counted by the monitors during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violations {
    pub outstanding_limit: u64,
    pub phase_order: u64,
    pub channel_overlap: u64,
    pub row_activation: u64,
    pub close_bound: u64,
    pub beat_conservation: u64,
    pub double_buffer: u64,
    pub causality: u64,
}

impl Violations {
    pub fn from_parts(bus: BusChecks, dram: DramChecks, buffers: BufferChecks) -> Self {
        Self {
            outstanding_limit: bus.outstanding_exceeded,
            phase_order: bus.phase_order,
            channel_overlap: bus.channel_overlap,
            row_activation: dram.column_to_closed_row + dram.activate_on_open_bank + dram.precharge_on_idle_bank,
            close_bound: dram.close_bound_exceeded,
            beat_conservation: 0,
            double_buffer: buffers.total(),
            causality: 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.outstanding_limit
            + self.phase_order
            + self.channel_overlap
            + self.row_activation
            + self.close_bound
            + self.beat_conservation
            + self.double_buffer
            + self.causality
    }
}

/// Result of one run, shared by the simulator and every estimator model.
/// Fields a model cannot fill are `null` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub model: String,
    pub layer: LayerShape,
    pub tile: TileConfig,
    pub total_cycles: u64,
    /// Two operations per MAC.
    pub ops: u64,
    /// Operations per cycle.
    pub performance: f64,
    pub pass_count: u64,
    pub limit: Limit,
    pub comm_limited_windows: u64,
    pub passes: Option<Vec<PassTimeline>>,
    pub dram_commands: Option<CommandStats>,
    pub violations: Option<Violations>,
}

impl Report {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// Per-pass communication window lengths, if timelines were kept.
    pub fn per_pass_comm(&self) -> Option<Vec<u64>> {
        self.passes.as_ref().map(|p| p.iter().map(|t| t.comm_cycles()).collect())
    }

    pub fn per_pass_compute(&self) -> Option<Vec<u64>> {
        self.passes.as_ref().map(|p| p.iter().map(|t| t.compute_cycles()).collect())
    }
}

/// Overall regime: communication-limited when most pipelined windows
/// waited on their loads.
pub fn limit_from_windows(comm_limited: u64, pass_count: u64) -> Limit {
    let windows = pass_count.saturating_sub(1);
    if windows > 0 && comm_limited * 2 > windows {
        Limit::CommLimited
    } else {
        Limit::CompLimited
    }
}
