//! Event-driven simulation of one convolutional layer.

pub mod kernel;
pub mod report;
pub mod system;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bus::{write_phase_trace_csv, ProtocolPhase};
use crate::dram::{write_command_trace_csv, DramCommand};
use crate::error::{Result, TraceUnavailable};

pub use report::{Limit, Report, Violations};
pub use system::{run_streams, simulate, SimOptions, SystemConfig};

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: Report,
    pub dram_trace: Option<Vec<DramCommand>>,
    pub bus_trace: Option<Vec<ProtocolPhase>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Dram,
    Bus,
    Passes,
}

impl std::str::FromStr for TraceKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dram" => Ok(TraceKind::Dram),
            "bus" => Ok(TraceKind::Bus),
            "passes" => Ok(TraceKind::Passes),
            other => Err(format!("unknown trace kind '{other}' (expected dram, bus or passes)")),
        }
    }
}

impl TraceKind {
    pub fn file_name(self) -> &'static str {
        match self {
            TraceKind::Dram => "dram_trace.csv",
            TraceKind::Bus => "bus_trace.csv",
            TraceKind::Passes => "passes.json",
        }
    }
}

/// Serializes one collected trace. Column order is fixed.
pub fn write_trace<W: Write>(out: &SimOutput, kind: TraceKind, mut w: W) -> Result<()> {
    match kind {
        TraceKind::Dram => {
            let t = out.dram_trace.as_ref().ok_or(TraceUnavailable("dram"))?;
            write_command_trace_csv(t, &mut w)?;
        }
        TraceKind::Bus => {
            let t = out.bus_trace.as_ref().ok_or(TraceUnavailable("bus"))?;
            write_phase_trace_csv(t, &mut w)?;
        }
        TraceKind::Passes => {
            let p = out.report.passes.as_ref().ok_or(TraceUnavailable("passes"))?;
            serde_json::to_writer_pretty(&mut w, p)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_trace(out: &SimOutput, kind: TraceKind, path: &Path) -> Result<()> {
    // Check availability before creating the file.
    let available = match kind {
        TraceKind::Dram => out.dram_trace.is_some(),
        TraceKind::Bus => out.bus_trace.is_some(),
        TraceKind::Passes => out.report.passes.is_some(),
    };
    if !available {
        let name = match kind {
            TraceKind::Dram => "dram",
            TraceKind::Bus => "bus",
            TraceKind::Passes => "passes",
        };
        return Err(TraceUnavailable(name).into());
    }
    write_trace(out, kind, BufWriter::new(File::create(path)?))
}
