//! DRAM data layout, contiguous datasets and burst/command mapping.
//!
//! Feature maps are laid out row-major, one feature map after another, and
//! filters plane by plane with the input channel varying before the output
//! channel. A pass touches a tile of each tensor; the maximal runs of
//! consecutive addresses inside one feature map (IFM/OFM) or one filter
//! (weights) are the pass's *contiguous datasets*. Each dataset is cut into
//! bus bursts, and each burst into DRAM column commands.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::dram::DramConfig;
use crate::error::AddressError;
use crate::workload::{LayerShape, PassTile};

/// The three tensors moved by the accelerator; each has its own DMAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Ifm,
    #[serde(rename = "w")]
    Weight,
    Ofm,
}

impl DataType {
    pub const ALL: [DataType; 3] = [DataType::Ifm, DataType::Weight, DataType::Ofm];

    pub fn index(self) -> usize {
        match self {
            DataType::Ifm => 0,
            DataType::Weight => 1,
            DataType::Ofm => 2,
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            DataType::Ofm => Direction::Write,
            _ => Direction::Read,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DataType::Ifm => "IFM",
            DataType::Weight => "W",
            DataType::Ofm => "OFM",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Read,
    Write,
}

/// Region-relative element address of one pixel or weight.
///
/// `index` is `(b, c, h, w)` for IFM, `(m, c, r, s)` for weights and
/// `(b, m, e, f)` for OFM.
pub fn element_address(data_type: DataType, index: [u32; 4], layer: &LayerShape) -> Result<u64, AddressError> {
    let bounds = match data_type {
        DataType::Ifm => [layer.batch, layer.in_channels, layer.in_height, layer.in_width],
        DataType::Weight => [layer.out_channels, layer.in_channels, layer.filter_height, layer.filter_width],
        DataType::Ofm => [layer.batch, layer.out_channels, layer.out_height, layer.out_width],
    };
    if index.iter().zip(bounds.iter()).any(|(i, b)| i >= b) {
        return Err(AddressError { data_type: data_type.name(), index, bounds });
    }
    let [a, b, c, d] = index.map(|v| v as u64);
    let [_, nb, nc, nd] = bounds.map(|v| v as u64);
    Ok(((a * nb + b) * nc + c) * nd + d)
}

/// Page-aligned base addresses of the three tensor regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryLayout {
    pub ifm_base: u64,
    pub weight_base: u64,
    pub ofm_base: u64,
    pub page_size: u64,
}

impl MemoryLayout {
    pub fn new(layer: &LayerShape, page_size: u64) -> Self {
        let align = |v: u64| v.div_ceil(page_size) * page_size;
        let ifm_size = layer.batch as u64 * layer.in_channels as u64 * layer.in_height as u64 * layer.in_width as u64;
        let w_size = layer.out_channels as u64
            * layer.in_channels as u64
            * layer.filter_height as u64
            * layer.filter_width as u64;
        let weight_base = align(ifm_size);
        let ofm_base = align(weight_base + w_size);
        Self { ifm_base: 0, weight_base, ofm_base, page_size }
    }

    pub fn base(&self, data_type: DataType) -> u64 {
        match data_type {
            DataType::Ifm => self.ifm_base,
            DataType::Weight => self.weight_base,
            DataType::Ofm => self.ofm_base,
        }
    }
}

/// A maximal run of consecutive DRAM elements touched by one pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContiguousDataset {
    pub id: u32,
    pub start_addr: u64,
    pub length: u64,
    pub data_type: DataType,
}

/// Merges `(start, len)` spans that abut into maximal runs. Spans must be
/// given in increasing address order.
fn merge_spans(spans: impl IntoIterator<Item = (u64, u64)>) -> Vec<(u64, u64)> {
    let mut out: Vec<(u64, u64)> = Vec::new();
    for (start, len) in spans {
        if len == 0 {
            continue;
        }
        match out.last_mut() {
            Some((s, l)) if *s + *l == start => *l += len,
            _ => out.push((start, len)),
        }
    }
    out
}

/// Contiguous datasets of one tensor for the tile processed by `pass`.
///
/// Runs are merged only inside one feature map (IFM, OFM) or one filter
/// (weights); each plane is described by its own DMA descriptor.
pub fn contiguous_datasets(
    data_type: DataType,
    layer: &LayerShape,
    pass: &PassTile,
    layout: &MemoryLayout,
) -> Vec<ContiguousDataset> {
    let base = layout.base(data_type);
    let mut runs: Vec<(u64, u64)> = Vec::new();
    match data_type {
        DataType::Ifm => {
            let (h0, h1) = pass.ifm_rows(layer);
            let (w0, w1) = pass.ifm_cols(layer);
            let (hh, ww) = (layer.in_height as u64, layer.in_width as u64);
            for b in pass.b0..pass.b0 + pass.tb {
                for c in pass.c0..pass.c0 + pass.tc {
                    let plane = (b as u64 * layer.in_channels as u64 + c as u64) * hh;
                    runs.extend(merge_spans((h0..h1).map(|h| ((plane + h as u64) * ww + w0 as u64, (w1 - w0) as u64))));
                }
            }
        }
        DataType::Weight => {
            let rs = layer.filter_height as u64 * layer.filter_width as u64;
            for m in pass.m0..pass.m0 + pass.tm {
                runs.extend(merge_spans(
                    (pass.c0..pass.c0 + pass.tc).map(|c| ((m as u64 * layer.in_channels as u64 + c as u64) * rs, rs)),
                ));
            }
        }
        DataType::Ofm => {
            let (ee, ff) = (layer.out_height as u64, layer.out_width as u64);
            for b in pass.b0..pass.b0 + pass.tb {
                for m in pass.m0..pass.m0 + pass.tm {
                    let plane = (b as u64 * layer.out_channels as u64 + m as u64) * ee;
                    runs.extend(merge_spans(
                        (pass.e0..pass.e0 + pass.te)
                            .map(|e| ((plane + e as u64) * ff + pass.f0 as u64, pass.tf as u64)),
                    ));
                }
            }
        }
    }
    runs.into_iter()
        .enumerate()
        .map(|(i, (start, length))| ContiguousDataset { id: i as u32, start_addr: base + start, length, data_type })
        .collect()
}

/// One bus burst transaction: up to `max_burst_beats` consecutive elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurstRequest {
    pub dataset_id: u32,
    pub start_addr: u64,
    pub beats: u32,
    pub direction: Direction,
    pub issuing_dmac: DataType,
}

/// Greedy burst split of a dataset, also cutting at DRAM page boundaries.
pub fn split_into_bursts(ds: &ContiguousDataset, max_burst_beats: u32, page_size: u64) -> Vec<BurstRequest> {
    assert!(max_burst_beats >= 1, "max_burst_beats must be positive");
    let mut bursts = Vec::with_capacity((ds.length / max_burst_beats as u64 + 2) as usize);
    let mut addr = ds.start_addr;
    let end = ds.start_addr + ds.length;
    while addr < end {
        let page_end = (addr / page_size + 1) * page_size;
        let beats = (end - addr).min(max_burst_beats as u64).min(page_end - addr);
        bursts.push(BurstRequest {
            dataset_id: ds.id,
            start_addr: addr,
            beats: beats as u32,
            direction: ds.data_type.direction(),
            issuing_dmac: ds.data_type,
        });
        addr += beats;
    }
    bursts
}

/// Burst lengths of a dataset of `length` elements, ignoring page boundaries.
pub fn burst_lengths(length: u64, max_burst_beats: u32) -> Vec<u32> {
    let full = length / max_burst_beats as u64;
    let rem = (length % max_burst_beats as u64) as u32;
    let mut v = vec![max_burst_beats; full as usize];
    if rem > 0 {
        v.push(rem);
    }
    v
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DramCommandCount {
    pub activates: u64,
    pub column_cmds: u64,
    pub precharges: u64,
    pub total: u64,
}

impl DramCommandCount {
    fn add(&mut self, other: DramCommandCount) {
        self.activates += other.activates;
        self.column_cmds += other.column_cmds;
        self.precharges += other.precharges;
        self.total += other.total;
    }
}

/// Column commands needed by one burst.
pub fn column_commands(beats: u32, dram_burst_beats: u32) -> u32 {
    beats.div_ceil(dram_burst_beats)
}

/// Counts the DRAM commands a burst stream expands into.
///
/// Bursts are taken `outstanding_group` at a time; each group opens a page
/// once, and consecutive bursts of the group that stay on the page share it.
/// A page is precharged after `close_after` column commands, when the next
/// burst moves to another page, and at the end of the group.
pub fn expand_to_dram_commands(
    bursts: &[BurstRequest],
    cfg: &DramConfig,
    outstanding_group: usize,
) -> DramCommandCount {
    assert!(outstanding_group >= 1);
    let mut count = DramCommandCount::default();
    for group in bursts.chunks(outstanding_group) {
        let mut open: Option<u64> = None;
        let mut since_act = 0u32;
        for burst in group {
            let page = burst.start_addr / cfg.page_size;
            if open.is_some_and(|p| p != page) {
                count.precharges += 1;
                open = None;
            }
            for _ in 0..column_commands(burst.beats, cfg.burst_beats) {
                if open.is_some() && since_act == cfg.close_after {
                    count.precharges += 1;
                    open = None;
                }
                if open.is_none() {
                    count.activates += 1;
                    open = Some(page);
                    since_act = 0;
                }
                count.column_cmds += 1;
                since_act += 1;
            }
        }
        if open.is_some() {
            count.precharges += 1;
        }
    }
    count.total = count.activates + count.column_cmds + count.precharges;
    count
}

/// Per-dataset command-count breakdown, one CSV row each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandCountRow {
    pub dataset_id: u32,
    pub activates: u64,
    pub column_cmds: u64,
    pub precharges: u64,
}

pub fn command_breakdown(
    datasets: &[ContiguousDataset],
    max_burst_beats: u32,
    cfg: &DramConfig,
    outstanding_group: usize,
) -> (Vec<CommandCountRow>, DramCommandCount) {
    let mut total = DramCommandCount::default();
    let rows = datasets
        .iter()
        .map(|ds| {
            let bursts = split_into_bursts(ds, max_burst_beats, cfg.page_size);
            let c = expand_to_dram_commands(&bursts, cfg, outstanding_group);
            total.add(c);
            CommandCountRow {
                dataset_id: ds.id,
                activates: c.activates,
                column_cmds: c.column_cmds,
                precharges: c.precharges,
            }
        })
        .collect();
    (rows, total)
}

pub fn write_command_csv<W: Write>(rows: &[CommandCountRow], mut out: W) -> io::Result<()> {
    writeln!(out, "dataset_id,activates,column_cmds,precharges")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.dataset_id, r.activates, r.column_cmds, r.precharges)?;
    }
    Ok(())
}
