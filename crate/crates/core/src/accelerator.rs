//! DMACs, double-buffered SRAM and the pass-sequencing controller.
//!
//! Passes are pipelined in windows. Window `k` loads the tiles of pass `k`
//! into one half of the input buffers while the MAC array computes pass
//! `k - 1` from the other half. A window ends once both its loads and its
//! compute are done. Output tiles are stored from the output buffer
//! through the OFM DMAC as soon as their last channel pass finishes; stores
//! run back to back and overlap later windows.
//!
//! [`Controller`] holds only the sequencing rules. It does not know how long
//! a DMA command takes: the driver (the cycle simulator or the analytic
//! estimator) reports load and store completions and executes the returned
//! [`Action`]s.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::estimator::Regime;
use crate::memmap::{contiguous_datasets, split_into_bursts, BurstRequest, DataType, MemoryLayout};
use crate::workload::{compute_cycles, pass_tile, LayerShape, TileConfig, TileGrid, DEFAULT_PIPELINE_FILL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcceleratorConfig {
    /// Controller overhead at the start of each window before the first
    /// DMA command is issued.
    pub setup_overhead: u64,
    /// Delay between the IFM and the weight command of one window.
    pub command_gap: u64,
    pub pipeline_fill: u64,
    /// On-chip SRAM capacity in elements, if enforced.
    pub sram_budget: Option<u64>,
}

impl Default for AcceleratorConfig {
    fn default() -> Self {
        Self { setup_overhead: 20, command_gap: 4, pipeline_fill: DEFAULT_PIPELINE_FILL, sram_budget: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmaCommand {
    pub dmac: DataType,
    pub bursts: Vec<BurstRequest>,
    pub pass_index: u64,
}

impl DmaCommand {
    pub fn beats(&self) -> u64 {
        self.bursts.iter().map(|b| b.beats as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassCommands {
    pub ifm: DmaCommand,
    pub weights: DmaCommand,
    /// Store of the output tile completed by this pass.
    pub ofm: Option<DmaCommand>,
}

/// Bursts of one tensor for one pass.
pub fn dma_command(
    dmac: DataType,
    layer: &LayerShape,
    tile: &TileConfig,
    pass_index: u64,
    layout: &MemoryLayout,
    max_burst_beats: u32,
) -> DmaCommand {
    let pass = pass_tile(layer, tile, pass_index);
    let bursts = contiguous_datasets(dmac, layer, &pass, layout)
        .iter()
        .flat_map(|ds| split_into_bursts(ds, max_burst_beats, layout.page_size))
        .collect();
    DmaCommand { dmac, bursts, pass_index }
}

/// IFM and weight loads for a pass, plus the OFM store if the pass finishes
/// an output tile.
pub fn build_pass_commands(
    layer: &LayerShape,
    tile: &TileConfig,
    pass_index: u64,
    layout: &MemoryLayout,
    max_burst_beats: u32,
) -> PassCommands {
    let cmd = |d| dma_command(d, layer, tile, pass_index, layout, max_burst_beats);
    let last = pass_tile(layer, tile, pass_index).last_channel_tile;
    PassCommands { ifm: cmd(DataType::Ifm), weights: cmd(DataType::Weight), ofm: last.then(|| cmd(DataType::Ofm)) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmacStatus {
    Idle,
    Running,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmacState {
    pub status: DmacStatus,
    pub in_flight: u32,
    pub completed_beats: u64,
}

/// A stretch of a pass's communication window with a fixed set of running
/// DMACs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmaInterval {
    pub active_dmacs: Vec<DataType>,
    pub start: u64,
    pub end: u64,
    /// Beats moved per DMAC, indexed IFM, W, OFM.
    pub beats_transferred: [u64; 3],
    pub bandwidth: f64,
    pub regime: Option<Regime>,
}

impl DmaInterval {
    pub fn duration(&self) -> u64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassTimeline {
    pub pass_index: u64,
    pub comm_start: u64,
    pub comm_end: u64,
    pub compute_start: u64,
    pub compute_end: u64,
    pub intervals: Vec<DmaInterval>,
}

impl PassTimeline {
    pub fn comm_cycles(&self) -> u64 {
        self.comm_end - self.comm_start
    }

    pub fn compute_cycles(&self) -> u64 {
        self.compute_end - self.compute_start
    }
}

/// Bandwidth of each non-empty interval, in elements per cycle.
pub fn measure_bandwidth(timeline: &PassTimeline) -> Vec<f64> {
    timeline
        .intervals
        .iter()
        .filter(|iv| iv.end > iv.start)
        .map(|iv| iv.beats_transferred.iter().sum::<u64>() as f64 / iv.duration() as f64)
        .collect()
}

/// Bandwidth over the whole communication window of a pass.
pub fn pass_bandwidth(timeline: &PassTimeline) -> Option<f64> {
    let cycles = timeline.comm_cycles();
    if cycles == 0 {
        return None;
    }
    let beats: u64 = timeline.intervals.iter().flat_map(|iv| iv.beats_transferred).sum();
    Some(beats as f64 / cycles as f64)
}

fn mask_members(mask: u8) -> Vec<DataType> {
    DataType::ALL.into_iter().filter(|d| mask & (1 << d.index()) != 0).collect()
}

/// Record of DMAC run states and data-channel transfers, used to cut pass
/// windows into DMA intervals after the fact.
#[derive(Debug, Clone, Default)]
pub struct ActivityLog {
    /// (cycle, active mask after the change), in cycle order.
    transitions: Vec<(u64, u8)>,
    mask: u8,
    /// (start cycle, beats, dmac), in start order; one beat per cycle.
    transfers: Vec<(u64, u32, DataType)>,
    longest: u64,
}

impl ActivityLog {
    pub fn set_active(&mut self, dmac: DataType, active: bool, cycle: u64) {
        let bit = 1 << dmac.index();
        self.mask = if active { self.mask | bit } else { self.mask & !bit };
        match self.transitions.last_mut() {
            Some((c, m)) if *c == cycle => *m = self.mask,
            _ => self.transitions.push((cycle, self.mask)),
        }
    }

    pub fn transfer(&mut self, dmac: DataType, start: u64, beats: u32) {
        self.longest = self.longest.max(beats as u64);
        self.transfers.push((start, beats, dmac));
    }

    fn mask_at(&self, cycle: u64) -> u8 {
        let i = self.transitions.partition_point(|&(c, _)| c <= cycle);
        if i == 0 {
            0
        } else {
            self.transitions[i - 1].1
        }
    }

    fn beats_in(&self, start: u64, end: u64) -> [u64; 3] {
        let mut out = [0u64; 3];
        let first = self.transfers.partition_point(|&(s, _, _)| s + self.longest <= start);
        for &(s, n, d) in &self.transfers[first..] {
            if s >= end {
                break;
            }
            let lo = s.max(start);
            let hi = (s + n as u64).min(end);
            if hi > lo {
                out[d.index()] += hi - lo;
            }
        }
        out
    }

    /// Splits `[start, end)` at every change of the running set.
    pub fn intervals(&self, start: u64, end: u64) -> Vec<DmaInterval> {
        let mut cuts = vec![(start, self.mask_at(start))];
        let first = self.transitions.partition_point(|&(c, _)| c <= start);
        for &(c, m) in &self.transitions[first..] {
            if c >= end {
                break;
            }
            if m != cuts.last().unwrap().1 {
                cuts.push((c, m));
            }
        }
        let mut out = Vec::with_capacity(cuts.len());
        for (i, &(s, m)) in cuts.iter().enumerate() {
            let e = cuts.get(i + 1).map_or(end, |c| c.0);
            if e <= s {
                continue;
            }
            let beats = self.beats_in(s, e);
            out.push(DmaInterval {
                active_dmacs: mask_members(m),
                start: s,
                end: e,
                beats_transferred: beats,
                bandwidth: beats.iter().sum::<u64>() as f64 / (e - s) as f64,
                regime: None,
            });
        }
        out
    }
}

/// Work the driver must carry out for the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Start the IFM or weight load of `pass` at cycle `at`.
    Load { dmac: DataType, pass: u64, at: u64 },
    /// The MAC array runs `pass` over `[start, end)`.
    Compute { pass: u64, start: u64, end: u64 },
    /// Start storing the output tile finished by `pass`.
    Store { pass: u64, at: u64 },
    /// The last store has completed.
    Finished { at: u64 },
}

/// Double-buffer discipline checks; all stay zero in a correct run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferChecks {
    pub input_overwrite: u64,
    pub input_not_ready: u64,
    pub output_overwrite: u64,
    pub output_not_ready: u64,
}

impl BufferChecks {
    pub fn total(&self) -> u64 {
        self.input_overwrite + self.input_not_ready + self.output_overwrite + self.output_not_ready
    }
}

#[derive(Debug, Clone, Copy)]
struct PassInfo {
    compute: u64,
    output_tile: u64,
    first: bool,
    last: bool,
}

pub struct Controller {
    layer: LayerShape,
    tile: TileConfig,
    cfg: AcceleratorConfig,
    pass_count: u64,
    output_tiles: u64,
    window: u64,
    window_start: u64,
    loads_pending: u32,
    comm_end: Option<u64>,
    compute_pending: bool,
    compute_running: Option<(u64, u64)>,
    compute_waiting: Option<u64>,
    /// Stores queued behind the running one: pass that finished the tile.
    store_queue: VecDeque<u64>,
    store_running: Option<(u64, u64)>,
    stores_done: u64,
    /// Compute end of the last pass that read each input buffer half.
    input_released: [u64; 2],
    /// Store end of the last tile that left each output buffer half.
    output_released: [u64; 2],
    /// Compute end of the last pass written into each output half.
    output_written: [u64; 2],
    last_compute_end: u64,
    comm_limited_windows: u64,
    timelines: Option<Vec<PassTimeline>>,
    checks: BufferChecks,
    finished: Option<u64>,
}

impl Controller {
    pub fn new(layer: LayerShape, tile: TileConfig, cfg: AcceleratorConfig, keep_timelines: bool) -> Self {
        let grid = TileGrid::new(&layer, &tile);
        Self {
            layer,
            tile,
            cfg,
            pass_count: grid.pass_count(),
            output_tiles: grid.output_tiles(),
            window: 0,
            window_start: 0,
            loads_pending: 0,
            comm_end: None,
            compute_pending: false,
            compute_running: None,
            compute_waiting: None,
            store_queue: VecDeque::new(),
            store_running: None,
            stores_done: 0,
            input_released: [0; 2],
            output_released: [0; 2],
            output_written: [0; 2],
            last_compute_end: 0,
            comm_limited_windows: 0,
            timelines: keep_timelines.then(Vec::new),
            checks: BufferChecks::default(),
            finished: None,
        }
    }

    pub fn pass_count(&self) -> u64 {
        self.pass_count
    }

    pub fn checks(&self) -> BufferChecks {
        self.checks
    }

    pub fn finished(&self) -> Option<u64> {
        self.finished
    }

    /// Windows, among those with both loads and compute, that ended on
    /// their loads.
    pub fn comm_limited_windows(&self) -> u64 {
        self.comm_limited_windows
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn take_timelines(&mut self) -> Option<Vec<PassTimeline>> {
        self.timelines.take()
    }

    fn info(&self, pass: u64) -> PassInfo {
        let p = pass_tile(&self.layer, &self.tile, pass);
        PassInfo {
            compute: compute_cycles(&self.layer, &self.tile, &p, self.cfg.pipeline_fill),
            output_tile: p.output_tile,
            first: p.first_channel_tile,
            last: p.last_channel_tile,
        }
    }

    /// Opens window 0 at `now`.
    pub fn start(&mut self, now: u64) -> Vec<Action> {
        let mut out = Vec::new();
        self.open_window(0, now, &mut out);
        out
    }

    fn open_window(&mut self, k: u64, now: u64, out: &mut Vec<Action>) {
        self.window = k;
        self.window_start = now;
        self.comm_end = None;
        if k < self.pass_count {
            self.loads_pending = 2;
            let at = now + self.cfg.setup_overhead;
            if self.input_released[(k % 2) as usize] > at {
                self.checks.input_overwrite += 1;
            }
            out.push(Action::Load { dmac: DataType::Ifm, pass: k, at });
            out.push(Action::Load { dmac: DataType::Weight, pass: k, at: at + self.cfg.command_gap });
            if let Some(t) = self.timelines.as_mut() {
                t.push(PassTimeline {
                    pass_index: k,
                    comm_start: now,
                    comm_end: now,
                    compute_start: 0,
                    compute_end: 0,
                    intervals: Vec::new(),
                });
            }
        } else {
            self.loads_pending = 0;
            self.comm_end = Some(now);
        }
        self.compute_pending = k >= 1;
        if k >= 1 {
            self.try_compute(k - 1, now, out);
        }
        self.check_window_end(now, out);
    }

    fn try_compute(&mut self, pass: u64, now: u64, out: &mut Vec<Action>) {
        let info = self.info(pass);
        let u = info.output_tile;
        if info.first && u >= 2 && self.stores_done < u - 1 {
            self.compute_waiting = Some(pass);
            return;
        }
        self.compute_waiting = None;
        if info.first && self.output_released[(u % 2) as usize] > now {
            self.checks.output_overwrite += 1;
        }
        if let Some(t) = self.timelines.as_ref().and_then(|t| t.get(pass as usize)) {
            if t.comm_end > now {
                self.checks.input_not_ready += 1;
            }
        }
        let end = now + info.compute;
        self.compute_running = Some((pass, end));
        if let Some(t) = self.timelines.as_mut().and_then(|t| t.get_mut(pass as usize)) {
            t.compute_start = now;
            t.compute_end = end;
        }
        out.push(Action::Compute { pass, start: now, end });
    }

    fn check_window_end(&mut self, now: u64, out: &mut Vec<Action>) {
        if self.loads_pending > 0 || self.compute_pending {
            return;
        }
        if self.window >= 1 && self.window < self.pass_count && self.comm_end > Some(self.last_compute_end) {
            self.comm_limited_windows += 1;
        }
        if self.window < self.pass_count {
            self.open_window(self.window + 1, now, out);
        }
    }

    fn start_store(&mut self, pass: u64, now: u64, out: &mut Vec<Action>) {
        let u = self.info(pass).output_tile;
        if self.output_written[(u % 2) as usize] > now {
            self.checks.output_not_ready += 1;
        }
        self.store_running = Some((pass, u));
        out.push(Action::Store { pass, at: now });
    }

    /// The IFM or weight load of the current window finished at `now`.
    pub fn load_done(&mut self, _dmac: DataType, now: u64) -> Vec<Action> {
        let mut out = Vec::new();
        debug_assert!(self.loads_pending > 0, "load completion without a pending load");
        self.loads_pending -= 1;
        if self.loads_pending == 0 {
            self.comm_end = Some(now);
            if let Some(t) = self.timelines.as_mut().and_then(|t| t.last_mut()) {
                t.comm_end = now;
            }
            self.check_window_end(now, &mut out);
        }
        out
    }

    /// The running compute finished at `now`.
    pub fn compute_done(&mut self, now: u64) -> Vec<Action> {
        let mut out = Vec::new();
        let (pass, _) = self.compute_running.take().expect("compute completion without compute");
        let info = self.info(pass);
        self.input_released[(pass % 2) as usize] = now;
        self.output_written[(info.output_tile % 2) as usize] = now;
        self.compute_pending = false;
        self.last_compute_end = now;
        if info.last {
            if self.store_running.is_none() {
                self.start_store(pass, now, &mut out);
            } else {
                self.store_queue.push_back(pass);
            }
        }
        self.check_window_end(now, &mut out);
        out
    }

    /// The running store finished at `now`.
    pub fn store_done(&mut self, now: u64) -> Vec<Action> {
        let mut out = Vec::new();
        let (_, u) = self.store_running.take().expect("store completion without store");
        self.output_released[(u % 2) as usize] = now;
        self.stores_done += 1;
        if let Some(next) = self.store_queue.pop_front() {
            self.start_store(next, now, &mut out);
        }
        if let Some(pass) = self.compute_waiting {
            self.try_compute(pass, now, &mut out);
        }
        if self.stores_done == self.output_tiles {
            self.finished = Some(now);
            out.push(Action::Finished { at: now });
        }
        out
    }
}
