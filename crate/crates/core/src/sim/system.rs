//! Wires the DRAM, bus and controller models to the event kernel.

use crate::accelerator::{dma_command, AcceleratorConfig, Action, ActivityLog, Controller, DmaCommand};
use crate::bus::{Bus, BusConfig, TxnId};
use crate::dram::{Dram, DramConfig};
use crate::error::{ConfigError, Result};
use crate::memmap::{BurstRequest, DataType, Direction, MemoryLayout};
use crate::sim::kernel::{Kernel, Priority, WakeSlot};
use crate::sim::report::{limit_from_windows, Report, Violations};
use crate::sim::SimOutput;
use crate::workload::{buffer_footprint, layer_traffic, LayerShape, TileConfig};

use serde::{Deserialize, Serialize};

/// Every tunable of the modeled system.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    pub bus: BusConfig,
    pub dram: DramConfig,
    pub accelerator: AcceleratorConfig,
}

impl SystemConfig {
    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        self.bus.validate().map_err(ConfigError::Invalid)?;
        self.dram.validate().map_err(ConfigError::Invalid)?;
        Ok(())
    }

    /// Checks layer, tile and SRAM budget together.
    pub fn check_design(&self, layer: &LayerShape, tile: &TileConfig) -> std::result::Result<(), ConfigError> {
        self.validate()?;
        layer.validate()?;
        tile.validate(layer)?;
        if let Some(budget) = self.accelerator.sram_budget {
            let footprint = buffer_footprint(layer, tile);
            if footprint > budget {
                return Err(ConfigError::SramExceeded { footprint, budget });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Keep per-pass timelines and DMA intervals.
    pub timelines: bool,
    pub dram_trace: bool,
    pub bus_trace: bool,
}

impl SimOptions {
    pub fn all() -> Self {
        Self { timelines: true, dram_trace: true, bus_trace: true }
    }
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    DramArrive(TxnId),
    DramWake,
    Refresh,
    ChannelWake,
    ChunkDone { txn: TxnId, last: bool, dir: Direction },
    WriteAck(TxnId),
    Arbitrate,
    Load { dmac: DataType, pass: u64 },
    Store { pass: u64 },
    ComputeDone,
}

struct System {
    layer: LayerShape,
    tile: TileConfig,
    cfg: SystemConfig,
    layout: MemoryLayout,
    kernel: Kernel<Ev>,
    dram: Dram,
    bus: Bus,
    ctl: Controller,
    /// Standalone stream mode: no controller, finish when commands drain.
    streams: Option<[Option<u64>; 3]>,
    pending_streams: [Vec<BurstRequest>; 3],
    log: Option<ActivityLog>,
    dram_wake: WakeSlot,
    channel_wake: WakeSlot,
    arb_wake: WakeSlot,
    /// Arrivals the DRAM queue could not take yet.
    held: std::collections::VecDeque<TxnId>,
    /// Transactions left in each DMAC's current command.
    remaining: [usize; 3],
    loaded_beats: [u64; 3],
}

impl System {
    fn new(layer: LayerShape, tile: TileConfig, cfg: SystemConfig, opts: SimOptions) -> Self {
        let mut dram = Dram::new(cfg.dram);
        if opts.dram_trace {
            dram = dram.with_trace();
        }
        let mut bus = Bus::new(cfg.bus, cfg.dram.burst_beats);
        if opts.bus_trace {
            bus = bus.with_trace();
        }
        Self {
            layout: MemoryLayout::new(&layer, cfg.dram.page_size),
            ctl: Controller::new(layer, tile, cfg.accelerator, opts.timelines),
            layer,
            tile,
            cfg,
            kernel: Kernel::new(),
            dram,
            bus,
            log: opts.timelines.then(ActivityLog::default),
            dram_wake: WakeSlot::default(),
            channel_wake: WakeSlot::default(),
            arb_wake: WakeSlot::default(),
            streams: None,
            pending_streams: Default::default(),
            held: Default::default(),
            remaining: [0; 3],
            loaded_beats: [0; 3],
        }
    }

    fn want_dram(&mut self, at: u64) {
        if self.dram_wake.want(at) {
            self.kernel.schedule(at, Priority::Dram, Ev::DramWake);
        }
    }

    fn want_channel(&mut self, at: Option<u64>) {
        if let Some(at) = at {
            if self.channel_wake.want(at) {
                self.kernel.schedule(at, Priority::Bus, Ev::ChannelWake);
            }
        }
    }

    fn want_arb(&mut self, now: u64) {
        if let Some(at) = self.bus.next_grant(now) {
            if self.arb_wake.want(at) {
                self.kernel.schedule(at, Priority::Bus, Ev::Arbitrate);
            }
        }
    }

    fn apply(&mut self, actions: Vec<Action>) {
        for a in actions {
            match a {
                Action::Load { dmac, pass, at } => self.kernel.schedule(at, Priority::Dmac, Ev::Load { dmac, pass }),
                Action::Compute { end, .. } => self.kernel.schedule(end, Priority::Controller, Ev::ComputeDone),
                Action::Store { pass, at } => self.kernel.schedule(at, Priority::Dmac, Ev::Store { pass }),
                Action::Finished { .. } => {}
            }
        }
    }

    fn start_command(&mut self, dmac: DataType, pass: u64, now: u64) {
        let cmd = dma_command(dmac, &self.layer, &self.tile, pass, &self.layout, self.cfg.bus.max_burst_beats);
        self.start_bursts(dmac, cmd.bursts, now);
    }

    fn start_bursts(&mut self, dmac: DataType, bursts: Vec<BurstRequest>, now: u64) {
        let cmd = DmaCommand { dmac, bursts, pass_index: 0 };
        debug_assert_eq!(self.remaining[dmac.index()], 0, "DMAC restarted while busy");
        self.remaining[dmac.index()] = cmd.bursts.len();
        self.loaded_beats[dmac.index()] += cmd.beats();
        self.bus.load(dmac, cmd.bursts);
        if let Some(log) = self.log.as_mut() {
            log.set_active(dmac, true, now);
        }
        self.want_arb(now);
    }

    fn txn_complete(&mut self, id: TxnId, now: u64) {
        let txn = self.bus.complete(id, now);
        let d = txn.dmac();
        self.remaining[d.index()] -= 1;
        if self.remaining[d.index()] == 0 {
            if let Some(log) = self.log.as_mut() {
                log.set_active(d, false, now);
            }
            if let Some(done) = self.streams.as_mut() {
                done[d.index()] = Some(now);
            } else {
                let acts = match d {
                    DataType::Ofm => self.ctl.store_done(now),
                    _ => self.ctl.load_done(d, now),
                };
                self.apply(acts);
            }
        }
        self.want_arb(now);
    }

    fn enqueue_held(&mut self, now: u64) {
        while let Some(&id) = self.held.front() {
            let burst = self.bus.transaction(id).expect("held transaction").burst;
            if self.dram.enqueue(&burst, id, now).is_err() {
                break;
            }
            self.held.pop_front();
            self.want_dram(now);
        }
    }

    fn dram_step(&mut self, now: u64) {
        if let Some(issued) = self.dram.step(now) {
            if let Some(col) = issued.column {
                match col.direction {
                    Direction::Read => {
                        self.bus.read_data(col.request, col.beats, col.data_done);
                        let next = self.bus.next_channel(now);
                        self.want_channel(next);
                    }
                    Direction::Write if col.last => {
                        self.kernel.schedule(col.data_done + 1, Priority::Bus, Ev::WriteAck(col.request));
                    }
                    Direction::Write => {}
                }
                if col.last {
                    self.enqueue_held(now);
                }
            }
        }
        if let Some(t) = self.dram.next_ready(now) {
            self.want_dram(t);
        }
    }

    fn handle(&mut self, now: u64, ev: Ev) {
        match ev {
            Ev::DramArrive(id) => {
                self.held.push_back(id);
                self.enqueue_held(now);
            }
            Ev::DramWake => {
                if self.dram_wake.fire(now) {
                    self.dram_step(now);
                }
            }
            Ev::Refresh => {
                self.dram.request_refresh();
                self.want_dram(now);
                self.kernel.schedule(now + self.cfg.dram.timing.refresh_period, Priority::Dram, Ev::Refresh);
            }
            Ev::ChannelWake => {
                if self.channel_wake.fire(now) {
                    if let Some(c) = self.bus.start_chunk(now) {
                        if let Some(log) = self.log.as_mut() {
                            log.transfer(c.dmac, c.start, c.beats);
                        }
                        self.kernel.schedule(
                            c.end,
                            Priority::Bus,
                            Ev::ChunkDone { txn: c.txn, last: c.last, dir: c.direction },
                        );
                    }
                    let next = self.bus.next_channel(now);
                    self.want_channel(next);
                }
            }
            Ev::ChunkDone { txn, last, dir } => {
                if last {
                    match dir {
                        Direction::Read => self.txn_complete(txn, now),
                        Direction::Write => self.kernel.schedule(
                            now + self.cfg.bus.request_latency,
                            Priority::Dram,
                            Ev::DramArrive(txn),
                        ),
                    }
                }
            }
            Ev::WriteAck(id) => self.txn_complete(id, now),
            Ev::Arbitrate => {
                if self.arb_wake.fire(now) {
                    if let Some(id) = self.bus.grant(now) {
                        let txn = self.bus.transaction(id).expect("granted transaction");
                        match txn.burst.direction {
                            Direction::Read => {
                                let at = self.bus.read_arrival(id);
                                self.kernel.schedule(at, Priority::Dram, Ev::DramArrive(id));
                            }
                            Direction::Write => {
                                let next = self.bus.next_channel(now);
                                self.want_channel(next);
                            }
                        }
                    }
                    self.want_arb(now + 1);
                }
            }
            Ev::Load { dmac, pass } if self.streams.is_some() => {
                let bursts = std::mem::take(&mut self.pending_streams[dmac.index()]);
                let _ = pass;
                self.start_bursts(dmac, bursts, now);
            }
            Ev::Load { dmac, pass } => self.start_command(dmac, pass, now),
            Ev::Store { pass } => self.start_command(DataType::Ofm, pass, now),
            Ev::ComputeDone => {
                let acts = self.ctl.compute_done(now);
                self.apply(acts);
            }
        }
    }

    fn run(mut self) -> SimOutput {
        let acts = self.ctl.start(0);
        self.apply(acts);
        if self.cfg.dram.refresh {
            self.kernel.schedule(self.cfg.dram.timing.refresh_period, Priority::Dram, Ev::Refresh);
        }
        while self.ctl.finished().is_none() {
            let (now, ev) = self.kernel.pop().expect("simulation stalled before the last store");
            self.handle(now, ev);
        }
        self.finish()
    }

    fn finish(mut self) -> SimOutput {
        let total = self.ctl.finished().expect("finished");
        let mut violations = Violations::from_parts(self.bus.checks(), self.dram.checks(), self.ctl.checks());
        violations.causality = self.kernel.causality_violations();
        let traffic = layer_traffic(&self.layer, &self.tile);
        let expected = [traffic.ifm, traffic.weights, traffic.ofm];
        for d in DataType::ALL {
            let i = d.index();
            if self.loaded_beats[i] != expected[i] || self.bus.delivered_beats(d) != expected[i] {
                violations.beat_conservation += 1;
            }
        }
        let mut passes = self.ctl.take_timelines();
        if let (Some(passes), Some(log)) = (passes.as_mut(), self.log.as_ref()) {
            for p in passes.iter_mut() {
                p.intervals = log.intervals(p.comm_start, p.comm_end);
            }
        }
        let ops = self.layer.ops();
        let pass_count = self.ctl.pass_count();
        let comm_limited = self.ctl.comm_limited_windows();
        SimOutput {
            report: Report {
                model: "simulator".into(),
                layer: self.layer,
                tile: self.tile,
                total_cycles: total,
                ops,
                performance: ops as f64 / total as f64,
                pass_count,
                limit: limit_from_windows(comm_limited, pass_count),
                comm_limited_windows: comm_limited,
                passes,
                dram_commands: Some(self.dram.stats()),
                violations: Some(violations),
            },
            dram_trace: self.dram.take_trace(),
            bus_trace: self.bus.take_trace(),
        }
    }
}

/// Runs one layer to completion.
pub fn simulate(layer: &LayerShape, tile: &TileConfig, cfg: &SystemConfig, opts: SimOptions) -> Result<SimOutput> {
    cfg.check_design(layer, tile)?;
    Ok(System::new(*layer, *tile, *cfg, opts).run())
}

/// Completion cycle of each DMAC stream when the given bursts are pushed
/// through the bus and DRAM with no controller in front. Each entry is
/// `(dmac, bursts, start cycle)`; at most one stream per DMAC.
pub fn run_streams(streams: &[(DataType, Vec<BurstRequest>, u64)], cfg: &SystemConfig) -> [Option<u64>; 3] {
    let layer = LayerShape::new(1, 1, 1, 1, 1, 1, 1, 1).expect("unit layer");
    let tile = TileConfig::constrained(1, 1, 1, 1, 1);
    let mut sys = System::new(layer, tile, *cfg, SimOptions::default());
    sys.streams = Some([None; 3]);
    let mut expected = 0;
    for (dmac, bursts, start) in streams {
        if bursts.is_empty() {
            continue;
        }
        expected += 1;
        sys.pending_streams[dmac.index()] = bursts.clone();
        sys.kernel.schedule(*start, Priority::Dmac, Ev::Load { dmac: *dmac, pass: 0 });
    }
    if cfg.dram.refresh {
        sys.kernel.schedule(cfg.dram.timing.refresh_period, Priority::Dram, Ev::Refresh);
    }
    let done = |s: &System| s.streams.unwrap().iter().filter(|d| d.is_some()).count();
    while done(&sys) < expected {
        let Some((now, ev)) = sys.kernel.pop() else { break };
        sys.handle(now, ev);
    }
    sys.streams.unwrap()
}
