//! Analytic performance estimation.
//!
//! The proposed model works per DMA interval:
//!
//! 1. split each tensor's contiguous datasets into bus bursts;
//! 2. time one dataset from groups of `max_outstanding` bursts, each group
//!    bounded by DRAM execution, request turnaround and data beats;
//! 3. turn those times into per-DMAC bandwidths, sharing the data channel
//!    among the running DMACs;
//! 4. end the interval when the DMAC with the fewest bursts left finishes,
//!    moving an equal number of bursts for every DMAC;
//! 5. update the remaining amounts and continue with the next interval.
//!
//! The interval loop is driven by the same [`Controller`] as the simulator,
//! so window structure, setup overhead and store scheduling are identical.
//!
//! The conventional model charges a fixed number of cycles per element.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::accelerator::{Action, Controller, DmaInterval, PassTimeline};
use crate::bus::BusConfig;
use crate::dram::DramConfig;
use crate::error::Result;
use crate::memmap::{burst_lengths, DataType, Direction};
use crate::sim::report::{limit_from_windows, Limit, Report};
use crate::sim::SystemConfig;
use crate::workload::{compute_cycles, pass_tile, LayerShape, PassTile, TileConfig, TileGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    DramLimited,
    BusLimited,
}

/// Contiguous datasets of one tensor in one pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub data_type: DataType,
    /// Elements per dataset (C).
    pub length: u64,
    /// Datasets in the pass.
    pub count: u64,
    /// Burst lengths of one dataset; their count is Bc.
    pub bursts: Vec<u32>,
}

impl DatasetProfile {
    pub fn bursts_per_dataset(&self) -> u32 {
        self.bursts.len() as u32
    }

    pub fn amount(&self) -> u64 {
        self.length * self.count
    }
}

/// Dataset shape of `data_type` for a pass, mirroring the memory layout:
/// rows merge into one run only when the tile spans the full row.
pub fn dataset_profile(
    data_type: DataType,
    layer: &LayerShape,
    pass: &PassTile,
    max_burst_beats: u32,
) -> DatasetProfile {
    let (length, count) = match data_type {
        DataType::Ifm => {
            let (r0, r1) = pass.ifm_rows(layer);
            let (c0, c1) = pass.ifm_cols(layer);
            let (rows, cols) = ((r1 - r0) as u64, (c1 - c0) as u64);
            let planes = pass.tb as u64 * pass.tc as u64;
            if cols == layer.in_width as u64 {
                (rows * cols, planes)
            } else {
                (cols, planes * rows)
            }
        }
        DataType::Weight => {
            let rs = layer.filter_height as u64 * layer.filter_width as u64;
            (pass.tc as u64 * rs, pass.tm as u64)
        }
        DataType::Ofm => {
            let planes = pass.tb as u64 * pass.tm as u64;
            if pass.tf == layer.out_width {
                (pass.te as u64 * pass.tf as u64, planes)
            } else {
                (pass.tf as u64, planes * pass.te as u64)
            }
        }
    };
    DatasetProfile { data_type, length, count, bursts: burst_lengths(length, max_burst_beats) }
}

/// Step 1: per-tensor dataset size and burst split for the first pass.
pub fn step1_burst_lengths(layer: &LayerShape, tile: &TileConfig, bus: &BusConfig) -> [DatasetProfile; 3] {
    let pass = pass_tile(layer, tile, 0);
    DataType::ALL.map(|d| dataset_profile(d, layer, &pass, bus.max_burst_beats))
}

/// Timing of one group of outstanding bursts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupTiming {
    pub beats: u32,
    /// DRAM busy time: activate/precharge episodes plus column commands.
    pub t_exec: f64,
    /// Issue of the group's first burst to its completion.
    pub turnaround: f64,
    /// Group period in a steady stream.
    pub period: f64,
}

/// Result of step 2 for one dataset shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTiming {
    pub regime: Regime,
    /// Steady-state time to move one dataset when running alone.
    pub t_dataset: f64,
    /// Outstanding groups per dataset.
    pub groups_per_dataset: f64,
    /// Latency between draining the last group and the command completing.
    pub tail: f64,
    pub groups: Vec<GroupTiming>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Issue-to-completion time of a lone burst that needs a row activation.
pub fn burst_turnaround(beats: u32, direction: Direction, dram: &DramConfig, bus: &BusConfig) -> f64 {
    let t = &dram.timing;
    let cols = beats.div_ceil(dram.burst_beats) as u64;
    let v = match direction {
        Direction::Read => bus.handshake + bus.request_latency + t.t_rcd + t.t_cl + t.t_burst + beats as u64,
        // Data follows the request, then the path latency, the DRAM write and the acknowledgment.
        Direction::Write => {
            bus.handshake
                + 1
                + beats as u64
                + bus.request_latency
                + t.t_rcd
                + (cols - 1) * t.t_burst
                + t.t_cl
                + t.t_burst
                + 1
        }
    };
    v as f64
}

/// Step 2: duration of a contiguous dataset with the given burst lengths.
///
/// Datasets are assumed to stream back to back, so outstanding groups are
/// formed over the repeating burst sequence and may straddle datasets.
pub fn step2_dataset_duration(
    bursts: &[u32],
    direction: Direction,
    dram: &DramConfig,
    bus: &BusConfig,
) -> DatasetTiming {
    assert!(!bursts.is_empty(), "dataset without bursts");
    let t = &dram.timing;
    let mo = bus.max_outstanding as usize;
    // Smallest number of datasets whose bursts fill whole groups.
    let k = mo / gcd(bursts.len(), mo);
    let stream: Vec<u32> = bursts.iter().copied().cycle().take(bursts.len() * k).collect();
    let mut groups: Vec<GroupTiming> = stream
        .chunks(mo)
        .map(|g| {
            let ncol: u64 = g.iter().map(|&b| b.div_ceil(dram.burst_beats) as u64).sum();
            let episodes = ncol.div_ceil(dram.close_after as u64);
            let beats: u32 = g.iter().sum();
            let t_exec = (episodes * (t.t_rcd + t.t_rp) + ncol * t.t_burst) as f64;
            GroupTiming { beats, t_exec, turnaround: burst_turnaround(g[0], direction, dram, bus), period: 0.0 }
        })
        .collect();
    // The gap before a group is the part of the previous group's turnaround
    // not hidden behind its DRAM execution.
    let n = groups.len();
    let mut regime = Regime::DramLimited;
    for i in 0..n {
        let prev = groups[(i + n - 1) % n];
        let gap = (prev.turnaround - prev.t_exec).max(0.0);
        if gap > 0.0 {
            regime = Regime::BusLimited;
        }
        let g = &mut groups[i];
        g.period = (g.t_exec + gap).max(g.beats as f64);
    }
    let total: f64 = groups.iter().map(|g| g.period).sum();
    let last = groups[n - 1];
    let rest: u32 = stream[(n - 1) * mo..].iter().skip(1).sum();
    DatasetTiming {
        regime,
        t_dataset: total / k as f64,
        groups_per_dataset: n as f64 / k as f64,
        tail: (last.turnaround + rest as f64 - last.period).max(0.0),
        groups,
    }
}

/// How running DMACs divide the shared data path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareModel {
    /// Every group waits a common extra time so that the summed rate fits
    /// the data channel.
    #[default]
    Contention,
    /// `U = C / (D * T)`: the active DMACs are fully serialized.
    Serialized,
}

/// Step 3: per-DMAC bandwidth for the active set. `streams` holds each
/// active DMAC's dataset size and step-2 timing.
pub fn step3_bandwidth(streams: &[(f64, &DatasetTiming)], model: ShareModel, capacity: f64) -> Vec<f64> {
    let d = streams.len() as f64;
    match model {
        ShareModel::Serialized => streams.iter().map(|(c, t)| (c / (d * t.t_dataset)).min(1.0)).collect(),
        ShareModel::Contention => {
            let rate = |w: f64| -> Vec<f64> {
                streams.iter().map(|(c, t)| (c / (t.t_dataset + t.groups_per_dataset * w)).min(1.0)).collect()
            };
            let total = |w: f64| rate(w).iter().sum::<f64>();
            if total(0.0) <= capacity {
                return rate(0.0);
            }
            let mut hi = 1.0;
            while total(hi) > capacity {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if total(mid) > capacity {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            rate(hi)
        }
    }
}

/// Inputs and result of one interval step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub c: Vec<f64>,
    pub bc: Vec<f64>,
    pub d: usize,
    /// Amount each DMAC moves in the interval.
    pub a: Vec<f64>,
    pub duration: f64,
}

/// Step 4: remaining amounts in bursts `R = P / C * Bc`, the interval moves
/// `m = min R` bursts for every DMAC, i.e. `A = m / Bc * C`, and lasts
/// `max A / U`. Returns the estimate with `p` already reduced by `a`.
pub fn step4_interval_duration(u: &[f64], p: &[f64], c: &[f64], bc: &[f64]) -> IntervalEstimate {
    let d = u.len();
    assert!(p.len() == d && c.len() == d && bc.len() == d, "vectors differ in length");
    assert!(d > 0, "no active DMAC");
    let r: Vec<f64> = (0..d).map(|i| p[i] / c[i] * bc[i]).collect();
    let m = r.iter().copied().fold(f64::INFINITY, f64::min);
    let a: Vec<f64> = (0..d).map(|i| m / bc[i] * c[i]).collect();
    let duration = (0..d).map(|i| a[i] / u[i]).fold(0.0, f64::max);
    IntervalEstimate {
        u: u.to_vec(),
        p: (0..d).map(|i| p[i] - a[i]).collect(),
        c: c.to_vec(),
        bc: bc.to_vec(),
        d,
        a,
        duration,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateOptions {
    pub timelines: bool,
    pub share: ShareModel,
    /// Data-channel capacity in elements per cycle.
    pub capacity: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { timelines: false, share: ShareModel::Contention, capacity: 1.0 }
    }
}

/// One DMAC command being drained.
#[derive(Debug, Clone)]
struct Stream {
    dmac: DataType,
    remaining: f64,
    c: f64,
    bc: f64,
    timing: std::rc::Rc<DatasetTiming>,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    start: f64,
    end: f64,
    mask: u8,
    beats: [f64; 3],
    regime: Option<Regime>,
}

type TimingKey = (DataType, u64);

/// Start, end, active mask, beats per DMAC and regime of a merged segment run.
type Span = (f64, f64, u8, [f64; 3], Option<Regime>);

struct Fluid<'a> {
    layer: &'a LayerShape,
    tile: &'a TileConfig,
    cfg: &'a SystemConfig,
    opts: EstimateOptions,
    timings: HashMap<TimingKey, std::rc::Rc<DatasetTiming>>,
    draining: Vec<Stream>,
    /// (completion time, dmac) of commands in their tail latency.
    tails: Vec<(f64, DataType)>,
    /// Pending controller work: (time, order, action).
    pending: Vec<(f64, u8, Pending)>,
    segments: Vec<Segment>,
    now: f64,
}

#[derive(Debug, Clone, Copy)]
enum Pending {
    Start { dmac: DataType, pass: u64 },
    ComputeDone,
}

fn mask_of(dmacs: impl Iterator<Item = DataType>) -> u8 {
    dmacs.fold(0, |m, d| m | (1 << d.index()))
}

impl<'a> Fluid<'a> {
    fn timing(&mut self, dmac: DataType, profile: &DatasetProfile) -> std::rc::Rc<DatasetTiming> {
        let (dram, bus) = (&self.cfg.dram, &self.cfg.bus);
        self.timings
            .entry((dmac, profile.length))
            .or_insert_with(|| std::rc::Rc::new(step2_dataset_duration(&profile.bursts, dmac.direction(), dram, bus)))
            .clone()
    }

    fn apply(&mut self, actions: Vec<Action>) {
        for a in actions {
            match a {
                Action::Load { dmac, pass, at } => self.pending.push((at as f64, 1, Pending::Start { dmac, pass })),
                Action::Store { pass, at } => {
                    self.pending.push((at as f64, 1, Pending::Start { dmac: DataType::Ofm, pass }))
                }
                Action::Compute { end, .. } => self.pending.push((end as f64, 2, Pending::ComputeDone)),
                Action::Finished { .. } => {}
            }
        }
    }

    fn start(&mut self, dmac: DataType, pass: u64) {
        let p = pass_tile(self.layer, self.tile, pass);
        let profile = dataset_profile(dmac, self.layer, &p, self.cfg.bus.max_burst_beats);
        let timing = self.timing(dmac, &profile);
        self.draining.push(Stream {
            dmac,
            remaining: profile.amount() as f64,
            c: profile.length as f64,
            bc: profile.bursts_per_dataset() as f64,
            timing,
        });
    }

    fn active_mask(&self) -> u8 {
        mask_of(self.draining.iter().map(|s| s.dmac).chain(self.tails.iter().map(|t| t.1)))
    }

    fn record(&mut self, end: f64, beats: [f64; 3], regime: Option<Regime>) {
        if !self.opts.timelines || end <= self.now {
            return;
        }
        let mask = self.active_mask();
        self.segments.push(Segment { start: self.now, end, mask, beats, regime });
    }

    /// Advances time to the next event, draining streams on the way.
    fn advance(&mut self, ctl: &mut Controller) {
        let next_pending = self.pending.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let next_tail = self.tails.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
        let horizon = next_pending.min(next_tail);

        if !self.draining.is_empty() {
            let pairs: Vec<(f64, &DatasetTiming)> = self.draining.iter().map(|s| (s.c, &*s.timing)).collect();
            let u = step3_bandwidth(&pairs, self.opts.share, self.opts.capacity);
            let p: Vec<f64> = self.draining.iter().map(|s| s.remaining).collect();
            let c: Vec<f64> = self.draining.iter().map(|s| s.c).collect();
            let bc: Vec<f64> = self.draining.iter().map(|s| s.bc).collect();
            let est = step4_interval_duration(&u, &p, &c, &bc);
            let regime = if self.draining.iter().any(|s| s.timing.regime == Regime::BusLimited) {
                Regime::BusLimited
            } else {
                Regime::DramLimited
            };
            let mut beats = [0.0; 3];
            if self.now + est.duration <= horizon {
                let end = self.now + est.duration;
                for (i, s) in self.draining.iter_mut().enumerate() {
                    beats[s.dmac.index()] = est.a[i];
                    s.remaining = est.p[i];
                }
                self.record(end, beats, Some(regime));
                self.now = end;
                let (done, keep): (Vec<Stream>, Vec<Stream>) =
                    self.draining.drain(..).partition(|s| s.remaining <= 1e-6 * s.c.max(1.0));
                self.draining = keep;
                for s in done {
                    self.tails.push((self.now + s.timing.tail, s.dmac));
                }
                return;
            }
            let dt = horizon - self.now;
            for (i, s) in self.draining.iter_mut().enumerate() {
                let moved = (u[i] * dt).min(s.remaining);
                beats[s.dmac.index()] = moved;
                s.remaining -= moved;
            }
            self.record(horizon, beats, Some(regime));
        } else {
            self.record(horizon, [0.0; 3], None);
        }
        self.now = horizon;
        self.fire(ctl);
    }

    /// Handles every event due at `now`.
    fn fire(&mut self, ctl: &mut Controller) {
        let now = self.now;
        let cyc = now.ceil() as u64;
        let mut i = 0;
        let mut due_tails = Vec::new();
        while i < self.tails.len() {
            if self.tails[i].0 <= now {
                due_tails.push(self.tails.swap_remove(i).1);
            } else {
                i += 1;
            }
        }
        due_tails.sort_by_key(|d| d.index());
        for d in due_tails {
            let acts = match d {
                DataType::Ofm => ctl.store_done(cyc),
                _ => ctl.load_done(d, cyc),
            };
            self.apply(acts);
        }
        self.pending.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        while let Some(&(t, _, p)) = self.pending.first() {
            if t > now {
                break;
            }
            self.pending.remove(0);
            match p {
                Pending::Start { dmac, pass } => self.start(dmac, pass),
                Pending::ComputeDone => {
                    let acts = ctl.compute_done(cyc);
                    self.apply(acts);
                }
            }
            self.pending.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
    }

    fn intervals(&self, start: u64, end: u64) -> Vec<DmaInterval> {
        let (s, e) = (start as f64, end as f64);
        let first = self.segments.partition_point(|g| g.end <= s);
        let mut out: Vec<DmaInterval> = Vec::new();
        let mut acc: Option<Span> = None;
        let flush = |acc: Span, out: &mut Vec<DmaInterval>| {
            let (a, b, mask, beats, regime) = acc;
            let (lo, hi) = (a.round() as u64, b.round() as u64);
            if hi <= lo {
                return;
            }
            let beats = beats.map(|x| x.round() as u64);
            out.push(DmaInterval {
                active_dmacs: DataType::ALL.into_iter().filter(|d| mask & (1 << d.index()) != 0).collect(),
                start: lo,
                end: hi,
                beats_transferred: beats,
                bandwidth: beats.iter().sum::<u64>() as f64 / (hi - lo) as f64,
                regime,
            });
        };
        for g in &self.segments[first..] {
            if g.start >= e {
                break;
            }
            let lo = g.start.max(s);
            let hi = g.end.min(e);
            let frac = if g.end > g.start { (hi - lo) / (g.end - g.start) } else { 0.0 };
            let beats = g.beats.map(|b| b * frac);
            acc = match acc {
                Some((a, _, m, bt, r)) if m == g.mask => {
                    Some((a, hi, m, [bt[0] + beats[0], bt[1] + beats[1], bt[2] + beats[2]], r.or(g.regime)))
                }
                Some(prev) => {
                    flush(prev, &mut out);
                    Some((lo, hi, g.mask, beats, g.regime))
                }
                None => Some((lo, hi, g.mask, beats, g.regime)),
            };
        }
        if let Some(prev) = acc {
            flush(prev, &mut out);
        }
        out
    }
}

/// Proposed estimate with default options.
pub fn estimate(layer: &LayerShape, tile: &TileConfig, cfg: &SystemConfig) -> Result<Report> {
    estimate_with(layer, tile, cfg, EstimateOptions::default())
}

pub fn estimate_with(
    layer: &LayerShape,
    tile: &TileConfig,
    cfg: &SystemConfig,
    opts: EstimateOptions,
) -> Result<Report> {
    cfg.check_design(layer, tile)?;
    let mut ctl = Controller::new(*layer, *tile, cfg.accelerator, opts.timelines);
    let mut fluid = Fluid {
        layer,
        tile,
        cfg,
        opts,
        timings: HashMap::new(),
        draining: Vec::new(),
        tails: Vec::new(),
        pending: Vec::new(),
        segments: Vec::new(),
        now: 0.0,
    };
    let acts = ctl.start(0);
    fluid.apply(acts);
    fluid.fire(&mut ctl);
    while ctl.finished().is_none() {
        fluid.advance(&mut ctl);
    }
    let total = ctl.finished().expect("finished");
    let mut passes = ctl.take_timelines();
    if let Some(passes) = passes.as_mut() {
        for p in passes.iter_mut() {
            p.intervals = fluid.intervals(p.comm_start, p.comm_end);
        }
    }
    let ops = layer.ops();
    let pass_count = ctl.pass_count();
    let comm_limited = ctl.comm_limited_windows();
    Ok(Report {
        model: "proposed".into(),
        layer: *layer,
        tile: *tile,
        total_cycles: total,
        ops,
        performance: ops as f64 / total as f64,
        pass_count,
        limit: limit_from_windows(comm_limited, pass_count),
        comm_limited_windows: comm_limited,
        passes,
        dram_commands: None,
        violations: None,
    })
}

/// Fixed cycles-per-element model. OFM stores are spread evenly over the
/// passes of their output tile; windows overlap loads with the previous
/// pass's compute.
pub fn estimate_conventional(
    layer: &LayerShape,
    tile: &TileConfig,
    cfg: &SystemConfig,
    scale: [f64; 3],
) -> Result<Report> {
    cfg.check_design(layer, tile)?;
    if !scale.iter().all(|s| s.partial_cmp(&0.0) == Some(std::cmp::Ordering::Greater)) {
        return Err(crate::error::ConfigError::Invalid("scale factors must be positive".into()).into());
    }
    let grid = TileGrid::new(layer, tile);
    let pass_count = grid.pass_count();
    let nc = grid.nc as f64;
    let fill = cfg.accelerator.pipeline_fill;
    let mut t = 0.0f64;
    let mut prev_compute = 0.0f64;
    let mut comm_limited = 0;
    for k in 0..=pass_count {
        let (comm, compute) = if k < pass_count {
            let p = pass_tile(layer, tile, k);
            let ofm = p.ofm_amount() as f64 / nc;
            let c = scale[0] * p.ifm_amount(layer) as f64 + scale[1] * p.weight_amount(layer) as f64 + scale[2] * ofm;
            (c, compute_cycles(layer, tile, &p, fill) as f64)
        } else {
            (0.0, 0.0)
        };
        if k >= 1 && k < pass_count && comm > prev_compute {
            comm_limited += 1;
        }
        t += comm.max(prev_compute);
        prev_compute = compute;
    }
    let total = t.ceil().max(1.0) as u64;
    let ops = layer.ops();
    let model = if scale == [1.0; 3] { "conventional" } else { "scaled" };
    Ok(Report {
        model: model.into(),
        layer: *layer,
        tile: *tile,
        total_cycles: total,
        ops,
        performance: ops as f64 / total as f64,
        pass_count,
        limit: limit_from_windows(comm_limited, pass_count),
        comm_limited_windows: comm_limited,
        passes: None,
        dram_commands: None,
        violations: None,
    })
}

/// Named estimator variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Proposed,
    Conventional,
    ScaledUniform,
    ScaledPerType,
    Scaled([f64; 3]),
}

impl Model {
    pub const UNIFORM_SCALE: [f64; 3] = [1.75, 1.75, 1.75];
    pub const PER_TYPE_SCALE: [f64; 3] = [1.6, 2.7, 1.0];

    pub fn name(&self) -> String {
        match self {
            Model::Proposed => "proposed".into(),
            Model::Conventional => "conventional".into(),
            Model::ScaledUniform => "scaled_uniform".into(),
            Model::ScaledPerType => "scaled_per_type".into(),
            Model::Scaled(s) => format!("scaled({},{},{})", s[0], s[1], s[2]),
        }
    }

    pub fn scale(&self) -> Option<[f64; 3]> {
        match self {
            Model::Proposed => None,
            Model::Conventional => Some([1.0; 3]),
            Model::ScaledUniform => Some(Self::UNIFORM_SCALE),
            Model::ScaledPerType => Some(Self::PER_TYPE_SCALE),
            Model::Scaled(s) => Some(*s),
        }
    }

    pub fn evaluate(&self, layer: &LayerShape, tile: &TileConfig, cfg: &SystemConfig) -> Result<Report> {
        let mut r = match self.scale() {
            None => estimate(layer, tile, cfg)?,
            Some(s) => estimate_conventional(layer, tile, cfg, s)?,
        };
        r.model = self.name();
        Ok(r)
    }
}

/// Regime of the pipeline given only per-pass windows; exposed for callers
/// that build their own timelines.
pub fn limit_of(passes: &[PassTimeline]) -> Limit {
    let comm = passes.iter().skip(1).filter(|p| p.comm_cycles() > p.compute_cycles()).count() as u64;
    limit_from_windows(comm, passes.len() as u64)
}
