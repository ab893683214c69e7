//! Burst-transaction bus between the DMACs and the DRAM controller.
//!
//! Each DMAC owns a port with a queue of bursts and at most
//! `max_outstanding` transactions in flight. Ports share one address channel,
//! granted round-robin one burst per cycle, and one data channel moving at
//! most one beat per cycle in either direction. Read data returns in issue
//! order per port. Data moves in chunks of up to one DRAM column command.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::{self, Write};
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::memmap::{BurstRequest, DataType, Direction};

pub type TxnId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "BEG_REQ")]
    BegReq,
    #[serde(rename = "END_REQ")]
    EndReq,
    #[serde(rename = "BEG_DAT")]
    BegDat,
    #[serde(rename = "END_DAT")]
    EndDat,
    #[serde(rename = "BEG_RSP")]
    BegRsp,
    #[serde(rename = "END_RSP")]
    EndRsp,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::BegReq => "BEG_REQ",
            Phase::EndReq => "END_REQ",
            Phase::BegDat => "BEG_DAT",
            Phase::EndDat => "END_DAT",
            Phase::BegRsp => "BEG_RSP",
            Phase::EndRsp => "END_RSP",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolPhase {
    pub phase: Phase,
    pub transaction_id: TxnId,
    pub beat_index: u32,
    pub cycle: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BusConfig {
    pub max_outstanding: u32,
    /// DMAC to DRAM-controller path latency after the request handshake.
    pub request_latency: u64,
    /// Cycles from BEG_REQ to END_REQ.
    pub handshake: u64,
    /// Minimum cycles between consecutive issues of one DMAC.
    pub inter_request_gap: u64,
    /// Longest bus burst in beats.
    pub max_burst_beats: u32,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self { max_outstanding: 2, request_latency: 5, handshake: 1, inter_request_gap: 0, max_burst_beats: 16 }
    }
}

impl BusConfig {
    /// Elements carried by one beat. Fixed by the model.
    pub const DATA_WIDTH: u32 = 1;

    pub fn validate(&self) -> Result<(), String> {
        if self.max_outstanding == 0 {
            return Err("max_outstanding must be at least 1".into());
        }
        if self.handshake == 0 {
            return Err("handshake must be at least 1 cycle".into());
        }
        if self.max_burst_beats == 0 {
            return Err("max_burst_beats must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IssueRejected {
    pub dmac: DataType,
    pub in_flight: u32,
}

impl fmt::Display for IssueRejected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} DMAC already has {} transactions in flight", self.dmac, self.in_flight)
    }
}

impl std::error::Error for IssueRejected {}

/// Round-robin arbiter over the three DMAC ports.
#[derive(Debug, Clone, Default)]
pub struct RoundRobin {
    next: usize,
}

impl RoundRobin {
    /// Grants the first eligible port at or after the pointer.
    pub fn arbitrate(&mut self, eligible: [bool; 3]) -> Option<DataType> {
        for k in 0..3 {
            let i = (self.next + k) % 3;
            if eligible[i] {
                self.next = (i + 1) % 3;
                return Some(DataType::ALL[i]);
            }
        }
        None
    }
}

/// Grant sequence for ports with the given backlog, one burst per grant.
pub fn arbitrate(pending: [u32; 3], grants: usize) -> Vec<DataType> {
    let mut rr = RoundRobin::default();
    let mut left = pending;
    let mut out = Vec::with_capacity(grants);
    while out.len() < grants {
        match rr.arbitrate(left.map(|n| n > 0)) {
            Some(d) => {
                left[d.index()] -= 1;
                out.push(d);
            }
            None => break,
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Transaction {
    pub id: TxnId,
    pub burst: BurstRequest,
    pub beg_req: u64,
    pub end_req: u64,
    /// Beats already placed on (or committed to) the data channel.
    beats_sent: u32,
    /// Read chunks returned by DRAM and not yet sent: (beats, ready cycle).
    ready_chunks: VecDeque<(u32, u64)>,
    first_data: Option<u64>,
}

impl Transaction {
    pub fn dmac(&self) -> DataType {
        self.burst.issuing_dmac
    }

    fn data_done(&self) -> bool {
        self.beats_sent == self.burst.beats
    }
}

#[derive(Debug, Clone, Default)]
struct Port {
    queue: VecDeque<BurstRequest>,
    in_flight: u32,
    last_issue: Option<u64>,
    /// In-flight transactions with data still to move, in issue order.
    deliver: VecDeque<TxnId>,
    delivered_beats: u64,
}

/// A chunk placed on the data channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkTransfer {
    pub txn: TxnId,
    pub dmac: DataType,
    pub direction: Direction,
    pub beats: u32,
    pub start: u64,
    pub end: u64,
    /// The transaction's last data beat is in this chunk.
    pub last: bool,
}

/// Bus protocol checks; all stay zero in a correct run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusChecks {
    pub outstanding_exceeded: u64,
    pub phase_order: u64,
    pub channel_overlap: u64,
}

impl BusChecks {
    pub fn total(&self) -> u64 {
        self.outstanding_exceeded + self.phase_order + self.channel_overlap
    }
}

/// In-flight transactions. At most a handful are live, so a linear scan
/// beats hashing.
#[derive(Debug, Default)]
struct TxnTable(Vec<Transaction>);

impl TxnTable {
    fn get(&self, id: &TxnId) -> Option<&Transaction> {
        self.0.iter().find(|t| t.id == *id)
    }

    fn get_mut(&mut self, id: &TxnId) -> Option<&mut Transaction> {
        self.0.iter_mut().find(|t| t.id == *id)
    }

    fn insert(&mut self, txn: Transaction) {
        self.0.push(txn);
    }

    fn remove(&mut self, id: &TxnId) -> Option<Transaction> {
        let i = self.0.iter().position(|t| t.id == *id)?;
        Some(self.0.swap_remove(i))
    }
}

impl Index<&TxnId> for TxnTable {
    type Output = Transaction;

    fn index(&self, id: &TxnId) -> &Transaction {
        self.get(id).expect("unknown transaction")
    }
}

pub struct Bus {
    cfg: BusConfig,
    chunk_beats: u32,
    ports: [Port; 3],
    txns: TxnTable,
    next_id: TxnId,
    rr: RoundRobin,
    addr_free: u64,
    channel_free: u64,
    phases: Option<Vec<ProtocolPhase>>,
    checks: BusChecks,
}

impl Bus {
    /// `chunk_beats` is the beat count of one DRAM column command.
    pub fn new(cfg: BusConfig, chunk_beats: u32) -> Self {
        Self {
            cfg,
            chunk_beats: chunk_beats.max(1),
            ports: Default::default(),
            txns: TxnTable::default(),
            next_id: 0,
            rr: RoundRobin::default(),
            addr_free: 0,
            channel_free: 0,
            phases: None,
            checks: BusChecks::default(),
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.phases = Some(Vec::new());
        self
    }

    pub fn config(&self) -> &BusConfig {
        &self.cfg
    }

    pub fn checks(&self) -> BusChecks {
        self.checks
    }

    pub fn take_trace(&mut self) -> Option<Vec<ProtocolPhase>> {
        self.phases.take()
    }

    pub fn in_flight(&self, dmac: DataType) -> u32 {
        self.ports[dmac.index()].in_flight
    }

    pub fn delivered_beats(&self, dmac: DataType) -> u64 {
        self.ports[dmac.index()].delivered_beats
    }

    pub fn transaction(&self, id: TxnId) -> Option<&Transaction> {
        self.txns.get(&id)
    }

    /// Appends bursts to a port's queue.
    pub fn load(&mut self, dmac: DataType, bursts: impl IntoIterator<Item = BurstRequest>) {
        self.ports[dmac.index()].queue.extend(bursts);
    }

    /// No queued bursts and nothing in flight.
    pub fn port_idle(&self, dmac: DataType) -> bool {
        let p = &self.ports[dmac.index()];
        p.queue.is_empty() && p.in_flight == 0
    }

    fn phase(&mut self, phase: Phase, txn: TxnId, beat: u32, cycle: u64) {
        if let Some(v) = self.phases.as_mut() {
            v.push(ProtocolPhase { phase, transaction_id: txn, beat_index: beat, cycle });
        }
    }

    fn can_issue(&self, i: usize, now: u64) -> bool {
        let p = &self.ports[i];
        !p.queue.is_empty()
            && p.in_flight < self.cfg.max_outstanding
            && p.last_issue.is_none_or(|t| now >= t + self.cfg.inter_request_gap.max(1))
    }

    /// Starts a transaction for `req` at `cycle`, bypassing the port queue.
    pub fn issue(&mut self, req: BurstRequest, cycle: u64) -> Result<TxnId, IssueRejected> {
        let i = req.issuing_dmac.index();
        if self.ports[i].in_flight >= self.cfg.max_outstanding {
            return Err(IssueRejected { dmac: req.issuing_dmac, in_flight: self.ports[i].in_flight });
        }
        Ok(self.start(req, cycle))
    }

    fn start(&mut self, req: BurstRequest, cycle: u64) -> TxnId {
        let i = req.issuing_dmac.index();
        let id = self.next_id;
        self.next_id += 1;
        let port = &mut self.ports[i];
        port.in_flight += 1;
        port.last_issue = Some(cycle);
        port.deliver.push_back(id);
        if port.in_flight > self.cfg.max_outstanding {
            self.checks.outstanding_exceeded += 1;
        }
        let end_req = cycle + self.cfg.handshake;
        self.addr_free = self.addr_free.max(cycle + 1);
        let mut txn = Transaction {
            id,
            burst: req,
            beg_req: cycle,
            end_req,
            beats_sent: 0,
            ready_chunks: VecDeque::new(),
            first_data: None,
        };
        if req.direction == Direction::Write {
            // Write data is available right after the request handshake.
            txn.ready_chunks.push_back((req.beats, end_req + 1));
        }
        self.txns.insert(txn);
        self.phase(Phase::BegReq, id, 0, cycle);
        self.phase(Phase::EndReq, id, 0, end_req);
        id
    }

    /// Cycle a read request reaches the DRAM queue.
    pub fn read_arrival(&self, id: TxnId) -> u64 {
        self.txns[&id].end_req + self.cfg.request_latency
    }

    /// Round-robin grant of the address channel at `now`.
    pub fn grant(&mut self, now: u64) -> Option<TxnId> {
        if now < self.addr_free {
            return None;
        }
        let eligible = [0, 1, 2].map(|i| self.can_issue(i, now));
        let dmac = self.rr.arbitrate(eligible)?;
        let req = self.ports[dmac.index()].queue.pop_front().expect("eligible port has a burst");
        Some(self.start(req, now))
    }

    /// Earliest cycle at or after `now` when a grant could happen, if any
    /// port has work.
    pub fn next_grant(&self, now: u64) -> Option<u64> {
        (0..3)
            .filter_map(|i| {
                let p = &self.ports[i];
                if p.queue.is_empty() || p.in_flight >= self.cfg.max_outstanding {
                    return None;
                }
                Some(p.last_issue.map_or(0, |t| t + self.cfg.inter_request_gap.max(1)))
            })
            .min()
            .map(|t| t.max(self.addr_free).max(now))
    }

    /// DRAM returned `beats` read beats of `id`, available from `ready`.
    pub fn read_data(&mut self, id: TxnId, beats: u32, ready: u64) {
        self.txns.get_mut(&id).expect("unknown transaction").ready_chunks.push_back((beats, ready));
    }

    /// Head chunk of each port, with its ready cycle.
    fn heads(&self) -> impl Iterator<Item = (TxnId, u64)> + '_ {
        self.ports.iter().filter_map(move |p| {
            let id = *p.deliver.front()?;
            let &(_, ready) = self.txns[&id].ready_chunks.front()?;
            Some((id, ready))
        })
    }

    /// Earliest cycle at or after `now` the data channel could start a chunk.
    pub fn next_channel(&self, now: u64) -> Option<u64> {
        self.heads().map(|(_, r)| r).min().map(|r| r.max(self.channel_free).max(now))
    }

    /// Puts the oldest ready head chunk on the data channel at `now`.
    pub fn start_chunk(&mut self, now: u64) -> Option<ChunkTransfer> {
        if now < self.channel_free {
            return None;
        }
        let (id, _) = self.heads().filter(|&(_, r)| r <= now).min_by_key(|&(id, r)| (r, id))?;
        let chunk_beats = self.chunk_beats;
        let txn = self.txns.get_mut(&id).expect("head transaction");
        let (avail, ready) = txn.ready_chunks.pop_front().expect("head chunk");
        let beats = avail.min(chunk_beats);
        if avail > beats {
            txn.ready_chunks.push_front((avail - beats, ready));
        }
        let first_beat = txn.beats_sent;
        txn.beats_sent += beats;
        if txn.first_data.is_none() {
            txn.first_data = Some(now);
            if now <= txn.end_req {
                self.checks.phase_order += 1;
            }
        }
        let (dir, dmac, last) = (txn.burst.direction, txn.dmac(), txn.data_done());
        if last {
            self.ports[dmac.index()].deliver.pop_front();
        }
        self.channel_free = now + beats as u64;
        self.ports[dmac.index()].delivered_beats += beats as u64;
        if self.phases.is_some() {
            let (beg, end) = match dir {
                Direction::Read => (Phase::BegRsp, Phase::EndRsp),
                Direction::Write => (Phase::BegDat, Phase::EndDat),
            };
            for k in 0..beats {
                self.phase(beg, id, first_beat + k, now + k as u64);
                self.phase(end, id, first_beat + k, now + k as u64 + 1);
            }
        }
        Some(ChunkTransfer { txn: id, dmac, direction: dir, beats, start: now, end: now + beats as u64, last })
    }

    /// Retires a transaction: read data fully delivered or write acknowledged.
    pub fn complete(&mut self, id: TxnId, now: u64) -> Transaction {
        let txn = self.txns.remove(&id).expect("unknown transaction");
        if !txn.data_done() {
            self.checks.phase_order += 1;
        }
        if txn.burst.direction == Direction::Write {
            // B-channel acknowledgment closes a write.
            self.phase(Phase::BegRsp, id, txn.burst.beats, now.saturating_sub(1));
            self.phase(Phase::EndRsp, id, txn.burst.beats, now);
        }
        let port = &mut self.ports[txn.dmac().index()];
        port.in_flight -= 1;
        txn
    }
}

/// Per-beat phases of a finished transaction, given its chunk start cycles.
///
/// Reads yield one BEG_RSP/END_RSP pair per beat. Writes yield one
/// BEG_DAT/END_DAT pair per beat followed by the acknowledgment pair.
pub fn deliver_beats(txn: &Transaction, chunks: &[(u64, u32)], ack: Option<u64>) -> Vec<ProtocolPhase> {
    let mut out = vec![
        ProtocolPhase { phase: Phase::BegReq, transaction_id: txn.id, beat_index: 0, cycle: txn.beg_req },
        ProtocolPhase { phase: Phase::EndReq, transaction_id: txn.id, beat_index: 0, cycle: txn.end_req },
    ];
    let (beg, end) = match txn.burst.direction {
        Direction::Read => (Phase::BegRsp, Phase::EndRsp),
        Direction::Write => (Phase::BegDat, Phase::EndDat),
    };
    let mut beat = 0;
    for &(start, n) in chunks {
        for k in 0..n {
            let c = start + k as u64;
            out.push(ProtocolPhase { phase: beg, transaction_id: txn.id, beat_index: beat, cycle: c });
            out.push(ProtocolPhase { phase: end, transaction_id: txn.id, beat_index: beat, cycle: c + 1 });
            beat += 1;
        }
    }
    if let (Direction::Write, Some(at)) = (txn.burst.direction, ack) {
        out.push(ProtocolPhase { phase: Phase::BegRsp, transaction_id: txn.id, beat_index: beat, cycle: at - 1 });
        out.push(ProtocolPhase { phase: Phase::EndRsp, transaction_id: txn.id, beat_index: beat, cycle: at });
    }
    out
}

/// Checks per-transaction phase order: BEG_REQ < END_REQ < first data
/// phase, beats in order, and BEG before END for each beat. Returns the
/// number of offending transactions.
pub fn phase_order_violations(phases: &[ProtocolPhase]) -> u64 {
    let mut by_txn: HashMap<TxnId, Vec<&ProtocolPhase>> = HashMap::new();
    for p in phases {
        by_txn.entry(p.transaction_id).or_default().push(p);
    }
    let mut bad = 0;
    for list in by_txn.values() {
        let find = |ph: Phase| list.iter().find(|p| p.phase == ph).map(|p| p.cycle);
        let (Some(beg), Some(end)) = (find(Phase::BegReq), find(Phase::EndReq)) else {
            bad += 1;
            continue;
        };
        let mut ok = beg < end;
        let data: Vec<_> = list
            .iter()
            .filter(|p| matches!(p.phase, Phase::BegDat | Phase::BegRsp | Phase::EndDat | Phase::EndRsp))
            .collect();
        if let Some(first) = data.iter().map(|p| p.cycle).min() {
            ok &= first > end;
        }
        let mut last_beat_start: Option<(u32, u64)> = None;
        for p in data.iter().filter(|p| matches!(p.phase, Phase::BegDat | Phase::BegRsp)) {
            if let Some((b, c)) = last_beat_start {
                ok &= p.beat_index > b && p.cycle >= c;
            }
            last_beat_start = Some((p.beat_index, p.cycle));
        }
        if !ok {
            bad += 1;
        }
    }
    bad
}

pub fn write_phase_trace_csv<W: Write>(phases: &[ProtocolPhase], mut out: W) -> io::Result<()> {
    writeln!(out, "cycle,txn,phase,beat")?;
    for p in phases {
        writeln!(out, "{},{},{},{}", p.cycle, p.transaction_id, p.phase, p.beat_index)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn burst(dmac: DataType, beats: u32) -> BurstRequest {
        BurstRequest { dataset_id: 0, start_addr: 0, beats, direction: dmac.direction(), issuing_dmac: dmac }
    }

    #[test]
    fn first_request_reaches_dram_after_handshake_and_latency() {
        let mut bus = Bus::new(BusConfig::default(), 8);
        let id = bus.issue(burst(DataType::Ifm, 16), 0).unwrap();
        assert_eq!(bus.read_arrival(id), 6);
    }

    #[test]
    fn third_issue_rejected() {
        let mut bus = Bus::new(BusConfig::default(), 8);
        bus.issue(burst(DataType::Ifm, 16), 0).unwrap();
        bus.issue(burst(DataType::Ifm, 16), 1).unwrap();
        let err = bus.issue(burst(DataType::Ifm, 16), 2).unwrap_err();
        assert_eq!(err.in_flight, 2);
    }

    #[test]
    fn grants_alternate_between_two_ports() {
        let order = arbitrate([5, 5, 0], 4);
        assert_eq!(order, vec![DataType::Ifm, DataType::Weight, DataType::Ifm, DataType::Weight]);
        assert!(arbitrate([3, 0, 0], 3).iter().all(|&d| d == DataType::Ifm));
        let three = arbitrate([9, 9, 9], 6);
        for d in DataType::ALL {
            assert_eq!(three.iter().filter(|&&x| x == d).count(), 2);
        }
    }

    #[test]
    fn reads_return_in_issue_order() {
        let mut bus = Bus::new(BusConfig::default(), 8);
        let a = bus.issue(burst(DataType::Ifm, 16), 0).unwrap();
        let b = bus.issue(burst(DataType::Ifm, 16), 1).unwrap();
        // The younger transaction's data comes back first.
        bus.read_data(b, 8, 20);
        bus.read_data(b, 8, 24);
        bus.read_data(a, 8, 30);
        assert_eq!(bus.next_channel(20), Some(30));
        assert!(bus.start_chunk(25).is_none());
        bus.read_data(a, 8, 34);
        let mut t = 30;
        let mut order = Vec::new();
        while let Some(c) = bus.start_chunk(t) {
            order.push(c.txn);
            t = c.end.max(bus.next_channel(c.end).unwrap_or(c.end));
        }
        assert_eq!(order, vec![a, a, b, b]);
    }

    #[test]
    fn write_phases_per_beat_then_ack() {
        let mut bus = Bus::new(BusConfig::default(), 8).with_trace();
        let id = bus.issue(burst(DataType::Ofm, 8), 0).unwrap();
        let chunk = bus.start_chunk(2).unwrap();
        assert_eq!((chunk.start, chunk.beats, chunk.last), (2, 8, true));
        bus.complete(id, 40);
        let phases = bus.take_trace().unwrap();
        let data = phases.iter().filter(|p| p.phase == Phase::BegDat).count();
        let ends = phases.iter().filter(|p| p.phase == Phase::EndDat).count();
        assert_eq!((data, ends), (8, 8));
        assert_eq!(phases.last().unwrap().phase, Phase::EndRsp);
        assert_eq!(phase_order_violations(&phases), 0);
    }

    #[test]
    fn sixteen_beat_read_yields_sixteen_response_pairs() {
        let mut bus = Bus::new(BusConfig::default(), 8);
        let id = bus.issue(burst(DataType::Weight, 16), 0).unwrap();
        let txn = bus.complete_for_test(id);
        let phases = deliver_beats(&txn, &[(20, 8), (24, 8)], None);
        assert_eq!(phases.iter().filter(|p| p.phase == Phase::BegRsp).count(), 16);
        assert_eq!(phases.iter().filter(|p| p.phase == Phase::EndRsp).count(), 16);
    }

    impl Bus {
        fn complete_for_test(&mut self, id: TxnId) -> Transaction {
            self.txns[&id].clone()
        }
    }

    #[test]
    fn serialized_with_one_outstanding() {
        let cfg = BusConfig { max_outstanding: 1, ..BusConfig::default() };
        let mut bus = Bus::new(cfg, 8);
        bus.load(DataType::Ifm, [burst(DataType::Ifm, 8), burst(DataType::Ifm, 8)]);
        let a = bus.grant(0).unwrap();
        assert!(bus.grant(1).is_none());
        assert_eq!(bus.next_grant(1), None);
        bus.read_data(a, 8, 20);
        bus.start_chunk(20).unwrap();
        bus.complete(a, 28);
        assert_eq!(bus.next_grant(28), Some(28));
        assert!(bus.grant(28).is_some());
    }
}
