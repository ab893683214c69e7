//! Bank-level DRAM controller model.
//!
//! One rank of `banks` banks behind a single command bus and a single data
//! bus. Requests are bus bursts, decomposed into column-command units of at
//! most `burst_beats` beats. Scheduling is FR-FCFS over the request queue:
//! ready row hits first, then activates, then precharges, oldest request
//! first within each class. Rows follow an open-page policy with two closing
//! rules: a row is precharged after `close_after` column commands, and as
//! soon as no queued request hits it.
//!
//! The model is driven externally: the caller enqueues requests, calls
//! [`Dram::step`] at a cycle to issue at most one command, and asks
//! [`Dram::next_ready`] when the next command could possibly issue.

use std::collections::VecDeque;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::memmap::{BurstRequest, DataType, Direction};

/// Command timing in accelerator clock cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DramTiming {
    pub t_rcd: u64,
    pub t_rp: u64,
    pub t_cl: u64,
    /// Data-bus occupancy of one column command.
    pub t_burst: u64,
    pub t_rc: u64,
    pub refresh_period: u64,
    pub refresh_duration: u64,
}

impl Default for DramTiming {
    fn default() -> Self {
        Self { t_rcd: 10, t_rp: 10, t_cl: 10, t_burst: 4, t_rc: 24, refresh_period: 3120, refresh_duration: 52 }
    }
}

impl DramTiming {
    /// Minimum activate-to-precharge time.
    pub fn t_ras(&self) -> u64 {
        self.t_rc - self.t_rp
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("t_rcd", self.t_rcd),
            ("t_rp", self.t_rp),
            ("t_cl", self.t_cl),
            ("t_burst", self.t_burst),
            ("t_rc", self.t_rc),
            ("refresh_period", self.refresh_period),
            ("refresh_duration", self.refresh_duration),
        ];
        if let Some((name, _)) = all.iter().find(|(_, v)| *v == 0) {
            return Err(format!("DRAM timing {name} must be at least 1"));
        }
        if self.t_rc < self.t_rcd + self.t_rp {
            return Err("t_rc must be at least t_rcd + t_rp".into());
        }
        if self.refresh_duration >= self.refresh_period {
            return Err("refresh_duration must be shorter than refresh_period".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DramConfig {
    pub timing: DramTiming,
    pub banks: u32,
    /// Elements per row (page).
    pub page_size: u64,
    /// Beats moved by one column command.
    pub burst_beats: u32,
    /// Column commands after which an open row is precharged.
    pub close_after: u32,
    pub queue_depth: usize,
    /// Extra data-bus bubble when consecutive column commands change direction.
    pub turnaround_penalty: u64,
    pub refresh: bool,
}

impl Default for DramConfig {
    fn default() -> Self {
        let timing = DramTiming::default();
        Self {
            timing,
            banks: 8,
            page_size: 1024,
            burst_beats: 8,
            close_after: 4,
            queue_depth: 32,
            turnaround_penalty: timing.t_burst,
            refresh: true,
        }
    }
}

impl DramConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.timing.validate()?;
        if self.banks == 0 || self.page_size == 0 || self.burst_beats == 0 || self.close_after == 0 {
            return Err("banks, page_size, burst_beats and close_after must be at least 1".into());
        }
        if self.banks > 64 {
            return Err("at most 64 banks are supported".into());
        }
        if self.queue_depth == 0 {
            return Err("queue_depth must be at least 1".into());
        }
        Ok(())
    }

    /// `(bank, row, column)` of an element address.
    pub fn decode(&self, addr: u64) -> (u32, u64, u64) {
        let page = addr / self.page_size;
        ((page % self.banks as u64) as u32, page / self.banks as u64, addr % self.page_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommandKind {
    #[serde(rename = "ACT")]
    Act,
    #[serde(rename = "RD")]
    Rd,
    #[serde(rename = "WR")]
    Wr,
    #[serde(rename = "PRE")]
    Pre,
    #[serde(rename = "REF")]
    Ref,
}

impl CommandKind {
    pub fn is_column(self) -> bool {
        matches!(self, CommandKind::Rd | CommandKind::Wr)
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommandKind::Act => "ACT",
            CommandKind::Rd => "RD",
            CommandKind::Wr => "WR",
            CommandKind::Pre => "PRE",
            CommandKind::Ref => "REF",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DramCommand {
    pub kind: CommandKind,
    pub bank: u32,
    pub row: u64,
    pub col: u64,
    pub issue_cycle: u64,
    pub source: Option<DataType>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BankStatus {
    Idle,
    Active { row: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankState {
    pub bank_id: u32,
    pub status: BankStatus,
    pub col_cmds_since_act: u32,
    /// Earliest cycle a new activate may issue (precharge done).
    pub busy_until: u64,
    last_act: Option<u64>,
    last_col: Option<(u64, Direction)>,
}

impl BankState {
    fn new(bank_id: u32) -> Self {
        Self { bank_id, status: BankStatus::Idle, col_cmds_since_act: 0, busy_until: 0, last_act: None, last_col: None }
    }

    fn open_row(&self) -> Option<u64> {
        match self.status {
            BankStatus::Active { row } => Some(row),
            BankStatus::Idle => None,
        }
    }
}

/// Queue is full; the bus must hold the request and retry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backpressure;

#[derive(Debug, Clone)]
struct Pending {
    id: u64,
    seq: u64,
    source: DataType,
    dir: Direction,
    bank: u32,
    row: u64,
    col: u64,
    beats_left: u32,
    arrival: u64,
}

/// Data produced by one column command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnData {
    pub request: u64,
    pub source: DataType,
    pub direction: Direction,
    pub beats: u32,
    /// Cycle the command's last data beat is on the DRAM pins.
    pub data_done: u64,
    /// This was the request's final column command.
    pub last: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Issued {
    pub command: DramCommand,
    pub column: Option<ColumnData>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Choice {
    Column { idx: usize },
    Activate { idx: usize },
    Precharge { bank: u32 },
    Refresh,
}

/// Protocol-rule violations observed while issuing. A correct model keeps
/// every counter at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DramChecks {
    pub column_to_closed_row: u64,
    pub activate_on_open_bank: u64,
    pub precharge_on_idle_bank: u64,
    pub close_bound_exceeded: u64,
}

impl DramChecks {
    pub fn total(&self) -> u64 {
        self.column_to_closed_row + self.activate_on_open_bank + self.precharge_on_idle_bank + self.close_bound_exceeded
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandStats {
    pub activates: u64,
    pub reads: u64,
    pub writes: u64,
    pub precharges: u64,
    pub refreshes: u64,
}

pub struct Dram {
    cfg: DramConfig,
    banks: Vec<BankState>,
    queue: Vec<Pending>,
    next_seq: u64,
    cmd_bus_free: u64,
    last_col: Option<(u64, Direction)>,
    refresh_pending: bool,
    refresh_until: u64,
    trace: Option<Vec<DramCommand>>,
    stats: CommandStats,
    checks: DramChecks,
}

impl Dram {
    pub fn new(cfg: DramConfig) -> Self {
        Self {
            banks: (0..cfg.banks).map(BankState::new).collect(),
            cfg,
            queue: Vec::new(),
            next_seq: 0,
            cmd_bus_free: 0,
            last_col: None,
            refresh_pending: false,
            refresh_until: 0,
            trace: None,
            stats: CommandStats::default(),
            checks: DramChecks::default(),
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn config(&self) -> &DramConfig {
        &self.cfg
    }

    pub fn banks(&self) -> &[BankState] {
        &self.banks
    }

    pub fn stats(&self) -> CommandStats {
        self.stats
    }

    pub fn checks(&self) -> DramChecks {
        self.checks
    }

    pub fn take_trace(&mut self) -> Option<Vec<DramCommand>> {
        self.trace.take()
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    /// Column-command units a burst will occupy in the queue.
    pub fn units_for(&self, beats: u32) -> u32 {
        beats.div_ceil(self.cfg.burst_beats)
    }

    /// Queues a burst. `id` is echoed back in [`ColumnData::request`].
    pub fn enqueue(&mut self, req: &BurstRequest, id: u64, arrival: u64) -> Result<u64, Backpressure> {
        if self.queue.len() >= self.cfg.queue_depth {
            return Err(Backpressure);
        }
        let (bank, row, col) = self.cfg.decode(req.start_addr);
        debug_assert_eq!(self.cfg.decode(req.start_addr + req.beats as u64 - 1).1, row, "burst crosses a page");
        self.queue.push(Pending {
            id,
            seq: self.next_seq,
            source: req.issuing_dmac,
            dir: req.direction,
            bank,
            row,
            col,
            beats_left: req.beats,
            arrival,
        });
        self.next_seq += 1;
        Ok(id)
    }

    /// Marks a refresh as due; open banks are closed and a REF issued as soon
    /// as timing allows, holding back all other commands meanwhile.
    pub fn request_refresh(&mut self) {
        self.refresh_pending = true;
    }

    pub fn refresh_pending(&self) -> bool {
        self.refresh_pending
    }

    fn has_hit(&self, bank: u32, row: u64) -> bool {
        self.queue.iter().any(|p| p.bank == bank && p.row == row)
    }

    fn column_ready(&self, p: &Pending) -> Option<u64> {
        let bank = &self.banks[p.bank as usize];
        if bank.open_row() != Some(p.row) || bank.col_cmds_since_act >= self.cfg.close_after {
            return None;
        }
        let t = &self.cfg.timing;
        let mut ready = bank.last_act.map_or(0, |a| a + t.t_rcd);
        if let Some((at, dir)) = self.last_col {
            let gap = if dir == p.dir { t.t_burst } else { t.t_burst + self.cfg.turnaround_penalty };
            ready = ready.max(at + gap);
        }
        Some(ready.max(self.cmd_bus_free))
    }

    fn activate_ready(&self, bank: &BankState) -> Option<u64> {
        if bank.open_row().is_some() {
            return None;
        }
        let mut ready = bank.busy_until.max(self.refresh_until);
        if let Some(a) = bank.last_act {
            ready = ready.max(a + self.cfg.timing.t_rc);
        }
        Some(ready.max(self.cmd_bus_free))
    }

    fn precharge_ready(&self, bank: &BankState) -> Option<u64> {
        bank.open_row()?;
        let t = &self.cfg.timing;
        let mut ready = bank.last_act.map_or(0, |a| a + t.t_ras());
        if let Some((at, dir)) = bank.last_col {
            ready = ready.max(match dir {
                Direction::Read => at + t.t_burst,
                Direction::Write => at + t.t_cl + t.t_burst,
            });
        }
        Some(ready.max(self.cmd_bus_free))
    }

    fn wants_precharge(&self, bank: &BankState) -> bool {
        match bank.open_row() {
            None => false,
            Some(row) => {
                self.refresh_pending
                    || bank.col_cmds_since_act >= self.cfg.close_after
                    || !self.has_hit(bank.bank_id, row)
            }
        }
    }

    fn refresh_ready(&self) -> Option<u64> {
        if self.banks.iter().any(|b| b.open_row().is_some()) {
            return None;
        }
        let ready = self.banks.iter().map(|b| b.busy_until).max().unwrap_or(0);
        Some(ready.max(self.cmd_bus_free))
    }

    /// Walks the candidate commands in FR-FCFS priority order. Returns the
    /// first one issuable at `now` and the earliest ready cycle of any.
    ///
    /// The queue is kept in arrival order, so scanning it front to back
    /// visits requests oldest first.
    fn scan(&self, now: u64) -> (Option<Choice>, Option<u64>) {
        let mut earliest: Option<u64> = None;
        let mut seen = |t: u64| earliest = Some(earliest.map_or(t, |e: u64| e.min(t)));
        if self.refresh_pending {
            let mut pick = None;
            for bank in &self.banks {
                if let Some(t) = self.precharge_ready(bank) {
                    seen(t);
                    if pick.is_none() && t <= now {
                        pick = Some(Choice::Precharge { bank: bank.bank_id });
                    }
                }
            }
            if let Some(t) = self.refresh_ready() {
                seen(t);
                if pick.is_none() && t <= now {
                    pick = Some(Choice::Refresh);
                }
            }
            return (pick, earliest);
        }
        let mut column = None;
        let mut activate = None;
        // Row hits; within a bank only the oldest request on the open row.
        let mut hit_banks = 0u64;
        // Activates for the oldest request of each idle bank.
        let mut act_banks = 0u64;
        for (i, p) in self.queue.iter().enumerate() {
            let bit = 1u64 << p.bank;
            if hit_banks & bit == 0 {
                if let Some(t) = self.column_ready(p) {
                    hit_banks |= bit;
                    seen(t);
                    if column.is_none() && t <= now {
                        column = Some(Choice::Column { idx: i });
                    }
                }
            }
            if act_banks & bit == 0 {
                act_banks |= bit;
                if let Some(t) = self.activate_ready(&self.banks[p.bank as usize]) {
                    seen(t);
                    if activate.is_none() && t <= now {
                        activate = Some(Choice::Activate { idx: i });
                    }
                }
            }
        }
        // Precharges: banks with a waiting request first (by age), then the rest.
        let mut precharge: Option<(u64, u32)> = None;
        for bank in &self.banks {
            if !self.wants_precharge(bank) {
                continue;
            }
            if let Some(t) = self.precharge_ready(bank) {
                seen(t);
                if t <= now {
                    let age = self.queue.iter().find(|p| p.bank == bank.bank_id).map_or(u64::MAX, |p| p.seq);
                    let key = (age, bank.bank_id);
                    if precharge.is_none_or(|k| key < k) {
                        precharge = Some(key);
                    }
                }
            }
        }
        let pick = column.or(activate).or(precharge.map(|(_, bank)| Choice::Precharge { bank }));
        (pick, earliest)
    }

    /// FR-FCFS choice among commands that can issue at `now`.
    fn pick(&self, now: u64) -> Option<Choice> {
        self.scan(now).0
    }

    /// What would issue at `now`, without changing state.
    pub fn fr_fcfs_pick(&self, now: u64) -> Option<(CommandKind, u32)> {
        self.pick(now).map(|c| match c {
            Choice::Column { idx } => {
                let p = &self.queue[idx];
                let kind = if p.dir == Direction::Read { CommandKind::Rd } else { CommandKind::Wr };
                (kind, p.bank)
            }
            Choice::Activate { idx } => (CommandKind::Act, self.queue[idx].bank),
            Choice::Precharge { bank } => (CommandKind::Pre, bank),
            Choice::Refresh => (CommandKind::Ref, 0),
        })
    }

    /// Earliest cycle after `now` at which a command could issue, assuming no
    /// new arrivals.
    pub fn next_ready(&self, now: u64) -> Option<u64> {
        self.scan(now).1.map(|t| t.max(now + 1))
    }

    /// Issues at most one command at `now`.
    pub fn step(&mut self, now: u64) -> Option<Issued> {
        let choice = self.pick(now)?;
        Some(self.issue(choice, now))
    }

    fn record(&mut self, cmd: DramCommand) {
        match cmd.kind {
            CommandKind::Act => self.stats.activates += 1,
            CommandKind::Rd => self.stats.reads += 1,
            CommandKind::Wr => self.stats.writes += 1,
            CommandKind::Pre => self.stats.precharges += 1,
            CommandKind::Ref => self.stats.refreshes += 1,
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.push(cmd);
        }
    }

    fn issue(&mut self, choice: Choice, now: u64) -> Issued {
        self.cmd_bus_free = now + 1;
        let t = self.cfg.timing;
        match choice {
            Choice::Column { idx } => {
                let close_after = self.cfg.close_after;
                let burst_beats = self.cfg.burst_beats;
                let p = &mut self.queue[idx];
                let bank = &mut self.banks[p.bank as usize];
                if bank.open_row() != Some(p.row) {
                    self.checks.column_to_closed_row += 1;
                }
                bank.col_cmds_since_act += 1;
                if bank.col_cmds_since_act > close_after {
                    self.checks.close_bound_exceeded += 1;
                }
                bank.last_col = Some((now, p.dir));
                let beats = p.beats_left.min(burst_beats);
                p.beats_left -= beats;
                let kind = if p.dir == Direction::Read { CommandKind::Rd } else { CommandKind::Wr };
                let cmd = DramCommand {
                    kind,
                    bank: p.bank,
                    row: p.row,
                    col: p.col,
                    issue_cycle: now,
                    source: Some(p.source),
                };
                p.col += beats as u64;
                let column = ColumnData {
                    request: p.id,
                    source: p.source,
                    direction: p.dir,
                    beats,
                    data_done: now + t.t_cl + t.t_burst,
                    last: p.beats_left == 0,
                };
                self.last_col = Some((now, p.dir));
                if column.last {
                    self.queue.remove(idx);
                }
                self.record(cmd);
                Issued { command: cmd, column: Some(column) }
            }
            Choice::Activate { idx } => {
                let p = &self.queue[idx];
                let (bank_id, row, col, source) = (p.bank, p.row, p.col, p.source);
                let bank = &mut self.banks[bank_id as usize];
                if bank.open_row().is_some() {
                    self.checks.activate_on_open_bank += 1;
                }
                bank.status = BankStatus::Active { row };
                bank.col_cmds_since_act = 0;
                bank.last_act = Some(now);
                bank.last_col = None;
                let cmd = DramCommand {
                    kind: CommandKind::Act,
                    bank: bank_id,
                    row,
                    col,
                    issue_cycle: now,
                    source: Some(source),
                };
                self.record(cmd);
                Issued { command: cmd, column: None }
            }
            Choice::Precharge { bank: bank_id } => {
                let bank = &mut self.banks[bank_id as usize];
                let row = match bank.status {
                    BankStatus::Active { row } => row,
                    BankStatus::Idle => {
                        self.checks.precharge_on_idle_bank += 1;
                        0
                    }
                };
                bank.status = BankStatus::Idle;
                bank.col_cmds_since_act = 0;
                bank.busy_until = now + t.t_rp;
                let cmd =
                    DramCommand { kind: CommandKind::Pre, bank: bank_id, row, col: 0, issue_cycle: now, source: None };
                self.record(cmd);
                Issued { command: cmd, column: None }
            }
            Choice::Refresh => {
                self.refresh_pending = false;
                self.refresh_until = now + t.refresh_duration;
                for bank in &mut self.banks {
                    bank.busy_until = bank.busy_until.max(self.refresh_until);
                }
                let cmd =
                    DramCommand { kind: CommandKind::Ref, bank: 0, row: 0, col: 0, issue_cycle: now, source: None };
                self.record(cmd);
                Issued { command: cmd, column: None }
            }
        }
    }

    /// Oldest pending arrival cycle, for diagnostics.
    pub fn oldest_arrival(&self) -> Option<u64> {
        self.queue.iter().map(|p| p.arrival).min()
    }
}

/// Result of driving the DRAM alone with a fixed arrival schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceTrace {
    /// Per request: cycle its last data beat is on the DRAM pins.
    pub completions: Vec<u64>,
    pub trace: Vec<DramCommand>,
}

/// Services a list of `(burst, arrival)` pairs with no bus in front.
pub fn service_trace(requests: &[(BurstRequest, u64)], cfg: &DramConfig) -> ServiceTrace {
    let mut dram = Dram::new(*cfg).with_trace();
    let mut arrivals: VecDeque<(usize, u64)> = {
        let mut v: Vec<(usize, u64)> = requests.iter().enumerate().map(|(i, (_, a))| (i, *a)).collect();
        v.sort_by_key(|&(i, a)| (a, i));
        v.into()
    };
    let mut completions = vec![0u64; requests.len()];
    let mut remaining = requests.len();
    let mut next_refresh = if cfg.refresh { Some(cfg.timing.refresh_period) } else { None };
    let mut now = arrivals.front().map_or(0, |&(_, a)| a);
    let mut held: VecDeque<usize> = VecDeque::new();
    // Keep going after the last completion so trailing precharges are traced.
    while remaining > 0 || dram.next_ready(now).is_some() {
        if remaining > 0 && next_refresh.is_some_and(|r| r <= now) {
            dram.request_refresh();
            next_refresh = next_refresh.map(|r| r + cfg.timing.refresh_period);
        }
        while let Some(&(i, a)) = arrivals.front() {
            if a > now {
                break;
            }
            arrivals.pop_front();
            held.push_back(i);
        }
        while let Some(&i) = held.front() {
            if dram.enqueue(&requests[i].0, i as u64, now).is_err() {
                break;
            }
            held.pop_front();
        }
        if let Some(issued) = dram.step(now) {
            if let Some(col) = issued.column {
                if col.last {
                    completions[col.request as usize] = col.data_done;
                    remaining -= 1;
                }
            }
            now += 1;
            continue;
        }
        let mut next = dram.next_ready(now).unwrap_or(u64::MAX);
        if let Some(&(_, a)) = arrivals.front() {
            next = next.min(a);
        }
        if let (true, Some(r)) = (remaining > 0, next_refresh) {
            next = next.min(r);
        }
        if !held.is_empty() {
            next = next.min(now + 1);
        }
        assert!(next != u64::MAX, "DRAM stalled with {remaining} requests outstanding");
        now = next.max(now + 1);
    }
    ServiceTrace { completions, trace: dram.take_trace().unwrap_or_default() }
}

pub fn write_command_trace_csv<W: Write>(trace: &[DramCommand], mut out: W) -> io::Result<()> {
    writeln!(out, "cycle,kind,bank,row,col,source_dmac")?;
    for c in trace {
        let src = c.source.map_or("", |s| s.name());
        writeln!(out, "{},{},{},{},{},{}", c.issue_cycle, c.kind, c.bank, c.row, c.col, src)?;
    }
    Ok(())
}
