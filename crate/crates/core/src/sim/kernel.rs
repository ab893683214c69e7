//! Deterministic discrete-event queue.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

/// Dispatch order of events that share a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Priority {
    Dram = 0,
    Bus = 1,
    Dmac = 2,
    Controller = 3,
}

struct Entry<E> {
    cycle: u64,
    priority: Priority,
    seq: u64,
    event: E,
}

impl<E> Entry<E> {
    fn key(&self) -> (u64, Priority, u64) {
        (self.cycle, self.priority, self.seq)
    }
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Events pop in `(cycle, priority, insertion)` order, a total order.
pub struct Kernel<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    seq: u64,
    now: u64,
    dispatched: u64,
    causality_violations: u64,
}

impl<E> Default for Kernel<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Kernel<E> {
    pub fn new() -> Self {
        Self { heap: BinaryHeap::new(), seq: 0, now: 0, dispatched: 0, causality_violations: 0 }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Queues `event` at `cycle`. Scheduling into the past is counted as a
    /// causality violation and the event is clamped to the present.
    pub fn schedule(&mut self, cycle: u64, priority: Priority, event: E) {
        let cycle = if cycle < self.now {
            self.causality_violations += 1;
            self.now
        } else {
            cycle
        };
        self.heap.push(Reverse(Entry { cycle, priority, seq: self.seq, event }));
        self.seq += 1;
    }

    pub fn pop(&mut self) -> Option<(u64, E)> {
        let Reverse(e) = self.heap.pop()?;
        self.now = e.cycle;
        self.dispatched += 1;
        Some((e.cycle, e.event))
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn causality_violations(&self) -> u64 {
        self.causality_violations
    }
}

/// Coalesces wake-up requests for one component: only the earliest pending
/// wake is live; stale queue entries are recognised and dropped on pop.
#[derive(Debug, Clone, Copy, Default)]
pub struct WakeSlot(Option<u64>);

impl WakeSlot {
    /// Returns true if a new queue entry is needed for `cycle`.
    pub fn want(&mut self, cycle: u64) -> bool {
        match self.0 {
            Some(t) if t <= cycle => false,
            _ => {
                self.0 = Some(cycle);
                true
            }
        }
    }

    /// Consumes the wake if `cycle` is the live one.
    pub fn fire(&mut self, cycle: u64) -> bool {
        if self.0 == Some(cycle) {
            self.0 = None;
            true
        } else {
            false
        }
    }
}
