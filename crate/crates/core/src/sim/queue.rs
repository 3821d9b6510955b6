use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use super::time::SimTime;
use super::SimError;

/// Handle returned by [`Scheduler::schedule`]; used to cancel a pending event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

/// A timestamped event. `seq` is the insertion counter used to break ties.
#[derive(Debug, Clone)]
pub struct SimEvent<E> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub kind: E,
}

impl<E> PartialEq for SimEvent<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<E> Eq for SimEvent<E> {}

impl<E> PartialOrd for SimEvent<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for SimEvent<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse for earliest-first.
        other
            .fire_at
            .cmp(&self.fire_at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Single-threaded event queue with a monotonic clock.
///
/// Events fire in `(fire_at, seq)` order, so events scheduled for the same
/// instant fire in insertion order.
#[derive(Debug)]
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<SimEvent<E>>,
    cancelled: HashSet<u64>,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn schedule(&mut self, fire_at: SimTime, kind: E) -> Result<EventHandle, SimError> {
        if fire_at < self.now {
            return Err(SimError::EventInPast {
                fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent { fire_at, seq, kind });
        Ok(EventHandle(seq))
    }

    /// Returns `true` if the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seq {
            return false;
        }
        let pending = self.heap.iter().any(|e| e.seq == handle.0);
        pending && self.cancelled.insert(handle.0)
    }

    /// Pops the next live event with `fire_at <= limit`, advancing the clock.
    pub fn pop_until(&mut self, limit: SimTime) -> Option<SimEvent<E>> {
        loop {
            let head = self.heap.peek()?;
            if head.fire_at > limit {
                return None;
            }
            let ev = self.heap.pop().expect("peeked");
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            self.now = ev.fire_at;
            return Some(ev);
        }
    }

    /// Processes every event with `fire_at <= t_end` and leaves the clock at `t_end`.
    ///
    /// The handler may schedule further events; those also fire if they fall
    /// inside the horizon.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> Result<u64, SimError>
    where
        F: FnMut(&mut Scheduler<E>, SimTime, E) -> Result<(), SimError>,
    {
        if t_end < self.now {
            return Err(SimError::EventInPast {
                fire_at: t_end,
                now: self.now,
            });
        }
        let mut processed = 0;
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev.fire_at, ev.kind)?;
            processed += 1;
        }
        self.now = t_end;
        Ok(processed)
    }
}
