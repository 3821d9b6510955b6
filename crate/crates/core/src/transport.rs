//! Data path pieces: eCPRI framing, ONU upstream queues drained under grant
//! windows, and the shared downlink toward the second-tier MEC.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dba::{Allocation, GrantCycleConfig};
use crate::sim::SimTime;

pub const FRAME_BYTES: u64 = 2048;
pub const INTER_FRAME_GAP: SimTime = SimTime::from_nanos(100);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcpriFrame {
    pub size: u64,
    /// Payload bytes carried; the remainder of the last frame is padding.
    pub payload: u64,
    pub packet_id: u64,
    pub created_at: SimTime,
}

pub fn frames_for(bytes: u64) -> u64 {
    bytes.div_ceil(FRAME_BYTES)
}

pub fn packetize(slot_bytes: u64, packet_id: u64, at: SimTime) -> Vec<EcpriFrame> {
    (0..frames_for(slot_bytes))
        .map(|k| EcpriFrame {
            size: FRAME_BYTES,
            payload: (slot_bytes - k * FRAME_BYTES).min(FRAME_BYTES),
            packet_id,
            created_at: at,
        })
        .collect()
}

/// Per-packet stage times. Unset stages are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimestamps {
    pub ue_arrival: Option<SimTime>,
    pub ran_transmit: Option<SimTime>,
    pub onu_enqueue: Option<SimTime>,
    pub onu_dequeue: Option<SimTime>,
    pub du_arrival: Option<SimTime>,
    pub du_done: Option<SimTime>,
    pub tier2_enqueue: Option<SimTime>,
    pub app_arrival: Option<SimTime>,
}

impl StageTimestamps {
    fn ordered(&self) -> [Option<SimTime>; 8] {
        [
            self.ue_arrival,
            self.ran_transmit,
            self.onu_enqueue,
            self.onu_dequeue,
            self.du_arrival,
            self.du_done,
            self.tier2_enqueue,
            self.app_arrival,
        ]
    }

    /// True when the stages that are set never go backwards.
    pub fn is_monotone(&self) -> bool {
        let set: Vec<SimTime> = self.ordered().into_iter().flatten().collect();
        set.windows(2).all(|w| w[0] <= w[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DownlinkBudget {
    fraction: f64,
}

impl DownlinkBudget {
    pub fn new(fraction: f64) -> Option<Self> {
        (fraction > 0.0 && fraction <= 1.0).then_some(DownlinkBudget { fraction })
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }
}

/// Frames belonging to one unit of work (a slot's fronthaul or a DU output)
/// waiting at an ONU.
#[derive(Debug, Clone)]
struct Batch<T> {
    tag: T,
    enqueued_ps: u64,
    remaining: u64,
    sent_any: bool,
}

/// A batch that left the ONU, or advanced, during a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Departure<T> {
    pub tag: T,
    pub frames: u64,
    pub first_start: SimTime,
    pub last_end: SimTime,
    /// All frames of the batch have now been sent.
    pub complete: bool,
}

/// FIFO of frame batches at one ONU.
#[derive(Debug, Clone)]
pub struct OnuQueue<T> {
    batches: VecDeque<Batch<T>>,
    queued: u64,
}

impl<T> Default for OnuQueue<T> {
    fn default() -> Self {
        OnuQueue {
            batches: VecDeque::new(),
            queued: 0,
        }
    }
}

fn ps_to_time(ps: u64) -> SimTime {
    SimTime::from_nanos(ps.div_ceil(1_000))
}

impl<T: Clone> OnuQueue<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enqueue(&mut self, tag: T, frames: u64, at: SimTime) {
        if frames == 0 {
            return;
        }
        self.batches.push_back(Batch {
            tag,
            enqueued_ps: at.as_nanos() * 1_000,
            remaining: frames,
            sent_any: false,
        });
        self.queued += frames;
    }

    pub fn queued_frames(&self) -> u64 {
        self.queued
    }

    pub fn is_empty(&self) -> bool {
        self.queued == 0
    }

    /// Frames enqueued no later than `at`.
    pub fn queued_frames_at(&self, at: SimTime) -> u64 {
        let t = at.as_nanos() * 1_000;
        self.batches
            .iter()
            .filter(|b| b.enqueued_ps <= t)
            .map(|b| b.remaining)
            .sum()
    }

    /// Drains frames in FIFO order inside `alloc`'s window of the cycle
    /// starting at `cycle_start`. The guard leads the window; frames follow
    /// back to back. A frame never starts before its batch was enqueued.
    pub fn transmit(
        &mut self,
        cycle_start: SimTime,
        alloc: &Allocation,
        gc: &GrantCycleConfig,
    ) -> Vec<Departure<T>> {
        let airtime = gc.frame_airtime_ps();
        let base = cycle_start.as_nanos() * 1_000 + alloc.start_ps;
        let mut cursor = base + gc.guard.as_nanos() * 1_000;
        let end = base + alloc.len_ps;
        let mut out = Vec::new();
        while let Some(b) = self.batches.front_mut() {
            cursor = cursor.max(b.enqueued_ps);
            let fit = end.saturating_sub(cursor) / airtime;
            let n = fit.min(b.remaining);
            if n == 0 {
                break;
            }
            let first = cursor;
            cursor += n * airtime;
            b.remaining -= n;
            b.sent_any = true;
            self.queued -= n;
            let complete = b.remaining == 0;
            out.push(Departure {
                tag: b.tag.clone(),
                frames: n,
                first_start: ps_to_time(first),
                last_end: ps_to_time(cursor),
                complete,
            });
            if complete {
                self.batches.pop_front();
            } else {
                break;
            }
        }
        out
    }
}

/// DU-to-OLT downlink toward the second-tier MEC: a FIFO drained at the
/// slice's share of line rate, with transmissions starting no earlier than
/// the next downlink frame boundary.
#[derive(Debug, Clone)]
pub struct Tier2Downlink {
    rate_bps: f64,
    frame_period: SimTime,
    propagation: SimTime,
    active_from: SimTime,
    busy_until_ps: u64,
    backlog_bytes: u64,
    max_backlog_bytes: u64,
    pending: VecDeque<(u64, u64)>,
}

impl Tier2Downlink {
    pub fn new(
        budget: DownlinkBudget,
        line_rate_bps: f64,
        frame_period: SimTime,
        propagation: SimTime,
    ) -> Self {
        Tier2Downlink {
            rate_bps: budget.fraction() * line_rate_bps,
            frame_period,
            propagation,
            active_from: SimTime::ZERO,
            busy_until_ps: 0,
            backlog_bytes: 0,
            max_backlog_bytes: 0,
            pending: VecDeque::new(),
        }
    }

    /// Holds transmissions until the slice toward the receiver is up.
    pub fn set_active_from(&mut self, at: SimTime) {
        self.active_from = at;
    }

    pub fn rate_bps(&self) -> f64 {
        self.rate_bps
    }

    /// Queues `bytes` at `at`; returns (transmission start, arrival at the
    /// receiver). Zero bytes produce no transmission.
    pub fn send(&mut self, bytes: u64, at: SimTime) -> Option<(SimTime, SimTime)> {
        if bytes == 0 {
            return None;
        }
        let at_ps = at.as_nanos() * 1_000;
        while self.pending.front().is_some_and(|(end, _)| *end <= at_ps) {
            let (_, b) = self.pending.pop_front().unwrap();
            self.backlog_bytes -= b;
        }
        let boundary = at.max(self.active_from).ceil_to(self.frame_period);
        let start_ps = (boundary.as_nanos() * 1_000).max(self.busy_until_ps);
        let drain_ps = (bytes as f64 * 8.0 / self.rate_bps * 1e12).round() as u64;
        self.busy_until_ps = start_ps + drain_ps;
        self.pending.push_back((self.busy_until_ps, bytes));
        self.backlog_bytes += bytes;
        self.max_backlog_bytes = self.max_backlog_bytes.max(self.backlog_bytes);
        Some((
            ps_to_time(start_ps),
            ps_to_time(self.busy_until_ps) + self.propagation,
        ))
    }

    pub fn max_backlog_bytes(&self) -> u64 {
        self.max_backlog_bytes
    }

    pub fn backlog_bytes(&self) -> u64 {
        self.backlog_bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dba::{allocate_cycle, OnuDemand};

    #[test]
    fn packetize_counts_and_padding() {
        let t = SimTime::from_micros(5);
        assert!(packetize(0, 1, t).is_empty());
        assert_eq!(packetize(2048, 1, t).len(), 1);
        let f = packetize(5000, 7, t);
        assert_eq!(f.len(), 3);
        assert_eq!(f[2].payload, 5000 - 4096);
        assert!(f.iter().all(|x| x.size == 2048 && x.created_at == t));
    }

    fn one_window(frames: u32) -> (GrantCycleConfig, Allocation) {
        let gc = GrantCycleConfig::default();
        let m = allocate_cycle(
            0,
            &[OnuDemand {
                onu: 0,
                planned: frames,
                backlog: 0,
            }],
            &gc,
            0,
        );
        (gc, m.allocations[0])
    }

    #[test]
    fn single_frame_leaves_immediately() {
        let (gc, a) = one_window(1);
        let mut q = OnuQueue::new();
        q.enqueue(0u32, 1, SimTime::ZERO);
        let d = q.transmit(SimTime::ZERO, &a, &gc);
        assert_eq!(d.len(), 1);
        assert!(d[0].complete);
        // guard + one frame
        assert_eq!(d[0].last_end, SimTime::from_nanos(428));
        assert!(q.is_empty());
    }

    #[test]
    fn frames_back_to_back_in_window() {
        let (gc, a) = one_window(10);
        let mut q = OnuQueue::new();
        q.enqueue(0u32, 10, SimTime::ZERO);
        let d = q.transmit(SimTime::ZERO, &a, &gc);
        assert_eq!(d[0].frames, 10);
        assert_eq!(d[0].last_end, SimTime::from_nanos(100 + 3277));
    }

    #[test]
    fn partial_grant_leaves_remainder() {
        let (gc, a) = one_window(4);
        let mut q = OnuQueue::new();
        q.enqueue(1u32, 3, SimTime::ZERO);
        q.enqueue(2u32, 3, SimTime::ZERO);
        let d = q.transmit(SimTime::ZERO, &a, &gc);
        assert_eq!(d.len(), 2);
        assert!(d[0].complete && !d[1].complete);
        assert_eq!(q.queued_frames(), 2);
    }

    #[test]
    fn late_arrival_waits_for_next_window() {
        let (gc, a) = one_window(4);
        let mut q = OnuQueue::new();
        q.enqueue(1u32, 2, SimTime::from_micros(60));
        assert!(q.transmit(SimTime::ZERO, &a, &gc).is_empty());
        let d = q.transmit(gc.cycle_start(1), &a, &gc);
        assert!(d[0].complete);
        assert!(d[0].last_end - SimTime::from_micros(60) <= SimTime::from_micros(125));
    }

    #[test]
    fn tier2_waits_for_frame_boundary() {
        let b = DownlinkBudget::new(1.0).unwrap();
        let mut dl = Tier2Downlink::new(
            b,
            50e9,
            SimTime::from_micros(125),
            SimTime::from_micros(90),
        );
        let bytes = 2800; // 22,400 bits
        let (start, arrive) = dl.send(bytes, SimTime::from_micros(10)).unwrap();
        assert_eq!(start, SimTime::from_micros(125));
        assert_eq!(arrive, SimTime::from_nanos(125_000 + 448 + 90_000));
        assert!(dl.send(0, SimTime::from_micros(10)).is_none());
    }

    #[test]
    fn tier2_fifo_serializes_back_to_back() {
        let b = DownlinkBudget::new(0.05).unwrap();
        let mut dl = Tier2Downlink::new(b, 50e9, SimTime::from_micros(125), SimTime::ZERO);
        let (_, a1) = dl.send(312_500, SimTime::ZERO).unwrap(); // 1 ms at 2.5 Gbit/s
        let (s2, _) = dl.send(100, SimTime::from_micros(1)).unwrap();
        assert_eq!(a1, SimTime::from_millis(1));
        assert_eq!(s2, SimTime::from_millis(1));
        assert_eq!(dl.max_backlog_bytes(), 312_600);
    }

    #[test]
    fn downlink_budget_bounds() {
        assert!(DownlinkBudget::new(0.0).is_none());
        assert!(DownlinkBudget::new(1.2).is_none());
        assert!(DownlinkBudget::new(0.05).is_some());
    }

    #[test]
    fn timestamps_monotone_check() {
        let mut s = StageTimestamps {
            ue_arrival: Some(SimTime::from_micros(1)),
            du_arrival: Some(SimTime::from_micros(5)),
            ..Default::default()
        };
        assert!(s.is_monotone());
        s.onu_dequeue = Some(SimTime::from_micros(6));
        assert!(!s.is_monotone());
    }
}
