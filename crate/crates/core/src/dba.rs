//! Upstream bandwidth allocation for a TDM-PON slice.
//!
//! Grants are counted in whole eCPRI frames. Each grant cycle every ONU in
//! the slice gets a window (possibly empty, for polling) in round-robin
//! order; windows are separated by a guard interval. Time offsets within a
//! cycle are kept in picoseconds so frame boundaries at 50 Gbit/s are exact.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ran::{CtiReport, Numerology};
use crate::rate::{split72_slot_bytes, RateError, Split72Params};
use crate::sim::SimTime;
use crate::transport::FRAME_BYTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DbaPolicy {
    #[serde(rename = "enhanced-codba")]
    EnhancedCoDba,
    #[serde(rename = "conventional-codba")]
    ConventionalCoDba,
    #[serde(rename = "sr-dba")]
    SrDba,
}

impl DbaPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            DbaPolicy::EnhancedCoDba => "enhanced-codba",
            DbaPolicy::ConventionalCoDba => "conventional-codba",
            DbaPolicy::SrDba => "sr-dba",
        }
    }
}

impl fmt::Display for DbaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DbaPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "enhanced-codba" => Ok(DbaPolicy::EnhancedCoDba),
            "conventional-codba" => Ok(DbaPolicy::ConventionalCoDba),
            "sr-dba" => Ok(DbaPolicy::SrDba),
            other => Err(format!(
                "unknown policy '{other}' (expected enhanced-codba, conventional-codba or sr-dba)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrantCycleConfig {
    pub period: SimTime,
    pub onu_response: SimTime,
    pub capacity_bps: f64,
    /// Idle time between consecutive ONU windows.
    pub guard: SimTime,
}

impl Default for GrantCycleConfig {
    fn default() -> Self {
        GrantCycleConfig {
            period: SimTime::from_micros(125),
            onu_response: SimTime::from_micros(35),
            capacity_bps: 50e9,
            guard: SimTime::from_nanos(100),
        }
    }
}

impl GrantCycleConfig {
    /// Line capacity of one cycle in bytes.
    pub fn capacity_bytes(&self) -> u64 {
        (self.capacity_bps * self.period.as_secs_f64() / 8.0).round() as u64
    }

    /// Serialization time of one frame in picoseconds.
    pub fn frame_airtime_ps(&self) -> u64 {
        (FRAME_BYTES as f64 * 8.0 / self.capacity_bps * 1e12).round() as u64
    }

    /// Frames that fit in one cycle when `windows` windows are opened.
    pub fn frames_per_cycle(&self, windows: usize) -> u32 {
        let usable = (self.period.as_nanos() * 1_000)
            .saturating_sub(windows as u64 * self.guard.as_nanos() * 1_000);
        (usable / self.frame_airtime_ps()) as u32
    }

    pub fn cycles_per_slot(&self, num: &Numerology) -> u64 {
        num.slot_time().as_nanos() / self.period.as_nanos()
    }

    pub fn cycle_start(&self, cycle: u64) -> SimTime {
        SimTime::from_nanos(cycle * self.period.as_nanos())
    }
}

/// One ONU's transmit window inside a grant cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub onu: u32,
    pub frames: u32,
    pub bytes: u64,
    /// Window start relative to the cycle start, in picoseconds.
    pub start_ps: u64,
    pub len_ps: u64,
}

impl Allocation {
    pub fn end_ps(&self) -> u64 {
        self.start_ps + self.len_ps
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantMap {
    pub cycle_index: u64,
    pub allocations: Vec<Allocation>,
}

impl GrantMap {
    pub fn total_bytes(&self) -> u64 {
        self.allocations.iter().map(|a| a.bytes).sum()
    }

    pub fn total_frames(&self) -> u32 {
        self.allocations.iter().map(|a| a.frames).sum()
    }

    pub fn get(&self, onu: u32) -> Option<&Allocation> {
        self.allocations.iter().find(|a| a.onu == onu)
    }

    /// True when no two windows overlap and all fit in the cycle.
    pub fn windows_disjoint(&self, gc: &GrantCycleConfig) -> bool {
        let mut spans: Vec<_> = self
            .allocations
            .iter()
            .map(|a| (a.start_ps, a.end_ps()))
            .collect();
        spans.sort_unstable();
        let period_ps = gc.period.as_nanos() * 1_000;
        spans.windows(2).all(|w| w[0].1 <= w[1].0) && spans.iter().all(|s| s.1 <= period_ps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusReport {
    pub onu_id: u32,
    pub queued_bytes: u64,
    pub report_cycle: u64,
}

/// Frames an ONU should get in one cycle.
///
/// `planned` is served first; `backlog` only receives capacity left over
/// once every ONU's planned share is granted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OnuDemand {
    pub onu: u32,
    pub planned: u32,
    pub backlog: u32,
}

/// Splits `capacity` across `demands` proportionally to demand, using
/// largest remainders (ties to the lower position) for the leftover units.
fn proportional(demands: &[u32], capacity: u32) -> Vec<u32> {
    let total: u64 = demands.iter().map(|d| u64::from(*d)).sum();
    if total <= u64::from(capacity) {
        return demands.to_vec();
    }
    let cap = u64::from(capacity);
    let mut out: Vec<u32> = demands
        .iter()
        .map(|d| (u64::from(*d) * cap / total) as u32)
        .collect();
    let mut left = capacity - out.iter().sum::<u32>();
    let mut order: Vec<usize> = (0..demands.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(u64::from(demands[i]) * cap % total));
    for i in order {
        if left == 0 {
            break;
        }
        if out[i] < demands[i] {
            out[i] += 1;
            left -= 1;
        }
    }
    out
}

/// Builds a cycle's grant map from per-ONU demands.
///
/// Planned demand is granted first, scaled proportionally when it exceeds
/// the cycle; remaining capacity then goes to backlog demand the same way.
/// Windows are laid out back to back starting with ONU position
/// `rotation % n`.
pub fn allocate_cycle(
    cycle_index: u64,
    demands: &[OnuDemand],
    gc: &GrantCycleConfig,
    rotation: usize,
) -> GrantMap {
    let n = demands.len();
    let capacity = gc.frames_per_cycle(n);
    let planned: Vec<u32> = demands.iter().map(|d| d.planned).collect();
    let mut granted = proportional(&planned, capacity);
    let left = capacity - granted.iter().sum::<u32>();
    let backlog: Vec<u32> = demands.iter().map(|d| d.backlog).collect();
    for (g, extra) in granted.iter_mut().zip(proportional(&backlog, left)) {
        *g += extra;
    }

    let airtime = gc.frame_airtime_ps();
    let guard = gc.guard.as_nanos() * 1_000;
    let mut offset = 0;
    let mut allocations = Vec::with_capacity(n);
    for k in 0..n {
        let i = (rotation + k) % n;
        let frames = granted[i];
        let len = guard + u64::from(frames) * airtime;
        allocations.push(Allocation {
            onu: demands[i].onu,
            frames,
            bytes: u64::from(frames) * FRAME_BYTES,
            start_ps: offset,
            len_ps: len,
        });
        offset += len;
    }
    GrantMap {
        cycle_index,
        allocations,
    }
}

/// Upstream bytes promised to one RU for one slot, spread over the cycles
/// that drain it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotGrantPlan {
    pub ru_id: u32,
    pub target_slot: u64,
    pub bytes: u64,
    pub per_cycle_frames: Vec<u32>,
}

impl SlotGrantPlan {
    fn spread(ru_id: u32, target_slot: u64, bytes: u64, cycles: u64) -> Self {
        let frames = bytes.div_ceil(FRAME_BYTES) as u32;
        let cycles = cycles.max(1) as u32;
        let per_cycle_frames = (0..cycles)
            .map(|k| frames / cycles + u32::from(k < frames % cycles))
            .collect();
        SlotGrantPlan {
            ru_id,
            target_slot,
            bytes,
            per_cycle_frames,
        }
    }

    pub fn total_frames(&self) -> u32 {
        self.per_cycle_frames.iter().sum()
    }

    pub fn granted_bytes(&self) -> u64 {
        u64::from(self.total_frames()) * FRAME_BYTES
    }
}

/// CGS-aware cooperative DBA: sizes the grant for the scheduled normal PRBs
/// plus the whole CGS reservation.
pub fn enhanced_codba(
    cti: &CtiReport,
    params: &Split72Params,
    cycles_per_slot: u64,
) -> Result<SlotGrantPlan, RateError> {
    let prbs = cti.scheduled_normal_prbs + cti.cgs_reserved_prbs;
    let bytes = split72_slot_bytes(params, prbs)?;
    Ok(SlotGrantPlan::spread(cti.ru_id, cti.target_slot, bytes, cycles_per_slot))
}

/// Cooperative DBA that ignores CGS and adds a fixed headroom of
/// `headroom_fraction` of the RU's full-load rate.
pub fn conventional_codba(
    cti: &CtiReport,
    params: &Split72Params,
    ru_full_rate_bps: f64,
    headroom_fraction: f64,
    cycles_per_slot: u64,
) -> Result<SlotGrantPlan, RateError> {
    let scheduled = split72_slot_bytes(params, cti.scheduled_normal_prbs)?;
    let headroom = (headroom_fraction * ru_full_rate_bps * params.slot_time_s / 8.0).ceil() as u64;
    Ok(SlotGrantPlan::spread(
        cti.ru_id,
        cti.target_slot,
        scheduled + headroom,
        cycles_per_slot,
    ))
}

/// Status-report DBA: grants the next cycle to the reported queues,
/// scaled to one cycle when they jointly exceed it.
pub fn sr_dba(
    reports: &[StatusReport],
    gc: &GrantCycleConfig,
    cycle_index: u64,
    rotation: usize,
) -> GrantMap {
    let demands: Vec<OnuDemand> = reports
        .iter()
        .map(|r| OnuDemand {
            onu: r.onu_id,
            planned: r.queued_bytes.div_ceil(FRAME_BYTES) as u32,
            backlog: 0,
        })
        .collect();
    allocate_cycle(cycle_index, &demands, gc, rotation)
}

#[derive(Debug, Clone, Copy)]
struct CycleRecord {
    cycle: u64,
    predicted_arrivals: u32,
    granted: u32,
}

#[derive(Debug, Clone, Copy)]
struct QueueReport {
    cycle: u64,
    queued_frames: u32,
    arrives_at: SimTime,
}

#[derive(Debug, Clone, Default)]
struct OnuState {
    plans: BTreeMap<u64, SlotGrantPlan>,
    history: VecDeque<CycleRecord>,
    reports: VecDeque<QueueReport>,
    latest: Option<QueueReport>,
    /// Planned frames not yet granted.
    outstanding: u32,
}

/// OLT-side upstream scheduler of the RU slice.
///
/// The OLT keeps, per ONU, an estimate of the queue built from the last
/// status report it can act on plus predicted arrivals minus grants issued
/// since. Cooperative policies serve their per-slot grant plans first, with
/// any planned frames that did not fit carried forward; the estimate caps
/// the plan so unused reservations are not granted twice. Queued frames the
/// plan did not foresee only get capacity left over after every plan.
#[derive(Debug, Clone)]
pub struct UplinkScheduler {
    policy: DbaPolicy,
    gc: GrantCycleConfig,
    cycles_per_slot: u64,
    onus: Vec<OnuState>,
    onu_delay: Vec<SimTime>,
}

impl UplinkScheduler {
    pub fn new(
        policy: DbaPolicy,
        gc: GrantCycleConfig,
        num: &Numerology,
        onu_delay: Vec<SimTime>,
    ) -> Self {
        UplinkScheduler {
            policy,
            cycles_per_slot: gc.cycles_per_slot(num),
            gc,
            onus: vec![OnuState::default(); onu_delay.len()],
            onu_delay,
        }
    }

    pub fn policy(&self) -> DbaPolicy {
        self.policy
    }

    pub fn add_plan(&mut self, plan: SlotGrantPlan) {
        if self.policy == DbaPolicy::SrDba {
            return;
        }
        self.onus[plan.ru_id as usize]
            .plans
            .insert(plan.target_slot, plan);
    }

    /// Queue length an ONU reports at the end of its window.
    pub fn report(&mut self, onu: u32, cycle: u64, queued_frames: u32, sent_at: SimTime) {
        let delay = self.onu_delay[onu as usize];
        self.onus[onu as usize].reports.push_back(QueueReport {
            cycle,
            queued_frames,
            arrives_at: sent_at + delay,
        });
    }

    fn slot_of_cycle(&self, cycle: u64) -> (u64, usize) {
        (cycle / self.cycles_per_slot, (cycle % self.cycles_per_slot) as usize)
    }

    /// Computes the grant map for `cycle`.
    pub fn schedule_cycle(&mut self, cycle: u64) -> GrantMap {
        let t_c = self.gc.cycle_start(cycle);
        let (slot, pos) = self.slot_of_cycle(cycle);
        let mut demands = Vec::with_capacity(self.onus.len());
        for (i, st) in self.onus.iter_mut().enumerate() {
            let decide_at = t_c.saturating_sub(self.onu_delay[i] + self.gc.onu_response);
            while st.reports.front().is_some_and(|r| r.arrives_at <= decide_at) {
                st.latest = st.reports.pop_front();
            }
            // Plans for slots before the current one are fully in the history.
            while st.plans.first_key_value().is_some_and(|(s, _)| *s < slot) {
                st.plans.pop_first();
            }
            let plan = st.plans.get(&slot);
            let arriving = if pos == 0 {
                plan.map_or(0, |p| p.total_frames())
            } else {
                0
            };
            let (base, since) = match st.latest {
                Some(r) => (i64::from(r.queued_frames), r.cycle + 1),
                None => (0, 0),
            };
            while st.history.front().is_some_and(|h| h.cycle < since) {
                st.history.pop_front();
            }
            let mut est = base;
            for h in &st.history {
                est = (est + i64::from(h.predicted_arrivals) - i64::from(h.granted)).max(0);
            }
            let est = (est + i64::from(arriving)) as u32;

            let (planned, backlog) = match self.policy {
                DbaPolicy::SrDba => (est, 0),
                _ => {
                    st.outstanding = (st.outstanding + arriving).min(est);
                    let future: u32 = plan.map_or(0, |p| p.per_cycle_frames[pos + 1..].iter().sum());
                    let due = st.outstanding.saturating_sub(future);
                    (due, st.outstanding - due)
                }
            };
            demands.push(OnuDemand {
                onu: i as u32,
                planned,
                backlog,
            });
            st.history.push_back(CycleRecord {
                cycle,
                predicted_arrivals: arriving,
                granted: 0,
            });
        }
        let map = allocate_cycle(cycle, &demands, &self.gc, cycle as usize);
        for a in &map.allocations {
            let st = &mut self.onus[a.onu as usize];
            st.outstanding = st.outstanding.saturating_sub(a.frames);
            if let Some(h) = st.history.back_mut() {
                h.granted = a.frames;
            }
        }
        map
    }
}
