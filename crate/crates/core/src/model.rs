//! One end-to-end simulation run.
//!
//! RUs schedule users into NR slots; each slot's split-7.2 fronthaul is
//! queued at the RU's ONU when the slot ends and drained under the tier-1
//! slice's grants to the DU/CU at MEC-1. After processing, URLLC output goes
//! over the tier-2 downlink to the application at MEC-2 and normal output
//! goes upstream over the CO slice, granted by status reports.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dba::{
    conventional_codba, enhanced_codba, Allocation, DbaPolicy, GrantCycleConfig, UplinkScheduler,
};
use crate::metrics::{MetricsError, MetricsRecorder};
use crate::ran::{
    CgsConfig, Numerology, RanError, RanScheduler, ScheduledUser, TrafficArrival, TrafficClass,
    GRANT_DELAY_SLOTS,
};
use crate::rate::{
    du_payload_per_slot, split72_rate, split72_slot_bytes, DuPayloadParams, RateError,
    Split72Params,
};
use crate::scenario::{calibrate, Calibration, Scenario, ScenarioError};
use crate::sim::{PoissonProcess, RngStream, Scheduler, SimError, SimTime};
use crate::topology::{
    ControlMessage, NodeId, Topology, TopologyError, PON_CAPACITY_BPS, TIER1_SLICE,
};
use crate::transport::{
    frames_for, DownlinkBudget, OnuQueue, StageTimestamps, Tier2Downlink, FRAME_BYTES,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ran(#[from] RanError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Counts of invariant violations observed during a run; all zero in a
/// correct run. `deferred_*` are informational.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub monotonicity: u64,
    pub tdma_overlap: u64,
    pub slice_membership: u64,
    pub grant_delay: u64,
    pub conservation: u64,
    pub deferred_urllc: u64,
    pub deferred_normal: u64,
}

impl InvariantReport {
    pub fn violations(&self) -> u64 {
        self.monotonicity
            + self.tdma_overlap
            + self.slice_membership
            + self.grant_delay
            + self.conservation
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounters {
    pub generated: u64,
    pub delivered: u64,
    pub in_flight: u64,
    pub payload_bytes_out: u64,
    pub payload_bytes_delivered: u64,
    pub payload_bytes_queued: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub events: u64,
    pub slots: u64,
    pub fronthaul_frames: u64,
    pub fronthaul_frames_sent: u64,
    pub fronthaul_frames_queued: u64,
    /// Slot boundaries at which an RU's earlier fronthaul was still queued.
    pub fronthaul_carryover: u64,
    pub urllc: ClassCounters,
    pub normal: ClassCounters,
    pub tier2_max_backlog_bytes: u64,
    pub tier2_active_at_ns: u64,
    /// Measured fronthaul load over the run, as a share of line rate.
    pub measured_load: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: Scenario,
    pub calibration: Calibration,
    pub metrics: MetricsRecorder,
    pub invariants: InvariantReport,
    pub stats: RunStats,
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Arrival { ru: u32, class: TrafficClass },
    Cycle(u64),
    DuDone(u64),
    CoWindow { frames: u32 },
    Control(usize),
}

/// A slot's traffic travelling through the fronthaul and the DU.
#[derive(Debug)]
struct SlotBatch {
    sent_at: SimTime,
    urllc: Vec<ScheduledUser>,
    normal: Vec<ScheduledUser>,
    dequeued: SimTime,
    du_arrival: SimTime,
}

/// Normal-class DU output on its way to the CO.
#[derive(Debug)]
struct CoBatch {
    sent_at: SimTime,
    dequeued: SimTime,
    du_arrival: SimTime,
    du_done: SimTime,
    users: Vec<ScheduledUser>,
    bytes: u64,
}

struct Model {
    scenario: Scenario,
    num: Numerology,
    gc: GrantCycleConfig,
    split: Split72Params,
    payload: DuPayloadParams,
    ru_full_rate: f64,
    cycles_per_slot: u64,
    topo: Topology,
    control: Vec<ControlMessage>,
    rans: Vec<RanScheduler>,
    arrivals: Vec<[PoissonProcess; 2]>,
    next_packet: u64,
    onu_queues: Vec<OnuQueue<u64>>,
    ru_delay: Vec<SimTime>,
    uplink: UplinkScheduler,
    batches: HashMap<u64, SlotBatch>,
    next_batch: u64,
    tier2: Tier2Downlink,
    co_queue: OnuQueue<u64>,
    co_batches: HashMap<u64, CoBatch>,
    co_outstanding: u64,
    co_delay: SimTime,
    metrics: MetricsRecorder,
    inv: InvariantReport,
    stats: RunStats,
    fronthaul_bytes: u128,
}

fn class_index(c: TrafficClass) -> usize {
    match c {
        TrafficClass::Urllc => 0,
        TrafficClass::Normal => 1,
    }
}

impl Model {
    fn new(scenario: Scenario, cal: &Calibration) -> Result<Self, ModelError> {
        scenario.validate()?;
        let num = scenario.numerology();
        let cgs = CgsConfig::new(scenario.cgs_fraction, &num)?;
        let gc = GrantCycleConfig::default();
        let split = Split72Params::for_numerology(&num);
        let n = scenario.n_rus;
        let mut topology_cfg = scenario.topology.clone();
        topology_cfg.n_rus = n;
        let topo = Topology::build(topology_cfg)?;

        let rans: Vec<RanScheduler> = (0..n).map(|i| RanScheduler::new(i, num, cgs)).collect();
        let arrivals = (0..n)
            .map(|i| -> Result<_, SimError> {
                Ok([
                    PoissonProcess::new(
                        cal.lambda_urllc,
                        RngStream::new(scenario.seed, format!("ru{i}/urllc")),
                    )?,
                    PoissonProcess::new(
                        cal.lambda_normal,
                        RngStream::new(scenario.seed, format!("ru{i}/normal")),
                    )?,
                ])
            })
            .collect::<Result<Vec<_>, _>>()?;
        let ru_delay = (0..n)
            .map(|i| topo.propagation_delay(NodeId::ru_onu(i), NodeId::mec_olt(1)))
            .collect::<Result<Vec<_>, _>>()?;
        let uplink = UplinkScheduler::new(scenario.policy, gc, &num, ru_delay.clone());
        let budget = DownlinkBudget::new(scenario.dl_fraction).ok_or_else(|| {
            ScenarioError::OutOfDomain {
                key: "dl_fraction",
                value: scenario.dl_fraction.to_string(),
                reason: "must be in (0, 1]".into(),
            }
        })?;
        let tier2 = Tier2Downlink::new(
            budget,
            PON_CAPACITY_BPS,
            gc.period,
            topo.propagation_delay(NodeId::mec_olt(1), NodeId::mec_onu(2))?,
        );
        let co_delay = topo.propagation_delay(NodeId::mec_onu(1), NodeId::CO_OLT)?;

        Ok(Model {
            ru_full_rate: split72_rate(&split, num.max_prbs())?,
            payload: DuPayloadParams::for_numerology(&num),
            cycles_per_slot: gc.cycles_per_slot(&num),
            metrics: MetricsRecorder::new(scenario.warmup),
            num,
            gc,
            split,
            topo,
            control: Vec::new(),
            rans,
            arrivals,
            next_packet: 0,
            onu_queues: (0..n).map(|_| OnuQueue::new()).collect(),
            ru_delay,
            uplink,
            batches: HashMap::new(),
            next_batch: 0,
            tier2,
            co_queue: OnuQueue::new(),
            co_batches: HashMap::new(),
            co_outstanding: 0,
            co_delay,
            inv: InvariantReport::default(),
            stats: RunStats::default(),
            fronthaul_bytes: 0,
            scenario,
        })
    }

    fn init(&mut self, q: &mut Scheduler<Ev>) -> Result<(), ModelError> {
        // Bring the MEC-2 ONU into OLT-1's slice for the tier-2 path.
        self.control = self
            .topo
            .reconfigure_slice(TIER1_SLICE, NodeId::mec_onu(2), SimTime::ZERO)?;
        for (i, m) in self.control.iter().enumerate() {
            q.schedule(m.delivered_at, Ev::Control(i))?;
        }
        let active = Topology::completion_time(&self.control).unwrap_or(SimTime::ZERO);
        self.tier2.set_active_from(active);
        self.stats.tier2_active_at_ns = active.as_nanos();
        for i in 0..self.scenario.n_rus {
            if !self.topo.is_member(NodeId::ru_onu(i), TIER1_SLICE) {
                self.inv.slice_membership += 1;
            }
        }

        for ru in 0..self.rans.len() {
            for slot in 1..=GRANT_DELAY_SLOTS {
                self.plan_slot(ru, slot)?;
            }
            for class in [TrafficClass::Urllc, TrafficClass::Normal] {
                self.schedule_arrival(q, ru as u32, class)?;
            }
        }
        q.schedule(SimTime::ZERO, Ev::Cycle(0))?;
        Ok(())
    }

    fn schedule_arrival(
        &mut self,
        q: &mut Scheduler<Ev>,
        ru: u32,
        class: TrafficClass,
    ) -> Result<(), ModelError> {
        if let Some(t) = self.arrivals[ru as usize][class_index(class)].next() {
            if t < self.scenario.duration {
                q.schedule(t, Ev::Arrival { ru, class })?;
            }
        }
        Ok(())
    }

    fn plan_slot(&mut self, ru: usize, slot: u64) -> Result<(), ModelError> {
        let cti = self.rans[ru].cti_lookahead(slot)?;
        let plan = match self.scenario.policy {
            DbaPolicy::EnhancedCoDba => enhanced_codba(&cti, &self.split, self.cycles_per_slot)?,
            DbaPolicy::ConventionalCoDba => conventional_codba(
                &cti,
                &self.split,
                self.ru_full_rate,
                self.scenario.conventional_headroom,
                self.cycles_per_slot,
            )?,
            DbaPolicy::SrDba => return Ok(()),
        };
        self.uplink.add_plan(plan);
        Ok(())
    }

    fn handle(&mut self, q: &mut Scheduler<Ev>, now: SimTime, ev: Ev) -> Result<(), ModelError> {
        self.stats.events += 1;
        match ev {
            Ev::Arrival { ru, class } => {
                let arrival = TrafficArrival {
                    arrive_at: now,
                    class,
                    ru_id: ru,
                    packet_id: self.next_packet,
                };
                self.next_packet += 1;
                self.rans[ru as usize].admit_arrival(&arrival)?;
                self.counters(class).generated += 1;
                self.schedule_arrival(q, ru, class)?;
            }
            Ev::Cycle(c) => {
                if c % self.cycles_per_slot == 0 && c > 0 {
                    self.slot_boundary(now, c / self.cycles_per_slot)?;
                }
                self.tier1_cycle(q, now, c)?;
                self.co_report(q, now)?;
                q.schedule(now + self.gc.period, Ev::Cycle(c + 1))?;
            }
            Ev::DuDone(id) => self.du_done(now, id)?,
            Ev::CoWindow { frames } => self.co_window(now, frames)?,
            Ev::Control(i) => {
                let msg = self.control[i].clone();
                self.topo.deliver(&msg)?;
                if !self.topo.memberships_disjoint() {
                    self.inv.slice_membership += 1;
                }
            }
        }
        Ok(())
    }

    fn counters(&mut self, class: TrafficClass) -> &mut ClassCounters {
        match class {
            TrafficClass::Urllc => &mut self.stats.urllc,
            TrafficClass::Normal => &mut self.stats.normal,
        }
    }

    /// Slot `n` ends: its fronthaul enters the ONU queues and the requests
    /// made at this boundary fix the grants of slot `n + 4`.
    fn slot_boundary(&mut self, now: SimTime, n: u64) -> Result<(), ModelError> {
        self.stats.slots += 1;
        for ru in 0..self.rans.len() {
            let state = self.rans[ru].finalize_slot(n)?;
            let occ = state.occupancy()?;
            for u in &state.normal {
                if u.request_slot.is_some_and(|r| n < r + GRANT_DELAY_SLOTS) {
                    self.inv.grant_delay += 1;
                }
            }
            let bytes = split72_slot_bytes(&self.split, occ.data_prbs)?;
            self.fronthaul_bytes += u128::from(bytes);
            let frames = frames_for(bytes);
            self.stats.fronthaul_frames += frames;
            if !self.onu_queues[ru].is_empty() {
                self.stats.fronthaul_carryover += 1;
            }
            let id = self.next_batch;
            self.next_batch += 1;
            self.onu_queues[ru].enqueue(id, frames, now);
            self.batches.insert(
                id,
                SlotBatch {
                    sent_at: now,
                    urllc: state.urllc,
                    normal: state.normal,
                    dequeued: now,
                    du_arrival: now,
                },
            );
            self.rans[ru].close_requests(n);
            self.plan_slot(ru, n + GRANT_DELAY_SLOTS)?;
        }
        Ok(())
    }

    fn tier1_cycle(&mut self, q: &mut Scheduler<Ev>, now: SimTime, c: u64) -> Result<(), ModelError> {
        let map = self.uplink.schedule_cycle(c);
        if !map.windows_disjoint(&self.gc) {
            self.inv.tdma_overlap += 1;
        }
        let proc = self.num.slot_time();
        for a in &map.allocations {
            let onu = a.onu as usize;
            for d in self.onu_queues[onu].transmit(now, a, &self.gc) {
                self.stats.fronthaul_frames_sent += d.frames;
                if !d.complete {
                    continue;
                }
                let b = self.batches.get_mut(&d.tag).expect("queued batch exists");
                b.dequeued = d.last_end;
                b.du_arrival = d.last_end + self.ru_delay[onu];
                if b.urllc.is_empty() && b.normal.is_empty() {
                    self.batches.remove(&d.tag);
                } else {
                    q.schedule(b.du_arrival + proc, Ev::DuDone(d.tag))?;
                }
            }
            let window_end = SimTime::from_nanos((now.as_nanos() * 1000 + a.end_ps()).div_ceil(1000));
            let queued = self.onu_queues[onu].queued_frames() as u32;
            self.uplink.report(a.onu, c, queued, window_end);
        }
        Ok(())
    }

    fn stamps(
        &mut self,
        u: &ScheduledUser,
        class: TrafficClass,
        ts: StageTimestamps,
    ) -> Result<(), ModelError> {
        if !ts.is_monotone() {
            self.inv.monotonicity += 1;
        }
        self.metrics.record_packet(u.packet_id, class, &ts)?;
        self.counters(class).delivered += 1;
        Ok(())
    }

    fn du_done(&mut self, now: SimTime, id: u64) -> Result<(), ModelError> {
        let b = self.batches.remove(&id).expect("processed batch exists");
        let base = StageTimestamps {
            ran_transmit: Some(b.sent_at),
            onu_enqueue: Some(b.sent_at),
            onu_dequeue: Some(b.dequeued),
            du_arrival: Some(b.du_arrival),
            du_done: Some(now),
            ..Default::default()
        };
        if !b.urllc.is_empty() {
            let bits = du_payload_per_slot(&self.payload, b.urllc.len() as u32)? * 1e6;
            let bytes = (bits / 8.0).ceil() as u64;
            self.stats.urllc.payload_bytes_out += bytes;
            if now >= self.tier2_active() && !self.topo.is_member(NodeId::mec_onu(2), TIER1_SLICE) {
                self.inv.slice_membership += 1;
            }
            let (_, app) = self.tier2.send(bytes, now).expect("non-empty payload");
            self.stats.urllc.payload_bytes_delivered += bytes;
            for u in &b.urllc {
                let ts = StageTimestamps {
                    ue_arrival: Some(u.arrive_at),
                    tier2_enqueue: Some(now),
                    app_arrival: Some(app),
                    ..base
                };
                self.stamps(u, TrafficClass::Urllc, ts)?;
            }
        }
        if !b.normal.is_empty() {
            let bits = du_payload_per_slot(&self.payload, b.normal.len() as u32)? * 1e6;
            let bytes = (bits / 8.0).ceil() as u64;
            self.stats.normal.payload_bytes_out += bytes;
            self.co_queue.enqueue(id, frames_for(bytes), now);
            self.co_batches.insert(
                id,
                CoBatch {
                    sent_at: b.sent_at,
                    dequeued: b.dequeued,
                    du_arrival: b.du_arrival,
                    du_done: now,
                    users: b.normal,
                    bytes,
                },
            );
        }
        Ok(())
    }

    fn tier2_active(&self) -> SimTime {
        SimTime::from_nanos(self.stats.tier2_active_at_ns)
    }

    /// The MEC-1 ONU reports its queue each cycle; the CO OLT answers with
    /// a grant whose window opens after the report and grant have crossed
    /// the feeder and the ONU has had its response time.
    fn co_report(&mut self, q: &mut Scheduler<Ev>, now: SimTime) -> Result<(), ModelError> {
        let queued = self.co_queue.queued_frames();
        let demand = queued.saturating_sub(self.co_outstanding);
        if demand == 0 {
            return Ok(());
        }
        let frames = demand.min(u64::from(self.gc.frames_per_cycle(1))) as u32;
        self.co_outstanding += u64::from(frames);
        let open = now + self.co_delay + self.co_delay + self.gc.period + self.gc.onu_response;
        q.schedule(open, Ev::CoWindow { frames })?;
        Ok(())
    }

    fn co_window(&mut self, now: SimTime, frames: u32) -> Result<(), ModelError> {
        self.co_outstanding -= u64::from(frames);
        let alloc = Allocation {
            onu: 0,
            frames,
            bytes: u64::from(frames) * FRAME_BYTES,
            start_ps: 0,
            len_ps: self.gc.guard.as_nanos() * 1000
                + u64::from(frames) * self.gc.frame_airtime_ps(),
        };
        for d in self.co_queue.transmit(now, &alloc, &self.gc) {
            if !d.complete {
                continue;
            }
            let b = self.co_batches.remove(&d.tag).expect("queued CO batch exists");
            let app = d.last_end + self.co_delay;
            self.stats.normal.payload_bytes_delivered += b.bytes;
            for u in &b.users {
                let ts = StageTimestamps {
                    ue_arrival: Some(u.arrive_at),
                    ran_transmit: Some(b.sent_at),
                    onu_enqueue: Some(b.sent_at),
                    onu_dequeue: Some(b.dequeued),
                    du_arrival: Some(b.du_arrival),
                    du_done: Some(b.du_done),
                    tier2_enqueue: None,
                    app_arrival: Some(app),
                };
                self.stamps(u, TrafficClass::Normal, ts)?;
            }
        }
        Ok(())
    }

    fn finish(mut self, cal: Calibration) -> RunResult {
        let mut in_flight = [0u64; 2];
        for r in &self.rans {
            in_flight[0] += r.queued_users_of(TrafficClass::Urllc) as u64;
            in_flight[1] += r.queued_users_of(TrafficClass::Normal) as u64;
        }
        for b in self.batches.values() {
            in_flight[0] += b.urllc.len() as u64;
            in_flight[1] += b.normal.len() as u64;
        }
        let mut co_bytes = 0;
        for b in self.co_batches.values() {
            in_flight[1] += b.users.len() as u64;
            co_bytes += b.bytes;
        }
        self.stats.urllc.in_flight = in_flight[0];
        self.stats.normal.in_flight = in_flight[1];
        self.stats.normal.payload_bytes_queued = co_bytes;
        self.stats.fronthaul_frames_queued = self.onu_queues.iter().map(|q| q.queued_frames()).sum();

        let mut broken = 0;
        for c in [&self.stats.urllc, &self.stats.normal] {
            broken += u64::from(c.generated != c.delivered + c.in_flight);
            broken += u64::from(c.payload_bytes_out != c.payload_bytes_delivered + c.payload_bytes_queued);
        }
        broken += u64::from(
            self.stats.fronthaul_frames
                != self.stats.fronthaul_frames_sent + self.stats.fronthaul_frames_queued,
        );
        self.inv.conservation = broken;
        for r in &self.rans {
            self.inv.deferred_urllc += r.deferred_urllc;
            self.inv.deferred_normal += r.deferred_normal;
        }
        self.stats.tier2_max_backlog_bytes = self.tier2.max_backlog_bytes();
        let secs = self.scenario.duration.as_secs_f64();
        self.stats.measured_load = self.fronthaul_bytes as f64 * 8.0 / secs / PON_CAPACITY_BPS;

        RunResult {
            scenario: self.scenario,
            calibration: cal,
            metrics: self.metrics,
            invariants: self.inv,
            stats: self.stats,
        }
    }
}

/// Runs one scenario to its configured duration.
pub fn run(scenario: &Scenario) -> Result<RunResult, ModelError> {
    let cal = calibrate(scenario)?;
    let mut model = Model::new(scenario.clone(), &cal)?;
    let mut q = Scheduler::new();
    model.init(&mut q)?;
    let end = scenario.duration;
    while let Some(ev) = q.pop_until(end) {
        model.handle(&mut q, ev.fire_at, ev.kind)?;
    }
    Ok(model.finish(cal))
}
