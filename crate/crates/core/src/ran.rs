//! Per-RU radio scheduling: CGS pool for URLLC, request/grant pipeline for
//! normal traffic, slot occupancy and the lookahead report sent to the OLT.
//!
//! Slot `n` is the NR slot whose fronthaul leaves the RU at boundary
//! `n * T_slot`, i.e. it occupies the air interface during
//! `[(n - 1) * T_slot, n * T_slot)`. A URLLC user arriving at `t` therefore
//! transmits on CGS resources in slot `floor(t / T_slot) + 1`, while a normal
//! user issues its request at that boundary and is granted PRBs four slots
//! later.

use std::collections::BTreeMap;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

pub const PRBS_PER_USER: u32 = 5;
/// Slots between a scheduling request and the slot it is granted in.
pub const GRANT_DELAY_SLOTS: u64 = 4;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RanError {
    #[error("unsupported numerology mu={0} (expected 1 or 2)")]
    UnsupportedNumerology(u8),
    #[error("CGS fraction {0} outside [0, 1)")]
    CgsFraction(f64),
    #[error("slot {slot} is already finalized (last finalized {last})")]
    SlotFinalized { slot: u64, last: u64 },
    #[error("slot {0} has not been finalized")]
    NotFinalized(u64),
    #[error("grants for slot {slot} not decided yet (decided through {decided})")]
    NotDecided { slot: u64, decided: u64 },
    #[error("slots must be finalized in order: expected {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
}

/// NR numerology for a 100 MHz carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Numerology {
    mu: u8,
}

impl Numerology {
    pub fn new(mu: u8) -> Result<Self, RanError> {
        match mu {
            1 | 2 => Ok(Numerology { mu }),
            other => Err(RanError::UnsupportedNumerology(other)),
        }
    }

    pub fn mu(&self) -> u8 {
        self.mu
    }

    pub fn slot_time(&self) -> SimTime {
        SimTime::from_nanos(1_000_000 >> self.mu)
    }

    pub fn slot_time_s(&self) -> f64 {
        1e-3 / f64::from(1u32 << self.mu)
    }

    pub fn max_prbs(&self) -> u32 {
        match self.mu {
            1 => 270,
            _ => 135,
        }
    }

    /// OFDM symbol duration including cyclic prefix: 1 ms / (14 * 2^mu).
    pub fn symbol_time_s(&self) -> f64 {
        1e-3 / (14.0 * f64::from(1u32 << self.mu))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgsConfig {
    pub reserved_fraction: f64,
    pub reserved_prbs: u32,
}

impl CgsConfig {
    pub fn new(reserved_fraction: f64, num: &Numerology) -> Result<Self, RanError> {
        if !(0.0..1.0).contains(&reserved_fraction) {
            return Err(RanError::CgsFraction(reserved_fraction));
        }
        let reserved_prbs = (reserved_fraction * f64::from(num.max_prbs()) + 1e-9).floor() as u32;
        Ok(CgsConfig {
            reserved_fraction,
            reserved_prbs,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficClass {
    Urllc,
    Normal,
}

impl TrafficClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrafficClass::Urllc => "urllc",
            TrafficClass::Normal => "normal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrafficArrival {
    pub arrive_at: SimTime,
    pub class: TrafficClass,
    pub ru_id: u32,
    pub packet_id: u64,
}

/// A user admitted into a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledUser {
    pub packet_id: u64,
    pub arrive_at: SimTime,
    /// Boundary at which the scheduling request was issued (normal only).
    pub request_slot: Option<u64>,
}

/// PRB grid of one NR slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotState {
    pub slot_index: u64,
    pub cgs_used: u32,
    pub dyn_used: u32,
    pub urllc: Vec<ScheduledUser>,
    pub normal: Vec<ScheduledUser>,
    finalized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occupancy {
    pub data_prbs: u32,
    pub urllc_users: u32,
    pub normal_users: u32,
}

impl SlotState {
    fn new(slot_index: u64) -> Self {
        SlotState {
            slot_index,
            cgs_used: 0,
            dyn_used: 0,
            urllc: Vec::new(),
            normal: Vec::new(),
            finalized: false,
        }
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    /// Data-carrying PRB count and per-class user counts of a finalized slot.
    pub fn occupancy(&self) -> Result<Occupancy, RanError> {
        if !self.finalized {
            return Err(RanError::NotFinalized(self.slot_index));
        }
        Ok(Occupancy {
            data_prbs: self.cgs_used + self.dyn_used,
            urllc_users: self.urllc.len() as u32,
            normal_users: self.normal.len() as u32,
        })
    }

    /// Per-PRB data flags: CGS PRBs occupy the low end of the grid, dynamic
    /// PRBs start right after the CGS reservation.
    pub fn data_flags(&self, max_prbs: u32, cgs_reserved: u32) -> BitVec {
        let mut flags = bitvec![0; max_prbs as usize];
        flags[..self.cgs_used as usize].fill(true);
        let start = cgs_reserved as usize;
        flags[start..start + self.dyn_used as usize].fill(true);
        flags
    }
}

/// Scheduling information for one future slot, passed from the DU to the OLT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtiReport {
    pub target_slot: u64,
    pub ru_id: u32,
    pub scheduled_normal_prbs: u32,
    /// Full semi-static CGS reservation, independent of actual use.
    pub cgs_reserved_prbs: u32,
}

/// Radio scheduler of one RU.
#[derive(Debug, Clone)]
pub struct RanScheduler {
    ru_id: u32,
    num: Numerology,
    cgs: CgsConfig,
    slots: BTreeMap<u64, SlotState>,
    /// Index of the last finalized slot; slot 0 carries no traffic.
    last_finalized: u64,
    /// Requests from boundaries up to this one have been processed.
    requests_closed: u64,
    pub deferred_urllc: u64,
    pub deferred_normal: u64,
}

impl RanScheduler {
    pub fn new(ru_id: u32, num: Numerology, cgs: CgsConfig) -> Self {
        RanScheduler {
            ru_id,
            num,
            cgs,
            slots: BTreeMap::new(),
            last_finalized: 0,
            requests_closed: 0,
            deferred_urllc: 0,
            deferred_normal: 0,
        }
    }

    pub fn ru_id(&self) -> u32 {
        self.ru_id
    }

    pub fn numerology(&self) -> Numerology {
        self.num
    }

    pub fn cgs(&self) -> CgsConfig {
        self.cgs
    }

    fn dyn_capacity(&self) -> u32 {
        self.num.max_prbs() - self.cgs.reserved_prbs
    }

    /// First slot boundary strictly after `t`.
    pub fn next_boundary_slot(&self, t: SimTime) -> u64 {
        t.as_nanos() / self.num.slot_time().as_nanos() + 1
    }

    /// Places the arrival into the first slot with room in its pool and
    /// returns that slot index.
    pub fn admit_arrival(&mut self, arrival: &TrafficArrival) -> Result<u64, RanError> {
        let first = self.next_boundary_slot(arrival.arrive_at);
        match arrival.class {
            TrafficClass::Urllc => {
                if first <= self.last_finalized {
                    return Err(RanError::SlotFinalized {
                        slot: first,
                        last: self.last_finalized,
                    });
                }
                let cap = self.cgs.reserved_prbs;
                let slot = self.first_fit(first, |s| s.cgs_used + PRBS_PER_USER <= cap);
                if slot != first {
                    self.deferred_urllc += 1;
                }
                let s = self.slots.get_mut(&slot).expect("first_fit inserts");
                s.cgs_used += PRBS_PER_USER;
                s.urllc.push(ScheduledUser {
                    packet_id: arrival.packet_id,
                    arrive_at: arrival.arrive_at,
                    request_slot: None,
                });
                Ok(slot)
            }
            TrafficClass::Normal => {
                let request = first;
                if request <= self.requests_closed {
                    return Err(RanError::SlotFinalized {
                        slot: request,
                        last: self.requests_closed,
                    });
                }
                let target = request + GRANT_DELAY_SLOTS;
                let cap = self.dyn_capacity();
                let slot = self.first_fit(target, |s| s.dyn_used + PRBS_PER_USER <= cap);
                if slot != target {
                    self.deferred_normal += 1;
                }
                let s = self.slots.get_mut(&slot).expect("first_fit inserts");
                s.dyn_used += PRBS_PER_USER;
                s.normal.push(ScheduledUser {
                    packet_id: arrival.packet_id,
                    arrive_at: arrival.arrive_at,
                    request_slot: Some(request),
                });
                Ok(slot)
            }
        }
    }

    fn first_fit(&mut self, from: u64, fits: impl Fn(&SlotState) -> bool) -> u64 {
        let mut slot = from;
        loop {
            let s = self.slots.entry(slot).or_insert_with(|| SlotState::new(slot));
            if fits(s) {
                return slot;
            }
            slot += 1;
        }
    }

    /// Marks all requests issued at boundaries `<= boundary` as processed,
    /// which fixes the normal-traffic grants of every slot up to
    /// `boundary + 4`.
    pub fn close_requests(&mut self, boundary: u64) {
        self.requests_closed = self.requests_closed.max(boundary);
    }

    pub fn decided_through(&self) -> u64 {
        self.requests_closed + GRANT_DELAY_SLOTS
    }

    /// Normal-traffic grants of `slot` plus the full CGS reservation.
    pub fn cti_lookahead(&self, slot: u64) -> Result<CtiReport, RanError> {
        if slot > self.decided_through() {
            return Err(RanError::NotDecided {
                slot,
                decided: self.decided_through(),
            });
        }
        let dyn_used = self.slots.get(&slot).map_or(0, |s| s.dyn_used);
        Ok(CtiReport {
            target_slot: slot,
            ru_id: self.ru_id,
            scheduled_normal_prbs: dyn_used,
            cgs_reserved_prbs: self.cgs.reserved_prbs,
        })
    }

    /// Closes slot `n`; its fronthaul leaves the RU now.
    pub fn finalize_slot(&mut self, n: u64) -> Result<SlotState, RanError> {
        if n != self.last_finalized + 1 {
            return Err(RanError::OutOfOrder {
                expected: self.last_finalized + 1,
                got: n,
            });
        }
        self.last_finalized = n;
        let mut s = self.slots.remove(&n).unwrap_or_else(|| SlotState::new(n));
        s.finalized = true;
        Ok(s)
    }

    /// Users admitted into slots that have not been finalized yet.
    pub fn queued_users(&self) -> usize {
        self.slots.values().map(|s| s.urllc.len() + s.normal.len()).sum()
    }

    pub fn queued_users_of(&self, class: TrafficClass) -> usize {
        self.slots
            .values()
            .map(|s| match class {
                TrafficClass::Urllc => s.urllc.len(),
                TrafficClass::Normal => s.normal.len(),
            })
            .sum()
    }
}
