//! MESH-PON node graph, fiber delays and vPON slice membership.
//!
//! Co-located equipment (the OLT and ONU of one MEC site) shares a site in
//! the fiber graph; the RU-to-MEC-1 and MEC-1-to-MEC-2 links are the
//! splitter-loopback paths and never traverse the central office.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

pub const FIBER_DELAY_NS_PER_KM: f64 = 4_500.0;
pub const PON_CAPACITY_BPS: f64 = 50e9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TopologyError {
    #[error("link {a}-{b} has non-positive length {km} km")]
    BadLength { a: NodeId, b: NodeId, km: f64 },
    #[error("no fiber path between {0} and {1}")]
    NoPath(NodeId, NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("topology is disconnected: {0} unreachable")]
    Disconnected(NodeId),
    #[error("{0} is not an ONU")]
    NotAnOnu(NodeId),
    #[error("{onu} is already a member of slice {slice}")]
    AlreadyMember { onu: NodeId, slice: SliceId },
    #[error("{onu} must be on the control channel before joining slice {slice}")]
    NotOnControlChannel { onu: NodeId, slice: SliceId },
    #[error("{0} is being retuned")]
    InTransition(NodeId),
    #[error("unknown slice {0}")]
    UnknownSlice(SliceId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    RuOnu,
    MecOlt,
    MecOnu,
    CoOlt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: u32,
}

impl NodeId {
    pub const CO_OLT: NodeId = NodeId::new(NodeKind::CoOlt, 0);

    pub const fn new(kind: NodeKind, index: u32) -> Self {
        NodeId { kind, index }
    }

    pub const fn ru_onu(i: u32) -> Self {
        NodeId::new(NodeKind::RuOnu, i)
    }

    pub const fn mec_olt(i: u32) -> Self {
        NodeId::new(NodeKind::MecOlt, i)
    }

    pub const fn mec_onu(i: u32) -> Self {
        NodeId::new(NodeKind::MecOnu, i)
    }

    pub fn is_onu(&self) -> bool {
        matches!(self.kind, NodeKind::RuOnu | NodeKind::MecOnu)
    }

    fn site(&self) -> Site {
        match self.kind {
            NodeKind::RuOnu => Site::Ru(self.index),
            NodeKind::MecOlt | NodeKind::MecOnu => Site::Mec(self.index),
            NodeKind::CoOlt => Site::Co,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            NodeKind::RuOnu => "RU-ONU",
            NodeKind::MecOlt => "MEC-OLT",
            NodeKind::MecOnu => "MEC-ONU",
            NodeKind::CoOlt => "CO-OLT",
        };
        write!(f, "{k}-{}", self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Site {
    Ru(u32),
    Mec(u32),
    Co,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub distance_km: f64,
}

impl Link {
    pub fn delay(&self) -> SimTime {
        km_to_delay(self.distance_km)
    }
}

fn km_to_delay(km: f64) -> SimTime {
    SimTime::from_nanos((km * FIBER_DELAY_NS_PER_KM).round() as u64)
}

/// End-to-end fiber path lengths of the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub n_rus: u32,
    pub ru_mec_km: f64,
    pub mec_mec_km: f64,
    pub mec_co_km: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            n_rus: 1,
            ru_mec_km: 2.0,
            mec_mec_km: 20.0,
            mec_co_km: 50.0,
        }
    }
}

pub type SliceId = u32;

pub const CONTROL_SLICE: SliceId = 0;
pub const TIER1_SLICE: SliceId = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VponSlice {
    pub id: SliceId,
    pub olt: NodeId,
    pub members: BTreeSet<NodeId>,
    pub wavelength: String,
    pub uplink_capacity_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlKind {
    SliceAdd,
    SliceRemove,
    TuneAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlMessage {
    pub kind: ControlKind,
    pub from: NodeId,
    pub target: NodeId,
    /// ONU whose membership the message concerns.
    pub onu: NodeId,
    pub slice: SliceId,
    pub sent_at: SimTime,
    pub delivered_at: SimTime,
}

#[derive(Debug, Clone)]
pub struct Topology {
    config: TopologyConfig,
    links: Vec<Link>,
    site_delay: BTreeMap<(Site, Site), SimTime>,
    slices: BTreeMap<SliceId, VponSlice>,
    /// ONUs between leaving one slice and their TUNE_ACK being delivered.
    in_transition: BTreeMap<NodeId, SliceId>,
    retune_time: SimTime,
}

impl Topology {
    /// Builds the default two-MEC mesh: RU ONUs on OLT-1's slice, both MEC
    /// ONUs on the CO control channel.
    pub fn build(config: TopologyConfig) -> Result<Self, TopologyError> {
        let mut links: Vec<Link> = (0..config.n_rus)
            .map(|i| Link {
                a: NodeId::ru_onu(i),
                b: NodeId::mec_olt(1),
                distance_km: config.ru_mec_km,
            })
            .collect();
        links.push(Link {
            a: NodeId::mec_olt(1),
            b: NodeId::mec_onu(2),
            distance_km: config.mec_mec_km,
        });
        for m in 1..=2 {
            links.push(Link {
                a: NodeId::mec_onu(m),
                b: NodeId::CO_OLT,
                distance_km: config.mec_co_km,
            });
        }

        let mut slices = BTreeMap::new();
        slices.insert(
            CONTROL_SLICE,
            VponSlice {
                id: CONTROL_SLICE,
                olt: NodeId::CO_OLT,
                members: [NodeId::mec_onu(1), NodeId::mec_onu(2)].into(),
                wavelength: "ctrl".into(),
                uplink_capacity_bps: PON_CAPACITY_BPS,
            },
        );
        slices.insert(
            TIER1_SLICE,
            VponSlice {
                id: TIER1_SLICE,
                olt: NodeId::mec_olt(1),
                members: (0..config.n_rus).map(NodeId::ru_onu).collect(),
                wavelength: "tier1".into(),
                uplink_capacity_bps: PON_CAPACITY_BPS,
            },
        );
        Self::from_parts(config, links, slices)
    }

    pub fn from_parts(
        config: TopologyConfig,
        links: Vec<Link>,
        slices: BTreeMap<SliceId, VponSlice>,
    ) -> Result<Self, TopologyError> {
        for l in &links {
            if !(l.distance_km > 0.0) || !l.distance_km.is_finite() {
                return Err(TopologyError::BadLength {
                    a: l.a,
                    b: l.b,
                    km: l.distance_km,
                });
            }
        }
        let mut graph: UnGraph<Site, f64> = UnGraph::new_undirected();
        let mut index: BTreeMap<Site, NodeIndex> = BTreeMap::new();
        let mut node_for_site: BTreeMap<Site, NodeId> = BTreeMap::new();
        for l in &links {
            for n in [l.a, l.b] {
                let site = n.site();
                node_for_site.entry(site).or_insert(n);
                index.entry(site).or_insert_with(|| graph.add_node(site));
            }
            if l.a.site() != l.b.site() {
                graph.add_edge(index[&l.a.site()], index[&l.b.site()], l.distance_km);
            }
        }
        let mut site_delay = BTreeMap::new();
        for (&from, &ni) in &index {
            let dist = dijkstra(&graph, ni, None, |e| *e.weight());
            for (&to, &nj) in &index {
                match dist.get(&nj) {
                    Some(km) => {
                        site_delay.insert((from, to), km_to_delay(*km));
                    }
                    None => return Err(TopologyError::Disconnected(node_for_site[&to])),
                }
            }
        }
        Ok(Topology {
            config,
            links,
            site_delay,
            slices,
            in_transition: BTreeMap::new(),
            retune_time: SimTime::from_micros(35),
        })
    }

    pub fn config(&self) -> &TopologyConfig {
        &self.config
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn with_retune_time(mut self, t: SimTime) -> Self {
        self.retune_time = t;
        self
    }

    /// One-way fiber delay along the shortest path.
    pub fn propagation_delay(&self, a: NodeId, b: NodeId) -> Result<SimTime, TopologyError> {
        let (sa, sb) = (a.site(), b.site());
        if sa == sb && self.site_delay.contains_key(&(sa, sa)) {
            return Ok(SimTime::ZERO);
        }
        self.site_delay
            .get(&(sa, sb))
            .copied()
            .ok_or_else(|| {
                if self.site_delay.keys().any(|(s, _)| *s == sa) {
                    TopologyError::NoPath(a, b)
                } else {
                    TopologyError::UnknownNode(a)
                }
            })
    }

    pub fn slice(&self, id: SliceId) -> Option<&VponSlice> {
        self.slices.get(&id)
    }

    pub fn slices(&self) -> impl Iterator<Item = &VponSlice> {
        self.slices.values()
    }

    /// Slice the ONU currently belongs to; `None` while it is retuning.
    pub fn slice_of(&self, onu: NodeId) -> Option<SliceId> {
        self.slices
            .values()
            .find(|s| s.members.contains(&onu))
            .map(|s| s.id)
    }

    pub fn is_member(&self, onu: NodeId, slice: SliceId) -> bool {
        self.slices
            .get(&slice)
            .is_some_and(|s| s.members.contains(&onu))
    }

    /// Checks that no ONU appears in two slices.
    pub fn memberships_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.slices
            .values()
            .flat_map(|s| s.members.iter())
            .all(|m| seen.insert(*m))
    }

    /// Starts moving `onu` into `slice` and returns the PLOAM transcript.
    ///
    /// The ONU leaves its current slice immediately (it receives no grants
    /// while retuning) and joins the target once the TUNE_ACK in the
    /// transcript is passed to [`Topology::deliver`].
    pub fn reconfigure_slice(
        &mut self,
        slice: SliceId,
        onu: NodeId,
        at: SimTime,
    ) -> Result<Vec<ControlMessage>, TopologyError> {
        if !onu.is_onu() {
            return Err(TopologyError::NotAnOnu(onu));
        }
        let target_olt = self
            .slices
            .get(&slice)
            .ok_or(TopologyError::UnknownSlice(slice))?
            .olt;
        if self.in_transition.contains_key(&onu) {
            return Err(TopologyError::InTransition(onu));
        }
        let current = self.slice_of(onu);
        if current == Some(slice) {
            return Err(TopologyError::AlreadyMember { onu, slice });
        }
        if slice != CONTROL_SLICE && current != Some(CONTROL_SLICE) {
            return Err(TopologyError::NotOnControlChannel { onu, slice });
        }
        let current = current.ok_or(TopologyError::NotOnControlChannel { onu, slice })?;
        let current_olt = self.slices[&current].olt;

        let msg = |kind, from: NodeId, target: NodeId, sent_at: SimTime| -> Result<_, _> {
            Ok(ControlMessage {
                kind,
                from,
                target,
                onu,
                slice,
                sent_at,
                delivered_at: sent_at + self.propagation_delay(from, target)?,
            })
        };

        let co = NodeId::CO_OLT;
        let mut transcript = Vec::new();
        let onu_notified = if slice == CONTROL_SLICE {
            // The ONU is reachable only through its current slice OLT.
            let to_olt = msg(ControlKind::SliceRemove, co, current_olt, at)?;
            let relay = msg(ControlKind::SliceRemove, current_olt, onu, to_olt.delivered_at)?;
            let t = relay.delivered_at;
            transcript.extend([to_olt, relay]);
            t
        } else {
            let to_olt = msg(ControlKind::SliceAdd, co, target_olt, at)?;
            let to_onu = msg(ControlKind::SliceAdd, co, onu, at)?;
            let t = to_onu.delivered_at;
            transcript.extend([to_olt, to_onu]);
            t
        };
        let ack = msg(ControlKind::TuneAck, onu, target_olt, onu_notified + self.retune_time)?;
        transcript.push(ack);

        if let Some(s) = self.slices.get_mut(&current) {
            s.members.remove(&onu);
        }
        self.in_transition.insert(onu, slice);
        Ok(transcript)
    }

    /// Applies a delivered control message; a TUNE_ACK completes the move.
    pub fn deliver(&mut self, msg: &ControlMessage) -> Result<(), TopologyError> {
        if msg.kind != ControlKind::TuneAck {
            return Ok(());
        }
        if self.in_transition.remove(&msg.onu).is_some() {
            self.slices
                .get_mut(&msg.slice)
                .ok_or(TopologyError::UnknownSlice(msg.slice))?
                .members
                .insert(msg.onu);
        }
        Ok(())
    }

    /// Completion time of a transcript: delivery of its TUNE_ACK.
    pub fn completion_time(transcript: &[ControlMessage]) -> Option<SimTime> {
        transcript
            .iter()
            .filter(|m| m.kind == ControlKind::TuneAck)
            .map(|m| m.delivered_at)
            .max()
    }
}
