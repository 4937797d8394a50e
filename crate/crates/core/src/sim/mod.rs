//! Frame-level fabric simulator.
//!
//! A [`SimFabric`] holds the physical wiring, the rule sets of every
//! installed topology and per-port counters. Frames are forwarded in zero
//! time: at each physical switch the combined table picks an output port,
//! the wire moves the frame to the peer port, and the walk ends at a host
//! port, on a drop, or when the hop budget runs out.

mod verify;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::projection::{check_projection, projection_hash, PhysPort, ProjectionMap, Wiring};
use crate::routing::{PortLoad, Vc};
use crate::rules::{FlowRule, HostAddr, RuleSet};
use crate::topology::{HostIdx, LogicalTopology, PortNo, SwitchIdx};

pub use verify::{
    render_sweep, EquivalenceReport, IsolationVerdict, IsolationViolation, PairMismatch, SweepStats,
};

pub const DEFAULT_TTL: u32 = 64;

/// A host of one installed topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HostRef {
    pub topology: usize,
    pub host: HostIdx,
}

impl HostRef {
    pub fn new(topology: usize, host: HostIdx) -> Self {
        HostRef { topology, host }
    }
}

/// One physical switch traversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TraceHop {
    pub switch: usize,
    pub in_port: PortNo,
    pub out_port: PortNo,
    /// VC the frame leaves on.
    pub vc: Vc,
}

impl TraceHop {
    pub fn ingress(&self) -> PhysPort {
        PhysPort::new(self.switch, self.in_port)
    }

    pub fn egress(&self) -> PhysPort {
        PhysPort::new(self.switch, self.out_port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub src: HostRef,
    pub dst: HostRef,
    pub vc: Vc,
    pub ttl: u32,
    pub trace: Vec<TraceHop>,
}

impl Frame {
    pub fn new(src: HostRef, dst: HostRef) -> Self {
        Frame {
            src,
            dst,
            vc: 0,
            ttl: DEFAULT_TTL,
            trace: Vec::new(),
        }
    }

    pub fn with_ttl(mut self, ttl: u32) -> Self {
        self.ttl = ttl;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DropReason {
    /// Table miss or an explicit drop rule.
    NoRule,
    /// Output to a port with neither a wire nor a host behind it.
    NoWire,
    /// Reached a host port, but not the destination's.
    WrongHost(HostRef),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Delivered,
    Dropped { at: PhysPort, reason: DropReason },
    TtlExpired { at: PhysPort },
}

impl Outcome {
    pub fn delivered(&self) -> bool {
        matches!(self, Outcome::Delivered)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub frame: Frame,
    pub outcome: Outcome,
    /// Traversals whose ingress and egress belong to different
    /// sub-switches. The frame is still forwarded.
    pub containment: Vec<TraceHop>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PortCount {
    pub rx: u64,
    pub tx: u64,
}

/// Snapshot of per-port frame counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counters {
    ports: Vec<Vec<PortCount>>,
}

impl Counters {
    fn zeroed(wiring: &Wiring) -> Self {
        Counters {
            ports: wiring
                .switches
                .iter()
                .map(|s| vec![PortCount::default(); s.num_ports as usize + 1])
                .collect(),
        }
    }

    pub fn get(&self, port: PhysPort) -> PortCount {
        self.ports
            .get(port.switch)
            .and_then(|p| p.get(port.port as usize))
            .copied()
            .unwrap_or_default()
    }

    /// Ports with a nonzero count.
    pub fn nonzero(&self) -> impl Iterator<Item = (PhysPort, PortCount)> + '_ {
        self.ports.iter().enumerate().flat_map(|(s, ports)| {
            ports
                .iter()
                .enumerate()
                .filter(|(_, c)| c.rx + c.tx > 0)
                .map(move |(p, c)| (PhysPort::new(s, p as PortNo), *c))
        })
    }

    pub fn is_zero(&self) -> bool {
        self.nonzero().next().is_none()
    }

    /// Columnar dump: `switch port rx tx`, nonzero ports only.
    pub fn render(&self, wiring: &Wiring) -> String {
        let mut out = String::from("switch port rx tx\n");
        for (p, c) in self.nonzero() {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                wiring.switches[p.switch].id, p.port, c.rx, c.tx
            );
        }
        out
    }

    fn bump(&mut self, port: PhysPort, rx: bool) {
        if let Some(c) = self
            .ports
            .get_mut(port.switch)
            .and_then(|p| p.get_mut(port.port as usize))
        {
            if rx {
                c.rx += 1;
            } else {
                c.tx += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("{found} rule sets for a fabric of {expected} switches")]
    SwitchCount { expected: usize, found: usize },
    #[error("rule set for {switch} was compiled against projection {found}, expected {expected}")]
    HashMismatch {
        switch: String,
        expected: String,
        found: String,
    },
    #[error("rule on {switch} references port {port}, which the projection does not own")]
    UnknownPort { switch: String, port: PortNo },
    #[error("rule set for {switch} claims switch index {index}")]
    MisplacedRuleSet { switch: String, index: usize },
    #[error("projection does not match the wiring: {0}")]
    WiringMismatch(String),
    #[error("tag {0} is already installed")]
    TagInUse(u8),
    #[error("port {0} is already owned by topology {1}")]
    PortInUse(PhysPort, String),
}

#[derive(Debug, Clone)]
pub struct Installed {
    pub topology: LogicalTopology,
    pub map: ProjectionMap,
    pub tag: u8,
    pub hash: String,
}

#[derive(Debug, Clone)]
pub struct SimFabric {
    wiring: Wiring,
    installed: Vec<Installed>,
    tables: Vec<RuleSet>,
    owner: BTreeMap<PhysPort, usize>,
    host_at: BTreeMap<PhysPort, HostRef>,
    counters: Counters,
    tie_warnings: usize,
}

impl SimFabric {
    pub fn new(wiring: Wiring) -> Self {
        let tables = wiring
            .switches
            .iter()
            .enumerate()
            .map(|(i, s)| RuleSet::new(i, &s.id, "*", 0, 0, ""))
            .collect();
        let counters = Counters::zeroed(&wiring);
        SimFabric {
            wiring,
            installed: Vec::new(),
            tables,
            owner: BTreeMap::new(),
            host_at: BTreeMap::new(),
            counters,
            tie_warnings: 0,
        }
    }

    /// Fabric with a single topology installed.
    pub fn load(
        topology: &LogicalTopology,
        map: &ProjectionMap,
        sets: &[RuleSet],
        wiring: &Wiring,
    ) -> Result<Self, SimError> {
        let mut f = SimFabric::new(wiring.clone());
        f.install(topology, map, sets)?;
        Ok(f)
    }

    /// Adds a topology's rules to the fabric and returns its index for
    /// [`HostRef`]. Counters are zeroed.
    pub fn install(
        &mut self,
        topology: &LogicalTopology,
        map: &ProjectionMap,
        sets: &[RuleSet],
    ) -> Result<usize, SimError> {
        let wiring = &self.wiring;
        if sets.len() != wiring.num_switches() {
            return Err(SimError::SwitchCount {
                expected: wiring.num_switches(),
                found: sets.len(),
            });
        }
        check_projection(topology, wiring, map).map_err(SimError::WiringMismatch)?;
        let hash = projection_hash(topology, wiring, map);
        let tag = sets.first().map_or(0, |s| s.tag);
        if self.installed.iter().any(|i| i.tag == tag) {
            return Err(SimError::TagInUse(tag));
        }
        let index = self.installed.len();
        for p in map.ports() {
            if let Some(&other) = self.owner.get(&p) {
                return Err(SimError::PortInUse(
                    p,
                    self.installed[other].topology.name.clone(),
                ));
            }
        }
        for (i, set) in sets.iter().enumerate() {
            if set.switch != i {
                return Err(SimError::MisplacedRuleSet {
                    switch: set.switch_id.clone(),
                    index: set.switch,
                });
            }
            if set.projection_hash != hash {
                return Err(SimError::HashMismatch {
                    switch: set.switch_id.clone(),
                    expected: hash.clone(),
                    found: set.projection_hash.clone(),
                });
            }
            if let Some(port) = set
                .ports()
                .find(|&p| map.logical_port(PhysPort::new(i, p)).is_none())
            {
                return Err(SimError::UnknownPort {
                    switch: set.switch_id.clone(),
                    port,
                });
            }
        }
        for p in map.ports() {
            self.owner.insert(p, index);
        }
        for h in topology.host_indices() {
            self.host_at
                .insert(map.host_port(h), HostRef::new(index, h));
        }
        for (table, set) in self.tables.iter_mut().zip(sets) {
            for r in set.rules() {
                if let Some(other) = table.rules().iter().find(|o| ties(o, r)) {
                    log::warn!(
                        "{}: equal-priority overlap {:?} / {:?}; first installed wins",
                        set.switch_id,
                        other,
                        r
                    );
                    self.tie_warnings += 1;
                }
                table.push(*r);
            }
        }
        self.installed.push(Installed {
            topology: topology.clone(),
            map: map.clone(),
            tag,
            hash,
        });
        self.reset_counters();
        Ok(index)
    }

    pub fn wiring(&self) -> &Wiring {
        &self.wiring
    }

    pub fn installed(&self) -> &[Installed] {
        &self.installed
    }

    /// Combined table of one physical switch.
    pub fn table(&self, switch: usize) -> &RuleSet {
        &self.tables[switch]
    }

    /// Swaps one rule of a physical table in place, skipping every install
    /// check, the way a misprogrammed switch would hold it. Returns false
    /// if `index` is out of range.
    pub fn corrupt_rule(&mut self, switch: usize, index: usize, rule: FlowRule) -> bool {
        let table = &mut self.tables[switch];
        if index >= table.len() {
            return false;
        }
        let mut rules = table.rules().to_vec();
        rules[index] = rule;
        table.replace_rules(rules);
        true
    }

    pub fn tie_warnings(&self) -> usize {
        self.tie_warnings
    }

    /// Every host of topology `t`.
    pub fn hosts(&self, t: usize) -> Vec<HostRef> {
        self.installed[t]
            .topology
            .host_indices()
            .map(|h| HostRef::new(t, h))
            .collect()
    }

    pub fn all_hosts(&self) -> Vec<HostRef> {
        (0..self.installed.len())
            .flat_map(|t| self.hosts(t))
            .collect()
    }

    pub fn host_port(&self, h: HostRef) -> PhysPort {
        self.installed[h.topology].map.host_port(h.host)
    }

    pub fn host_name(&self, h: HostRef) -> String {
        let i = &self.installed[h.topology];
        format!("{}/{}", i.topology.name, i.topology.host(h.host).name)
    }

    pub fn address(&self, h: HostRef) -> HostAddr {
        HostAddr::new(self.installed[h.topology].tag, h.host)
    }

    /// Topology owning a physical port, if any.
    pub fn owner(&self, port: PhysPort) -> Option<usize> {
        self.owner.get(&port).copied()
    }

    /// Logical switch behind a physical port.
    pub fn subswitch_of(&self, port: PhysPort) -> Option<(usize, SwitchIdx)> {
        let t = self.owner(port)?;
        Some((t, self.installed[t].map.logical_port(port)?.switch))
    }

    /// Number of logical links realized in total.
    pub fn links_realized(&self) -> usize {
        self.installed.iter().map(|i| i.map.link_map.len()).sum()
    }

    pub fn inject(&mut self, mut frame: Frame) -> DeliveryRecord {
        let addr = self.address(frame.dst);
        let mut at = self.host_port(frame.src);
        let mut containment = Vec::new();
        let outcome = loop {
            if frame.ttl == 0 {
                break Outcome::TtlExpired { at };
            }
            self.counters.bump(at, true);
            let Some((out, vc)) = self.tables[at.switch].forward(at.port, addr, frame.vc) else {
                break Outcome::Dropped {
                    at,
                    reason: DropReason::NoRule,
                };
            };
            frame.ttl -= 1;
            let hop = TraceHop {
                switch: at.switch,
                in_port: at.port,
                out_port: out,
                vc,
            };
            frame.trace.push(hop);
            frame.vc = vc;
            let egress = hop.egress();
            self.counters.bump(egress, false);
            if self.subswitch_of(hop.ingress()) != self.subswitch_of(egress) {
                containment.push(hop);
            }
            if let Some(peer) = self.wiring.peer(egress) {
                at = peer;
                continue;
            }
            break match self.host_at.get(&egress) {
                Some(&h) if h == frame.dst => Outcome::Delivered,
                Some(&h) => Outcome::Dropped {
                    at: egress,
                    reason: DropReason::WrongHost(h),
                },
                None => Outcome::Dropped {
                    at: egress,
                    reason: DropReason::NoWire,
                },
            };
        };
        DeliveryRecord {
            frame,
            outcome,
            containment,
        }
    }

    pub fn read_counters(&self) -> Counters {
        self.counters.clone()
    }

    pub fn reset_counters(&mut self) {
        self.counters = Counters::zeroed(&self.wiring);
    }

    /// Transmit counts of topology `t`'s ports, keyed by logical port, in
    /// the form the adaptive router takes.
    pub fn logical_load(&self, t: usize) -> PortLoad {
        self.installed[t]
            .map
            .port_map
            .iter()
            .map(|(&lp, &pp)| (lp, self.counters.get(pp).tx))
            .collect()
    }

    /// `m[i][j]` is whether a frame from `hosts[i]` reaches `hosts[j]`;
    /// the diagonal is true.
    pub fn reachability_matrix(&mut self, hosts: &[HostRef]) -> Vec<Vec<bool>> {
        hosts
            .iter()
            .map(|&s| {
                hosts
                    .iter()
                    .map(|&d| s == d || self.inject(Frame::new(s, d)).outcome.delivered())
                    .collect()
            })
            .collect()
    }
}

fn overlaps<T: PartialEq>(a: Option<T>, b: Option<T>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

/// Equal priority, same table, a frame could match both, and the actions
/// differ.
fn ties(a: &FlowRule, b: &FlowRule) -> bool {
    use crate::rules::DstMatch;
    let dst_overlap = match (a.matches.dst, b.matches.dst) {
        (Some(DstMatch::Host(x)), Some(DstMatch::Host(y))) => x == y,
        (Some(DstMatch::Host(x)), Some(DstMatch::Topology(t)))
        | (Some(DstMatch::Topology(t)), Some(DstMatch::Host(x))) => x.tag() == t,
        (Some(DstMatch::Topology(x)), Some(DstMatch::Topology(y))) => x == y,
        _ => true,
    };
    a.table == b.table
        && a.priority == b.priority
        && a.action != b.action
        && a.matches.in_port == b.matches.in_port
        && overlaps(a.matches.metadata, b.matches.metadata)
        && overlaps(a.matches.vc, b.matches.vc)
        && dst_overlap
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Delivered => f.write_str("delivered"),
            Outcome::Dropped {
                at,
                reason: DropReason::NoRule,
            } => write!(f, "dropped at {at} (no rule)"),
            Outcome::Dropped {
                at,
                reason: DropReason::NoWire,
            } => write!(f, "dropped at {at} (unwired port)"),
            Outcome::Dropped {
                at,
                reason: DropReason::WrongHost(h),
            } => {
                write!(
                    f,
                    "dropped at {at} (reached host {} of topology {})",
                    h.host.0, h.topology
                )
            }
            Outcome::TtlExpired { at } => write!(f, "ttl expired at {at}"),
        }
    }
}

#[cfg(test)]
mod tests;
