//! Physical wiring and link projection.
//!
//! The cabling of the physical switches is planned once: host ports first,
//! then inter-switch fibers, then self-links on adjacent port pairs, all in
//! ascending port order. A logical topology is then projected by handing
//! each logical link a free wiring element of the right kind. The ports a
//! logical switch ends up with form its sub-switch.

mod feasibility;
mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::partition::PartitionPlan;
use crate::topology::{HostIdx, LinkEnd, LinkIdx, LogicalTopology, PortNo, SwitchIdx, SwitchPort};

pub use feasibility::{feasibility_check, FeasibilityReport, PairRow, SwitchRow};
pub use manifest::{projection_hash, ManifestError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhysicalSwitch {
    pub id: String,
    pub num_ports: PortNo,
    pub table_capacity: usize,
}

impl PhysicalSwitch {
    pub fn new(id: impl Into<String>, num_ports: PortNo, table_capacity: usize) -> Self {
        PhysicalSwitch {
            id: id.into(),
            num_ports,
            table_capacity,
        }
    }
}

/// `count` identical switches named `sw0`, `sw1`, ...
pub fn uniform_inventory(
    count: usize,
    num_ports: PortNo,
    table_capacity: usize,
) -> Vec<PhysicalSwitch> {
    (0..count)
        .map(|i| PhysicalSwitch::new(format!("sw{i}"), num_ports, table_capacity))
        .collect()
}

/// A port of a physical switch, by inventory position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhysPort {
    pub switch: usize,
    pub port: PortNo,
}

impl PhysPort {
    pub fn new(switch: usize, port: PortNo) -> Self {
        PhysPort { switch, port }
    }
}

impl fmt::Display for PhysPort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.switch, self.port)
    }
}

/// A cable between two ports of the same switch, `low < high`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SelfLink {
    pub switch: usize,
    pub low: PortNo,
    pub high: PortNo,
}

/// A fiber between two switches, `a.switch < b.switch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct InterSwitchLink {
    pub a: PhysPort,
    pub b: PhysPort,
}

/// Role of a physical port in the wiring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortRole {
    /// Host-facing. `slot` counts host ports on this switch from zero.
    Host {
        slot: usize,
    },
    InterSwitch {
        link: usize,
        peer: PhysPort,
    },
    SelfLink {
        link: usize,
        peer: PortNo,
    },
    Free,
}

/// What each switch needs from the wiring.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WiringDemand {
    pub hosts: Vec<usize>,
    pub self_links: Vec<usize>,
    pub inter: BTreeMap<(usize, usize), usize>,
}

impl WiringDemand {
    pub fn new(num_switches: usize) -> Self {
        WiringDemand {
            hosts: vec![0; num_switches],
            self_links: vec![0; num_switches],
            inter: BTreeMap::new(),
        }
    }

    /// Demand of one partitioned topology, parts mapped to switches in order.
    pub fn for_plan(plan: &PartitionPlan) -> Self {
        WiringDemand {
            hosts: plan.host_links.clone(),
            self_links: plan.internal_edges.clone(),
            inter: plan.cut_edges_by_pair.clone(),
        }
    }

    pub fn num_switches(&self) -> usize {
        self.hosts.len().max(self.self_links.len())
    }

    /// Inter-switch endpoints on `switch`.
    pub fn inter_endpoints(&self, switch: usize) -> usize {
        self.inter
            .iter()
            .filter(|((x, y), _)| *x == switch || *y == switch)
            .map(|(_, c)| c)
            .sum()
    }

    pub fn ports_needed(&self, switch: usize) -> usize {
        self.hosts.get(switch).copied().unwrap_or(0)
            + self.inter_endpoints(switch)
            + 2 * self.self_links.get(switch).copied().unwrap_or(0)
    }

    fn combine(&mut self, other: &WiringDemand, f: impl Fn(usize, usize) -> usize) {
        let n = self.num_switches().max(other.num_switches());
        self.hosts.resize(n, 0);
        self.self_links.resize(n, 0);
        for i in 0..n {
            self.hosts[i] = f(self.hosts[i], other.hosts.get(i).copied().unwrap_or(0));
            self.self_links[i] = f(
                self.self_links[i],
                other.self_links.get(i).copied().unwrap_or(0),
            );
        }
        for (&pair, &c) in &other.inter {
            let slot = self.inter.entry(pair).or_insert(0);
            *slot = f(*slot, c);
        }
    }

    /// Element-wise maximum: enough wiring for either demand, one at a time.
    pub fn max_with(&mut self, other: &WiringDemand) {
        self.combine(other, usize::max);
    }

    /// Element-wise sum: enough wiring for both demands at once.
    pub fn add(&mut self, other: &WiringDemand) {
        self.combine(other, |a, b| a + b);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WiringError {
    #[error("switch {switch} needs {needed} ports but has {available} (short by {})", needed - available)]
    Shortfall {
        switch: String,
        needed: usize,
        available: usize,
    },
    #[error("demand names switch {index} but the inventory has {len} switches")]
    UnknownSwitch { index: usize, len: usize },
    #[error("inter-switch demand ({0}, {1}) is not an ordered pair of distinct switches")]
    BadPair(usize, usize),
}

/// The fixed physical cabling of an inventory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wiring {
    pub switches: Vec<PhysicalSwitch>,
    /// Host ports per switch, slot order.
    pub host_ports: Vec<Vec<PortNo>>,
    /// Sorted by switch pair, then ports.
    pub inter_switch_links: Vec<InterSwitchLink>,
    /// Sorted by switch, then ports.
    pub self_links: Vec<SelfLink>,
    roles: Vec<Vec<PortRole>>,
}

/// Cables the inventory for `demand`. Ports are handed out in ascending
/// order on each switch: host ports, inter-switch endpoints (by peer
/// switch), then self-links on consecutive pairs.
pub fn plan_wiring(
    inventory: &[PhysicalSwitch],
    demand: &WiringDemand,
) -> Result<Wiring, WiringError> {
    let n = inventory.len();
    if demand.num_switches() > n {
        let index = (n..demand.num_switches()).find(|&i| {
            demand.hosts.get(i).copied().unwrap_or(0)
                + demand.self_links.get(i).copied().unwrap_or(0)
                > 0
        });
        if let Some(index) = index {
            return Err(WiringError::UnknownSwitch { index, len: n });
        }
    }
    for &(x, y) in demand.inter.keys() {
        if x >= y {
            return Err(WiringError::BadPair(x, y));
        }
        if y >= n {
            return Err(WiringError::UnknownSwitch { index: y, len: n });
        }
    }
    for (i, sw) in inventory.iter().enumerate() {
        let needed = demand.ports_needed(i);
        if needed > sw.num_ports as usize {
            return Err(WiringError::Shortfall {
                switch: sw.id.clone(),
                needed,
                available: sw.num_ports as usize,
            });
        }
    }

    let mut next: Vec<PortNo> = vec![1; n];
    let mut take = |s: usize| {
        let p = next[s];
        next[s] += 1;
        p
    };
    let mut host_ports = vec![Vec::new(); n];
    for (s, ports) in host_ports.iter_mut().enumerate() {
        for _ in 0..demand.hosts.get(s).copied().unwrap_or(0) {
            ports.push(take(s));
        }
    }
    // Per switch, endpoints are taken pair by pair in pair order, so both
    // ends of the k-th fiber of a pair get increasing port numbers.
    let mut inter_switch_links = Vec::new();
    for (&(x, y), &count) in &demand.inter {
        for _ in 0..count {
            inter_switch_links.push(InterSwitchLink {
                a: PhysPort::new(x, 0),
                b: PhysPort::new(y, 0),
            });
        }
    }
    for s in 0..n {
        for link in inter_switch_links.iter_mut() {
            if link.a.switch == s {
                link.a.port = take(s);
            } else if link.b.switch == s {
                link.b.port = take(s);
            }
        }
    }
    let mut self_links = Vec::new();
    for s in 0..n {
        for _ in 0..demand.self_links.get(s).copied().unwrap_or(0) {
            let low = take(s);
            let high = take(s);
            self_links.push(SelfLink {
                switch: s,
                low,
                high,
            });
        }
    }
    Ok(Wiring::from_parts(
        inventory.to_vec(),
        host_ports,
        inter_switch_links,
        self_links,
    ))
}

impl Wiring {
    /// Assembles a wiring and indexes port roles. Callers guarantee ports
    /// are in range and used once.
    pub(crate) fn from_parts(
        switches: Vec<PhysicalSwitch>,
        host_ports: Vec<Vec<PortNo>>,
        inter_switch_links: Vec<InterSwitchLink>,
        self_links: Vec<SelfLink>,
    ) -> Self {
        let mut roles: Vec<Vec<PortRole>> = switches
            .iter()
            .map(|s| vec![PortRole::Free; s.num_ports as usize + 1])
            .collect();
        for (s, ports) in host_ports.iter().enumerate() {
            for (slot, &p) in ports.iter().enumerate() {
                roles[s][p as usize] = PortRole::Host { slot };
            }
        }
        for (i, l) in inter_switch_links.iter().enumerate() {
            roles[l.a.switch][l.a.port as usize] = PortRole::InterSwitch { link: i, peer: l.b };
            roles[l.b.switch][l.b.port as usize] = PortRole::InterSwitch { link: i, peer: l.a };
        }
        for (i, l) in self_links.iter().enumerate() {
            roles[l.switch][l.low as usize] = PortRole::SelfLink {
                link: i,
                peer: l.high,
            };
            roles[l.switch][l.high as usize] = PortRole::SelfLink {
                link: i,
                peer: l.low,
            };
        }
        Wiring {
            switches,
            host_ports,
            inter_switch_links,
            self_links,
            roles,
        }
    }

    pub fn empty(switches: Vec<PhysicalSwitch>) -> Self {
        let n = switches.len();
        Wiring::from_parts(switches, vec![Vec::new(); n], Vec::new(), Vec::new())
    }

    pub fn num_switches(&self) -> usize {
        self.switches.len()
    }

    /// Role of a port; out-of-range ports are `None`.
    pub fn role(&self, port: PhysPort) -> Option<PortRole> {
        if port.port == 0 {
            return None;
        }
        self.roles
            .get(port.switch)?
            .get(port.port as usize)
            .copied()
    }

    /// Where a frame leaving `port` arrives, if the port is cabled to
    /// another switch port.
    pub fn peer(&self, port: PhysPort) -> Option<PhysPort> {
        match self.role(port)? {
            PortRole::InterSwitch { peer, .. } => Some(peer),
            PortRole::SelfLink { peer, .. } => Some(PhysPort::new(port.switch, peer)),
            PortRole::Host { .. } | PortRole::Free => None,
        }
    }

    pub fn inter_count(&self, x: usize, y: usize) -> usize {
        let (x, y) = (x.min(y), x.max(y));
        self.inter_switch_links
            .iter()
            .filter(|l| l.a.switch == x && l.b.switch == y)
            .count()
    }

    pub fn self_link_count(&self, switch: usize) -> usize {
        self.self_links
            .iter()
            .filter(|l| l.switch == switch)
            .count()
    }

    pub fn ports_used(&self, switch: usize) -> usize {
        self.roles[switch]
            .iter()
            .skip(1)
            .filter(|r| **r != PortRole::Free)
            .count()
    }

    /// The demand this wiring was planned for.
    pub fn capacity(&self) -> WiringDemand {
        let n = self.num_switches();
        let mut d = WiringDemand::new(n);
        for s in 0..n {
            d.hosts[s] = self.host_ports[s].len();
            d.self_links[s] = self.self_link_count(s);
        }
        for l in &self.inter_switch_links {
            *d.inter.entry((l.a.switch, l.b.switch)).or_default() += 1;
        }
        d
    }
}

/// The wiring element carrying a logical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WiringElement {
    Host { port: PhysPort },
    SelfLink { index: usize, link: SelfLink },
    InterSwitch { index: usize, link: InterSwitchLink },
}

/// Result of projecting one topology onto a wiring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionMap {
    pub topology: String,
    /// Physical switch of each logical switch.
    pub placement: Vec<usize>,
    /// Indexed by [`LinkIdx`].
    pub link_map: Vec<WiringElement>,
    pub port_map: BTreeMap<SwitchPort, PhysPort>,
    /// Ports of each logical switch's sub-switch, indexed by [`SwitchIdx`].
    pub subswitches: Vec<BTreeSet<PhysPort>>,
    /// Host-facing port of each host, indexed by [`HostIdx`].
    pub host_map: Vec<PhysPort>,
    reverse: BTreeMap<PhysPort, SwitchPort>,
}

impl ProjectionMap {
    pub(crate) fn from_parts(
        topology: String,
        placement: Vec<usize>,
        link_map: Vec<WiringElement>,
        port_map: BTreeMap<SwitchPort, PhysPort>,
        host_map: Vec<PhysPort>,
    ) -> Self {
        let mut subswitches = vec![BTreeSet::new(); placement.len()];
        let mut reverse = BTreeMap::new();
        for (&lp, &pp) in &port_map {
            subswitches[lp.switch.0].insert(pp);
            reverse.insert(pp, lp);
        }
        ProjectionMap {
            topology,
            placement,
            link_map,
            port_map,
            subswitches,
            host_map,
            reverse,
        }
    }

    pub fn empty(topology: impl Into<String>) -> Self {
        ProjectionMap::from_parts(
            topology.into(),
            Vec::new(),
            Vec::new(),
            BTreeMap::new(),
            Vec::new(),
        )
    }

    /// Logical port projected onto `port`, if any.
    pub fn logical_port(&self, port: PhysPort) -> Option<SwitchPort> {
        self.reverse.get(&port).copied()
    }

    pub fn physical_port(&self, port: SwitchPort) -> Option<PhysPort> {
        self.port_map.get(&port).copied()
    }

    pub fn subswitch(&self, switch: SwitchIdx) -> &BTreeSet<PhysPort> {
        &self.subswitches[switch.0]
    }

    pub fn host_port(&self, host: HostIdx) -> PhysPort {
        self.host_map[host.0]
    }

    /// All physical ports this projection occupies.
    pub fn ports(&self) -> impl Iterator<Item = PhysPort> + '_ {
        self.reverse.keys().copied()
    }

    /// Number of inter-switch wiring elements carrying logical links, per
    /// switch pair.
    pub fn inter_usage(&self) -> BTreeMap<(usize, usize), usize> {
        let mut m = BTreeMap::new();
        for e in &self.link_map {
            if let WiringElement::InterSwitch { link, .. } = e {
                *m.entry((link.a.switch, link.b.switch)).or_default() += 1;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProjectionError {
    #[error("plan has {parts} parts but the wiring has {switches} switches")]
    TooManyParts { parts: usize, switches: usize },
    #[error("plan does not cover topology `{0}`")]
    PlanMismatch(String),
    #[error("switch {switch} has no free host port left for host `{host}`")]
    HostPortsExhausted { switch: String, host: String },
    #[error("switch {switch} has no free self-link left for {link}")]
    SelfLinksExhausted { switch: String, link: String },
    #[error("no free inter-switch link between {a} and {b} for {link}")]
    InterSwitchExhausted { a: String, b: String, link: String },
}

/// Hands out wiring elements lowest-free first. One projector serves any
/// number of topologies that are deployed at the same time; topologies
/// deployed one at a time each get a fresh projector over the same wiring.
pub struct Projector<'w> {
    wiring: &'w Wiring,
    host_used: Vec<usize>,
    self_used: Vec<bool>,
    inter_used: Vec<bool>,
}

impl<'w> Projector<'w> {
    pub fn new(wiring: &'w Wiring) -> Self {
        Projector {
            wiring,
            host_used: vec![0; wiring.num_switches()],
            self_used: vec![false; wiring.self_links.len()],
            inter_used: vec![false; wiring.inter_switch_links.len()],
        }
    }

    pub fn wiring(&self) -> &'w Wiring {
        self.wiring
    }

    /// Projects `topology` with part `p` of `plan` on physical switch `p`.
    pub fn project(
        &mut self,
        topology: &LogicalTopology,
        plan: &PartitionPlan,
    ) -> Result<ProjectionMap, ProjectionError> {
        self.project_placed(topology, &plan.assignment, plan.num_parts)
    }

    /// Projects with an explicit physical switch per logical switch.
    pub fn project_placed(
        &mut self,
        topology: &LogicalTopology,
        placement: &[usize],
        num_parts: usize,
    ) -> Result<ProjectionMap, ProjectionError> {
        let w = self.wiring;
        if num_parts > w.num_switches() && !topology.is_empty() {
            return Err(ProjectionError::TooManyParts {
                parts: num_parts,
                switches: w.num_switches(),
            });
        }
        if placement.len() != topology.switches().len()
            || placement.iter().any(|&p| p >= w.num_switches())
        {
            return Err(ProjectionError::PlanMismatch(topology.name.clone()));
        }
        // Work on copies so a failed projection leaves the projector as-is.
        let mut host_used = self.host_used.clone();
        let mut self_used = self.self_used.clone();
        let mut inter_used = self.inter_used.clone();

        let mut link_map = Vec::with_capacity(topology.links().len());
        let mut port_map = BTreeMap::new();
        let mut host_map = vec![PhysPort::new(0, 0); topology.hosts().len()];
        for l in topology.link_indices() {
            let link = topology.link(l);
            let pa = placement[link.a.switch.0];
            let element = match link.b {
                LinkEnd::Host(h) => {
                    let slot = host_used[pa];
                    let Some(&port) = w.host_ports[pa].get(slot) else {
                        return Err(ProjectionError::HostPortsExhausted {
                            switch: w.switches[pa].id.clone(),
                            host: topology.host(h).name.clone(),
                        });
                    };
                    host_used[pa] += 1;
                    let port = PhysPort::new(pa, port);
                    port_map.insert(link.a, port);
                    host_map[h.0] = port;
                    WiringElement::Host { port }
                }
                LinkEnd::Switch(b) => {
                    let pb = placement[b.switch.0];
                    if pa == pb {
                        let found = w
                            .self_links
                            .iter()
                            .enumerate()
                            .find(|(i, s)| s.switch == pa && !self_used[*i]);
                        let Some((index, &sl)) = found else {
                            return Err(ProjectionError::SelfLinksExhausted {
                                switch: w.switches[pa].id.clone(),
                                link: topology.describe_link(l),
                            });
                        };
                        self_used[index] = true;
                        port_map.insert(link.a, PhysPort::new(pa, sl.low));
                        port_map.insert(b, PhysPort::new(pa, sl.high));
                        WiringElement::SelfLink { index, link: sl }
                    } else {
                        let (x, y) = (pa.min(pb), pa.max(pb));
                        let found = w.inter_switch_links.iter().enumerate().find(|(i, il)| {
                            il.a.switch == x && il.b.switch == y && !inter_used[*i]
                        });
                        let Some((index, &il)) = found else {
                            return Err(ProjectionError::InterSwitchExhausted {
                                a: w.switches[x].id.clone(),
                                b: w.switches[y].id.clone(),
                                link: topology.describe_link(l),
                            });
                        };
                        inter_used[index] = true;
                        let (on_a, on_b) = if pa == x { (il.a, il.b) } else { (il.b, il.a) };
                        port_map.insert(link.a, on_a);
                        port_map.insert(b, on_b);
                        WiringElement::InterSwitch { index, link: il }
                    }
                }
            };
            link_map.push(element);
        }
        self.host_used = host_used;
        self.self_used = self_used;
        self.inter_used = inter_used;
        Ok(ProjectionMap::from_parts(
            topology.name.clone(),
            placement.to_vec(),
            link_map,
            port_map,
            host_map,
        ))
    }
}

/// Projects a single topology onto a fresh wiring.
pub fn project(
    topology: &LogicalTopology,
    plan: &PartitionPlan,
    wiring: &Wiring,
) -> Result<ProjectionMap, ProjectionError> {
    Projector::new(wiring).project(topology, plan)
}

/// Checks the structural invariants of a projection against its topology
/// and wiring, returning a description of the first violation.
pub fn check_projection(
    topology: &LogicalTopology,
    wiring: &Wiring,
    map: &ProjectionMap,
) -> Result<(), String> {
    if map.link_map.len() != topology.links().len() {
        return Err(format!(
            "{} links mapped, topology has {}",
            map.link_map.len(),
            topology.links().len()
        ));
    }
    let mut seen = BTreeSet::new();
    for (i, e) in map.link_map.iter().enumerate() {
        let key = match e {
            WiringElement::Host { port } => (0, port.switch, port.port as usize),
            WiringElement::SelfLink { index, .. } => (1, 0, *index),
            WiringElement::InterSwitch { index, .. } => (2, 0, *index),
        };
        if !seen.insert(key) {
            return Err(format!(
                "wiring element of {} carries two links",
                topology.describe_link(LinkIdx(i))
            ));
        }
    }
    let mut physical = BTreeSet::new();
    for (&lp, &pp) in &map.port_map {
        if !physical.insert(pp) {
            return Err(format!("physical port {pp} used twice"));
        }
        if pp.switch != map.placement[lp.switch.0] {
            return Err(format!(
                "{} projected off its physical switch",
                topology.describe_port(lp)
            ));
        }
        if wiring.role(pp).is_none_or(|r| r == PortRole::Free) {
            return Err(format!("physical port {pp} is not cabled"));
        }
    }
    for s in topology.switch_indices() {
        if map.subswitch(s).len() != topology.degree(s) {
            return Err(format!(
                "sub-switch of {} has {} ports, expected {}",
                topology.switch(s).name,
                map.subswitch(s).len(),
                topology.degree(s)
            ));
        }
    }
    Ok(())
}
