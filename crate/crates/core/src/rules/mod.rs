//! Flow rules that carve sub-switches out of physical switches.
//!
//! Each physical switch runs a two-table pipeline. Table 0 admits frames
//! from the ports of a projection and stamps them with metadata naming the
//! topology and the logical switch the port belongs to; anything else is
//! dropped. Table 1 holds the route rules, matched on that metadata, the
//! ingress port, the destination address and the VC the frame carries. A
//! miss in table 1 drops the frame.

mod capacity;
mod export;
mod merge;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::projection::{PhysPort, ProjectionMap, Wiring};
use crate::routing::{Route, Vc};
use crate::topology::{HostIdx, LogicalTopology, PortNo, SwitchIdx, SwitchPort};

pub use capacity::{capacity_check, CapacityReport, CapacityRow, Mitigation};
pub use export::{parse_rules, ExportFormat, RuleParseError};
pub use merge::{merge_entries, merge_rulesets};

pub const PRIORITY_DOMAIN_DROP: u16 = 0;
pub const PRIORITY_DOMAIN_PERMIT: u16 = 10;
pub const PRIORITY_MERGED: u16 = 50;
pub const PRIORITY_ROUTE: u16 = 100;

pub const TABLE_DOMAIN: u8 = 0;
pub const TABLE_ROUTE: u8 = 1;

/// MAC-like host address `02:00:TT:HH:HH:HH`: topology tag, then host index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HostAddr(pub u64);

impl HostAddr {
    pub fn new(tag: u8, host: HostIdx) -> Self {
        HostAddr((0x02 << 40) | (u64::from(tag) << 24) | (host.0 as u64 & 0xff_ffff))
    }

    pub fn tag(self) -> u8 {
        (self.0 >> 24) as u8
    }

    pub fn host(self) -> HostIdx {
        HostIdx((self.0 & 0xff_ffff) as usize)
    }

    pub(crate) fn octets(self) -> [u8; 6] {
        let b = self.0.to_be_bytes();
        [b[2], b[3], b[4], b[5], b[6], b[7]]
    }
}

impl fmt::Display for HostAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.octets();
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

/// Metadata written by table 0: topology tag and logical switch index.
pub fn metadata(tag: u8, switch: SwitchIdx) -> u32 {
    (u32::from(tag) << 16) | (switch.0 as u32 & 0xffff)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DstMatch {
    Host(HostAddr),
    /// Any host of the topology with this tag.
    Topology(u8),
}

impl DstMatch {
    pub fn matches(&self, dst: HostAddr) -> bool {
        match *self {
            DstMatch::Host(a) => a == dst,
            DstMatch::Topology(tag) => dst.tag() == tag && dst.0 >> 40 == 0x02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Match {
    pub in_port: PortNo,
    pub metadata: Option<u32>,
    pub dst: Option<DstMatch>,
    pub vc: Option<Vc>,
}

impl Match {
    pub fn port(in_port: PortNo) -> Self {
        Match {
            in_port,
            metadata: None,
            dst: None,
            vc: None,
        }
    }

    pub fn matches(&self, in_port: PortNo, meta: u32, dst: HostAddr, vc: Vc) -> bool {
        self.in_port == in_port
            && self.metadata.is_none_or(|m| m == meta)
            && self.dst.is_none_or(|d| d.matches(dst))
            && self.vc.is_none_or(|v| v == vc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Drop,
    /// Table 0 admit: write metadata and continue in table 1.
    Admit {
        metadata: u32,
    },
    Output {
        port: PortNo,
        set_vc: Option<Vc>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowRule {
    pub table: u8,
    pub priority: u16,
    pub matches: Match,
    pub action: Action,
}

/// Rules of one topology on one physical switch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    pub switch: usize,
    pub switch_id: String,
    pub topology: String,
    pub tag: u8,
    /// Hosts of the topology; addresses are `HostAddr::new(tag, 0..num_hosts)`.
    pub num_hosts: usize,
    pub projection_hash: String,
    rules: Vec<FlowRule>,
}

impl RuleSet {
    pub fn new(
        switch: usize,
        switch_id: impl Into<String>,
        topology: impl Into<String>,
        tag: u8,
        num_hosts: usize,
        projection_hash: impl Into<String>,
    ) -> Self {
        RuleSet {
            switch,
            switch_id: switch_id.into(),
            topology: topology.into(),
            tag,
            num_hosts,
            projection_hash: projection_hash.into(),
            rules: Vec::new(),
        }
    }

    /// Rules by table, then descending priority, then insertion order.
    pub fn rules(&self) -> &[FlowRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn push(&mut self, rule: FlowRule) {
        let pos = self.rules.partition_point(|r| {
            (r.table, std::cmp::Reverse(r.priority))
                <= (rule.table, std::cmp::Reverse(rule.priority))
        });
        self.rules.insert(pos, rule);
    }

    pub(crate) fn replace_rules(&mut self, rules: Vec<FlowRule>) {
        self.rules.clear();
        for r in rules {
            self.push(r);
        }
    }

    /// First rule of `table` matching the frame, in table order.
    pub fn lookup(
        &self,
        table: u8,
        in_port: PortNo,
        meta: u32,
        dst: HostAddr,
        vc: Vc,
    ) -> Option<&FlowRule> {
        self.rules
            .iter()
            .filter(|r| r.table == table)
            .find(|r| r.matches.matches(in_port, meta, dst, vc))
    }

    /// Runs both tables for a frame entering on `in_port`. `None` means
    /// the frame is dropped (explicitly or by a miss).
    pub fn forward(&self, in_port: PortNo, dst: HostAddr, vc: Vc) -> Option<(PortNo, Vc)> {
        let Action::Admit { metadata } = self.lookup(TABLE_DOMAIN, in_port, 0, dst, vc)?.action
        else {
            return None;
        };
        match self.lookup(TABLE_ROUTE, in_port, metadata, dst, vc)?.action {
            Action::Output { port, set_vc } => Some((port, set_vc.unwrap_or(vc))),
            Action::Drop | Action::Admit { .. } => None,
        }
    }

    pub fn ports(&self) -> impl Iterator<Item = PortNo> + '_ {
        self.rules.iter().flat_map(|r| {
            let out = match r.action {
                Action::Output { port, .. } => Some(port),
                _ => None,
            };
            std::iter::once(r.matches.in_port).chain(out)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("logical port {0} is not projected")]
    Unmapped(String),
    #[error("logical switch {switch} spans physical switches {a} and {b}")]
    Split { switch: String, a: usize, b: usize },
    #[error("projection places a port on physical switch {0}, which does not exist")]
    UnknownSwitch(usize),
    #[error("conflicting route rules on {switch} for in_port {in_port}, dst {dst}, vc {vc}")]
    RuleConflict {
        switch: String,
        in_port: PortNo,
        dst: HostAddr,
        vc: Vc,
    },
    #[error("topology has {0} hosts; addresses hold at most 2^24")]
    TooManyHosts(usize),
}

fn empty_sets(wiring: &Wiring, topology: &LogicalTopology, tag: u8, hash: &str) -> Vec<RuleSet> {
    wiring
        .switches
        .iter()
        .enumerate()
        .map(|(i, s)| RuleSet::new(i, &s.id, &topology.name, tag, topology.hosts().len(), hash))
        .collect()
}

/// Table 0: for every projected port, drop by default and admit at
/// higher priority with the metadata of the port's logical switch.
pub fn domain_rules(
    topology: &LogicalTopology,
    projection: &ProjectionMap,
    wiring: &Wiring,
    tag: u8,
    projection_hash: &str,
) -> Result<Vec<RuleSet>, RuleError> {
    let mut sets = empty_sets(wiring, topology, tag, projection_hash);
    for (&lp, &pp) in &projection.port_map {
        let set = sets
            .get_mut(pp.switch)
            .ok_or(RuleError::UnknownSwitch(pp.switch))?;
        set.push(FlowRule {
            table: TABLE_DOMAIN,
            priority: PRIORITY_DOMAIN_DROP,
            matches: Match::port(pp.port),
            action: Action::Drop,
        });
        set.push(FlowRule {
            table: TABLE_DOMAIN,
            priority: PRIORITY_DOMAIN_PERMIT,
            matches: Match::port(pp.port),
            action: Action::Admit {
                metadata: metadata(tag, lp.switch),
            },
        });
    }
    Ok(sets)
}

/// Table 1: one rule per route hop, deduplicated.
pub fn route_rules(
    topology: &LogicalTopology,
    routes: &[Route],
    projection: &ProjectionMap,
    wiring: &Wiring,
    tag: u8,
    projection_hash: &str,
) -> Result<Vec<RuleSet>, RuleError> {
    if topology.hosts().len() > 0xff_ffff {
        return Err(RuleError::TooManyHosts(topology.hosts().len()));
    }
    let mut table: Vec<BTreeMap<Match, Action>> = vec![BTreeMap::new(); wiring.num_switches()];
    let phys = |p: SwitchPort| -> Result<PhysPort, RuleError> {
        projection
            .physical_port(p)
            .ok_or_else(|| RuleError::Unmapped(topology.describe_port(p)))
    };
    for route in routes {
        let dst = HostAddr::new(tag, route.dst);
        for (i, hop) in route.hops.iter().enumerate() {
            let ingress = phys(SwitchPort::new(hop.switch, hop.in_port))?;
            let egress = phys(SwitchPort::new(hop.switch, hop.out_port))?;
            if ingress.switch != egress.switch {
                return Err(RuleError::Split {
                    switch: topology.switch(hop.switch).name.clone(),
                    a: ingress.switch,
                    b: egress.switch,
                });
            }
            let in_vc = route.in_vc(i);
            let m = Match {
                in_port: ingress.port,
                metadata: Some(metadata(tag, hop.switch)),
                dst: Some(DstMatch::Host(dst)),
                vc: Some(in_vc),
            };
            let a = Action::Output {
                port: egress.port,
                set_vc: (hop.vc != in_vc).then_some(hop.vc),
            };
            let slot = table
                .get_mut(ingress.switch)
                .ok_or(RuleError::UnknownSwitch(ingress.switch))?;
            if let Some(prev) = slot.insert(m, a) {
                if prev != a {
                    return Err(RuleError::RuleConflict {
                        switch: wiring.switches[ingress.switch].id.clone(),
                        in_port: ingress.port,
                        dst,
                        vc: in_vc,
                    });
                }
            }
        }
    }
    let mut sets = empty_sets(wiring, topology, tag, projection_hash);
    for (set, entries) in sets.iter_mut().zip(table) {
        for (matches, action) in entries {
            set.push(FlowRule {
                table: TABLE_ROUTE,
                priority: PRIORITY_ROUTE,
                matches,
                action,
            });
        }
    }
    Ok(sets)
}

/// Domain and route rules together, one set per physical switch.
pub fn compile_rules(
    topology: &LogicalTopology,
    routes: &[Route],
    projection: &ProjectionMap,
    wiring: &Wiring,
    tag: u8,
    projection_hash: &str,
) -> Result<Vec<RuleSet>, RuleError> {
    let mut sets = domain_rules(topology, projection, wiring, tag, projection_hash)?;
    for (set, routed) in sets.iter_mut().zip(route_rules(
        topology,
        routes,
        projection,
        wiring,
        tag,
        projection_hash,
    )?) {
        for r in routed.rules {
            set.push(r);
        }
    }
    Ok(sets)
}

/// Checks that every route rule outputs within the sub-switch its
/// metadata names and that the ingress port belongs to it too.
pub fn check_domain(
    topology: &LogicalTopology,
    projection: &ProjectionMap,
    sets: &[RuleSet],
) -> Result<(), String> {
    for set in sets {
        for r in set.rules() {
            let Action::Output { port, .. } = r.action else {
                continue;
            };
            let Some(meta) = r.matches.metadata else {
                return Err(format!("{}: output rule without metadata", set.switch_id));
            };
            let s = SwitchIdx((meta & 0xffff) as usize);
            if s.0 >= topology.switches().len() {
                return Err(format!(
                    "{}: metadata {meta:#x} names no switch",
                    set.switch_id
                ));
            }
            let group = projection.subswitch(s);
            for p in [r.matches.in_port, port] {
                if !group.contains(&PhysPort::new(set.switch, p)) {
                    return Err(format!(
                        "{}: port {p} is outside the sub-switch of {}",
                        set.switch_id,
                        topology.switch(s).name
                    ));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
