use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use crate::projection::PhysPort;
use crate::routing::Route;
use crate::topology::SwitchPort;

use super::{DeliveryRecord, DropReason, Frame, HostRef, Outcome, SimFabric};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepStats {
    pub injected: usize,
    pub delivered: usize,
    pub dropped: usize,
    pub expired: usize,
}

impl SweepStats {
    pub fn record(&mut self, outcome: &Outcome) {
        self.injected += 1;
        match outcome {
            Outcome::Delivered => self.delivered += 1,
            Outcome::Dropped { .. } => self.dropped += 1,
            Outcome::TtlExpired { .. } => self.expired += 1,
        }
    }

    pub fn conserved(&self) -> bool {
        self.delivered + self.dropped + self.expired == self.injected
    }
}

impl fmt::Display for SweepStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "injected {} delivered {} dropped {} ttl-expired {}",
            self.injected, self.delivered, self.dropped, self.expired
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairMismatch {
    pub src: String,
    pub dst: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub topology: String,
    pub pairs: usize,
    pub equivalent: usize,
    pub mismatches: Vec<PairMismatch>,
    pub stats: SweepStats,
}

impl EquivalenceReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty() && self.equivalent == self.pairs
    }
}

impl fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.ok() {
            "equivalent"
        } else {
            "NOT equivalent"
        };
        writeln!(
            f,
            "equivalence {}: {}/{} pairs {verdict}",
            self.topology, self.equivalent, self.pairs
        )?;
        writeln!(f, "  {}", self.stats)?;
        for m in self.mismatches.iter().take(20) {
            writeln!(f, "  {} -> {}: {}", m.src, m.dst, m.detail)?;
        }
        if self.mismatches.len() > 20 {
            writeln!(f, "  ... {} more", self.mismatches.len() - 20)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IsolationViolation {
    /// A frame between groups reached a host.
    CrossDelivery(DeliveryRecord),
    /// A trace touched a port owned by another group.
    ForeignPort {
        record: DeliveryRecord,
        port: PhysPort,
    },
}

impl IsolationViolation {
    pub fn record(&self) -> &DeliveryRecord {
        match self {
            IsolationViolation::CrossDelivery(r)
            | IsolationViolation::ForeignPort { record: r, .. } => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsolationVerdict {
    pub pairs: usize,
    pub cross_pairs: usize,
    pub cross_deliveries: usize,
    pub foreign_appearances: usize,
    pub violations: Vec<IsolationViolation>,
    pub stats: SweepStats,
}

impl IsolationVerdict {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn witness(&self) -> Option<&DeliveryRecord> {
        self.violations.first().map(IsolationViolation::record)
    }
}

impl SimFabric {
    /// Injects every route's pair and checks that the frame is delivered
    /// along exactly the route: one physical traversal per logical hop,
    /// through the ports and on the VCs the route names.
    pub fn equivalence_check(&mut self, t: usize, routes: &[Route]) -> EquivalenceReport {
        let mut report = EquivalenceReport {
            topology: self.installed[t].topology.name.clone(),
            pairs: 0,
            equivalent: 0,
            mismatches: Vec::new(),
            stats: SweepStats::default(),
        };
        for route in routes.iter().filter(|r| r.src != r.dst) {
            report.pairs += 1;
            let (src, dst) = (HostRef::new(t, route.src), HostRef::new(t, route.dst));
            let rec = self.inject(Frame::new(src, dst));
            report.stats.record(&rec.outcome);
            match self.compare(t, route, &rec) {
                None => report.equivalent += 1,
                Some(detail) => report.mismatches.push(PairMismatch {
                    src: self.host_name(src),
                    dst: self.host_name(dst),
                    detail,
                }),
            }
        }
        report
    }

    fn compare(&self, t: usize, route: &Route, rec: &DeliveryRecord) -> Option<String> {
        if !rec.outcome.delivered() {
            return Some(rec.outcome.to_string());
        }
        let trace = &rec.frame.trace;
        if trace.len() != route.hops.len() {
            return Some(format!(
                "{} physical traversals for {} logical hops",
                trace.len(),
                route.hops.len()
            ));
        }
        let map = &self.installed[t].map;
        let topo = &self.installed[t].topology;
        for (i, (th, hop)) in trace.iter().zip(&route.hops).enumerate() {
            let want = [
                SwitchPort::new(hop.switch, hop.in_port),
                SwitchPort::new(hop.switch, hop.out_port),
            ];
            let got = [
                map.logical_port(th.ingress()),
                map.logical_port(th.egress()),
            ];
            if got != [Some(want[0]), Some(want[1])] {
                let show = |p: Option<SwitchPort>| {
                    p.map_or("unmapped".to_string(), |p| topo.describe_port(p))
                };
                return Some(format!(
                    "hop {i}: went {} > {}, route says {} > {}",
                    show(got[0]),
                    show(got[1]),
                    topo.describe_port(want[0]),
                    topo.describe_port(want[1])
                ));
            }
            if th.vc != hop.vc {
                return Some(format!(
                    "hop {i}: left on vc {}, route says {}",
                    th.vc, hop.vc
                ));
            }
        }
        if !rec.containment.is_empty() {
            return Some(format!(
                "{} traversals crossed sub-switches",
                rec.containment.len()
            ));
        }
        None
    }

    /// Sweeps every ordered pair of hosts in `groups`. Frames between
    /// groups must all be dropped, and no frame may touch a port owned by a
    /// topology of another group.
    pub fn isolation_check(&mut self, groups: &[Vec<HostRef>]) -> IsolationVerdict {
        let group_of_topology = |t: usize| {
            groups
                .iter()
                .position(|g| g.iter().any(|h| h.topology == t))
        };
        let members: Vec<(usize, HostRef)> = groups
            .iter()
            .enumerate()
            .flat_map(|(g, hs)| hs.iter().map(move |&h| (g, h)))
            .collect();
        let mut verdict = IsolationVerdict {
            pairs: 0,
            cross_pairs: 0,
            cross_deliveries: 0,
            foreign_appearances: 0,
            violations: Vec::new(),
            stats: SweepStats::default(),
        };
        for &(gs, src) in &members {
            for &(gd, dst) in &members {
                if src == dst {
                    continue;
                }
                verdict.pairs += 1;
                let rec = self.inject(Frame::new(src, dst));
                verdict.stats.record(&rec.outcome);
                let reached = match rec.outcome {
                    Outcome::Delivered => Some(dst),
                    Outcome::Dropped {
                        reason: DropReason::WrongHost(h),
                        ..
                    } => Some(h),
                    _ => None,
                };
                if gs != gd {
                    verdict.cross_pairs += 1;
                }
                let foreign: BTreeSet<PhysPort> = rec
                    .frame
                    .trace
                    .iter()
                    .flat_map(|h| [h.ingress(), h.egress()])
                    .filter(|&p| {
                        self.owner(p)
                            .and_then(group_of_topology)
                            .is_some_and(|g| g != gs)
                    })
                    .collect();
                let crossed = reached.is_some_and(|h| group_of_topology(h.topology) != Some(gs));
                if crossed {
                    verdict.cross_deliveries += 1;
                    verdict
                        .violations
                        .push(IsolationViolation::CrossDelivery(rec.clone()));
                }
                if let Some(&port) = foreign.iter().next() {
                    verdict.foreign_appearances += foreign.len();
                    verdict
                        .violations
                        .push(IsolationViolation::ForeignPort { record: rec, port });
                }
            }
        }
        verdict
    }
}

impl fmt::Display for IsolationVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.ok() {
            "isolated"
        } else {
            "NOT isolated"
        };
        writeln!(
            f,
            "isolation: {verdict}; {} pairs ({} cross-group), {} cross deliveries, {} foreign port appearances",
            self.pairs, self.cross_pairs, self.cross_deliveries, self.foreign_appearances
        )?;
        writeln!(f, "  {}", self.stats)?;
        if let Some(v) = self.violations.first() {
            let r = v.record();
            let what = match v {
                IsolationViolation::CrossDelivery(_) => "cross delivery".to_string(),
                IsolationViolation::ForeignPort { port, .. } => format!("foreign port {port}"),
            };
            writeln!(
                f,
                "  witness: {}:{} -> {}:{} {what}, {}",
                r.frame.src.topology,
                r.frame.src.host.0,
                r.frame.dst.topology,
                r.frame.dst.host.0,
                r.outcome
            )?;
        }
        Ok(())
    }
}

/// Per-pair outcome table: `src dst hops outcome`.
pub fn render_sweep(fabric: &SimFabric, records: &[DeliveryRecord]) -> String {
    let mut out = String::from("src dst hops outcome\n");
    for r in records {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            fabric.host_name(r.frame.src),
            fabric.host_name(r.frame.dst),
            r.frame.trace.len(),
            r.outcome
        );
    }
    out
}
