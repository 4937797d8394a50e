use std::collections::BTreeMap;
use std::fmt;

use crate::partition::{fit_partition, PartitionParams, PartitionPlan};
use crate::topology::LogicalTopology;

use super::{PhysicalSwitch, WiringDemand};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchRow {
    pub switch: String,
    pub hosts: usize,
    pub self_links: usize,
    pub inter_endpoints: usize,
    pub needed: usize,
    pub available: usize,
}

impl SwitchRow {
    pub fn shortfall(&self) -> usize {
        self.needed.saturating_sub(self.available)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRow {
    pub a: String,
    pub b: String,
    pub needed: usize,
    /// Fibers already in place, `None` when the wiring is still to be
    /// planned.
    pub reserved: Option<usize>,
}

impl PairRow {
    pub fn shortfall(&self) -> usize {
        self.reserved.map_or(0, |r| self.needed.saturating_sub(r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub topology: String,
    pub feasible: bool,
    pub demand: usize,
    pub supply: usize,
    pub plan: Option<PartitionPlan>,
    pub switches: Vec<SwitchRow>,
    pub pairs: Vec<PairRow>,
    pub suggestions: Vec<String>,
}

/// Checks whether `topology` fits the inventory. The topology is first
/// partitioned onto as few switches as possible (weights and seed from
/// `template`, capacity is the smallest switch); the resulting per-switch
/// and per-pair demand is then compared with the ports and with
/// `reservation`, the inter-switch fibers already cabled, if any.
pub fn feasibility_check(
    topology: &LogicalTopology,
    inventory: &[PhysicalSwitch],
    reservation: Option<&BTreeMap<(usize, usize), usize>>,
    template: &PartitionParams,
) -> FeasibilityReport {
    let demand: usize = topology.switch_indices().map(|s| topology.degree(s)).sum();
    let supply: usize = inventory.iter().map(|s| s.num_ports as usize).sum();
    let capacity = inventory
        .iter()
        .map(|s| s.num_ports as usize)
        .min()
        .unwrap_or(0);
    let mut report = FeasibilityReport {
        topology: topology.name.clone(),
        feasible: false,
        demand,
        supply,
        plan: None,
        switches: Vec::new(),
        pairs: Vec::new(),
        suggestions: Vec::new(),
    };
    if topology.is_empty() {
        report.feasible = true;
        return report;
    }
    if inventory.is_empty() {
        report
            .suggestions
            .push("inventory is empty: add at least one switch".into());
        return report;
    }
    let plan = match fit_partition(topology, inventory.len(), capacity, template) {
        Ok(plan) => plan,
        Err(e) => {
            report.suggestions.push(format!("partition failed: {e}"));
            let needed = demand.div_ceil(capacity.max(1));
            if needed > inventory.len() {
                report.suggestions.push(format!(
                    "add {} switch(es) of {capacity} ports",
                    needed - inventory.len()
                ));
            } else {
                report.suggestions.push(format!(
                    "no balanced split fits; add a switch of {capacity} ports or use larger switches"
                ));
            }
            return report;
        }
    };
    let mut d = WiringDemand::for_plan(&plan);
    if let Some(r) = reservation {
        // reserved fibers occupy ports whether or not this topology uses them
        let mut wired = WiringDemand::new(d.num_switches());
        wired.inter = r.clone();
        d.max_with(&wired);
    }
    for (i, sw) in inventory.iter().enumerate() {
        report.switches.push(SwitchRow {
            switch: sw.id.clone(),
            hosts: d.hosts.get(i).copied().unwrap_or(0),
            self_links: d.self_links.get(i).copied().unwrap_or(0),
            inter_endpoints: d.inter_endpoints(i),
            needed: d.ports_needed(i),
            available: sw.num_ports as usize,
        });
    }
    let name = |i: usize| {
        inventory
            .get(i)
            .map_or_else(|| format!("#{i}"), |s| s.id.clone())
    };
    for (&(x, y), &needed) in &plan.cut_edges_by_pair {
        report.pairs.push(PairRow {
            a: name(x),
            b: name(y),
            needed,
            reserved: reservation.map(|r| r.get(&(x, y)).copied().unwrap_or(0)),
        });
    }
    for row in &report.switches {
        if row.shortfall() > 0 {
            report.suggestions.push(format!(
                "switch {} needs {} more ports",
                row.switch,
                row.shortfall()
            ));
        }
    }
    for row in &report.pairs {
        if row.shortfall() > 0 {
            report.suggestions.push(format!(
                "cable {} more inter-switch links between {} and {}",
                row.shortfall(),
                row.a,
                row.b
            ));
        }
    }
    report.feasible = report.suggestions.is_empty();
    report.plan = Some(plan);
    report
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.feasible {
            "feasible"
        } else {
            "infeasible"
        };
        writeln!(f, "topology {}: {verdict}", self.topology)?;
        writeln!(
            f,
            "demand {} ports, supply {} ports",
            self.demand, self.supply
        )?;
        if let Some(plan) = &self.plan {
            writeln!(f, "parts {} cut {}", plan.num_parts, plan.cut_edges_total)?;
        }
        for r in &self.switches {
            writeln!(
                f,
                "switch {} hosts {} self {} inter {} needed {} ports {} {}",
                r.switch,
                r.hosts,
                r.self_links,
                r.inter_endpoints,
                r.needed,
                r.available,
                if r.shortfall() == 0 {
                    "ok".to_string()
                } else {
                    format!("short {}", r.shortfall())
                }
            )?;
        }
        for r in &self.pairs {
            let reserved = r
                .reserved
                .map_or_else(|| "planned".to_string(), |v| v.to_string());
            let status = if r.shortfall() == 0 {
                "ok".to_string()
            } else {
                format!("short {}", r.shortfall())
            };
            writeln!(
                f,
                "pair {} {} needed {} reserved {reserved} {status}",
                r.a, r.b, r.needed
            )?;
        }
        for s in &self.suggestions {
            writeln!(f, "suggest: {s}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::uniform_inventory;
    use crate::topology::{gen_fattree, gen_torus, SwitchLabel, SwitchPort, TopologyBuilder};

    fn params() -> PartitionParams {
        PartitionParams::new(1, 1)
    }

    #[test]
    fn fattree_fits_two_switches() {
        let t = gen_fattree(4).unwrap();
        let r = feasibility_check(&t, &uniform_inventory(2, 64, 4096), None, &params());
        assert!(r.feasible, "{r}");
        assert_eq!(r.plan.as_ref().unwrap().num_parts, 2);
        assert!(r.switches.iter().all(|s| s.needed <= 64));
    }

    #[test]
    fn big_torus_on_one_switch() {
        let t = gen_torus(&[4, 4, 4]).unwrap();
        let r = feasibility_check(&t, &uniform_inventory(1, 64, 4096), None, &params());
        assert!(!r.feasible);
        assert_eq!(r.demand, 2 * 192 + 64);
        assert!(
            r.suggestions
                .iter()
                .any(|s| s.contains("add 6 switch(es) of 64 ports")),
            "{r}"
        );
    }

    #[test]
    fn two_switch_topology_on_small_switch() {
        let mut b = TopologyBuilder::new("pair");
        let x = b.add_switch("a", 2, SwitchLabel::None);
        let y = b.add_switch("b", 2, SwitchLabel::None);
        b.add_link(SwitchPort::new(x, 1), SwitchPort::new(y, 1));
        b.add_host("ha", SwitchPort::new(x, 2));
        b.add_host("hb", SwitchPort::new(y, 2));
        let r = feasibility_check(&b.build(), &uniform_inventory(1, 8, 10), None, &params());
        assert!(r.feasible, "{r}");
        assert_eq!(r.switches[0].needed, 4);
    }

    #[test]
    fn missing_reservation_is_reported() {
        let t = gen_torus(&[4, 4]).unwrap();
        let reserved = BTreeMap::from([((0, 1), 6)]);
        let r = feasibility_check(
            &t,
            &uniform_inventory(2, 64, 4096),
            Some(&reserved),
            &params(),
        );
        assert!(!r.feasible);
        assert_eq!(r.pairs[0].shortfall(), 2);
        assert!(r
            .to_string()
            .contains("suggest: cable 2 more inter-switch links between sw0 and sw1"));
    }
}
