use std::collections::BTreeSet;

use super::*;
use crate::partition::{partition, PartitionParams, PartitionPlan};
use crate::projection::{plan_wiring, project, projection_hash, uniform_inventory, WiringDemand};
use crate::routing::{Hop, Router};
use crate::topology::{gen_fattree, gen_torus, SwitchLabel, TopologyBuilder};

struct Deployed {
    topology: LogicalTopology,
    wiring: Wiring,
    map: ProjectionMap,
    routes: Vec<Route>,
    sets: Vec<RuleSet>,
}

fn deploy(
    topology: LogicalTopology,
    switches: usize,
    ports: PortNo,
    capacity: usize,
    tag: u8,
) -> Deployed {
    let plan = if switches == 1 {
        PartitionPlan::single(&topology, 1)
    } else {
        partition(&topology, &PartitionParams::new(switches, ports as usize)).unwrap()
    };
    let wiring = plan_wiring(
        &uniform_inventory(switches, ports, capacity),
        &WiringDemand::for_plan(&plan),
    )
    .unwrap();
    let map = project(&topology, &plan, &wiring).unwrap();
    let routes = Router::default_for(&topology)
        .unwrap()
        .all_pairs(None)
        .unwrap();
    let hash = projection_hash(&topology, &wiring, &map);
    let sets = compile_rules(&topology, &routes, &map, &wiring, tag, &hash).unwrap();
    Deployed {
        topology,
        wiring,
        map,
        routes,
        sets,
    }
}

fn two_switch_line() -> LogicalTopology {
    let mut b = TopologyBuilder::new("line");
    let x = b.add_switch("a", 2, SwitchLabel::None);
    let y = b.add_switch("b", 2, SwitchLabel::None);
    b.add_link(SwitchPort::new(x, 2), SwitchPort::new(y, 2));
    b.add_host("h0", SwitchPort::new(x, 1));
    b.add_host("h1", SwitchPort::new(y, 1));
    b.build()
}

/// Walks a frame through the rule sets over the wiring, host port to
/// host port. `None` on a drop, a loop or an unwired output.
fn walk(d: &Deployed, sets: &[RuleSet], src: HostIdx, dst: HostIdx, tag: u8) -> Option<PhysPort> {
    let addr = HostAddr::new(tag, dst);
    let mut at = d.map.host_port(src);
    let mut vc = 0;
    for _ in 0..64 {
        let (out, next_vc) = sets[at.switch].forward(at.port, addr, vc)?;
        let out = PhysPort::new(at.switch, out);
        match d.wiring.peer(out) {
            Some(peer) => {
                at = peer;
                vc = next_vc;
            }
            None if d.map.host_map.contains(&out) => return Some(out),
            None => return None,
        }
    }
    None
}

#[test]
fn host_addresses() {
    let a = HostAddr::new(3, HostIdx(0x0102));
    assert_eq!(a.to_string(), "02:00:03:00:01:02");
    assert_eq!((a.tag(), a.host()), (3, HostIdx(0x0102)));
    assert!(DstMatch::Topology(3).matches(a));
    assert!(!DstMatch::Topology(4).matches(a));
    assert_eq!(metadata(3, SwitchIdx(7)), 0x0003_0007);
}

#[test]
fn push_orders_by_table_then_priority() {
    let mut s = RuleSet::new(0, "sw0", "t", 1, 0, "h");
    let rule = |table, priority, port| FlowRule {
        table,
        priority,
        matches: Match::port(port),
        action: Action::Drop,
    };
    s.push(rule(1, 50, 1));
    s.push(rule(0, 0, 2));
    s.push(rule(1, 100, 3));
    s.push(rule(0, 10, 4));
    s.push(rule(1, 50, 5));
    let order: Vec<PortNo> = s.rules().iter().map(|r| r.matches.in_port).collect();
    assert_eq!(order, vec![4, 2, 3, 1, 5]);
}

#[test]
fn line_rule_count() {
    // two sub-switches on one physical switch joined by a self-link
    let d = deploy(two_switch_line(), 1, 8, 100, 1);
    let set = &d.sets[0];
    let domain = set
        .rules()
        .iter()
        .filter(|r| r.table == TABLE_DOMAIN)
        .count();
    let routed = set
        .rules()
        .iter()
        .filter(|r| r.table == TABLE_ROUTE)
        .count();
    assert_eq!(domain, 2 * 4);
    // h0->h1 and h1->h0 each cross two logical switches
    assert_eq!(routed, 4);
    assert_eq!(
        walk(&d, &d.sets, HostIdx(0), HostIdx(1), 1),
        Some(d.map.host_port(HostIdx(1)))
    );
    assert_eq!(
        walk(&d, &d.sets, HostIdx(1), HostIdx(0), 1),
        Some(d.map.host_port(HostIdx(0)))
    );
    check_domain(&d.topology, &d.map, &d.sets).unwrap();
}

#[test]
fn duplicate_hops_collapse() {
    let d = deploy(two_switch_line(), 1, 8, 100, 1);
    let mut doubled = d.routes.clone();
    doubled.extend(d.routes.iter().cloned());
    let hash = projection_hash(&d.topology, &d.wiring, &d.map);
    let again = route_rules(&d.topology, &doubled, &d.map, &d.wiring, 1, &hash).unwrap();
    assert_eq!(again[0].len(), 4);
}

#[test]
fn conflicting_hops_are_rejected() {
    let d = deploy(two_switch_line(), 1, 8, 100, 1);
    let mut bad = d.routes[0].clone();
    let first: &mut Hop = &mut bad.hops[0];
    first.out_port = 1;
    first.in_port = 1;
    first.vc = 0;
    let routes = vec![d.routes[0].clone(), bad];
    let err = route_rules(&d.topology, &routes, &d.map, &d.wiring, 1, "x").unwrap_err();
    assert!(matches!(err, RuleError::RuleConflict { .. }), "{err}");
}

#[test]
fn empty_projection_has_no_rules() {
    let t = LogicalTopology::empty("none");
    let wiring = Wiring::empty(uniform_inventory(2, 8, 10));
    let sets = compile_rules(&t, &[], &ProjectionMap::empty("none"), &wiring, 1, "h").unwrap();
    assert_eq!(sets.len(), 2);
    assert!(sets.iter().all(RuleSet::is_empty));
}

#[test]
fn domain_rules_cover_projected_ports_only() {
    let mut b = TopologyBuilder::new("star");
    let hub = b.add_switch("s1", 4, SwitchLabel::None);
    for i in 0..4 {
        let spoke = b.add_switch(format!("s{}", i + 2), 1, SwitchLabel::None);
        b.add_link(
            SwitchPort::new(hub, (i + 1) as PortNo),
            SwitchPort::new(spoke, 1),
        );
    }
    let t = b.build();
    let plan = PartitionPlan::single(&t, 1);
    let wiring = plan_wiring(
        &uniform_inventory(1, 12, 100),
        &WiringDemand::for_plan(&plan),
    )
    .unwrap();
    let map = project(&t, &plan, &wiring).unwrap();
    let sets = domain_rules(&t, &map, &wiring, 9, "h").unwrap();
    let admitted: BTreeSet<(PortNo, u32)> = sets[0]
        .rules()
        .iter()
        .filter_map(|r| match r.action {
            Action::Admit { metadata } => Some((r.matches.in_port, metadata)),
            _ => None,
        })
        .collect();
    let hub_ports: BTreeSet<PortNo> = admitted
        .iter()
        .filter(|(_, m)| *m == metadata(9, SwitchIdx(0)))
        .map(|(p, _)| *p)
        .collect();
    assert_eq!(hub_ports, BTreeSet::from([1, 3, 5, 7]));
    assert_eq!(admitted.len(), 8);
    // unprojected ports 9..=12 have nothing, so frames there never get metadata
    assert!(sets[0]
        .forward(9, HostAddr::new(9, HostIdx(0)), 0)
        .is_none());
}

#[test]
fn fattree_on_two_switches_fits() {
    let d = deploy(gen_fattree(4).unwrap(), 2, 64, 4096, 1);
    for s in &d.sets {
        assert!(s.len() <= 1024, "{} has {} rules", s.switch_id, s.len());
    }
    for src in d.topology.host_indices() {
        for dst in d.topology.host_indices() {
            if src != dst {
                assert_eq!(walk(&d, &d.sets, src, dst, 1), Some(d.map.host_port(dst)));
            }
        }
    }
    check_domain(&d.topology, &d.map, &d.sets).unwrap();
}

#[test]
fn capacity_check_thresholds() {
    let d = deploy(gen_fattree(4).unwrap(), 2, 64, 4096, 1);
    let ok = capacity_check(&d.sets, &uniform_inventory(2, 64, 1024));
    assert!(ok.ok() && ok.suggestions.is_empty());
    let tight = capacity_check(&d.sets, &uniform_inventory(2, 64, 100));
    assert!(!tight.ok());
    assert!(matches!(tight.suggestions[0], Mitigation::Merge { .. }));
    assert!(tight.to_string().contains("suggest: merge entries"));
}

#[test]
fn merge_preserves_forwarding() {
    for (t, switches) in [
        (gen_fattree(4).unwrap(), 2),
        (gen_torus(&[4, 4]).unwrap(), 2),
        (two_switch_line(), 1),
    ] {
        let d = deploy(t, switches, 64, 4096, 2);
        let merged = merge_rulesets(&d.sets);
        let before: usize = d.sets.iter().map(RuleSet::len).sum();
        let after: usize = merged.iter().map(RuleSet::len).sum();
        assert!(after <= before);
        // every rule-level decision over every (port, vc, dst) of the topology
        for (a, b) in d.sets.iter().zip(&merged) {
            let ports: BTreeSet<PortNo> = a.ports().collect();
            for &p in &ports {
                for vc in 0..3 {
                    for h in 0..a.num_hosts {
                        let dst = HostAddr::new(2, HostIdx(h));
                        assert_eq!(
                            a.forward(p, dst, vc),
                            b.forward(p, dst, vc),
                            "{} port {p} vc {vc} {dst}",
                            a.switch_id
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn merge_shrinks_fattree() {
    let d = deploy(gen_fattree(4).unwrap(), 2, 64, 4096, 1);
    let before: usize = d.sets.iter().map(RuleSet::len).sum();
    let after: usize = merge_rulesets(&d.sets).iter().map(RuleSet::len).sum();
    assert!(after < before, "{after} vs {before}");
}

#[test]
fn export_round_trip() {
    let t = gen_torus(&[4, 4]).unwrap();
    let d = deploy(t, 2, 64, 4096, 5);
    for set in d.sets.iter().chain(&merge_rulesets(&d.sets)) {
        for format in [ExportFormat::Native, ExportFormat::OfText] {
            let text = set.export(format);
            let back = parse_rules(&text).unwrap();
            assert_eq!(&back, set);
            assert_eq!(back.export(format), text);
        }
    }
}

#[test]
fn export_lines() {
    let mut s = RuleSet::new(1, "sw1", "t", 2, 4, "abc");
    s.push(FlowRule {
        table: TABLE_ROUTE,
        priority: PRIORITY_ROUTE,
        matches: Match {
            in_port: 3,
            metadata: Some(metadata(2, SwitchIdx(1))),
            dst: Some(DstMatch::Host(HostAddr::new(2, HostIdx(5)))),
            vc: Some(0),
        },
        action: Action::Output {
            port: 7,
            set_vc: Some(1),
        },
    });
    s.push(FlowRule {
        table: TABLE_DOMAIN,
        priority: PRIORITY_DOMAIN_PERMIT,
        matches: Match::port(3),
        action: Action::Admit {
            metadata: metadata(2, SwitchIdx(1)),
        },
    });
    s.push(FlowRule {
        table: TABLE_ROUTE,
        priority: PRIORITY_MERGED,
        matches: Match {
            dst: Some(DstMatch::Topology(2)),
            ..Match::port(4)
        },
        action: Action::Drop,
    });
    let native = s.export(ExportFormat::Native);
    let lines: Vec<&str> = native.lines().collect();
    assert_eq!(lines[0], "# linkproj rules v1 format=native");
    assert_eq!(
        lines[6],
        "table 0 priority 10 in_port 3 action admit 0x00020001"
    );
    assert_eq!(
        lines[7],
        "table 1 priority 100 in_port 3 metadata 0x00020001 dst 02:00:02:00:00:05 vc 0 action output 7 set_vc 1"
    );
    assert_eq!(
        lines[8],
        "table 1 priority 50 in_port 4 dst 02:00:02:00:00:00/ff:ff:ff:00:00:00 action drop"
    );
    let of = s.export(ExportFormat::OfText);
    let lines: Vec<&str> = of.lines().collect();
    assert_eq!(
        lines[6],
        "priority=10,table=0,in_port=3,actions=write_metadata:0x20001,goto_table:1"
    );
    assert_eq!(
        lines[7],
        "priority=100,table=1,in_port=3,metadata=0x20001,dl_dst=02:00:02:00:00:05,vlan_pcp=0,actions=set_field:1->vlan_pcp,output:7"
    );
}

#[test]
fn parse_errors() {
    assert!(matches!(
        parse_rules(""),
        Err(RuleParseError::Syntax { line: 1, .. })
    ));
    assert!(matches!(
        parse_rules("# linkproj rules v1 format=xml\n"),
        Err(RuleParseError::UnknownFormat(_))
    ));
    let bad =
        "# linkproj rules v1 format=native\n# rules 1\ntable 1 priority x in_port 3 action drop\n";
    assert!(matches!(
        parse_rules(bad),
        Err(RuleParseError::Syntax { line: 3, .. })
    ));
    let short =
        "# linkproj rules v1 format=native\n# rules 2\ntable 1 priority 1 in_port 3 action drop\n";
    assert_eq!(
        parse_rules(short),
        Err(RuleParseError::CountMismatch {
            stated: 2,
            found: 1
        })
    );
}
