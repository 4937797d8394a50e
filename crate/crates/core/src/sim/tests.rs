use super::*;
use crate::partition::{partition, PartitionParams, PartitionPlan};
use crate::projection::{plan_wiring, projection_hash, uniform_inventory, Projector, WiringDemand};
use crate::routing::tests::ring4;
use crate::routing::{Route, Router, RoutingScheme};
use crate::rules::{compile_rules, Action};
use crate::topology::{gen_dragonfly, gen_fattree, gen_torus, SwitchPort};

struct Compiled {
    topology: LogicalTopology,
    map: ProjectionMap,
    routes: Vec<Route>,
    sets: Vec<RuleSet>,
}

fn compile(
    t: LogicalTopology,
    plan: &PartitionPlan,
    projector: &mut Projector,
    tag: u8,
) -> Compiled {
    let wiring = projector.wiring();
    let map = projector.project(&t, plan).unwrap();
    let routes = Router::default_for(&t).unwrap().all_pairs(None).unwrap();
    let hash = projection_hash(&t, wiring, &map);
    let sets = compile_rules(&t, &routes, &map, wiring, tag, &hash).unwrap();
    Compiled {
        topology: t,
        map,
        routes,
        sets,
    }
}

fn single(t: LogicalTopology, switches: usize, ports: PortNo) -> (Wiring, Compiled) {
    let plan = if switches == 1 {
        PartitionPlan::single(&t, 1)
    } else {
        partition(&t, &PartitionParams::new(switches, ports as usize)).unwrap()
    };
    let wiring = plan_wiring(
        &uniform_inventory(switches, ports, 4096),
        &WiringDemand::for_plan(&plan),
    )
    .unwrap();
    let c = compile(t, &plan, &mut Projector::new(&wiring), 1);
    (wiring, c)
}

fn fabric(wiring: &Wiring, c: &Compiled) -> SimFabric {
    SimFabric::load(&c.topology, &c.map, &c.sets, wiring).unwrap()
}

/// Keeps only table 0, so nothing is routed.
fn domain_only(sets: &[RuleSet]) -> Vec<RuleSet> {
    sets.iter()
        .map(|s| {
            let mut out = RuleSet::new(
                s.switch,
                &s.switch_id,
                &s.topology,
                s.tag,
                s.num_hosts,
                &s.projection_hash,
            );
            for r in s
                .rules()
                .iter()
                .filter(|r| r.table == crate::rules::TABLE_DOMAIN)
            {
                out.push(*r);
            }
            out
        })
        .collect()
}

#[test]
fn load_checks() {
    let (wiring, c) = single(gen_fattree(4).unwrap(), 2, 64);
    let f = fabric(&wiring, &c);
    assert_eq!(f.wiring().num_switches(), 2);
    assert_eq!(f.links_realized(), 48);
    assert!(f.read_counters().is_zero());

    let mut bad = c.sets.clone();
    bad[1].projection_hash = "0000000000000000".into();
    let err = SimFabric::load(&c.topology, &c.map, &bad, &wiring).unwrap_err();
    assert!(matches!(err, SimError::HashMismatch { .. }), "{err}");

    let err = SimFabric::load(&c.topology, &c.map, &c.sets[..1], &wiring).unwrap_err();
    assert_eq!(
        err,
        SimError::SwitchCount {
            expected: 2,
            found: 1
        }
    );

    let mut stray = c.sets.clone();
    stray[0].push(FlowRule {
        table: 1,
        priority: 100,
        matches: crate::rules::Match::port(65),
        action: Action::Drop,
    });
    let err = SimFabric::load(&c.topology, &c.map, &stray, &wiring).unwrap_err();
    assert!(
        matches!(err, SimError::UnknownPort { port: 65, .. }),
        "{err}"
    );
}

#[test]
fn fattree_delivers_along_routes() {
    let (wiring, c) = single(gen_fattree(4).unwrap(), 2, 64);
    let mut f = fabric(&wiring, &c);
    let hosts = f.hosts(0);
    let m = f.reachability_matrix(&hosts);
    assert!(m.iter().all(|row| row.iter().all(|&x| x)));
    let report = f.equivalence_check(0, &c.routes);
    assert!(report.ok(), "{report}");
    assert_eq!(report.pairs, 240);
    assert!(report.stats.conserved());
    // a cross-pod pair has five logical hops
    let five = c.routes.iter().find(|r| r.hops.len() == 5).unwrap();
    let rec = f.inject(Frame::new(
        HostRef::new(0, five.src),
        HostRef::new(0, five.dst),
    ));
    let subs: Vec<SwitchIdx> = rec
        .frame
        .trace
        .iter()
        .map(|h| f.subswitch_of(h.ingress()).unwrap().1)
        .collect();
    assert_eq!(subs, five.switches().collect::<Vec<_>>());
    assert_eq!(rec.frame.ttl, DEFAULT_TTL - 5);
}

#[test]
fn adjacent_hosts_use_one_traversal() {
    let (wiring, c) = single(gen_fattree(4).unwrap(), 1, 128);
    let mut f = fabric(&wiring, &c);
    let rec = f.inject(Frame::new(
        HostRef::new(0, HostIdx(0)),
        HostRef::new(0, HostIdx(1)),
    ));
    assert!(rec.outcome.delivered());
    assert_eq!(rec.frame.trace.len(), 1);
}

#[test]
fn no_routes_means_identity() {
    let (wiring, c) = single(gen_torus(&[3, 3]).unwrap(), 1, 64);
    let sets = domain_only(&c.sets);
    let mut f = SimFabric::load(&c.topology, &c.map, &sets, &wiring).unwrap();
    let hosts = f.hosts(0);
    let m = f.reachability_matrix(&hosts);
    for (i, row) in m.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            assert_eq!(x, i == j);
        }
    }
    let rec = f.inject(Frame::new(hosts[0], hosts[1]));
    assert_eq!(
        rec.outcome,
        Outcome::Dropped {
            at: f.host_port(hosts[0]),
            reason: DropReason::NoRule
        }
    );
}

#[test]
fn ablating_one_host_clears_its_row_and_column() {
    let (wiring, c) = single(gen_fattree(4).unwrap(), 2, 64);
    let victim = HostIdx(5);
    let addr = HostAddr::new(1, victim);
    let victim_port = c.map.host_port(victim);
    let sets: Vec<RuleSet> = c
        .sets
        .iter()
        .map(|s| {
            let mut out = RuleSet::new(
                s.switch,
                &s.switch_id,
                &s.topology,
                s.tag,
                s.num_hosts,
                &s.projection_hash,
            );
            for r in s.rules() {
                let to_victim = r.matches.dst == Some(crate::rules::DstMatch::Host(addr));
                let from_victim =
                    r.table == 1 && PhysPort::new(s.switch, r.matches.in_port) == victim_port;
                if !to_victim && !from_victim {
                    out.push(*r);
                }
            }
            out
        })
        .collect();
    let mut f = SimFabric::load(&c.topology, &c.map, &sets, &wiring).unwrap();
    let hosts = f.hosts(0);
    let m = f.reachability_matrix(&hosts);
    for i in 0..hosts.len() {
        for j in 0..hosts.len() {
            let expect = i == j || (i != victim.0 && j != victim.0);
            assert_eq!(m[i][j], expect, "{i} -> {j}");
        }
    }
}

#[test]
fn counters_follow_the_trace() {
    let (wiring, c) = single(gen_torus(&[4, 4]).unwrap(), 2, 64);
    let mut f = fabric(&wiring, &c);
    let route = c.routes.iter().find(|r| r.hops.len() == 3).unwrap();
    let rec = f.inject(Frame::new(
        HostRef::new(0, route.src),
        HostRef::new(0, route.dst),
    ));
    assert!(rec.outcome.delivered());
    let counters = f.read_counters();
    let mut expect: BTreeMap<PhysPort, PortCount> = BTreeMap::new();
    for h in &rec.frame.trace {
        expect.entry(h.ingress()).or_default().rx += 1;
        expect.entry(h.egress()).or_default().tx += 1;
    }
    assert_eq!(counters.nonzero().collect::<BTreeMap<_, _>>(), expect);
    assert!(counters.render(&wiring).lines().count() == expect.len() + 1);
    f.reset_counters();
    assert!(f.read_counters().is_zero());
}

#[test]
fn counters_steer_adaptive_routing() {
    let t = gen_dragonfly(4, 5, 2, 2).unwrap();
    let plan = PartitionPlan::single(&t, 1);
    let wiring = plan_wiring(
        &uniform_inventory(1, 256, 100_000),
        &WiringDemand::for_plan(&plan),
    )
    .unwrap();
    let map = Projector::new(&wiring).project(&t, &plan).unwrap();
    let router = Router::new(&t, RoutingScheme::DragonflyAdaptive).unwrap();
    let zero = crate::routing::uniform_load(&t, 0);
    let routes = router.all_pairs(Some(&zero)).unwrap();
    let hash = projection_hash(&t, &wiring, &map);
    let sets = compile_rules(&t, &routes, &map, &wiring, 1, &hash).unwrap();
    let mut f = SimFabric::load(&t, &map, &sets, &wiring).unwrap();

    let (src, dst) = (
        HostIdx(0),
        t.host_indices()
            .find(|&h| h.0 >= t.hosts().len() / 2)
            .unwrap(),
    );
    let first = router.route_with_load(src, dst, &zero).unwrap();
    for _ in 0..10 {
        assert!(f
            .inject(Frame::new(HostRef::new(0, src), HostRef::new(0, dst)))
            .outcome
            .delivered());
    }
    let load = f.logical_load(0);
    let second = router.route_with_load(src, dst, &load).unwrap();
    assert_ne!(first.without_vcs(), second.without_vcs());
    let fabric_ports = |r: &Route| -> Vec<SwitchPort> {
        r.hops[..r.hops.len() - 1]
            .iter()
            .map(|h| SwitchPort::new(h.switch, h.out_port))
            .collect()
    };
    let busy = fabric_ports(&first);
    assert!(busy.iter().all(|p| load[p] == 10));
    assert!(fabric_ports(&second).iter().all(|p| !busy.contains(p)));
}

fn co_deploy(a: LogicalTopology, b: LogicalTopology) -> (SimFabric, Vec<Compiled>) {
    let (pa, pb) = (PartitionPlan::single(&a, 1), PartitionPlan::single(&b, 1));
    let mut demand = WiringDemand::for_plan(&pa);
    demand.add(&WiringDemand::for_plan(&pb));
    let wiring = plan_wiring(&uniform_inventory(1, 64, 4096), &demand).unwrap();
    let mut projector = Projector::new(&wiring);
    let ca = compile(a, &pa, &mut projector, 1);
    let cb = compile(b, &pb, &mut projector, 2);
    let mut f = SimFabric::new(wiring);
    f.install(&ca.topology, &ca.map, &ca.sets).unwrap();
    f.install(&cb.topology, &cb.map, &cb.sets).unwrap();
    (f, vec![ca, cb])
}

#[test]
fn two_rings_are_isolated() {
    let (mut f, _) = co_deploy(ring4(), ring4());
    let groups = vec![f.hosts(0), f.hosts(1)];
    let v = f.isolation_check(&groups);
    assert!(v.ok(), "{v}");
    assert_eq!(v.pairs, 8 * 7);
    assert_eq!(v.cross_pairs, 2 * 16);
    assert!(v.stats.conserved());
}

#[test]
fn mutated_rule_is_caught() {
    let (f, cs) = co_deploy(ring4(), ring4());
    let foreign = cs[1]
        .map
        .ports()
        .find(|p| f.wiring().peer(*p).is_some())
        .unwrap();
    let mut sets = cs[0].sets.clone();
    let s = &sets[0];
    let mut mutated = RuleSet::new(
        s.switch,
        &s.switch_id,
        &s.topology,
        s.tag,
        s.num_hosts,
        &s.projection_hash,
    );
    let mut done = false;
    for r in s.rules() {
        let mut r = *r;
        if let Action::Output { set_vc, .. } = r.action {
            if !done
                && f.wiring()
                    .peer(PhysPort::new(0, r.matches.in_port))
                    .is_some()
            {
                r.action = Action::Output {
                    port: foreign.port,
                    set_vc,
                };
                done = true;
            }
        }
        mutated.push(r);
    }
    sets[0] = mutated;
    // the loader rejects a port the projection does not own
    let mut g = SimFabric::new(f.wiring().clone());
    assert!(matches!(
        g.install(&cs[0].topology, &cs[0].map, &sets),
        Err(SimError::UnknownPort { .. })
    ));
    // bypass the check the way a faulty switch would
    let mut g = f.clone();
    let (index, rule) = g
        .table(0)
        .rules()
        .iter()
        .enumerate()
        .find_map(|(i, r)| match r.action {
            Action::Output { set_vc, .. }
                if g.owner(PhysPort::new(0, r.matches.in_port)) == Some(0)
                    && g.wiring()
                        .peer(PhysPort::new(0, r.matches.in_port))
                        .is_some() =>
            {
                Some((
                    i,
                    FlowRule {
                        action: Action::Output {
                            port: foreign.port,
                            set_vc,
                        },
                        ..*r
                    },
                ))
            }
            _ => None,
        })
        .unwrap();
    assert!(g.corrupt_rule(0, index, rule));
    assert!(!g.corrupt_rule(0, usize::MAX, rule));
    let groups = vec![g.hosts(0), g.hosts(1)];
    let v = g.isolation_check(&groups);
    assert!(!v.ok());
    let w = v.witness().unwrap();
    assert_eq!(w.frame.src.topology, 0);
    assert!(w
        .frame
        .trace
        .iter()
        .any(|h| g.owner(h.ingress()) == Some(1) || g.owner(h.egress()) == Some(1)));
}

#[test]
fn single_topology_is_vacuously_isolated() {
    let (wiring, c) = single(ring4(), 1, 64);
    let mut f = fabric(&wiring, &c);
    let v = f.isolation_check(&[f.hosts(0)]);
    assert!(v.ok() && v.cross_pairs == 0);
}

#[test]
fn identical_sweeps_are_deterministic() {
    let run = || {
        let (wiring, c) = single(gen_torus(&[4, 4]).unwrap(), 2, 64);
        let mut f = fabric(&wiring, &c);
        let hosts = f.hosts(0);
        let records: Vec<DeliveryRecord> = hosts
            .iter()
            .flat_map(|&s| hosts.iter().map(move |&d| (s, d)))
            .filter(|(s, d)| s != d)
            .map(|(s, d)| f.inject(Frame::new(s, d)))
            .collect();
        (
            render_sweep(&f, &records),
            f.read_counters().render(&wiring),
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn ttl_expires() {
    let (wiring, c) = single(gen_fattree(4).unwrap(), 2, 64);
    let mut f = fabric(&wiring, &c);
    let route = c.routes.iter().find(|r| r.hops.len() == 5).unwrap();
    let rec =
        f.inject(Frame::new(HostRef::new(0, route.src), HostRef::new(0, route.dst)).with_ttl(2));
    assert!(matches!(rec.outcome, Outcome::TtlExpired { .. }));
    assert_eq!(rec.frame.trace.len(), 2);
}
