mod common;

use linkproj::partition::{
    brute_force_partition, cut_edges, objective, partition, PartitionParams,
};
use linkproj::topology::gen_torus;
use proptest::prelude::*;

fn params_for(t: &linkproj::topology::LogicalTopology, k: usize, slack: f64) -> PartitionParams {
    let demand: usize = t.switch_indices().map(|s| t.degree(s)).sum();
    let cap = ((demand as f64 / k as f64) * slack).ceil() as usize;
    PartitionParams::new(
        k,
        cap.max(t.switch_indices().map(|s| t.degree(s)).max().unwrap_or(0)),
    )
}

#[test]
fn torus_conservation() {
    let t = gen_torus(&[4, 4]).unwrap();
    let plan = partition(&t, &PartitionParams::new(2, 64)).unwrap();
    let links = t.num_switch_links();
    assert_eq!(links, 32);
    assert_eq!(
        links - plan.internal_edges[0] - plan.internal_edges[1],
        plan.cut_edges_total
    );
    assert_eq!(cut_edges(&t, &plan.assignment).unwrap().total, 8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn heuristic_never_beats_oracle(n in 3usize..=10, extra in 0usize..12, seed in any::<u64>(), k in 2usize..=3) {
        let t = common::random_connected(n, extra, seed);
        let p = params_for(&t, k, 1.3);
        let Ok(exact) = brute_force_partition(&t, &p) else { return Ok(()) };
        let best = objective(&exact, &p);
        match partition(&t, &p) {
            Ok(h) => {
                let got = objective(&h, &p);
                prop_assert!(h.fits(p.max_ports_per_part));
                prop_assert!(got >= best - 1e-9, "heuristic {got} below optimum {best}");
            }
            Err(e) => prop_assert!(false, "heuristic failed where oracle found a plan: {e}"),
        }
    }

    #[test]
    fn plan_accounting(n in 2usize..=12, extra in 0usize..20, seed in any::<u64>(), k in 1usize..=4) {
        let t = common::random_connected(n, extra, seed);
        let p = params_for(&t, k, 1.5);
        if let Ok(plan) = partition(&t, &p) {
            let internal: usize = plan.internal_edges.iter().sum();
            prop_assert_eq!(t.num_switch_links() - internal, plan.cut_edges_total);
            let ports: usize = (0..k).map(|q| plan.ports_used(q)).sum();
            prop_assert_eq!(ports, 2 * t.num_switch_links() + t.num_host_links());
            prop_assert!(plan.fits(p.max_ports_per_part));
            prop_assert_eq!(&partition(&t, &p).unwrap(), &plan);
        }
    }
}
