#![allow(dead_code)]

use linkproj::topology::{LogicalTopology, SwitchLabel, SwitchPort, TopologyBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random connected graph: a random spanning tree plus `extra` chords, one
/// host on every switch with probability one half.
pub fn random_connected(n: usize, extra: usize, seed: u64) -> LogicalTopology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = TopologyBuilder::new(format!("rand-{seed}"));
    let radix = (n + 1) as u16;
    let ids: Vec<_> = (0..n)
        .map(|i| b.add_switch(format!("v{i:02}"), radix, SwitchLabel::None))
        .collect();
    let mut next_port = vec![1u16; n];
    let mut edges = std::collections::BTreeSet::new();
    let link = |b: &mut TopologyBuilder, next_port: &mut [u16], x: usize, y: usize| {
        b.add_link(
            SwitchPort::new(ids[x], next_port[x]),
            SwitchPort::new(ids[y], next_port[y]),
        );
        next_port[x] += 1;
        next_port[y] += 1;
    };
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.insert((u, v));
        link(&mut b, &mut next_port, u, v);
    }
    for _ in 0..extra {
        let (x, y) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let (x, y) = (x.min(y), x.max(y));
        if x != y && edges.insert((x, y)) {
            link(&mut b, &mut next_port, x, y);
        }
    }
    for v in 0..n {
        if rng.gen_bool(0.5) {
            b.add_host(format!("h{v:02}"), SwitchPort::new(ids[v], next_port[v]));
            next_port[v] += 1;
        }
    }
    b.build_valid().expect("generated graph is valid")
}
