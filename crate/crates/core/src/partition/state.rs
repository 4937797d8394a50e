use std::cmp::Ordering;

use crate::topology::LogicalTopology;

use super::PartitionParams;

const SCORE_EPS: f64 = 1e-9;

/// Lexicographic score used while searching. Capacity excess dominates,
/// then (when `beta > 0`) the number of parts without internal links, then
/// the objective restricted to parts that have some.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Key {
    pub excess: usize,
    pub empty: usize,
    pub value: f64,
}

impl Key {
    pub fn cmp(&self, other: &Key) -> Ordering {
        self.excess
            .cmp(&other.excess)
            .then(self.empty.cmp(&other.empty))
            .then_with(|| {
                if (self.value - other.value).abs() <= SCORE_EPS * (1.0 + self.value.abs()) {
                    Ordering::Equal
                } else {
                    self.value.total_cmp(&other.value)
                }
            })
    }

    pub fn better_than(&self, other: &Key) -> bool {
        self.cmp(other) == Ordering::Less
    }
}

/// Compact graph view: switch-switch adjacency plus vertex weights (the
/// switch degree, host links included).
pub(crate) struct Graph {
    pub adj: Vec<Vec<usize>>,
    pub weight: Vec<usize>,
}

impl Graph {
    pub fn new(topology: &LogicalTopology) -> Self {
        let n = topology.switches().len();
        let mut adj = vec![Vec::new(); n];
        for l in topology.switch_links() {
            let link = topology.link(l);
            let b = link.b_port().expect("switch link").switch.0;
            adj[link.a.switch.0].push(b);
            adj[b].push(link.a.switch.0);
        }
        let weight = topology
            .switch_indices()
            .map(|s| topology.degree(s))
            .collect();
        Graph { adj, weight }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn total_weight(&self) -> usize {
        self.weight.iter().sum()
    }
}

/// Assignment with incrementally maintained aggregates.
#[derive(Clone)]
pub(crate) struct State {
    pub assignment: Vec<usize>,
    ports: Vec<usize>,
    internal: Vec<usize>,
    cut: usize,
    /// `conn[v * k + p]`: links from `v` into part `p`.
    conn: Vec<usize>,
    k: usize,
}

impl State {
    pub fn new(graph: &Graph, k: usize, assignment: Vec<usize>) -> Self {
        let n = graph.len();
        let mut s = State {
            assignment,
            ports: vec![0; k],
            internal: vec![0; k],
            cut: 0,
            conn: vec![0; n * k],
            k,
        };
        for v in 0..n {
            let p = s.assignment[v];
            s.ports[p] += graph.weight[v];
            for &u in &graph.adj[v] {
                s.conn[v * k + s.assignment[u]] += 1;
                if u > v {
                    if s.assignment[u] == p {
                        s.internal[p] += 1;
                    } else {
                        s.cut += 1;
                    }
                }
            }
        }
        s
    }

    fn key_from(
        &self,
        params: &PartitionParams,
        ports: &[usize],
        internal: &[usize],
        cut: usize,
    ) -> Key {
        let cap = params.max_ports_per_part;
        let excess = ports.iter().map(|&p| p.saturating_sub(cap)).sum();
        let mut value = params.alpha * cut as f64;
        let mut empty = 0;
        if params.beta > 0.0 {
            for &i in internal {
                if i == 0 {
                    empty += 1;
                } else {
                    value += params.beta / i as f64;
                }
            }
        }
        Key {
            excess,
            empty,
            value,
        }
    }

    pub fn key(&self, params: &PartitionParams) -> Key {
        self.key_from(params, &self.ports, &self.internal, self.cut)
    }

    /// Score after moving `v` to part `to`, without applying the move.
    pub fn key_after(&self, graph: &Graph, params: &PartitionParams, v: usize, to: usize) -> Key {
        let from = self.assignment[v];
        let mut ports = self.ports.clone();
        let mut internal = self.internal.clone();
        ports[from] -= graph.weight[v];
        ports[to] += graph.weight[v];
        let (into_from, into_to) = (self.conn[v * self.k + from], self.conn[v * self.k + to]);
        internal[from] -= into_from;
        internal[to] += into_to;
        let cut = self.cut + into_from - into_to;
        self.key_from(params, &ports, &internal, cut)
    }

    pub fn apply(&mut self, graph: &Graph, v: usize, to: usize) {
        let from = self.assignment[v];
        if from == to {
            return;
        }
        let k = self.k;
        self.ports[from] -= graph.weight[v];
        self.ports[to] += graph.weight[v];
        let (into_from, into_to) = (self.conn[v * k + from], self.conn[v * k + to]);
        self.internal[from] -= into_from;
        self.internal[to] += into_to;
        self.cut = self.cut + into_from - into_to;
        for &u in &graph.adj[v] {
            self.conn[u * k + from] -= 1;
            self.conn[u * k + to] += 1;
        }
        self.assignment[v] = to;
    }
}
