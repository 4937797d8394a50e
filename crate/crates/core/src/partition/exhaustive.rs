use crate::topology::LogicalTopology;

use super::{objective, PartitionError, PartitionParams, PartitionPlan};

/// Largest topology [`brute_force_partition`] accepts.
pub const BRUTE_FORCE_LIMIT: usize = 16;

const TIE_EPS: f64 = 1e-9;

/// Exact optimum by enumerating every assignment up to part relabeling.
/// Among equal scores the lexicographically smallest assignment wins.
/// Meant as a reference for small graphs.
pub fn brute_force_partition(
    topology: &LogicalTopology,
    params: &PartitionParams,
) -> Result<PartitionPlan, PartitionError> {
    params.check()?;
    let n = topology.switches().len();
    if n == 0 {
        return Err(PartitionError::EmptyTopology);
    }
    if n > BRUTE_FORCE_LIMIT {
        return Err(PartitionError::TooLarge {
            switches: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    // Only links towards lower-numbered switches, so each is counted when
    // its later endpoint is placed.
    let mut back = vec![Vec::new(); n];
    for l in topology.switch_links() {
        let link = topology.link(l);
        let (a, b) = (
            link.a.switch.0,
            link.b_port().expect("switch link").switch.0,
        );
        back[a.max(b)].push(a.min(b));
    }
    let weight: Vec<usize> = topology
        .switch_indices()
        .map(|s| topology.degree(s))
        .collect();

    let mut search = Search {
        params,
        back: &back,
        weight: &weight,
        assignment: vec![0; n],
        ports: vec![0; params.num_parts],
        best: None,
        best_score: f64::INFINITY,
    };
    search.visit(topology, 0, 0, 0);
    match search.best {
        Some(assignment) => PartitionPlan::from_assignment(topology, params.num_parts, assignment),
        None => Err(PartitionError::NoFeasiblePlan {
            capacity: params.max_ports_per_part,
            excess: 0,
        }),
    }
}

struct Search<'a> {
    params: &'a PartitionParams,
    back: &'a [Vec<usize>],
    weight: &'a [usize],
    assignment: Vec<usize>,
    ports: Vec<usize>,
    best: Option<Vec<usize>>,
    best_score: f64,
}

impl Search<'_> {
    fn visit(&mut self, topology: &LogicalTopology, v: usize, used: usize, cut: usize) {
        let n = self.assignment.len();
        if self.best.is_some() && self.params.alpha * cut as f64 > self.best_score + TIE_EPS {
            return;
        }
        if v == n {
            let plan = PartitionPlan::from_assignment(
                topology,
                self.params.num_parts,
                self.assignment.clone(),
            )
            .expect("complete assignment");
            let score = objective(&plan, self.params);
            // enumeration is lexicographic, so a later tie never replaces
            if self.best.is_none() || score < self.best_score - TIE_EPS {
                self.best_score = score;
                self.best = Some(self.assignment.clone());
            }
            return;
        }
        let limit = (used + 1).min(self.params.num_parts);
        for part in 0..limit {
            if self.ports[part] + self.weight[v] > self.params.max_ports_per_part {
                continue;
            }
            let added = self.back[v]
                .iter()
                .filter(|&&u| self.assignment[u] != part)
                .count();
            self.assignment[v] = part;
            self.ports[part] += self.weight[v];
            self.visit(topology, v + 1, used.max(part + 1), cut + added);
            self.ports[part] -= self.weight[v];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{gen_torus, SwitchLabel, SwitchPort, TopologyBuilder};

    fn cycle(n: usize) -> LogicalTopology {
        let mut b = TopologyBuilder::new("cycle");
        let ids: Vec<_> = (0..n)
            .map(|i| b.add_switch(format!("v{i:02}"), 2, SwitchLabel::None))
            .collect();
        for i in 0..n {
            b.add_link(
                SwitchPort::new(ids[i], 2),
                SwitchPort::new(ids[(i + 1) % n], 1),
            );
        }
        b.build()
    }

    #[test]
    fn triangle_and_square() {
        // triangle in two parts, beta = 0: a lone vertex cuts two links
        let p = PartitionParams::new(2, 4).with_weights(1.0, 0.0);
        let plan = brute_force_partition(&cycle(3), &p).unwrap();
        assert_eq!(plan.cut_edges_total, 2);

        let p = PartitionParams::new(2, 4);
        let plan = brute_force_partition(&cycle(4), &p).unwrap();
        assert_eq!(plan.cut_edges_total, 2);
        assert_eq!(plan.assignment, vec![0, 0, 1, 1]);
        assert_eq!(plan.internal_edges, vec![1, 1]);
    }

    #[test]
    fn torus_optimum_matches_halves() {
        let t = gen_torus(&[4, 4]).unwrap();
        let p = PartitionParams::new(2, 64);
        let plan = brute_force_partition(&t, &p).unwrap();
        assert_eq!(plan.cut_edges_total, 8);
        assert_eq!(plan.internal_edges, vec![12, 12]);
    }

    #[test]
    fn too_large_is_refused() {
        let err = brute_force_partition(&cycle(17), &PartitionParams::new(2, 100)).unwrap_err();
        assert_eq!(
            err,
            PartitionError::TooLarge {
                switches: 17,
                limit: 16
            }
        );
    }

    #[test]
    fn infeasible_capacity() {
        let err = brute_force_partition(&cycle(4), &PartitionParams::new(2, 3)).unwrap_err();
        assert!(matches!(
            err,
            PartitionError::NoFeasiblePlan { capacity: 3, .. }
        ));
    }
}
