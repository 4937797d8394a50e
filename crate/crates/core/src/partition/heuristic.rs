use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::topology::LogicalTopology;

use super::state::{Graph, Key, State};
use super::{contiguous_assignment, PartitionError, PartitionParams, PartitionPlan};

const MAX_PASSES: usize = 16;
const MAX_MOVES_PER_PASS: usize = 256;

/// Heuristic partition: several seeded greedy growths plus the contiguous
/// split, each refined with Fiduccia-Mattheyses style passes. Deterministic
/// for a given seed.
pub fn partition(
    topology: &LogicalTopology,
    params: &PartitionParams,
) -> Result<PartitionPlan, PartitionError> {
    params.check()?;
    let n = topology.switches().len();
    if n == 0 {
        return Err(PartitionError::EmptyTopology);
    }
    let graph = Graph::new(topology);
    let k = params.num_parts;
    let demand = graph.total_weight();
    if demand > k * params.max_ports_per_part {
        return Err(PartitionError::Infeasible {
            demand,
            parts: k,
            capacity: params.max_ports_per_part,
        });
    }
    if let Some(v) = (0..n).find(|&v| graph.weight[v] > params.max_ports_per_part) {
        log::debug!(
            "switch {} alone needs {} ports",
            topology.switch(crate::topology::SwitchIdx(v)).name,
            graph.weight[v]
        );
        return Err(PartitionError::NoFeasiblePlan {
            capacity: params.max_ports_per_part,
            excess: graph.weight[v] - params.max_ports_per_part,
        });
    }

    let restarts = if n <= 16 { n } else { 8 };
    let mut candidates = vec![contiguous_assignment(n, k)];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let target = demand.div_ceil(k).min(params.max_ports_per_part);
    for r in 0..restarts {
        candidates.push(grow(&graph, k, target, r, &mut rng));
    }

    let mut best: Option<(Key, Vec<usize>)> = None;
    for start in candidates {
        let state = refine(&graph, params, State::new(&graph, k, start));
        let key = state.key(params);
        if best.as_ref().is_none_or(|(b, _)| key.better_than(b)) {
            best = Some((key, state.assignment));
        }
    }
    let (key, assignment) = best.expect("at least one candidate");
    if key.excess > 0 {
        return Err(PartitionError::NoFeasiblePlan {
            capacity: params.max_ports_per_part,
            excess: key.excess,
        });
    }
    PartitionPlan::from_assignment(topology, k, relabel(&assignment, k))
}

/// Renames parts in order of first appearance so switch 0 lands in part 0.
fn relabel(assignment: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    assignment
        .iter()
        .map(|&p| {
            if map[p] == usize::MAX {
                map[p] = next;
                next += 1;
            }
            map[p]
        })
        .collect()
}

/// Breadth-first growth of one part at a time up to `target` ports, always
/// absorbing the frontier switch with the most links into the part. The
/// last part takes whatever is left.
fn grow(
    graph: &Graph,
    k: usize,
    target: usize,
    restart: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let n = graph.len();
    let mut assignment = vec![usize::MAX; n];
    let mut order: Vec<usize> = (0..n).collect();
    if restart > 0 {
        order.shuffle(rng);
    }
    for part in 0..k.saturating_sub(1) {
        let Some(&start) = order.iter().find(|&&v| assignment[v] == usize::MAX) else {
            break;
        };
        assignment[start] = part;
        let mut weight = graph.weight[start];
        let mut links = vec![0usize; n];
        for &u in &graph.adj[start] {
            links[u] += 1;
        }
        loop {
            let next = (0..n)
                .filter(|&v| {
                    assignment[v] == usize::MAX
                        && links[v] > 0
                        && weight + graph.weight[v] <= target
                })
                .max_by(|&x, &y| links[x].cmp(&links[y]).then(y.cmp(&x)));
            let Some(v) = next else { break };
            assignment[v] = part;
            weight += graph.weight[v];
            for &u in &graph.adj[v] {
                links[u] += 1;
            }
        }
    }
    for p in assignment.iter_mut() {
        if *p == usize::MAX {
            *p = k - 1;
        }
    }
    assignment
}

/// Repeated passes: move every switch once, each time taking the best move
/// available, then roll back to the best prefix. Stops when a pass brings
/// no improvement.
fn refine(graph: &Graph, params: &PartitionParams, mut state: State) -> State {
    let n = graph.len();
    let k = params.num_parts;
    if k < 2 {
        return state;
    }
    for _ in 0..MAX_PASSES {
        let start_key = state.key(params);
        let mut best_key = start_key;
        let mut best_len = 0;
        let mut moves: Vec<(usize, usize)> = Vec::new();
        let mut locked = vec![false; n];
        for _ in 0..n.min(MAX_MOVES_PER_PASS) {
            let mut choice: Option<(Key, usize, usize)> = None;
            for v in (0..n).filter(|&v| !locked[v]) {
                for to in (0..k).filter(|&to| to != state.assignment[v]) {
                    let key = state.key_after(graph, params, v, to);
                    if choice.as_ref().is_none_or(|(c, _, _)| key.better_than(c)) {
                        choice = Some((key, v, to));
                    }
                }
            }
            let Some((key, v, to)) = choice else { break };
            moves.push((v, state.assignment[v]));
            state.apply(graph, v, to);
            locked[v] = true;
            if key.better_than(&best_key) {
                best_key = key;
                best_len = moves.len();
            }
        }
        for &(v, from) in moves[best_len..].iter().rev() {
            state.apply(graph, v, from);
        }
        if !best_key.better_than(&start_key) {
            break;
        }
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::objective;
    use crate::topology::{gen_dragonfly, gen_fattree, gen_torus};

    #[test]
    fn torus_4x4_two_parts() {
        let t = gen_torus(&[4, 4]).unwrap();
        let params = PartitionParams::new(2, 64);
        let plan = partition(&t, &params).unwrap();
        assert_eq!(plan.cut_edges_total, 8);
        assert_eq!(plan.internal_edges, vec![12, 12]);
        assert!(plan.fits(64));
    }

    #[test]
    fn single_part_keeps_everything() {
        let t = gen_fattree(4).unwrap();
        let plan = partition(&t, &PartitionParams::new(1, 128)).unwrap();
        assert_eq!(plan.cut_edges_total, 0);
        assert_eq!(plan.internal_edges, vec![32]);
        assert_eq!(plan.ports_used(0), 80);
    }

    #[test]
    fn capacity_is_respected() {
        let t = gen_fattree(4).unwrap();
        let plan = partition(&t, &PartitionParams::new(2, 48)).unwrap();
        assert!(
            plan.fits(48),
            "{:?}",
            (plan.ports_used(0), plan.ports_used(1))
        );
    }

    #[test]
    fn infeasible_total_is_reported() {
        let t = gen_dragonfly(4, 9, 2, 2).unwrap();
        let err = partition(&t, &PartitionParams::new(3, 64)).unwrap_err();
        assert_eq!(
            err,
            PartitionError::Infeasible {
                demand: 252,
                parts: 3,
                capacity: 64
            }
        );
        assert!(err.to_string().contains("192"));
    }

    #[test]
    fn deterministic_for_seed() {
        let t = gen_torus(&[5, 5]).unwrap();
        let params = PartitionParams::new(3, 64).with_seed(7);
        assert_eq!(
            partition(&t, &params).unwrap(),
            partition(&t, &params).unwrap()
        );
    }

    #[test]
    fn cut_only_objective() {
        let t = gen_torus(&[4, 4]).unwrap();
        let params = PartitionParams::new(2, 64).with_weights(1.0, 0.0);
        let plan = partition(&t, &params).unwrap();
        assert_eq!(objective(&plan, &params), plan.cut_edges_total as f64);
        assert!(plan.fits(64));
        assert_eq!(plan.cut_edges_total, 8);
    }
}
