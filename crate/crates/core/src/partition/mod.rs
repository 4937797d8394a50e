//! Splitting a logical topology across physical switches.
//!
//! Every logical switch goes to one part (one physical switch). Links inside
//! a part become self-links, links between parts become inter-switch links.
//! A plan is scored with
//!
//! ```text
//! alpha * cut + beta * sum over parts of 1 / internal_edges(part)
//! ```
//!
//! and must respect the port budget of each physical switch: a part uses
//! `2 * internal + hosts + incident cut` ports, which is the sum of the
//! degrees of its switches.

mod exhaustive;
mod heuristic;
mod state;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::topology::{LinkEnd, LogicalTopology, SwitchIdx};

pub use exhaustive::{brute_force_partition, BRUTE_FORCE_LIMIT};
pub use heuristic::partition;

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionParams {
    pub num_parts: usize,
    pub alpha: f64,
    pub beta: f64,
    pub max_ports_per_part: usize,
    pub seed: u64,
}

impl PartitionParams {
    /// `alpha = beta = 1`, seed 0.
    pub fn new(num_parts: usize, max_ports_per_part: usize) -> Self {
        PartitionParams {
            num_parts,
            alpha: 1.0,
            beta: 1.0,
            max_ports_per_part,
            seed: 0,
        }
    }

    pub fn with_weights(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn check(&self) -> Result<(), PartitionError> {
        if self.num_parts == 0 {
            return Err(PartitionError::InvalidParams(
                "num_parts must be at least 1".into(),
            ));
        }
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.alpha) || !ok(self.beta) || self.alpha + self.beta <= 0.0 {
            return Err(PartitionError::InvalidParams(format!(
                "alpha and beta must be non-negative with a positive sum (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("invalid partition parameters: {0}")]
    InvalidParams(String),
    #[error("topology has no switches")]
    EmptyTopology,
    #[error("topology needs {demand} ports but {parts} parts of {capacity} ports offer only {}", parts * capacity)]
    Infeasible {
        demand: usize,
        parts: usize,
        capacity: usize,
    },
    #[error(
        "no assignment keeps every part within {capacity} ports (best attempt exceeds by {excess})"
    )]
    NoFeasiblePlan { capacity: usize, excess: usize },
    #[error("switch `{switch}` is not assigned to a part")]
    Unassigned { switch: String },
    #[error("switch `{switch}` assigned to part {part} but only {num_parts} parts exist")]
    PartOutOfRange {
        switch: String,
        part: usize,
        num_parts: usize,
    },
    #[error("exhaustive search is limited to {limit} switches, topology has {switches}")]
    TooLarge { switches: usize, limit: usize },
    #[error("plans disagree on the number of parts ({expected} vs {found})")]
    MismatchedParts { expected: usize, found: usize },
}

/// Per-pair and total counts of switch-switch links crossing parts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CutCounts {
    pub by_pair: BTreeMap<(usize, usize), usize>,
    pub total: usize,
}

/// Counts switch-switch links whose endpoints sit in different parts. Pair
/// keys are ordered `(low, high)`.
pub fn cut_edges(
    topology: &LogicalTopology,
    assignment: &[usize],
) -> Result<CutCounts, PartitionError> {
    if assignment.len() < topology.switches().len() {
        return Err(PartitionError::Unassigned {
            switch: topology.switch(SwitchIdx(assignment.len())).name.clone(),
        });
    }
    let mut counts = CutCounts::default();
    for l in topology.switch_links() {
        let link = topology.link(l);
        let Some(b) = link.b_port() else { continue };
        let (x, y) = (assignment[link.a.switch.0], assignment[b.switch.0]);
        if x != y {
            *counts.by_pair.entry((x.min(y), x.max(y))).or_default() += 1;
            counts.total += 1;
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub num_parts: usize,
    /// Part of each logical switch, indexed by [`SwitchIdx`].
    pub assignment: Vec<usize>,
    /// Switch-switch links with both ends in the part (future self-links).
    pub internal_edges: Vec<usize>,
    pub host_links: Vec<usize>,
    pub cut_edges_by_pair: BTreeMap<(usize, usize), usize>,
    pub cut_edges_total: usize,
}

impl PartitionPlan {
    pub fn from_assignment(
        topology: &LogicalTopology,
        num_parts: usize,
        assignment: Vec<usize>,
    ) -> Result<Self, PartitionError> {
        for (i, &part) in assignment
            .iter()
            .enumerate()
            .take(topology.switches().len())
        {
            if part >= num_parts {
                return Err(PartitionError::PartOutOfRange {
                    switch: topology.switch(SwitchIdx(i)).name.clone(),
                    part,
                    num_parts,
                });
            }
        }
        let cut = cut_edges(topology, &assignment)?;
        let mut assignment = assignment;
        assignment.truncate(topology.switches().len());
        let mut internal_edges = vec![0; num_parts];
        let mut host_links = vec![0; num_parts];
        for link in topology.links() {
            let pa = assignment[link.a.switch.0];
            match link.b {
                LinkEnd::Switch(b) if assignment[b.switch.0] == pa => internal_edges[pa] += 1,
                LinkEnd::Switch(_) => {}
                LinkEnd::Host(_) => host_links[pa] += 1,
            }
        }
        Ok(PartitionPlan {
            num_parts,
            assignment,
            internal_edges,
            host_links,
            cut_edges_by_pair: cut.by_pair,
            cut_edges_total: cut.total,
        })
    }

    /// Everything in part 0.
    pub fn single(topology: &LogicalTopology, num_parts: usize) -> Self {
        Self::from_assignment(
            topology,
            num_parts.max(1),
            vec![0; topology.switches().len()],
        )
        .expect("part 0 always exists")
    }

    pub fn part_of(&self, switch: SwitchIdx) -> usize {
        self.assignment[switch.0]
    }

    pub fn cut_between(&self, x: usize, y: usize) -> usize {
        self.cut_edges_by_pair
            .get(&(x.min(y), x.max(y)))
            .copied()
            .unwrap_or(0)
    }

    /// Cut links with one end in `part`.
    pub fn incident_cut(&self, part: usize) -> usize {
        self.cut_edges_by_pair
            .iter()
            .filter(|((x, y), _)| *x == part || *y == part)
            .map(|(_, c)| c)
            .sum()
    }

    /// Physical ports the part consumes.
    pub fn ports_used(&self, part: usize) -> usize {
        2 * self.internal_edges[part] + self.host_links[part] + self.incident_cut(part)
    }

    pub fn switches_in(&self, part: usize) -> usize {
        self.assignment.iter().filter(|&&p| p == part).count()
    }

    pub fn fits(&self, max_ports_per_part: usize) -> bool {
        (0..self.num_parts).all(|p| self.ports_used(p) <= max_ports_per_part)
    }

    /// Relabels parts: part `p` becomes `perm[p]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut internal_edges = vec![0; self.num_parts];
        let mut host_links = vec![0; self.num_parts];
        for p in 0..self.num_parts {
            internal_edges[perm[p]] = self.internal_edges[p];
            host_links[perm[p]] = self.host_links[p];
        }
        let cut_edges_by_pair = self
            .cut_edges_by_pair
            .iter()
            .map(|(&(x, y), &c)| ((perm[x].min(perm[y]), perm[x].max(perm[y])), c))
            .collect();
        PartitionPlan {
            num_parts: self.num_parts,
            assignment: self.assignment.iter().map(|&p| perm[p]).collect(),
            internal_edges,
            host_links,
            cut_edges_by_pair,
            cut_edges_total: self.cut_edges_total,
        }
    }

    /// Deterministic text report: objective, per-part budgets, per-pair cut
    /// counts and the assignment itself.
    pub fn render(&self, topology: &LogicalTopology, params: &PartitionParams) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# linkproj partition v1");
        let _ = writeln!(out, "topology {}", topology.name);
        let _ = writeln!(out, "parts {}", self.num_parts);
        let _ = writeln!(
            out,
            "objective {} alpha {} beta {}",
            fmt_score(objective(self, params)),
            params.alpha,
            params.beta
        );
        let _ = writeln!(out, "cut {}", self.cut_edges_total);
        for p in 0..self.num_parts {
            let _ = writeln!(
                out,
                "part {p} switches {} internal {} hosts {} cut {} ports {}",
                self.switches_in(p),
                self.internal_edges[p],
                self.host_links[p],
                self.incident_cut(p),
                self.ports_used(p)
            );
        }
        for (&(x, y), &c) in &self.cut_edges_by_pair {
            let _ = writeln!(out, "pair {x} {y} cut {c}");
        }
        for s in topology.switch_indices() {
            let _ = writeln!(
                out,
                "assign {} {}",
                topology.switch(s).name,
                self.part_of(s)
            );
        }
        out
    }
}

pub(crate) fn fmt_score(score: f64) -> String {
    if score.is_finite() {
        format!("{score:.6}")
    } else {
        "inf".to_string()
    }
}

/// Scores a plan. Lower is better; a part without internal edges makes the
/// score infinite whenever `beta > 0`.
pub fn objective(plan: &PartitionPlan, params: &PartitionParams) -> f64 {
    let cut = params.alpha * plan.cut_edges_total as f64;
    if params.beta == 0.0 {
        return cut;
    }
    let mut balance = 0.0;
    for &internal in &plan.internal_edges {
        if internal == 0 {
            return f64::INFINITY;
        }
        balance += 1.0 / internal as f64;
    }
    cut + params.beta * balance
}

/// Inter-switch links to reserve per part pair so that every plan fits:
/// the element-wise maximum of the plans' cut counts.
pub fn reserve_inter_switch_links(
    plans: &[&PartitionPlan],
) -> Result<BTreeMap<(usize, usize), usize>, PartitionError> {
    let mut reserved = BTreeMap::new();
    let Some(first) = plans.first() else {
        return Ok(reserved);
    };
    for plan in plans {
        if plan.num_parts != first.num_parts {
            return Err(PartitionError::MismatchedParts {
                expected: first.num_parts,
                found: plan.num_parts,
            });
        }
        for (&pair, &count) in &plan.cut_edges_by_pair {
            let slot = reserved.entry(pair).or_insert(0);
            *slot = (*slot).max(count);
        }
    }
    Ok(reserved)
}

/// Partitions onto the fewest parts (at most `max_parts`) that fit
/// `capacity` ports each. Weights and seed come from `template`. Returns
/// the error of the largest attempt when nothing fits.
pub fn fit_partition(
    topology: &LogicalTopology,
    max_parts: usize,
    capacity: usize,
    template: &PartitionParams,
) -> Result<PartitionPlan, PartitionError> {
    let demand: usize = topology.switch_indices().map(|s| topology.degree(s)).sum();
    if demand > max_parts * capacity {
        return Err(PartitionError::Infeasible {
            demand,
            parts: max_parts,
            capacity,
        });
    }
    let first = demand.div_ceil(capacity.max(1)).max(1);
    let mut last = Err(PartitionError::Infeasible {
        demand,
        parts: max_parts,
        capacity,
    });
    for k in first..=max_parts {
        let params = PartitionParams {
            num_parts: k,
            max_ports_per_part: capacity,
            ..template.clone()
        };
        last = partition(topology, &params);
        if last.is_ok() {
            break;
        }
    }
    last
}

/// Assignment that fills parts with consecutive switches, `ceil(n / k)` at
/// a time. Used as a baseline for the heuristic.
pub fn contiguous_assignment(num_switches: usize, num_parts: usize) -> Vec<usize> {
    let chunk = num_switches.div_ceil(num_parts.max(1)).max(1);
    (0..num_switches)
        .map(|i| (i / chunk).min(num_parts - 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{gen_fattree, gen_torus, SwitchLabel, SwitchPort, TopologyBuilder};

    pub(crate) fn path(n: usize) -> LogicalTopology {
        let mut b = TopologyBuilder::new("path");
        let ids: Vec<_> = (0..n)
            .map(|i| b.add_switch(format!("v{i:02}"), 2, SwitchLabel::None))
            .collect();
        for i in 1..n {
            b.add_link(SwitchPort::new(ids[i - 1], 2), SwitchPort::new(ids[i], 1));
        }
        b.build()
    }

    fn torus_rows(rows: &[usize]) -> Vec<usize> {
        // switches are row-major over [x, y]; "rows" are x coordinates here
        (0..16)
            .map(|i| usize::from(!rows.contains(&(i / 4))))
            .collect()
    }

    #[test]
    fn single_part_has_no_cut() {
        let t = gen_torus(&[4, 4]).unwrap();
        let c = cut_edges(&t, &[0; 16]).unwrap();
        assert_eq!(c.total, 0);
        assert!(c.by_pair.is_empty());
    }

    #[test]
    fn torus_halves_cut_eight() {
        let t = gen_torus(&[4, 4]).unwrap();
        let plan = PartitionPlan::from_assignment(&t, 2, torus_rows(&[0, 1])).unwrap();
        assert_eq!(plan.cut_edges_total, 8);
        assert_eq!(plan.cut_edges_by_pair, BTreeMap::from([((0, 1), 8)]));
        assert_eq!(plan.internal_edges, vec![12, 12]);
        assert_eq!(plan.host_links, vec![8, 8]);
        assert_eq!(plan.ports_used(0), 40);
        let score = objective(&plan, &PartitionParams::new(2, 64));
        assert!((score - (8.0 + 1.0 / 12.0 + 1.0 / 12.0)).abs() < 1e-12);
        assert!((score - 8.1667).abs() < 1e-4);
    }

    #[test]
    fn path_split_cuts_one() {
        let t = path(3);
        assert_eq!(cut_edges(&t, &[0, 1, 1]).unwrap().total, 1);
    }

    #[test]
    fn unassigned_switch_is_named() {
        let t = path(3);
        assert_eq!(
            cut_edges(&t, &[0, 1]).unwrap_err(),
            PartitionError::Unassigned {
                switch: "v02".into()
            }
        );
        assert!(matches!(
            PartitionPlan::from_assignment(&t, 2, vec![0, 2, 1]),
            Err(PartitionError::PartOutOfRange { part: 2, .. })
        ));
    }

    #[test]
    fn objective_edge_cases() {
        let t = gen_torus(&[4, 4]).unwrap();
        let whole = PartitionPlan::single(&t, 1);
        let p = PartitionParams::new(1, 64);
        assert!((objective(&whole, &p) - 0.03125).abs() < 1e-15);

        let halves = PartitionPlan::from_assignment(&t, 2, torus_rows(&[0, 1])).unwrap();
        let cut_only = PartitionParams::new(2, 64).with_weights(1.0, 0.0);
        assert_eq!(objective(&halves, &cut_only), 8.0);

        let lopsided = PartitionPlan::single(&t, 2);
        assert_eq!(
            objective(&lopsided, &PartitionParams::new(2, 64)),
            f64::INFINITY
        );
        assert_eq!(objective(&lopsided, &cut_only), 0.0);
    }

    #[test]
    fn conservation_identity() {
        let t = gen_fattree(4).unwrap();
        let plan = PartitionPlan::from_assignment(&t, 2, contiguous_assignment(20, 2)).unwrap();
        let total = t.links().len();
        let hosts: usize = plan.host_links.iter().sum();
        assert_eq!(
            total - plan.internal_edges[0] - plan.internal_edges[1] - hosts,
            plan.cut_edges_total
        );
        for part in 0..2 {
            let degrees: usize = t
                .switch_indices()
                .filter(|&s| plan.part_of(s) == part)
                .map(|s| t.degree(s))
                .sum();
            assert_eq!(plan.ports_used(part), degrees);
        }
    }

    #[test]
    fn reservation_is_elementwise_max() {
        let t = gen_torus(&[4, 4]).unwrap();
        let a = PartitionPlan::from_assignment(&t, 2, torus_rows(&[0, 1])).unwrap();
        assert_eq!(
            reserve_inter_switch_links(&[&a]).unwrap(),
            a.cut_edges_by_pair
        );

        let mut b = a.clone();
        b.cut_edges_by_pair.insert((0, 1), 6);
        assert_eq!(
            reserve_inter_switch_links(&[&a, &b]).unwrap(),
            BTreeMap::from([((0, 1), 8)])
        );

        let c = PartitionPlan::single(&t, 3);
        assert_eq!(
            reserve_inter_switch_links(&[&a, &c]).unwrap_err(),
            PartitionError::MismatchedParts {
                expected: 2,
                found: 3
            }
        );
    }

    #[test]
    fn params_are_checked() {
        assert!(PartitionParams::new(0, 10).check().is_err());
        assert!(PartitionParams::new(2, 10)
            .with_weights(0.0, 0.0)
            .check()
            .is_err());
        assert!(PartitionParams::new(2, 10)
            .with_weights(-1.0, 2.0)
            .check()
            .is_err());
        assert!(PartitionParams::new(2, 10).check().is_ok());
    }

    #[test]
    fn permuting_parts() {
        let t = gen_torus(&[4, 4]).unwrap();
        let plan = PartitionPlan::from_assignment(&t, 3, torus_rows(&[0])).unwrap();
        let swapped = plan.permuted(&[2, 0, 1]);
        assert_eq!(
            swapped,
            PartitionPlan::from_assignment(
                &t,
                3,
                plan.assignment.iter().map(|&p| [2, 0, 1][p]).collect()
            )
            .unwrap()
        );
    }

    #[test]
    fn contiguous_chunks() {
        assert_eq!(contiguous_assignment(5, 2), vec![0, 0, 0, 1, 1]);
        assert_eq!(contiguous_assignment(2, 3), vec![0, 1]);
    }
}
