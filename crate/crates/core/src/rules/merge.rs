use std::collections::{BTreeMap, BTreeSet};

use crate::routing::Vc;
use crate::topology::{HostIdx, PortNo};

use super::{
    Action, DstMatch, FlowRule, HostAddr, Match, RuleSet, PRIORITY_MERGED, PRIORITY_ROUTE,
    TABLE_ROUTE,
};

/// Collapses route rules that share ingress, metadata and VC. The most
/// common action becomes one rule matching any host of the topology, at a
/// lower priority; destinations that had no rule get an explicit drop so
/// the forwarding function over the topology's hosts is unchanged. A group
/// is only rewritten when that saves rules.
pub fn merge_entries(set: &RuleSet) -> RuleSet {
    let mut groups: BTreeMap<(Option<u32>, PortNo, Option<Vc>), Vec<(HostAddr, Action)>> =
        BTreeMap::new();
    let mut keep = Vec::new();
    for r in set.rules() {
        match (r.table, r.priority, r.matches.dst) {
            (TABLE_ROUTE, PRIORITY_ROUTE, Some(DstMatch::Host(dst)))
                if matches!(r.action, Action::Output { .. }) =>
            {
                groups
                    .entry((r.matches.metadata, r.matches.in_port, r.matches.vc))
                    .or_default()
                    .push((dst, r.action));
            }
            _ => keep.push(*r),
        }
    }
    let universe: Vec<HostAddr> = (0..set.num_hosts)
        .map(|h| HostAddr::new(set.tag, HostIdx(h)))
        .collect();
    for ((metadata, in_port, vc), entries) in groups {
        let mut votes: BTreeMap<Action, usize> = BTreeMap::new();
        for (_, a) in &entries {
            *votes.entry(*a).or_default() += 1;
        }
        // most votes, then the smallest action
        let (&common, &count) = votes
            .iter()
            .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0)))
            .expect("non-empty group");
        let covered: BTreeSet<HostAddr> = entries.iter().map(|(d, _)| *d).collect();
        let uncovered = universe.iter().filter(|d| !covered.contains(d)).count();
        let merged = 1 + uncovered + entries.len() - count;
        let exact = |dst: HostAddr, action: Action| FlowRule {
            table: TABLE_ROUTE,
            priority: PRIORITY_ROUTE,
            matches: Match {
                in_port,
                metadata,
                dst: Some(DstMatch::Host(dst)),
                vc,
            },
            action,
        };
        if merged >= entries.len() {
            keep.extend(entries.iter().map(|&(d, a)| exact(d, a)));
            continue;
        }
        keep.push(FlowRule {
            table: TABLE_ROUTE,
            priority: PRIORITY_MERGED,
            matches: Match {
                in_port,
                metadata,
                dst: Some(DstMatch::Topology(set.tag)),
                vc,
            },
            action: common,
        });
        keep.extend(
            entries
                .iter()
                .filter(|(_, a)| *a != common)
                .map(|&(d, a)| exact(d, a)),
        );
        keep.extend(
            universe
                .iter()
                .filter(|d| !covered.contains(d))
                .map(|&d| exact(d, Action::Drop)),
        );
    }
    let mut out = set.clone();
    out.replace_rules(keep);
    out
}

pub fn merge_rulesets(sets: &[RuleSet]) -> Vec<RuleSet> {
    sets.iter().map(merge_entries).collect()
}
