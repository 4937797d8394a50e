use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::topology::{LinkIdx, LogicalTopology, SwitchPort};

use super::{Route, RoutingError, Vc, VcAssignment};

/// One direction of a switch-switch link on one VC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Channel {
    pub link: LinkIdx,
    /// Traversed from the link's `a` end to its `b` end.
    pub forward: bool,
    pub vc: Vc,
}

impl Channel {
    pub fn describe(&self, t: &LogicalTopology) -> String {
        let link = t.link(self.link);
        let b = link.b_port().expect("channels are switch links");
        let (from, to) = if self.forward {
            (link.a, b)
        } else {
            (b, link.a)
        };
        format!(
            "{}->{}@vc{}",
            t.describe_port(from),
            t.describe_port(to),
            self.vc
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelDependencyGraph {
    pub edges: BTreeMap<Channel, BTreeSet<Channel>>,
}

impl ChannelDependencyGraph {
    pub fn num_channels(&self) -> usize {
        let mut all: BTreeSet<Channel> = self.edges.keys().copied().collect();
        all.extend(self.edges.values().flatten().copied());
        all.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.values().map(BTreeSet::len).sum()
    }
}

/// Dependencies between consecutive switch-switch channels of every route.
pub fn build_cdg(
    t: &LogicalTopology,
    routes: &[Route],
    vcs: &VcAssignment,
) -> Result<ChannelDependencyGraph, RoutingError> {
    let mut cdg = ChannelDependencyGraph::default();
    for route in routes {
        vcs.check(route)?;
        let mut prev: Option<Channel> = None;
        for w in route.hops.windows(2) {
            let out = SwitchPort::new(w[0].switch, w[0].out_port);
            let next = SwitchPort::new(w[1].switch, w[1].in_port);
            let link = t
                .link_at(out)
                .filter(|&l| t.link(l).peer_of(w[0].switch) == Some(next))
                .ok_or_else(|| RoutingError::MissingLink(t.describe_port(out)))?;
            let ch = Channel {
                link,
                forward: t.link(link).a == out,
                vc: w[0].vc,
            };
            cdg.edges.entry(ch).or_default();
            if let Some(p) = prev {
                cdg.edges.entry(p).or_default().insert(ch);
            }
            prev = Some(ch);
        }
    }
    Ok(cdg)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeadlockVerdict {
    Free,
    /// A dependency cycle; each channel depends on the next, the last on
    /// the first.
    Cycle(Vec<Channel>),
}

impl DeadlockVerdict {
    pub fn is_free(&self) -> bool {
        *self == DeadlockVerdict::Free
    }
}

impl fmt::Display for DeadlockVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeadlockVerdict::Free => f.write_str("deadlock-free"),
            DeadlockVerdict::Cycle(c) => write!(f, "dependency cycle over {} channels", c.len()),
        }
    }
}

/// Looks for a cycle with an iterative depth-first search.
pub fn assert_deadlock_free(cdg: &ChannelDependencyGraph) -> DeadlockVerdict {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut mark: BTreeMap<Channel, Mark> = BTreeMap::new();
    let empty = BTreeSet::new();
    for &root in cdg.edges.keys() {
        if mark.contains_key(&root) {
            continue;
        }
        let mut stack: Vec<(Channel, std::collections::btree_set::Iter<'_, Channel>)> =
            vec![(root, cdg.edges.get(&root).unwrap_or(&empty).iter())];
        mark.insert(root, Mark::Open);
        while let Some((node, iter)) = stack.last_mut() {
            let node = *node;
            match iter.next() {
                Some(&next) => match mark.get(&next) {
                    None => {
                        mark.insert(next, Mark::Open);
                        stack.push((next, cdg.edges.get(&next).unwrap_or(&empty).iter()));
                    }
                    Some(Mark::Open) => {
                        let start = stack
                            .iter()
                            .position(|(c, _)| *c == next)
                            .expect("open node is on the stack");
                        return DeadlockVerdict::Cycle(
                            stack[start..].iter().map(|(c, _)| *c).collect(),
                        );
                    }
                    Some(Mark::Done) => {}
                },
                None => {
                    mark.insert(node, Mark::Done);
                    stack.pop();
                }
            }
        }
    }
    DeadlockVerdict::Free
}
