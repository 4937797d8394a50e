use std::collections::BTreeMap;

use crate::topology::{LinkIdx, LogicalTopology, Origin, Shape, SwitchIdx, SwitchLabel};

use super::{Path, RoutingError, RoutingScheme, Vc};

/// Grid extents of a generated mesh or torus.
pub(crate) fn grid_dims(t: &LogicalTopology) -> Option<Vec<usize>> {
    match &t.origin {
        Origin::Generated(spec) => match &spec.shape {
            Shape::Mesh { dims } | Shape::Torus { dims } => Some(dims.clone()),
            _ => None,
        },
        Origin::Custom => None,
    }
}

pub(crate) enum Inner {
    FatTree {
        level: Vec<usize>,
        pod: Vec<usize>,
    },
    Dragonfly {
        group: Vec<usize>,
        /// Global links per ordered group pair, ascending link index.
        globals: BTreeMap<(usize, usize), Vec<LinkIdx>>,
    },
    Grid {
        dims: Vec<usize>,
        wrap: bool,
        coord: Vec<Vec<usize>>,
        at: BTreeMap<Vec<usize>, SwitchIdx>,
    },
    Shortest {
        /// `dist[target][switch]`
        dist: Vec<Vec<Option<usize>>>,
    },
}

fn missing(t: &LogicalTopology, s: SwitchIdx) -> RoutingError {
    RoutingError::MissingLabel(t.switch(s).name.clone())
}

impl Inner {
    pub fn new(t: &LogicalTopology, scheme: RoutingScheme) -> Result<Self, RoutingError> {
        Ok(match scheme {
            RoutingScheme::FatTreeDfs => {
                let mut level = Vec::new();
                let mut pod = Vec::new();
                for s in t.switch_indices() {
                    let SwitchLabel::FatTree { layer, pod: p, .. } = t.switch(s).label else {
                        return Err(missing(t, s));
                    };
                    level.push(layer.level());
                    pod.push(p);
                }
                Inner::FatTree { level, pod }
            }
            RoutingScheme::DragonflyMinimal | RoutingScheme::DragonflyAdaptive => {
                let mut group = Vec::new();
                for s in t.switch_indices() {
                    let SwitchLabel::Dragonfly { group: g, .. } = t.switch(s).label else {
                        return Err(missing(t, s));
                    };
                    group.push(g);
                }
                let mut globals: BTreeMap<(usize, usize), Vec<LinkIdx>> = BTreeMap::new();
                for l in t.switch_links() {
                    let link = t.link(l);
                    let (x, y) = (
                        group[link.a.switch.0],
                        group[link.b_port().expect("switch link").switch.0],
                    );
                    if x != y {
                        globals.entry((x, y)).or_default().push(l);
                        globals.entry((y, x)).or_default().push(l);
                    }
                }
                Inner::Dragonfly { group, globals }
            }
            RoutingScheme::MeshDor | RoutingScheme::TorusDateline => {
                let dims =
                    grid_dims(t).ok_or_else(|| RoutingError::MissingLabel(t.name.clone()))?;
                let mut coord = Vec::new();
                let mut at = BTreeMap::new();
                for s in t.switch_indices() {
                    let SwitchLabel::Grid { coord: c } = &t.switch(s).label else {
                        return Err(missing(t, s));
                    };
                    if c.len() != dims.len() {
                        return Err(missing(t, s));
                    }
                    at.insert(c.clone(), s);
                    coord.push(c.clone());
                }
                Inner::Grid {
                    dims,
                    wrap: scheme == RoutingScheme::TorusDateline,
                    coord,
                    at,
                }
            }
            RoutingScheme::ShortestPath => Inner::Shortest {
                dist: t.switch_indices().map(|s| t.switch_distances(s)).collect(),
            },
        })
    }

    pub fn path(&self, t: &LogicalTopology, from: SwitchIdx, to: SwitchIdx) -> Option<Path> {
        match self {
            Inner::FatTree { level, pod } => fattree(t, level, pod, from, to),
            Inner::Dragonfly { .. } => self
                .dragonfly_candidates(t, from, to)
                .ok()?
                .into_iter()
                .next(),
            Inner::Grid {
                dims,
                wrap,
                coord,
                at,
            } => grid(t, dims, *wrap, coord, at, from, to),
            Inner::Shortest { dist } => shortest(t, dist, from, to),
        }
    }

    /// Every path with at most one global link, shaped local, global,
    /// local (either local part may be absent), sorted by length and then
    /// by global link index.
    pub fn dragonfly_candidates(
        &self,
        t: &LogicalTopology,
        from: SwitchIdx,
        to: SwitchIdx,
    ) -> Result<Vec<Path>, RoutingError> {
        let Inner::Dragonfly { group, globals } = self else {
            unreachable!("dragonfly candidates on a non-dragonfly router")
        };
        let local = |u: SwitchIdx, v: SwitchIdx| t.link_between(u, v).map(|(_, _, l)| l);
        if from == to {
            return Ok(vec![Path {
                start: from,
                steps: Vec::new(),
            }]);
        }
        let (gs, gd) = (group[from.0], group[to.0]);
        if gs == gd {
            return Ok(local(from, to)
                .map(|l| Path {
                    start: from,
                    steps: vec![(l, 0)],
                })
                .into_iter()
                .collect());
        }
        let mut out: Vec<(usize, LinkIdx, Path)> = Vec::new();
        for &g in globals.get(&(gs, gd)).map(Vec::as_slice).unwrap_or(&[]) {
            let link = t.link(g);
            let b = link.b_port().expect("switch link").switch;
            let (x, y) = if group[link.a.switch.0] == gs {
                (link.a.switch, b)
            } else {
                (b, link.a.switch)
            };
            let mut steps: Vec<(LinkIdx, Vc)> = Vec::new();
            if x != from {
                let Some(l) = local(from, x) else { continue };
                steps.push((l, 0));
            }
            steps.push((g, 0));
            if y != to {
                let Some(l) = local(y, to) else { continue };
                steps.push((l, 1));
            }
            out.push((steps.len(), g, Path { start: from, steps }));
        }
        out.sort_by_key(|(len, g, _)| (*len, *g));
        Ok(out.into_iter().map(|(_, _, p)| p).collect())
    }
}

/// Up to the lowest common level, then down, lowest switch index first.
fn fattree(
    t: &LogicalTopology,
    level: &[usize],
    pod: &[usize],
    from: SwitchIdx,
    to: SwitchIdx,
) -> Option<Path> {
    let top = if from == to {
        0
    } else if pod[from.0] == pod[to.0] {
        1
    } else {
        2
    };
    let mut steps = Vec::new();
    dfs_updown(t, level, pod, from, to, top, true, &mut steps)
        .then_some(Path { start: from, steps })
}

#[allow(clippy::too_many_arguments)]
fn dfs_updown(
    t: &LogicalTopology,
    level: &[usize],
    pod: &[usize],
    at: SwitchIdx,
    to: SwitchIdx,
    top: usize,
    up: bool,
    steps: &mut Vec<(LinkIdx, Vc)>,
) -> bool {
    let up = up && level[at.0] < top;
    if !up && at == to {
        return true;
    }
    for (_, peer, l) in t.neighbors(at) {
        let next = peer.switch;
        let ok = if up {
            level[next.0] == level[at.0] + 1
        } else {
            level[next.0] + 1 == level[at.0] && pod[next.0] == pod[to.0]
        };
        if !ok {
            continue;
        }
        steps.push((l, 0));
        if dfs_updown(t, level, pod, next, to, top, up, steps) {
            return true;
        }
        steps.pop();
    }
    false
}

/// Dimension order, lowest dimension first. On a torus each dimension
/// takes the shorter direction (ties go up), and crossing a dimension's
/// wraparound link raises the VC by one from the next channel on.
fn grid(
    t: &LogicalTopology,
    dims: &[usize],
    wrap: bool,
    coord: &[Vec<usize>],
    at: &BTreeMap<Vec<usize>, SwitchIdx>,
    from: SwitchIdx,
    to: SwitchIdx,
) -> Option<Path> {
    let target = &coord[to.0];
    let mut cur = coord[from.0].clone();
    let mut here = from;
    let mut vc: Vc = 0;
    let mut steps = Vec::new();
    for (d, &extent) in dims.iter().enumerate() {
        while cur[d] != target[d] {
            let up = if wrap {
                let ahead = (target[d] + extent - cur[d]) % extent;
                2 * ahead <= extent
            } else {
                target[d] > cur[d]
            };
            let crosses = wrap && ((up && cur[d] + 1 == extent) || (!up && cur[d] == 0));
            cur[d] = if up {
                (cur[d] + 1) % extent
            } else {
                (cur[d] + extent - 1) % extent
            };
            let next = *at.get(&cur)?;
            let (_, _, l) = t.link_between(here, next)?;
            steps.push((l, vc));
            if crosses {
                vc += 1;
            }
            here = next;
        }
    }
    Some(Path { start: from, steps })
}

/// Towards the destination over the lowest-index neighbor one step closer.
fn shortest(
    t: &LogicalTopology,
    dist: &[Vec<Option<usize>>],
    from: SwitchIdx,
    to: SwitchIdx,
) -> Option<Path> {
    let d = &dist[to.0];
    let mut here = from;
    let mut steps = Vec::new();
    while here != to {
        let left = d[here.0]?;
        let (_, peer, l) = t
            .neighbors(here)
            .into_iter()
            .find(|(_, p, _)| d[p.switch.0] == Some(left - 1))?;
        steps.push((l, 0));
        here = peer.switch;
    }
    Some(Path { start: from, steps })
}
