//! Generators for the standard datacenter families.
//!
//! Port layouts are fixed so that routing and rule generation stay
//! reproducible:
//!
//! * fat-tree edge switch: ports `1..=k/2` hosts, then one port per
//!   aggregation switch of the pod; aggregation switch: one port per edge
//!   switch, then its `k/2` core switches; core switch: port `1 + pod`.
//! * dragonfly router: ports `1..=p` hosts, then `a - 1` local ports in
//!   router order, then `h` global ports.
//! * mesh/torus switch: port 1 host, then `2 + 2d` towards increasing and
//!   `3 + 2d` towards decreasing coordinate in dimension `d`.

use thiserror::Error;

use super::Family;
use super::{
    FatTreeLayer, LogicalTopology, Origin, PortNo, SwitchIdx, SwitchLabel, SwitchPort,
    TopologyBuilder,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error("fat-tree k must be even and at least 2, got {0}")]
    FatTreeArity(usize),
    #[error("dragonfly parameters must all be at least 1 (a={a}, g={g}, h={h}, p={p})")]
    DragonflyParams {
        a: usize,
        g: usize,
        h: usize,
        p: usize,
    },
    #[error("dragonfly needs a*h >= g-1 global ports per group, got {a}*{h} < {g}-1")]
    DragonflyGlobalWiring { a: usize, g: usize, h: usize },
    #[error("only 2 and 3 dimensions are supported, got {0}")]
    UnsupportedDims(usize),
    #[error("{family} extent {extent} in dimension {dim} is below the minimum of {min}")]
    ExtentTooSmall {
        family: &'static str,
        dim: usize,
        extent: usize,
        min: usize,
    },
    #[error("radix {0} exceeds the supported port range")]
    RadixTooLarge(usize),
}

/// Parameters of a generated topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shape {
    FatTree {
        k: usize,
    },
    Dragonfly {
        a: usize,
        g: usize,
        h: usize,
        p: usize,
    },
    Mesh {
        dims: Vec<usize>,
    },
    Torus {
        dims: Vec<usize>,
    },
}

/// Keep only `count` hosts, picked with `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HostSelection {
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerateSpec {
    pub shape: Shape,
    pub select: Option<HostSelection>,
}

impl GenerateSpec {
    pub fn new(shape: Shape) -> Self {
        GenerateSpec {
            shape,
            select: None,
        }
    }

    pub fn family(&self) -> Family {
        match self.shape {
            Shape::FatTree { .. } => Family::FatTree,
            Shape::Dragonfly { .. } => Family::Dragonfly,
            Shape::Mesh { .. } => Family::Mesh,
            Shape::Torus { .. } => Family::Torus,
        }
    }

    pub fn generate(&self) -> Result<LogicalTopology, GenerateError> {
        let topo = match &self.shape {
            Shape::FatTree { k } => gen_fattree(*k)?,
            Shape::Dragonfly { a, g, h, p } => gen_dragonfly(*a, *g, *h, *p)?,
            Shape::Mesh { dims } => gen_mesh(dims)?,
            Shape::Torus { dims } => gen_torus(dims)?,
        };
        Ok(match self.select {
            Some(sel) => topo.select_hosts(sel.count, sel.seed),
            None => topo,
        })
    }
}

fn width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len()
}

fn radix(n: usize) -> Result<PortNo, GenerateError> {
    PortNo::try_from(n).map_err(|_| GenerateError::RadixTooLarge(n))
}

/// Three-layer fat-tree built from `k`-port switches: `5k²/4` switches and
/// `k³/4` hosts.
pub fn gen_fattree(k: usize) -> Result<LogicalTopology, GenerateError> {
    if k < 2 || k % 2 != 0 {
        return Err(GenerateError::FatTreeArity(k));
    }
    let half = k / 2;
    let port = radix(k)?;
    let mut b = TopologyBuilder::new(format!("fattree-k{k}"));
    b.origin(Origin::Generated(GenerateSpec::new(Shape::FatTree { k })));

    let wc = width(half * half);
    let wp = width(k);
    let wh = width(half);
    let wt = width(k * half * half);

    let cores: Vec<SwitchIdx> = (0..half * half)
        .map(|c| {
            b.add_switch(
                format!("core{c:0wc$}"),
                port,
                SwitchLabel::FatTree {
                    layer: FatTreeLayer::Core,
                    pod: 0,
                    index: c,
                },
            )
        })
        .collect();
    let mut host_no = 0;
    for pod in 0..k {
        let aggs: Vec<SwitchIdx> = (0..half)
            .map(|j| {
                b.add_switch(
                    format!("pod{pod:0wp$}-agg{j:0wh$}"),
                    port,
                    SwitchLabel::FatTree {
                        layer: FatTreeLayer::Aggregation,
                        pod,
                        index: j,
                    },
                )
            })
            .collect();
        let edges: Vec<SwitchIdx> = (0..half)
            .map(|i| {
                b.add_switch(
                    format!("pod{pod:0wp$}-edge{i:0wh$}"),
                    port,
                    SwitchLabel::FatTree {
                        layer: FatTreeLayer::Edge,
                        pod,
                        index: i,
                    },
                )
            })
            .collect();
        for (i, &edge) in edges.iter().enumerate() {
            for slot in 0..half {
                b.add_host(
                    format!("h{host_no:0wt$}"),
                    SwitchPort::new(edge, (1 + slot) as PortNo),
                );
                host_no += 1;
            }
            for (j, &agg) in aggs.iter().enumerate() {
                b.add_link(
                    SwitchPort::new(edge, (half + 1 + j) as PortNo),
                    SwitchPort::new(agg, (1 + i) as PortNo),
                );
            }
        }
        for (j, &agg) in aggs.iter().enumerate() {
            for m in 0..half {
                let core = cores[j * half + m];
                b.add_link(
                    SwitchPort::new(agg, (half + 1 + m) as PortNo),
                    SwitchPort::new(core, (1 + pod) as PortNo),
                );
            }
        }
    }
    Ok(b.build())
}

/// Dragonfly with `g` groups of `a` fully connected routers, `h` global
/// ports and `p` hosts per router.
///
/// Global port `j` of a group (router `j / h`, local slot `j % h`) goes to
/// the group `(j mod (g-1)) + 1` positions ahead. The pairing is symmetric,
/// so with `a*h >= g-1` every group pair gets at least one link. A second
/// link between the same two routers is skipped and its ports stay free.
pub fn gen_dragonfly(
    a: usize,
    g: usize,
    h: usize,
    p: usize,
) -> Result<LogicalTopology, GenerateError> {
    if a == 0 || g == 0 || h == 0 || p == 0 {
        return Err(GenerateError::DragonflyParams { a, g, h, p });
    }
    if a * h < g - 1 {
        return Err(GenerateError::DragonflyGlobalWiring { a, g, h });
    }
    let port = radix(a - 1 + h + p)?;
    let mut b = TopologyBuilder::new(format!("dragonfly-a{a}-g{g}-h{h}-p{p}"));
    b.origin(Origin::Generated(GenerateSpec::new(Shape::Dragonfly {
        a,
        g,
        h,
        p,
    })));

    let wg = width(g);
    let wa = width(a);
    let wp = width(p);
    let mut routers = vec![Vec::with_capacity(a); g];
    for (group, members) in routers.iter_mut().enumerate() {
        for router in 0..a {
            let idx = b.add_switch(
                format!("g{group:0wg$}r{router:0wa$}"),
                port,
                SwitchLabel::Dragonfly { group, router },
            );
            members.push(idx);
            for slot in 0..p {
                b.add_host(
                    format!("g{group:0wg$}r{router:0wa$}h{slot:0wp$}"),
                    SwitchPort::new(idx, (1 + slot) as PortNo),
                );
            }
        }
    }
    let local_port = |from: usize, to: usize| -> PortNo {
        let offset = if to < from { to } else { to - 1 };
        (p + 1 + offset) as PortNo
    };
    for members in &routers {
        for x in 0..a {
            for y in x + 1..a {
                b.add_link(
                    SwitchPort::new(members[x], local_port(x, y)),
                    SwitchPort::new(members[y], local_port(y, x)),
                );
            }
        }
    }
    if g > 1 {
        let ports = a * h;
        let global_port = |group: usize, j: usize| -> SwitchPort {
            SwitchPort::new(routers[group][j / h], (p + a + j % h) as PortNo)
        };
        let mut wired = std::collections::BTreeSet::new();
        for group in 0..g {
            for j in 0..ports {
                let round = j / (g - 1);
                let offset = j % (g - 1) + 1;
                let peer = (group + offset) % g;
                let peer_j = round * (g - 1) + (g - offset - 1);
                if peer_j < ports && (group, j) < (peer, peer_j) {
                    let (x, y) = (global_port(group, j), global_port(peer, peer_j));
                    if wired.insert((x.switch, y.switch)) {
                        b.add_link(x, y);
                    }
                }
            }
        }
    }
    Ok(b.build())
}

/// 2D or 3D mesh with one host per switch.
pub fn gen_mesh(dims: &[usize]) -> Result<LogicalTopology, GenerateError> {
    gen_grid(dims, false)
}

/// 2D or 3D torus with one host per switch. Extents below 3 are rejected
/// because the wraparound link would duplicate the direct one.
pub fn gen_torus(dims: &[usize]) -> Result<LogicalTopology, GenerateError> {
    gen_grid(dims, true)
}

fn gen_grid(dims: &[usize], wrap: bool) -> Result<LogicalTopology, GenerateError> {
    if !(2..=3).contains(&dims.len()) {
        return Err(GenerateError::UnsupportedDims(dims.len()));
    }
    let (family, min) = if wrap { ("torus", 3) } else { ("mesh", 2) };
    for (dim, &extent) in dims.iter().enumerate() {
        if extent < min {
            return Err(GenerateError::ExtentTooSmall {
                family,
                dim,
                extent,
                min,
            });
        }
    }
    let label = dims
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x");
    let mut b = TopologyBuilder::new(format!("{family}-{label}"));
    let shape = if wrap {
        Shape::Torus {
            dims: dims.to_vec(),
        }
    } else {
        Shape::Mesh {
            dims: dims.to_vec(),
        }
    };
    b.origin(Origin::Generated(GenerateSpec::new(shape)));

    let total: usize = dims.iter().product();
    let port = radix(1 + 2 * dims.len())?;
    let widths: Vec<usize> = dims.iter().map(|&d| width(d)).collect();
    let coords: Vec<Vec<usize>> = (0..total).map(|i| grid_coord(dims, i)).collect();
    let name = |c: &[usize]| {
        c.iter()
            .zip(&widths)
            .map(|(x, &w)| format!("{x:0w$}"))
            .collect::<Vec<_>>()
            .join("-")
    };
    let ids: Vec<SwitchIdx> = coords
        .iter()
        .map(|c| {
            let idx = b.add_switch(
                format!("s{}", name(c)),
                port,
                SwitchLabel::Grid { coord: c.clone() },
            );
            b.add_host(format!("h{}", name(c)), SwitchPort::new(idx, 1));
            idx
        })
        .collect();
    for (i, c) in coords.iter().enumerate() {
        for (d, &extent) in dims.iter().enumerate() {
            if c[d] + 1 < extent || (wrap && c[d] + 1 == extent) {
                let mut n = c.clone();
                n[d] = (c[d] + 1) % extent;
                let j = grid_index(dims, &n);
                b.add_link(
                    SwitchPort::new(ids[i], (2 + 2 * d) as PortNo),
                    SwitchPort::new(ids[j], (3 + 2 * d) as PortNo),
                );
            }
        }
    }
    Ok(b.build())
}

/// Coordinates of the `i`-th grid point, first dimension most significant.
pub(crate) fn grid_coord(dims: &[usize], mut i: usize) -> Vec<usize> {
    let mut c = vec![0; dims.len()];
    for d in (0..dims.len()).rev() {
        c[d] = i % dims[d];
        i /= dims[d];
    }
    c
}

pub(crate) fn grid_index(dims: &[usize], c: &[usize]) -> usize {
    c.iter().zip(dims).fold(0, |acc, (&x, &d)| acc * d + x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::LinkKind;
    use proptest::prelude::*;

    fn degree_sum_matches(t: &LogicalTopology) {
        let degrees: usize = t.switch_indices().map(|s| t.degree(s)).sum();
        assert_eq!(degrees, 2 * t.num_switch_links() + t.num_host_links());
    }

    #[test]
    fn fattree_k4_counts() {
        let t = gen_fattree(4).unwrap();
        assert_eq!(t.switches().len(), 20);
        assert_eq!(t.hosts().len(), 16);
        assert_eq!(t.links().len(), 48);
        assert!(t.validate().is_empty(), "{}", t.validate());
        assert!(t.switches().iter().all(|s| s.radix == 4));
        degree_sum_matches(&t);
    }

    #[test]
    fn fattree_k2_counts() {
        // 5*2^2/4 = 5 switches, 2^3/4 = 2 hosts
        let t = gen_fattree(2).unwrap();
        assert_eq!(t.switches().len(), 5);
        assert_eq!(t.hosts().len(), 2);
        assert!(t.validate().is_empty());
    }

    #[test]
    fn fattree_rejects_odd_k() {
        assert_eq!(gen_fattree(3).unwrap_err(), GenerateError::FatTreeArity(3));
        assert!(gen_fattree(0).is_err());
    }

    #[test]
    fn dragonfly_a4_g9_h2() {
        let t = gen_dragonfly(4, 9, 2, 2).unwrap();
        assert_eq!(t.switches().len(), 36);
        assert_eq!(t.hosts().len(), 72);
        assert!(t.validate().is_empty(), "{}", t.validate());
        assert!(t.switches().iter().all(|s| s.radix == 3 + 2 + 2));
        // every group has a*h = 8 global links, one to each other group
        let group = |s: SwitchIdx| match t.switch(s).label {
            SwitchLabel::Dragonfly { group, .. } => group,
            _ => unreachable!(),
        };
        let mut per_group = [0usize; 9];
        let mut pairs = std::collections::BTreeSet::new();
        for l in t.switch_links() {
            let link = t.link(l);
            let (x, y) = (group(link.a.switch), group(link.b_port().unwrap().switch));
            if x != y {
                per_group[x] += 1;
                per_group[y] += 1;
                assert!(
                    pairs.insert((x.min(y), x.max(y))),
                    "group pair linked twice"
                );
            }
        }
        assert_eq!(per_group, [8; 9]);
        assert_eq!(pairs.len(), 36);
        degree_sum_matches(&t);
    }

    #[test]
    fn smallest_dragonfly() {
        let t = gen_dragonfly(1, 2, 1, 1).unwrap();
        assert_eq!(t.switches().len(), 2);
        assert_eq!(t.num_switch_links(), 1);
        assert!(t.validate().is_empty());
    }

    #[test]
    fn dragonfly_rejects_short_global_wiring() {
        assert_eq!(
            gen_dragonfly(2, 9, 2, 1).unwrap_err(),
            GenerateError::DragonflyGlobalWiring { a: 2, g: 9, h: 2 }
        );
    }

    #[test]
    fn dragonfly_with_spare_global_ports_doubles_links() {
        // a*h = 4 = 2*(g-1): two global links per group pair
        let t = gen_dragonfly(2, 3, 2, 1).unwrap();
        assert!(t.validate().is_empty(), "{}", t.validate());
        assert_eq!(t.num_switch_links(), 3 + 6);
    }

    #[test]
    fn torus_counts() {
        let t = gen_torus(&[4, 4]).unwrap();
        assert_eq!(t.switches().len(), 16);
        assert_eq!(t.num_switch_links(), 32);
        let t = gen_torus(&[4, 4, 4]).unwrap();
        assert_eq!(t.switches().len(), 64);
        assert_eq!(t.num_switch_links(), 192);
        assert!(t.validate().is_empty());
    }

    #[test]
    fn mesh_unit_square() {
        let t = gen_mesh(&[2, 2]).unwrap();
        assert_eq!(t.switches().len(), 4);
        assert_eq!(t.num_switch_links(), 4);
        assert_eq!(t.hosts().len(), 4);
    }

    #[test]
    fn grid_errors() {
        assert_eq!(
            gen_mesh(&[4]).unwrap_err(),
            GenerateError::UnsupportedDims(1)
        );
        assert_eq!(
            gen_torus(&[2, 2, 2, 2]).unwrap_err(),
            GenerateError::UnsupportedDims(4)
        );
        assert!(matches!(
            gen_torus(&[2, 4]),
            Err(GenerateError::ExtentTooSmall { dim: 0, .. })
        ));
        assert!(matches!(
            gen_mesh(&[3, 1]),
            Err(GenerateError::ExtentTooSmall { dim: 1, .. })
        ));
    }

    #[test]
    fn grid_coords_are_row_major() {
        let dims = [3, 4, 5];
        for i in 0..60 {
            assert_eq!(grid_index(&dims, &grid_coord(&dims, i)), i);
        }
        assert_eq!(grid_coord(&dims, 1), vec![0, 0, 1]);
    }

    proptest! {
        #[test]
        fn fattree_sizes(half in 1usize..=4) {
            let k = 2 * half;
            let t = gen_fattree(k).unwrap();
            prop_assert_eq!(t.switches().len(), 5 * k * k / 4);
            prop_assert_eq!(t.hosts().len(), k * k * k / 4);
            degree_sum_matches(&t);
        }

        #[test]
        fn torus_is_degree_regular(dims in prop::collection::vec(3usize..6, 2..=3)) {
            let t = gen_torus(&dims).unwrap();
            prop_assert!(t.validate().is_empty());
            for s in t.switch_indices() {
                prop_assert_eq!(t.neighbors(s).len(), 2 * dims.len());
            }
            degree_sum_matches(&t);
        }

        #[test]
        fn mesh_degree_sum(dims in prop::collection::vec(2usize..6, 2..=3)) {
            let t = gen_mesh(&dims).unwrap();
            prop_assert!(t.validate().is_empty());
            degree_sum_matches(&t);
        }

        #[test]
        fn dragonfly_valid(a in 1usize..5, g in 1usize..8, h in 1usize..4, p in 1usize..3) {
            prop_assume!(a * h + 1 >= g);
            let t = gen_dragonfly(a, g, h, p).unwrap();
            prop_assert!(t.validate().is_empty(), "{}", t.validate());
            prop_assert_eq!(t.switches().len(), a * g);
            let hosts = t.links().iter().filter(|l| l.kind() == LinkKind::SwitchHost).count();
            prop_assert_eq!(hosts, a * g * p);
            degree_sum_matches(&t);
        }
    }
}
