//! Routes over logical topologies.
//!
//! A route lists, for every logical switch on the way, the port the frame
//! enters on, the port it leaves on and the virtual channel of the channel
//! it leaves on. Frames are injected on VC 0. Schemes only ever raise the
//! VC along a route.

mod cdg;
mod schemes;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::topology::{
    Family, HostIdx, LinkEnd, LinkIdx, LogicalTopology, PortNo, SwitchIdx, SwitchPort,
};

pub use cdg::{assert_deadlock_free, build_cdg, Channel, ChannelDependencyGraph, DeadlockVerdict};

/// Virtual channel index.
pub type Vc = u8;

/// Per-port load counters, keyed by logical switch port.
pub type PortLoad = BTreeMap<SwitchPort, u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hop {
    pub switch: SwitchIdx,
    pub in_port: PortNo,
    pub out_port: PortNo,
    /// VC of the channel leaving on `out_port`.
    pub vc: Vc,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Route {
    pub src: HostIdx,
    pub dst: HostIdx,
    pub hops: Vec<Hop>,
}

impl Route {
    pub fn switches(&self) -> impl Iterator<Item = SwitchIdx> + '_ {
        self.hops.iter().map(|h| h.switch)
    }

    /// VC a frame carries when it enters hop `i`.
    pub fn in_vc(&self, i: usize) -> Vc {
        if i == 0 {
            0
        } else {
            self.hops[i - 1].vc
        }
    }

    /// The same path with every VC forced to 0.
    pub fn without_vcs(&self) -> Route {
        let hops = self.hops.iter().map(|h| Hop { vc: 0, ..*h }).collect();
        Route {
            hops,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoutingScheme {
    FatTreeDfs,
    DragonflyMinimal,
    DragonflyAdaptive,
    MeshDor,
    TorusDateline,
    ShortestPath,
}

impl RoutingScheme {
    pub const ALL: [RoutingScheme; 6] = [
        RoutingScheme::FatTreeDfs,
        RoutingScheme::DragonflyMinimal,
        RoutingScheme::DragonflyAdaptive,
        RoutingScheme::MeshDor,
        RoutingScheme::TorusDateline,
        RoutingScheme::ShortestPath,
    ];

    /// The scheme a family ships with.
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::FatTree => RoutingScheme::FatTreeDfs,
            Family::Dragonfly => RoutingScheme::DragonflyMinimal,
            Family::Mesh => RoutingScheme::MeshDor,
            Family::Torus => RoutingScheme::TorusDateline,
            Family::Custom => RoutingScheme::ShortestPath,
        }
    }

    /// Family the scheme is restricted to, if any.
    pub fn family(self) -> Option<Family> {
        match self {
            RoutingScheme::FatTreeDfs => Some(Family::FatTree),
            RoutingScheme::DragonflyMinimal | RoutingScheme::DragonflyAdaptive => {
                Some(Family::Dragonfly)
            }
            RoutingScheme::MeshDor => Some(Family::Mesh),
            RoutingScheme::TorusDateline => Some(Family::Torus),
            RoutingScheme::ShortestPath => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RoutingScheme::FatTreeDfs => "fattree-dfs",
            RoutingScheme::DragonflyMinimal => "dragonfly-minimal",
            RoutingScheme::DragonflyAdaptive => "dragonfly-adaptive",
            RoutingScheme::MeshDor => "mesh-dor",
            RoutingScheme::TorusDateline => "torus-dateline",
            RoutingScheme::ShortestPath => "shortest-path",
        }
    }
}

impl fmt::Display for RoutingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RoutingScheme {
    type Err = RoutingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoutingScheme::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| RoutingError::UnknownScheme(s.to_string()))
    }
}

/// Number of VCs a scheme needs on a topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VcAssignment {
    pub num_vcs: Vc,
}

impl VcAssignment {
    pub fn for_scheme(scheme: RoutingScheme, topology: &LogicalTopology) -> Self {
        let num_vcs = match scheme {
            RoutingScheme::DragonflyMinimal | RoutingScheme::DragonflyAdaptive => 2,
            // one more VC per dimension whose dateline a route can cross
            RoutingScheme::TorusDateline => {
                schemes::grid_dims(topology).map_or(1, |d| d.len() + 1) as Vc
            }
            _ => 1,
        };
        VcAssignment { num_vcs }
    }

    /// Checks VC bounds and monotonicity of a route.
    pub fn check(&self, route: &Route) -> Result<(), RoutingError> {
        let mut prev = 0;
        for (i, h) in route.hops.iter().enumerate() {
            if h.vc >= self.num_vcs {
                return Err(RoutingError::VcOutOfRange {
                    hop: i,
                    vc: h.vc,
                    num_vcs: self.num_vcs,
                });
            }
            if h.vc < prev {
                return Err(RoutingError::VcDecreases { hop: i });
            }
            prev = h.vc;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("unknown routing scheme `{0}`")]
    UnknownScheme(String),
    #[error("scheme {scheme} needs a {expected} topology, got {found}")]
    WrongFamily {
        scheme: RoutingScheme,
        expected: Family,
        found: Family,
    },
    #[error("host index {0} is not part of the topology")]
    UnknownHost(usize),
    #[error("switch `{0}` lacks the labels the scheme relies on")]
    MissingLabel(String),
    #[error("no route from `{src}` to `{dst}`")]
    NoPath { src: String, dst: String },
    #[error("no load counter for port {0}")]
    MissingCounter(String),
    #[error("scheme {0} needs port load counters")]
    LoadRequired(RoutingScheme),
    #[error("route leaves {0} on a port without a link to the next hop")]
    MissingLink(String),
    #[error("hop {hop} uses VC {vc} but only {num_vcs} VCs exist")]
    VcOutOfRange { hop: usize, vc: Vc, num_vcs: Vc },
    #[error("VC decreases at hop {hop}")]
    VcDecreases { hop: usize },
}

/// A sequence of links from a starting switch, each with the VC it is
/// traversed on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Path {
    pub start: SwitchIdx,
    pub steps: Vec<(LinkIdx, Vc)>,
}

/// Route computation for one topology and scheme. Precomputes whatever the
/// scheme needs once, so routing many pairs is cheap.
pub struct Router<'t> {
    topology: &'t LogicalTopology,
    scheme: RoutingScheme,
    inner: schemes::Inner,
}

impl<'t> Router<'t> {
    pub fn new(topology: &'t LogicalTopology, scheme: RoutingScheme) -> Result<Self, RoutingError> {
        if let Some(expected) = scheme.family() {
            if topology.family() != expected {
                return Err(RoutingError::WrongFamily {
                    scheme,
                    expected,
                    found: topology.family(),
                });
            }
        }
        let inner = schemes::Inner::new(topology, scheme)?;
        Ok(Router {
            topology,
            scheme,
            inner,
        })
    }

    /// Router with the family's default scheme.
    pub fn default_for(topology: &'t LogicalTopology) -> Result<Self, RoutingError> {
        Router::new(topology, RoutingScheme::default_for(topology.family()))
    }

    pub fn scheme(&self) -> RoutingScheme {
        self.scheme
    }

    pub fn topology(&self) -> &'t LogicalTopology {
        self.topology
    }

    pub fn vcs(&self) -> VcAssignment {
        VcAssignment::for_scheme(self.scheme, self.topology)
    }

    /// Route between two hosts. Adaptive schemes need [`Router::route_with_load`].
    pub fn route(&self, src: HostIdx, dst: HostIdx) -> Result<Route, RoutingError> {
        self.route_inner(src, dst, None)
    }

    /// Route between two hosts, consulting port loads where the scheme is
    /// adaptive. Other schemes ignore `load`.
    pub fn route_with_load(
        &self,
        src: HostIdx,
        dst: HostIdx,
        load: &PortLoad,
    ) -> Result<Route, RoutingError> {
        self.route_inner(src, dst, Some(load))
    }

    fn route_inner(
        &self,
        src: HostIdx,
        dst: HostIdx,
        load: Option<&PortLoad>,
    ) -> Result<Route, RoutingError> {
        let t = self.topology;
        for h in [src, dst] {
            if h.0 >= t.hosts().len() {
                return Err(RoutingError::UnknownHost(h.0));
            }
        }
        if src == dst {
            return Ok(Route {
                src,
                dst,
                hops: Vec::new(),
            });
        }
        let (from, to) = (t.host(src).attachment, t.host(dst).attachment);
        let path = match self.scheme {
            RoutingScheme::DragonflyAdaptive => {
                let load = load.ok_or(RoutingError::LoadRequired(self.scheme))?;
                let mut best: Option<(u64, Path)> = None;
                for cand in self.inner.dragonfly_candidates(t, from.switch, to.switch)? {
                    let score = path_load(t, &cand, load)?;
                    if best.as_ref().is_none_or(|(b, _)| score < *b) {
                        best = Some((score, cand));
                    }
                }
                best.map(|(_, p)| p).ok_or_else(|| self.no_path(src, dst))?
            }
            _ => self
                .inner
                .path(t, from.switch, to.switch)
                .ok_or_else(|| self.no_path(src, dst))?,
        };
        Ok(assemble(t, src, dst, &path))
    }

    fn no_path(&self, src: HostIdx, dst: HostIdx) -> RoutingError {
        RoutingError::NoPath {
            src: self.topology.host(src).name.clone(),
            dst: self.topology.host(dst).name.clone(),
        }
    }

    /// Routes for every ordered pair of distinct hosts, by source then
    /// destination.
    pub fn all_pairs(&self, load: Option<&PortLoad>) -> Result<Vec<Route>, RoutingError> {
        let t = self.topology;
        let mut out = Vec::new();
        for src in t.host_indices() {
            for dst in t.host_indices().filter(|&d| d != src) {
                out.push(self.route_inner(src, dst, load)?);
            }
        }
        Ok(out)
    }
}

/// Highest load over the switch-to-switch ports a path leaves on. The
/// host egress is shared by every candidate, so it is left out.
fn path_load(t: &LogicalTopology, path: &Path, load: &PortLoad) -> Result<u64, RoutingError> {
    let mut at = path.start;
    let mut ports = Vec::with_capacity(path.steps.len());
    for &(l, _) in &path.steps {
        let link = t.link(l);
        ports.push(link.port_on(at).expect("path is connected"));
        at = link.peer_of(at).expect("switch link").switch;
    }
    ports
        .into_iter()
        .map(|p| {
            load.get(&p)
                .copied()
                .ok_or_else(|| RoutingError::MissingCounter(t.describe_port(p)))
        })
        .try_fold(0, |acc, l| l.map(|l| acc.max(l)))
}

fn assemble(t: &LogicalTopology, src: HostIdx, dst: HostIdx, path: &Path) -> Route {
    let mut hops = Vec::with_capacity(path.steps.len() + 1);
    let mut at = path.start;
    let mut in_port = t.host(src).attachment.port;
    let mut vc = 0;
    for &(l, step_vc) in &path.steps {
        let link = t.link(l);
        let out = link.port_on(at).expect("path is connected");
        let next = link.peer_of(at).expect("switch link");
        vc = step_vc;
        hops.push(Hop {
            switch: at,
            in_port,
            out_port: out.port,
            vc,
        });
        at = next.switch;
        in_port = next.port;
    }
    let egress = t.host(dst).attachment;
    debug_assert_eq!(egress.switch, at);
    hops.push(Hop {
        switch: at,
        in_port,
        out_port: egress.port,
        vc,
    });
    Route { src, dst, hops }
}

/// Checks that a route is a path in the topology from `src` to `dst`.
pub fn check_route(t: &LogicalTopology, route: &Route) -> Result<(), String> {
    if route.src == route.dst {
        return if route.hops.is_empty() {
            Ok(())
        } else {
            Err("self route has hops".into())
        };
    }
    let (Some(first), Some(last)) = (route.hops.first(), route.hops.last()) else {
        return Err("route has no hops".into());
    };
    if SwitchPort::new(first.switch, first.in_port) != t.host(route.src).attachment {
        return Err("first hop does not start at the source host".into());
    }
    if SwitchPort::new(last.switch, last.out_port) != t.host(route.dst).attachment {
        return Err("last hop does not end at the destination host".into());
    }
    for w in route.hops.windows(2) {
        let out = SwitchPort::new(w[0].switch, w[0].out_port);
        let ok = t.link_at(out).and_then(|l| t.link(l).peer_of(w[0].switch))
            == Some(SwitchPort::new(w[1].switch, w[1].in_port));
        if !ok {
            return Err(format!(
                "{} does not lead to the next hop",
                t.describe_port(out)
            ));
        }
    }
    Ok(())
}

/// One line per route: source, destination, then `switch:in>out/vc` per hop.
pub fn render_routes(t: &LogicalTopology, routes: &[Route]) -> String {
    let mut out = String::new();
    for r in routes {
        let _ = write!(out, "route {} {}", t.host(r.src).name, t.host(r.dst).name);
        for h in &r.hops {
            let _ = write!(
                out,
                " {}:{}>{}/{}",
                t.switch(h.switch).name,
                h.in_port,
                h.out_port,
                h.vc
            );
        }
        out.push('\n');
    }
    out
}

/// Deterministic fat-tree route.
pub fn route_fattree_dfs(
    t: &LogicalTopology,
    src: HostIdx,
    dst: HostIdx,
) -> Result<Route, RoutingError> {
    Router::new(t, RoutingScheme::FatTreeDfs)?.route(src, dst)
}

/// Deterministic minimal dragonfly route.
pub fn route_dragonfly_minimal(
    t: &LogicalTopology,
    src: HostIdx,
    dst: HostIdx,
) -> Result<Route, RoutingError> {
    Router::new(t, RoutingScheme::DragonflyMinimal)?.route(src, dst)
}

/// Minimal dragonfly route with the lowest peak port load.
pub fn route_adaptive_dragonfly(
    t: &LogicalTopology,
    src: HostIdx,
    dst: HostIdx,
    load: &PortLoad,
) -> Result<Route, RoutingError> {
    Router::new(t, RoutingScheme::DragonflyAdaptive)?.route_with_load(src, dst, load)
}

/// Dimension-order mesh route.
pub fn route_mesh_dor(
    t: &LogicalTopology,
    src: HostIdx,
    dst: HostIdx,
) -> Result<Route, RoutingError> {
    Router::new(t, RoutingScheme::MeshDor)?.route(src, dst)
}

/// Dimension-order torus route with dateline VCs.
pub fn route_torus_dateline(
    t: &LogicalTopology,
    src: HostIdx,
    dst: HostIdx,
) -> Result<Route, RoutingError> {
    Router::new(t, RoutingScheme::TorusDateline)?.route(src, dst)
}

/// Load map with every switch port of the topology at `value`.
pub fn uniform_load(t: &LogicalTopology, value: u64) -> PortLoad {
    let mut load = PortLoad::new();
    for link in t.links() {
        load.insert(link.a, value);
        if let LinkEnd::Switch(b) = link.b {
            load.insert(b, value);
        }
    }
    load
}
