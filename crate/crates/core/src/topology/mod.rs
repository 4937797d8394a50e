//! Logical topologies: switches, hosts and the links between them.
//!
//! A [`LogicalTopology`] is a plain value. It may hold invariant violations
//! (for instance when assembled by hand), which [`LogicalTopology::validate`]
//! reports. Topologies coming out of [`parse_topology`] or one of the
//! generators are always valid.

mod config;
mod generate;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

pub use config::{parse_topology, serialize_topology, TopologyConfig};
pub use generate::{
    gen_dragonfly, gen_fattree, gen_mesh, gen_torus, GenerateError, GenerateSpec, HostSelection,
    Shape,
};

/// Port number on a switch. Ports are numbered from 1.
pub type PortNo = u16;

macro_rules! index_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

index_type!(
    /// Index of a logical switch inside its topology.
    SwitchIdx
);
index_type!(
    /// Index of a host inside its topology.
    HostIdx
);
index_type!(
    /// Index of a link inside its topology.
    LinkIdx
);

/// A port of a logical switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SwitchPort {
    pub switch: SwitchIdx,
    pub port: PortNo,
}

impl SwitchPort {
    pub fn new(switch: SwitchIdx, port: PortNo) -> Self {
        SwitchPort { switch, port }
    }
}

/// Position of a switch inside a generated family. Routing schemes use it
/// to find their way without re-deriving the structure from the graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SwitchLabel {
    None,
    FatTree {
        layer: FatTreeLayer,
        pod: usize,
        index: usize,
    },
    Dragonfly {
        group: usize,
        router: usize,
    },
    Grid {
        coord: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FatTreeLayer {
    Edge,
    Aggregation,
    Core,
}

impl FatTreeLayer {
    /// 0 for edge switches, 2 for core switches.
    pub fn level(self) -> usize {
        match self {
            FatTreeLayer::Edge => 0,
            FatTreeLayer::Aggregation => 1,
            FatTreeLayer::Core => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogicalSwitch {
    pub name: String,
    pub radix: PortNo,
    pub label: SwitchLabel,
}

impl LogicalSwitch {
    /// Ports of the switch, `1..=radix`.
    pub fn ports(&self) -> impl Iterator<Item = PortNo> {
        1..=self.radix
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Host {
    pub name: String,
    pub attachment: SwitchPort,
}

/// The far end of a link. The near end of a link is always a switch port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkEnd {
    Switch(SwitchPort),
    Host(HostIdx),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkKind {
    SwitchSwitch,
    SwitchHost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LogicalLink {
    pub a: SwitchPort,
    pub b: LinkEnd,
}

impl LogicalLink {
    pub fn kind(&self) -> LinkKind {
        match self.b {
            LinkEnd::Switch(_) => LinkKind::SwitchSwitch,
            LinkEnd::Host(_) => LinkKind::SwitchHost,
        }
    }

    /// Switch port at the far end, if the link joins two switches.
    pub fn b_port(&self) -> Option<SwitchPort> {
        match self.b {
            LinkEnd::Switch(p) => Some(p),
            LinkEnd::Host(_) => None,
        }
    }

    /// The switch-side port of this link that is not on `switch`, for
    /// switch-switch links touching `switch`.
    pub fn peer_of(&self, switch: SwitchIdx) -> Option<SwitchPort> {
        let b = self.b_port()?;
        if self.a.switch == switch {
            Some(b)
        } else if b.switch == switch {
            Some(self.a)
        } else {
            None
        }
    }

    /// The endpoint of this link on `switch`.
    pub fn port_on(&self, switch: SwitchIdx) -> Option<SwitchPort> {
        if self.a.switch == switch {
            return Some(self.a);
        }
        self.b_port().filter(|p| p.switch == switch)
    }
}

/// How the topology came to be. Generated topologies keep their generator
/// parameters so they serialize back to the same compact form.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Custom,
    Generated(GenerateSpec),
}

/// Topology family, used to pick a routing scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Custom,
    FatTree,
    Dragonfly,
    Mesh,
    Torus,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Custom => "custom",
            Family::FatTree => "fattree",
            Family::Dragonfly => "dragonfly",
            Family::Mesh => "mesh",
            Family::Torus => "torus",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogicalTopology {
    pub name: String,
    pub origin: Origin,
    /// Whether every host must reach every other host.
    pub connected: bool,
    switches: Vec<LogicalSwitch>,
    hosts: Vec<Host>,
    links: Vec<LogicalLink>,
    incident: Vec<Vec<LinkIdx>>,
    host_links: Vec<LinkIdx>,
}

impl LogicalTopology {
    /// An empty topology.
    pub fn empty(name: impl Into<String>) -> Self {
        TopologyBuilder::new(name).build()
    }

    pub fn switches(&self) -> &[LogicalSwitch] {
        &self.switches
    }

    pub fn hosts(&self) -> &[Host] {
        &self.hosts
    }

    pub fn links(&self) -> &[LogicalLink] {
        &self.links
    }

    pub fn switch(&self, idx: SwitchIdx) -> &LogicalSwitch {
        &self.switches[idx.0]
    }

    pub fn host(&self, idx: HostIdx) -> &Host {
        &self.hosts[idx.0]
    }

    pub fn link(&self, idx: LinkIdx) -> &LogicalLink {
        &self.links[idx.0]
    }

    pub fn switch_indices(&self) -> impl Iterator<Item = SwitchIdx> {
        (0..self.switches.len()).map(SwitchIdx)
    }

    pub fn host_indices(&self) -> impl Iterator<Item = HostIdx> {
        (0..self.hosts.len()).map(HostIdx)
    }

    pub fn link_indices(&self) -> impl Iterator<Item = LinkIdx> {
        (0..self.links.len()).map(LinkIdx)
    }

    pub fn is_empty(&self) -> bool {
        self.switches.is_empty()
    }

    pub fn family(&self) -> Family {
        match &self.origin {
            Origin::Custom => Family::Custom,
            Origin::Generated(spec) => spec.family(),
        }
    }

    pub fn switch_by_name(&self, name: &str) -> Option<SwitchIdx> {
        self.switches
            .binary_search_by(|s| s.name.as_str().cmp(name))
            .ok()
            .map(SwitchIdx)
    }

    pub fn host_by_name(&self, name: &str) -> Option<HostIdx> {
        self.hosts
            .binary_search_by(|h| h.name.as_str().cmp(name))
            .ok()
            .map(HostIdx)
    }

    /// Links with an endpoint on `switch`, in link order.
    pub fn incident_links(&self, switch: SwitchIdx) -> &[LinkIdx] {
        &self.incident[switch.0]
    }

    /// Link attaching `host` to its switch.
    pub fn host_link(&self, host: HostIdx) -> LinkIdx {
        self.host_links[host.0]
    }

    /// The link occupying `port`, if any.
    pub fn link_at(&self, port: SwitchPort) -> Option<LinkIdx> {
        self.incident[port.switch.0]
            .iter()
            .copied()
            .find(|&l| self.links[l.0].port_on(port.switch) == Some(port))
    }

    pub fn switch_links(&self) -> impl Iterator<Item = LinkIdx> + '_ {
        self.link_indices()
            .filter(|&l| self.links[l.0].kind() == LinkKind::SwitchSwitch)
    }

    pub fn num_switch_links(&self) -> usize {
        self.switch_links().count()
    }

    pub fn num_host_links(&self) -> usize {
        self.links.len() - self.num_switch_links()
    }

    /// Switch-switch neighbors of `switch`: (local port, remote port, link),
    /// ordered by remote switch index then port.
    pub fn neighbors(&self, switch: SwitchIdx) -> Vec<(PortNo, SwitchPort, LinkIdx)> {
        let mut out: Vec<_> = self.incident[switch.0]
            .iter()
            .filter_map(|&l| {
                let link = &self.links[l.0];
                let local = link.port_on(switch)?;
                let peer = link.peer_of(switch)?;
                Some((local.port, peer, l))
            })
            .collect();
        out.sort_by_key(|&(local, peer, _)| (peer, local));
        out
    }

    /// Any switch-switch link between `u` and `v`.
    pub fn link_between(
        &self,
        u: SwitchIdx,
        v: SwitchIdx,
    ) -> Option<(PortNo, SwitchPort, LinkIdx)> {
        self.neighbors(u)
            .into_iter()
            .find(|(_, peer, _)| peer.switch == v)
    }

    /// Number of link endpoints on `switch`, counting host links.
    pub fn degree(&self, switch: SwitchIdx) -> usize {
        self.incident[switch.0]
            .iter()
            .map(|&l| {
                let link = &self.links[l.0];
                // a self-loop would contribute two endpoints
                usize::from(link.a.switch == switch)
                    + usize::from(link.b_port().map(|p| p.switch) == Some(switch))
            })
            .sum()
    }

    /// Hosts attached to `switch`.
    pub fn hosts_on(&self, switch: SwitchIdx) -> impl Iterator<Item = HostIdx> + '_ {
        self.host_indices()
            .filter(move |&h| self.hosts[h.0].attachment.switch == switch)
    }

    /// Switch-switch hop distances from `src` (BFS). Unreachable switches
    /// are `None`.
    pub fn switch_distances(&self, src: SwitchIdx) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.switches.len()];
        let mut queue = VecDeque::new();
        dist[src.0] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let d = dist[u.0].unwrap_or(0);
            for (_, peer, _) in self.neighbors(u) {
                if dist[peer.switch.0].is_none() {
                    dist[peer.switch.0] = Some(d + 1);
                    queue.push_back(peer.switch);
                }
            }
        }
        dist
    }

    /// Largest switch-switch distance between two switches that carry
    /// hosts. Zero when fewer than two such switches exist.
    pub fn host_diameter(&self) -> usize {
        let with_hosts: BTreeSet<SwitchIdx> =
            self.hosts.iter().map(|h| h.attachment.switch).collect();
        with_hosts
            .iter()
            .flat_map(|&s| {
                let dist = self.switch_distances(s);
                with_hosts
                    .iter()
                    .filter_map(move |t| dist[t.0])
                    .collect::<Vec<_>>()
            })
            .max()
            .unwrap_or(0)
    }

    /// Lists every invariant violation. An empty report means the topology
    /// can be handed to the rest of the pipeline.
    pub fn validate(&self) -> ValidationReport {
        let mut findings = Vec::new();

        for pair in self.switches.windows(2) {
            if pair[0].name == pair[1].name {
                findings.push(Finding::DuplicateName {
                    name: pair[0].name.clone(),
                });
            }
        }
        for pair in self.hosts.windows(2) {
            if pair[0].name == pair[1].name {
                findings.push(Finding::DuplicateName {
                    name: pair[0].name.clone(),
                });
            }
        }
        for sw in &self.switches {
            if sw.radix == 0 {
                findings.push(Finding::ZeroRadix {
                    switch: sw.name.clone(),
                });
            }
        }

        let mut used: BTreeMap<SwitchPort, LinkIdx> = BTreeMap::new();
        let mut edges: BTreeMap<(SwitchIdx, SwitchIdx), LinkIdx> = BTreeMap::new();
        for idx in self.link_indices() {
            let link = &self.links[idx.0];
            let mut ports = vec![link.a];
            ports.extend(link.b_port());
            for p in ports {
                let sw = &self.switches[p.switch.0];
                if p.port == 0 || p.port > sw.radix {
                    findings.push(Finding::RadixOverflow {
                        switch: sw.name.clone(),
                        port: p.port,
                        radix: sw.radix,
                    });
                }
                if let Some(&first) = used.get(&p) {
                    findings.push(Finding::PortConflict {
                        switch: sw.name.clone(),
                        port: p.port,
                        links: (self.describe_link(first), self.describe_link(idx)),
                    });
                } else {
                    used.insert(p, idx);
                }
            }
            if let Some(b) = link.b_port() {
                if b.switch == link.a.switch {
                    findings.push(Finding::SelfLoop {
                        link: self.describe_link(idx),
                    });
                    continue;
                }
                let key = (link.a.switch.min(b.switch), link.a.switch.max(b.switch));
                if let Some(&first) = edges.get(&key) {
                    findings.push(Finding::DuplicateLink {
                        link: self.describe_link(idx),
                        first: self.describe_link(first),
                    });
                } else {
                    edges.insert(key, idx);
                }
            }
        }

        if self.connected && self.hosts.len() > 1 {
            let components = self.host_components();
            if components > 1 {
                findings.push(Finding::Disconnected { components });
            }
        }

        ValidationReport { findings }
    }

    fn host_components(&self) -> usize {
        let mut comp = vec![usize::MAX; self.switches.len()];
        let mut next = 0;
        for start in self.switch_indices() {
            if comp[start.0] != usize::MAX {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            comp[start.0] = next;
            while let Some(u) = queue.pop_front() {
                for (_, peer, _) in self.neighbors(u) {
                    if comp[peer.switch.0] == usize::MAX {
                        comp[peer.switch.0] = next;
                        queue.push_back(peer.switch);
                    }
                }
            }
            next += 1;
        }
        self.hosts
            .iter()
            .map(|h| comp[h.attachment.switch.0])
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Human-readable form of a link, e.g. `s1:2--s2:1` or `s1:1--h1`.
    pub fn describe_link(&self, idx: LinkIdx) -> String {
        let link = &self.links[idx.0];
        let a = self.describe_port(link.a);
        match link.b {
            LinkEnd::Switch(p) => format!("{a}--{}", self.describe_port(p)),
            LinkEnd::Host(h) => format!("{a}--{}", self.hosts[h.0].name),
        }
    }

    pub fn describe_port(&self, p: SwitchPort) -> String {
        format!("{}:{}", self.switches[p.switch.0].name, p.port)
    }

    /// Keeps `count` hosts chosen uniformly at random (seeded), dropping the
    /// others and freeing their ports. Keeps all hosts when `count` is not
    /// smaller than the current host count.
    pub fn select_hosts(&self, count: usize, seed: u64) -> LogicalTopology {
        use rand::seq::index::sample;
        use rand::SeedableRng;

        if count >= self.hosts.len() {
            return self.clone();
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let keep: BTreeSet<usize> = sample(&mut rng, self.hosts.len(), count)
            .into_iter()
            .collect();

        let origin = match &self.origin {
            Origin::Generated(spec) => Origin::Generated(GenerateSpec {
                select: Some(HostSelection { count, seed }),
                ..spec.clone()
            }),
            Origin::Custom => Origin::Custom,
        };
        let mut b = TopologyBuilder::new(self.name.clone());
        b.origin(origin).connected(self.connected);
        for sw in &self.switches {
            b.add_switch(sw.name.clone(), sw.radix, sw.label.clone());
        }
        for (i, host) in self.hosts.iter().enumerate() {
            if keep.contains(&i) {
                b.add_host(host.name.clone(), host.attachment);
            }
        }
        for l in self.switch_links() {
            let link = &self.links[l.0];
            if let Some(bp) = link.b_port() {
                b.add_link(link.a, bp);
            }
        }
        b.build()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    DuplicateName {
        name: String,
    },
    ZeroRadix {
        switch: String,
    },
    RadixOverflow {
        switch: String,
        port: PortNo,
        radix: PortNo,
    },
    PortConflict {
        switch: String,
        port: PortNo,
        links: (String, String),
    },
    SelfLoop {
        link: String,
    },
    DuplicateLink {
        link: String,
        first: String,
    },
    Disconnected {
        components: usize,
    },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::DuplicateName { name } => write!(f, "name `{name}` is used more than once"),
            Finding::ZeroRadix { switch } => write!(f, "switch `{switch}` has radix 0"),
            Finding::RadixOverflow {
                switch,
                port,
                radix,
            } => {
                write!(
                    f,
                    "switch `{switch}` has radix {radix} but port {port} is used"
                )
            }
            Finding::PortConflict {
                switch,
                port,
                links,
            } => write!(
                f,
                "port {port} of switch `{switch}` is used by both {} and {}",
                links.0, links.1
            ),
            Finding::SelfLoop { link } => write!(f, "link {link} connects a switch to itself"),
            Finding::DuplicateLink { link, first } => {
                write!(f, "link {link} duplicates {first}")
            }
            Finding::Disconnected { components } => {
                write!(
                    f,
                    "hosts are split across {components} disconnected components"
                )
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.findings.is_empty() {
            return writeln!(f, "no findings");
        }
        for finding in &self.findings {
            writeln!(f, "- {finding}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("config: {0}")]
    Schema(String),
    #[error("{0}")]
    RadixOverflow(Finding),
    #[error("{0}")]
    DuplicatePort(Finding),
    #[error("invalid topology: {0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Generate(#[from] GenerateError),
}

impl TopologyError {
    /// Turns the first blocking finding into an error.
    fn from_report(report: ValidationReport) -> Self {
        let first = report.findings.iter().find_map(|f| match f {
            Finding::RadixOverflow { .. } => Some(TopologyError::RadixOverflow(f.clone())),
            Finding::PortConflict { .. } => Some(TopologyError::DuplicatePort(f.clone())),
            _ => None,
        });
        first.unwrap_or(TopologyError::Invalid(report))
    }
}

/// Assembles a topology. `build` puts the result in canonical order:
/// switches and hosts sorted by name, switch links sorted by endpoints, host
/// links last.
#[derive(Debug, Clone)]
pub struct TopologyBuilder {
    name: String,
    origin: Origin,
    connected: bool,
    switches: Vec<LogicalSwitch>,
    hosts: Vec<Host>,
    links: Vec<(SwitchPort, SwitchPort)>,
}

impl TopologyBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        TopologyBuilder {
            name: name.into(),
            origin: Origin::Custom,
            connected: true,
            switches: Vec::new(),
            hosts: Vec::new(),
            links: Vec::new(),
        }
    }

    pub fn origin(&mut self, origin: Origin) -> &mut Self {
        self.origin = origin;
        self
    }

    pub fn connected(&mut self, connected: bool) -> &mut Self {
        self.connected = connected;
        self
    }

    /// Adds a switch and returns its provisional index, valid for later
    /// `add_host`/`add_link` calls on this builder.
    pub fn add_switch(
        &mut self,
        name: impl Into<String>,
        radix: PortNo,
        label: SwitchLabel,
    ) -> SwitchIdx {
        self.switches.push(LogicalSwitch {
            name: name.into(),
            radix,
            label,
        });
        SwitchIdx(self.switches.len() - 1)
    }

    pub fn add_host(&mut self, name: impl Into<String>, attachment: SwitchPort) -> HostIdx {
        self.hosts.push(Host {
            name: name.into(),
            attachment,
        });
        HostIdx(self.hosts.len() - 1)
    }

    pub fn add_link(&mut self, a: SwitchPort, b: SwitchPort) {
        self.links.push((a, b));
    }

    pub fn num_switches(&self) -> usize {
        self.switches.len()
    }

    pub fn build(self) -> LogicalTopology {
        let mut order: Vec<usize> = (0..self.switches.len()).collect();
        order.sort_by(|&x, &y| {
            self.switches[x]
                .name
                .cmp(&self.switches[y].name)
                .then(x.cmp(&y))
        });
        let mut remap = vec![SwitchIdx(0); self.switches.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = SwitchIdx(new);
        }
        let switches: Vec<LogicalSwitch> =
            order.iter().map(|&i| self.switches[i].clone()).collect();
        let fix = |p: SwitchPort| SwitchPort::new(remap[p.switch.0], p.port);

        let mut hosts: Vec<Host> = self
            .hosts
            .iter()
            .map(|h| Host {
                name: h.name.clone(),
                attachment: fix(h.attachment),
            })
            .collect();
        hosts.sort_by(|x, y| x.name.cmp(&y.name).then(x.attachment.cmp(&y.attachment)));

        let mut sw_links: Vec<LogicalLink> = self
            .links
            .iter()
            .map(|&(a, b)| {
                let (a, b) = (fix(a), fix(b));
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                LogicalLink {
                    a,
                    b: LinkEnd::Switch(b),
                }
            })
            .collect();
        sw_links.sort();

        let mut links = sw_links;
        let mut host_links = Vec::with_capacity(hosts.len());
        for (i, h) in hosts.iter().enumerate() {
            host_links.push(LinkIdx(links.len()));
            links.push(LogicalLink {
                a: h.attachment,
                b: LinkEnd::Host(HostIdx(i)),
            });
        }

        let mut incident = vec![Vec::new(); switches.len()];
        for (i, link) in links.iter().enumerate() {
            incident[link.a.switch.0].push(LinkIdx(i));
            if let Some(b) = link.b_port() {
                if b.switch != link.a.switch {
                    incident[b.switch.0].push(LinkIdx(i));
                }
            }
        }

        LogicalTopology {
            name: self.name,
            origin: self.origin,
            connected: self.connected,
            switches,
            hosts,
            links,
            incident,
            host_links,
        }
    }

    /// Builds and validates.
    pub fn build_valid(self) -> Result<LogicalTopology, TopologyError> {
        let topo = self.build();
        let report = topo.validate();
        if report.is_empty() {
            Ok(topo)
        } else {
            Err(TopologyError::from_report(report))
        }
    }
}
