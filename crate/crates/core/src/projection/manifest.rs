//! Text manifests for wiring and projections.
//!
//! Wiring is written as one file per physical switch, listing the role of
//! every port, plus a fiber list for cables between switches. A projection
//! manifest records where each logical switch, link and host landed and
//! ends with a hash of its own contents.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::topology::{LinkEnd, LogicalTopology, PortNo};

use super::{
    InterSwitchLink, PhysPort, PhysicalSwitch, PortRole, ProjectionMap, SelfLink, Wiring,
    WiringElement,
};

const WIRING_HEADER: &str = "# linkproj wiring v1";
const FIBERS_HEADER: &str = "# linkproj fibers v1";
const PROJECTION_HEADER: &str = "# linkproj projection v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("{file}:{line}: {msg}")]
    Syntax {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("{0}")]
    Inconsistent(String),
    #[error("projection hash mismatch: manifest says {stated}, contents hash to {actual}")]
    HashMismatch { stated: String, actual: String },
}

fn syntax(file: &str, line: usize, msg: impl Into<String>) -> ManifestError {
    ManifestError::Syntax {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

/// First 16 hex digits of the SHA-256 of `text`.
pub(crate) fn short_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl Wiring {
    /// Port roles of one switch, one line per port including free ones.
    pub fn render_switch(&self, switch: usize) -> String {
        let sw = &self.switches[switch];
        let mut out = String::new();
        let _ = writeln!(out, "{WIRING_HEADER}");
        let _ = writeln!(
            out,
            "switch {} index {switch} ports {} table_capacity {}",
            sw.id, sw.num_ports, sw.table_capacity
        );
        for port in 1..=sw.num_ports {
            let role = self
                .role(PhysPort::new(switch, port))
                .expect("port in range");
            let _ = match role {
                PortRole::Host { slot } => writeln!(out, "port {port} host {slot}"),
                PortRole::InterSwitch { peer, .. } => {
                    writeln!(
                        out,
                        "port {port} inter {}:{}",
                        self.switches[peer.switch].id, peer.port
                    )
                }
                PortRole::SelfLink { peer, .. } => writeln!(out, "port {port} self {peer}"),
                PortRole::Free => writeln!(out, "port {port} free"),
            };
        }
        out
    }

    /// Cables between switches, one per line.
    pub fn render_fibers(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FIBERS_HEADER}");
        for l in &self.inter_switch_links {
            let _ = writeln!(
                out,
                "fiber {}:{} {}:{}",
                self.switches[l.a.switch].id, l.a.port, self.switches[l.b.switch].id, l.b.port
            );
        }
        out
    }

    /// Every manifest concatenated; the basis of [`Wiring::hash`].
    pub fn render(&self) -> String {
        let mut out: String = (0..self.num_switches())
            .map(|s| self.render_switch(s))
            .collect();
        out.push_str(&self.render_fibers());
        out
    }

    pub fn hash(&self) -> String {
        short_hash(&self.render())
    }

    /// Rebuilds a wiring from per-switch manifests (in any order) and the
    /// fiber list. The fiber list must agree with the inter-switch ports.
    pub fn from_manifests(switch_files: &[String], fibers: &str) -> Result<Wiring, ManifestError> {
        let mut parsed: Vec<(usize, PhysicalSwitch, Vec<(PortNo, String, String)>)> = Vec::new();
        for (fi, text) in switch_files.iter().enumerate() {
            let file = format!("switch manifest {fi}");
            let mut lines = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty());
            match lines.next() {
                Some((_, l)) if l.trim() == WIRING_HEADER => {}
                _ => return Err(syntax(&file, 1, "missing wiring header")),
            }
            let (ln, head) = lines
                .next()
                .ok_or_else(|| syntax(&file, 2, "missing switch line"))?;
            let f: Vec<&str> = head.split_whitespace().collect();
            let ["switch", id, "index", index, "ports", ports, "table_capacity", cap] = f[..]
            else {
                return Err(syntax(
                    &file,
                    ln + 1,
                    "expected `switch <id> index <i> ports <n> table_capacity <c>`",
                ));
            };
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| syntax(&file, ln + 1, format!("bad number `{s}`")))
            };
            let index = num(index)?;
            let ports = PortNo::try_from(num(ports)?)
                .map_err(|_| syntax(&file, ln + 1, "port count too large"))?;
            let sw = PhysicalSwitch::new(id, ports, num(cap)?);
            let mut entries = Vec::new();
            for (ln, line) in lines {
                let f: Vec<&str> = line.split_whitespace().collect();
                let (port, kind, arg) = match f[..] {
                    ["port", p, "free"] => (p, "free", ""),
                    ["port", p, k, a] => (p, k, a),
                    _ => return Err(syntax(&file, ln + 1, format!("unrecognized line `{line}`"))),
                };
                let port: PortNo = port
                    .parse()
                    .map_err(|_| syntax(&file, ln + 1, format!("bad port `{port}`")))?;
                if port == 0 || port > ports || entries.len() + 1 != port as usize {
                    return Err(syntax(
                        &file,
                        ln + 1,
                        format!("port {port} out of sequence"),
                    ));
                }
                entries.push((port, kind.to_string(), arg.to_string()));
            }
            if entries.len() != ports as usize {
                return Err(syntax(
                    &file,
                    0,
                    format!("lists {} of {ports} ports", entries.len()),
                ));
            }
            parsed.push((index, sw, entries));
        }
        parsed.sort_by_key(|(i, _, _)| *i);
        if parsed.iter().enumerate().any(|(pos, (i, _, _))| pos != *i) {
            return Err(ManifestError::Inconsistent(
                "switch indices are not 0..n".into(),
            ));
        }
        let by_id: BTreeMap<String, usize> =
            parsed.iter().map(|(i, s, _)| (s.id.clone(), *i)).collect();
        let resolve = |s: &str| -> Option<PhysPort> {
            let (id, port) = s.rsplit_once(':')?;
            Some(PhysPort::new(*by_id.get(id)?, port.parse().ok()?))
        };

        let mut host_ports = vec![Vec::new(); parsed.len()];
        let mut self_links = Vec::new();
        let mut inter = Vec::new();
        for (s, sw, entries) in &parsed {
            let file = format!("{}.wiring", sw.id);
            for (port, kind, arg) in entries {
                match kind.as_str() {
                    "free" => {}
                    "host" => {
                        let slot: usize = arg
                            .parse()
                            .map_err(|_| syntax(&file, *port as usize + 2, "bad host slot"))?;
                        if slot != host_ports[*s].len() {
                            return Err(syntax(
                                &file,
                                *port as usize + 2,
                                "host slots out of order",
                            ));
                        }
                        host_ports[*s].push(*port);
                    }
                    "self" => {
                        let peer: PortNo = arg
                            .parse()
                            .map_err(|_| syntax(&file, *port as usize + 2, "bad peer port"))?;
                        let ok = (peer as usize)
                            .checked_sub(1)
                            .and_then(|i| entries.get(i))
                            .is_some_and(|(_, k, a)| k == "self" && a == &port.to_string());
                        if !ok || peer == *port {
                            return Err(ManifestError::Inconsistent(format!(
                                "{file}: self-link {port}-{peer} is one-sided"
                            )));
                        }
                        if *port < peer {
                            self_links.push(SelfLink {
                                switch: *s,
                                low: *port,
                                high: peer,
                            });
                        }
                    }
                    "inter" => {
                        let peer = resolve(arg).ok_or_else(|| {
                            syntax(&file, *port as usize + 2, format!("bad peer `{arg}`"))
                        })?;
                        let here = PhysPort::new(*s, *port);
                        if peer.switch == *s {
                            return Err(ManifestError::Inconsistent(format!(
                                "{file}: fiber to itself at port {port}"
                            )));
                        }
                        if here < peer {
                            inter.push(InterSwitchLink { a: here, b: peer });
                        }
                    }
                    other => {
                        return Err(syntax(
                            &file,
                            *port as usize + 2,
                            format!("unknown role `{other}`"),
                        ))
                    }
                }
            }
        }
        inter.sort();
        self_links.sort();

        let mut listed = Vec::new();
        let mut lines = fibers
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        if let Some((_, l)) = lines.next() {
            if l.trim() != FIBERS_HEADER {
                return Err(syntax("fibers.txt", 1, "missing fibers header"));
            }
        }
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let ["fiber", a, b] = f[..] else {
                return Err(syntax(
                    "fibers.txt",
                    ln + 1,
                    format!("unrecognized line `{line}`"),
                ));
            };
            let (Some(a), Some(b)) = (resolve(a), resolve(b)) else {
                return Err(syntax("fibers.txt", ln + 1, "unknown port"));
            };
            listed.push(InterSwitchLink {
                a: a.min(b),
                b: a.max(b),
            });
        }
        listed.sort();
        if listed != inter {
            return Err(ManifestError::Inconsistent(
                "fiber list disagrees with switch manifests".into(),
            ));
        }

        // The planner's order is by switch pair, then by port.
        inter.sort_by_key(|l| (l.a.switch, l.b.switch, l.a.port, l.b.port));
        let switches = parsed.into_iter().map(|(_, s, _)| s).collect();
        let wiring = Wiring::from_parts(switches, host_ports, inter, self_links);
        // Every inter line must have a matching line on its peer.
        for l in &wiring.inter_switch_links {
            for (here, there) in [(l.a, l.b), (l.b, l.a)] {
                let role = wiring.role(here);
                if !matches!(role, Some(PortRole::InterSwitch { peer, .. }) if peer == there) {
                    return Err(ManifestError::Inconsistent(format!(
                        "fiber {here}-{there} is one-sided"
                    )));
                }
            }
        }
        Ok(wiring)
    }
}

/// Hash of a projection in the context of its topology and wiring.
pub fn projection_hash(topology: &LogicalTopology, wiring: &Wiring, map: &ProjectionMap) -> String {
    short_hash(&map.render_body(topology, wiring))
}

fn element_text(wiring: &Wiring, e: &WiringElement, a_first: bool) -> String {
    let name = |p: PhysPort| format!("{}:{}", wiring.switches[p.switch].id, p.port);
    match *e {
        WiringElement::Host { port } => format!("host {}", name(port)),
        WiringElement::SelfLink { link, .. } => {
            let (x, y) = (
                PhysPort::new(link.switch, link.low),
                PhysPort::new(link.switch, link.high),
            );
            format!("self {} {}", name(x), name(y))
        }
        WiringElement::InterSwitch { link, .. } => {
            let (x, y) = if a_first {
                (link.a, link.b)
            } else {
                (link.b, link.a)
            };
            format!("inter {} {}", name(x), name(y))
        }
    }
}

impl ProjectionMap {
    fn render_body(&self, topology: &LogicalTopology, wiring: &Wiring) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{PROJECTION_HEADER}");
        let _ = writeln!(out, "topology {}", topology.name);
        let _ = writeln!(out, "wiring {}", wiring.hash());
        for s in topology.switch_indices() {
            let ports: Vec<String> = self
                .subswitch(s)
                .iter()
                .map(|p| p.port.to_string())
                .collect();
            let _ = writeln!(
                out,
                "subswitch {} on {} ports {}",
                topology.switch(s).name,
                wiring.switches[self.placement[s.0]].id,
                if ports.is_empty() {
                    "-".to_string()
                } else {
                    ports.join(",")
                }
            );
        }
        for (l, e) in topology.link_indices().zip(&self.link_map) {
            let link = topology.link(l);
            let a_first = self.physical_port(link.a).is_some_and(|p| match e {
                WiringElement::InterSwitch { link, .. } => p == link.a,
                _ => true,
            });
            let _ = writeln!(
                out,
                "link {} {}",
                topology.describe_link(l),
                element_text(wiring, e, a_first)
            );
        }
        out
    }

    /// Manifest text, ending with a `hash` line over everything above it.
    pub fn render(&self, topology: &LogicalTopology, wiring: &Wiring) -> String {
        let body = self.render_body(topology, wiring);
        let hash = short_hash(&body);
        format!("{body}hash {hash}\n")
    }

    /// Reads a manifest written by [`ProjectionMap::render`] back against
    /// the topology and wiring it was made for.
    pub fn parse(
        text: &str,
        topology: &LogicalTopology,
        wiring: &Wiring,
    ) -> Result<ProjectionMap, ManifestError> {
        const FILE: &str = "projection.manifest";
        let Some((body, hash_line)) = text.trim_end_matches('\n').rsplit_once('\n') else {
            return Err(syntax(FILE, 1, "manifest is truncated"));
        };
        let body = format!("{body}\n");
        let stated = hash_line
            .strip_prefix("hash ")
            .ok_or_else(|| {
                syntax(
                    FILE,
                    body.lines().count() + 1,
                    "last line must be `hash <hex>`",
                )
            })?
            .trim()
            .to_string();
        let actual = short_hash(&body);
        if stated != actual {
            return Err(ManifestError::HashMismatch { stated, actual });
        }
        let by_id: BTreeMap<&str, usize> = wiring
            .switches
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        let resolve = |s: &str| -> Option<PhysPort> {
            let (id, port) = s.rsplit_once(':')?;
            Some(PhysPort::new(*by_id.get(id)?, port.parse().ok()?))
        };

        let mut placement = vec![usize::MAX; topology.switches().len()];
        let mut link_map = Vec::new();
        let mut port_map = BTreeMap::new();
        let mut host_map = vec![PhysPort::new(0, 0); topology.hosts().len()];
        for (ln, line) in body.lines().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            let at = ln + 1;
            match f[..] {
                ["#", ..] => {}
                ["topology", name] if name == topology.name => {}
                ["topology", name] => {
                    return Err(ManifestError::Inconsistent(format!(
                        "manifest is for `{name}`, not `{}`",
                        topology.name
                    )))
                }
                ["wiring", h] if h == wiring.hash() => {}
                ["wiring", h] => {
                    return Err(ManifestError::Inconsistent(format!(
                        "manifest was made for wiring {h}, current wiring is {}",
                        wiring.hash()
                    )))
                }
                ["subswitch", name, "on", sw, "ports", _] => {
                    let s = topology
                        .switch_by_name(name)
                        .ok_or_else(|| syntax(FILE, at, format!("unknown switch `{name}`")))?;
                    placement[s.0] = *by_id.get(sw).ok_or_else(|| {
                        syntax(FILE, at, format!("unknown physical switch `{sw}`"))
                    })?;
                }
                ["link", desc, kind, ref rest @ ..] => {
                    let l = crate::topology::LinkIdx(link_map.len());
                    if l.0 >= topology.links().len() || topology.describe_link(l) != desc {
                        return Err(syntax(FILE, at, format!("unexpected link `{desc}`")));
                    }
                    let link = topology.link(l);
                    let ports: Vec<PhysPort> = rest
                        .iter()
                        .map(|p| {
                            resolve(p)
                                .ok_or_else(|| syntax(FILE, at, format!("unknown port `{p}`")))
                        })
                        .collect::<Result<_, _>>()?;
                    let element = match (kind, &ports[..], link.b) {
                        ("host", &[p], LinkEnd::Host(h)) => {
                            port_map.insert(link.a, p);
                            host_map[h.0] = p;
                            WiringElement::Host { port: p }
                        }
                        ("self", &[x, y], LinkEnd::Switch(b)) => {
                            let index = wiring
                                .self_links
                                .iter()
                                .position(|s| {
                                    s.switch == x.switch && s.low == x.port && s.high == y.port
                                })
                                .ok_or_else(|| {
                                    syntax(FILE, at, "no such self-link in the wiring")
                                })?;
                            port_map.insert(link.a, x);
                            port_map.insert(b, y);
                            WiringElement::SelfLink {
                                index,
                                link: wiring.self_links[index],
                            }
                        }
                        ("inter", &[x, y], LinkEnd::Switch(b)) => {
                            let (lo, hi) = (x.min(y), x.max(y));
                            let index = wiring
                                .inter_switch_links
                                .iter()
                                .position(|il| il.a == lo && il.b == hi)
                                .ok_or_else(|| syntax(FILE, at, "no such fiber in the wiring"))?;
                            port_map.insert(link.a, x);
                            port_map.insert(b, y);
                            WiringElement::InterSwitch {
                                index,
                                link: wiring.inter_switch_links[index],
                            }
                        }
                        _ => return Err(syntax(FILE, at, format!("malformed link line `{line}`"))),
                    };
                    link_map.push(element);
                }
                _ => return Err(syntax(FILE, at, format!("unrecognized line `{line}`"))),
            }
        }
        if link_map.len() != topology.links().len() {
            return Err(ManifestError::Inconsistent(format!(
                "manifest maps {} of {} links",
                link_map.len(),
                topology.links().len()
            )));
        }
        if let Some(s) = placement.iter().position(|&p| p == usize::MAX) {
            return Err(ManifestError::Inconsistent(format!(
                "switch `{}` has no placement",
                topology.switch(crate::topology::SwitchIdx(s)).name
            )));
        }
        Ok(ProjectionMap::from_parts(
            topology.name.clone(),
            placement,
            link_map,
            port_map,
            host_map,
        ))
    }
}
