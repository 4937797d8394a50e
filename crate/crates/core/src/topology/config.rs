//! TOML topology configuration.
//!
//! ```toml
//! name = "pair"
//!
//! [[switches]]
//! id = "s1"
//! radix = 2
//!
//! [[switches]]
//! id = "s2"
//! radix = 2
//!
//! [[hosts]]
//! id = "h1"
//! switch = "s1"
//! port = 1
//!
//! [[links]]
//! a = "s1:2"
//! b = "s2:2"
//! ```
//!
//! A `[generate]` table (`family = "fattree" | "dragonfly" | "mesh" |
//! "torus"` plus the family parameters) replaces the explicit lists.

use serde::{Deserialize, Serialize};

use super::generate::{GenerateSpec, HostSelection, Shape};
use super::{LinkEnd, LogicalTopology, Origin, PortNo, SwitchPort, TopologyBuilder, TopologyError};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connected: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub switches: Vec<SwitchConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hosts: Vec<HostConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    /// Keep only this many hosts, chosen with `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hosts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchConfig {
    pub id: String,
    pub radix: PortNo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostConfig {
    pub id: String,
    pub switch: String,
    pub port: PortNo,
}

/// A switch-switch link; endpoints are written `switch:port`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub a: String,
    pub b: String,
}

fn schema(msg: impl Into<String>) -> TopologyError {
    TopologyError::Schema(msg.into())
}

impl GenerateConfig {
    fn require(&self, value: Option<usize>, key: &str) -> Result<usize, TopologyError> {
        value.ok_or_else(|| {
            schema(format!(
                "generate.{key} is required for family `{}`",
                self.family
            ))
        })
    }

    fn reject(&self, keys: &[(&str, bool)]) -> Result<(), TopologyError> {
        for (key, present) in keys {
            if *present {
                return Err(schema(format!(
                    "generate.{key} does not apply to family `{}`",
                    self.family
                )));
            }
        }
        Ok(())
    }

    pub fn to_spec(&self) -> Result<GenerateSpec, TopologyError> {
        let shape = match self.family.as_str() {
            "fattree" => {
                self.reject(&[
                    ("a", self.a.is_some()),
                    ("g", self.g.is_some()),
                    ("h", self.h.is_some()),
                    ("p", self.p.is_some()),
                    ("dims", self.dims.is_some()),
                ])?;
                Shape::FatTree {
                    k: self.require(self.k, "k")?,
                }
            }
            "dragonfly" => {
                self.reject(&[("k", self.k.is_some()), ("dims", self.dims.is_some())])?;
                let h = self.require(self.h, "h")?;
                Shape::Dragonfly {
                    a: self.require(self.a, "a")?,
                    g: self.require(self.g, "g")?,
                    h,
                    p: self.p.unwrap_or(h),
                }
            }
            "mesh" | "torus" => {
                self.reject(&[
                    ("k", self.k.is_some()),
                    ("a", self.a.is_some()),
                    ("g", self.g.is_some()),
                    ("h", self.h.is_some()),
                    ("p", self.p.is_some()),
                ])?;
                let dims = self.dims.clone().ok_or_else(|| {
                    schema(format!(
                        "generate.dims is required for family `{}`",
                        self.family
                    ))
                })?;
                if self.family == "mesh" {
                    Shape::Mesh { dims }
                } else {
                    Shape::Torus { dims }
                }
            }
            other => return Err(schema(format!("generate.family: unknown family `{other}`"))),
        };
        let select = self.hosts.map(|count| HostSelection {
            count,
            seed: self.seed.unwrap_or(0),
        });
        if select.is_none() && self.seed.is_some() {
            return Err(schema(
                "generate.seed only applies together with generate.hosts",
            ));
        }
        Ok(GenerateSpec { shape, select })
    }

    pub fn from_spec(spec: &GenerateSpec) -> Self {
        let mut cfg = GenerateConfig::default();
        match &spec.shape {
            Shape::FatTree { k } => {
                cfg.family = "fattree".into();
                cfg.k = Some(*k);
            }
            Shape::Dragonfly { a, g, h, p } => {
                cfg.family = "dragonfly".into();
                cfg.a = Some(*a);
                cfg.g = Some(*g);
                cfg.h = Some(*h);
                cfg.p = Some(*p);
            }
            Shape::Mesh { dims } => {
                cfg.family = "mesh".into();
                cfg.dims = Some(dims.clone());
            }
            Shape::Torus { dims } => {
                cfg.family = "torus".into();
                cfg.dims = Some(dims.clone());
            }
        }
        if let Some(sel) = spec.select {
            cfg.hosts = Some(sel.count);
            cfg.seed = Some(sel.seed);
        }
        cfg
    }
}

fn parse_endpoint(text: &str, key: &str) -> Result<(String, PortNo), TopologyError> {
    let (switch, port) = text
        .rsplit_once(':')
        .ok_or_else(|| schema(format!("{key}: expected `switch:port`, got `{text}`")))?;
    let port = port
        .parse::<PortNo>()
        .map_err(|_| schema(format!("{key}: bad port number in `{text}`")))?;
    Ok((switch.to_string(), port))
}

impl TopologyConfig {
    pub fn to_topology(&self) -> Result<LogicalTopology, TopologyError> {
        let explicit =
            !self.switches.is_empty() || !self.hosts.is_empty() || !self.links.is_empty();
        let mut topo = match &self.generate {
            Some(_) if explicit => {
                return Err(schema(
                    "`generate` cannot be combined with `switches`, `hosts` or `links`",
                ))
            }
            Some(gen) => {
                let mut t = gen.to_spec()?.generate()?;
                if let Some(name) = &self.name {
                    t.name = name.clone();
                }
                t
            }
            None => self.explicit_topology()?,
        };
        if let Some(connected) = self.connected {
            topo.connected = connected;
        }
        let report = topo.validate();
        if !report.is_empty() {
            return Err(TopologyError::from_report(report));
        }
        Ok(topo)
    }

    fn explicit_topology(&self) -> Result<LogicalTopology, TopologyError> {
        let mut b = TopologyBuilder::new(self.name.clone().unwrap_or_else(|| "topology".into()));
        let mut ids = std::collections::BTreeMap::new();
        for (i, sw) in self.switches.iter().enumerate() {
            let idx = b.add_switch(sw.id.clone(), sw.radix, super::SwitchLabel::None);
            if ids.insert(sw.id.clone(), idx).is_some() {
                return Err(schema(format!(
                    "switches[{i}].id: duplicate switch `{}`",
                    sw.id
                )));
            }
        }
        let lookup = |name: &str, key: &str| {
            ids.get(name)
                .copied()
                .ok_or_else(|| schema(format!("{key}: unknown switch `{name}`")))
        };
        let mut host_ids = std::collections::BTreeSet::new();
        for (i, host) in self.hosts.iter().enumerate() {
            let sw = lookup(&host.switch, &format!("hosts[{i}].switch"))?;
            if !host_ids.insert(host.id.clone()) {
                return Err(schema(format!(
                    "hosts[{i}].id: duplicate host `{}`",
                    host.id
                )));
            }
            b.add_host(host.id.clone(), SwitchPort::new(sw, host.port));
        }
        for (i, link) in self.links.iter().enumerate() {
            let (sa, pa) = parse_endpoint(&link.a, &format!("links[{i}].a"))?;
            let (sb, pb) = parse_endpoint(&link.b, &format!("links[{i}].b"))?;
            let a = SwitchPort::new(lookup(&sa, &format!("links[{i}].a"))?, pa);
            let b_port = SwitchPort::new(lookup(&sb, &format!("links[{i}].b"))?, pb);
            b.add_link(a, b_port);
        }
        Ok(b.build())
    }

    /// Canonical configuration for `topo`: generator parameters for
    /// generated topologies, sorted explicit lists otherwise.
    pub fn from_topology(topo: &LogicalTopology) -> Self {
        let mut cfg = TopologyConfig {
            name: Some(topo.name.clone()),
            connected: (!topo.connected).then_some(false),
            ..Default::default()
        };
        match &topo.origin {
            Origin::Generated(spec) => cfg.generate = Some(GenerateConfig::from_spec(spec)),
            Origin::Custom => {
                cfg.switches = topo
                    .switches()
                    .iter()
                    .map(|s| SwitchConfig {
                        id: s.name.clone(),
                        radix: s.radix,
                    })
                    .collect();
                cfg.hosts = topo
                    .hosts()
                    .iter()
                    .map(|h| HostConfig {
                        id: h.name.clone(),
                        switch: topo.switch(h.attachment.switch).name.clone(),
                        port: h.attachment.port,
                    })
                    .collect();
                cfg.links = topo
                    .links()
                    .iter()
                    .filter_map(|l| match l.b {
                        LinkEnd::Switch(b) => Some(LinkConfig {
                            a: topo.describe_port(l.a),
                            b: topo.describe_port(b),
                        }),
                        LinkEnd::Host(_) => None,
                    })
                    .collect();
            }
        }
        cfg
    }
}

/// Parses and validates a TOML topology configuration.
pub fn parse_topology(text: &str) -> Result<LogicalTopology, TopologyError> {
    let cfg: TopologyConfig = toml::from_str(text).map_err(|e| schema(e.to_string()))?;
    cfg.to_topology()
}

/// Deterministic TOML rendering of `topo`; `parse_topology` reads it back
/// to an equal topology.
pub fn serialize_topology(topo: &LogicalTopology) -> String {
    toml::to_string(&TopologyConfig::from_topology(topo))
        .expect("topology config is always representable")
}
