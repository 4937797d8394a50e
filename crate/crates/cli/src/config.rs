//! Run configuration.
//!
//! ```toml
//! seed = 0
//! scheme = "shortest-path"   # optional; family default otherwise
//! format = "native"          # or "oftext"
//! out = "out"
//!
//! [inventory]
//! switches = 2
//! ports = 64
//! table_capacity = 4096
//!
//! [partition]
//! alpha = 1.0
//! beta = 1.0
//!
//! [deploy]
//! mode = "reconfigure"       # or "co-deploy"
//! merge = false
//!
//! [[topology]]
//! file = "fattree.toml"      # relative to this file
//!
//! [[topology]]
//! name = "torus"
//! generate = { family = "torus", dims = [4, 4] }
//! ```
//!
//! Instead of the uniform `switches`/`ports`/`table_capacity` keys the
//! inventory may list `[[inventory.switch]]` entries with `id`, `ports` and
//! `table_capacity`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use linkproj::partition::PartitionParams;
use linkproj::pipeline::{CompileOptions, DeployMode};
use linkproj::projection::{uniform_inventory, PhysicalSwitch};
use linkproj::routing::RoutingScheme;
use linkproj::rules::ExportFormat;
use linkproj::topology::{parse_topology, LogicalTopology, PortNo, TopologyConfig};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    seed: Option<u64>,
    scheme: Option<String>,
    format: Option<String>,
    out: Option<PathBuf>,
    inventory: InventoryConfig,
    #[serde(default)]
    partition: PartitionConfig,
    #[serde(default)]
    deploy: DeployConfig,
    #[serde(default)]
    topology: Vec<toml::Table>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InventoryConfig {
    switches: Option<usize>,
    ports: Option<PortNo>,
    table_capacity: Option<usize>,
    #[serde(default)]
    switch: Vec<SwitchEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SwitchEntry {
    id: String,
    ports: PortNo,
    table_capacity: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionConfig {
    alpha: Option<f64>,
    beta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeployConfig {
    mode: Option<String>,
    merge: Option<bool>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub scheme: Option<String>,
    pub format: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Run {
    pub topologies: Vec<LogicalTopology>,
    pub inventory: Vec<PhysicalSwitch>,
    pub options: CompileOptions,
    pub format: ExportFormat,
    pub out: PathBuf,
}

fn inventory(cfg: &InventoryConfig) -> Result<Vec<PhysicalSwitch>> {
    let uniform = cfg.switches.is_some() || cfg.ports.is_some() || cfg.table_capacity.is_some();
    if uniform && !cfg.switch.is_empty() {
        bail!(
            "inventory: use either switches/ports/table_capacity or [[inventory.switch]], not both"
        );
    }
    if !cfg.switch.is_empty() {
        return Ok(cfg
            .switch
            .iter()
            .map(|s| PhysicalSwitch::new(&s.id, s.ports, s.table_capacity))
            .collect());
    }
    let (Some(n), Some(ports), Some(cap)) = (cfg.switches, cfg.ports, cfg.table_capacity) else {
        bail!("inventory: switches, ports and table_capacity are all required");
    };
    if n == 0 || ports == 0 {
        bail!("inventory: need at least one switch with at least one port");
    }
    Ok(uniform_inventory(n, ports, cap))
}

fn topology(entry: &toml::Table, base: &Path, index: usize) -> Result<LogicalTopology> {
    if let Some(file) = entry.get("file") {
        let Some(file) = file.as_str() else {
            bail!("topology {index}: `file` must be a string")
        };
        if let Some(extra) = entry.keys().find(|k| *k != "file" && *k != "name") {
            bail!("topology {index}: `{extra}` cannot be combined with `file`");
        }
        let path = base.join(file);
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let mut t =
            parse_topology(&text).with_context(|| format!("topology {}", path.display()))?;
        if let Some(name) = entry.get("name").and_then(|v| v.as_str()) {
            t.name = name.to_string();
        }
        return Ok(t);
    }
    let cfg: TopologyConfig = toml::Value::Table(entry.clone())
        .try_into()
        .with_context(|| format!("topology {index}"))?;
    cfg.to_topology()
        .with_context(|| format!("topology {index}"))
}

/// Reads and resolves a run configuration.
pub fn load(path: &Path, over: &Overrides) -> Result<Run> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: RunConfig =
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    if cfg.topology.is_empty() {
        bail!("{}: at least one [[topology]] is required", path.display());
    }
    let topologies = cfg
        .topology
        .iter()
        .enumerate()
        .map(|(i, e)| topology(e, base, i))
        .collect::<Result<Vec<_>>>()?;
    let inventory = inventory(&cfg.inventory)?;

    let scheme = match over.scheme.as_ref().or(cfg.scheme.as_ref()) {
        None => None,
        Some(s) => Some(s.parse::<RoutingScheme>().map_err(anyhow::Error::msg)?),
    };
    if let Some(scheme) = scheme {
        for t in &topologies {
            if scheme.family().is_some_and(|f| f != t.family()) {
                bail!(
                    "scheme {scheme} does not apply to {} ({} family); use shortest-path",
                    t.name,
                    t.family()
                );
            }
        }
    }
    let format: ExportFormat = over
        .format
        .as_ref()
        .or(cfg.format.as_ref())
        .map_or("native", |s| s)
        .parse()?;
    let mode: DeployMode = cfg
        .deploy
        .mode
        .as_deref()
        .unwrap_or("reconfigure")
        .parse()
        .map_err(anyhow::Error::msg)?;

    let template = PartitionParams::new(1, 0)
        .with_weights(
            cfg.partition.alpha.unwrap_or(1.0),
            cfg.partition.beta.unwrap_or(1.0),
        )
        .with_seed(over.seed.or(cfg.seed).unwrap_or(0));
    let out = over
        .out
        .clone()
        .or_else(|| cfg.out.map(|o| base.join(o)))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Run {
        topologies,
        inventory,
        options: CompileOptions {
            template,
            scheme,
            mode,
            merge: cfg.deploy.merge.unwrap_or(false),
        },
        format,
        out,
    })
}
