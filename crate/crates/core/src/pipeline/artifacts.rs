use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::partition::PartitionParams;
use crate::projection::{ManifestError, ProjectionMap, Wiring};
use crate::routing::{
    assert_deadlock_free, build_cdg, render_routes, DeadlockVerdict, Route, RoutingError,
};
use crate::rules::{parse_rules, ExportFormat, RuleParseError, RuleSet};
use crate::sim::SimError;
use crate::topology::LogicalTopology;

use super::{
    route_all, routing_for, verify_bundles, Bundle, CompileOptions, DeployMode, Deployment,
    VerifyReport,
};

const REPORT_HEADER: &str = "# linkproj deploy v1";

/// File-system safe directory name for a topology.
pub fn dir_name(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() || s.starts_with('.') {
        format!("t{s}")
    } else {
        s
    }
}

/// Output files keyed by path relative to the output directory, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn get(&self, path: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(p, _)| p == path)
            .map(|(_, c)| c.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        for (rel, contents) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, contents)?;
        }
        Ok(())
    }
}

impl Deployment {
    /// Every output file. Rendering is deterministic, so an unchanged
    /// configuration yields byte-identical artifacts.
    pub fn artifacts(&self, format: ExportFormat) -> Artifacts {
        let mut files = Vec::new();
        for s in 0..self.wiring.num_switches() {
            files.push((format!("wiring/sw{s}.wiring"), self.wiring.render_switch(s)));
        }
        files.push(("wiring/fibers.txt".to_string(), self.wiring.render_fibers()));
        for c in &self.topologies {
            let dir = dir_name(&c.topology.name);
            let params = PartitionParams {
                num_parts: c.plan.num_parts,
                max_ports_per_part: self.part_capacity,
                ..self.template.clone()
            };
            files.push((
                format!("{dir}/partition.report"),
                c.plan.render(&c.topology, &params),
            ));
            files.push((
                format!("{dir}/projection.manifest"),
                c.map.render(&c.topology, &self.wiring),
            ));
            files.push((
                format!("{dir}/routes.txt"),
                render_routes(&c.topology, &c.routes),
            ));
            for set in &c.sets {
                files.push((
                    format!("{dir}/rules/sw{}.{}", set.switch, format.extension()),
                    set.export(format),
                ));
            }
        }
        files.push(("deploy.report".to_string(), self.report(format)));
        files.sort();
        Artifacts { files }
    }

    pub fn report(&self, format: ExportFormat) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{REPORT_HEADER}");
        let _ = writeln!(out, "mode {}", self.mode.name());
        let _ = writeln!(out, "switches {}", self.wiring.num_switches());
        let _ = writeln!(out, "format {}", format.name());
        let _ = writeln!(out, "wiring {}", self.wiring.hash());
        let _ = writeln!(out, "part_capacity {}", self.part_capacity);
        for s in 0..self.wiring.num_switches() {
            let sw = &self.wiring.switches[s];
            let _ = writeln!(
                out,
                "switch {} ports_used {}/{} self_links {} hosts {}",
                sw.id,
                self.wiring.ports_used(s),
                sw.num_ports,
                self.wiring.self_link_count(s),
                self.wiring.host_ports[s].len()
            );
        }
        for c in &self.topologies {
            let t = &c.topology;
            let _ = writeln!(out, "topology {} tag {}", t.name, c.tag);
            let _ = writeln!(
                out,
                "  switches {} hosts {} links {} parts {} cut {}",
                t.switches().len(),
                t.hosts().len(),
                t.links().len(),
                c.plan.num_parts,
                c.plan.cut_edges_total
            );
            let place: Vec<String> = c
                .placement
                .iter()
                .map(|&p| self.wiring.switches[p].id.clone())
                .collect();
            let _ = writeln!(out, "  placement {}", place.join(","));
            let _ = writeln!(out, "  projection {}", c.hash);
            let _ = writeln!(
                out,
                "  routing {} vcs {} {}",
                c.scheme, c.vcs.num_vcs, c.deadlock
            );
            for row in &c.capacity.rows {
                let _ = writeln!(
                    out,
                    "  rules {} {} merged {} capacity {}",
                    row.switch, row.used, row.merged, row.capacity
                );
            }
        }
        let _ = writeln!(
            out,
            "capacity {}",
            if self.capacity.ok() { "ok" } else { "overflow" }
        );
        for s in &self.capacity.suggestions {
            let _ = writeln!(out, "suggest: {s}");
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("missing {0}")]
    Missing(PathBuf),
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("{path}: {msg}")]
    Report { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Manifest {
        path: PathBuf,
        source: ManifestError,
    },
    #[error("{path}: {source}")]
    Rules {
        path: PathBuf,
        source: RuleParseError,
    },
    #[error("route {topology}: {source}")]
    Routing {
        topology: String,
        source: RoutingError,
    },
    #[error("install: {0}")]
    Sim(#[from] SimError),
}

struct LoadedTopology {
    topology: LogicalTopology,
    map: ProjectionMap,
    sets: Vec<RuleSet>,
    routes: Vec<Route>,
    deadlock: DeadlockVerdict,
}

/// A deployment read back from its output directory.
pub struct LoadedDeployment {
    pub mode: DeployMode,
    pub wiring: Wiring,
    topologies: Vec<LoadedTopology>,
}

impl LoadedDeployment {
    pub fn verify(&self) -> Result<VerifyReport, SimError> {
        let bundles: Vec<Bundle> = self
            .topologies
            .iter()
            .map(|l| Bundle {
                topology: &l.topology,
                map: &l.map,
                sets: &l.sets,
                routes: &l.routes,
                deadlock: &l.deadlock,
            })
            .collect();
        verify_bundles(&self.wiring, &bundles, self.mode)
    }

    pub fn names(&self) -> Vec<&str> {
        self.topologies
            .iter()
            .map(|l| l.topology.name.as_str())
            .collect()
    }
}

fn read(path: PathBuf) -> Result<String, ArtifactError> {
    match fs::read_to_string(&path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ArtifactError::Missing(path)),
        Err(e) => Err(ArtifactError::Io {
            path,
            msg: e.to_string(),
        }),
    }
}

/// Reads wiring, projections and rules from `dir` for the given
/// topologies. Routes are recomputed, so rules that drifted from the
/// routing show up as equivalence failures.
pub fn load_deployment(
    dir: &Path,
    topologies: &[LogicalTopology],
    options: &CompileOptions,
) -> Result<LoadedDeployment, ArtifactError> {
    let report_path = dir.join("deploy.report");
    let report = read(report_path.clone())?;
    let field = |key: &str| -> Result<&str, ArtifactError> {
        report
            .lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
            .ok_or_else(|| ArtifactError::Report {
                path: report_path.clone(),
                msg: format!("no `{key}` line"),
            })
    };
    if report.lines().next() != Some(REPORT_HEADER) {
        return Err(ArtifactError::Report {
            path: report_path.clone(),
            msg: "missing deploy header".into(),
        });
    }
    let bad = |msg: String| ArtifactError::Report {
        path: report_path.clone(),
        msg,
    };
    let mode: DeployMode = field("mode")?.parse().map_err(bad)?;
    let switches: usize = field("switches")?
        .parse()
        .map_err(|_| bad("bad switch count".into()))?;
    let format: ExportFormat = field("format")?
        .parse()
        .map_err(|e: RuleParseError| bad(e.to_string()))?;

    let wiring_dir = dir.join("wiring");
    let manifests = (0..switches)
        .map(|s| read(wiring_dir.join(format!("sw{s}.wiring"))))
        .collect::<Result<Vec<_>, _>>()?;
    let fibers_path = wiring_dir.join("fibers.txt");
    let fibers = read(fibers_path.clone())?;
    let wiring =
        Wiring::from_manifests(&manifests, &fibers).map_err(|source| ArtifactError::Manifest {
            path: wiring_dir.clone(),
            source,
        })?;

    let mut loaded = Vec::with_capacity(topologies.len());
    for t in topologies {
        let tdir = dir.join(dir_name(&t.name));
        let path = tdir.join("projection.manifest");
        let map = ProjectionMap::parse(&read(path.clone())?, t, &wiring)
            .map_err(|source| ArtifactError::Manifest { path, source })?;
        let mut sets = Vec::with_capacity(switches);
        for s in 0..switches {
            let path = tdir
                .join("rules")
                .join(format!("sw{s}.{}", format.extension()));
            sets.push(
                parse_rules(&read(path.clone())?)
                    .map_err(|source| ArtifactError::Rules { path, source })?,
            );
        }
        let routing = |source| ArtifactError::Routing {
            topology: t.name.clone(),
            source,
        };
        let router = routing_for(t, options.scheme).map_err(routing)?;
        let routes = route_all(&router).map_err(routing)?;
        let deadlock =
            assert_deadlock_free(&build_cdg(t, &routes, &router.vcs()).map_err(routing)?);
        loaded.push(LoadedTopology {
            topology: t.clone(),
            map,
            sets,
            routes,
            deadlock,
        });
    }
    Ok(LoadedDeployment {
        mode,
        wiring,
        topologies: loaded,
    })
}
