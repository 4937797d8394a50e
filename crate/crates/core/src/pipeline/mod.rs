//! End-to-end compilation: partition, wire, project, route, generate rules.
//!
//! Several topologies can be compiled against one inventory. In
//! [`DeployMode::Reconfigure`] they take turns on a single wiring, so the
//! wiring has to cover the element-wise maximum of their demands. In
//! [`DeployMode::CoDeploy`] they run side by side and the demands add up;
//! each topology gets its own ports and the rules keep them apart.

mod artifacts;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::partition::{fit_partition, PartitionError, PartitionParams, PartitionPlan};
use crate::projection::{
    plan_wiring, projection_hash, PhysicalSwitch, ProjectionError, ProjectionMap, Projector,
    Wiring, WiringDemand, WiringError,
};
use crate::routing::{
    assert_deadlock_free, build_cdg, DeadlockVerdict, Route, Router, RoutingError, RoutingScheme,
    VcAssignment,
};
use crate::rules::{
    capacity_check, compile_rules, merge_rulesets, CapacityReport, RuleError, RuleSet,
};
use crate::sim::{EquivalenceReport, IsolationVerdict, SimError, SimFabric};
use crate::topology::{LogicalTopology, SwitchIdx};

pub use artifacts::{dir_name, load_deployment, ArtifactError, Artifacts, LoadedDeployment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeployMode {
    /// One topology at a time on a shared wiring.
    #[default]
    Reconfigure,
    /// All topologies at once on disjoint ports.
    CoDeploy,
}

impl DeployMode {
    pub fn name(self) -> &'static str {
        match self {
            DeployMode::Reconfigure => "reconfigure",
            DeployMode::CoDeploy => "co-deploy",
        }
    }
}

impl FromStr for DeployMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reconfigure" => Ok(DeployMode::Reconfigure),
            "co-deploy" | "codeploy" => Ok(DeployMode::CoDeploy),
            other => Err(format!(
                "unknown deploy mode `{other}` (expected reconfigure or co-deploy)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompileOptions {
    /// Weights and seed; part count and capacity are chosen per run.
    pub template: PartitionParams,
    /// Overrides the family default for every topology.
    pub scheme: Option<RoutingScheme>,
    pub mode: DeployMode,
    /// Replace each rule set by its merged form.
    pub merge: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            template: PartitionParams::new(1, 0),
            scheme: None,
            mode: DeployMode::default(),
            merge: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("no topologies to compile")]
    NoTopologies,
    #[error("at most 255 topologies fit in the address tag, got {0}")]
    TooManyTopologies(usize),
    #[error("two topologies are named `{0}`")]
    DuplicateName(String),
    #[error("inventory is empty")]
    EmptyInventory,
    #[error("validate {topology}:\n{report}")]
    Invalid { topology: String, report: String },
    #[error("partition {topology}: {source}")]
    Partition {
        topology: String,
        source: PartitionError,
    },
    #[error("wiring: {0}")]
    Wiring(WiringError),
    #[error("project {topology}: {source}")]
    Projection {
        topology: String,
        source: ProjectionError,
    },
    #[error("route {topology}: {source}")]
    Routing {
        topology: String,
        source: RoutingError,
    },
    #[error("rules {topology}: {source}")]
    Rules { topology: String, source: RuleError },
}

#[derive(Debug, Clone)]
pub struct CompiledTopology {
    pub topology: LogicalTopology,
    pub tag: u8,
    pub plan: PartitionPlan,
    /// Physical switch of each part.
    pub placement: Vec<usize>,
    pub map: ProjectionMap,
    pub scheme: RoutingScheme,
    pub vcs: VcAssignment,
    pub routes: Vec<Route>,
    pub deadlock: DeadlockVerdict,
    pub hash: String,
    pub sets: Vec<RuleSet>,
    /// Table usage with this topology alone installed.
    pub capacity: CapacityReport,
}

#[derive(Debug, Clone)]
pub struct Deployment {
    pub mode: DeployMode,
    pub template: PartitionParams,
    pub wiring: Wiring,
    /// Per-part port cap the plans were cut with.
    pub part_capacity: usize,
    pub topologies: Vec<CompiledTopology>,
    /// In co-deploy mode, table usage with everything installed; in
    /// reconfigure mode, the worst topology.
    pub capacity: CapacityReport,
}

impl Deployment {
    pub fn capacity_ok(&self) -> bool {
        self.capacity.ok()
    }

    pub fn deadlock_free(&self) -> bool {
        self.topologies.iter().all(|c| c.deadlock.is_free())
    }

    pub fn topology(&self, name: &str) -> Option<&CompiledTopology> {
        self.topologies.iter().find(|c| c.topology.name == name)
    }
}

fn routing_for(
    t: &LogicalTopology,
    scheme: Option<RoutingScheme>,
) -> Result<Router<'_>, RoutingError> {
    match scheme {
        Some(s) => Router::new(t, s),
        None => Router::default_for(t),
    }
}

/// Routes for every ordered host pair. Adaptive schemes start from zero
/// load.
pub fn route_all(router: &Router) -> Result<Vec<Route>, RoutingError> {
    if router.scheme() == RoutingScheme::DragonflyAdaptive {
        let zero = crate::routing::uniform_load(router.topology(), 0);
        router.all_pairs(Some(&zero))
    } else {
        router.all_pairs(None)
    }
}

/// Demand of `plan` with part `p` on switch `place[p]` of `n`.
fn placed_demand(plan: &PartitionPlan, place: &[usize], n: usize) -> WiringDemand {
    let mut d = WiringDemand::new(n);
    for p in 0..plan.num_parts {
        d.hosts[place[p]] += plan.host_links[p];
        d.self_links[place[p]] += plan.internal_edges[p];
    }
    for (&(x, y), &c) in &plan.cut_edges_by_pair {
        let (a, b) = (place[x], place[y]);
        *d.inter.entry((a.min(b), a.max(b))).or_default() += c;
    }
    d
}

/// Every injective map of `k` parts into `n` switches, in lexicographic
/// order; only the identity when there are too many.
fn placements(k: usize, n: usize) -> Vec<Vec<usize>> {
    const LIMIT: usize = 720;
    let count = (n - k + 1..=n).product::<usize>();
    if k == 0 || count > LIMIT {
        return vec![(0..k).collect()];
    }
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(k: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for s in 0..n {
            if !cur.contains(&s) {
                cur.push(s);
                rec(k, n, cur, out);
                cur.pop();
            }
        }
    }
    rec(k, n, &mut cur, &mut out);
    out
}

/// Ports over budget summed over switches, then the busiest switch.
fn overflow(d: &WiringDemand, inventory: &[PhysicalSwitch]) -> (usize, usize) {
    let mut over = 0;
    let mut busiest = 0;
    for (i, sw) in inventory.iter().enumerate() {
        let need = d.ports_needed(i);
        over += need.saturating_sub(sw.num_ports as usize);
        busiest = busiest.max(need);
    }
    (over, busiest)
}

fn combine(acc: &mut WiringDemand, d: &WiringDemand, mode: DeployMode) {
    match mode {
        DeployMode::Reconfigure => acc.max_with(d),
        DeployMode::CoDeploy => acc.add(d),
    }
}

struct Joint {
    plans: Vec<PartitionPlan>,
    places: Vec<Vec<usize>>,
    wiring: Wiring,
    capacity: usize,
}

/// Looks for plans and placements whose combined demand can be cabled.
/// Starts with parts as large as the smallest switch and shrinks the cap
/// until the demands fit together or some topology no longer partitions.
fn joint_plan(
    topologies: &[LogicalTopology],
    inventory: &[PhysicalSwitch],
    template: &PartitionParams,
    mode: DeployMode,
) -> Result<Joint, PipelineError> {
    let n = inventory.len();
    let top = inventory
        .iter()
        .map(|s| s.num_ports as usize)
        .min()
        .unwrap_or(0);
    let mut last_err = None;
    let mut previous: Option<Vec<PartitionPlan>> = None;
    for cap in (1..=top).rev() {
        let mut plans = Vec::with_capacity(topologies.len());
        for t in topologies {
            if t.is_empty() {
                plans.push(PartitionPlan::single(t, 1));
                continue;
            }
            match fit_partition(t, n, cap, template) {
                Ok(p) => plans.push(p),
                Err(source) if cap == top => {
                    return Err(PipelineError::Partition {
                        topology: t.name.clone(),
                        source,
                    });
                }
                Err(_) => {
                    return Err(last_err.expect("a larger cap was tried"));
                }
            }
        }
        if previous.as_ref() == Some(&plans) {
            continue;
        }
        let mut acc = WiringDemand::new(n);
        let mut places = Vec::with_capacity(plans.len());
        for plan in &plans {
            let best = placements(plan.num_parts, n)
                .into_iter()
                .min_by_key(|place| {
                    let mut trial = acc.clone();
                    combine(&mut trial, &placed_demand(plan, place, n), mode);
                    overflow(&trial, inventory)
                })
                .expect("at least one placement");
            combine(&mut acc, &placed_demand(plan, &best, n), mode);
            places.push(best);
        }
        match plan_wiring(inventory, &acc) {
            Ok(wiring) => {
                if cap < top {
                    log::info!("demands fit together once parts were capped at {cap} ports");
                }
                return Ok(Joint {
                    plans,
                    places,
                    wiring,
                    capacity: cap,
                });
            }
            Err(e) => {
                log::debug!("part cap {cap}: {e}");
                last_err.get_or_insert(PipelineError::Wiring(e));
            }
        }
        previous = Some(plans);
    }
    Err(last_err.unwrap_or(PipelineError::EmptyInventory))
}

/// Compiles every topology onto `inventory`. Topology `i` gets address
/// tag `i + 1`.
pub fn compile(
    topologies: &[LogicalTopology],
    inventory: &[PhysicalSwitch],
    options: &CompileOptions,
) -> Result<Deployment, PipelineError> {
    if topologies.is_empty() {
        return Err(PipelineError::NoTopologies);
    }
    if topologies.len() > 255 {
        return Err(PipelineError::TooManyTopologies(topologies.len()));
    }
    if inventory.is_empty() {
        return Err(PipelineError::EmptyInventory);
    }
    for (i, t) in topologies.iter().enumerate() {
        if topologies[..i]
            .iter()
            .any(|o| dir_name(&o.name) == dir_name(&t.name))
        {
            return Err(PipelineError::DuplicateName(t.name.clone()));
        }
        let report = t.validate();
        if !report.is_empty() {
            return Err(PipelineError::Invalid {
                topology: t.name.clone(),
                report: report.to_string(),
            });
        }
    }
    let joint = joint_plan(topologies, inventory, &options.template, options.mode)?;
    let wiring = joint.wiring;
    let mut shared = Projector::new(&wiring);
    let mut compiled = Vec::with_capacity(topologies.len());
    for (i, ((t, plan), place)) in topologies
        .iter()
        .zip(joint.plans)
        .zip(joint.places)
        .enumerate()
    {
        let name = || t.name.clone();
        let mut own = Projector::new(&wiring);
        let projector = match options.mode {
            DeployMode::Reconfigure => &mut own,
            DeployMode::CoDeploy => &mut shared,
        };
        let placement: Vec<usize> = plan.assignment.iter().map(|&p| place[p]).collect();
        let map = projector
            .project_placed(t, &placement, plan.num_parts)
            .map_err(|source| PipelineError::Projection {
                topology: name(),
                source,
            })?;
        let router = routing_for(t, options.scheme).map_err(|source| PipelineError::Routing {
            topology: name(),
            source,
        })?;
        let routes = route_all(&router).map_err(|source| PipelineError::Routing {
            topology: name(),
            source,
        })?;
        let vcs = router.vcs();
        let cdg = build_cdg(t, &routes, &vcs).map_err(|source| PipelineError::Routing {
            topology: name(),
            source,
        })?;
        let deadlock = assert_deadlock_free(&cdg);
        let tag = (i + 1) as u8;
        let hash = projection_hash(t, &wiring, &map);
        let mut sets = compile_rules(t, &routes, &map, &wiring, tag, &hash).map_err(|source| {
            PipelineError::Rules {
                topology: name(),
                source,
            }
        })?;
        if options.merge {
            sets = merge_rulesets(&sets);
        }
        let capacity = capacity_check(&sets, &wiring.switches);
        compiled.push(CompiledTopology {
            topology: t.clone(),
            tag,
            plan,
            placement: place,
            map,
            scheme: router.scheme(),
            vcs,
            routes,
            deadlock,
            hash,
            sets,
            capacity,
        });
    }
    let capacity = match options.mode {
        DeployMode::CoDeploy => {
            let all: Vec<RuleSet> = compiled
                .iter()
                .flat_map(|c| c.sets.iter().cloned())
                .collect();
            capacity_check(&all, &wiring.switches)
        }
        DeployMode::Reconfigure => compiled
            .iter()
            .map(|c| c.capacity.clone())
            .max_by_key(|r| {
                (
                    !r.ok(),
                    r.rows.iter().map(|row| row.used).max().unwrap_or(0),
                )
            })
            .expect("at least one topology"),
    };
    Ok(Deployment {
        mode: options.mode,
        template: options.template.clone(),
        wiring,
        part_capacity: joint.capacity,
        topologies: compiled,
        capacity,
    })
}

/// What was installed for one topology and how it behaved.
#[derive(Debug, Clone)]
pub struct TopologyVerdict {
    pub topology: String,
    pub equivalence: EquivalenceReport,
    pub deadlock: DeadlockVerdict,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub mode: DeployMode,
    pub wiring_hash: String,
    pub topologies: Vec<TopologyVerdict>,
    /// Co-deploy mode only.
    pub isolation: Option<IsolationVerdict>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.topologies
            .iter()
            .all(|t| t.equivalence.ok() && t.deadlock.is_free())
            && self.isolation.as_ref().is_none_or(IsolationVerdict::ok)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# linkproj verify v1")?;
        writeln!(f, "mode {}", self.mode.name())?;
        writeln!(f, "wiring {}", self.wiring_hash)?;
        for t in &self.topologies {
            write!(f, "{}", t.equivalence)?;
            writeln!(f, "  routing {}", t.deadlock)?;
        }
        if let Some(iso) = &self.isolation {
            write!(f, "{iso}")?;
        }
        writeln!(f, "verdict {}", if self.ok() { "PASS" } else { "FAIL" })
    }
}

/// One topology's installable pieces.
#[derive(Debug, Clone)]
pub struct Bundle<'a> {
    pub topology: &'a LogicalTopology,
    pub map: &'a ProjectionMap,
    pub sets: &'a [RuleSet],
    pub routes: &'a [Route],
    pub deadlock: &'a DeadlockVerdict,
}

/// Installs bundles on a fabric built from `wiring` and sweeps them. In
/// reconfigure mode each bundle gets a fresh fabric over the same wiring;
/// in co-deploy mode all share one and are also checked for isolation.
pub fn verify_bundles(
    wiring: &Wiring,
    bundles: &[Bundle],
    mode: DeployMode,
) -> Result<VerifyReport, SimError> {
    let mut topologies = Vec::with_capacity(bundles.len());
    let mut isolation = None;
    match mode {
        DeployMode::Reconfigure => {
            for b in bundles {
                let mut fabric = SimFabric::load(b.topology, b.map, b.sets, wiring)?;
                topologies.push(TopologyVerdict {
                    topology: b.topology.name.clone(),
                    equivalence: fabric.equivalence_check(0, b.routes),
                    deadlock: b.deadlock.clone(),
                });
            }
        }
        DeployMode::CoDeploy => {
            let mut fabric = SimFabric::new(wiring.clone());
            for b in bundles {
                fabric.install(b.topology, b.map, b.sets)?;
            }
            for (i, b) in bundles.iter().enumerate() {
                topologies.push(TopologyVerdict {
                    topology: b.topology.name.clone(),
                    equivalence: fabric.equivalence_check(i, b.routes),
                    deadlock: b.deadlock.clone(),
                });
            }
            let groups: Vec<_> = (0..bundles.len()).map(|i| fabric.hosts(i)).collect();
            isolation = Some(fabric.isolation_check(&groups));
        }
    }
    Ok(VerifyReport {
        mode,
        wiring_hash: wiring.hash(),
        topologies,
        isolation,
    })
}

impl Deployment {
    pub fn bundles(&self) -> Vec<Bundle<'_>> {
        self.topologies
            .iter()
            .map(|c| Bundle {
                topology: &c.topology,
                map: &c.map,
                sets: &c.sets,
                routes: &c.routes,
                deadlock: &c.deadlock,
            })
            .collect()
    }

    pub fn verify(&self) -> Result<VerifyReport, SimError> {
        verify_bundles(&self.wiring, &self.bundles(), self.mode)
    }

    /// Logical switches of `topology` placed on each physical switch.
    pub fn switches_on(&self, topology: usize, switch: usize) -> Vec<SwitchIdx> {
        let c = &self.topologies[topology];
        c.topology
            .switch_indices()
            .filter(|s| c.map.placement[s.0] == switch)
            .collect()
    }
}
