use std::fmt;

use crate::projection::PhysicalSwitch;

use super::{merge_entries, RuleSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapacityRow {
    pub switch: String,
    pub used: usize,
    /// Rule count after [`merge_entries`].
    pub merged: usize,
    pub capacity: usize,
}

impl CapacityRow {
    pub fn fits(&self) -> bool {
        self.used <= self.capacity
    }
}

/// Ways out of a table overflow, in the order they should be tried.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mitigation {
    /// Merge entries; `fits` tells whether that alone is enough.
    Merge {
        fits: bool,
    },
    SplitTopology,
    AddSwitches {
        count: usize,
    },
}

impl fmt::Display for Mitigation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mitigation::Merge { fits: true } => f.write_str("merge entries (enough to fit)"),
            Mitigation::Merge { fits: false } => {
                f.write_str("merge entries (not enough on its own)")
            }
            Mitigation::SplitTopology => {
                f.write_str("split the topology and deploy the parts separately")
            }
            Mitigation::AddSwitches { count } => {
                write!(f, "add {count} switch(es) to spread the rules")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapacityReport {
    pub rows: Vec<CapacityRow>,
    pub suggestions: Vec<Mitigation>,
}

impl CapacityReport {
    pub fn ok(&self) -> bool {
        self.rows.iter().all(CapacityRow::fits)
    }
}

impl fmt::Display for CapacityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            let verdict = if r.fits() { "ok" } else { "overflow" };
            writeln!(
                f,
                "table {} used {} merged {} capacity {} {verdict}",
                r.switch, r.used, r.merged, r.capacity
            )?;
        }
        for s in &self.suggestions {
            writeln!(f, "suggest: {s}")?;
        }
        Ok(())
    }
}

/// Rules per physical switch (all rule sets on it summed) against table
/// capacity.
pub fn capacity_check(sets: &[RuleSet], inventory: &[PhysicalSwitch]) -> CapacityReport {
    let mut used = vec![0; inventory.len()];
    let mut merged = vec![0; inventory.len()];
    for s in sets {
        if s.switch < inventory.len() {
            used[s.switch] += s.len();
            merged[s.switch] += merge_entries(s).len();
        }
    }
    let rows: Vec<CapacityRow> = inventory
        .iter()
        .enumerate()
        .map(|(i, sw)| CapacityRow {
            switch: sw.id.clone(),
            used: used[i],
            merged: merged[i],
            capacity: sw.table_capacity,
        })
        .collect();
    let mut suggestions = Vec::new();
    if rows.iter().any(|r| !r.fits()) {
        let fits = rows.iter().all(|r| r.merged <= r.capacity);
        suggestions.push(Mitigation::Merge { fits });
        suggestions.push(Mitigation::SplitTopology);
        let total: usize = rows.iter().map(|r| r.merged).sum();
        let cap = inventory
            .iter()
            .map(|s| s.table_capacity)
            .min()
            .unwrap_or(1)
            .max(1);
        let count = total.div_ceil(cap).saturating_sub(inventory.len()).max(1);
        suggestions.push(Mitigation::AddSwitches { count });
    }
    CapacityReport { rows, suggestions }
}
