use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::routing::Vc;
use crate::topology::PortNo;

use super::{Action, DstMatch, FlowRule, HostAddr, Match, RuleSet, TABLE_ROUTE};

const HEADER: &str = "# linkproj rules v1";
const TOPOLOGY_MASK: &str = "ff:ff:ff:00:00:00";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExportFormat {
    /// Space-separated `key value` fields.
    #[default]
    Native,
    /// Flat `key=value,...` lines in the style of OpenFlow dumps.
    OfText,
}

impl ExportFormat {
    pub fn name(self) -> &'static str {
        match self {
            ExportFormat::Native => "native",
            ExportFormat::OfText => "oftext",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Native => "rules",
            ExportFormat::OfText => "oftext",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = RuleParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "native" => Ok(ExportFormat::Native),
            "oftext" => Ok(ExportFormat::OfText),
            other => Err(RuleParseError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleParseError {
    #[error("unknown rule format `{0}` (expected native or oftext)")]
    UnknownFormat(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("header says {stated} rules, file has {found}")]
    CountMismatch { stated: usize, found: usize },
}

fn err(line: usize, msg: impl Into<String>) -> RuleParseError {
    RuleParseError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn dst_text(d: DstMatch) -> String {
    match d {
        DstMatch::Host(a) => a.to_string(),
        DstMatch::Topology(tag) => format!(
            "{}/{TOPOLOGY_MASK}",
            HostAddr::new(tag, crate::topology::HostIdx(0))
        ),
    }
}

fn parse_addr(s: &str) -> Option<HostAddr> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 6 {
        return None;
    }
    let mut v = 0u64;
    for p in parts {
        if p.len() != 2 {
            return None;
        }
        v = (v << 8) | u64::from(u8::from_str_radix(p, 16).ok()?);
    }
    Some(HostAddr(v))
}

fn parse_dst(s: &str) -> Option<DstMatch> {
    match s.split_once('/') {
        Some((addr, TOPOLOGY_MASK)) => {
            let a = parse_addr(addr)?;
            (a.0 & 0xff_ffff == 0).then_some(DstMatch::Topology(a.tag()))
        }
        Some(_) => None,
        None => parse_addr(s).map(DstMatch::Host),
    }
}

fn parse_hex(s: &str) -> Option<u32> {
    u32::from_str_radix(s.strip_prefix("0x")?, 16).ok()
}

impl RuleSet {
    pub fn export(&self, format: ExportFormat) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER} format={}", format.name());
        let _ = writeln!(out, "# topology {}", self.topology);
        let _ = writeln!(out, "# switch {} index {}", self.switch_id, self.switch);
        let _ = writeln!(out, "# tag {} hosts {}", self.tag, self.num_hosts);
        let _ = writeln!(out, "# projection {}", self.projection_hash);
        let _ = writeln!(out, "# rules {}", self.len());
        for r in self.rules() {
            match format {
                ExportFormat::Native => native_line(&mut out, r),
                ExportFormat::OfText => oftext_line(&mut out, r),
            }
            out.push('\n');
        }
        out
    }
}

fn native_line(out: &mut String, r: &FlowRule) {
    let m = &r.matches;
    let _ = write!(
        out,
        "table {} priority {} in_port {}",
        r.table, r.priority, m.in_port
    );
    if let Some(meta) = m.metadata {
        let _ = write!(out, " metadata {meta:#010x}");
    }
    if let Some(d) = m.dst {
        let _ = write!(out, " dst {}", dst_text(d));
    }
    if let Some(vc) = m.vc {
        let _ = write!(out, " vc {vc}");
    }
    let _ = match r.action {
        Action::Drop => write!(out, " action drop"),
        Action::Admit { metadata } => write!(out, " action admit {metadata:#010x}"),
        Action::Output { port, set_vc: None } => write!(out, " action output {port}"),
        Action::Output {
            port,
            set_vc: Some(v),
        } => write!(out, " action output {port} set_vc {v}"),
    };
}

fn oftext_line(out: &mut String, r: &FlowRule) {
    let m = &r.matches;
    let _ = write!(
        out,
        "priority={},table={},in_port={}",
        r.priority, r.table, m.in_port
    );
    if let Some(meta) = m.metadata {
        let _ = write!(out, ",metadata={meta:#x}");
    }
    if let Some(d) = m.dst {
        let _ = write!(out, ",dl_dst={}", dst_text(d));
    }
    if let Some(vc) = m.vc {
        let _ = write!(out, ",vlan_pcp={vc}");
    }
    let _ = match r.action {
        Action::Drop => write!(out, ",actions=drop"),
        Action::Admit { metadata } => write!(
            out,
            ",actions=write_metadata:{metadata:#x},goto_table:{TABLE_ROUTE}"
        ),
        Action::Output { port, set_vc: None } => write!(out, ",actions=output:{port}"),
        Action::Output {
            port,
            set_vc: Some(v),
        } => write!(out, ",actions=set_field:{v}->vlan_pcp,output:{port}"),
    };
}

/// Reads a file written by [`RuleSet::export`] in either format.
pub fn parse_rules(text: &str) -> Result<RuleSet, RuleParseError> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| err(1, "empty file"))?;
    let format: ExportFormat = first
        .strip_prefix(HEADER)
        .and_then(|rest| rest.trim().strip_prefix("format="))
        .ok_or_else(|| err(1, "missing rules header"))?
        .parse()?;
    let mut set = RuleSet::new(0, "", "", 0, 0, "");
    let mut stated = None;
    let mut rules = Vec::new();
    for (i, line) in lines {
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix("# ") {
            let f: Vec<&str> = comment.split_whitespace().collect();
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| err(ln, format!("bad number `{s}`")))
            };
            match f[..] {
                ["topology", name] => set.topology = name.to_string(),
                ["switch", id, "index", idx] => {
                    set.switch_id = id.to_string();
                    set.switch = num(idx)?;
                }
                ["tag", tag, "hosts", hosts] => {
                    set.tag = u8::try_from(num(tag)?).map_err(|_| err(ln, "tag out of range"))?;
                    set.num_hosts = num(hosts)?;
                }
                ["projection", hash] => set.projection_hash = hash.to_string(),
                ["rules", n] => stated = Some(num(n)?),
                _ => return Err(err(ln, format!("unrecognized header `{line}`"))),
            }
            continue;
        }
        let rule = match format {
            ExportFormat::Native => parse_native(line),
            ExportFormat::OfText => parse_oftext(line),
        }
        .ok_or_else(|| err(ln, format!("malformed rule `{line}`")))?;
        rules.push(rule);
    }
    if let Some(stated) = stated {
        if stated != rules.len() {
            return Err(RuleParseError::CountMismatch {
                stated,
                found: rules.len(),
            });
        }
    }
    set.replace_rules(rules);
    Ok(set)
}

fn parse_native(line: &str) -> Option<FlowRule> {
    let (head, action) = line.split_once(" action ")?;
    let f: Vec<&str> = head.split_whitespace().collect();
    if f.len() % 2 != 0 {
        return None;
    }
    let (mut table, mut priority, mut m) = (None, None, Match::port(0));
    let mut has_port = false;
    for kv in f.chunks(2) {
        match kv[0] {
            "table" => table = Some(kv[1].parse().ok()?),
            "priority" => priority = Some(kv[1].parse().ok()?),
            "in_port" => {
                m.in_port = kv[1].parse().ok()?;
                has_port = true;
            }
            "metadata" => m.metadata = Some(parse_hex(kv[1])?),
            "dst" => m.dst = Some(parse_dst(kv[1])?),
            "vc" => m.vc = Some(kv[1].parse().ok()?),
            _ => return None,
        }
    }
    let a: Vec<&str> = action.split_whitespace().collect();
    let action = match a[..] {
        ["drop"] => Action::Drop,
        ["admit", meta] => Action::Admit {
            metadata: parse_hex(meta)?,
        },
        ["output", p] => Action::Output {
            port: p.parse().ok()?,
            set_vc: None,
        },
        ["output", p, "set_vc", v] => Action::Output {
            port: p.parse().ok()?,
            set_vc: Some(v.parse().ok()?),
        },
        _ => return None,
    };
    has_port.then_some(FlowRule {
        table: table?,
        priority: priority?,
        matches: m,
        action,
    })
}

fn parse_oftext(line: &str) -> Option<FlowRule> {
    let (head, actions) = line.split_once(",actions=")?;
    let (mut table, mut priority, mut m) = (None, None, Match::port(0));
    let mut has_port = false;
    for kv in head.split(',') {
        let (k, v) = kv.split_once('=')?;
        match k {
            "priority" => priority = Some(v.parse().ok()?),
            "table" => table = Some(v.parse().ok()?),
            "in_port" => {
                m.in_port = v.parse().ok()?;
                has_port = true;
            }
            "metadata" => m.metadata = Some(parse_hex(v)?),
            "dl_dst" => m.dst = Some(parse_dst(v)?),
            "vlan_pcp" => m.vc = Some(v.parse().ok()?),
            _ => return None,
        }
    }
    let parts: Vec<&str> = actions.split(',').collect();
    let output = |s: &str| -> Option<PortNo> { s.strip_prefix("output:")?.parse().ok() };
    let set_vc = |s: &str| -> Option<Vc> {
        s.strip_prefix("set_field:")?
            .strip_suffix("->vlan_pcp")?
            .parse()
            .ok()
    };
    let action = match parts[..] {
        ["drop"] => Action::Drop,
        [meta, goto] if goto == format!("goto_table:{TABLE_ROUTE}") => Action::Admit {
            metadata: parse_hex(meta.strip_prefix("write_metadata:")?)?,
        },
        [out] => Action::Output {
            port: output(out)?,
            set_vc: None,
        },
        [vc, out] => Action::Output {
            port: output(out)?,
            set_vc: Some(set_vc(vc)?),
        },
        _ => return None,
    };
    has_port.then_some(FlowRule {
        table: table?,
        priority: priority?,
        matches: m,
        action,
    })
}
