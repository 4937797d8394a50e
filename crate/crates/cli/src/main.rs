//! `linkproj` command-line front end.
//!
//! Exit codes: 0 success, 1 a feasibility or verification failure, 2 a
//! usage or configuration error. Log verbosity comes from `LINKPROJ_LOG`
//! (`error` .. `trace`, default `warn`).

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use linkproj::pipeline::{compile, load_deployment, ArtifactError};
use linkproj::projection::feasibility_check;

use config::{Overrides, Run};

#[derive(Debug, Parser)]
#[command(
    name = "linkproj",
    version,
    about = "Project logical topologies onto a few physical switches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Routing scheme for every topology.
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// Rule file format: native or oftext.
    #[arg(long, global = true)]
    format: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that every topology fits the inventory.
    Check,
    /// Compile and write wiring, projection and rule files.
    Deploy,
    /// Load the written files into the simulator and sweep them.
    Verify {
        /// Compile in memory instead of reading the output directory.
        #[arg(long)]
        rebuild: bool,
    },
}

enum Failure {
    /// Exit 1.
    Failed(String),
    /// Exit 2.
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn check(run: &Run) -> Result<(), Failure> {
    let mut ok = true;
    for t in &run.topologies {
        let findings = t.validate();
        if !findings.is_empty() {
            println!("topology {}: invalid\n{findings}", t.name);
            ok = false;
            continue;
        }
        let report = feasibility_check(t, &run.inventory, None, &run.options.template);
        print!("{report}");
        ok &= report.feasible;
    }
    if !ok {
        return Err(Failure::Failed("infeasible".into()));
    }
    match compile(&run.topologies, &run.inventory, &run.options) {
        Ok(d) => {
            println!(
                "joint wiring ({}): ok, parts capped at {} ports",
                d.mode.name(),
                d.part_capacity
            );
            print!("{}", d.capacity);
            if !d.capacity_ok() {
                return Err(Failure::Failed("rule tables overflow".into()));
            }
            Ok(())
        }
        Err(e) => {
            println!("joint wiring ({}): {e}", run.options.mode.name());
            Err(Failure::Failed("topologies do not fit together".into()))
        }
    }
}

fn deploy(run: &Run) -> Result<(), Failure> {
    let d = compile(&run.topologies, &run.inventory, &run.options)
        .map_err(|e| Failure::Failed(e.to_string()))?;
    let artifacts = d.artifacts(run.format);
    artifacts
        .write_to(&run.out)
        .with_context(|| format!("writing {}", run.out.display()))?;
    print!("{}", d.report(run.format));
    println!(
        "wrote {} files to {}",
        artifacts.files.len(),
        run.out.display()
    );
    if !d.capacity_ok() {
        return Err(Failure::Failed("rule tables overflow".into()));
    }
    Ok(())
}

fn verify(run: &Run, rebuild: bool) -> Result<(), Failure> {
    let report = if rebuild {
        let d = compile(&run.topologies, &run.inventory, &run.options)
            .map_err(|e| Failure::Failed(e.to_string()))?;
        d.verify().map_err(|e| Failure::Failed(e.to_string()))?
    } else {
        let loaded = match load_deployment(&run.out, &run.topologies, &run.options) {
            Ok(l) => l,
            Err(e @ (ArtifactError::Missing(_) | ArtifactError::Io { .. })) => {
                return Err(Failure::Usage(e.into()))
            }
            Err(e) => return Err(Failure::Failed(e.to_string())),
        };
        loaded
            .verify()
            .map_err(|e| Failure::Failed(e.to_string()))?
    };
    print!("{report}");
    if report.ok() {
        Ok(())
    } else {
        Err(Failure::Failed("verification failed".into()))
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let Some(path) = &cli.config else {
        return Err(Failure::Usage(anyhow::anyhow!("--config is required")));
    };
    let over = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        scheme: cli.scheme.clone(),
        format: cli.format.clone(),
    };
    let run = config::load(path, &over)?;
    match cli.command {
        Command::Check => check(&run),
        Command::Deploy => deploy(&run),
        Command::Verify { rebuild } => verify(&run, rebuild),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LINKPROJ_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Failed(msg)) => {
            eprintln!("linkproj: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("linkproj: {e:#}");
            ExitCode::from(2)
        }
    }
}
