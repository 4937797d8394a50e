//! Topology projection: build logical network topologies on a handful of
//! physical switches by fixing the cabling first and mapping logical links
//! onto it, then carving sub-switches out of the physical ports with flow
//! rules.
//!
//! The crate is organized as a pipeline:
//!
//! * [`topology`] describes logical topologies and generates the usual
//!   datacenter families (fat-tree, dragonfly, mesh, torus).
//! * [`partition`] splits a topology across physical switches.
//! * [`projection`] plans the physical wiring and maps logical links and
//!   ports onto it.
//! * [`routing`] computes routes with virtual-channel assignments and checks
//!   deadlock freedom on the channel dependency graph.
//! * [`rules`] compiles a projection and its routes into per-switch flow
//!   tables.
//! * [`sim`] loads the compiled rules into a frame-level fabric model and
//!   verifies that it behaves like the logical topology.
//! * [`pipeline`] strings the stages together for one or more topologies
//!   sharing the same wiring.

pub mod partition;
pub mod pipeline;
pub mod projection;
pub mod routing;
pub mod rules;
pub mod sim;
pub mod topology;
