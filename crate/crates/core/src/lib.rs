//! A transactional key-value engine that can commit blind writes without
//! executing them, together with the multiversion serialization graph
//! machinery used to check that doing so is safe.
//!
//! - [`history`]: schedules, version orders and their text formats.
//! - [`mvsg`]: serialization graphs, cycle checks, version order search.
//! - [`rules`]: the graph-level conditions for omitting a transaction's writes.
//! - [`pivot`]: fixed-size pivot version objects and the compressed check.
//! - [`engine`]: the concurrent engine.
//! - [`workload`]: YCSB-style transaction generators.
//! - [`bench`]: benchmark runs, sweeps and end-to-end verification.

pub mod bench;
pub mod engine;
pub mod history;
pub mod mvsg;
pub mod pivot;
pub mod rules;
pub mod workload;
