//! Crash-consistency simulator for a DRAM page cache backed by NVM and disk.
//!
//! A [`model::Schedule`] of writes, syncs, write-backs and a crash is run
//! through the simulated devices under one recovery [`recovery::Strategy`];
//! the [`oracle`] then decides whether every synced byte survived.
//! [`explorer`] does this for every schedule within a bound.

pub mod cases;
pub mod cli;
pub mod corpus;
pub mod devices;
pub mod explorer;
pub mod model;
pub mod oracle;
pub mod recovery;
pub mod trace;

pub use explorer::{run_one, ExploreConfig, World};
pub use model::{Event, Geometry, PageId, Schedule};
pub use oracle::Verdict;
pub use recovery::Strategy;
pub use trace::{format_trace, parse_trace};
