//! Embedding-table sharding for computational-storage recommendation serving.
//!
//! The crate covers the offline pipeline end to end:
//!
//! - [`trace`]: access-trace data model, file formats and a power-law synthesizer.
//! - [`stats`]: per-table access statistics (inverse CDF, pooling factor,
//!   tensor-train footprint curve) and the hardware profile consumed by the planner.
//! - [`tt`]: tensor-train compression of table regions and row reconstruction.
//! - [`planner`]: the cost model that assigns core types to devices, places tables
//!   and splits each table across DRAM, TT-compressed BRAM and SSD.
//! - [`remap`]: packed 32-bit address translation tables built from a plan.
//! - [`sim`]: trace-driven latency simulation and analytic core cycle models.
//! - [`pipeline`]: file-mediated stages used by the `screc` command line tool.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod pipeline;
pub mod planner;
pub mod remap;
pub mod sim;
pub mod stats;
pub mod trace;
pub mod tt;

pub use error::{Error, Result};

pub(crate) mod par {
    //! Order-preserving map that runs on rayon when the `parallel` feature is on.

    #[cfg(feature = "parallel")]
    pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }

    #[cfg(not(feature = "parallel"))]
    pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
    where
        F: Fn(&T) -> U,
    {
        items.iter().map(f).collect()
    }
}
