//! Computable amenability certificates on bounded-degree graphs.

pub mod canon;
pub mod cli;
pub mod extract;
pub mod folner;
pub mod generators;
pub mod graph;
pub mod hierarchy;
pub mod lp;
pub mod ratio;
pub mod spectra;
pub mod tiling;
