pub mod error;
pub mod exec;
pub mod geometry;
pub mod measure;
pub mod quad;
pub mod rng;
pub mod partition;
pub mod stats;
pub mod resolution;
pub mod liploss;
pub mod skorokhod;
pub mod forest;
pub mod cli;
