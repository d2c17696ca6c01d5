//! File formats, reports and the command-line front end for `koethe-core`.

pub mod cli;
pub mod files;
pub mod report;
