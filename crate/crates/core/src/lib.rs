pub mod certify;
pub mod cli;
pub mod digraph;
pub mod signal;
pub mod simulate;
pub mod spectral;
