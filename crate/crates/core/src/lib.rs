//! Sparse random intersection graphs `G(n, m, P)`, clique algorithms for them,
//! balls-into-bins comparisons and a seeded Monte Carlo harness.

pub mod ballsbins;
pub mod cli;
pub mod cliques;
pub mod distributions;
pub mod harness;
pub mod instance;
pub mod oracles;
pub mod sdr;
pub mod theory;
