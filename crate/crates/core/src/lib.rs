//! Pointbased tilt-stability verification for second-order cone programs
//! `min f(x)  s.t.  g(x) ∈ Q` with polynomial data.

pub mod analyzer;
pub mod barrier;
pub mod catalog;
pub mod cli;
pub mod extreal;
pub mod harness;
pub mod linalg;
pub mod lorentz;
pub mod poly;
pub mod problem;
pub mod quadmin;
pub mod report;
pub mod subsolver;
pub mod variational;
