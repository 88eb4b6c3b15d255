//! Exact-arithmetic toolkit for constructible sheaf complexes on stratified
//! cell complexes: truncation and cone calculus, derived pushforwards and
//! Ext, the hypercohomology spectral sequence with its obstruction windows,
//! and the inductive construction of intersection-type complexes with their
//! Betti and duality analysis.

pub mod linalg;
pub mod sparse;
pub mod poset;
pub mod sheaf;
pub mod functors;
pub mod models;
pub mod spectral;
pub mod tower;
