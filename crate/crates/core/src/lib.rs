//! Evaluation engine for Assurance 2.0 cases.
//!
//! The crate covers the case model ([`graph`], [`template`]), the logical
//! assessment ([`structure`]), evidence weighing ([`confirmation`]),
//! probabilistic valuation ([`propagation`]), defeaters and residual doubt
//! ([`defeaters`]), the reliability bridge ([`reliability`]) and the case
//! document, report and rendering layer.

pub mod confirmation;
pub mod dashboard;
pub mod defeaters;
pub mod document;
pub mod evaluate;
pub mod graph;
pub mod propagation;
pub mod reliability;
pub mod render;
pub mod sentencing;
pub mod structure;
pub mod template;
