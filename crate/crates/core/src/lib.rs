//! Worst-case optimal joins under functional dependencies and degree bounds.

pub mod bounds;
pub mod chain;
pub mod csma;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod gen;
pub mod lattice;
pub mod lp;
pub mod normality;
pub mod query;
pub mod rational;
pub mod relation;
pub mod spec;
pub mod sm;

pub use error::{Error, Result};
