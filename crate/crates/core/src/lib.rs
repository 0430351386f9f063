//! Pushdown exception-flow analysis for an object-oriented bytecode.

pub mod absint;
pub mod analysis;
pub mod agc;
pub mod concrete;
pub mod ir;
pub mod pds;
