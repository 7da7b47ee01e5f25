#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expansivity;
pub mod foliation;
pub mod grid;
pub mod lattice;
pub mod map;
pub mod orbit;
pub mod quotient;
pub mod recurrence;
pub mod scenario;
pub mod semiconj;
pub mod shadow;
pub mod spectral;
pub mod torus;
