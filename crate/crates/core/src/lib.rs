#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod control;
pub mod demand;
pub mod dynamics;
pub mod learn;
pub mod metrics;
pub mod net;
