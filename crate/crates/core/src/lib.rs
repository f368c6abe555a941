//! Superstatistics of labour productivity.
//!
//! GB2 heavy-tail fitting, the Pareto-index to demand-index algebra,
//! partition-function thermodynamics of the Boltzmann allocation of workers,
//! and a Monte Carlo check of the firm/worker tail relation.

#![allow(
    clippy::excessive_precision,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop
)]

pub mod cli;
pub mod gb2;
pub mod ingest;
pub mod optim;
pub mod quad;
pub mod ranksize;
pub mod simulate;
pub mod specfun;
pub mod superstat;
pub mod synth;
pub mod thermo;
