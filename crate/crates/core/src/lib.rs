//! Latency planning for pipelined split learning over multi-hop edge networks.
//!
//! A [`Scenario`] describes the model (per-layer work, activation and memory
//! profile), the client and server nodes and the links between them. The
//! planner picks cut layers, the server hosting each submodel and the
//! micro-batch size so that the per-round latency
//! `T_f + ceil((B - b) / b) * T_i` is as small as possible.
#![allow(clippy::needless_range_loop)]
// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bcd;
pub mod costmodel;
pub mod error;
pub mod microbatch;
pub mod mspgraph;
pub mod oracle;
pub mod pipesim;
pub mod relaxation;
pub mod scenario;
#[doc(hidden)]
pub mod testing;

pub use error::{Error, Result};
pub use scenario::{NodeKind, Scenario, SplitPlan, Topology};
