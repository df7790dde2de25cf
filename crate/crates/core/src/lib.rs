//! Test-time scaled GUI agent harness: geometry, dataset cleaning, a
//! simulated GUI environment, a click-reward GRPO grounding trainer, model
//! gateway clients and parsers, the agent loop, and evaluation drivers.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod dataset;
pub mod env;
pub mod gateway;
pub mod geometry;
pub mod grpo;
pub mod orchestrator;
pub mod seed;
