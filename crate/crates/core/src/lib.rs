//! Trace-driven simulation of on-device training on heterogeneous smartphone SoCs.
//!
//! The crate is split along the pipeline:
//!
//! * [`trace`] ingests battery logs, filters, resamples and augments them.
//! * [`soc`] models core clusters, enumerates execution choices, orders them by
//!   cost and prunes dominated profiles.
//! * [`energy`] converts battery drops into power/energy and keeps the per-device
//!   energy loan.
//! * [`engine`] is the per-device scheduler: admission, exploration and the
//!   interference-driven migration loop.
//! * [`flsim`] runs federated rounds over a trace corpus and compares policies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod engine;
pub mod flsim;
pub mod soc;
pub mod trace;
