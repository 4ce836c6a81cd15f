//! Atomic reasoning orchestration: an engine that drives a completion backend
//! through fine-grained reasoning actions recorded in a tree, plus a
//! benchmark harness around it.

pub mod backend;
pub mod bench;
pub mod checker;
pub mod cli;
pub mod engine;
pub mod executor;
pub mod metrics;
pub mod model;
pub mod prompts;
pub mod router;
pub mod session;
pub mod sop;
