//! Closed-loop evaluation harness for tool-augmented agents.
//!
//! Agents act through a sandboxed tool [`registry`], their calls are logged
//! as a [`trajectory`], and runs are scored with [`metrics`] and a visual
//! [`judge`].

pub mod agents;
pub mod args;
pub mod harness;
pub mod judge;
pub mod metrics;
pub mod paths;
pub mod registry;
pub mod sandbox;
pub mod tools;
pub mod trajectory;
