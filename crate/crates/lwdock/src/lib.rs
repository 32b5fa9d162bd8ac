//! Learnware dock: a market of trained models, each described by a semantic
//! spec and a reduced kernel mean embedding of its training data.
//!
//! [`core`] holds the engine (specs, search, reuse, packaging and the
//! market), [`service`] the HTTP API and validator, and [`cli`] the `lwdock`
//! command.

pub mod cli;

pub use lwdock_core as core;
pub use lwdock_service as service;
