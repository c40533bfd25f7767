// SPDX-License-Identifier: Apache-2.0

//! Correlation mining over human-thing usage logs.
//!
//! Usage events are turned into a spatio-temporal graph (locations, hour
//! bins, things) and a social graph (users, things). Random walks with
//! restart over both give a thing-to-thing relevance matrix, whose top-k
//! rows form the relational graph of things. That relevance, together with
//! structural and textual features, drives multi-label annotation.

pub mod annotate;
pub mod error;
pub mod evaluation;
pub mod event_log;
pub mod features;
pub mod graph_build;
pub mod periodicity;
pub mod pipeline;
pub mod rgt;
pub mod rwr;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
