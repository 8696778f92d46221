//! Real-time traffic analytics building blocks.
//!
//! The crate is organized as a pipeline: [`packet_io`] produces packet
//! records, [`flow`] aggregates them into bidirectional flows, [`features`]
//! turns each flow into a fixed-order numeric vector (histograms computed by
//! [`hist`]), [`dfa`] tokenizes HTTP payloads with a compiled transition
//! table, and [`forest`] trains and runs random-forest models. [`pipelines`]
//! wires these into traffic classification, SQLi/XSS detection and
//! cluster-assisted labeling.

pub mod packet_io;
pub mod flow;
pub mod hist;
pub mod features;
pub mod dfa;
pub mod forest;
pub mod pipelines;
