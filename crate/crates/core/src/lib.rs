//! Segmentation-aware predictive maintenance for multichannel sensor data.
//!
//! The crate covers the whole chain: CSV/NoC ingestion and a synthetic
//! regime-switching generator ([`data_io`]), shape-aware preprocessing
//! ([`prep`]), online ChangeFinder scoring and segmentation
//! ([`changefinder`]) with a deterministic parallel parameter search
//! ([`tuner`]), sliding-window featurization ([`windowing`]), from-scratch
//! detectors ([`detectors`]), soft-voting ensembles and evaluation
//! ([`ensemble`]), the Health Index ([`health`]) and the end-to-end
//! orchestration used by the `pdm` binary ([`pipeline`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod changefinder;
pub mod config;
pub mod data_io;
pub mod detectors;
pub mod ensemble;
pub mod error;
pub mod health;
pub mod kvtext;
pub mod pipeline;
pub mod prep;
pub mod seed;
pub mod stats;
pub mod tuner;
pub mod windowing;

pub use error::{Error, Result};
