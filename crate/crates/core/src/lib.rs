//! Core library for simulating the spatial spread of lung-cancer metastases.
//!
//! The pipeline turns a 3D volume into a blood-vessel flow graph and a
//! colonizable-tissue mask, evaluates a three-layer biophysical model
//! (tumor growth to vessel contact, in-stream transport, settlement) on a
//! uniform sampling grid and normalizes the result into a probability
//! heatmap. Synthetic phantoms with planted ground truth stand in for
//! clinical scans, and the Soft/Hard classifier scores compare a heatmap
//! against a truth mask.

pub mod biophysics;
pub mod error;
pub mod heatmap;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod rng;
pub mod segmentation;
pub mod vessel_graph;
pub mod volume;

pub use error::{Error, Result};

/// A point or displacement in millimeters.
pub type Vec3 = [f64; 3];
