//! Concept-aware radiograph synthesis: clinical concept vectors,
//! concept-space perturbations, anatomy-preserving edit backends, dataset
//! construction and the evaluation metric suite.

pub mod concept;
pub mod dataset;
pub mod editor;
pub mod io;
pub mod metrics;
pub mod perturb;
pub mod report;
pub mod synth;
