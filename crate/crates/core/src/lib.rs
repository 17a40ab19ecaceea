//! Hyperbolic region-caption alignment on the Lorentz model.
//!
//! Modules, bottom-up: [`grad`] (reverse-mode scalar autodiff), [`geometry`]
//! (Lorentz points, distances, entailment cones), [`objectives`] (losses),
//! [`fusion`] (language- and spatially-aware region embeddings), [`data`]
//! (regions, synthetic corpus, caption noise), and [`train`].

pub mod data;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod grad;
pub mod objectives;
pub mod train;

pub use data::{BBox, CaptionRecord, ConceptTree, SynonymMap};
pub use error::{Error, Result};
pub use geometry::{Angle, CurvatureParam, LorentzPoint};
pub use grad::{ParamSet, Tensor};
pub use objectives::LossReport;
pub use train::{ExperimentConfig, MetricsRecord, ModelState, Objective};
