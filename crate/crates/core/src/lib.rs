//! Reason-then-restore image pipeline.
//!
//! * [`degrade`] synthesizes compositional degradations (fog, camera shake, rain,
//!   readout noise) with full ground truth and closed-form severity scores.
//! * [`diagnose`] recovers presence, severity and parameters from a degraded image
//!   and renders them as a structured report.
//! * [`restore`] inverts the degradations with a small parametric operator chain
//!   driven by a Gaussian policy seeded from the report.
//! * [`grpo`] tunes that policy with group-relative policy optimization, using a
//!   fidelity softmax as the policy proxy and severity reduction as the reward.
//! * [`datasetio`] writes reproducible datasets, annotations, and metric tables.

pub mod datasetio;
pub mod degrade;
pub mod diagnose;
pub mod error;
pub mod grpo;
pub mod imgcore;
pub mod restore;
pub mod scene;

pub use error::{Error, Result};
