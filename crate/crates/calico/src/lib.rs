//! Trainable symbolic executor for compositional questions about scenes.
//!
//! A question is a small program tree (`program`) of typed operations
//! (select / filter / relate / query / verify / ...) executed against a scene
//! whose objects carry detector-style score vectors (`scene`). Every operation
//! scores objects by similarity between learned object embeddings and learned
//! concept vectors (`concepts`), so the whole executor is differentiable and
//! trainable end to end (`autodiff`, `train`). Two calibration mechanisms are
//! the point of the library:
//!
//! * concept calibration — a learned magnitude per (operation type, concept)
//!   that scales the cosine similarity, letting frequent concepts speak louder
//!   than rare ones (`concepts`);
//! * operation calibration — a BiLSTM over the linearized program that assigns
//!   each operation a weight in (0,1), used when an operation's dependency
//!   outputs are combined (`opcal`).
//!
//! The remaining modules support experiments at desk scale: `synth` generates
//! seeded corpora of scenes and questions with exact symbolic oracle answers,
//! and `perturb` removes low-weight operations from programs to measure how
//! much of a question the model actually uses.

pub mod autodiff;
pub mod concepts;
pub mod diagnostics;
pub mod error;
pub mod executor;
pub mod opcal;
pub mod perturb;
pub mod program;
pub mod scene;
pub mod stats;
pub mod synth;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
