//! Verb-focused contrastive pretraining at desk scale.
//!
//! The crate covers the whole pipeline: caption manifests and synthetic
//! corpora, hard-negative generation, negative calibration, embedding-table
//! encoders, the contrastive loss family with analytic gradients, a
//! deterministic SGD trainer, verb-focused evaluation, and packaged
//! experiments built from those pieces.

pub mod calibration;
pub mod corpus;
pub mod seeding;
pub mod encoders;
pub mod eval;
pub mod experiments;
pub mod losses;
pub mod textgen;
pub mod trainer;
pub mod vecops;
