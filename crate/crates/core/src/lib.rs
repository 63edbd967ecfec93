//! Self-supervised feature learning for triangular meshes.
//!
//! Random surface walks serve as augmentations; a recurrent walk encoder is
//! trained with a contrastive (NT-Xent) loss combined with a K-means
//! clustering loss, and the learned features are evaluated by retrieval mAP
//! and a linear SVM.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`]: parsing, writing, normalisation, adjacency, synthetic shapes
//! * [`resample`]: quadric edge collapse and midpoint subdivision
//! * [`walker`]: random walks and walk batches
//! * [`nn`]: dense/GRU layers with hand-written backward passes, Adam
//! * [`losses`]: NT-Xent and the clustering loss
//! * [`pipeline`]: training schedule, inference, checkpoints
//! * [`eval`]: retrieval mAP and the one-vs-rest linear SVM

pub mod eval;
pub mod gradsuite;
pub mod losses;
pub mod manifest;
pub mod mesh;
pub mod nn;
pub mod pipeline;
pub mod real;
pub mod resample;
pub mod rng;
pub mod walker;

pub use mesh::{Adjacency, Mesh};
pub use real::Real;
