//! Grounded task planning for simulated tabletop manipulation.
//!
//! The crate covers the whole loop: a deterministic multi-camera simulator,
//! the interleaved plan language, dataset synthesis, the grounding-to-3D
//! point-cloud pipeline, training objectives with analytic gradients, a
//! closed-loop executor with action chunking, and evaluation protocols.
pub mod config;
pub mod datagen;
pub mod eval;
pub mod executor;
pub mod geometry;
pub mod labels;
pub mod mask;
pub mod math;
pub mod objectives;
pub mod plan;
pub mod scene;
