//! Reconstruction of brush-written characters from overhead frames and
//! brush sensor logs, plus teacher/student comparison analytics.

pub mod compare;
pub mod fusion;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod segment;
pub mod skeleton;
pub mod synth;
