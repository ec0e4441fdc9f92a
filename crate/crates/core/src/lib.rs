//! Coverage-feedback test input generation.
//!
//! A target program is compiled (C) or wrapped (Python) under coverage
//! instrumentation, fed generated stdin inputs, and the generation prompt is
//! refined from line and branch gaps until a coverage threshold or an
//! iteration cap is reached.

pub mod agents;
pub mod analyzer;
pub mod cache;
pub mod coverage;
pub mod model;
pub mod prompt;
pub mod harness;
pub mod driver;
pub mod bench;
