pub mod augment;
pub mod data;
pub mod diagnostics;
pub mod genclient;
pub mod metrics;
pub mod model;
pub mod prompt;
pub mod runner;
pub mod seed;
