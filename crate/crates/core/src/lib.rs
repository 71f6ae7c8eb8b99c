pub mod clustering;
pub mod config;
pub mod digest;
pub mod llm;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod problem;
pub mod ranking;
pub mod sandbox;
pub mod seed;
pub mod submission;
pub mod testgen;
