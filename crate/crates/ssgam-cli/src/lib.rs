//! Batch front end: configuration, CSV ingestion, fit/predict/summarize
//! commands, artifact writers, and bundled example-data generators.

pub mod archive;
pub mod artifacts;
pub mod commands;
pub mod config;
pub mod ingest;
pub mod simdata;
