//! Command-line workflow for facetouch: synthetic data, feature
//! extraction, training, evaluation, prediction, correlation with Mullen
//! development rates, and the annotation API server.

pub mod commands;
pub mod config;
pub mod server;
