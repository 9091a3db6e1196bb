pub mod autoencoder;
pub mod classifier;
pub mod config;
pub mod dataset;
pub mod grid;
pub mod nn;
pub mod nutrient;
pub mod pipeline;
pub mod registration;
pub mod report;
pub mod seg;
pub mod stats;
pub mod volume;
