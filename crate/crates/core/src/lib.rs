//! Fusion of trip diaries with transport-system data into labelled
//! travel-mode-choice instances, and an evaluation harness for classifiers
//! trained on them under feature-set ablation scenarios.

pub mod built_env;
pub mod car_model;
pub mod clock;
pub mod config;
pub mod env_features;
pub mod fusion;
pub mod geodesy;
pub mod geojson;
pub mod gtfs;
pub mod ml_harness;
pub mod pipeline;
pub mod spatial;
pub mod vehicle_flow;
pub mod router;
pub mod synth;
