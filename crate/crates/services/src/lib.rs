//! HTTP roles of an MTC deployment: CA, witness cosigner, mirror and
//! landmark distributor, plus typed clients for each.

pub mod api;
pub mod ca;
pub mod client;
pub mod cosigner;
pub mod distributor;
pub mod mirror;
pub mod cluster;
pub mod util;

pub use axum::Router;
