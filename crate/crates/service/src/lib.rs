//! HTTP front end for blind ranking experiments.
//!
//! Each search is answered with one of the configured rank vectors, picked
//! at random and never disclosed in the response. Raters' clicks go to an
//! append-only log that the metrics endpoint (and the offline evaluator)
//! turn into per-method Success Index reports.

pub mod engine;
pub mod error;
pub mod http;

pub use engine::{
    assignments_path, replay_methods, ClickAck, ClickRequest, MethodAssignment, ResultItem, SearchResponse, Service,
    ServiceConfig,
};
pub use error::ServiceError;
pub use http::{router, serve};
