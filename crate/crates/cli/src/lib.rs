//! Read-only JSON service over a frozen pipeline run.

pub mod service;

pub use service::{bind, router, ServeError};
