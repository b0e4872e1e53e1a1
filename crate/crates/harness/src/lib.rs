//! Command-line entry points and the HTTP session service.

pub mod api;
pub mod commands;
pub mod http;
pub mod render;
pub mod store;

pub use api::{ApiError, ErrorCode};
pub use store::{ServiceConfig, Store};
