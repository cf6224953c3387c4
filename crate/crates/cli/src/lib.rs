//! The `semlens` command-line tool and HTTP service.

pub mod cli;
pub mod display;
pub mod server;
pub mod service;

pub use display::format_percent;
pub use service::{Service, ServiceError};
