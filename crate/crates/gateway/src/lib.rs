//! Command-line tools and HTTP gateway around `ori-core`.

pub mod backend;
pub mod cli;
pub mod config;
pub mod server;
pub mod synth;

pub use config::{EmbedderConfig, GatewayConfig};
pub use server::{app, AppState, ServerOptions, Snapshot};
