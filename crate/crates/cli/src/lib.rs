//! Mission runner and review server.

pub mod app;
pub mod check;
pub mod server;
