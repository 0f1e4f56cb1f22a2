//! HTTP service and command-line front end over `zeittafel-core`.

pub mod api;
pub mod cli;
