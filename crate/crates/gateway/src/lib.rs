//! Pipeline driver and HTTP/JSON service for jambayes.

pub mod cli;
pub mod files;
pub mod live;
pub mod pipeline;
pub mod server;
