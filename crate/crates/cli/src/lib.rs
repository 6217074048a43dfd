//! Library side of the `ific` executable: batch commands and the live bridge.

pub mod commands;
pub mod live;
pub mod protocol;
pub mod server;
