//! Wire protocol, tick-loop service and command-line front end.

pub mod commands;
pub mod protocol;
pub mod server;
pub mod session;
