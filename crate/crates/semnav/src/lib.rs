//! File formats, batch harness, leaderboard and the live session service
//! around `semnav-core`.

pub mod bundled;
pub mod config;
pub mod formats;
pub mod harness;
pub mod leaderboard;
pub mod protocol;
pub mod server;
