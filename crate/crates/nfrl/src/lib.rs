//! Dataset loading, file formats and the `nfrl` command line tool.
//!
//! The learning itself lives in [`nfrl_core`]; this crate adds everything
//! that touches the file system or the clock.

pub mod cli;
pub mod io;
pub mod report;

pub use nfrl_core;

/// Wall-clock milliseconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(std::time::Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(std::time::Instant::now())
    }
}

impl nfrl_core::train::Clock for WallClock {
    fn now_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}
