//! File formats, a parallel Monte Carlo runner and the `c2ed2` command line
//! on top of [`c2ed2_core`].

pub mod app;
pub mod io;
pub mod render;
pub mod study;
