//! Example programs for the tsia-core task pool.

pub use tsia_core as core;
