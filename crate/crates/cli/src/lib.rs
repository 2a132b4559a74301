//! Batch experiment runner: seeded trials, budget sweeps, CSV logs and the
//! oracle self-test.

pub mod output;
pub mod runner;
pub mod selftest;
