//! Command-line and HTTP front ends for the `illumap` library.

pub mod cli;
pub mod ops;
pub mod serve;
