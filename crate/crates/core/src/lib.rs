//! Online false discovery rate control when tests overlap in time or depend
//! on recent tests.
//!
//! Each test gets a level from outcomes outside its conflict set: tests
//! still running, or too close in the stream to be independent. See
//! [`engine::Engine`] for the driving protocol and [`harness`] for
//! simulated experiments.

mod error;

pub mod config;
pub mod conflict;
pub mod engine;
pub mod estimators;
pub mod gamma;
pub mod harness;
pub mod realdata;
pub mod simgen;
pub mod types;

pub use error::{Error, Result};
