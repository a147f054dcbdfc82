//! Blocked integer matrix multiplication driven by two-level Strassen
//! ("Strassen squared") instruction schedules.
//!
//! The crate is split along the dataflow of a 4x4-tile GeMM accelerator:
//!
//! - [`matrix`]: dense storage, padding and 4x4 tile-grid partitioning.
//! - [`schedule`]: generation and symbolic verification of bilinear schedules.
//! - [`microkernel`]: the exact widened-integer tile product.
//! - [`systolic`]: a cycle-level model of the shift-register / PE-grid tile core.
//! - [`engine`]: the blocked executor with its three outer loops.
//! - [`perfmodel`]: analytic cycle and GOPS prediction for the hardware kernel.
//! - [`bench`]: seeded timing runs and the CSV formats.
//!
//! With the default `parallel` feature the engine and the model sweep fan out
//! over rayon; without it every path runs sequentially.

pub mod bench;
pub mod engine;
pub mod error;
pub mod format;
pub mod matrix;
pub mod microkernel;
pub mod perfmodel;
pub mod scalar;
pub mod schedule;
pub mod systolic;

pub use engine::{gemm, Backend, EngineConfig};
pub use error::{Error, Result};
pub use matrix::{Matrix, TileGrid, TileRole, TileShape};
pub use microkernel::Tile;
pub use scalar::{Accumulator, ElemType, Element, Scalar};
pub use schedule::{Schedule, Sign};
