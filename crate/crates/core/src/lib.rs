//! Nonlinear waveform inversion for quantitative ultrasound.
//!
//! The crate simulates 2-D lossy Westervelt propagation with an explicit
//! three-level recurrence, differentiates a channel-data misfit through that
//! recurrence in one reverse sweep, and reconstructs speed-of-sound, density,
//! attenuation and nonlinearity maps with gradient-based optimizers. A
//! matrix-form linear-acoustics baseline lives in [`fwi`].
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line front end and the threaded worker pool are in the companion `nwi`
//! crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod acquisition;
pub mod adjoint;
mod error;
pub mod forward;
pub mod fwi;
pub mod gradcheck;
pub mod grid;
pub mod inversion;
pub(crate) mod math;
pub mod phantom;
pub mod scenario;
pub mod stencil;

pub use error::{Error, Result};
pub use grid::{ChannelData, Map2, ProbeGeometry, Property, PropertySet, SimulationGrid, Wavefield};
