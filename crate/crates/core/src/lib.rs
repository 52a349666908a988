//! Reconstruction of the dielectric constant of buried targets from
//! multi-frequency backscatter data of a single incident plane wave.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`] holds the shared field containers and the wavenumber partition.
//! * [`forward`] solves the Lippmann-Schwinger equation with an FFT-applied
//!   volume operator and synthesizes plane data.
//! * [`propagation`] moves plane data between parallel planes with the
//!   angular spectrum and carries the half-space double-layer oracle.
//! * [`preprocess`] turns raw plane data into boundary data for the inversion.
//! * [`inversion`] is the globally convergent iteration itself.
//!
//! [`fft`], [`krylov`] and [`elliptic`] are numerical plumbing used by the
//! modules above.

pub mod elliptic;
pub mod error;
pub mod fft;
pub mod forward;
pub mod grid;
pub mod inversion;
pub mod krylov;
pub mod preprocess;
pub mod propagation;

pub use error::{Error, Result};
pub use grid::{
    ghz_to_k, build_partition, Coefficient, ComplexVolume, Grid2D, Grid3D, PlaneData, WaveConvention,
    WavenumberPartition, C64, C_MAX_DEFAULT,
};
