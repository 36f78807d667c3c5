//! Quantum dynamics of a charged particle around a thin magnetic flux line.
//!
//! The crate has two layers. A closed-form 1D layer (`modular`) handles
//! superposed Gaussian packets, free evolution, and displacement-operator
//! expectations at machine precision. A 2D lattice layer (`grid`,
//! `wavefunction`, `gauge`, `dynamics`, `observables`) evolves a wavefunction
//! under Peierls-coupled hopping with the flux encoded as link phases, and
//! measures gauge-invariant displacement and rotation expectations, velocity
//! distributions, and interference fringes. The companion CLI crate wires
//! both layers into reproducible experiment runs driven by plain-text
//! configs.

pub mod dynamics;
pub mod error;
pub mod gauge;
pub mod grid;
pub mod io;
pub mod modular;
pub mod observables;
pub mod wavefunction;

pub use error::{Error, Result};
pub use grid::Grid2D;
pub use wavefunction::{gaussian_packet, superpose, PacketSpec, WaveFunction};
