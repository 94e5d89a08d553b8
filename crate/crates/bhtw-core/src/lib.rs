//! Semiclassical simulation toolkit for one-dimensional Bose-Hubbard chains.
//!
//! The crate propagates ensembles of classical phase-space trajectories whose
//! initial conditions sample a Gaussian (coherent-state) Wigner distribution,
//! and evaluates first-order quantum corrections to occupation correlators via
//! cubic-noise "jump" terms — either as cumulative time integrals accumulated
//! along each trajectory (the production method) or as an explicit stochastic
//! unraveling with weighted jump events (a reference method for convergence
//! checks). On top of the trajectory engine sit transport observables
//! (dispersions, correlation transport distance, mixing entropy, temporal
//! variance of the occupation profile) and chaos diagnostics (finite-time
//! Lyapunov exponents from tangent-space evolution, power spectra, a spectral
//! form factor over the ensemble energies, and a linear eigenmode transform of
//! the hopping network).
//!
//! Units: time is measured in the reference unit `t0 = 1`; the hopping is
//! `J = c / t0` with `c = 2e-4` by default, and interaction/chemical-potential
//! strengths are usually specified as the ratios `U/J` and `mu/J`. Occupations
//! are rescaled so the coherent-state centers carry total number 1; each site
//! additionally carries the Gaussian vacuum width of the sampled distribution.
//!
//! Parallelism: ensemble propagation is data-parallel over trajectories. The
//! `parallel` feature (default) enables a rayon-backed driver; a sequential
//! driver is always available. Results are bit-identical across drivers and
//! worker counts because trajectory RNG streams are indexed per trajectory and
//! the ensemble reduction uses a fixed block tree (see [`exec`]).

pub mod analysis;
pub mod chaos;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod integrate;
pub mod model;
pub mod observables;
pub mod wigner;

pub use error::{CoreError, Result};
pub use model::{ChainParams, MuConvention, NumberPhaseState, Ordering, PhaseState};
