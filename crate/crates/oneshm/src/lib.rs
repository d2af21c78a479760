//! Empirical microlocal defect measures for sequences of oscillating and
//! concentrating fields on periodic grids.
//!
//! The library discretises three related objects that describe where the
//! energy of a weakly vanishing sequence `(u_n)` goes in phase space:
//!
//! * **H-measures** — directions only: mass on `Ω × S^{d-1}`;
//! * **semiclassical measures** — a single characteristic scale `(ω_n)`:
//!   mass on `Ω × R^d` (plus an atom at the origin of frequency space);
//! * **one-scale variants** — both at once: mass on `Ω × K`, where `K` is
//!   the compactification of `R^d ∖ {0}` by a sphere `Σ₀` of vanishing
//!   directions and a sphere `Σ∞` of escaping directions.
//!
//! Everything here is a finite-`n` surrogate: fields are sampled on a torus
//! grid, pairings are lattice sums over discrete Fourier coefficients, and
//! limits are estimated from traces over an index list. The crate provides
//!
//! * grids, fields, DFT plumbing, and smooth test functions ([`grid`],
//!   [`windows`]);
//! * the compactified shell, its test functions, and cell partitions
//!   ([`shell`]);
//! * generator families of oscillating/concentrating sequences
//!   ([`sequences`]);
//! * pairings, empirical measures, projections, and oscillation diagnostics
//!   ([`measures`]);
//! * Fourier multipliers, commutators and norm estimation ([`operators`]);
//! * symbols and weight functions of systems with a characteristic length,
//!   and localisation residuals ([`symbols`]);
//! * characteristic sets and compensated-compactness checks
//!   ([`compensation`]);
//! * a JSON-config experiment runner backing the thin CLI ([`config`],
//!   [`runner`]).
//!
//! Run `cargo run -p oneshm --example <name>` for end-to-end demonstrations
//! of each capability.

pub mod compensation;
pub mod config;
pub mod error;
pub mod grid;
pub mod measures;
pub mod operators;
pub mod runner;
pub mod sequences;
pub mod shell;
pub mod symbols;
pub mod windows;

pub use error::{Error, Result};
pub use grid::{
    dft_forward, dft_inverse, parseval_mass, pointwise_mul, Field, FreqCoeffs, PhysTestFn,
    SupportBox, TorusGrid,
};
