//! Computational harmonic analysis on finite metric measure spaces.
//!
//! The crate realizes, at desk scale, the constructive objects of the local
//! Hardy space / bmo theory on a finite space `(M, d, mu)`: discretisations
//! and covering multiplicities, Christ-style dyadic cube systems, atoms and
//! ions with their decompositions, the local maximal operators, and the
//! `bmo` / atomic `h1` norms (the latter computed exactly by linear
//! programming over the dual ball).
//!
//! Everything is immutable after construction and pure, so operations may be
//! invoked concurrently.  With the default `parallel` feature the per-point
//! loops of the maximal operators run on rayon; disabling the feature gives a
//! sequential build with identical results.

pub mod atoms;
pub mod dyadic;
pub mod maximal;
pub mod norms;
pub mod space;

mod par;

pub use space::{Ball, DoublingCache, DoublingReport, Net, Space, SpaceError};

/// Absolute comparison tolerance used throughout the crate.
pub const TOL: f64 = 1e-9;

/// `lhs <= rhs` up to the crate tolerance.
#[inline]
pub fn leq(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + TOL * rhs.abs().max(1.0)
}

/// `a == b` up to the crate tolerance.
#[inline]
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * a.abs().max(b.abs()).max(1.0)
}
