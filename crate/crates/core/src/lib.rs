//! Large deviations for the right-most particle of a branching random walk
//! and of its last-progeny-modified variant.
//!
//! The crate is `no_std` (it needs `alloc`) and is organised by concern:
//!
//! * [`models`] - the displacement, offspring and perturbation laws.
//! * [`convex`] - Legendre transform, tangency constants, speed and threshold.
//! * [`ratefn`] - the rate functions `Ψ_θ`, `Φ`, the branch rate `I_θ` and a
//!   variational cross-check for the lower tail.
//! * [`simulate`] - frontier growth, the modified maximum `R_n*`, the linear
//!   statistic `A_n(θ)` and smoothed tail estimators.
//! * [`oracle`] - exact dynamic programs on lattice models and brute-force
//!   enumeration for tiny generations.
//! * [`stats`] - two-sample Kolmogorov-Smirnov test.
//!
//! IO, configuration files and multi-threaded execution live in the `brwld`
//! companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod convex;
pub mod models;
pub mod numeric;
pub mod oracle;
pub mod ratefn;
pub mod simulate;
pub mod stats;

pub use convex::{ConvexError, ModelConstants};
pub use models::{
    BrwModel, DisplacementFamily, DisplacementModel, ModelError, OffspringModel, PerturbationFamily,
    PerturbationMeasure,
};
pub use ratefn::{Branch, RateCurve, RatePoint};
