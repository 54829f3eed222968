//! Numerical laboratory for spectral concentration of damped quantum cat maps.
//!
//! The classical side works with hyperbolic toral automorphisms and
//! trigonometric observables: exact and sampled variances of Birkhoff sums,
//! moderate-deviation probabilities, and the pressure curve of the weighted
//! transfer operator together with its Legendre transform. The quantum side
//! builds damped propagators `Op_N(e^{-g}) U_N(κ)`, diagonalises them, and counts
//! decay rates that fall outside shrinking or fixed windows around the mean
//! damping.
//!
//! See `examples/` for one runnable walk-through per capability.

pub mod concentration;
pub mod deviation;
pub mod fourier;
pub mod lab;
pub mod quantum;
pub mod rng;
pub mod torus;
pub mod transfer;

pub use deviation::{DeviationEstimate, SpectralConstant, VarianceResult};
pub use torus::{Mode, ToralAutomorphism, TorusObservable, TorusPoint};
