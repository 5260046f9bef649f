//! Numerical laboratory for quantized hyperbolic automorphisms of the two-torus.
//!
//! The crate builds the finite-dimensional propagator of a cat map, quantizes
//! smooth torus symbols through Weyl–Heisenberg translations, and provides the
//! measurement tools used by the experiments: eigenvector delocalization,
//! word operators of a partition of unity, porosity of interval sets and
//! discrete Fourier localization norms.

pub mod classical;
pub mod fup;
pub mod hilbert;
pub mod linalg;
pub mod observables;
pub mod propagator;
pub mod quantize;
pub mod stats;
pub mod words;

pub use num_complex::Complex64 as C64;

/// Dense complex matrix used for every operator on `H_N`.
pub type CMat = faer::Mat<C64>;
