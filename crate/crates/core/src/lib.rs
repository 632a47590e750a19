//! Certified upper bounds and sampled estimates for the Gromov-Hausdorff
//! propinquity and spectral propinquity of finite truncations of metric
//! spectral triples drawn from a one-parameter operator family.
//!
//! The desk-scale model is a polynomial path of Riemannian metrics on the
//! circle. The library is organized in layers:
//!
//! * [`metric`] - finite metric spaces, Lipschitz seminorms, states and the
//!   Monge-Kantorovich (Wasserstein-1) distance;
//! * [`transport`] - the deterministic transport-polytope simplex solver
//!   backing the Monge-Kantorovich distance, with optional exact rational
//!   pivoting;
//! * [`tunnel`] - direct-sum tunnels between Lipschitz seminorms, their
//!   extent and quotient-isometry defects;
//! * [`spectral`] - tracked eigenvalue/eigenvector branches of an operator
//!   family, truncation levels and graph-norm fields;
//! * [`metrical`] - the three-level metrical tunnel: module seminorm,
//!   partner vectors, Leibniz defects, covariant reach, the delta schedule
//!   and the spectral propinquity upper bound;
//! * [`circle`] - polynomial metric paths on the circle, geodesics,
//!   Lipschitz distance and discretized Dirac operators;
//! * [`experiment`] - manifest-driven pipelines and machine-readable
//!   reports shared with the command-line interface.

pub mod circle;
pub mod config;
pub mod experiment;
pub mod metric;
pub mod metrical;
pub mod sampling;
pub mod spectral;
pub mod transport;
pub mod tunnel;

pub use config::Tolerances;

/// Complex scalar used throughout the spectral layers.
pub type C64 = nalgebra::Complex<f64>;
