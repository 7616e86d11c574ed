//! Numerical laboratory for complete Ricci-flat Kähler geometry.
//!
//! The crate is organised around sampled tensor fields on structured charts:
//!
//! * [`chart`] — discretised coordinate charts (flat tori, log-polar annuli,
//!   and annulus × torus products) with spectral/finite-difference calculus.
//! * [`field`] — scalar fields, Hermitian (1,1)-form coefficient fields,
//!   positive-definite metric fields and curvature tensors, plus their
//!   on-disk format.
//! * [`geometry`] — the discrete complex differential geometry kernel:
//!   `∂∂̄`, Ricci form, Riemann curvature, Monge-Ampère density, metric
//!   laplacian, integration and positivity diagnostics.
//! * [`solve`] — a continuity-method Newton solver for the complex
//!   Monge-Ampère equation on compact torus charts, together with the
//!   ε-perturbed variant and uniqueness diagnostics.
//! * [`model`] — explicit model metrics near a divisor (ample and
//!   semi-ample), their source functions, and asymptotic profiles
//!   (decay fits, completeness, volume growth, curvature decay).
//! * [`barrier`] — verification of the barrier-potential Monge-Ampère
//!   expansion and of power-law decay bounds near the divisor.

pub mod barrier;
pub mod chart;
pub mod error;
pub mod field;
pub mod fit;
pub mod geometry;
pub mod model;
pub mod solve;

pub use chart::{ChartKind, GridChart};
pub use error::{CalabiError, Result};
pub use field::{CurvatureField, Form11Field, MetricField, Parity, ScalarField};
