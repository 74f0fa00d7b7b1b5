//! Conformal-harmonic maps from a periodic 4-D lattice into space forms.
//!
//! The crate discretizes a compact 4-manifold as a periodic lattice carrying
//! an arbitrary metric, evaluates the conformally invariant fourth-order
//! energy of maps into a flat torus or a hyperbolic ball, and integrates its
//! gradient flow with energy-dissipation diagnostics.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod container;
pub mod energy;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod maps;
pub mod sampling;
pub mod spectral;
pub mod target;

pub use error::{Error, Result};
pub use geometry::{Background, CurvatureBundle, MetricField};
pub use grid::{Field, Grid4, Rank};
pub use maps::{MapField, PullbackOneForm, Section};
pub use target::SpaceForm;
