//! Hybrid first/second-order Kuramoto model: simulation, equilibrium
//! enumeration, synchronization diagnostics and the single-oscillator
//! limit system.
//!
//! ```
//! use hybrid_kuramoto::prelude::*;
//!
//! let ens = Ensemble::new(1, vec![0.0, 1.0], vec![1.0, 1.0], vec![0.5, -0.5], 2.0).unwrap();
//! let state = State::at_rest(&ens, vec![0.0, 0.1]);
//! let traj = integrate(&ens, &state, &IntegratorConfig::rk4(1e-2, 1.0, 10)).unwrap();
//! assert_eq!(traj.samples.len(), 11);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod classifier;
pub mod diagnostics;
pub mod equilibria;
pub mod error;
pub mod integrator;
pub mod limit_system;
pub mod model;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::diagnostics::{order_parameter, DiagnosticsReport, OrderParameterSample};
    pub use crate::equilibria::{enumerate_equilibria, EquilibriumClass, EquilibriumSet};
    pub use crate::error::{Error, Result};
    pub use crate::integrator::{integrate, IntegratorConfig, Method, Trajectory};
    pub use crate::model::{normalize_frame, Ensemble, State};
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/integration.md")]
    mod integration {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/equilibria.md")]
    mod equilibria {}
    #[doc = include_str!("../../../book/src/classification.md")]
    mod classification {}
    #[doc = include_str!("../../../book/src/limit-system.md")]
    mod limit_system {}
}
