//! Numerical laboratory for damped nonlinear acoustic waves and their inverse problem.
// `!(x > 0.0)` guards deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod gauge;
pub mod covector;
pub mod linearization;
pub mod lorentz;
pub mod recovery;
pub mod wave;
pub mod tolerances;
pub mod transport;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/geometry.md")]
mod book_geometry {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/covectors.md")]
mod book_covectors {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/waves.md")]
mod book_waves {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/linearization.md")]
mod book_linearization {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/gauge.md")]
mod book_gauge {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/transport.md")]
mod book_transport {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/recovery.md")]
mod book_recovery {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
