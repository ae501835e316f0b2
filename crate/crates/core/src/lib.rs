//! Numerical laboratory for complex Hénon maps of C².
//!
//! The crate is organised bottom-up:
//!
//! * [`map`]: Hénon factors and their compositions, inverses, derivatives and
//!   the escape filtration near infinity.
//! * [`potential`]: Green functions `G±`, the Böttcher coordinate and slices of
//!   `G⁺` over holomorphic disks.
//! * [`periodic`]: periodic orbit search, multipliers and the saddle census.
//! * [`manifolds`]: stable/unstable manifold series, unstable slices,
//!   homoclinic points and slice geometry.
//! * [`shadowing`]: pseudo-orbits along a homoclinic excursion, closing them
//!   into periodic orbits and the resulting multiplier asymptotics.
//! * [`ergodic`]: Lyapunov exponent estimators and Birkhoff statistics over
//!   saddle orbits.

pub mod ergodic;
pub mod error;
pub mod io;
pub mod manifolds;
pub mod map;
pub mod periodic;
pub mod potential;
pub mod precision;
pub mod shadowing;

pub use error::{Error, Result};
pub use map::{C2Point, ComposedAutomorphism, HenonFactor, Iterate, Mat2, C64};
pub use precision::{DoubleDouble, Precision};
