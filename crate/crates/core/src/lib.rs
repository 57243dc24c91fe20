//! Global conservative solutions of the nonlinear variational wave equation
//!
//! ```text
//! v_tt - c(v) (c(v) v_x)_x + (v + v^3)/2 = 0
//! ```
//!
//! computed in characteristic coordinates. The physical problem is rewritten
//! as a semilinear hyperbolic system for the angle variables `w = 2 atan R`,
//! `z = 2 atan S` (with `R, S = v_t ± c v_x`), the stretch factors `p, q` and
//! `v` itself, posed on the plane of characteristic coordinates `(ξ, η)`.
//! All unknowns stay bounded through gradient blow-up, which is what allows
//! the solution to be continued as a conservative weak solution.
//!
//! Pipeline:
//!
//! 1. [`initdata`]: sample `(v0, v1)`, build the boundary curve `η = φ(ξ)`
//!    that is the image of `t = 0`.
//! 2. [`charsolver`]: march (or Picard-iterate) the semilinear system above
//!    the boundary curve.
//! 3. [`physmap`]: recover `t(ξ, η)`, `x(ξ, η)` and cut level sets `t = τ`.
//! 4. [`diagnostics`]: energy, energy measures, interaction potential,
//!    Lipschitz and Hölder checks, weak-form residual.
//!
//! [`refsolver`] is an independent finite-difference solver in physical
//! variables used as an oracle in the smooth regime.
//!
//! Throughout, `xi`/`eta` name the characteristic coordinates that are
//! written `X`/`Y` in file formats and configuration keys.

pub mod charsolver;
pub mod diagnostics;
pub mod error;
pub mod initdata;
pub mod physmap;
pub mod quad;
pub mod refsolver;
pub mod wavespeed;

pub use charsolver::{CharGrid, Domain, Lattice, State};
pub use error::{Error, Result};
pub use initdata::{BoundaryCurve, FunctionSpec, InitialData};
pub use physmap::TimeSlice;
pub use wavespeed::{SpeedBounds, WaveSpeed};
