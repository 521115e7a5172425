//! Design, certification and benchmarking of contact-aware controllers for
//! linear complementarity systems (LCS).
//!
//! An LCS couples a linear ODE to a linear complementarity problem (LCP):
//!
//! ```text
//!     xdot = A_bar x + B u + D_bar lam + a
//!     0 <= lam  perp  E_bar x + F_bar lam + H u + c >= 0
//! ```
//!
//! The crate provides, bottom up:
//!
//! * [`lcp`]: Lemke pivoting and exhaustive active-set enumeration for LCPs.
//! * [`conic`]: a primal-dual interior-point solver for semidefinite programs,
//!   plus rank and nullspace helpers.
//! * [`model`]: LCS plant and controller types, loop closing, file formats.
//! * [`sim`]: time stepping of closed-loop (and selected nonlinear) plants.
//! * [`sos`]: sum-of-squares search for the uniqueness map W of the contact
//!   force term used by the controller and the certificate.
//! * [`certify`]: piecewise quadratic Lyapunov certification of fixed gains and
//!   alternation-based gain synthesis.
//! * [`bench`]: the example suite and the Monte Carlo success-rate runner
//!   (data-parallel with rayon under the `parallel` feature, with a sequential
//!   fallback that produces bit-identical results).

pub mod bench;
pub mod certify;
pub mod conic;
pub mod lcp;
pub mod model;
pub mod sim;
pub mod sos;
