//! Numerical certification of robust forward completeness (RFC) and bounded
//! reachability sets (BRS) for disturbed dynamical systems.
//!
//! The crate is organized around the objects that appear in the Lyapunov-based
//! characterization of RFC:
//!
//! * [`kfun`] — an algebra of comparison functions (class K-infinity) realized
//!   as strictly increasing piecewise-linear functions, together with the
//!   clipping family `G_k` and the unit-Lipschitz lower-bound construction.
//! * [`signal`] — piecewise-constant input/disturbance signals with shift and
//!   concatenation operators, signal norms, and finite disturbance families
//!   that approximate a norm ball of inputs.
//! * [`flow`] — a catalog of concrete control systems, an adaptive
//!   Runge-Kutta flow evaluator with blow-up detection, system-axiom checking,
//!   and flow Lipschitz-constant estimation.
//! * [`reach`] — reachability envelope estimation, its reduction to an
//!   additive `xi(r) + xi(t) + c` bound, RFC bound verification, and
//!   divergence probing for systems that are not RFC.
//! * [`lyap`] — the converse Lyapunov construction (pre-Lyapunov functions
//!   `V_k`, the summed candidate `W`, and its sandwich bounds) plus the direct
//!   checks: Dini-derivative dissipation, the exponential comparison
//!   principle, and the BRS certificate of the gated dissipation form.

pub mod flow;
pub mod kfun;
pub mod lyap;
pub mod reach;
pub mod signal;

pub use kfun::MonotoneFn;
pub use signal::{DisturbanceFamily, Signal};
