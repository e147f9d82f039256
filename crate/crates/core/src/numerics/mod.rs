//! Quadrature, root finding and the few special functions the analytic
//! layer needs beyond `statrs`.

mod quad;
mod root;
mod special;

pub use quad::{integrate, integrate_log_scale};
pub use root::{solve_increasing_convex, RootOptions};
pub use special::{exp_int_e1, ln_factorial, poisson_upper_tail};
