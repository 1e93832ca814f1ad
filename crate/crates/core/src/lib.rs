//! Heavy ball momentum with cyclical step-sizes.
//!
//! The crate covers the full pipeline for quadratic (and locally quadratic)
//! minimization with a Hessian spectrum localized in a union of intervals:
//!
//! - [`chebyshev`]: Chebyshev kernels and a dense polynomial type with real root isolation.
//! - [`spectrum`]: eigenvalue supports and their derived parameters.
//! - [`rate`]: exact worst-case rate factors for arbitrary step-size cycles.
//! - [`minimax`]: optimal link polynomials by linear programming, with optimality certificates.
//! - [`tuning`]: closed-form and general-cycle parameter tuning.
//! - [`solvers`]: cyclical heavy ball and Chebyshev-type iterations recording traces.
//! - [`problems`]: quadratic and logistic objectives, synthetic data, a Jacobi eigensolver.
//! - [`bench`]: experiment configuration, orchestration and CSV output.

pub mod bench;
pub mod chebyshev;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod minimax;
pub mod problems;
pub mod rate;
pub mod solvers;
pub mod spectrum;
pub mod tuning;

pub use chebyshev::{cheb_t, cheb_u, poly_roots_in, Poly, PolyRoot};
pub use error::{Error, Result};
pub use minimax::{
    check_equioscillation, check_strong_optimality, closed_form_sigma2, closed_form_sigma3,
    solve_sigma_lp,
};
pub use problems::{ObjectiveInstance, ObjectiveKind};
pub use rate::{
    asymptotic_expansion, optimal_rate_k2, rate_factor, rate_report, sigma_cycle, sigma_sup,
    CycleParams, RateReport, Regime,
};
pub use solvers::{empirical_rate, run_cheby_semi_iterative, run_cyclic_cheby2, run_hbk, RunTrace};
pub use spectrum::{gap_params, two_interval_fit, GapParams, SpectrumSet};
pub use tuning::{momentum_from_sigma0, recover_cycle, tune_general, tune_k2, tune_phb};
