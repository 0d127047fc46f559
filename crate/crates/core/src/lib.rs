//! Dual variational method for the Hamiltonian elliptic system
//! -Delta u = |v|^(q-1) v, -Delta v = |u|^(p-1) u with Neumann boundary
//! conditions on radial domains (balls, annuli, the interval).
//!
//! The crate provides:
//! - radial grids with quadrature exact for piecewise-linear profiles
//!   ([`grid`]);
//! - the zero-average inverse Neumann Laplacian, its compatibility-shifted
//!   variant, the coupling form, and the l = 1 mode solver ([`neumann`]);
//! - decreasing rearrangement, cumulative-sign flipping, the combined star
//!   transformation, and Schwarz symmetrization ([`rearrange`]);
//! - the dual energy functional, its gradient, the Nehari projection, and
//!   solution recovery ([`energy`]);
//! - least-energy minimization in the sublinear (pq < 1) and superlinear
//!   (pq > 1) regimes ([`minimize`]);
//! - an executable verification suite for the structural claims, including
//!   the Schwarz-symmetrization counterexample and the second-variation
//!   symmetry-breaking test ([`verify`]);
//! - CSV/JSON interchange ([`io`]).

pub mod energy;
pub mod error;
pub mod grid;
pub mod io;
pub mod minimize;
pub mod neumann;
pub mod rearrange;
pub mod verify;

pub use energy::{Diagnostics, DualPair, Exponents, Regime, SolutionPair};
pub use error::{Error, Result};
pub use grid::{make_grid, signed_power, unit_ball_volume, DomainKind, RadialFunction, RadialGrid};
pub use minimize::{minimize, minimize_sublinear, minimize_superlinear, star_polish, MinResult, MinimizeOptions};
pub use neumann::{
    apply_k, apply_k_cumulative, apply_k_t, bilinear_t, bilinear_t_diagnostic, radial_derivative,
    solve_mode1, Mode1Boundary, Mode1Solution,
};
pub use rearrange::{
    cell_profile, decreasing_rearrangement, flip, flip_profile, measure_coupling,
    profile_product_integral, resample, schwarz_symmetrization, star_profile, star_transform,
    DecreasingProfile, MeasureProfile,
};
pub use verify::{
    check_monotonicity, check_star_invariants, check_zero_simplicity, run_all,
    run_counterexample, second_variation_test, CheckReport, MatrixCell, SuiteReport, VerifyConfig,
};
