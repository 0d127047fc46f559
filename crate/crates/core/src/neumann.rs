//! The zero-average inverse Neumann Laplacian K, its translated variant K_t,
//! the coupling form T, and the l = 1 angular-mode solver.
//!
//! On radial domains the Neumann problem -Delta u = h, u_r = 0 on the
//! boundary, int u = 0 reduces to one dimension through the radial derivative
//! identity u_r(r) = -(I h)(r) r^(1-N) / (N omega_N). K is evaluated by double
//! cumulative integration: a prefix pass for I h and a suffix pass for the
//! values of u. The suffix pass uses the quadrature-adjoint weighting of the
//! reduced coupling integral, which makes the discrete integration-by-parts
//! identity int f K g = T(f, g) hold to roundoff; this keeps the energy
//! gradient, the Nehari identity, and the criticality residual exactly
//! consistent with each other on the grid.

use crate::error::{Error, Result};
use crate::grid::{signed_power, DomainKind, RadialFunction};

/// Relative tolerance (times ||h||_inf |Omega|) for the zero-average
/// precondition of [`apply_k`].
pub const ZERO_AVERAGE_TOL: f64 = 1e-8;

fn require_zero_average(h: &RadialFunction) -> Result<()> {
    let integral = h.integrate();
    let tolerance = ZERO_AVERAGE_TOL * h.sup_norm() * h.grid().total_measure();
    if integral.abs() > tolerance && h.sup_norm() > 0.0 {
        return Err(Error::NonZeroAverage {
            integral,
            tolerance,
        });
    }
    Ok(())
}

/// Radial derivative profile of K h: u_r(r_i) = -(I h)(r_i) r_i^(1-N) / (N omega_N),
/// with the boundary values forced to 0 (and u_r(0) = 0 on balls).
pub fn radial_derivative(h: &RadialFunction) -> RadialFunction {
    let grid = h.grid();
    let cum = h.cumulative_integral();
    let n = grid.len();
    let dim = grid.dimension() as i32;
    let mut values = vec![0.0; n];
    for (i, &r) in grid.nodes().iter().enumerate() {
        if i == 0 || i == n - 1 {
            continue;
        }
        values[i] = match grid.kind() {
            DomainKind::Interval => -cum.values()[i],
            _ => -cum.values()[i] * r.powi(1 - dim) / (dim as f64 * grid.omega_n()),
        };
    }
    RadialFunction::new(grid.clone(), values).expect("derivative profile is finite")
}

/// K h: the unique zero-average solution of -Delta u = h with Neumann data.
///
/// Requires int h = 0 within [`ZERO_AVERAGE_TOL`]. The output integrates to
/// zero to roundoff and satisfies int f (K h) = T(f, h) exactly for every f.
pub fn apply_k(h: &RadialFunction) -> Result<RadialFunction> {
    require_zero_average(h)?;
    let grid = h.grid();
    let n = grid.len();
    let cum = h.cumulative_integral();
    let reduced = grid.reduced_weights();

    // y_j = reduced_j * (I h)_j ; suffix sums over nodes strictly above cell k.
    let mut suffix = vec![0.0; n];
    let mut acc = 0.0;
    for j in (0..n).rev() {
        acc += reduced[j] * cum.values()[j];
        suffix[j] = acc;
    }
    let mut values = vec![0.0; n];
    for k in 0..n - 1 {
        let y = suffix[k + 1];
        values[k] += grid.cell_left()[k] * y;
        values[k + 1] += grid.cell_right()[k] * y;
    }
    for (v, w) in values.iter_mut().zip(grid.weights()) {
        *v /= w;
    }
    Ok(RadialFunction::new(grid.clone(), values)?.project_zero_average())
}

/// Independent evaluation of K h by plain trapezoidal integration of the
/// radial derivative profile. Used as a cross-check oracle against
/// [`apply_k`]; the two agree to second order in the node spacing.
pub fn apply_k_cumulative(h: &RadialFunction) -> Result<RadialFunction> {
    require_zero_average(h)?;
    let grid = h.grid();
    let der = radial_derivative(h);
    let nodes = grid.nodes();
    let mut values = vec![0.0; grid.len()];
    let mut acc = 0.0;
    for k in 0..grid.len() - 1 {
        acc += 0.5 * (der.values()[k] + der.values()[k + 1]) * (nodes[k + 1] - nodes[k]);
        values[k + 1] = acc;
    }
    Ok(RadialFunction::new(grid.clone(), values)?.project_zero_average())
}

/// Shifts `y` by the unique constant c making int |y + c|^(t-1) (y + c) = 0.
///
/// The signed-power integral is continuous and strictly increasing in c, so
/// bisection on [-||y||_inf, ||y||_inf] always converges.
pub fn compatibility_shift(y: &RadialFunction, t: f64) -> Result<(RadialFunction, f64)> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("exponent t = {t} invalid")));
    }
    let scale = y.sup_norm();
    if scale == 0.0 {
        return Ok((y.clone(), 0.0));
    }
    let weights = y.grid().weights();
    let compat = |c: f64| -> f64 {
        weights
            .iter()
            .zip(y.values())
            .map(|(w, &v)| w * signed_power(v + c, t))
            .sum()
    };
    let (mut lo, mut hi) = (-scale, scale);
    if compat(lo) > 0.0 || compat(hi) < 0.0 {
        // Cannot happen for finite inputs; guard against NaN arithmetic.
        return Err(Error::Numerical(
            "signed-power bracket failed in compatibility shift".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if compat(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-16 * scale.max(1.0) {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    Ok((y.map(|v| v + c)?, c))
}

/// K_t h = K h + c_t(h), with c_t fixed by int |K_t h|^(t-1) K_t h = 0.
/// Returns the translated solution and the constant.
pub fn apply_k_t(h: &RadialFunction, t: f64) -> Result<(RadialFunction, f64)> {
    let u = apply_k(h)?;
    compatibility_shift(&u, t)
}

/// The coupling form T(f, g) = int g K f, evaluated in the reduced radial form
/// (N omega_N)^{-1} int_delta^1 (I f)(I g) r^(1-N) dr.
///
/// Symmetric by construction and nonnegative on the diagonal.
pub fn bilinear_t(f: &RadialFunction, g: &RadialFunction) -> Result<f64> {
    f.check_same_grid(g)?;
    require_zero_average(f)?;
    require_zero_average(g)?;
    Ok(bilinear_t_unchecked(f, g))
}

pub(crate) fn bilinear_t_unchecked(f: &RadialFunction, g: &RadialFunction) -> f64 {
    let grid = f.grid();
    let cf = f.cumulative_integral();
    let cg = g.cumulative_integral();
    grid.reduced_weights()
        .iter()
        .zip(cf.values().iter().zip(cg.values()))
        .map(|(e, (a, b))| e * a * b)
        .sum()
}

/// Both routes to T(f, g): the reduced radial form and the direct form
/// int g (K f) with K evaluated by the independent cumulative route.
#[derive(Debug, Clone, Copy)]
pub struct CouplingDiagnostic {
    pub reduced: f64,
    pub direct: f64,
    pub relative_gap: f64,
}

/// Cross-checks the two T evaluations; `tol` is the acceptable relative gap
/// (1e-6 by default in callers).
pub fn bilinear_t_diagnostic(f: &RadialFunction, g: &RadialFunction) -> Result<CouplingDiagnostic> {
    let reduced = bilinear_t(f, g)?;
    let direct = g.inner(&apply_k_cumulative(f)?)?;
    let relative_gap = (reduced - direct).abs() / (1.0 + reduced.abs());
    Ok(CouplingDiagnostic {
        reduced,
        direct,
        relative_gap,
    })
}

/// Boundary conditions for the l = 1 angular mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode1Boundary {
    /// w'(1) = 0 (and w'(delta) = 0 on annuli); w(0) = 0 on balls.
    Neumann,
    /// w(1) = 0 (and w(delta) = 0 on annuli); w(0) = 0 on balls.
    Dirichlet,
}

/// Radial profile of an antisymmetric solution w(r) x_1 / r.
#[derive(Debug, Clone)]
pub struct Mode1Solution {
    pub w: RadialFunction,
    pub boundary: Mode1Boundary,
    /// Max interior residual of the discrete ODE.
    pub residual: f64,
}

/// Solves -w'' - (N-1) w'/r + (N-1) w/r^2 = h on (delta, 1) with the requested
/// boundary conditions, by second-order finite differences.
///
/// For data of the separable form h(r) x_1 / r this is the Neumann or
/// Dirichlet problem for the l = 1 angular mode. Balls impose w(0) = 0 (the
/// regular r-branch of the mode); the interval domain is unsupported.
pub fn solve_mode1(h: &RadialFunction, boundary: Mode1Boundary) -> Result<Mode1Solution> {
    let grid = h.grid();
    if grid.kind().is_interval() {
        return Err(Error::UnsupportedDomain {
            operation: "mode-1 solve",
            domain: "interval",
        });
    }
    let n = grid.len();
    let nodes = grid.nodes();
    let dr = nodes[1] - nodes[0];
    let dim = grid.dimension() as f64;
    let c1 = dim - 1.0;

    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = h.values().to_vec();

    for i in 1..n - 1 {
        let r = nodes[i];
        lower[i] = -1.0 / (dr * dr) + c1 / (2.0 * r * dr);
        diag[i] = 2.0 / (dr * dr) + c1 / (r * r);
        upper[i] = -1.0 / (dr * dr) - c1 / (2.0 * r * dr);
    }

    let ball = matches!(grid.kind(), DomainKind::Ball { .. });
    if ball {
        diag[0] = 1.0;
        upper[0] = 0.0;
        rhs[0] = 0.0;
    } else {
        match boundary {
            Mode1Boundary::Neumann => {
                // ghost node w_{-1} = w_1 across the inner boundary
                let r = nodes[0];
                diag[0] = 2.0 / (dr * dr) + c1 / (r * r);
                upper[0] = -2.0 / (dr * dr);
            }
            Mode1Boundary::Dirichlet => {
                diag[0] = 1.0;
                upper[0] = 0.0;
                rhs[0] = 0.0;
            }
        }
    }
    match boundary {
        Mode1Boundary::Neumann => {
            let r = nodes[n - 1];
            diag[n - 1] = 2.0 / (dr * dr) + c1 / (r * r);
            lower[n - 1] = -2.0 / (dr * dr);
        }
        Mode1Boundary::Dirichlet => {
            diag[n - 1] = 1.0;
            lower[n - 1] = 0.0;
            rhs[n - 1] = 0.0;
        }
    }

    // Thomas algorithm
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    if diag[0] == 0.0 {
        return Err(Error::Numerical("singular mode-1 system".into()));
    }
    cp[0] = upper[0] / diag[0];
    dp[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * cp[i - 1];
        if m == 0.0 || !m.is_finite() {
            return Err(Error::Numerical("singular mode-1 system".into()));
        }
        cp[i] = upper[i] / m;
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / m;
    }
    let mut w = vec![0.0; n];
    w[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        w[i] = dp[i] - cp[i] * w[i + 1];
    }

    let mut residual = 0.0_f64;
    for i in 1..n - 1 {
        let r = nodes[i];
        let lhs = -(w[i + 1] - 2.0 * w[i] + w[i - 1]) / (dr * dr)
            - c1 * (w[i + 1] - w[i - 1]) / (2.0 * r * dr)
            + c1 * w[i] / (r * r);
        residual = residual.max((lhs - h.values()[i]).abs());
    }

    Ok(Mode1Solution {
        w: RadialFunction::new(grid.clone(), w)?,
        boundary,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, DomainKind};
    use approx::assert_relative_eq;

    fn ball3(n: usize) -> std::sync::Arc<crate::grid::RadialGrid> {
        make_grid(DomainKind::Ball { dimension: 3 }, n).unwrap()
    }

    #[test]
    fn k_of_zero_is_zero() {
        let g = make_grid(DomainKind::Interval, 64).unwrap();
        let u = apply_k(&RadialFunction::zeros(g)).unwrap();
        assert_eq!(u.sup_norm(), 0.0);
    }

    #[test]
    fn k_closed_form_interval() {
        // h(x) = x  =>  K h = x/2 - x^3/6 (Neumann data, zero average)
        let g = make_grid(DomainKind::Interval, 4096).unwrap();
        let h = RadialFunction::from_fn(g.clone(), |x| x).unwrap();
        let u = apply_k(&h).unwrap();
        let expect = RadialFunction::from_fn(g, |x| x / 2.0 - x.powi(3) / 6.0).unwrap();
        let err = u
            .values()
            .iter()
            .zip(expect.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-6, "max error {err}");
    }

    #[test]
    fn k_closed_form_ball3() {
        // h(r) = 3 - 5 r^2  =>  K h = r^4/4 - r^2/2 + 27/140
        let g = ball3(4096);
        let h = RadialFunction::from_fn(g.clone(), |r| 3.0 - 5.0 * r * r).unwrap();
        let u = apply_k(&h).unwrap();
        let expect =
            RadialFunction::from_fn(g, |r| r.powi(4) / 4.0 - r * r / 2.0 + 27.0 / 140.0).unwrap();
        let err = u
            .values()
            .iter()
            .zip(expect.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-6, "max error {err}");
    }

    #[test]
    fn k_derivative_profile_matches_closed_form() {
        // Same data as above: u_r = r^3 - r.
        let g = ball3(2048);
        let h = RadialFunction::from_fn(g.clone(), |r| 3.0 - 5.0 * r * r).unwrap();
        let der = radial_derivative(&h);
        assert_eq!(der.values()[0], 0.0);
        assert_eq!(der.values()[g.len() - 1], 0.0);
        for (i, &r) in g.nodes().iter().enumerate().skip(1).take(g.len() - 2) {
            assert!((der.values()[i] - (r.powi(3) - r)).abs() < 1e-6);
        }
    }

    #[test]
    fn k_rejects_nonzero_average() {
        let g = ball3(128);
        let h = RadialFunction::from_fn(g, |_| 1.0).unwrap();
        assert!(matches!(apply_k(&h), Err(Error::NonZeroAverage { .. })));
    }

    #[test]
    fn k_output_zero_average() {
        let g = ball3(257);
        let h = RadialFunction::from_fn(g, |r| (3.0 * r).sin())
            .unwrap()
            .project_zero_average();
        let u = apply_k(&h).unwrap();
        assert!(u.integrate().abs() <= 1e-12 * (1.0 + u.sup_norm()));
    }

    #[test]
    fn pairing_identity_exact() {
        // int f (K g) computed with hat weights equals the reduced form.
        let g = make_grid(
            DomainKind::Annulus {
                dimension: 2,
                inner_radius: 0.3,
            },
            257,
        )
        .unwrap();
        let f = RadialFunction::from_fn(g.clone(), |r| (7.0 * r).cos())
            .unwrap()
            .project_zero_average();
        let h = RadialFunction::from_fn(g, |r| r * r - r)
            .unwrap()
            .project_zero_average();
        let direct = f.inner(&apply_k(&h).unwrap()).unwrap();
        let reduced = bilinear_t(&h, &f).unwrap();
        assert_relative_eq!(direct, reduced, max_relative = 1e-12);
    }

    #[test]
    fn k_grid_convergence_second_order() {
        let mut errs = Vec::new();
        for n in [512usize, 1024, 2048, 4096] {
            let g = ball3(n);
            let h = RadialFunction::from_fn(g.clone(), |r| 3.0 - 5.0 * r * r).unwrap();
            let u = apply_k(&h).unwrap();
            let err = g
                .nodes()
                .iter()
                .zip(u.values())
                .fold(0.0_f64, |m, (&r, &v)| {
                    m.max((v - (r.powi(4) / 4.0 - r * r / 2.0 + 27.0 / 140.0)).abs())
                });
            errs.push(err);
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "order {order}, errors {errs:?}");
        }
    }

    #[test]
    fn k_t_trivial_and_odd_cases() {
        let g = make_grid(DomainKind::Interval, 1024).unwrap();
        // h = 0 -> shift 0
        let (u, c) = apply_k_t(&RadialFunction::zeros(g.clone()), 2.0).unwrap();
        assert_eq!(u.sup_norm(), 0.0);
        assert_eq!(c, 0.0);

        // t = 1: the compatibility integral is the plain average, so c = 0.
        let h = RadialFunction::from_fn(g.clone(), |x| x).unwrap();
        let (_, c) = apply_k_t(&h, 1.0).unwrap();
        assert!(c.abs() < 1e-13);

        // t = 3 with odd K h: oddness forces the root at 0.
        let (u, c) = apply_k_t(&h, 3.0).unwrap();
        assert!(c.abs() < 1e-13, "c = {c}");
        let compat: f64 = g
            .weights()
            .iter()
            .zip(u.values())
            .map(|(w, &v)| w * signed_power(v, 3.0))
            .sum();
        assert!(compat.abs() <= 1e-10 * u.sup_norm().powi(3) * g.total_measure() + 1e-300);
    }

    #[test]
    fn k_t_compatibility_for_fractional_exponents() {
        let g = ball3(257);
        let h = RadialFunction::from_fn(g.clone(), |r| (5.0 * r).sin() - r)
            .unwrap()
            .project_zero_average();
        for t in [0.5, 2.0, 3.7] {
            let (u, _) = apply_k_t(&h, t).unwrap();
            let compat: f64 = g
                .weights()
                .iter()
                .zip(u.values())
                .map(|(w, &v)| w * signed_power(v, t))
                .sum();
            let bound = 1e-10 * apply_k(&h).unwrap().sup_norm().powf(t) * g.total_measure();
            assert!(compat.abs() <= bound, "t = {t}: {compat:e} > {bound:e}");
        }
    }

    #[test]
    fn coupling_diagnostic_routes_agree() {
        let g = ball3(2048);
        let f = RadialFunction::from_fn(g.clone(), |r| (4.0 * r).sin())
            .unwrap()
            .project_zero_average();
        let h = RadialFunction::from_fn(g, |r| r.powi(3) - r)
            .unwrap()
            .project_zero_average();
        let d = bilinear_t_diagnostic(&f, &h).unwrap();
        assert!(d.relative_gap < 1e-6, "gap {}", d.relative_gap);
    }

    #[test]
    fn coupling_interval_closed_form() {
        // T(x, x) = int x (x/2 - x^3/6) = 4/15 on (-1, 1)
        let g = make_grid(DomainKind::Interval, 2048).unwrap();
        let f = RadialFunction::from_fn(g, |x| x).unwrap();
        assert_relative_eq!(
            bilinear_t(&f, &f).unwrap(),
            4.0 / 15.0,
            max_relative = 1e-6
        );
    }

    #[test]
    fn coupling_diagonal_nonnegative() {
        let g = ball3(128);
        let f = RadialFunction::from_fn(g.clone(), |r| r - 0.4)
            .unwrap()
            .project_zero_average();
        assert!(bilinear_t(&f, &f).unwrap() > 0.0);
        let z = RadialFunction::zeros(g);
        assert_eq!(bilinear_t(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn mode1_zero_data() {
        let g = make_grid(DomainKind::Ball { dimension: 2 }, 128).unwrap();
        let sol = solve_mode1(&RadialFunction::zeros(g), Mode1Boundary::Dirichlet).unwrap();
        assert_eq!(sol.w.sup_norm(), 0.0);
    }

    #[test]
    fn mode1_manufactured_solution_ball2() {
        // w(r) = r (1 - r)^2 satisfies w(0) = 0, w(1) = 0, and w'(1) = 0, so it
        // solves both boundary problems for h(r) = 6 - 8 r in dimension 2.
        let g = make_grid(DomainKind::Ball { dimension: 2 }, 2049).unwrap();
        let h = RadialFunction::from_fn(g.clone(), |r| 6.0 - 8.0 * r).unwrap();
        let exact = RadialFunction::from_fn(g.clone(), |r| r * (1.0 - r).powi(2)).unwrap();
        for bc in [Mode1Boundary::Dirichlet, Mode1Boundary::Neumann] {
            let sol = solve_mode1(&h, bc).unwrap();
            let err = sol
                .w
                .values()
                .iter()
                .zip(exact.values())
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-5, "{bc:?}: max error {err}");
            assert!(sol.residual <= 1e-6 * h.sup_norm());
        }
    }

    #[test]
    fn mode1_neumann_dominates_dirichlet() {
        // Nonnegative data: the Neumann solution lies strictly above the
        // Dirichlet one on the interior.
        for kind in [
            DomainKind::Ball { dimension: 2 },
            DomainKind::Annulus {
                dimension: 2,
                inner_radius: 0.3,
            },
        ] {
            let g = make_grid(kind, 1025).unwrap();
            let h = RadialFunction::from_fn(g.clone(), |r| 1.0 + r).unwrap();
            let wn = solve_mode1(&h, Mode1Boundary::Neumann).unwrap().w;
            let wd = solve_mode1(&h, Mode1Boundary::Dirichlet).unwrap().w;
            assert!(wn.values().iter().skip(1).all(|&v| v > 0.0));
            for i in 1..g.len() - 1 {
                assert!(
                    wn.values()[i] > wd.values()[i],
                    "{kind:?} node {i}: {} <= {}",
                    wn.values()[i],
                    wd.values()[i]
                );
            }
        }
    }

    #[test]
    fn mode1_rejects_interval() {
        let g = make_grid(DomainKind::Interval, 64).unwrap();
        assert!(matches!(
            solve_mode1(&RadialFunction::zeros(g), Mode1Boundary::Neumann),
            Err(Error::UnsupportedDomain { .. })
        ));
    }
}
