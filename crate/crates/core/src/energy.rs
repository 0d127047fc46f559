//! Exponent bookkeeping, the dual functional phi, its gradient
//! representation, the Nehari projection, and solution recovery.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{signed_power, RadialFunction};
use crate::neumann::{
    apply_k, apply_k_t, bilinear_t_unchecked, radial_derivative, ZERO_AVERAGE_TOL,
};
use crate::rearrange::{cell_profile, measure_coupling};

/// Growth regime of the coupled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// pq < 1: the dual functional is coercive and has a negative global minimum.
    Sublinear,
    /// pq > 1: minimization runs on the Nehari set, where phi >= 0.
    Superlinear,
}

/// The exponent pair (p, q) together with every derived exponent.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
    pub alpha_prime: f64,
    pub beta_prime: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma: f64,
    pub regime: Regime,
    pub dimension: u32,
}

impl Exponents {
    /// Validates p, q > 0, pq != 1, and strict subcriticality
    /// 1/(p+1) + 1/(q+1) > (N-2)/N.
    pub fn new(p: f64, q: f64, dimension: u32) -> Result<Self> {
        if !(p > 0.0 && q > 0.0) || !p.is_finite() || !q.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "exponents must be positive, got p = {p}, q = {q}"
            )));
        }
        if dimension < 1 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if (p * q - 1.0).abs() < 1e-12 {
            return Err(Error::LinearCase);
        }
        let subcritical = 1.0 / (p + 1.0) + 1.0 / (q + 1.0);
        let critical = (dimension as f64 - 2.0) / dimension as f64;
        if subcritical <= critical {
            return Err(Error::Supercritical { p, q, dimension });
        }
        let alpha = (p + 1.0) / p;
        let beta = (q + 1.0) / q;
        let gamma1 = beta / (alpha + beta);
        let gamma2 = alpha / (alpha + beta);
        let gamma = alpha * beta / (alpha + beta);
        Ok(Exponents {
            p,
            q,
            alpha,
            beta,
            alpha_prime: p + 1.0,
            beta_prime: q + 1.0,
            gamma1,
            gamma2,
            gamma,
            regime: if p * q < 1.0 {
                Regime::Sublinear
            } else {
                Regime::Superlinear
            },
            dimension,
        })
    }
}

/// A zero-average pair (f, g), the optimization variable of the dual method.
#[derive(Debug, Clone)]
pub struct DualPair {
    pub f: RadialFunction,
    pub g: RadialFunction,
    pub exponents: Exponents,
}

impl DualPair {
    /// Validates shared grid and zero averages (within the K tolerance).
    pub fn new(f: RadialFunction, g: RadialFunction, exponents: Exponents) -> Result<Self> {
        f.check_same_grid(&g)?;
        for h in [&f, &g] {
            let integral = h.integrate();
            let tolerance = ZERO_AVERAGE_TOL * h.sup_norm() * h.grid().total_measure();
            if integral.abs() > tolerance && h.sup_norm() > 0.0 {
                return Err(Error::NonZeroAverage {
                    integral,
                    tolerance,
                });
            }
        }
        Ok(DualPair { f, g, exponents })
    }

    /// int |f|^a / a + int |g|^b / b, the local part of phi.
    pub fn local_energy(&self) -> f64 {
        let e = &self.exponents;
        let fa: f64 = self
            .f
            .grid()
            .weights()
            .iter()
            .zip(self.f.values())
            .map(|(w, v)| w * v.abs().powf(e.alpha))
            .sum();
        let gb: f64 = self
            .g
            .grid()
            .weights()
            .iter()
            .zip(self.g.values())
            .map(|(w, v)| w * v.abs().powf(e.beta))
            .sum();
        fa / e.alpha + gb / e.beta
    }

    /// The dual functional phi(f, g) = int |f|^a/a + |g|^b/b - g K f.
    pub fn phi(&self) -> f64 {
        self.local_energy() - bilinear_t_unchecked(&self.f, &self.g)
    }

    /// phi evaluated on the step representation in the measure coordinate,
    /// with the coupling integrated in closed form. On this evaluation the
    /// energy-decrease inequality of the star transformation is exact.
    pub fn phi_profile(&self) -> Result<f64> {
        let e = &self.exponents;
        let pf = cell_profile(&self.f);
        let pg = cell_profile(&self.g);
        let local =
            pf.abs_power_integral(e.alpha) / e.alpha + pg.abs_power_integral(e.beta) / e.beta;
        let coupling =
            measure_coupling(&pf, &pg, self.f.grid().kind(), self.f.grid().omega_n())?;
        Ok(local - coupling)
    }

    /// Zero-average representation of the gradient of phi:
    /// (P(|f|^(a-2) f) - K g, P(|g|^(b-2) g) - K f).
    ///
    /// Pairing the representation with a zero-average test pair under the
    /// weighted L^2 product reproduces the directional derivative up to
    /// quadrature error.
    pub fn gradient(&self) -> Result<DualPair> {
        let e = &self.exponents;
        let kf = apply_k(&self.f)?;
        let kg = apply_k(&self.g)?;
        let rep_f = self
            .f
            .map(|v| signed_power(v, e.alpha - 1.0))?
            .project_zero_average()
            .axpy(-1.0, &kg)?;
        let rep_g = self
            .g
            .map(|v| signed_power(v, e.beta - 1.0))?
            .project_zero_average()
            .axpy(-1.0, &kf)?;
        Ok(DualPair {
            f: rep_f,
            g: rep_g,
            exponents: self.exponents,
        })
    }

    /// Scales the pair along the Nehari ray: (t^g1 f, t^g2 g).
    pub fn nehari_scaled(&self, t: f64) -> DualPair {
        let e = &self.exponents;
        DualPair {
            f: self.f.scale(t.powf(e.gamma1)),
            g: self.g.scale(t.powf(e.gamma2)),
            exponents: self.exponents,
        }
    }

    /// The unique maximizer t of s -> phi(s^g1 f, s^g2 g):
    /// t = ((g1 ||f||_a^a + g2 ||g||_b^b) / T(f, g))^(1/(1-gamma)).
    ///
    /// Requires the superlinear regime and T(f, g) > 0.
    pub fn nehari_t(&self) -> Result<f64> {
        let e = &self.exponents;
        if e.regime != Regime::Superlinear {
            return Err(Error::Precondition(
                "Nehari projection is a superlinear-regime operation".into(),
            ));
        }
        let coupling = bilinear_t_unchecked(&self.f, &self.g);
        if coupling <= 0.0 {
            return Err(Error::NotProjectable { coupling });
        }
        let numerator = e.gamma1 * self.f.lp_norm(e.alpha).powf(e.alpha)
            + e.gamma2 * self.g.lp_norm(e.beta).powf(e.beta);
        Ok((numerator / coupling).powf(1.0 / (1.0 - e.gamma)))
    }

    /// Projects onto the Nehari set.
    pub fn project_nehari(&self) -> Result<DualPair> {
        Ok(self.nehari_scaled(self.nehari_t()?))
    }

    /// Residual of the Nehari identity g1 ||f||_a^a + g2 ||g||_b^b = T(f, g),
    /// relative to T.
    pub fn nehari_residual(&self) -> f64 {
        let e = &self.exponents;
        let coupling = bilinear_t_unchecked(&self.f, &self.g);
        let numerator = e.gamma1 * self.f.lp_norm(e.alpha).powf(e.alpha)
            + e.gamma2 * self.g.lp_norm(e.beta).powf(e.beta);
        (numerator - coupling).abs() / coupling.abs().max(f64::MIN_POSITIVE)
    }

    /// Recovers the strong solution (u, v) = (K_p g, K_q f) with diagnostics.
    pub fn recover_solution(&self) -> Result<SolutionPair> {
        let e = &self.exponents;
        let (u, _) = apply_k_t(&self.g, e.p)?;
        let (v, _) = apply_k_t(&self.f, e.q)?;
        let u_der = radial_derivative(&self.g);
        let v_der = radial_derivative(&self.f);

        // pointwise relations u = |f|^(a-2) f and v = |g|^(b-2) g
        let res_u = u
            .values()
            .iter()
            .zip(self.f.values())
            .fold(0.0_f64, |m, (&uu, &ff)| {
                m.max((uu - signed_power(ff, e.alpha - 1.0)).abs())
            });
        let res_v = v
            .values()
            .iter()
            .zip(self.g.values())
            .fold(0.0_f64, |m, (&vv, &gg)| {
                m.max((vv - signed_power(gg, e.beta - 1.0)).abs())
            });

        let compat_u: f64 = u
            .grid()
            .weights()
            .iter()
            .zip(u.values())
            .map(|(w, &y)| w * signed_power(y, e.p))
            .sum();
        let compat_v: f64 = v
            .grid()
            .weights()
            .iter()
            .zip(v.values())
            .map(|(w, &y)| w * signed_power(y, e.q))
            .sum();

        let mut solution = SolutionPair {
            u,
            v,
            u_der,
            v_der,
            exponents: self.exponents,
            diagnostics: Diagnostics {
                criticality_residual: res_u + res_v,
                compat_u,
                compat_v,
                phi: self.phi(),
                direct_energy: 0.0,
            },
        };
        solution.diagnostics.direct_energy = solution.direct_energy();
        Ok(solution)
    }
}

/// Diagnostics attached to a recovered solution.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Diagnostics {
    /// sup-norm mismatch of the pointwise relations u = |f|^(a-2) f,
    /// v = |g|^(b-2) g.
    pub criticality_residual: f64,
    /// int |u|^(p-1) u.
    pub compat_u: f64,
    /// int |v|^(q-1) v.
    pub compat_v: f64,
    pub phi: f64,
    /// The direct energy I(u, v).
    pub direct_energy: f64,
}

/// A recovered solution (u, v) with its radial derivative profiles.
#[derive(Debug, Clone)]
pub struct SolutionPair {
    pub u: RadialFunction,
    pub v: RadialFunction,
    /// u_r from the radial derivative identity; zero at the boundary nodes.
    pub u_der: RadialFunction,
    pub v_der: RadialFunction,
    pub exponents: Exponents,
    pub diagnostics: Diagnostics,
}

impl SolutionPair {
    /// The direct energy
    /// I(u, v) = int grad u . grad v - |u|^(p+1)/(p+1) - |v|^(q+1)/(q+1),
    /// with the gradient term reduced through the stored derivative profiles.
    pub fn direct_energy(&self) -> f64 {
        let e = &self.exponents;
        let grid = self.u.grid();
        // N omega_N int u_r v_r r^(N-1) dr written in the reduced weights.
        let cross: f64 = grid
            .reduced_weights()
            .iter()
            .zip(
                self.u_der
                    .values()
                    .iter()
                    .zip(self.v_der.values().iter().zip(grid.nodes())),
            )
            .map(|(e_j, (&ur, (&vr, &r)))| {
                if *e_j == 0.0 {
                    0.0
                } else {
                    // reduced_j = d_j r^(1-N)/(N wN): recover d_j r^(N-1) N wN
                    let dim = grid.dimension() as i32;
                    let scale = if grid.kind().is_interval() {
                        1.0
                    } else {
                        (grid.dimension() as f64 * grid.omega_n()).powi(2)
                            * r.powi(2 * (dim - 1))
                    };
                    e_j * scale * ur * vr
                }
            })
            .sum();
        let up: f64 = grid
            .weights()
            .iter()
            .zip(self.u.values())
            .map(|(w, v)| w * v.abs().powf(e.p + 1.0))
            .sum();
        let vq: f64 = grid
            .weights()
            .iter()
            .zip(self.v.values())
            .map(|(w, v)| w * v.abs().powf(e.q + 1.0))
            .sum();
        cross - up / (e.p + 1.0) - vq / (e.q + 1.0)
    }

    /// Minimum of u_r v_r over the interior nodes.
    pub fn min_interior_derivative_product(&self) -> f64 {
        let n = self.u.len();
        (1..n - 1)
            .map(|i| self.u_der.values()[i] * self.v_der.values()[i])
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, DomainKind};
    use crate::neumann::bilinear_t;
    use approx::assert_relative_eq;

    #[test]
    fn exponents_p_q_three() {
        let e = Exponents::new(3.0, 3.0, 3).unwrap();
        assert_relative_eq!(e.alpha, 4.0 / 3.0);
        assert_relative_eq!(e.beta, 4.0 / 3.0);
        assert_relative_eq!(e.gamma1, 0.5);
        assert_relative_eq!(e.gamma2, 0.5);
        assert_relative_eq!(e.gamma, 2.0 / 3.0);
        assert_eq!(e.regime, Regime::Superlinear);
        assert_relative_eq!(e.alpha_prime, 4.0);
        // gamma identities
        assert_relative_eq!(e.gamma1 + e.gamma2, 1.0);
        assert_relative_eq!(e.gamma1 * e.alpha, e.gamma);
        assert_relative_eq!(e.gamma2 * e.beta, e.gamma);
    }

    #[test]
    fn exponents_sublinear_always_subcritical() {
        for dim in [1u32, 2, 3, 7, 25] {
            let e = Exponents::new(0.5, 0.5, dim).unwrap();
            assert_eq!(e.regime, Regime::Sublinear);
            assert!(e.gamma > 1.0);
        }
    }

    #[test]
    fn exponents_reject_linear_and_supercritical() {
        assert!(matches!(
            Exponents::new(1.0, 1.0, 3),
            Err(Error::LinearCase)
        ));
        assert!(matches!(
            Exponents::new(0.25, 4.0, 2),
            Err(Error::LinearCase)
        ));
        // (p, q) = (5, 5) in dimension 3: 1/6 + 1/6 = 1/3 = (N-2)/N, critical
        assert!(matches!(
            Exponents::new(5.0, 5.0, 3),
            Err(Error::Supercritical { .. })
        ));
        assert!(Exponents::new(5.0, 5.0, 2).is_ok());
    }

    fn sample_pair(n: usize) -> DualPair {
        let g = make_grid(DomainKind::Interval, n).unwrap();
        let e = Exponents::new(0.5, 0.5, 1).unwrap();
        let f = RadialFunction::from_fn(g.clone(), |x| x).unwrap();
        let h = RadialFunction::from_fn(g, |x| x * x)
            .unwrap()
            .project_zero_average();
        DualPair::new(f, h, e).unwrap()
    }

    #[test]
    fn phi_zero_pair() {
        let g = make_grid(DomainKind::Interval, 64).unwrap();
        let e = Exponents::new(0.5, 0.5, 1).unwrap();
        let pair = DualPair::new(
            RadialFunction::zeros(g.clone()),
            RadialFunction::zeros(g),
            e,
        )
        .unwrap();
        assert_eq!(pair.phi(), 0.0);
    }

    #[test]
    fn phi_splits_into_local_and_coupling() {
        let pair = sample_pair(512);
        let psi = pair.local_energy();
        let coupling = bilinear_t(&pair.f, &pair.g).unwrap();
        assert_relative_eq!(pair.phi(), psi - coupling, max_relative = 1e-14);
    }

    #[test]
    fn phi_nehari_scaling_identity() {
        // phi(t^g1 f, t^g2 g) = t^gamma Psi - t T, exercised at several t.
        let g = make_grid(DomainKind::Interval, 256).unwrap();
        let e = Exponents::new(0.5, 0.5, 1).unwrap();
        let f = RadialFunction::from_fn(g, |x| x).unwrap();
        let pair = DualPair::new(f.clone(), f, e).unwrap();
        let psi = pair.local_energy();
        let coupling = bilinear_t(&pair.f, &pair.g).unwrap();
        for t in [1e-3, 0.1, 1.0, 4.0] {
            let scaled = pair.nehari_scaled(t);
            assert_relative_eq!(
                scaled.phi(),
                t.powf(e.gamma) * psi - t * coupling,
                max_relative = 1e-12
            );
        }
        // sublinear: gamma > 1, so phi < 0 for small t
        assert!(pair.nehari_scaled(1e-3).phi() < 0.0);
    }

    #[test]
    fn gradient_at_zero_is_zero() {
        let g = make_grid(DomainKind::Interval, 64).unwrap();
        let e = Exponents::new(0.5, 0.5, 1).unwrap();
        let pair = DualPair::new(
            RadialFunction::zeros(g.clone()),
            RadialFunction::zeros(g),
            e,
        )
        .unwrap();
        let grad = pair.gradient().unwrap();
        assert_eq!(grad.f.sup_norm(), 0.0);
        assert_eq!(grad.g.sup_norm(), 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = make_grid(DomainKind::Interval, 513).unwrap();
        for (p, q) in [(0.5, 0.8), (3.0, 2.0)] {
            let e = Exponents::new(p, q, 1).unwrap();
            let f = RadialFunction::from_fn(g.clone(), |x| (2.4 * x).sin() + 0.4)
                .unwrap()
                .project_zero_average();
            let h = RadialFunction::from_fn(g.clone(), |x| x * x - x)
                .unwrap()
                .project_zero_average();
            let pair = DualPair::new(f, h, e).unwrap();
            let dir_f = RadialFunction::from_fn(g.clone(), |x| (5.0 * x).cos())
                .unwrap()
                .project_zero_average();
            let dir_g = RadialFunction::from_fn(g.clone(), |x| x)
                .unwrap()
                .project_zero_average();
            let grad = pair.gradient().unwrap();
            let paired = grad.f.inner(&dir_f).unwrap() + grad.g.inner(&dir_g).unwrap();
            let step = 1e-4;
            let plus = DualPair::new(
                pair.f.axpy(step, &dir_f).unwrap(),
                pair.g.axpy(step, &dir_g).unwrap(),
                e,
            )
            .unwrap()
            .phi();
            let minus = DualPair::new(
                pair.f.axpy(-step, &dir_f).unwrap(),
                pair.g.axpy(-step, &dir_g).unwrap(),
                e,
            )
            .unwrap()
            .phi();
            let fd = (plus - minus) / (2.0 * step);
            assert!(
                (fd - paired).abs() <= 1e-4 * (1.0 + paired.abs()),
                "p={p} q={q}: fd {fd} vs paired {paired}"
            );
        }
    }

    #[test]
    fn nehari_projection_properties() {
        let g = make_grid(DomainKind::Ball { dimension: 3 }, 257).unwrap();
        let e = Exponents::new(3.0, 3.0, 3).unwrap();
        let f = RadialFunction::from_fn(g, |r| r - 0.55)
            .unwrap()
            .project_zero_average();
        let pair = DualPair::new(f.clone(), f, e).unwrap();
        let projected = pair.project_nehari().unwrap();
        assert!(projected.nehari_residual() <= 1e-12);
        // on the Nehari set t = 1
        assert_relative_eq!(projected.nehari_t().unwrap(), 1.0, max_relative = 1e-10);
        // scaling by s and re-projecting returns to the same point: t(s) s = 1
        for s in [0.2, 2.5] {
            let scaled = projected.nehari_scaled(s);
            assert_relative_eq!(
                scaled.nehari_t().unwrap() * s,
                1.0,
                max_relative = 1e-10
            );
        }
        // phi >= 0 on the Nehari set
        assert!(projected.phi() >= 0.0);
        // (1 - gamma) Psi identity on the set
        assert_relative_eq!(
            projected.phi(),
            (1.0 - e.gamma) * projected.local_energy(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn nehari_rejects_nonpositive_coupling() {
        let g = make_grid(DomainKind::Interval, 256).unwrap();
        let e = Exponents::new(3.0, 3.0, 1).unwrap();
        let f = RadialFunction::from_fn(g.clone(), |x| x).unwrap();
        let h = f.scale(-1.0);
        let pair = DualPair::new(f, h, e).unwrap();
        assert!(matches!(
            pair.nehari_t(),
            Err(Error::NotProjectable { .. })
        ));
    }

    #[test]
    fn recover_zero_pair() {
        let g = make_grid(DomainKind::Interval, 64).unwrap();
        let e = Exponents::new(0.5, 0.5, 1).unwrap();
        let pair = DualPair::new(
            RadialFunction::zeros(g.clone()),
            RadialFunction::zeros(g),
            e,
        )
        .unwrap();
        let sol = pair.recover_solution().unwrap();
        assert_eq!(sol.u.sup_norm(), 0.0);
        assert_eq!(sol.diagnostics.criticality_residual, 0.0);
        assert_eq!(sol.diagnostics.direct_energy, 0.0);
    }

    #[test]
    fn direct_energy_cross_term_equals_coupling() {
        // With the stored derivative profiles, int grad u . grad v recovers
        // T(f, g) exactly.
        let g = make_grid(DomainKind::Ball { dimension: 3 }, 513).unwrap();
        let e = Exponents::new(3.0, 3.0, 3).unwrap();
        let f = RadialFunction::from_fn(g.clone(), |r| (3.0 * r).sin())
            .unwrap()
            .project_zero_average();
        let h = RadialFunction::from_fn(g, |r| r - 0.6)
            .unwrap()
            .project_zero_average();
        let pair = DualPair::new(f, h, e).unwrap();
        let sol = pair.recover_solution().unwrap();
        let coupling = bilinear_t(&pair.f, &pair.g).unwrap();
        let up: f64 = sol
            .u
            .grid()
            .weights()
            .iter()
            .zip(sol.u.values())
            .map(|(w, v)| w * v.abs().powf(e.p + 1.0))
            .sum();
        let vq: f64 = sol
            .v
            .grid()
            .weights()
            .iter()
            .zip(sol.v.values())
            .map(|(w, v)| w * v.abs().powf(e.q + 1.0))
            .sum();
        let cross = sol.direct_energy() + up / (e.p + 1.0) + vq / (e.q + 1.0);
        assert_relative_eq!(cross, coupling, max_relative = 1e-12);
    }
}
