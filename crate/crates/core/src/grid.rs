//! Radial domains, quadrature, and sampled radial profiles.
//!
//! The domain is a ball, an annulus, or the interval (-1, 1). Functions are
//! sampled on uniform radial nodes and interpreted as piecewise linear between
//! nodes. All quadrature weights are exact integrals of the piecewise-linear
//! model against the radial measure N omega_N r^(N-1) dr (plain dr on the
//! interval), so `integrate` and `cumulative_integral` are exact for the
//! interpolation model and Sum w_i equals |Omega| to roundoff.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of nodes accepted by [`make_grid`].
pub const MIN_NODES: usize = 16;

/// Shape of the radial domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainKind {
    /// Unit ball in dimension `dimension >= 1`.
    Ball { dimension: u32 },
    /// Annulus with radii `(inner_radius, 1)` in dimension `dimension >= 2`.
    Annulus { dimension: u32, inner_radius: f64 },
    /// The interval (-1, 1).
    Interval,
}

impl DomainKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DomainKind::Ball { dimension } => {
                if dimension < 1 {
                    return Err(Error::InvalidDomain("ball requires dimension >= 1".into()));
                }
            }
            DomainKind::Annulus {
                dimension,
                inner_radius,
            } => {
                if dimension < 2 {
                    return Err(Error::InvalidDomain(
                        "annulus requires dimension >= 2".into(),
                    ));
                }
                if !(inner_radius > 0.0 && inner_radius < 1.0) {
                    return Err(Error::InvalidDomain(format!(
                        "annulus inner radius must lie in (0, 1), got {inner_radius}"
                    )));
                }
            }
            DomainKind::Interval => {}
        }
        Ok(())
    }

    pub fn dimension(&self) -> u32 {
        match *self {
            DomainKind::Ball { dimension } => dimension,
            DomainKind::Annulus { dimension, .. } => dimension,
            DomainKind::Interval => 1,
        }
    }

    /// Inner radial limit: 0 for balls, delta for annuli, -1 for the interval.
    pub fn inner_limit(&self) -> f64 {
        match *self {
            DomainKind::Ball { .. } => 0.0,
            DomainKind::Annulus { inner_radius, .. } => inner_radius,
            DomainKind::Interval => -1.0,
        }
    }

    pub fn is_interval(&self) -> bool {
        matches!(self, DomainKind::Interval)
    }

    pub fn name(&self) -> &'static str {
        match self {
            DomainKind::Ball { .. } => "ball",
            DomainKind::Annulus { .. } => "annulus",
            DomainKind::Interval => "interval",
        }
    }
}

/// Volume of the unit ball in dimension `n`.
pub fn unit_ball_volume(n: u32) -> f64 {
    // omega_0 = 1, omega_1 = 2, omega_N = 2 pi omega_{N-2} / N
    let mut dim = n % 2;
    let mut vol = if dim == 0 { 1.0_f64 } else { 2.0_f64 };
    while dim < n {
        dim += 2;
        vol *= 2.0 * std::f64::consts::PI / dim as f64;
    }
    vol
}

/// Discretized radial domain with quadrature tables.
#[derive(Debug)]
pub struct RadialGrid {
    kind: DomainKind,
    nodes: Vec<f64>,
    /// Hat-function weights: w_i = integral of the i-th nodal basis function
    /// against the radial measure. Sum w_i = |Omega|.
    weights: Vec<f64>,
    /// Per-cell coefficients: integral over cell k of the left (resp. right)
    /// linear shape function against the measure. cell_left + cell_right
    /// equals the cell measure tau(r_{k+1}) - tau(r_k).
    cell_left: Vec<f64>,
    cell_right: Vec<f64>,
    /// Node weights for the reduced coupling integral
    /// (N omega_N)^{-1} int I f I g r^{1-N} dr: trapezoid-in-r weight times
    /// r^{1-N}/(N omega_N), with the r = 0 entry set to 0 (integrand vanishes).
    reduced: Vec<f64>,
    omega_n: f64,
    total_measure: f64,
}

impl RadialGrid {
    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cell_left(&self) -> &[f64] {
        &self.cell_left
    }

    pub fn cell_right(&self) -> &[f64] {
        &self.cell_right
    }

    pub(crate) fn reduced_weights(&self) -> &[f64] {
        &self.reduced
    }

    /// Volume of the unit ball in the grid's dimension (2 on the interval).
    pub fn omega_n(&self) -> f64 {
        self.omega_n
    }

    pub fn total_measure(&self) -> f64 {
        self.total_measure
    }

    pub fn dimension(&self) -> u32 {
        self.kind.dimension()
    }

    /// Measure of grid cell k, tau(r_{k+1}) - tau(r_k).
    pub fn cell_measure(&self, k: usize) -> f64 {
        self.cell_left[k] + self.cell_right[k]
    }

    /// The measure coordinate s = tau(r).
    pub fn measure_map(&self, r: f64) -> Result<f64> {
        let lo = self.kind.inner_limit();
        if !(lo..=1.0).contains(&r) {
            return Err(Error::InvalidArgument(format!(
                "radius {r} outside [{lo}, 1]"
            )));
        }
        Ok(match self.kind {
            DomainKind::Interval => r + 1.0,
            _ => {
                let n = self.dimension() as i32;
                self.omega_n * (r.powi(n) - lo.powi(n))
            }
        })
    }

    /// Inverse of [`measure_map`]; s must lie in [0, |Omega|].
    pub fn measure_map_inverse(&self, s: f64) -> Result<f64> {
        if !(0.0..=self.total_measure * (1.0 + 1e-14)).contains(&s) {
            return Err(Error::InvalidArgument(format!(
                "measure coordinate {s} outside [0, {}]",
                self.total_measure
            )));
        }
        Ok(match self.kind {
            DomainKind::Interval => (s - 1.0).clamp(-1.0, 1.0),
            _ => {
                let n = self.dimension();
                let delta = self.kind.inner_limit();
                (s / self.omega_n + delta.powi(n as i32))
                    .powf(1.0 / n as f64)
                    .clamp(delta, 1.0)
            }
        })
    }

    pub fn same_grid(&self, other: &RadialGrid) -> bool {
        self.kind == other.kind && self.nodes.len() == other.nodes.len()
    }
}

/// Builds a uniform grid of `node_count` nodes spanning the radial extent.
pub fn make_grid(kind: DomainKind, node_count: usize) -> Result<Arc<RadialGrid>> {
    kind.validate()?;
    if node_count < MIN_NODES {
        return Err(Error::InvalidArgument(format!(
            "node_count {node_count} below minimum {MIN_NODES}"
        )));
    }
    let lo = kind.inner_limit();
    let hi = 1.0;
    let n = node_count;
    let step = (hi - lo) / (n - 1) as f64;
    let nodes: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect();

    let dim = kind.dimension();
    let omega_n = unit_ball_volume(dim);
    let total_measure = match kind {
        DomainKind::Interval => 2.0,
        _ => omega_n * (1.0 - lo.powi(dim as i32)),
    };

    let mut cell_left = vec![0.0; n - 1];
    let mut cell_right = vec![0.0; n - 1];
    match kind {
        DomainKind::Interval => {
            for k in 0..n - 1 {
                let half = (nodes[k + 1] - nodes[k]) / 2.0;
                cell_left[k] = half;
                cell_right[k] = half;
            }
        }
        _ => {
            // Exact moments of the measure N omega_N r^(N-1) dr over each cell.
            let nf = dim as f64;
            for k in 0..n - 1 {
                let (a, b) = (nodes[k], nodes[k + 1]);
                let h = b - a;
                let pn = b.powi(dim as i32) - a.powi(dim as i32);
                let pn1 = b.powi(dim as i32 + 1) - a.powi(dim as i32 + 1);
                cell_left[k] = nf * omega_n / h * (b * pn / nf - pn1 / (nf + 1.0));
                cell_right[k] = nf * omega_n / h * (pn1 / (nf + 1.0) - a * pn / nf);
            }
        }
    }

    let mut weights = vec![0.0; n];
    for k in 0..n - 1 {
        weights[k] += cell_left[k];
        weights[k + 1] += cell_right[k];
    }

    let mut reduced = vec![0.0; n];
    for j in 0..n {
        let d = if j == 0 {
            (nodes[1] - nodes[0]) / 2.0
        } else if j == n - 1 {
            (nodes[n - 1] - nodes[n - 2]) / 2.0
        } else {
            (nodes[j + 1] - nodes[j - 1]) / 2.0
        };
        reduced[j] = match kind {
            DomainKind::Interval => d,
            _ => {
                let r = nodes[j];
                if r > 0.0 {
                    d * r.powi(1 - dim as i32) / (dim as f64 * omega_n)
                } else {
                    0.0
                }
            }
        };
    }

    Ok(Arc::new(RadialGrid {
        kind,
        nodes,
        weights,
        cell_left,
        cell_right,
        reduced,
        omega_n,
        total_measure,
    }))
}

/// A radial profile sampled at the grid nodes, piecewise linear in between.
#[derive(Debug, Clone)]
pub struct RadialFunction {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialFunction {
    /// Rejects NaN/Inf samples and length mismatches eagerly.
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Samples a scalar function of the radius at every node.
    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// int_Omega h, exact for the piecewise-linear model.
    pub fn integrate(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// h - (int h)/|Omega|; the result integrates to zero to roundoff.
    pub fn project_zero_average(&self) -> RadialFunction {
        let mean = self.integrate() / self.grid.total_measure();
        let values = self.values.iter().map(|v| v - mean).collect();
        RadialFunction {
            grid: self.grid.clone(),
            values,
        }
    }

    /// The cumulative operator: (I h)(r_i) = int over {delta < |y| < r_i} of h,
    /// exact for the piecewise-linear model. First value is 0, last equals
    /// `integrate`.
    pub fn cumulative_integral(&self) -> RadialFunction {
        let g = &self.grid;
        let mut out = vec![0.0; self.values.len()];
        let mut acc = 0.0;
        for k in 0..self.values.len() - 1 {
            acc += g.cell_left()[k] * self.values[k] + g.cell_right()[k] * self.values[k + 1];
            out[k + 1] = acc;
        }
        RadialFunction {
            grid: self.grid.clone(),
            values: out,
        }
    }

    /// Piecewise-linear interpolation at radius `r`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        let nodes = self.grid.nodes();
        let lo = self.grid.kind().inner_limit();
        if !(lo..=1.0).contains(&r) {
            return Err(Error::InvalidArgument(format!(
                "radius {r} outside [{lo}, 1]"
            )));
        }
        let k = match nodes.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
            Ok(i) => return Ok(self.values[i]),
            Err(i) => i.clamp(1, nodes.len() - 1) - 1,
        };
        let t = (r - nodes[k]) / (nodes[k + 1] - nodes[k]);
        Ok(self.values[k] * (1.0 - t) + self.values[k + 1] * t)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// L^t norm for t >= 1, via the nodal quadrature of |h|^t.
    pub fn lp_norm(&self, t: f64) -> f64 {
        let s: f64 = self
            .grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v.abs().powf(t))
            .sum();
        s.powf(1.0 / t)
    }

    /// Checks that `other` lives on a compatible grid.
    pub fn check_same_grid(&self, other: &RadialFunction) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_grid(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Pointwise map; errors if the image is non-finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<RadialFunction> {
        RadialFunction::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, c: f64) -> RadialFunction {
        RadialFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// self + c * other (grids must match).
    pub fn axpy(&self, c: f64, other: &RadialFunction) -> Result<RadialFunction> {
        self.check_same_grid(other)?;
        RadialFunction::new(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        )
    }

    /// Weighted inner product int_Omega self * other.
    pub fn inner(&self, other: &RadialFunction) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .grid
            .weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum())
    }
}

/// |y|^(t-1) y, with 0 at 0 (also for t < 1).
pub fn signed_power(y: f64, t: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        y.signum() * y.abs().powf(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ball_volumes() {
        assert_relative_eq!(unit_ball_volume(1), 2.0);
        assert_relative_eq!(unit_ball_volume(2), std::f64::consts::PI);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * std::f64::consts::PI / 3.0);
        // Remark value used by the counterexample: omega_5 = 8 pi^2 / 15.
        assert_relative_eq!(
            unit_ball_volume(5),
            8.0 * std::f64::consts::PI.powi(2) / 15.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn total_measures() {
        let g = make_grid(DomainKind::Ball { dimension: 1 }, 101).unwrap();
        assert_relative_eq!(g.total_measure(), 2.0, max_relative = 1e-14);

        let g = make_grid(
            DomainKind::Annulus {
                dimension: 2,
                inner_radius: 0.5,
            },
            64,
        )
        .unwrap();
        assert_relative_eq!(
            g.total_measure(),
            std::f64::consts::PI * (1.0 - 0.25),
            max_relative = 1e-14
        );

        let g = make_grid(DomainKind::Ball { dimension: 5 }, 4096).unwrap();
        assert_relative_eq!(
            g.total_measure(),
            8.0 * std::f64::consts::PI.powi(2) / 15.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn weights_sum_to_total_measure() {
        for (kind, n) in [
            (DomainKind::Ball { dimension: 3 }, 257),
            (
                DomainKind::Annulus {
                    dimension: 2,
                    inner_radius: 0.3,
                },
                128,
            ),
            (DomainKind::Interval, 64),
        ] {
            let g = make_grid(kind, n).unwrap();
            let sum: f64 = g.weights().iter().sum();
            assert_relative_eq!(sum, g.total_measure(), max_relative = 1e-13);
        }
    }

    #[test]
    fn invalid_domains_rejected() {
        assert!(make_grid(DomainKind::Ball { dimension: 0 }, 64).is_err());
        assert!(make_grid(
            DomainKind::Annulus {
                dimension: 1,
                inner_radius: 0.5
            },
            64
        )
        .is_err());
        assert!(make_grid(
            DomainKind::Annulus {
                dimension: 2,
                inner_radius: 1.2
            },
            64
        )
        .is_err());
        assert!(make_grid(DomainKind::Ball { dimension: 3 }, 8).is_err());
    }

    #[test]
    fn integrate_constant_on_ball() {
        let g = make_grid(DomainKind::Ball { dimension: 3 }, 200).unwrap();
        let h = RadialFunction::from_fn(g.clone(), |_| 2.5).unwrap();
        assert_relative_eq!(
            h.integrate(),
            2.5 * 4.0 * std::f64::consts::PI / 3.0,
            max_relative = 1e-13
        );
    }

    #[test]
    fn integrate_zero_combination_on_ball3() {
        // int_0^1 (3 - 5 rho^2) rho^2 drho = 0 in closed form.
        let g = make_grid(DomainKind::Ball { dimension: 3 }, 513).unwrap();
        let h = RadialFunction::from_fn(g, |r| 3.0 - 5.0 * r * r).unwrap();
        assert!(h.integrate().abs() < 1e-10);
    }

    #[test]
    fn integrate_odd_on_interval() {
        let g = make_grid(DomainKind::Interval, 321).unwrap();
        let h = RadialFunction::from_fn(g, |x| x).unwrap();
        assert!(h.integrate().abs() < 1e-14);
    }

    #[test]
    fn measure_map_values() {
        let g = make_grid(DomainKind::Ball { dimension: 2 }, 64).unwrap();
        assert_relative_eq!(
            g.measure_map(1.0).unwrap(),
            std::f64::consts::PI,
            max_relative = 1e-14
        );

        let g = make_grid(
            DomainKind::Annulus {
                dimension: 2,
                inner_radius: 0.5,
            },
            64,
        )
        .unwrap();
        assert_eq!(g.measure_map(0.5).unwrap(), 0.0);

        let g = make_grid(DomainKind::Interval, 64).unwrap();
        assert_relative_eq!(g.measure_map(0.0).unwrap(), 1.0);
        assert!(g.measure_map(1.5).is_err());
        assert!(g.measure_map_inverse(3.0).is_err());
    }

    #[test]
    fn measure_map_roundtrip() {
        for kind in [
            DomainKind::Ball { dimension: 3 },
            DomainKind::Annulus {
                dimension: 2,
                inner_radius: 0.3,
            },
            DomainKind::Interval,
        ] {
            let g = make_grid(kind, 200).unwrap();
            for &r in g.nodes() {
                let s = g.measure_map(r).unwrap();
                let back = g.measure_map_inverse(s).unwrap();
                assert!((back - r).abs() < 1e-12, "{kind:?}: {r} -> {s} -> {back}");
            }
        }
    }

    #[test]
    fn project_zero_average_examples() {
        let g = make_grid(DomainKind::Ball { dimension: 3 }, 257).unwrap();
        let c = RadialFunction::from_fn(g.clone(), |_| 5.0).unwrap();
        assert!(c.project_zero_average().sup_norm() < 1e-13);

        // mean of r^2 over the unit ball in R^3 is 3/5
        let h = RadialFunction::from_fn(g.clone(), |r| r * r).unwrap();
        let p = h.project_zero_average();
        let expect = RadialFunction::from_fn(g, |r| r * r - 0.6).unwrap();
        for (a, b) in p.values().iter().zip(expect.values()) {
            assert!((a - b).abs() < 1e-6);
        }

        // idempotence on an already zero-average profile
        let again = p.project_zero_average();
        for (a, b) in p.values().iter().zip(again.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(p.integrate().abs() < 1e-12 * h.sup_norm() * p.grid().total_measure());
    }

    #[test]
    fn quadrature_second_order_on_smooth_profile() {
        // h(r) = r^2 on the unit ball in R^3: exact integral 4 pi / 5.
        let exact = 4.0 * std::f64::consts::PI / 5.0;
        let mut errors = Vec::new();
        for n in [65usize, 129, 257, 513] {
            let g = make_grid(DomainKind::Ball { dimension: 3 }, n).unwrap();
            let h = RadialFunction::from_fn(g, |r| r * r).unwrap();
            errors.push((h.integrate() - exact).abs());
        }
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.9, "observed order {order}, errors {errors:?}");
        }
    }

    #[test]
    fn rejects_non_finite_values() {
        let g = make_grid(DomainKind::Interval, 64).unwrap();
        let mut vals = vec![0.0; 64];
        vals[10] = f64::NAN;
        assert!(matches!(
            RadialFunction::new(g.clone(), vals),
            Err(Error::NonFinite { index: 10 })
        ));
        let mut vals = vec![0.0; 64];
        vals[3] = f64::INFINITY;
        assert!(RadialFunction::new(g, vals).is_err());
    }

    #[test]
    fn eval_interpolates_linearly() {
        let g = make_grid(DomainKind::Interval, 33).unwrap();
        let h = RadialFunction::from_fn(g, |x| 2.0 * x + 1.0).unwrap();
        assert_relative_eq!(h.eval(0.123).unwrap(), 1.246, max_relative = 1e-12);
        assert!(h.eval(1.5).is_err());
    }
}
