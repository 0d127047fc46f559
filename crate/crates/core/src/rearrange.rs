//! Decreasing rearrangement, the cumulative-sign flipping, the combined
//! star transformation, and Schwarz symmetrization.
//!
//! All rearrangement work happens on a step-function representation in the
//! measure coordinate s = tau(r): each grid cell contributes one step of
//! measure tau(r_{k+1}) - tau(r_k) carrying the measure-average of the
//! piecewise-linear profile over the cell. On this representation the
//! transformation identities are exact: sorting permutes cells, so every L^t
//! norm and the average are preserved to roundoff, and the flip splits cells
//! at the zero crossings of the cumulative integral so that I(F h) = |I h|
//! holds to roundoff at every node.

use crate::error::{Error, Result};
use crate::grid::{DomainKind, RadialFunction};
use crate::neumann::ZERO_AVERAGE_TOL;

/// Relative half-width (times ||h||_inf |Omega|) of the band around zero
/// inside which cumulative-integral values count as non-positive.
pub const FLIP_BAND: f64 = 1e-12;

/// A step function on [0, |Omega|] in the measure coordinate.
#[derive(Debug, Clone)]
pub struct MeasureProfile {
    total: f64,
    /// Strictly increasing, first 0, last `total`; one more entry than `values`.
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl MeasureProfile {
    pub fn new(total: f64, breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 {
            return Err(Error::InvalidArgument(
                "breakpoints must have one more entry than values".into(),
            ));
        }
        if breakpoints.first() != Some(&0.0) || breakpoints.last() != Some(&total) {
            return Err(Error::InvalidArgument(
                "breakpoints must start at 0 and end at the total measure".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: 0 });
        }
        Ok(Self {
            total,
            breakpoints,
            values,
        })
    }

    fn from_cells(total: f64, cells: &[(f64, f64)]) -> Self {
        let mut breakpoints = Vec::with_capacity(cells.len() + 1);
        breakpoints.push(0.0);
        let mut acc = 0.0;
        for &(mu, _) in cells {
            acc += mu;
            breakpoints.push(acc);
        }
        *breakpoints.last_mut().unwrap() = total;
        MeasureProfile {
            total,
            breakpoints,
            values: cells.iter().map(|&(_, v)| v).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_measure(&self, k: usize) -> f64 {
        self.breakpoints[k + 1] - self.breakpoints[k]
    }

    /// int_0^total of the step function.
    pub fn integral(&self) -> f64 {
        (0..self.values.len())
            .map(|k| self.cell_measure(k) * self.values[k])
            .sum()
    }

    /// int |.|^t of the step function.
    pub fn abs_power_integral(&self, t: f64) -> f64 {
        (0..self.values.len())
            .map(|k| self.cell_measure(k) * self.values[k].abs().powf(t))
            .sum()
    }

    pub fn lp_norm(&self, t: f64) -> f64 {
        self.abs_power_integral(t).powf(1.0 / t)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Measure of the superlevel set {value > t}.
    pub fn level_measure(&self, t: f64) -> f64 {
        (0..self.values.len())
            .filter(|&k| self.values[k] > t)
            .map(|k| self.cell_measure(k))
            .sum()
    }

    /// Left-continuous evaluation at s in [0, total]; s = 0 returns the first
    /// cell value.
    pub fn eval(&self, s: f64) -> f64 {
        if s <= self.breakpoints[1] {
            return self.values[0];
        }
        // cell k with s in (b_k, b_{k+1}]
        let k = match self
            .breakpoints
            .binary_search_by(|b| b.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.saturating_sub(1),
            Err(i) => i - 1,
        };
        self.values[k.min(self.values.len() - 1)]
    }

    /// Cumulative integral evaluated at each breakpoint.
    pub fn cumulative_at_breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.breakpoints.len());
        out.push(0.0);
        let mut acc = 0.0;
        for k in 0..self.values.len() {
            acc += self.cell_measure(k) * self.values[k];
            out.push(acc);
        }
        out
    }

    /// Sorts the cells by value, descending and stable.
    pub fn sort_decreasing(&self) -> DecreasingProfile {
        let mut cells: Vec<(f64, f64)> = (0..self.values.len())
            .map(|k| (self.cell_measure(k), self.values[k]))
            .collect();
        cells.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        DecreasingProfile(MeasureProfile::from_cells(self.total, &cells))
    }
}

/// A [`MeasureProfile`] whose values are non-increasing.
#[derive(Debug, Clone)]
pub struct DecreasingProfile(MeasureProfile);

impl DecreasingProfile {
    pub fn profile(&self) -> &MeasureProfile {
        &self.0
    }

    pub fn into_profile(self) -> MeasureProfile {
        self.0
    }
}

impl std::ops::Deref for DecreasingProfile {
    type Target = MeasureProfile;

    fn deref(&self) -> &MeasureProfile {
        &self.0
    }
}

/// Step representation of a radial profile: one cell per grid interval, value
/// equal to the measure-average of the piecewise-linear interpolant, so the
/// cell integrals match `RadialFunction::integrate` exactly.
pub fn cell_profile(h: &RadialFunction) -> MeasureProfile {
    let grid = h.grid();
    let cells: Vec<(f64, f64)> = (0..grid.len() - 1)
        .map(|k| {
            let mu = grid.cell_measure(k);
            let integral =
                grid.cell_left()[k] * h.values()[k] + grid.cell_right()[k] * h.values()[k + 1];
            (mu, integral / mu)
        })
        .collect();
    MeasureProfile::from_cells(grid.total_measure(), &cells)
}

fn flip_band(h: &RadialFunction) -> f64 {
    FLIP_BAND * h.sup_norm() * h.grid().total_measure()
}

/// Exact flip of the step representation: cells are split at the zero
/// crossings of the cumulative integral and negated where it is <= 0 (with the
/// [`FLIP_BAND`] convention).
pub fn flip_profile(h: &RadialFunction) -> MeasureProfile {
    let p = cell_profile(h);
    let band = flip_band(h);
    let cum = p.cumulative_at_breakpoints();
    let mut cells: Vec<(f64, f64)> = Vec::with_capacity(p.values().len() + 8);
    for k in 0..p.values().len() {
        let (s0, s1) = (cum[k], cum[k + 1]);
        let mu = p.cell_measure(k);
        let v = p.values()[k];
        let crossing = if (s0 > 0.0 && s1 < 0.0) || (s0 < 0.0 && s1 > 0.0) {
            let theta = s0 / (s0 - s1);
            if theta > 0.0 && theta < 1.0 {
                Some(theta)
            } else {
                None
            }
        } else {
            None
        };
        match crossing {
            Some(theta) => {
                // Within the cell the cumulative integral is linear, so each
                // sub-cell has a single sign, read off at its midpoint.
                let mid_left = s0 + (s1 - s0) * theta / 2.0;
                let mid_right = s0 + (s1 - s0) * (theta + 1.0) / 2.0;
                cells.push((mu * theta, if mid_left > band { v } else { -v }));
                cells.push((mu * (1.0 - theta), if mid_right > band { v } else { -v }));
            }
            None => {
                let mid = 0.5 * (s0 + s1);
                cells.push((mu, if mid > band { v } else { -v }));
            }
        }
    }
    MeasureProfile::from_cells(p.total(), &cells)
}

/// Nodal flip: negates h at nodes where the cumulative integral is <= 0
/// (within the band), leaves it unchanged elsewhere. |F h| = |h| pointwise.
pub fn flip(h: &RadialFunction) -> RadialFunction {
    let band = flip_band(h);
    let cum = h.cumulative_integral();
    let n = h.len();
    let values: Vec<f64> = (0..n)
        .map(|i| {
            // endpoints carry I h = 0; classify by the adjacent interior value
            let c = if i == 0 {
                cum.values()[1.min(n - 1)]
            } else if i == n - 1 {
                cum.values()[n - 2]
            } else {
                cum.values()[i]
            };
            if c > band {
                h.values()[i]
            } else {
                -h.values()[i]
            }
        })
        .collect();
    RadialFunction::new(h.grid().clone(), values).expect("flip preserves finiteness")
}

/// Decreasing rearrangement of the step representation of h.
pub fn decreasing_rearrangement(h: &RadialFunction) -> DecreasingProfile {
    cell_profile(h).sort_decreasing()
}

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

/// The star transformation in profile form: decreasing rearrangement of the
/// flipped profile. Exact on the step representation; requires zero average.
pub fn star_profile(h: &RadialFunction) -> Result<DecreasingProfile> {
    require_zero_average(h)?;
    Ok(flip_profile(h).sort_decreasing())
}

/// Resamples a measure profile back onto the radial grid through tau.
pub fn resample(profile: &MeasureProfile, h_grid: &RadialFunction) -> RadialFunction {
    let grid = h_grid.grid();
    let values: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&r| profile.eval(grid.measure_map(r).expect("node within domain")))
        .collect();
    RadialFunction::new(grid.clone(), values).expect("profile values are finite")
}

/// h* composed with tau: the star transform resampled at the grid nodes.
/// The result is non-increasing in r. Norm bookkeeping against the exact
/// profile is reported by [`resampling_drift`].
pub fn star_transform(h: &RadialFunction) -> Result<RadialFunction> {
    let profile = star_profile(h)?;
    Ok(resample(profile.profile(), h))
}

/// Schwarz symmetrization h^# composed with tau. Balls only.
pub fn schwarz_symmetrization(h: &RadialFunction) -> Result<RadialFunction> {
    match h.grid().kind() {
        DomainKind::Ball { .. } => {
            let profile = decreasing_rearrangement(h);
            Ok(resample(profile.profile(), h))
        }
        DomainKind::Annulus { .. } => Err(Error::UnsupportedDomain {
            operation: "Schwarz symmetrization",
            domain: "annulus",
        }),
        DomainKind::Interval => Err(Error::UnsupportedDomain {
            operation: "Schwarz symmetrization",
            domain: "interval",
        }),
    }
}

/// Relative L^t drift introduced by resampling a profile onto the grid.
pub fn resampling_drift(profile: &MeasureProfile, resampled: &RadialFunction, t: f64) -> f64 {
    let exact = profile.lp_norm(t);
    if exact == 0.0 {
        return 0.0;
    }
    (resampled.lp_norm(t) - exact).abs() / exact
}

/// Exact product integral of two step functions on a common measure interval.
pub fn profile_product_integral(a: &MeasureProfile, b: &MeasureProfile) -> Result<f64> {
    if (a.total() - b.total()).abs() > 1e-12 * a.total().max(1.0) {
        return Err(Error::InvalidArgument(
            "profiles live on different measure intervals".into(),
        ));
    }
    let mut total = 0.0;
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut s = 0.0;
    while ia < a.values().len() && ib < b.values().len() {
        let next = a.breakpoints()[ia + 1].min(b.breakpoints()[ib + 1]);
        total += (next - s) * a.values()[ia] * b.values()[ib];
        s = next;
        if a.breakpoints()[ia + 1] <= next + 0.0 {
            ia += 1;
        }
        if b.breakpoints()[ib + 1] <= next {
            ib += 1;
        }
    }
    Ok(total)
}

/// Exact evaluation of the measure-coordinate coupling
/// int g K f = (N omega_N)^{-2} int_0^{|Omega|} W_f(s) W_g(s) sigma(s)^(2(1/N - 1)) omega_N ds
/// for step profiles, where W(s) is the running integral and
/// sigma = s/omega_N + delta^N. Plain int W_f W_g ds on the interval.
///
/// Every factor is integrated in closed form cell by cell, so the
/// energy-decrease inequality for the star transformation holds to roundoff.
pub fn measure_coupling(
    f: &MeasureProfile,
    g: &MeasureProfile,
    kind: DomainKind,
    omega_n: f64,
) -> Result<f64> {
    if (f.total() - g.total()).abs() > 1e-12 * f.total().max(1.0) {
        return Err(Error::InvalidArgument(
            "profiles live on different measure intervals".into(),
        ));
    }
    let delta = match kind {
        DomainKind::Annulus { inner_radius, .. } => inner_radius,
        _ => 0.0,
    };
    let dim = kind.dimension() as f64;

    let mut total = 0.0;
    let (mut ifc, mut igc) = (0usize, 0usize);
    let mut s = 0.0;
    let (mut wf, mut wg) = (0.0, 0.0);
    while ifc < f.values().len() && igc < g.values().len() {
        let s1 = f.breakpoints()[ifc + 1].min(g.breakpoints()[igc + 1]);
        let (vf, vg) = (f.values()[ifc], g.values()[igc]);
        if s1 > s {
            if kind.is_interval() {
                // int (wf + vf x)(wg + vg x) dx over x in [0, L]
                let l = s1 - s;
                total += wf * wg * l
                    + (wf * vg + wg * vf) * l * l / 2.0
                    + vf * vg * l * l * l / 3.0;
            } else {
                // substitute sigma = s/omega_N + delta^N
                let sig0 = s / omega_n + delta.powf(dim);
                let sig1 = s1 / omega_n + delta.powf(dim);
                // W_f(sigma) = af + bf sigma on the cell
                let bf = vf * omega_n;
                let af = wf - bf * sig0;
                let bg = vg * omega_n;
                let ag = wg - bg * sig0;
                let gexp = 2.0 * (1.0 / dim - 1.0);
                let terms = [
                    (af * ag, gexp + 1.0),
                    (af * bg + ag * bf, gexp + 2.0),
                    (bf * bg, gexp + 3.0),
                ];
                let mut cell = 0.0;
                for (coef, e) in terms {
                    if coef == 0.0 {
                        continue;
                    }
                    // At sigma = 0 (first ball cell) the running integrals are
                    // zero, so the singular terms carry zero coefficients.
                    let anti = |sig: f64| -> f64 {
                        if e == 0.0 {
                            sig.ln()
                        } else {
                            sig.powf(e) / e
                        }
                    };
                    cell += coef * (anti(sig1) - anti(sig0));
                }
                total += cell * omega_n / (dim * omega_n).powi(2);
            }
            wf += vf * (s1 - s);
            wg += vg * (s1 - s);
            s = s1;
        }
        if f.breakpoints()[ifc + 1] <= s1 {
            ifc += 1;
        }
        if g.breakpoints()[igc + 1] <= s1 {
            igc += 1;
        }
    }
    Ok(total)
}
