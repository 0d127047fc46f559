//! Least-energy dual pairs: global descent in the sublinear regime and
//! Nehari-constrained descent in the superlinear regime.
//!
//! Both solvers run plain first-order descent with a backtracking line search
//! (signed powers with unbounded second derivatives make curvature estimates
//! unreliable), then hand over to a fixed-point polish that drives the
//! criticality residual toward roundoff. The sublinear polish iterates the
//! dual pair directly; the superlinear polish iterates (u, v), where every map
//! is smooth for p, q >= 1, renormalizes onto the Nehari ray each step, and
//! accelerates the fixed-point sequence with a short Anderson history. Both
//! polishes only ever accept residual-decreasing states, so a failed polish
//! degrades to the descent result rather than corrupting it.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{DualPair, Exponents, Regime, SolutionPair};
use crate::error::{Error, Result};
use crate::grid::{signed_power, RadialFunction, RadialGrid};
use crate::neumann::{apply_k_t, bilinear_t_unchecked, compatibility_shift};
use crate::rearrange::star_transform;

/// Knobs for the descent and polish stages.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub max_iterations: usize,
    pub step_init: f64,
    /// Backtracking factor in (0, 1).
    pub backtracking: f64,
    /// Descent stops once the gradient norm falls below this.
    pub grad_tol: f64,
    /// Descent stops once accepted phi decreases stagnate relative to |phi|.
    pub stagnation_tol: f64,
    /// Converged flag: criticality residual <= this times (1 + ||u|| + ||v||).
    pub criticality_tol: f64,
    pub polish_iterations: usize,
    /// Apply the star transformation to the iterate every this many accepted
    /// steps (0 disables interleaving; the convergence polish still runs).
    pub star_polish_every: usize,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iterations: 600,
            step_init: 1.0,
            backtracking: 0.5,
            grad_tol: 1e-10,
            stagnation_tol: 1e-15,
            criticality_tol: 1e-8,
            polish_iterations: 3000,
            star_polish_every: 50,
            seed: 0,
        }
    }
}

impl MinimizeOptions {
    fn validate(&self) -> Result<()> {
        if !(self.backtracking > 0.0 && self.backtracking < 1.0) {
            return Err(Error::InvalidArgument(
                "backtracking factor must lie in (0, 1)".into(),
            ));
        }
        if self.step_init <= 0.0
            || self.grad_tol <= 0.0
            || self.stagnation_tol <= 0.0
            || self.criticality_tol <= 0.0
        {
            return Err(Error::InvalidArgument(
                "steps and tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of a minimization run.
#[derive(Debug, Clone)]
pub struct MinResult {
    pub pair: DualPair,
    pub solution: SolutionPair,
    pub phi_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// phi after each accepted descent step; non-increasing.
    pub history: Vec<f64>,
}

/// Deterministic smooth zero-average seed: a centered linear profile plus
/// small seeded low-frequency noise, normalized in L^2.
fn seed_profile(grid: &Arc<RadialGrid>, seed: u64) -> RadialFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = grid.kind().inner_limit();
    let coeffs: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let base = RadialFunction::from_fn(grid.clone(), |r| {
        let x = (r - lo) / (1.0 - lo);
        let mut v = x - 0.5;
        for (k, c) in coeffs.iter().enumerate() {
            let k1 = (k + 1) as f64;
            v += 0.05 * c / (k1 * k1) * (std::f64::consts::PI * k1 * x).sin();
        }
        v
    })
    .expect("seed profile is finite")
    .project_zero_average();
    let norm = base.inner(&base).expect("same grid").sqrt();
    base.scale(1.0 / norm)
}

/// Criticality residual of a candidate pair, together with (u, v).
fn criticality(pair: &DualPair) -> Result<(f64, RadialFunction, RadialFunction)> {
    let e = &pair.exponents;
    let (u, _) = apply_k_t(&pair.g, e.p)?;
    let (v, _) = apply_k_t(&pair.f, e.q)?;
    let res_u = u
        .values()
        .iter()
        .zip(pair.f.values())
        .fold(0.0_f64, |m, (&uu, &ff)| {
            m.max((uu - signed_power(ff, e.alpha - 1.0)).abs())
        });
    let res_v = v
        .values()
        .iter()
        .zip(pair.g.values())
        .fold(0.0_f64, |m, (&vv, &gg)| {
            m.max((vv - signed_power(gg, e.beta - 1.0)).abs())
        });
    Ok((res_u + res_v, u, v))
}

/// Applies the star transformation to both components, restoring zero average
/// and the pre-transform norms (the resampling step can drift both).
pub fn star_polish(pair: &DualPair) -> Result<DualPair> {
    let e = pair.exponents;
    let norm_f = pair.f.lp_norm(e.alpha);
    let norm_g = pair.g.lp_norm(e.beta);
    let mut f = star_transform(&pair.f)?.project_zero_average();
    let mut g = star_transform(&pair.g)?.project_zero_average();
    let nf = f.lp_norm(e.alpha);
    let ng = g.lp_norm(e.beta);
    if nf > 0.0 && norm_f > 0.0 {
        f = f.scale(norm_f / nf);
    }
    if ng > 0.0 && norm_g > 0.0 {
        g = g.scale(norm_g / ng);
    }
    DualPair::new(f, g, e)
}

enum Projection {
    None,
    Nehari,
}

/// Backtracking descent on phi. For the superlinear regime every trial point
/// is projected onto the Nehari set before evaluating phi, mirroring the
/// sup-then-min structure of the constrained level.
fn descend(
    pair: &mut DualPair,
    opts: &MinimizeOptions,
    projection: Projection,
    history: &mut Vec<f64>,
) -> Result<usize> {
    let mut phi = pair.phi();
    let mut step = opts.step_init;
    let mut iterations = 0;
    let mut since_polish = 0usize;
    for _ in 0..opts.max_iterations {
        let grad = pair.gradient()?;
        let grad_norm2 = grad.f.inner(&grad.f)? + grad.g.inner(&grad.g)?;
        if grad_norm2.sqrt() <= opts.grad_tol {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let trial_f = pair.f.axpy(-step, &grad.f)?;
            let trial_g = pair.g.axpy(-step, &grad.g)?;
            let mut trial = DualPair {
                f: trial_f,
                g: trial_g,
                exponents: pair.exponents,
            };
            let feasible = match projection {
                Projection::None => true,
                Projection::Nehari => {
                    if bilinear_t_unchecked(&trial.f, &trial.g) > 0.0 {
                        trial = trial.project_nehari()?;
                        true
                    } else {
                        false
                    }
                }
            };
            if feasible {
                let trial_phi = trial.phi();
                if trial_phi <= phi - 1e-4 * step * grad_norm2 {
                    let gain = phi - trial_phi;
                    *pair = trial;
                    phi = trial_phi;
                    history.push(phi);
                    iterations += 1;
                    accepted = true;
                    step = (step * 1.5).min(1e6);
                    since_polish += 1;
                    if opts.star_polish_every > 0 && since_polish >= opts.star_polish_every {
                        since_polish = 0;
                        if let Ok(polished) = star_polish(pair) {
                            let candidate = match projection {
                                Projection::None => Some(polished),
                                Projection::Nehari => {
                                    if bilinear_t_unchecked(&polished.f, &polished.g) > 0.0 {
                                        polished.project_nehari().ok()
                                    } else {
                                        None
                                    }
                                }
                            };
                            if let Some(candidate) = candidate {
                                let polished_phi = candidate.phi();
                                if polished_phi <= phi {
                                    *pair = candidate;
                                    phi = polished_phi;
                                    history.push(phi);
                                }
                            }
                        }
                    }
                    if gain <= opts.stagnation_tol * (1.0 + phi.abs()) {
                        return Ok(iterations);
                    }
                    break;
                }
            }
            step *= opts.backtracking;
            if step < 1e-18 {
                return Ok(iterations);
            }
        }
        if !accepted {
            break;
        }
    }
    Ok(iterations)
}

/// Damped fixed-point polish in the dual variables (sublinear regime):
/// f <- P |u|^(p-1) u, g <- P |v|^(q-1) v. Accepts only residual decreases.
fn polish_sublinear(pair: &mut DualPair, opts: &MinimizeOptions) -> Result<f64> {
    let e = pair.exponents;
    let (mut residual, mut u, mut v) = criticality(pair)?;
    let mut damp = 1.0;
    for _ in 0..opts.polish_iterations {
        let target_f = u.map(|y| signed_power(y, e.p))?.project_zero_average();
        let target_g = v.map(|y| signed_power(y, e.q))?.project_zero_average();
        let trial_f = pair.f.scale(1.0 - damp).axpy(damp, &target_f)?;
        let trial_g = pair.g.scale(1.0 - damp).axpy(damp, &target_g)?;
        let trial = DualPair {
            f: trial_f,
            g: trial_g,
            exponents: e,
        };
        match criticality(&trial) {
            Ok((r, nu, nv)) if r < residual => {
                *pair = trial;
                residual = r;
                u = nu;
                v = nv;
                damp = (damp * 1.3).min(1.0);
            }
            _ => {
                damp *= 0.5;
                if damp < 1e-13 {
                    break;
                }
            }
        }
        let scale = 1.0 + u.sup_norm() + v.sup_norm();
        if residual <= 1e-15 * scale {
            break;
        }
    }
    Ok(residual)
}

/// Solves a small symmetric linear system in place (Anderson mixing weights).
fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let m = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= m * a[col][k];
            }
            b[row] -= m * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

struct UvState {
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Superlinear polish in (u, v): one Picard sweep is
/// u <- K_p(|v|^(q-1) v), v <- K_q(|u|^(p-1) u), followed by compatibility
/// shifts and a Nehari renormalization of the induced dual pair. A short
/// Anderson history accelerates the damped sequence.
fn polish_superlinear(pair: &mut DualPair, opts: &MinimizeOptions) -> Result<f64> {
    let e = pair.exponents;
    let grid = pair.f.grid().clone();
    let to_fn = |vals: &[f64]| RadialFunction::new(grid.clone(), vals.to_vec());

    let normalize = |u: &RadialFunction, v: &RadialFunction| -> Result<(RadialFunction, RadialFunction)> {
        let (u, _) = compatibility_shift(u, e.p)?;
        let (v, _) = compatibility_shift(v, e.q)?;
        let f = u.map(|y| signed_power(y, e.p))?;
        let g = v.map(|y| signed_power(y, e.q))?;
        let coupling = bilinear_t_unchecked(&f, &g);
        if coupling <= 0.0 {
            return Err(Error::NotProjectable { coupling });
        }
        let numerator = e.gamma1 * f.lp_norm(e.alpha).powf(e.alpha)
            + e.gamma2 * g.lp_norm(e.beta).powf(e.beta);
        let t = (numerator / coupling).powf(1.0 / (1.0 - e.gamma));
        Ok((
            u.scale(t.powf(e.gamma1 / e.p)),
            v.scale(t.powf(e.gamma2 / e.q)),
        ))
    };

    let sweep = |u: &RadialFunction, v: &RadialFunction| -> Result<(RadialFunction, RadialFunction)> {
        let g = v.map(|y| signed_power(y, e.q))?;
        let f = u.map(|y| signed_power(y, e.p))?;
        let (un, _) = apply_k_t(&g, e.p)?;
        let (vn, _) = apply_k_t(&f, e.q)?;
        Ok((un, vn))
    };

    let resid = |u: &RadialFunction, v: &RadialFunction, un: &RadialFunction, vn: &RadialFunction| {
        let du = u
            .values()
            .iter()
            .zip(un.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let dv = v
            .values()
            .iter()
            .zip(vn.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        du + dv
    };

    let (res0, u0, v0) = criticality(pair)?;
    let (mut u, mut v) = normalize(&u0, &v0)?;
    let (mut un, mut vn) = sweep(&u, &v)?;
    let mut residual = resid(&u, &v, &un, &vn);
    let _ = res0;
    let mut best: (Vec<f64>, Vec<f64>, f64) = (u.values().to_vec(), v.values().to_vec(), residual);

    let mut damp = 1.0;
    let depth = 6usize;
    let mut hist: Vec<(UvState, UvState)> = Vec::new(); // (x, G(x))
    for _ in 0..opts.polish_iterations {
        let mix = |a: &RadialFunction, b: &RadialFunction| -> RadialFunction {
            a.scale(1.0 - damp).axpy(damp, b).expect("same grid")
        };
        let trial = normalize(&mix(&u, &un), &mix(&v, &vn));
        let mut advanced = false;
        if let Ok((tu, tv)) = trial {
            if let Ok((tun, tvn)) = sweep(&tu, &tv) {
                let r = resid(&tu, &tv, &tun, &tvn);
                if r < residual {
                    u = tu;
                    v = tv;
                    un = tun;
                    vn = tvn;
                    residual = r;
                    damp = (damp * 1.3).min(1.0);
                    advanced = true;
                    hist.push((
                        UvState {
                            u: u.values().to_vec(),
                            v: v.values().to_vec(),
                        },
                        UvState {
                            u: un.values().to_vec(),
                            v: vn.values().to_vec(),
                        },
                    ));
                    if hist.len() > depth {
                        hist.remove(0);
                    }
                    // Anderson extrapolation over the stored residual history.
                    if hist.len() >= 3 {
                        let k = hist.len();
                        let res_vec = |s: &(UvState, UvState)| -> Vec<f64> {
                            s.1.u
                                .iter()
                                .zip(&s.0.u)
                                .map(|(a, b)| a - b)
                                .chain(s.1.v.iter().zip(&s.0.v).map(|(a, b)| a - b))
                                .collect()
                        };
                        let rs: Vec<Vec<f64>> = hist.iter().map(res_vec).collect();
                        let dr: Vec<Vec<f64>> = (1..k)
                            .map(|i| rs[i].iter().zip(&rs[i - 1]).map(|(a, b)| a - b).collect())
                            .collect();
                        let mut mat = vec![vec![0.0; k - 1]; k - 1];
                        let mut rhs = vec![0.0; k - 1];
                        for i in 0..k - 1 {
                            for j in 0..k - 1 {
                                mat[i][j] = dr[i].iter().zip(&dr[j]).map(|(a, b)| a * b).sum();
                            }
                            rhs[i] = dr[i].iter().zip(&rs[k - 1]).map(|(a, b)| a * b).sum();
                        }
                        let trace: f64 = (0..k - 1).map(|i| mat[i][i]).sum();
                        for (i, row) in mat.iter_mut().enumerate() {
                            row[i] += 1e-14 * trace.max(1e-300);
                        }
                        if let Some(theta) = solve_small(mat, rhs) {
                            let n = grid.len();
                            let mut acc_u = hist[k - 1].1.u.clone();
                            let mut acc_v = hist[k - 1].1.v.clone();
                            for (i, th) in theta.iter().enumerate() {
                                for j in 0..n {
                                    acc_u[j] -= th * (hist[i + 1].1.u[j] - hist[i].1.u[j]);
                                    acc_v[j] -= th * (hist[i + 1].1.v[j] - hist[i].1.v[j]);
                                }
                            }
                            if let (Ok(au), Ok(av)) = (to_fn(&acc_u), to_fn(&acc_v)) {
                                if let Ok((au, av)) = normalize(&au, &av) {
                                    if let Ok((aun, avn)) = sweep(&au, &av) {
                                        let ra = resid(&au, &av, &aun, &avn);
                                        if ra < residual {
                                            u = au;
                                            v = av;
                                            un = aun;
                                            vn = avn;
                                            residual = ra;
                                            let last = hist.len() - 1;
                                            hist[last] = (
                                                UvState {
                                                    u: u.values().to_vec(),
                                                    v: v.values().to_vec(),
                                                },
                                                UvState {
                                                    u: un.values().to_vec(),
                                                    v: vn.values().to_vec(),
                                                },
                                            );
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if advanced {
            if residual < best.2 {
                best = (u.values().to_vec(), v.values().to_vec(), residual);
            }
            let scale = 1.0 + u.sup_norm() + v.sup_norm();
            if residual <= 1e-14 * scale {
                break;
            }
        } else {
            damp *= 0.5;
            if damp < 1e-13 {
                break;
            }
        }
    }

    // Adopt the polished state only if it beats the incoming pair.
    let u = to_fn(&best.0)?;
    let v = to_fn(&best.1)?;
    let f = u.map(|y| signed_power(y, e.p))?;
    let g = v.map(|y| signed_power(y, e.q))?;
    if let Ok(candidate) = DualPair::new(f, g, e) {
        let (incoming, _, _) = criticality(pair)?;
        if let Ok((r, _, _)) = criticality(&candidate) {
            if r < incoming {
                *pair = candidate;
                return Ok(r);
            }
        }
        return Ok(incoming);
    }
    let (incoming, _, _) = criticality(pair)?;
    Ok(incoming)
}

fn finish(
    mut pair: DualPair,
    opts: &MinimizeOptions,
    iterations: usize,
    mut history: Vec<f64>,
) -> Result<MinResult> {
    // final monotonization; adopt only when it does not raise phi
    if let Ok(polished) = star_polish(&pair) {
        let candidate = match pair.exponents.regime {
            Regime::Sublinear => Some(polished),
            Regime::Superlinear => {
                if bilinear_t_unchecked(&polished.f, &polished.g) > 0.0 {
                    polished.project_nehari().ok()
                } else {
                    None
                }
            }
        };
        if let Some(candidate) = candidate {
            if candidate.phi() <= pair.phi() {
                pair = candidate;
            }
        }
    }
    let residual = match pair.exponents.regime {
        Regime::Sublinear => polish_sublinear(&mut pair, opts)?,
        Regime::Superlinear => polish_superlinear(&mut pair, opts)?,
    };
    let solution = pair.recover_solution()?;
    let phi_value = pair.phi();
    if let Some(&last) = history.last() {
        if phi_value < last {
            history.push(phi_value);
        }
    }
    let scale = 1.0 + solution.u.sup_norm() + solution.v.sup_norm();
    let sign_ok = match pair.exponents.regime {
        Regime::Sublinear => phi_value < 0.0,
        Regime::Superlinear => phi_value > 0.0,
    };
    let converged = sign_ok && residual <= opts.criticality_tol * scale;
    Ok(MinResult {
        pair,
        solution,
        phi_value,
        iterations,
        converged,
        history,
    })
}

/// Global minimization of phi over zero-average pairs (pq < 1).
///
/// The seed is scaled along the Nehari ray so that phi at the start is
/// already negative; descent then keeps the energy history non-increasing and
/// the polish drives the criticality residual toward roundoff.
pub fn minimize_sublinear(
    grid: &Arc<RadialGrid>,
    exponents: Exponents,
    opts: &MinimizeOptions,
) -> Result<MinResult> {
    opts.validate()?;
    if exponents.regime != Regime::Sublinear {
        return Err(Error::Precondition(
            "minimize_sublinear requires pq < 1".into(),
        ));
    }
    let seed = seed_profile(grid, opts.seed);
    let base = DualPair::new(seed.clone(), seed, exponents)?;

    // scale so that phi(start) < 0: phi(t) = t^gamma Psi - t T with gamma > 1
    let mut best_t = 0.0;
    let mut best_phi = f64::INFINITY;
    for i in 0..61 {
        let t = 10f64.powf(-4.0 + 6.0 * i as f64 / 60.0);
        let phi = base.nehari_scaled(t).phi();
        if phi < best_phi {
            best_phi = phi;
            best_t = t;
        }
    }
    if !(best_phi < 0.0) {
        return Err(Error::Numerical(
            "could not find a negative-energy starting scale".into(),
        ));
    }
    let mut pair = base.nehari_scaled(best_t);
    let mut history = vec![pair.phi()];
    let iterations = descend(&mut pair, opts, Projection::None, &mut history)?;
    finish(pair, opts, iterations, history)
}

/// Minimization of phi over the Nehari set (pq > 1, subcritical).
pub fn minimize_superlinear(
    grid: &Arc<RadialGrid>,
    exponents: Exponents,
    opts: &MinimizeOptions,
) -> Result<MinResult> {
    opts.validate()?;
    if exponents.regime != Regime::Superlinear {
        return Err(Error::Precondition(
            "minimize_superlinear requires pq > 1".into(),
        ));
    }
    let mut pair = None;
    for attempt in 0..5 {
        let seed = seed_profile(grid, opts.seed.wrapping_add(attempt));
        let candidate = DualPair::new(seed.clone(), seed, exponents)?;
        if bilinear_t_unchecked(&candidate.f, &candidate.g) > 0.0 {
            pair = Some(candidate.project_nehari()?);
            break;
        }
    }
    let mut pair = pair.ok_or(Error::NotProjectable { coupling: 0.0 })?;
    let mut history = vec![pair.phi()];
    let iterations = descend(&mut pair, opts, Projection::Nehari, &mut history)?;
    finish(pair, opts, iterations, history)
}

/// Regime dispatch on the exponents.
pub fn minimize(
    grid: &Arc<RadialGrid>,
    exponents: Exponents,
    opts: &MinimizeOptions,
) -> Result<MinResult> {
    match exponents.regime {
        Regime::Sublinear => minimize_sublinear(grid, exponents, opts),
        Regime::Superlinear => minimize_superlinear(grid, exponents, opts),
    }
}
