//! Difference system between the scaled and hydrostatic solutions.
//!
//! With `U = (V, W) = u_ε − u` and `u = (v, w)` a hydrostatic solution, the
//! unknown `X = (V, εW)` solves the scaled Stokes system with forcing
//! `(F_H, ε F_z + ε F)`, where
//! `F_H = −[U·∇V + u·∇V + U·∇v]`, `F_z = −[U·∇W + u·∇W + U·∇w]` and
//! `F = −[∂_t w − Δw + u·∇w]`. It is solved by Picard iteration, one
//! maximal-regularity solve per sweep, on subintervals short enough for the
//! iteration to contract.

use super::{uniform_derivative4, Advection, Trajectory};
use crate::fields::norms::{hessian_lq, lq_norm, time_derivative, time_lp};
use crate::fields::{e1_norm, Grid, NormSpec, SpectralField, VectorField};
use crate::functional_calculus::mr_solve_sampled;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `F_H`, `F_z` and `F` at one time.
#[derive(Clone, Debug)]
pub struct ForcingTriple {
    pub f_h: [SpectralField; 2],
    pub f_z: SpectralField,
    pub f: SpectralField,
}

/// `F = −[∂_t w − Δw + u·∇w]` for a hydrostatic sample.
pub fn pe_defect(adv: &Advection, u: [&SpectralField; 3], dt_w: &SpectralField) -> SpectralField {
    let a = adv.transport(u);
    let uw = adv.apply(&a, &[u[2]]).pop().unwrap();
    &(&u[2].laplacian(&adv.cheb) - dt_w) - &uw
}

/// All three forcing terms for `U = (V, W)` against `u = (v, w)`.
pub fn forcing_terms(adv: &Advection, big: [&SpectralField; 3], u: [&SpectralField; 3], dt_w: &SpectralField) -> ForcingTriple {
    let (fh, fz) = coupling(adv, big, u);
    ForcingTriple {
        f_h: fh,
        f_z: fz,
        f: pe_defect(adv, u, dt_w),
    }
}

/// `(F_H, F_z)`: transport by `U + u` of `U`, plus transport by `U` of `u`.
fn coupling(adv: &Advection, big: [&SpectralField; 3], u: [&SpectralField; 3]) -> ([SpectralField; 2], SpectralField) {
    let sum = [0, 1, 2].map(|c| big[c] + u[c]);
    let a_sum = adv.transport([&sum[0], &sum[1], &sum[2]]);
    let a_big = adv.transport(big);
    let first = adv.apply(&a_sum, &big);
    let second = adv.apply(&a_big, &u);
    let f = |c: usize| (&first[c] + &second[c]).scale_re(-1.0);
    ([f(0), f(1)], f(2))
}

/// Controls for [`difference_iteration`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceOptions {
    /// Stop when `‖X_{j+1} − X_j‖_{E₁} ≤ tol ‖X_1‖_{E₁}`.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest `‖u‖_{E₁}` allowed on one subinterval; `∞` disables splitting.
    pub split_budget: f64,
    pub p: f64,
    pub q: f64,
}

impl Default for DifferenceOptions {
    fn default() -> Self {
        DifferenceOptions {
            tol: 1e-8,
            max_iter: 80,
            split_budget: 20.0,
            p: 2.0,
            q: 2.0,
        }
    }
}

/// Output of [`difference_iteration`].
#[derive(Clone, Debug)]
pub struct DifferenceResult {
    pub epsilon: f64,
    pub times: Vec<f64>,
    /// `X = (V, εW)` per sample.
    pub x: Vec<VectorField>,
    /// Sample index ranges of the subintervals (inclusive).
    pub subintervals: Vec<(usize, usize)>,
    /// Successive-difference ratios per subinterval.
    pub ratios: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Largest final relative increment `‖X_{j+1} − X_j‖/‖X_1‖` over the subintervals.
    pub residual: f64,
    /// `‖X‖_{E₁(0,T)}`.
    pub e1: f64,
    pub e1_parts: (f64, f64, f64),
}

impl DifferenceResult {
    /// Largest recorded contraction ratio.
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().flatten().copied().fold(0.0, f64::max)
    }
}

fn vector_traj(x: &[VectorField]) -> Vec<Vec<SpectralField>> {
    x.iter().map(|v| v.c.to_vec()).collect()
}

/// Prefix integrals of `‖u‖^p`, `‖∂_t u‖^p`, `‖∇²u‖^p` for subinterval norms.
struct E1Profile {
    times: Vec<f64>,
    p: f64,
    vals: [Vec<f64>; 3],
}

impl E1Profile {
    fn new(traj: &[Vec<SpectralField>], times: &[f64], p: f64, q: f64, grid: &Grid) -> Result<Self> {
        let dt = time_derivative(traj, times)?;
        let norm = |u: &Vec<SpectralField>| {
            let parts: Vec<_> = u.iter().map(|f| (f, 1.0)).collect();
            lq_norm(&parts, q, &grid.cheb)
        };
        let a = traj.par_iter().map(norm).collect();
        let b = dt.par_iter().map(norm).collect();
        let c = traj.par_iter().map(|u| hessian_lq(u, q, &grid.cheb)).collect();
        Ok(E1Profile {
            times: times.to_vec(),
            p,
            vals: [a, b, c],
        })
    }

    fn norm(&self, lo: usize, hi: usize) -> f64 {
        self.vals
            .iter()
            .map(|v| time_lp(&v[lo..=hi], &self.times[lo..=hi], self.p).unwrap_or(f64::INFINITY))
            .sum()
    }

    /// Greedy partition with every piece holding at least two steps.
    fn partition(&self, budget: f64) -> Vec<(usize, usize)> {
        let n = self.times.len();
        let mut out = Vec::new();
        let mut lo = 0;
        while lo < n - 1 {
            let mut hi = (lo + 2).min(n - 1);
            while hi < n - 1 && self.norm(lo, hi + 1) <= budget {
                hi += 1;
            }
            // avoid a one-step tail
            if n - 1 - hi == 1 {
                hi = n - 1;
            }
            out.push((lo, hi));
            lo = hi;
        }
        out
    }
}

/// Solves the difference system for the hydrostatic trajectory `pe` by
/// Picard iteration with interval splitting and trace hand-off.
pub fn difference_iteration(pe: &Trajectory, eps: f64, opts: &DifferenceOptions) -> Result<DifferenceResult> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Parameter(format!("epsilon must lie in (0, 1], got {eps}")));
    }
    if !(opts.tol > 0.0) || opts.max_iter < 2 || !(opts.split_budget > 0.0) {
        return Err(Error::Parameter("invalid difference-iteration options".into()));
    }
    let grid = Grid::new(pe.nh, pe.nz);
    let times = &pe.times;
    let n = times.len();
    if n < 5 {
        return Err(Error::Domain("need at least 5 time samples".into()));
    }
    let dt = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt) {
        return Err(Error::Domain("the hydrostatic trajectory must be uniformly sampled".into()));
    }
    let adv = Advection::new(&grid);
    let u: Vec<[SpectralField; 3]> = pe
        .states
        .iter()
        .map(|s| [s.vh[0].clone(), s.vh[1].clone(), s.w.clone()])
        .collect();
    let ws: Vec<SpectralField> = u.iter().map(|c| c[2].clone()).collect();
    let dt_w = uniform_derivative4(&ws, dt)?;
    let f_pe: Vec<SpectralField> = (0..n)
        .into_par_iter()
        .map(|i| pe_defect(&adv, [&u[i][0], &u[i][1], &u[i][2]], &dt_w[i]))
        .collect();
    let u_traj: Vec<Vec<SpectralField>> = u.iter().map(|c| c.to_vec()).collect();
    let profile = E1Profile::new(&u_traj, times, opts.p, opts.q, &grid)?;
    let pieces = profile.partition(opts.split_budget);

    let forcing = |x: &VectorField, i: usize| -> VectorField {
        let big_w = x.c[2].scale_re(1.0 / eps);
        let (fh, fz) = coupling(&adv, [&x.c[0], &x.c[1], &big_w], [&u[i][0], &u[i][1], &u[i][2]]);
        let [f1, f2] = fh;
        VectorField::new(f1, f2, (&fz + &f_pe[i]).scale_re(eps))
    };

    let mut x_all: Vec<VectorField> = vec![VectorField::zeros(grid.nh, grid.nz)];
    let mut ratios = Vec::new();
    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    for &(lo, hi) in &pieces {
        let sub_times = &times[lo..=hi];
        let spec = NormSpec::new(opts.p, opts.q, sub_times.to_vec())?;
        let x0 = x_all.last().unwrap().clone();
        let mut x: Vec<VectorField> = vec![x0.clone(); hi - lo + 1];
        let mut history = Vec::new();
        let mut prev_diff: Option<f64> = None;
        // the first iterate fixes the scale of the stopping test
        let mut size: Option<f64> = None;
        let mut converged = false;
        for _ in 0..opts.max_iter {
            iterations += 1;
            let g: Vec<VectorField> = (lo..=hi).into_par_iter().map(|i| forcing(&x[i - lo], i)).collect();
            let next = mr_solve_sampled(eps, g, &x0, sub_times, &grid, false)?.u;
            let diff: Vec<VectorField> = next.iter().zip(&x).map(|(a, b)| a.sub(b)).collect();
            let d = e1_norm(&vector_traj(&diff), &spec, &grid.cheb)?;
            if size.is_none() {
                size = Some(e1_norm(&vector_traj(&next), &spec, &grid.cheb)?);
            }
            x = next;
            if !d.is_finite() {
                return Err(Error::Nonconvergence("difference iteration produced non-finite values".into()));
            }
            if let Some(pd) = prev_diff {
                if pd > 0.0 {
                    history.push(d / pd);
                }
            }
            prev_diff = Some(d);
            if d <= opts.tol * size.unwrap_or(0.0) || d == 0.0 {
                let s = size.unwrap_or(0.0);
                residual = residual.max(if s > 0.0 { d / s } else { 0.0 });
                converged = true;
                break;
            }
            if history.len() >= 4 && history[history.len() - 4..].iter().all(|&r| r > 1.0) {
                break;
            }
        }
        if !converged {
            return Err(Error::Nonconvergence(format!(
                "difference iteration on [{}, {}] did not contract (ratios {:?})",
                sub_times[0],
                sub_times[sub_times.len() - 1],
                history
            )));
        }
        ratios.push(history);
        x_all.extend(x.into_iter().skip(1));
    }
    let spec = NormSpec::new(opts.p, opts.q, times.clone())?;
    let traj = vector_traj(&x_all);
    let parts = crate::fields::norms::e1_parts(&traj, &spec, &grid.cheb)?;
    Ok(DifferenceResult {
        epsilon: eps,
        times: times.clone(),
        x: x_all,
        subintervals: pieces,
        ratios,
        iterations,
        residual,
        e1: parts.0 + parts.1 + parts.2,
        e1_parts: parts,
    })
}

/// `‖(v_ε − v, ε(w_ε − w))‖_{E₁}` from two sampled runs on the same grid.
pub fn direct_difference(sns: &Trajectory, pe: &Trajectory, eps: f64, p: f64, q: f64) -> Result<(f64, (f64, f64, f64))> {
    if sns.times.len() != pe.times.len() {
        return Err(Error::Dimension {
            expected: pe.times.len(),
            actual: sns.times.len(),
        });
    }
    let cheb = crate::fields::Cheb::new(pe.nz);
    let traj: Vec<Vec<SpectralField>> = sns
        .states
        .iter()
        .zip(&pe.states)
        .map(|(a, b)| {
            vec![
                &a.vh[0] - &b.vh[0],
                &a.vh[1] - &b.vh[1],
                (&a.w - &b.w).scale_re(eps),
            ]
        })
        .collect();
    let spec = NormSpec::new(p, q, pe.times.clone())?;
    let parts = crate::fields::norms::e1_parts(&traj, &spec, &cheb)?;
    Ok((parts.0 + parts.1 + parts.2, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate_pe, InitialData, SimParams};

    fn params() -> SimParams {
        SimParams {
            nh: 3,
            nz: 24,
            t_final: 0.125,
            dt: 1.0 / 64.0,
            amplitude: 1.0,
            initial: InitialData::Default,
        }
    }

    #[test]
    fn forcing_vanishes_for_zero_difference() {
        let pe = simulate_pe(&params()).unwrap();
        let grid = params().grid();
        let adv = Advection::new(&grid);
        let z = SpectralField::zeros(grid.nh, grid.nz);
        let s = &pe.states[3];
        let (fh, fz) = coupling(&adv, [&z, &z, &z], [&s.vh[0], &s.vh[1], &s.w]);
        assert_eq!(fh[0].max_abs() + fh[1].max_abs() + fz.max_abs(), 0.0);
    }

    #[test]
    fn pe_defect_matches_second_order_difference() {
        let p = params();
        let pe = simulate_pe(&p).unwrap();
        let grid = p.grid();
        let adv = Advection::new(&grid);
        let ws: Vec<SpectralField> = pe.states.iter().map(|s| s.w.clone()).collect();
        let d4 = uniform_derivative4(&ws, p.dt).unwrap();
        let i = 4;
        let d2 = (&ws[i + 1] - &ws[i - 1]).scale_re(0.5 / p.dt);
        let s = &pe.states[i];
        let a = pe_defect(&adv, [&s.vh[0], &s.vh[1], &s.w], &d4[i]);
        let b = pe_defect(&adv, [&s.vh[0], &s.vh[1], &s.w], &d2);
        let gap = (&a - &b).max_abs() / d4[i].max_abs();
        assert!(gap < 1e-2, "{gap}");
    }

    #[test]
    fn partition_covers_the_interval() {
        let pe = simulate_pe(&params()).unwrap();
        let grid = params().grid();
        let traj = pe.velocities();
        let prof = E1Profile::new(&traj, &pe.times, 2.0, 2.0, &grid).unwrap();
        for budget in [f64::INFINITY, 0.5, 0.05] {
            let parts = prof.partition(budget);
            assert_eq!(parts[0].0, 0);
            assert_eq!(parts.last().unwrap().1, pe.times.len() - 1);
            for w in parts.windows(2) {
                assert_eq!(w[0].1, w[1].0);
            }
            assert!(parts.iter().all(|(a, b)| b - a >= 2));
        }
    }

    #[test]
    fn picard_agrees_with_direct_difference() {
        let p = params();
        let pe = simulate_pe(&p).unwrap();
        let eps = 0.1;
        let sns = crate::dynamics::simulate_sns(&p, eps).unwrap();
        let r = difference_iteration(&pe, eps, &DifferenceOptions::default()).unwrap();
        let (direct, _) = direct_difference(&sns, &pe, eps, 2.0, 2.0).unwrap();
        let rel = (r.e1 - direct).abs() / direct;
        assert!(rel < 0.1, "picard {} direct {}", r.e1, direct);
        assert!(r.max_ratio() < 1.0);
    }
}
