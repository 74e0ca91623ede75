//! Anisotropic Stokes resolvent `(λ − Δ)u + ∇_ε π = f`, `div_ε u = 0`,
//! `u(±1) = 0` on the layer.
//!
//! [`stokes_resolvent`] assembles the solution mode by mode from the cylinder
//! solve (I), the boundary corrector (II) and the harmonic pressure (III);
//! [`oracle_resolvent`] is an independent collocation solve of the same system.

pub mod kernel;
pub mod oracle;

pub use kernel::{invert_s, zero_mode_solve, Corrector, KernelMode, KernelModeSolution, ModeBoundaryData, ModeConvolutions};
pub use oracle::{ModeOperator, ModeSolution, ModeState, Pencil};

use crate::fields::{remove_mean, Cheb, Grid, HorizontalMode, SpectralField, VectorField};
use crate::projections::{mode_columns, real_times, set_mode_columns};
use crate::symbols::{s_lambda, ResolventQuery};
use crate::{Error, Result, C64};
use nalgebra::{DVector, Matrix4, Vector4};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;

type Cols = [DVector<C64>; 3];

/// Tolerances and switches of [`stokes_resolvent`].
#[derive(Clone, Copy, Debug)]
pub struct ResolventOptions {
    pub residual_tol: f64,
    pub agreement_tol: f64,
    pub trace_tol: f64,
    /// Largest accepted 1-norm condition number of `S_{λ,ε}`.
    pub cond_max: f64,
    /// Route modes with ill-conditioned `S` to the collocation solve.
    pub fallback: bool,
    /// Evaluate the residual on a refined vertical grid.
    pub compute_residual: bool,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        ResolventOptions {
            residual_tol: 1e-8,
            agreement_tol: 1e-6,
            trace_tol: 1e-9,
            cond_max: 1e10,
            fallback: true,
            compute_residual: true,
        }
    }
}

/// The pieces `(v₁, v₂, ∇_ε π₃)` of `u = v₁ − ∇_ε π₃ − v₂`.
#[derive(Clone, Debug)]
pub struct ResolventParts {
    pub v1: VectorField,
    pub v2: VectorField,
    pub grad_pi3: VectorField,
}

/// Relative residuals of the resolvent system, in the max norm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ResidualReport {
    pub momentum: f64,
    pub divergence: f64,
    pub wall: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.momentum.max(self.divergence).max(self.wall)
    }
}

/// Output of [`stokes_resolvent`] and [`oracle_resolvent`].
#[derive(Clone, Debug)]
pub struct ResolventSolution {
    pub u: VectorField,
    pub grad_pressure: VectorField,
    /// Mean-free pressure.
    pub pressure: SpectralField,
    pub residual_norm: f64,
    pub residual: ResidualReport,
    /// `None` for the collocation solve.
    pub parts: Option<ResolventParts>,
    /// Modes routed to the collocation solve.
    pub fallback_modes: Vec<HorizontalMode>,
    pub max_condition: f64,
}

/// Vertical grid on which residuals of the kernel solution are measured.
pub fn refined_cheb(nz: usize) -> Cheb {
    Cheb::new((nz + 16).max(48))
}

struct ModeOut {
    u: Cols,
    grad_p: Cols,
    parts: Option<(Cols, Cols, Cols)>,
    /// Solution on the refined grid, for the residual.
    refined: Option<(Cols, Cols)>,
    fallback: bool,
    condition: f64,
}

fn split(c: &Cols, at: usize) -> (Cols, Cols) {
    let m = c[0].len();
    (
        [0, 1, 2].map(|j| c[j].rows(0, at).into_owned()),
        [0, 1, 2].map(|j| c[j].rows(at, m - at).into_owned()),
    )
}

fn zeros(m: usize) -> Cols {
    [DVector::zeros(m), DVector::zeros(m), DVector::zeros(m)]
}

/// Pressure of one mode from its gradient: `π = −i n·∇_H π / |n|²`; the zero
/// mode integrates `∂₃π/ε`.
fn pressure_column(n: HorizontalMode, grad_p: &Cols, eps: f64, cheb: &Cheb) -> DVector<C64> {
    if n.is_zero() {
        return real_times(&cheb.cumint, &grad_p[2]) * C64::new(eps, 0.0);
    }
    let [n1, n2] = n.as_f64();
    let k2 = n.k2() as f64;
    (&grad_p[0] * C64::from(n1) + &grad_p[1] * C64::from(n2)) * C64::new(0.0, -1.0 / k2)
}

/// Max-norm residual of one mode on `cheb`, with interior rows `lo..hi`.
/// Returns `(momentum, divergence, wall, forcing)` unnormalized.
fn mode_residual(lambda: C64, eps: f64, n: HorizontalMode, u: &Cols, gp: &Cols, f: &Cols, cheb: &Cheb, lo: usize, hi: usize) -> [f64; 4] {
    let k2 = n.k2() as f64;
    let [n1, n2] = n.as_f64();
    let i = C64::new(0.0, 1.0);
    let mut mom = 0.0f64;
    for c in 0..3 {
        let r = &u[c] * (lambda + k2) - real_times(&cheb.d2, &u[c]) + &gp[c] - &f[c];
        mom = mom.max(r.rows(lo, hi - lo).camax());
    }
    let div = &u[0] * (i * n1) + &u[1] * (i * n2) + real_times(&cheb.d1, &u[2]) * C64::from(1.0 / eps);
    let m = u[0].len();
    let wall = (0..3).map(|c| u[c][0].norm().max(u[c][m - 1].norm())).fold(0.0, f64::max);
    let fmax = (0..3).map(|c| f[c].camax()).fold(0.0, f64::max);
    [mom, div.camax(), wall, fmax]
}

fn finish_residual(per_mode: impl Iterator<Item = [f64; 4]>) -> ResidualReport {
    let mut acc = [0.0f64; 4];
    for r in per_mode {
        for j in 0..4 {
            acc[j] = acc[j].max(r[j]);
        }
    }
    if acc[3] == 0.0 {
        return ResidualReport {
            momentum: acc[0],
            divergence: acc[1],
            wall: acc[2],
        };
    }
    ResidualReport {
        momentum: acc[0] / acc[3],
        divergence: acc[1] / acc[3],
        wall: acc[2] / acc[3],
    }
}

fn check_field(f: &VectorField, grid: &Grid) -> Result<()> {
    if f.nz() != grid.nz {
        return Err(Error::Dimension {
            expected: grid.nz,
            actual: f.nz(),
        });
    }
    if f.nh() != grid.nh {
        return Err(Error::Dimension {
            expected: grid.nh,
            actual: f.nh(),
        });
    }
    Ok(())
}

/// Kernel convolutions for every distinct `|n|²` of the grid at the given targets.
fn convolution_table(q: &ResolventQuery, grid: &Grid, targets: &[f64]) -> HashMap<i64, ModeConvolutions> {
    let mut k2s: Vec<i64> = (0..grid.n_modes()).map(|i| grid.mode(i).k2()).collect();
    k2s.sort_unstable();
    k2s.dedup();
    k2s.par_iter()
        .map(|&k2| {
            let k = (k2 as f64).sqrt();
            let s = (q.lambda + k * k).sqrt();
            let a = if k2 == 0 { 0.0 } else { q.epsilon * k };
            (k2, ModeConvolutions::new(&grid.cheb, s, a, targets))
        })
        .collect()
}

/// Solves the resolvent system by the kernel decomposition.
///
/// Modes whose `S_{λ,ε}` is singular or ill-conditioned are solved by the
/// collocation oracle when `opts.fallback` is set and reported in
/// `fallback_modes`; otherwise the resolvent-radius error is returned.
pub fn stokes_resolvent(q: &ResolventQuery, f: &VectorField, grid: &Grid, opts: &ResolventOptions) -> Result<ResolventSolution> {
    check_field(f, grid)?;
    let cheb = &grid.cheb;
    let nz = grid.nz;
    let fine = refined_cheb(nz);
    let mut targets = cheb.nodes.clone();
    if opts.compute_residual {
        targets.extend_from_slice(&fine.nodes);
    }
    let table = convolution_table(q, grid, &targets);
    let interp_fine = cheb.interp_matrix(&fine.nodes);
    let eps = q.epsilon;
    let lambda = q.lambda;

    let outs: Vec<Result<ModeOut>> = (0..grid.n_modes())
        .into_par_iter()
        .map(|idx| {
            let n = grid.mode(idx);
            let fc = mode_columns(f, idx);
            let conv = &table[&n.k2()];
            let (full, parts, fallback, condition) = if n.is_zero() {
                let u = zero_mode_solve(lambda, &fc, conv, &targets);
                let m = targets.len();
                let mut gp = zeros(m);
                gp[2] = real_times(&conv.interp, &fc[2]);
                ((u, gp), None, false, 1.0)
            } else {
                let km = KernelMode::new(lambda, eps, n, &targets, conv)?;
                match km.solve(&fc, opts.cond_max) {
                    Ok(sol) => ((sol.u, sol.grad_p), Some((sol.v1, sol.v2, sol.grad_pi3)), false, sol.condition),
                    Err(Error::ResolventRadius { .. }) if opts.fallback => {
                        let op = ModeOperator::new(cheb, n, eps)?;
                        let s = op.resolvent(lambda, &fc)?;
                        let mut u = zeros(targets.len());
                        let mut gp = zeros(targets.len());
                        let interp = &conv.interp;
                        for c in 0..3 {
                            u[c] = real_times(interp, &s.u[c]);
                            gp[c] = real_times(interp, &s.grad_p[c]);
                        }
                        ((u, gp), None, true, f64::INFINITY)
                    }
                    Err(e) => return Err(e),
                }
            };
            let (u, u_fine) = split(&full.0, nz);
            let (grad_p, gp_fine) = split(&full.1, nz);
            let parts = parts.map(|(a, b, c)| (split(&a, nz).0, split(&b, nz).0, split(&c, nz).0));
            let refined = opts.compute_residual.then_some((u_fine, gp_fine));
            Ok(ModeOut {
                u,
                grad_p,
                parts,
                refined,
                fallback,
                condition,
            })
        })
        .collect();

    let mut u = VectorField::zeros(grid.nh, nz);
    let mut gp = VectorField::zeros(grid.nh, nz);
    let mut pressure = SpectralField::zeros(grid.nh, nz);
    let mut v1 = VectorField::zeros(grid.nh, nz);
    let mut v2 = VectorField::zeros(grid.nh, nz);
    let mut g3 = VectorField::zeros(grid.nh, nz);
    let mut fallback_modes = Vec::new();
    let mut max_condition = 0.0f64;
    let mut residuals = Vec::new();
    for (idx, out) in outs.into_iter().enumerate() {
        let out = out?;
        let n = grid.mode(idx);
        set_mode_columns(&mut u, idx, &out.u);
        set_mode_columns(&mut gp, idx, &out.grad_p);
        pressure.column_mut(idx).copy_from_slice(pressure_column(n, &out.grad_p, eps, cheb).as_slice());
        match &out.parts {
            Some((a, b, c)) => {
                set_mode_columns(&mut v1, idx, a);
                set_mode_columns(&mut v2, idx, b);
                set_mode_columns(&mut g3, idx, c);
            }
            // zero mode and fallback modes: the whole solution counts as v₁
            None => set_mode_columns(&mut v1, idx, &out.u),
        }
        if out.fallback {
            fallback_modes.push(n);
        } else {
            max_condition = max_condition.max(out.condition);
        }
        if let Some((uf, gf)) = &out.refined {
            let fc = mode_columns(f, idx);
            let ff = [0, 1, 2].map(|c| real_times(&interp_fine, &fc[c]));
            residuals.push(mode_residual(lambda, eps, n, uf, gf, &ff, &fine, 1, fine.n - 1));
        }
    }
    remove_mean(&mut pressure, cheb);
    let residual = finish_residual(residuals.into_iter());
    Ok(ResolventSolution {
        u,
        grad_pressure: gp,
        pressure,
        residual_norm: residual.max(),
        residual,
        parts: Some(ResolventParts { v1, v2, grad_pi3: g3 }),
        fallback_modes,
        max_condition,
    })
}

/// Solves the resolvent system by per-mode collocation.
pub fn oracle_resolvent(q: &ResolventQuery, f: &VectorField, grid: &Grid) -> Result<ResolventSolution> {
    check_field(f, grid)?;
    let cheb = &grid.cheb;
    let nz = grid.nz;
    let eps = q.epsilon;
    let outs: Vec<Result<(ModeSolution, [f64; 4])>> = (0..grid.n_modes())
        .into_par_iter()
        .map(|idx| {
            let n = grid.mode(idx);
            let fc = mode_columns(f, idx);
            let op = ModeOperator::new(cheb, n, eps)?;
            let s = op.resolvent(q.lambda, &fc)?;
            // collocation rows of the clamped block
            let r = mode_residual(q.lambda, eps, n, &s.u, &s.grad_p, &fc, cheb, 2, nz - 2);
            Ok((s, r))
        })
        .collect();
    let mut u = VectorField::zeros(grid.nh, nz);
    let mut gp = VectorField::zeros(grid.nh, nz);
    let mut pressure = SpectralField::zeros(grid.nh, nz);
    let mut residuals = Vec::new();
    for (idx, out) in outs.into_iter().enumerate() {
        let (s, r) = out?;
        set_mode_columns(&mut u, idx, &s.u);
        set_mode_columns(&mut gp, idx, &s.grad_p);
        pressure.column_mut(idx).copy_from_slice(s.p.as_slice());
        residuals.push(r);
    }
    remove_mean(&mut pressure, cheb);
    let residual = finish_residual(residuals.into_iter());
    Ok(ResolventSolution {
        u,
        grad_pressure: gp,
        pressure,
        residual_norm: residual.max(),
        residual,
        parts: None,
        fallback_modes: Vec::new(),
        max_condition: 0.0,
    })
}

/// Relative L² gap `‖a − b‖ / ‖b‖`.
pub fn relative_gap(a: &VectorField, b: &VectorField, cheb: &Cheb) -> f64 {
    let nb = b.l2_norm(cheb);
    let d = a.sub(b).l2_norm(cheb);
    if nb == 0.0 {
        d
    } else {
        d / nb
    }
}

/// Problem (I) on the layer: `(v₁, ∇_ε π₁)` for a horizontal-average-free `f`.
pub fn solve_problem_i(q: &ResolventQuery, f: &VectorField, grid: &Grid) -> Result<(VectorField, VectorField)> {
    check_field(f, grid)?;
    if f.c.iter().any(|c| c.zero_mode().iter().any(|v| v.norm() > 0.0)) {
        return Err(Error::ZeroMode);
    }
    let table = convolution_table(q, grid, &grid.cheb.nodes);
    let mut v1 = VectorField::zeros(grid.nh, grid.nz);
    let mut gp = VectorField::zeros(grid.nh, grid.nz);
    for idx in 0..grid.n_modes() {
        let n = grid.mode(idx);
        if n.is_zero() {
            continue;
        }
        let km = KernelMode::new(q.lambda, q.epsilon, n, &grid.cheb.nodes, &table[&n.k2()])?;
        let (a, b, _) = km.problem_i(&mode_columns(f, idx));
        set_mode_columns(&mut v1, idx, &a);
        set_mode_columns(&mut gp, idx, &b);
    }
    Ok((v1, gp))
}

/// Problem (III) for one mode: `∇_ε π₃` at `xs` from Neumann data `φ±`.
pub fn solve_problem_iii(q: &ResolventQuery, n: HorizontalMode, phi_plus: C64, phi_minus: C64, xs: &[f64]) -> Result<Cols> {
    Ok(Corrector::new(q.lambda, q.epsilon, n)?.problem_iii(phi_plus, phi_minus, xs))
}

/// `S_{λ,ε}` of one mode on the basis `(e₁⁺, e₂⁺, e₁⁻, e₂⁻)`.
pub fn assemble_s(q: &ResolventQuery, n: HorizontalMode) -> Result<Matrix4<C64>> {
    Ok(Corrector::new(q.lambda, q.epsilon, n)?.assemble_s())
}

/// Problem (II) for one mode: `v₂ = W S⁻¹ g` at `xs`, returned with the condition of `S`.
pub fn solve_problem_ii(q: &ResolventQuery, n: HorizontalMode, data: &ModeBoundaryData, xs: &[f64], cond_max: f64) -> Result<(Cols, f64)> {
    let corr = Corrector::new(q.lambda, q.epsilon, n)?;
    let (inv, cond) = invert_s(&corr.assemble_s(), n, cond_max)?;
    let h: Vector4<C64> = inv * data.tangential();
    Ok((corr.w_apply(&h, xs).0, cond))
}

/// `‖S_{λ,ε} + I‖₂` (Frobenius bound) for one mode.
pub fn s_plus_identity_norm(q: &ResolventQuery, n: HorizontalMode) -> Result<f64> {
    let s = assemble_s(q, n)?;
    Ok((s + Matrix4::identity()).norm())
}

/// `s = (λ + |n|²)^{1/2}` of one mode.
pub fn mode_root(q: &ResolventQuery, n: HorizontalMode) -> Result<C64> {
    s_lambda(q, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::random::{random_vector, RandomShape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn query(lam: C64, eps: f64) -> ResolventQuery {
        ResolventQuery::new(lam, eps, FRAC_PI_4).unwrap()
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let grid = Grid::new(2, 12);
        let f = VectorField::zeros(2, 12);
        let s = stokes_resolvent(&query(C64::new(3.0, 0.0), 0.5), &f, &grid, &Default::default()).unwrap();
        assert_eq!(s.u.max_abs(), 0.0);
        assert_eq!(s.grad_pressure.max_abs(), 0.0);
    }

    #[test]
    fn kernel_matches_oracle_and_has_small_residual() {
        let grid = Grid::new(2, 28);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_vector(&mut rng, 2, &grid.cheb, RandomShape { average_free: false, ..Default::default() });
        for &(lam, eps) in &[(C64::new(2.0, 1.0), 0.3), (C64::new(50.0, 0.0), 1.0), (C64::new(500.0, 0.0), 0.03)] {
            let q = query(lam, eps);
            let k = stokes_resolvent(&q, &f, &grid, &Default::default()).unwrap();
            let o = oracle_resolvent(&q, &f, &grid).unwrap();
            let gap = relative_gap(&k.u, &o.u, &grid.cheb);
            assert!(gap < 1e-6, "λ={lam} ε={eps}: gap {gap}");
            assert!(k.residual_norm < 1e-8, "λ={lam} ε={eps}: residual {:?}", k.residual);
            assert!(o.residual_norm < 1e-9, "{:?}", o.residual);
            assert!(k.fallback_modes.is_empty());
            if lam.im == 0.0 {
                assert!(k.u.c[0].conjugate_symmetry_defect() < 1e-10);
            }
        }
    }

    #[test]
    fn decomposition_parts_recombine() {
        let grid = Grid::new(1, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random_vector(&mut rng, 1, &grid.cheb, Default::default());
        let s = stokes_resolvent(&query(C64::new(10.0, 2.0), 0.4), &f, &grid, &Default::default()).unwrap();
        let p = s.parts.unwrap();
        let re = p.v1.sub(&p.grad_pi3).sub(&p.v2);
        assert!(re.sub(&s.u).max_abs() < 1e-14 * s.u.max_abs().max(1.0));
    }

    #[test]
    fn corrector_reproduces_tangential_data() {
        let q = query(C64::new(20.0, 5.0), 0.3);
        let n = HorizontalMode::new(1, 1);
        let data = ModeBoundaryData {
            g_plus: [C64::new(1.0, 0.5), C64::new(-0.2, 0.0)],
            g_minus: [C64::new(0.0, 1.0), C64::new(0.7, -0.1)],
            phi_plus: C64::new(0.0, 0.0),
            phi_minus: C64::new(0.0, 0.0),
        };
        let (v2, _) = solve_problem_ii(&q, n, &data, &[1.0, -1.0], 1e12).unwrap();
        let g = data.tangential();
        // S = γW and v₂ = W S⁻¹ g, so the tangential trace of v₂ is g
        let got = Vector4::new(v2[0][0], v2[1][0], v2[0][1], v2[1][1]);
        assert!((got - g).norm() < 1e-8 * g.norm(), "{got} vs {g}");
        // normal trace vanishes
        assert!(v2[2][0].norm() < 1e-10 && v2[2][1].norm() < 1e-10);
    }

    #[test]
    fn s_plus_identity_decays_like_inverse_root() {
        let n = HorizontalMode::new(1, 0);
        let pts: Vec<(f64, f64)> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&l: &f64| (l.ln(), s_plus_identity_norm(&query(C64::new(l, 0.0), 0.5), n).unwrap().ln()))
            .collect();
        let (slope, _) = crate::symbols::least_squares(&pts);
        assert!((slope + 0.5).abs() < 0.1, "{slope}");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let grid = Grid::new(2, 12);
        let f = VectorField::zeros(2, 10);
        assert!(matches!(
            stokes_resolvent(&query(C64::new(3.0, 0.0), 0.5), &f, &grid, &Default::default()),
            Err(Error::Dimension { .. })
        ));
    }
}
