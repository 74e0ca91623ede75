//! Hydrostatic primitive equations: Crank–Nicolson for diffusion, second-order
//! Adams–Bashforth for advection, and a surface pressure per horizontal mode
//! enforcing `∫ div_H v dz = 0`.

use super::{column_variation, courant, initial_velocity, Advection, SimParams, StepDiagnostics, Trajectory};
use crate::fields::{reconstruct_w, Grid, HorizontalMode, PhysicalField, SpectralField, VelocityPressureState};
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector, Dyn, LU};
use rayon::prelude::*;
use std::collections::HashMap;

/// Dirichlet solver for `(λ − ∂_z² + |n|²)` on interior nodes.
struct ColumnSolver {
    lu: LU<f64, Dyn, Dyn>,
    /// `G 1` on interior nodes.
    g1: DVector<f64>,
    /// `∫ G 1 dz`.
    int_g1: f64,
}

impl ColumnSolver {
    fn new(grid: &Grid, lambda: f64, k2: f64) -> Result<Self> {
        let nz = grid.nz;
        let d2 = &grid.cheb.d2;
        let m = nz - 2;
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] = -d2[(i + 1, j + 1)];
            }
            a[(i, i)] += lambda + k2;
        }
        let lu = a.lu();
        let g1 = lu.solve(&DVector::from_element(m, 1.0)).ok_or(Error::Spectrum { k2: k2 as i64 })?;
        let int_g1 = g1.iter().enumerate().map(|(i, v)| v * grid.cheb.weights[i + 1]).sum();
        Ok(ColumnSolver { lu, g1, int_g1 })
    }

    /// Solves with a complex interior right-hand side; returns interior values.
    fn solve(&self, r: &[C64]) -> DVector<C64> {
        let re = DVector::from_iterator(r.len(), r.iter().map(|v| v.re));
        let im = DVector::from_iterator(r.len(), r.iter().map(|v| v.im));
        let xr = self.lu.solve(&re).expect("factorized");
        let xi = self.lu.solve(&im).expect("factorized");
        DVector::from_iterator(r.len(), xr.iter().zip(xi.iter()).map(|(a, b)| C64::new(*a, *b)))
    }
}

/// One implicit solve `(λ − Δ)v + c ∇_H π = r` (interior rows) with
/// `∫ div_H v = 0`; returns full columns and `c π`.
fn mode_solve(solver: &ColumnSolver, n: HorizontalMode, r: [&[C64]; 2], weights: &[f64]) -> ([Vec<C64>; 2], C64) {
    let nz = weights.len();
    let g = [solver.solve(r[0]), solver.solve(r[1])];
    let integral = |v: &DVector<C64>| -> C64 { v.iter().enumerate().map(|(i, x)| x * weights[i + 1]).sum() };
    let [n1, n2] = n.as_f64();
    let i = C64::new(0.0, 1.0);
    let p = if n.is_zero() {
        C64::new(0.0, 0.0)
    } else {
        let flux = integral(&g[0]) * n1 + integral(&g[1]) * n2;
        -i * flux / (n.k2() as f64 * solver.int_g1)
    };
    let mut out = [vec![C64::new(0.0, 0.0); nz], vec![C64::new(0.0, 0.0); nz]];
    for (c, nc) in [n1, n2].iter().enumerate() {
        for j in 0..nz - 2 {
            out[c][j + 1] = g[c][j] - i * nc * p * solver.g1[j];
        }
    }
    (out, p)
}

/// `−(v·∇_H v + w ∂_z v)`.
fn nonlinear(adv: &Advection, v: &[SpectralField; 2], w: &SpectralField) -> ([SpectralField; 2], [PhysicalField; 3]) {
    let a = adv.transport([&v[0], &v[1], w]);
    let mut out = adv.apply(&a, &[&v[0], &v[1]]);
    let n2 = out.pop().unwrap().scale_re(-1.0);
    let n1 = out.pop().unwrap().scale_re(-1.0);
    ([n1, n2], a)
}

/// Integrates the hydrostatic system from the named initial data.
///
/// Every step is stored. Fails with [`Error::StepSize`] when the advective
/// Courant number exceeds one.
pub fn simulate_pe(params: &SimParams) -> Result<Trajectory> {
    params.validate()?;
    let grid = params.grid();
    let [v1, v2, _] = initial_velocity(params, &grid);
    simulate_pe_from(params, &grid, [v1, v2])
}

/// [`simulate_pe`] from given horizontal velocity.
pub fn simulate_pe_from(params: &SimParams, grid: &Grid, v0: [SpectralField; 2]) -> Result<Trajectory> {
    let cheb = &grid.cheb;
    let nz = grid.nz;
    let rec = reconstruct_w(&v0[0], &v0[1], cheb);
    let scale = v0[0].max_abs().max(v0[1].max_abs()).max(1e-300);
    if rec.top_defect > 1e-10 * scale {
        return Err(Error::Precondition {
            what: "vertical mean of the initial velocity is not horizontally solenoidal".into(),
            defect: rec.top_defect,
        });
    }
    let wall = v0
        .iter()
        .flat_map(|f| f.data.chunks(nz).map(|c| c[0].norm().max(c[nz - 1].norm())))
        .fold(0.0, f64::max);
    if wall > 1e-12 * scale {
        return Err(Error::Precondition {
            what: "initial velocity violates no-slip".into(),
            defect: wall,
        });
    }
    let dt = params.dt;
    let lambda = 2.0 / dt;
    let adv = Advection::new(grid);
    let mut solvers: HashMap<i64, ColumnSolver> = HashMap::new();
    for idx in 0..grid.n_modes() {
        let k2 = grid.mode(idx).k2();
        if let std::collections::hash_map::Entry::Vacant(e) = solvers.entry(k2) {
            e.insert(ColumnSolver::new(grid, lambda, k2 as f64)?);
        }
    }
    let weights = cheb.weights.clone();

    // one implicit solve for all modes given interior right-hand sides
    let implicit = |rhs: &[SpectralField; 2], pscale: f64| -> ([SpectralField; 2], SpectralField) {
        let cols: Vec<([Vec<C64>; 2], C64)> = (0..grid.n_modes())
            .into_par_iter()
            .map(|idx| {
                let n = grid.mode(idx);
                let s = &solvers[&n.k2()];
                let r0 = &rhs[0].column(idx)[1..nz - 1];
                let r1 = &rhs[1].column(idx)[1..nz - 1];
                mode_solve(s, n, [r0, r1], &weights)
            })
            .collect();
        let mut v = [SpectralField::zeros(grid.nh, nz), SpectralField::zeros(grid.nh, nz)];
        let mut p = SpectralField::zeros(grid.nh, nz);
        for (idx, (c, pi)) in cols.into_iter().enumerate() {
            v[0].column_mut(idx).copy_from_slice(&c[0]);
            v[1].column_mut(idx).copy_from_slice(&c[1]);
            p.column_mut(idx).iter_mut().for_each(|x| *x = pi * pscale);
        }
        (v, p)
    };
    let lap = |f: &SpectralField| f.laplacian(cheb);
    let comb = |terms: &[(f64, &SpectralField)]| -> SpectralField {
        let mut out = terms[0].1.scale_re(terms[0].0);
        for (c, f) in &terms[1..] {
            out.axpy(C64::new(*c, 0.0), f);
        }
        out
    };

    let steps = params.steps();
    let mut times = vec![0.0];
    let mut v = v0;
    let mut w = rec.w;
    let mut states = vec![VelocityPressureState {
        vh: v.clone(),
        w: w.clone(),
        pressure: SpectralField::zeros(grid.nh, nz),
        epsilon: 0.0,
        dirichlet: true,
    }];
    let energy = |v: &[SpectralField; 2]| v[0].l2_norm(cheb).powi(2) + v[1].l2_norm(cheb).powi(2);
    let (mut n_prev, a0) = nonlinear(&adv, &v, &w);
    let cfl0 = courant(&a0, dt, grid.nh, cheb);
    let mut diagnostics = vec![StepDiagnostics {
        t: 0.0,
        energy: energy(&v),
        divergence_defect: 0.0,
        pressure_z_variation: 0.0,
        cfl: cfl0,
    }];
    let mut n_cur = n_prev.clone();
    for step in 0..steps {
        let (cfl, (next, p)) = if step < super::sns::STARTUP_STEPS {
            // two backward-Euler half steps
            let r = [comb(&[(lambda, &v[0]), (1.0, &n_cur[0])]), comb(&[(lambda, &v[1]), (1.0, &n_cur[1])])];
            let (vh, _) = implicit(&r, 1.0);
            let wh = reconstruct_w(&vh[0], &vh[1], cheb).w;
            let (nh, ah) = nonlinear(&adv, &vh, &wh);
            let r = [comb(&[(lambda, &vh[0]), (1.0, &nh[0])]), comb(&[(lambda, &vh[1]), (1.0, &nh[1])])];
            let prev = diagnostics.last().unwrap().cfl;
            (prev.max(courant(&ah, dt, grid.nh, cheb)), implicit(&r, 1.0))
        } else {
            let r: [SpectralField; 2] = [0, 1].map(|c| {
                let lv = lap(&v[c]);
                comb(&[(lambda, &v[c]), (1.0, &lv), (3.0, &n_cur[c]), (-1.0, &n_prev[c])])
            });
            (diagnostics.last().unwrap().cfl, implicit(&r, 0.5))
        };
        if cfl > 1.0 {
            return Err(Error::StepSize { cfl });
        }
        v = next;
        let r = reconstruct_w(&v[0], &v[1], cheb);
        w = r.w;
        let (n_new, a) = nonlinear(&adv, &v, &w);
        n_prev = std::mem::replace(&mut n_cur, n_new);
        let t = (step + 1) as f64 * dt;
        times.push(t);
        diagnostics.push(StepDiagnostics {
            t,
            energy: energy(&v),
            divergence_defect: r.top_defect,
            pressure_z_variation: column_variation(&p),
            cfl: courant(&a, dt, grid.nh, cheb),
        });
        if !diagnostics.last().unwrap().energy.is_finite() {
            return Err(Error::Nonconvergence(format!("non-finite energy at t = {t}")));
        }
        states.push(VelocityPressureState {
            vh: v.clone(),
            w: w.clone(),
            pressure: p,
            epsilon: 0.0,
            dirichlet: true,
        });
    }
    Ok(Trajectory {
        nh: grid.nh,
        nz,
        times,
        states,
        diagnostics,
    })
}
