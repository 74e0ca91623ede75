//! Evolution identity for the vertical velocity of a hydrostatic solution.
//!
//! With `v̄ = ½∫ v dz`, `ṽ = v − v̄` and `w = −∫_{−1}^{z} div_H ṽ`, a solution
//! of the hydrostatic system satisfies `∂_t w − Δw = I1 + I2 + I3` with
//!
//! * `I1 = ∂_z div_H ṽ|_{z=−1} + ½(z + 1) div_H[∂_z v]_{−1}^{1}`,
//! * `I2 = ∫_{−1}^{z} div_H(ṽ·∇_H ṽ + w ∂_ζ ṽ + v̄·∇_H ṽ + ṽ·∇_H v̄) dζ`,
//! * `I3 = −½(z + 1) div_H ∫_{−1}^{1} (ṽ·∇_H ṽ + (div_H ṽ) ṽ) dη`.
//!
//! Integrating `I2` by parts gives
//! `I2 = −v·∇_H w + w div_H ṽ + ∫_{−1}^{z} [∂_i ṽ_j ∂_j ṽ_i + 2 ∂_ζ ṽ·∇_H w
//! − ∂_ζ w div_H ṽ + ∂_i v̄_j ∂_j ṽ_i + ∂_i ṽ_j ∂_j v̄_i] dζ`.
//!
//! Products are formed exactly on a grid with twice the horizontal and
//! vertical resolution.

use super::{uniform_derivative4, Refined, Trajectory};
use crate::fields::norms::time_lp;
use crate::fields::{div_h, vertical_average, Cheb, SpectralField};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Result of [`w_regularity_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WIdentityReport {
    /// `‖∂_t w − Δw − (I1 + I2 + I3)‖` in `L²(0,T; L²)`.
    pub residual: f64,
    /// `‖∂_t w − Δw‖` in the same norm.
    pub lhs_norm: f64,
    /// Richardson estimate of the time-discretization error of `∂_t w − Δw`.
    pub time_error: f64,
    /// Largest relative `L²` gap between the raw and integrated-by-parts `I2`.
    pub i2_form_gap: f64,
    pub i1_norm: f64,
    pub i2_norm: f64,
    pub i3_norm: f64,
}

impl WIdentityReport {
    pub fn residual_over_time_error(&self) -> f64 {
        self.residual / self.time_error
    }
}

/// The three forcing terms and the integrated-by-parts form of `I2` at one sample.
struct Terms {
    i1: SpectralField,
    i2: SpectralField,
    i2_ibp: SpectralField,
    i3: SpectralField,
}

fn terms(r: &Refined, v: [&SpectralField; 2]) -> Terms {
    let c0 = &r.from;
    let nz0 = c0.n;
    // linear pieces on the original grid
    let vbar = [vertical_average(v[0], c0), vertical_average(v[1], c0)];
    let vt = [v[0] - &vbar[0], v[1] - &vbar[1]];
    let div_t = div_h(&vt[0], &vt[1]);
    // the integral has one degree more than the data, so it is taken on the refined grid
    let w = r.embed(&div_t).apply_vertical(&r.to.cumint).scale_re(-1.0);
    let c1 = &r.to;
    let dz_div = div_t.dz(c0);
    let mut bottom = dz_div.clone();
    let mut jump = SpectralField::zeros(v[0].nh, nz0);
    let dzv = [v[0].dz(c0), v[1].dz(c0)];
    let jump_div = div_h(&dzv[0], &dzv[1]);
    for (idx, _) in v[0].modes() {
        let b = dz_div.column(idx)[nz0 - 1];
        bottom.column_mut(idx).iter_mut().for_each(|x| *x = b);
        let col = jump_div.column(idx);
        let j = col[0] - col[nz0 - 1];
        jump.column_mut(idx).iter_mut().for_each(|x| *x = j);
    }
    let i1 = &r.embed(&bottom) + &r.times_z_plus_one(&r.embed(&jump).scale_re(0.5));

    // physical values of the factors on the refined grid
    let e = |f: &SpectralField| r.phys(&r.embed(f));
    let t = [e(&vt[0]), e(&vt[1])];
    let tx = [e(&vt[0].dx()), e(&vt[1].dx())];
    let ty = [e(&vt[0].dy()), e(&vt[1].dy())];
    let tz = [e(&vt[0].dz(c0)), e(&vt[1].dz(c0))];
    let bx = [e(&vbar[0].dx()), e(&vbar[1].dx())];
    let by = [e(&vbar[0].dy()), e(&vbar[1].dy())];
    let vv = [e(v[0]), e(v[1])];
    let wp = r.phys(&w);
    let wx = r.phys(&w.dx());
    let wy = r.phys(&w.dy());
    let wz = r.phys(&w.dz(c1));
    let dv = e(&div_t);

    // raw I2: cumulative integral of div_H of G = v·∇_H ṽ + w ∂_z ṽ + ṽ·∇_H v̄
    let g: Vec<SpectralField> = (0..2)
        .map(|j| {
            r.sum_products(&[
                (1.0, &vv[0], &tx[j]),
                (1.0, &vv[1], &ty[j]),
                (1.0, &wp, &tz[j]),
                (1.0, &t[0], &bx[j]),
                (1.0, &t[1], &by[j]),
            ])
        })
        .collect();
    let i2 = div_h(&g[0], &g[1]).apply_vertical(&r.to.cumint);

    // integrated by parts
    let boundary = r.sum_products(&[(-1.0, &vv[0], &wx), (-1.0, &vv[1], &wy), (1.0, &wp, &dv)]);
    let integrand = r.sum_products(&[
        (1.0, &tx[0], &tx[0]),
        (2.0, &ty[0], &tx[1]),
        (1.0, &ty[1], &ty[1]),
        (2.0, &tz[0], &wx),
        (2.0, &tz[1], &wy),
        (-1.0, &wz, &dv),
        (1.0, &bx[0], &tx[0]),
        (1.0, &by[0], &tx[1]),
        (1.0, &bx[1], &ty[0]),
        (1.0, &by[1], &ty[1]),
        (1.0, &tx[0], &bx[0]),
        (1.0, &ty[0], &bx[1]),
        (1.0, &tx[1], &by[0]),
        (1.0, &ty[1], &by[1]),
    ]);
    let i2_ibp = &boundary + &integrand.apply_vertical(&r.to.cumint);

    // I3
    let h: Vec<SpectralField> = (0..2)
        .map(|j| r.sum_products(&[(1.0, &t[0], &tx[j]), (1.0, &t[1], &ty[j]), (1.0, &dv, &t[j])]))
        .collect();
    let hh = [r.full_integral(&h[0]), r.full_integral(&h[1])];
    let i3 = r.times_z_plus_one(&div_h(&hh[0], &hh[1])).scale_re(-0.5);
    Terms { i1, i2, i2_ibp, i3 }
}

fn lhs(traj: &Trajectory, cheb: &Cheb) -> Result<Vec<SpectralField>> {
    let dt = traj.times[1] - traj.times[0];
    let ws: Vec<SpectralField> = traj.states.iter().map(|s| s.w.clone()).collect();
    let dw = uniform_derivative4(&ws, dt)?;
    Ok(dw.iter().zip(&ws).map(|(d, w)| d - &w.laplacian(cheb)).collect())
}

/// Checks the vertical-velocity identity on `coarse`; `fine` is the same run
/// with half the step and supplies the time-discretization error estimate.
pub fn w_regularity_check(coarse: &Trajectory, fine: &Trajectory) -> Result<WIdentityReport> {
    if fine.nh != coarse.nh || fine.nz != coarse.nz || fine.times.len() != 2 * coarse.times.len() - 1 {
        return Err(Error::Parameter("the fine run must halve the step of the coarse run on the same grid".into()));
    }
    let cheb = Cheb::new(coarse.nz);
    let r = Refined::new(coarse.nh, coarse.nz);
    let l_coarse = lhs(coarse, &cheb)?;
    let l_fine = lhs(fine, &cheb)?;
    let per_sample: Vec<(f64, f64, f64, f64, f64, f64, f64)> = coarse
        .states
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let t = terms(&r, [&s.vh[0], &s.vh[1]]);
            let l = r.embed(&l_coarse[i]);
            let res = &(&(&l - &t.i1) - &t.i2) - &t.i3;
            let n = |f: &SpectralField| f.l2_norm(&r.to);
            let i2n = n(&t.i2);
            let gap = if i2n > 0.0 { n(&(&t.i2 - &t.i2_ibp)) / i2n } else { n(&t.i2_ibp) };
            let te = (&l_coarse[i] - &l_fine[2 * i]).l2_norm(&cheb);
            (n(&res), n(&l), te, gap, n(&t.i1), i2n, n(&t.i3))
        })
        .collect();
    let times = &coarse.times;
    let col = |k: usize| -> Vec<f64> {
        per_sample
            .iter()
            .map(|s| [s.0, s.1, s.2, s.3, s.4, s.5, s.6][k])
            .collect()
    };
    let lp = |k: usize| time_lp(&col(k), times, 2.0);
    Ok(WIdentityReport {
        residual: lp(0)?,
        lhs_norm: lp(1)?,
        time_error: lp(2)? * 4.0 / 3.0,
        i2_form_gap: col(3).into_iter().fold(0.0, f64::max),
        i1_norm: lp(4)?,
        i2_norm: lp(5)?,
        i3_norm: lp(6)?,
    })
}
