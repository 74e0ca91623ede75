//! Fractional powers of the discrete anisotropic Stokes operator by the
//! Dunford integral, the imaginary-power scan and the maximal-regularity
//! diagnostics of the linear evolution problem.
//!
//! All operators act on the state coordinates of [`ModeOperator`]: per mode,
//! the discrete solenoidal velocities with no-slip walls, on which the Stokes
//! operator is `A = −B⁻¹C` and `(λ + A)⁻¹s = (λB − C)⁻¹Bs`.

use crate::fields::norms::{hessian_lq, lq_norm, proxy_trace_norm, time_lp, NormSpec};
use crate::fields::{Grid, HorizontalMode, SpectralField, VectorField};
use crate::projections::{mode_columns, set_mode_columns, ProjectionWorkspace};
use crate::resolvent::{ModeOperator, ModeState};
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_4, PI};

/// Two rays `μ = r e^{∓iθ}`, `r ∈ [r_min, r_max]`, around the spectrum of `A`,
/// i.e. `λ = −μ` on the boundary of the sector `Σ_θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContourSpec {
    pub theta: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Trapezoid nodes per ray, uniform in `ln r`.
    pub nodes_per_ray: usize,
}

impl Default for ContourSpec {
    fn default() -> Self {
        ContourSpec {
            theta: FRAC_PI_4,
            r_min: 1e-10,
            r_max: 1e12,
            nodes_per_ray: 320,
        }
    }
}

/// One quadrature node: `μ` and the weight of `μ^z (μ − A)⁻¹` without `μ^z`.
#[derive(Clone, Copy, Debug)]
pub struct ContourNode {
    pub mu: C64,
    pub weight: C64,
}

impl ContourSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < PI / 2.0) {
            return Err(Error::Parameter(format!("contour angle must lie in (0, π/2), got {}", self.theta)));
        }
        if !(self.r_min > 0.0 && self.r_max > self.r_min) || self.nodes_per_ray < 2 {
            return Err(Error::Parameter("contour needs 0 < r_min < r_max and at least two nodes".into()));
        }
        Ok(())
    }

    /// Same rays with twice the nodes.
    pub fn refined(&self) -> Self {
        ContourSpec {
            nodes_per_ray: 2 * self.nodes_per_ray,
            ..*self
        }
    }

    /// Nodes of the positively oriented contour: out along `e^{−iθ}`, back along `e^{iθ}`.
    pub fn nodes(&self) -> Vec<ContourNode> {
        let (x0, x1) = (self.r_min.ln(), self.r_max.ln());
        let m = self.nodes_per_ray;
        let h = (x1 - x0) / (m - 1) as f64;
        let two_pi_i = C64::new(0.0, 2.0 * PI);
        let mut out = Vec::with_capacity(2 * m);
        for sigma in [-1.0, 1.0] {
            let dir = C64::from_polar(1.0, sigma * self.theta);
            for j in 0..m {
                let trap = if j == 0 || j == m - 1 { 0.5 } else { 1.0 };
                let mu = dir * (x0 + h * j as f64).exp();
                // dμ = μ dx; the incoming ray carries the minus sign
                out.push(ContourNode {
                    mu,
                    weight: mu * (-sigma * h * trap) / two_pi_i,
                });
            }
        }
        out
    }

    /// Bound on the truncated parts of the subtracted integrand, relative to `‖s‖`,
    /// for an operator with spectrum in `[1/spec_scale, spec_scale]`.
    pub fn tail_bound(&self, re_z: f64, spec_scale: f64) -> f64 {
        let head = spec_scale * self.r_min.powf(1.0 + re_z) / (1.0 + re_z);
        let tail = spec_scale * self.r_max.powf(re_z - 1.0) / (1.0 - re_z);
        (head + tail) / PI
    }
}

/// A power `z` with `−a < Re z < 0`, `0 < a < 1/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerQuery {
    pub z: C64,
    pub a: f64,
}

impl PowerQuery {
    pub fn new(z: C64, a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 0.5) {
            return Err(Error::Parameter(format!("a must lie in (0, 1/2), got {a}")));
        }
        if !(z.re < 0.0 && z.re > -a) || !z.im.is_finite() {
            return Err(Error::Parameter(format!("Re z must lie in (−{a}, 0), got {z}")));
        }
        Ok(PowerQuery { z, a })
    }
}

fn real_block_times(b: &DMatrix<f64>, x: &DVector<C64>) -> DVector<C64> {
    crate::projections::real_times(b, x)
}

/// `A^z s` for several powers and states of one mode; result indexed `[z][state]`.
///
/// Uses `A^z s = s + ∫_Γ μ^z ((μ − A)⁻¹ − (μ − 1)⁻¹) s dμ / 2πi`, so the
/// integrand decays like `|μ|^{Re z − 2}` and the rays can be truncated.
pub fn dunford_states(op: &ModeOperator, states: &[ModeState], zs: &[C64], contour: &ContourSpec) -> Result<Vec<Vec<ModeState>>> {
    let mut acc: Vec<Vec<ModeState>> = zs.iter().map(|_| states.to_vec()).collect();
    let nodes = contour.nodes();
    for (bi, pencil) in op.blocks.iter().enumerate() {
        let bs: Vec<DVector<C64>> = states.iter().map(|s| real_block_times(&pencil.b, &s.blocks[bi])).collect();
        for node in &nodes {
            let lambda = -node.mu;
            let lu = pencil.shifted(lambda).lu();
            let pole = C64::new(1.0, 0.0) / (node.mu - 1.0);
            let powers: Vec<C64> = zs.iter().map(|&z| node.weight * node.mu.powc(z)).collect();
            for (si, s) in states.iter().enumerate() {
                let r = lu.solve(&bs[si]).ok_or(Error::Spectrum { k2: op.n.k2() })?;
                // (μ − A)⁻¹s = −(λ + A)⁻¹s
                let d = -r - &s.blocks[bi] * pole;
                for (zi, w) in powers.iter().enumerate() {
                    acc[zi][si].blocks[bi].axpy(*w, &d, C64::new(1.0, 0.0));
                }
            }
        }
    }
    Ok(acc)
}

/// Eigen-decomposition `A = V diag(μ) V⁻¹` from the complex Schur form.
pub struct DenseSpectral {
    pub values: Vec<C64>,
    pub vectors: DMatrix<C64>,
    inverse: DMatrix<C64>,
}

impl DenseSpectral {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let ac = a.map(|v| C64::new(v, 0.0));
        let (q, t) = ac.schur().unpack();
        let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
        let mut y = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            y[(i, i)] = C64::new(1.0, 0.0);
            for j in (0..i).rev() {
                let mut s = C64::new(0.0, 0.0);
                for l in j + 1..=i {
                    s += t[(j, l)] * y[(l, i)];
                }
                let gap = t[(j, j)] - t[(i, i)];
                if gap.norm() < 1e-13 * t[(i, i)].norm().max(1.0) {
                    return Err(Error::Spectrum { k2: -1 });
                }
                y[(j, i)] = -s / gap;
            }
        }
        let vectors = q * y;
        let inverse = vectors.clone().try_inverse().ok_or(Error::Spectrum { k2: -1 })?;
        Ok(DenseSpectral { values, vectors, inverse })
    }

    /// `A^z x` with the principal branch.
    pub fn power_apply(&self, z: C64, x: &DVector<C64>) -> DVector<C64> {
        let mut c = &self.inverse * x;
        for (ci, mu) in c.iter_mut().zip(&self.values) {
            *ci *= mu.powc(z);
        }
        &self.vectors * c
    }
}

fn check_grid(f: &VectorField, grid: &Grid) -> Result<()> {
    if f.nz() != grid.nz || f.nh() != grid.nh {
        return Err(Error::Dimension {
            expected: grid.nz,
            actual: f.nz(),
        });
    }
    Ok(())
}

pub(crate) fn operators(grid: &Grid, eps: f64) -> Result<Vec<ModeOperator>> {
    (0..grid.n_modes())
        .into_par_iter()
        .map(|idx| ModeOperator::new(&grid.cheb, grid.mode(idx), eps))
        .collect()
}

/// Discrete Helmholtz projection onto the solenoidal no-slip velocities.
pub fn project_discrete(eps: f64, f: &VectorField, grid: &Grid) -> Result<VectorField> {
    check_grid(f, grid)?;
    let ops = operators(grid, eps)?;
    let cols: Vec<Result<[DVector<C64>; 3]>> = ops
        .par_iter()
        .enumerate()
        .map(|(idx, op)| Ok(op.velocity(&op.project(&mode_columns(f, idx))?)))
        .collect();
    let mut out = VectorField::zeros(grid.nh, grid.nz);
    for (idx, c) in cols.into_iter().enumerate() {
        set_mode_columns(&mut out, idx, &c?);
    }
    Ok(out)
}

/// `A_ε^z P f` for several powers and fields; result indexed `[z][field]`.
pub fn dunford_apply_many(pqs: &[PowerQuery], eps: f64, fs: &[VectorField], grid: &Grid, contour: &ContourSpec) -> Result<Vec<Vec<VectorField>>> {
    contour.validate()?;
    for f in fs {
        check_grid(f, grid)?;
    }
    let zs: Vec<C64> = pqs.iter().map(|p| p.z).collect();
    let ops = operators(grid, eps)?;
    let per_mode: Vec<Result<Vec<Vec<[DVector<C64>; 3]>>>> = ops
        .par_iter()
        .enumerate()
        .map(|(idx, op)| {
            let states: Vec<ModeState> = fs.iter().map(|f| op.project(&mode_columns(f, idx))).collect::<Result<_>>()?;
            let out = dunford_states(op, &states, &zs, contour)?;
            Ok(out.iter().map(|row| row.iter().map(|s| op.velocity(s)).collect()).collect())
        })
        .collect();
    let mut out = vec![vec![VectorField::zeros(grid.nh, grid.nz); fs.len()]; zs.len()];
    for (idx, m) in per_mode.into_iter().enumerate() {
        let m = m?;
        for (zi, row) in m.iter().enumerate() {
            for (fi, cols) in row.iter().enumerate() {
                set_mode_columns(&mut out[zi][fi], idx, cols);
            }
        }
    }
    Ok(out)
}

/// `A_ε^z P f` by the Dunford integral.
pub fn dunford_apply(pq: &PowerQuery, eps: f64, f: &VectorField, grid: &Grid, contour: &ContourSpec) -> Result<VectorField> {
    Ok(dunford_apply_many(&[*pq], eps, std::slice::from_ref(f), grid, contour)?.remove(0).remove(0))
}

/// `A_ε^z P f` from the eigen-decomposition of each dense mode block.
pub fn dense_power_apply(z: C64, eps: f64, f: &VectorField, grid: &Grid) -> Result<VectorField> {
    check_grid(f, grid)?;
    let ops = operators(grid, eps)?;
    let cols: Vec<Result<[DVector<C64>; 3]>> = ops
        .par_iter()
        .enumerate()
        .map(|(idx, op)| {
            let s = op.project(&mode_columns(f, idx))?;
            let mut blocks = Vec::with_capacity(s.blocks.len());
            for (a, x) in op.dense_blocks()?.iter().zip(&s.blocks) {
                blocks.push(DenseSpectral::new(a)?.power_apply(z, x));
            }
            Ok(op.velocity(&ModeState { blocks }))
        })
        .collect();
    let mut out = VectorField::zeros(grid.nh, grid.nz);
    for (idx, c) in cols.into_iter().enumerate() {
        set_mode_columns(&mut out, idx, &c?);
    }
    Ok(out)
}

/// One row of an imaginary-power scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BipRow {
    pub epsilon: f64,
    pub s: f64,
    pub estimate: f64,
    pub fitted_c: f64,
}

/// Result of [`bip_scan`].
#[derive(Clone, Debug, Serialize)]
pub struct BipScan {
    pub delta: f64,
    pub theta: f64,
    pub rows: Vec<BipRow>,
    /// `(ε, C(ε))` with `C(ε) = max_s estimate · e^{−θ|s|}`.
    pub constants: Vec<(f64, f64)>,
    /// `max_ε C(ε) / min_ε C(ε)`.
    pub spread: f64,
}

/// Estimates `‖A_ε^{−δ+is}‖` by the largest `‖A^z P f‖ / ‖P f‖` over the probes.
pub fn bip_scan(eps_grid: &[f64], im_grid: &[f64], delta: f64, probes: &[VectorField], grid: &Grid, contour: &ContourSpec) -> Result<BipScan> {
    if probes.is_empty() {
        return Err(Error::Domain("empty probe set".into()));
    }
    if eps_grid.is_empty() || im_grid.is_empty() {
        return Err(Error::Domain("empty scan grid".into()));
    }
    let a = (2.0 * delta).min(0.49).max(delta + 1e-3);
    let pqs: Vec<PowerQuery> = im_grid.iter().map(|&s| PowerQuery::new(C64::new(-delta, s), a)).collect::<Result<_>>()?;
    let theta = contour.theta;
    let mut rows = Vec::new();
    let mut constants = Vec::new();
    for &eps in eps_grid {
        let projected: Vec<VectorField> = probes.iter().map(|f| project_discrete(eps, f, grid)).collect::<Result<_>>()?;
        let norms: Vec<f64> = projected.iter().map(|p| p.l2_norm(&grid.cheb)).collect();
        if norms.iter().all(|&n| n == 0.0) {
            return Err(Error::Domain("probes have no solenoidal part".into()));
        }
        let out = dunford_apply_many(&pqs, eps, &projected, grid, contour)?;
        let ests: Vec<f64> = out
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&norms)
                    .filter(|(_, &n)| n > 0.0)
                    .map(|(v, &n)| v.l2_norm(&grid.cheb) / n)
                    .fold(0.0, f64::max)
            })
            .collect();
        let c = im_grid.iter().zip(&ests).map(|(&s, &e)| e * (-theta * s.abs()).exp()).fold(0.0, f64::max);
        constants.push((eps, c));
        for (&s, &e) in im_grid.iter().zip(&ests) {
            rows.push(BipRow {
                epsilon: eps,
                s,
                estimate: e,
                fitted_c: c,
            });
        }
    }
    let cmax = constants.iter().map(|c| c.1).fold(0.0, f64::max);
    let cmin = constants.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    Ok(BipScan {
        delta,
        theta,
        rows,
        constants,
        spread: cmax / cmin,
    })
}

/// Sampled solution of `∂_t u − Δu + ∇_ε π = f`, `div_ε u = 0`, `u(±1) = 0`.
#[derive(Clone, Debug)]
pub struct MrTrajectory {
    pub epsilon: f64,
    pub times: Vec<f64>,
    pub u: Vec<VectorField>,
    pub dt_u: Vec<VectorField>,
    pub grad_p: Vec<VectorField>,
    pub forcing: Vec<VectorField>,
}

fn fd_weights(times: &[f64], i: usize) -> [(usize, f64); 3] {
    let n = times.len();
    if i == 0 {
        let (h1, h2) = (times[1] - times[0], times[2] - times[1]);
        let h = h1 + h2;
        [(0, -(2.0 * h1 + h2) / (h1 * h)), (1, h / (h1 * h2)), (2, -h1 / (h2 * h))]
    } else if i == n - 1 {
        let (h1, h2) = (times[n - 2] - times[n - 3], times[n - 1] - times[n - 2]);
        let h = h1 + h2;
        [(n - 3, h2 / (h1 * h)), (n - 2, -h / (h1 * h2)), (n - 1, (2.0 * h2 + h1) / (h2 * h))]
    } else {
        let (h1, h2) = (times[i] - times[i - 1], times[i + 1] - times[i]);
        [
            (i - 1, -h2 / (h1 * (h1 + h2))),
            (i, (h2 - h1) / (h1 * h2)),
            (i + 1, h1 / (h2 * (h1 + h2))),
        ]
    }
}

/// Crank–Nicolson in the discrete solenoidal space, one resolvent solve with
/// `λ = 2/Δt` per step; the first step is two backward-Euler half steps.
///
/// `u0` must be discretely solenoidal with no-slip walls; the defect of its
/// projection is checked against `1e-8` relative.
pub fn mr_solve(eps: f64, forcing: &(dyn Fn(f64) -> VectorField + Sync), u0: &VectorField, times: &[f64], grid: &Grid) -> Result<MrTrajectory> {
    let fs: Vec<VectorField> = times.par_iter().map(|&t| forcing(t)).collect();
    mr_solve_sampled(eps, fs, u0, times, grid, true)
}

/// [`mr_solve`] with the forcing given at the sample times. With
/// `with_pressure` false the pressure gradient is left empty.
pub fn mr_solve_sampled(eps: f64, fs: Vec<VectorField>, u0: &VectorField, times: &[f64], grid: &Grid, with_pressure: bool) -> Result<MrTrajectory> {
    check_grid(u0, grid)?;
    if times.len() < 3 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("time grid needs at least three increasing samples".into()));
    }
    if fs.len() != times.len() {
        return Err(Error::Dimension {
            expected: times.len(),
            actual: fs.len(),
        });
    }
    for f in &fs {
        check_grid(f, grid)?;
    }
    let ops = operators(grid, eps)?;
    let scale = u0.max_abs().max(1e-300);
    let nt = times.len();
    type ModeTraj = (Vec<[DVector<C64>; 3]>, Vec<[DVector<C64>; 3]>);
    let per_mode: Vec<Result<ModeTraj>> = ops
        .par_iter()
        .enumerate()
        .map(|(idx, op)| -> Result<ModeTraj> {
            let u0c = mode_columns(u0, idx);
            let mut state = op.project(&u0c)?;
            let back = op.velocity(&state);
            let defect = (0..3).map(|c| (&back[c] - &u0c[c]).camax()).fold(0.0, f64::max);
            if defect > 1e-8 * scale {
                return Err(Error::Precondition {
                    what: "initial velocity outside the discrete solenoidal space".into(),
                    defect,
                });
            }
            let rhs: Vec<Vec<DVector<C64>>> = fs.iter().map(|f| op.rhs(&mode_columns(f, idx))).collect();
            let mut lus: HashMap<u64, Vec<nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>>> = HashMap::new();
            let mut vel = vec![back];
            for step in 0..nt - 1 {
                let dt = times[step + 1] - times[step];
                let lam = C64::new(2.0 / dt, 0.0);
                let lu = lus
                    .entry(dt.to_bits())
                    .or_insert_with(|| op.blocks.iter().map(|p| p.shifted(lam).lu()).collect());
                let mut next = Vec::with_capacity(op.blocks.len());
                for (bi, p) in op.blocks.iter().enumerate() {
                    let c = &state.blocks[bi];
                    let bc = real_block_times(&p.b, c);
                    let x = if step == 0 {
                        // backward Euler with h = Δt/2 twice: (λB − C)c' = λBc + G f
                        let mid = (&rhs[step][bi] + &rhs[step + 1][bi]) * C64::new(0.5, 0.0);
                        let half = lu[bi].solve(&(&bc * lam + mid)).ok_or(Error::Spectrum { k2: op.n.k2() })?;
                        let bh = real_block_times(&p.b, &half);
                        lu[bi].solve(&(&bh * lam + &rhs[step + 1][bi])).ok_or(Error::Spectrum { k2: op.n.k2() })?
                    } else {
                        let cc = real_block_times(&p.c, c);
                        let r = &bc * lam + cc + &rhs[step][bi] + &rhs[step + 1][bi];
                        lu[bi].solve(&r).ok_or(Error::Spectrum { k2: op.n.k2() })?
                    };
                    next.push(x);
                }
                state = ModeState { blocks: next };
                vel.push(op.velocity(&state));
            }
            let dts: Vec<[DVector<C64>; 3]> = (0..nt)
                .map(|i| {
                    let w = fd_weights(times, i);
                    [0, 1, 2].map(|c| w.iter().fold(DVector::zeros(op.nz), |acc, &(j, wj)| acc + &vel[j][c] * C64::from(wj)))
                })
                .collect();
            Ok((vel, dts))
        })
        .collect();
    let mut u = vec![VectorField::zeros(grid.nh, grid.nz); nt];
    let mut dt_u = u.clone();
    for (idx, m) in per_mode.into_iter().enumerate() {
        let (v, d) = m?;
        for i in 0..nt {
            set_mode_columns(&mut u[i], idx, &v[i]);
            set_mode_columns(&mut dt_u[i], idx, &d[i]);
        }
    }
    // ∇_ε π is the gradient part of f − ∂_t u + Δu
    if !with_pressure {
        return Ok(MrTrajectory {
            epsilon: eps,
            times: times.to_vec(),
            u,
            dt_u,
            grad_p: Vec::new(),
            forcing: fs,
        });
    }
    let ws = ProjectionWorkspace::new(grid, eps)?;
    let grad_p: Vec<VectorField> = (0..nt)
        .into_par_iter()
        .map(|i| {
            let lap = u[i].map(|c| c.laplacian(&grid.cheb));
            let g = fs[i].sub(&dt_u[i]).add(&lap);
            Ok(ws.helmholtz(&g)?.grad_pi)
        })
        .collect::<Result<_>>()?;
    Ok(MrTrajectory {
        epsilon: eps,
        times: times.to_vec(),
        u,
        dt_u,
        grad_p,
        forcing: fs,
    })
}

/// Parts of the maximal-regularity ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MrRatio {
    pub dt_norm: f64,
    pub hessian_norm: f64,
    pub grad_p_norm: f64,
    pub forcing_norm: f64,
    pub initial_proxy: f64,
    pub ratio: f64,
}

fn comps(v: &VectorField) -> Vec<&SpectralField> {
    v.c.iter().collect()
}

fn e0(seq: &[VectorField], spec: &NormSpec, grid: &Grid) -> Result<f64> {
    let vals: Vec<f64> = seq
        .iter()
        .map(|v| {
            let parts: Vec<_> = comps(v).into_iter().map(|f| (f, 1.0)).collect();
            lq_norm(&parts, spec.q, &grid.cheb)
        })
        .collect();
    time_lp(&vals, &spec.time_grid, spec.p)
}

/// `(‖∂_t u‖ + ‖∇²u‖ + ‖∇_ε π‖) / (‖f‖ + ‖u₀‖_proxy)` in `L^p(0,T; L^q)`.
pub fn mr_ratio(traj: &MrTrajectory, p: f64, q: f64, grid: &Grid) -> Result<MrRatio> {
    let spec = NormSpec::new(p, q, traj.times.clone())?;
    let dt_norm = e0(&traj.dt_u, &spec, grid)?;
    let hess: Vec<f64> = traj.u.iter().map(|u| hessian_lq(&u.c, q, &grid.cheb)).collect();
    let hessian_norm = time_lp(&hess, &spec.time_grid, p)?;
    let grad_p_norm = e0(&traj.grad_p, &spec, grid)?;
    let forcing_norm = e0(&traj.forcing, &spec, grid)?;
    let initial_proxy = proxy_trace_norm(&traj.u[0].c, &spec, &grid.cheb);
    let den = forcing_norm + initial_proxy;
    if den == 0.0 {
        return Err(Error::Domain("zero data: the ratio is undefined".into()));
    }
    Ok(MrRatio {
        dt_norm,
        hessian_norm,
        grad_p_norm,
        forcing_norm,
        initial_proxy,
        ratio: (dt_norm + hessian_norm + grad_p_norm) / den,
    })
}

/// Largest mode-wise spectral radius proxy, used for tail bounds.
pub fn spectral_scale(grid: &Grid, eps: f64) -> Result<f64> {
    let op = ModeOperator::new(&grid.cheb, HorizontalMode::new(grid.nh as i64, grid.nh as i64), eps)?;
    let mut m = 1.0f64;
    for p in &op.blocks {
        m = m.max(p.c.abs().max() / p.b.abs().max().max(1e-300) * p.dim() as f64);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::random::{random_vector, RandomShape};
    use crate::resolvent::relative_gap;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn probe(grid: &Grid, seed: u64) -> VectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_vector(&mut rng, grid.nh, &grid.cheb, RandomShape { kmax: 2, ..Default::default() })
    }

    #[test]
    fn power_query_validates_range() {
        assert!(PowerQuery::new(C64::new(-0.1, 3.0), 0.25).is_ok());
        assert!(PowerQuery::new(C64::new(0.0, 1.0), 0.25).is_err());
        assert!(PowerQuery::new(C64::new(-0.3, 0.0), 0.25).is_err());
        assert!(PowerQuery::new(C64::new(-0.1, 0.0), 0.6).is_err());
    }

    #[test]
    fn scalar_contour_reproduces_real_powers() {
        // A = 7 on a 1×1 block: the contour sum must give 7^z
        let c = ContourSpec::default();
        for z in [C64::new(-0.125, 0.0), C64::new(-0.05, 4.0)] {
            let mut acc = C64::new(1.0, 0.0);
            for node in c.nodes() {
                let d = C64::new(1.0, 0.0) / (node.mu - 7.0) - C64::new(1.0, 0.0) / (node.mu - 1.0);
                acc += node.weight * node.mu.powc(z) * d;
            }
            let exact = C64::new(7.0, 0.0).powc(z);
            assert!((acc - exact).norm() < 1e-7, "{z}: {acc} vs {exact}");
        }
    }

    #[test]
    fn dunford_matches_dense_oracle() {
        let grid = Grid::new(2, 16);
        let f = probe(&grid, 4);
        let z = C64::new(-0.2, 0.7);
        for eps in [1.0, 0.1] {
            let pq = PowerQuery::new(z, 0.25).unwrap();
            let d = dunford_apply(&pq, eps, &f, &grid, &ContourSpec::default()).unwrap();
            let e = dense_power_apply(z, eps, &f, &grid).unwrap();
            let gap = relative_gap(&d, &e, &grid.cheb);
            assert!(gap < 1e-5, "ε={eps}: {gap}");
        }
    }

    #[test]
    fn semigroup_and_refinement() {
        let grid = Grid::new(1, 12);
        let f = project_discrete(0.5, &probe(&grid, 9), &grid).unwrap();
        let c = ContourSpec::default();
        let q8 = PowerQuery::new(C64::new(-0.125, 0.0), 0.3).unwrap();
        let q4 = PowerQuery::new(C64::new(-0.25, 0.0), 0.3).unwrap();
        let once = dunford_apply(&q8, 0.5, &f, &grid, &c).unwrap();
        let twice = dunford_apply(&q8, 0.5, &once, &grid, &c).unwrap();
        let direct = dunford_apply(&q4, 0.5, &f, &grid, &c).unwrap();
        assert!(relative_gap(&twice, &direct, &grid.cheb) < 1e-4);
        let fine = dunford_apply(&q4, 0.5, &f, &grid, &c.refined()).unwrap();
        assert!(relative_gap(&direct, &fine, &grid.cheb) < 1e-6);
    }

    #[test]
    fn zero_input_gives_zero() {
        let grid = Grid::new(1, 8);
        let f = VectorField::zeros(1, 8);
        let pq = PowerQuery::new(C64::new(-0.1, 1.0), 0.25).unwrap();
        assert_eq!(dunford_apply(&pq, 0.3, &f, &grid, &Default::default()).unwrap().max_abs(), 0.0);
        assert!(bip_scan(&[0.5], &[0.0], 0.05, &[], &grid, &Default::default()).is_err());
    }

    #[test]
    fn crank_nicolson_is_second_order() {
        let grid = Grid::new(1, 12);
        let eps = 0.3;
        let g = probe(&grid, 2);
        let u0 = project_discrete(eps, &probe(&grid, 3), &grid).unwrap();
        let forcing = move |t: f64| g.scale((3.0 * t).cos());
        let run = |steps: usize| {
            let times: Vec<f64> = (0..=steps).map(|i| 0.25 * i as f64 / steps as f64).collect();
            mr_solve(eps, &forcing, &u0, &times, &grid).unwrap().u.pop().unwrap()
        };
        let (a, b, c) = (run(16), run(32), run(64));
        let r = a.sub(&b).l2_norm(&grid.cheb) / b.sub(&c).l2_norm(&grid.cheb);
        assert!(r > 3.5 && r < 4.5, "{r}");
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let grid = Grid::new(1, 8);
        let zero = VectorField::zeros(1, 8);
        let z2 = zero.clone();
        let traj = mr_solve(0.5, &move |_| z2.clone(), &zero, &[0.0, 0.1, 0.2], &grid).unwrap();
        assert!(traj.u.iter().all(|u| u.max_abs() == 0.0));
    }
}
