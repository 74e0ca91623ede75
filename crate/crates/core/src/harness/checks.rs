//! Verification experiments with pass/fail thresholds, shared by the
//! command-line tool and the acceptance tests.

use super::{ExperimentReport, SimConfig};
use crate::dynamics::{bilinear_sampling, difference_iteration, simulate_pe, w_regularity_check, BilinearKind, BilinearReport, SimParams, WIdentityReport};
use crate::fields::norms::{lq_norm, NormSpec};
use crate::fields::random::{random_vector, RandomShape};
use crate::fields::{Grid, HorizontalMode, VectorField};
use crate::functional_calculus::{bip_scan, dense_power_apply, dunford_apply, mr_ratio, mr_solve, project_discrete, BipScan, ContourSpec, MrRatio, PowerQuery};
use crate::projections::{divergence_defect, normal_trace_defect, ProjectionWorkspace};
use crate::resolvent::{oracle_resolvent, relative_gap, s_plus_identity_norm, stokes_resolvent};
use crate::symbols::{fit_envelope, j2, kernel_k, least_squares, mikhlin_estimate, y_lambda_eps, MikhlinGrid, ResolventQuery, SymbolFamily};
use crate::{Error, Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Sector half-opening used by every resolvent check.
pub const THETA: f64 = PI / 4.0;

fn shape(kmax: usize) -> RandomShape {
    RandomShape {
        kmax,
        ..RandomShape::default()
    }
}

/// Largest entry modulus of a 3×3 complex matrix.
fn max_entry(m: &nalgebra::Matrix3<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `K_{λ,ε}(0) Y_{λ,ε} = J₂` on random parameters.
#[derive(Clone, Debug, Serialize)]
pub struct KernelIdentityReport {
    pub samples: usize,
    pub max_error: f64,
    pub passed: bool,
}

pub const KERNEL_IDENTITY_TOL: f64 = 1e-12;

/// Draws `|λ| ∈ [1e−2, 1e4]` log-uniformly inside the sector, `ε ∈ (0, 1]`,
/// and `n ∈ [−8, 8]² ∖ {0}`.
pub fn kernel_identity(samples: usize, seed: u64) -> Result<KernelIdentityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    for _ in 0..samples {
        let r = 10f64.powf(rng.random_range(-2.0..4.0));
        let arg = rng.random_range(-0.99..0.99) * (PI - THETA);
        let eps: f64 = 1.0 - rng.random_range(0.0..1.0);
        let n = loop {
            let n = HorizontalMode::new(rng.random_range(-8..=8), rng.random_range(-8..=8));
            if !n.is_zero() {
                break n;
            }
        };
        let q = ResolventQuery::new(C64::from_polar(r, arg), eps, THETA)?;
        let prod = kernel_k(&q, n, 0.0)? * y_lambda_eps(&q, n)?;
        max_error = max_error.max(max_entry(&(prod - j2())));
    }
    Ok(KernelIdentityReport {
        samples,
        max_error,
        passed: max_error <= KERNEL_IDENTITY_TOL,
    })
}

/// One `(λ, ε)` of [`resolvent_test`].
#[derive(Clone, Debug, Serialize)]
pub struct ResolventCase {
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub epsilon: f64,
    /// Relative `L²` gap of the velocities from the collocation solve.
    pub oracle_gap: f64,
    pub residual: f64,
    pub v1_norm: f64,
    pub v2_norm: f64,
    pub grad_pi3_norm: f64,
    pub fallback_modes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResolventReport {
    pub nh: usize,
    pub nz: usize,
    pub cases: Vec<ResolventCase>,
    pub max_gap: f64,
    pub max_residual: f64,
    pub passed: bool,
}

pub const RESOLVENT_GAP_TOL: f64 = 1e-6;
pub const RESOLVENT_RESIDUAL_TOL: f64 = 1e-8;

/// Kernel-decomposition solve against the collocation solve on one random forcing.
pub fn resolvent_test(lambdas: &[C64], epsilons: &[f64], nh: usize, nz: usize, seed: u64) -> Result<ResolventReport> {
    let grid = Grid::new(nh, nz);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_vector(&mut rng, nh, &grid.cheb, RandomShape { average_free: false, ..shape(nh) });
    let pairs: Vec<(C64, f64)> = lambdas.iter().flat_map(|&l| epsilons.iter().map(move |&e| (l, e))).collect();
    let cases: Vec<ResolventCase> = pairs
        .par_iter()
        .map(|&(lam, eps)| {
            let q = ResolventQuery::new(lam, eps, THETA)?;
            let k = stokes_resolvent(&q, &f, &grid, &Default::default())?;
            let o = oracle_resolvent(&q, &f, &grid)?;
            let norm = |v: &VectorField| v.l2_norm(&grid.cheb);
            let (v1, v2, g3) = k.parts.as_ref().map(|p| (norm(&p.v1), norm(&p.v2), norm(&p.grad_pi3))).unwrap_or((0.0, 0.0, 0.0));
            Ok(ResolventCase {
                lambda_re: lam.re,
                lambda_im: lam.im,
                epsilon: eps,
                oracle_gap: relative_gap(&k.u, &o.u, &grid.cheb),
                residual: k.residual_norm,
                v1_norm: v1,
                v2_norm: v2,
                grad_pi3_norm: g3,
                fallback_modes: k.fallback_modes.len(),
            })
        })
        .collect::<Result<_>>()?;
    let max_gap = cases.iter().map(|c| c.oracle_gap).fold(0.0, f64::max);
    let max_residual = cases.iter().map(|c| c.residual).fold(0.0, f64::max);
    Ok(ResolventReport {
        nh,
        nz,
        cases,
        max_gap,
        max_residual,
        passed: max_gap <= RESOLVENT_GAP_TOL && max_residual <= RESOLVENT_RESIDUAL_TOL,
    })
}

/// Log-log slope of `‖S_{λ,ε} + I‖` in `|λ|`.
#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    /// `(ε, slope)`.
    pub slopes: Vec<(f64, f64)>,
    pub passed: bool,
}

/// Slope target and tolerance of [`neumann_decay`].
pub const DECAY_SLOPE: f64 = -0.5;
pub const DECAY_SLOPE_TOL: f64 = 0.1;

pub fn neumann_decay(epsilons: &[f64], lambdas: &[f64]) -> Result<DecayReport> {
    let n = HorizontalMode::new(1, 0);
    let slopes: Vec<(f64, f64)> = epsilons
        .iter()
        .map(|&eps| {
            let pts: Vec<(f64, f64)> = lambdas
                .iter()
                .map(|&l| Ok((l.ln(), s_plus_identity_norm(&ResolventQuery::new(C64::new(l, 0.0), eps, THETA)?, n)?.ln())))
                .collect::<Result<_>>()?;
            Ok((eps, least_squares(&pts).0))
        })
        .collect::<Result<_>>()?;
    let passed = slopes.iter().all(|&(_, s)| (s - DECAY_SLOPE).abs() <= DECAY_SLOPE_TOL);
    Ok(DecayReport { slopes, passed })
}

/// Properties of the layer Helmholtz projection at one `ε`.
#[derive(Clone, Debug, Serialize)]
pub struct HelmholtzRow {
    pub epsilon: f64,
    /// `max ‖H(Hf) − Hf‖ / ‖Hf‖`.
    pub idempotence: f64,
    /// `max |div_ε Hf| / max |f|`.
    pub divergence: f64,
    /// `max |(Hf)₃(±1)| / max |f|`.
    pub normal_trace: f64,
    /// `max ‖Hf‖_{L⁴} / ‖f‖_{L⁴}`.
    pub norm_proxy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HelmholtzReport {
    pub rows: Vec<HelmholtzRow>,
    /// `max_ε proxy / min_ε proxy`.
    pub proxy_variation: f64,
    pub passed: bool,
}

pub const HELMHOLTZ_IDEMPOTENCE_TOL: f64 = 1e-8;
pub const HELMHOLTZ_DIVERGENCE_TOL: f64 = 1e-8;
pub const HELMHOLTZ_TRACE_TOL: f64 = 1e-9;
pub const HELMHOLTZ_PROXY_VARIATION: f64 = 3.0;

pub fn helmholtz_check(samples: usize, epsilons: &[f64], nh: usize, nz: usize, seed: u64) -> Result<HelmholtzReport> {
    let grid = Grid::new(nh, nz);
    let cheb = &grid.cheb;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<VectorField> = (0..samples).map(|_| random_vector(&mut rng, nh, cheb, shape(nh))).collect();
    let l4 = |v: &VectorField| lq_norm(&[(&v.c[0], 1.0), (&v.c[1], 1.0), (&v.c[2], 1.0)], 4.0, cheb);
    let rows: Vec<HelmholtzRow> = epsilons
        .iter()
        .map(|&eps| {
            let ws = ProjectionWorkspace::new(&grid, eps)?;
            let per: Vec<[f64; 4]> = fields
                .par_iter()
                .map(|f| {
                    let h = ws.helmholtz(f)?.projected;
                    let hh = ws.helmholtz(&h)?.projected;
                    let scale = f.max_abs();
                    Ok([
                        hh.sub(&h).l2_norm(cheb) / h.l2_norm(cheb),
                        divergence_defect(&h, eps, cheb) / scale,
                        normal_trace_defect(&h) / scale,
                        l4(&h) / l4(f),
                    ])
                })
                .collect::<Result<_>>()?;
            let col = |k: usize| per.iter().map(|r| r[k]).fold(0.0, f64::max);
            Ok(HelmholtzRow {
                epsilon: eps,
                idempotence: col(0),
                divergence: col(1),
                normal_trace: col(2),
                norm_proxy: col(3),
            })
        })
        .collect::<Result<_>>()?;
    let pmax = rows.iter().map(|r| r.norm_proxy).fold(0.0, f64::max);
    let pmin = rows.iter().map(|r| r.norm_proxy).fold(f64::INFINITY, f64::min);
    let proxy_variation = pmax / pmin;
    let passed = rows.iter().all(|r| {
        r.idempotence <= HELMHOLTZ_IDEMPOTENCE_TOL && r.divergence <= HELMHOLTZ_DIVERGENCE_TOL && r.normal_trace <= HELMHOLTZ_TRACE_TOL
    }) && proxy_variation <= HELMHOLTZ_PROXY_VARIATION;
    Ok(HelmholtzReport {
        rows,
        proxy_variation,
        passed,
    })
}

/// Imaginary-power scan and the contour-versus-dense comparison.
#[derive(Clone, Debug, Serialize)]
pub struct BipReport {
    pub scan: BipScan,
    /// Relative gap of the contour evaluation from the dense matrix function.
    pub dense_gap: f64,
    pub passed: bool,
}

pub const BIP_SPREAD_MAX: f64 = 4.0;
pub const BIP_DENSE_TOL: f64 = 1e-5;
/// Real part of the scanned exponents is `−BIP_DELTA`.
pub const BIP_DELTA: f64 = 0.05;

pub fn bip_check(epsilons: &[f64], s_grid: &[f64], nh: usize, nz: usize, probes: usize, seed: u64) -> Result<BipReport> {
    let grid = Grid::new(nh, nz);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs: Vec<VectorField> = (0..probes).map(|_| random_vector(&mut rng, nh, &grid.cheb, shape(nh))).collect();
    let contour = ContourSpec::default();
    let scan = bip_scan(epsilons, s_grid, BIP_DELTA, &fs, &grid, &contour)?;
    let mut dense_gap: f64 = 0.0;
    for &(eps, s) in &[(0.1, 3.0), (1.0, -2.0), (0.01, 5.0)] {
        let z = C64::new(-BIP_DELTA, s);
        let d = dunford_apply(&PowerQuery::new(z, 2.0 * BIP_DELTA)?, eps, &fs[0], &grid, &contour)?;
        let e = dense_power_apply(z, eps, &fs[0], &grid)?;
        dense_gap = dense_gap.max(relative_gap(&d, &e, &grid.cheb));
    }
    let passed = scan.spread <= BIP_SPREAD_MAX && dense_gap <= BIP_DENSE_TOL;
    Ok(BipReport { scan, dense_gap, passed })
}

/// One forcing of [`mr_check`].
#[derive(Clone, Debug, Serialize)]
pub struct MrRow {
    pub epsilon: f64,
    pub sample: usize,
    pub dt: f64,
    pub ratio: MrRatio,
}

#[derive(Clone, Debug, Serialize)]
pub struct MrReport {
    pub rows: Vec<MrRow>,
    /// `(ε, max ratio over the forcings)`.
    pub constants: Vec<(f64, f64)>,
    /// `max_ε / min_ε` of the constants.
    pub variation: f64,
    pub passed: bool,
}

pub const MR_VARIATION_MAX: f64 = 5.0;

/// Forcings `g₁ + t g₂` with random `g₁, g₂` and solenoidal random initial data.
pub fn mr_check(epsilons: &[f64], samples: usize, t_final: f64, steps: usize, nh: usize, nz: usize, seed: u64) -> Result<MrReport> {
    let grid = Grid::new(nh, nz);
    let times: Vec<f64> = (0..=steps).map(|i| t_final * i as f64 / steps as f64).collect();
    let mut rows = Vec::new();
    let mut constants = Vec::new();
    for &eps in epsilons {
        // the same forcings for every ε
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: f64 = 0.0;
        for i in 0..samples {
            let g1 = random_vector(&mut rng, nh, &grid.cheb, shape(nh));
            let g2 = random_vector(&mut rng, nh, &grid.cheb, shape(nh));
            let raw = random_vector(&mut rng, nh, &grid.cheb, RandomShape { wall_zero: true, ..shape(nh) });
            let u0 = project_discrete(eps, &raw, &grid)?;
            let f = move |t: f64| g1.add(&g2.scale(t));
            let tr = mr_solve(eps, &f, &u0, &times, &grid)?;
            let ratio = mr_ratio(&tr, 2.0, 2.0, &grid)?;
            best = best.max(ratio.ratio);
            rows.push(MrRow {
                epsilon: eps,
                sample: i,
                dt: t_final / steps as f64,
                ratio,
            });
        }
        constants.push((eps, best));
    }
    let cmax = constants.iter().map(|c| c.1).fold(0.0, f64::max);
    let cmin = constants.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let variation = cmax / cmin;
    Ok(MrReport {
        rows,
        constants,
        variation,
        passed: variation <= MR_VARIATION_MAX,
    })
}

/// Vertical-velocity identity on a hydrostatic run.
#[derive(Clone, Debug, Serialize)]
pub struct WIdentityCheck {
    pub report: WIdentityReport,
    pub passed: bool,
}

pub const W_RESIDUAL_FACTOR: f64 = 10.0;
pub const W_FORM_TOL: f64 = 1e-9;

/// Runs `params` and the same problem with half the step.
pub fn w_identity_check(params: &SimParams) -> Result<WIdentityCheck> {
    let coarse = simulate_pe(params)?;
    let fine = simulate_pe(&params.with_dt(params.dt / 2.0))?;
    let report = w_regularity_check(&coarse, &fine)?;
    let passed = report.residual <= W_RESIDUAL_FACTOR * report.time_error && report.i2_form_gap <= W_FORM_TOL;
    Ok(WIdentityCheck { report, passed })
}

/// Contraction of the difference iteration.
#[derive(Clone, Debug, Serialize)]
pub struct ContractionReport {
    /// `(ε, largest ratio)` on the base interval.
    pub ratios: Vec<(f64, f64)>,
    pub long_t: f64,
    pub long_epsilon: f64,
    pub long_subintervals: usize,
    pub long_ratio: f64,
    pub passed: bool,
}

pub const CONTRACTION_MAX: f64 = 0.9;

/// Ratios for every `ε ≤ eps_max` of `cfg`, taken from `study` when given,
/// plus a run on `[0, long_t]` at the largest such `ε`, which must split.
pub fn contraction_check(cfg: &SimConfig, eps_max: f64, long_t: f64, study: Option<&ExperimentReport>) -> Result<ContractionReport> {
    let eps: Vec<f64> = cfg.epsilons.iter().copied().filter(|&e| e <= eps_max).collect();
    let long_epsilon = *eps.first().ok_or_else(|| Error::Config(format!("no epsilon at or below {eps_max}")))?;
    let opts = cfg.difference_options();
    let params = cfg.sim_params()?;
    let mut ratios = Vec::new();
    let from_study = |e: f64| study.and_then(|s| s.rows.iter().find(|r| r.epsilon == e).and_then(|r| r.picard_max_ratio));
    let mut pe = None;
    for &e in &eps {
        let r = match from_study(e) {
            Some(r) => r,
            None => {
                if pe.is_none() {
                    pe = Some(simulate_pe(&params)?);
                }
                difference_iteration(pe.as_ref().unwrap(), e, &opts)?.max_ratio()
            }
        };
        ratios.push((e, r));
    }
    let long = SimParams { t_final: long_t, ..params };
    let pe_long = simulate_pe(&long)?;
    let res = difference_iteration(&pe_long, long_epsilon, &opts)?;
    let long_ratio = res.max_ratio();
    let passed = ratios.iter().all(|&(_, r)| r <= CONTRACTION_MAX) && long_ratio <= CONTRACTION_MAX && res.subintervals.len() >= 2;
    Ok(ContractionReport {
        ratios,
        long_t,
        long_epsilon,
        long_subintervals: res.subintervals.len(),
        long_ratio,
        passed,
    })
}

/// Bilinear ratios at two horizontal resolutions.
#[derive(Clone, Debug, Serialize)]
pub struct BilinearCheck {
    pub coarse: Vec<BilinearReport>,
    pub fine: Vec<BilinearReport>,
    /// `max_fine / max_coarse − 1` per kind.
    pub changes: Vec<f64>,
    pub passed: bool,
}

pub const BILINEAR_STABILITY: f64 = 0.2;

/// Samples use every mode up to the resolution, so the fine samples extend
/// the coarse ones.
pub fn bilinear_check(nh_coarse: usize, nh_fine: usize, nz: usize, samples: usize, p: f64, q: f64, seed: u64) -> Result<BilinearCheck> {
    let spec = NormSpec::uniform(p, q, 1.0, 8)?;
    let kinds = [BilinearKind::Horizontal, BilinearKind::Vertical];
    let run = |nh: usize| -> Result<Vec<BilinearReport>> { kinds.iter().map(|&k| bilinear_sampling(nh, nz, nh, samples, k, &spec, seed)).collect() };
    let coarse = run(nh_coarse)?;
    let fine = run(nh_fine)?;
    let changes: Vec<f64> = coarse.iter().zip(&fine).map(|(c, f)| f.max_ratio / c.max_ratio - 1.0).collect();
    let passed = changes.iter().all(|c| c.abs() <= BILINEAR_STABILITY) && fine.iter().all(|r| r.max_ratio.is_finite());
    Ok(BilinearCheck {
        coarse,
        fine,
        changes,
        passed,
    })
}

/// One line of the multiplier CSV.
#[derive(Clone, Debug, Serialize)]
pub struct MultiplierRow {
    pub family: String,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    pub t: Option<f64>,
    pub estimate: f64,
    /// Envelope constant `C`, for the heat family.
    pub fitted_c_const: Option<f64>,
    /// Envelope rate `c`, for the heat family.
    pub fitted_c_rate: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiplierReport {
    pub rows: Vec<MultiplierRow>,
    /// `(family, max_ε / min_ε)` for the four exponential-ratio families.
    pub variation: Vec<(String, f64)>,
    /// Every rescaled estimate stays below the `ε = 1` estimate times `1 + tol`.
    pub rescaling_ok: bool,
    /// Every heat-family sample lies under its fitted envelope.
    pub envelope_ok: bool,
    pub passed: bool,
}

pub const MULTIPLIER_VARIATION_MAX: f64 = 3.0;
pub const MULTIPLIER_RESCALING_TOL: f64 = 1e-2;
/// Height at which the exponential-ratio families are evaluated.
pub const MULTIPLIER_HEIGHT: f64 = 0.5;

pub fn verify_multipliers(epsilons: &[f64], grid: &MikhlinGrid) -> Result<MultiplierReport> {
    if epsilons.is_empty() {
        return Err(Error::Parameter("empty epsilon list".into()));
    }
    let families: [fn(f64) -> SymbolFamily; 4] = [
        |eps| SymbolFamily::SinhSinh { eps, x: MULTIPLIER_HEIGHT },
        |eps| SymbolFamily::CoshSinh { eps, x: MULTIPLIER_HEIGHT },
        |eps| SymbolFamily::SinhCosh { eps, x: MULTIPLIER_HEIGHT },
        |eps| SymbolFamily::CoshCosh { eps, x: MULTIPLIER_HEIGHT },
    ];
    let mut rows = Vec::new();
    let mut variation = Vec::new();
    let mut rescaling_ok = true;
    for make in families {
        let reference = mikhlin_estimate(|xi| make(1.0).eval(xi), grid)?;
        let ests: Vec<f64> = epsilons
            .par_iter()
            .map(|&eps| mikhlin_estimate(|xi| make(eps).eval(xi), grid))
            .collect::<Result<_>>()?;
        let name = make(1.0).name().to_string();
        for (&eps, &e) in epsilons.iter().zip(&ests) {
            rescaling_ok &= e <= reference * (1.0 + MULTIPLIER_RESCALING_TOL);
            rows.push(MultiplierRow {
                family: name.clone(),
                epsilon: Some(eps),
                lambda: None,
                t: None,
                estimate: e,
                fitted_c_const: None,
                fitted_c_rate: None,
            });
        }
        let max = ests.iter().copied().fold(0.0, f64::max);
        let min = ests.iter().copied().fold(f64::INFINITY, f64::min);
        variation.push((name, max / min));
    }
    // heat family |ξ|^α e^{−t s_λ(ξ)} with a fitted envelope
    let alpha = 1.0;
    let mut samples = Vec::new();
    for &t in &[0.5, 1.0, 2.0] {
        for &lam in &[1.0, 10.0, 100.0] {
            let m = mikhlin_estimate(|xi| SymbolFamily::HeatLike { alpha, t, lambda: lam }.eval(xi), grid)?;
            samples.push((t, lam, m));
        }
    }
    let fit = fit_envelope(&samples, alpha)?;
    let mut envelope_ok = true;
    for &(t, lam, m) in &samples {
        envelope_ok &= m <= fit.c_const * (-fit.c_rate * t * lam.sqrt()).exp() / t.powf(alpha) * (1.0 + 1e-12);
        rows.push(MultiplierRow {
            family: "heat".into(),
            epsilon: None,
            lambda: Some(lam),
            t: Some(t),
            estimate: m,
            fitted_c_const: Some(fit.c_const),
            fitted_c_rate: Some(fit.c_rate),
        });
    }
    let passed = rescaling_ok && envelope_ok && fit.c_rate > 0.0 && variation.iter().all(|(_, v)| *v <= MULTIPLIER_VARIATION_MAX);
    Ok(MultiplierReport {
        rows,
        variation,
        rescaling_ok,
        envelope_ok,
        passed,
    })
}
