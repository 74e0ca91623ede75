//! Empirical ratios for the bilinear estimates of the nonlinearity in the
//! maximal-regularity norms:
//! `‖(v₁·∇_H) v₂‖_{E₀} / (‖v₁‖_{E₁} ‖v₂‖_{E₁})` and the vertical analog with
//! `w₁ ∂_z v₂`, `w₁ = −∫_{−1}^{z} div_H v₁`.

use super::Refined;
use crate::fields::norms::{e1_norm, lq_norm, time_lp, NormSpec};
use crate::fields::{div_h, Cheb, HorizontalMode, SpectralField};
use crate::{Error, Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which product the ratio measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BilinearKind {
    /// `(v₁·∇_H) v₂`.
    Horizontal,
    /// `w₁ ∂_z v₂`.
    Vertical,
}

impl BilinearKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "horizontal" => Ok(BilinearKind::Horizontal),
            "vertical" => Ok(BilinearKind::Vertical),
            other => Err(Error::Parameter(format!("unknown bilinear kind `{other}`"))),
        }
    }
}

/// A horizontal velocity sampled on the norm's time grid.
pub type HorizontalTrajectory = [[SpectralField; 2]];

fn as_traj(v: &HorizontalTrajectory) -> Vec<Vec<SpectralField>> {
    v.iter().map(|s| s.to_vec()).collect()
}

/// The product at one time, exactly, on the refined grid.
fn product(r: &Refined, v1: &[SpectralField; 2], v2: &[SpectralField; 2], kind: BilinearKind) -> Vec<SpectralField> {
    let c = &r.from;
    let e = |f: &SpectralField| r.phys(&r.embed(f));
    match kind {
        BilinearKind::Horizontal => {
            let a = [e(&v1[0]), e(&v1[1])];
            v2.iter()
                .map(|f| r.sum_products(&[(1.0, &a[0], &e(&f.dx())), (1.0, &a[1], &e(&f.dy()))]))
                .collect()
        }
        BilinearKind::Vertical => {
            let w = r.embed(&div_h(&v1[0], &v1[1])).apply_vertical(&r.to.cumint).scale_re(-1.0);
            let wp = r.phys(&w);
            v2.iter().map(|f| r.sum_products(&[(1.0, &wp, &e(&f.dz(c)))])).collect()
        }
    }
}

/// Ratio of the `E₀` norm of the product to the product of the `E₁` norms.
pub fn bilinear_ratio(v1: &HorizontalTrajectory, v2: &HorizontalTrajectory, spec: &NormSpec, kind: BilinearKind) -> Result<f64> {
    let n = spec.time_grid.len();
    if v1.len() != n || v2.len() != n {
        return Err(Error::Parameter(format!("trajectories have {} and {} samples, the time grid {n}", v1.len(), v2.len())));
    }
    let (nh, nz) = (v1[0][0].nh, v1[0][0].nz);
    let cheb = Cheb::new(nz);
    let d1 = e1_norm(&as_traj(v1), spec, &cheb)?;
    let d2 = e1_norm(&as_traj(v2), spec, &cheb)?;
    if d1 * d2 == 0.0 {
        return Err(Error::Domain("bilinear ratio with a factor of zero E1 norm".into()));
    }
    let r = Refined::new(nh, nz);
    let vals: Vec<f64> = v1
        .par_iter()
        .zip(v2)
        .map(|(a, b)| {
            let p = product(&r, a, b, kind);
            let parts: Vec<_> = p.iter().map(|f| (f, 1.0)).collect();
            lq_norm(&parts, spec.q, &r.to)
        })
        .collect();
    Ok(time_lp(&vals, &spec.time_grid, spec.p)? / (d1 * d2))
}

/// Summary of a random sampling study of [`bilinear_ratio`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilinearReport {
    pub kind: BilinearKind,
    pub p: f64,
    pub q: f64,
    pub nh: usize,
    pub nz: usize,
    pub samples: usize,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    /// Whether `(p, q)` lies in the range where the estimate is expected to hold.
    pub admissible: bool,
    pub admissibility_margin: f64,
}

/// Independent stream for one `(seed, sample, key)` triple.
fn keyed_rng(seed: u64, sample: u64, key: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(sample);
    rng
}

/// One scalar of a random series truncated at `|n|_∞ ≤ kmax`. The draw for a
/// mode depends only on its key, so a larger `kmax` extends the same series.
fn random_shape(seed: u64, sample: u64, tag: u64, nh: usize, kmax: usize, cheb: &Cheb) -> SpectralField {
    let mut f = SpectralField::zeros(nh, cheb.n);
    let k = kmax as i64;
    for n1 in -k..=k {
        for n2 in -k..=k {
            if (n1, n2) < (0, 0) {
                continue;
            }
            let n = HorizontalMode::new(n1, n2);
            let key = (tag << 32) ^ (((n1 + 512) as u64) << 16) ^ (n2 + 512) as u64;
            let mut rng = keyed_rng(seed, sample, key);
            // Hessian of the series stays square summable
            let decay = (1.0 + n.k2() as f64).powi(-2);
            let coef: Vec<C64> = (0..=DEGREE)
                .map(|_| {
                    let re: f64 = rng.random_range(-1.0..1.0);
                    let im: f64 = if n.is_zero() { 0.0 } else { rng.random_range(-1.0..1.0) };
                    C64::new(re, im) * decay
                })
                .collect();
            for (j, &z) in cheb.nodes.iter().enumerate() {
                let v = coef.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * z + c) * (1.0 - z * z);
                f.set(n, j, v);
                if !n.is_zero() {
                    f.set(n.neg(), j, v.conj());
                }
            }
        }
    }
    f
}

/// Polynomial degree of the random shapes before the wall factor `1 − z²`.
const DEGREE: usize = 4;
/// Time profiles per random trajectory.
const TERMS: u64 = 3;

/// `Σ_m cos(ω_m t + θ_m) f_m` with random wall-vanishing shapes `f_m`.
fn random_trajectory(seed: u64, sample: u64, which: u64, nh: usize, kmax: usize, cheb: &Cheb, times: &[f64]) -> Vec<[SpectralField; 2]> {
    let t_final = times.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let terms: Vec<(f64, f64, [SpectralField; 2])> = (0..TERMS)
        .map(|m| {
            let tag = 1 + 2 * (which * TERMS + m);
            let mut rng = keyed_rng(seed, sample, tag << 40);
            let omega = rng.random_range(0.0..2.0 * std::f64::consts::PI / t_final);
            let theta = rng.random_range(0.0..2.0 * std::f64::consts::PI);
            let f = [random_shape(seed, sample, tag, nh, kmax, cheb), random_shape(seed, sample, tag + 1, nh, kmax, cheb)];
            (omega, theta, f)
        })
        .collect();
    times
        .iter()
        .map(|&t| {
            let mut out = [SpectralField::zeros(nh, cheb.n), SpectralField::zeros(nh, cheb.n)];
            for (omega, theta, f) in &terms {
                let c = C64::new((omega * t + theta).cos(), 0.0);
                out[0].axpy(c, &f[0]);
                out[1].axpy(c, &f[1]);
            }
            out
        })
        .collect()
}

/// Maximum and mean of [`bilinear_ratio`] over `samples` random pairs whose
/// horizontal modes reach `kmax`. Sample `i` depends only on `(seed, i)`, and
/// raising `kmax` adds modes to it without changing the existing ones.
pub fn bilinear_sampling(nh: usize, nz: usize, kmax: usize, samples: usize, kind: BilinearKind, spec: &NormSpec, seed: u64) -> Result<BilinearReport> {
    if samples == 0 {
        return Err(Error::Parameter("at least one sample is required".into()));
    }
    if kmax == 0 || kmax > nh {
        return Err(Error::Parameter(format!("kmax must lie in 1..={nh}, got {kmax}")));
    }
    let cheb = Cheb::new(nz);
    let ratios: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let v1 = random_trajectory(seed, i as u64, 0, nh, kmax, &cheb, &spec.time_grid);
            let v2 = random_trajectory(seed, i as u64, 1, nh, kmax, &cheb, &spec.time_grid);
            bilinear_ratio(&v1, &v2, spec, kind)
        })
        .collect::<Result<_>>()?;
    Ok(BilinearReport {
        kind,
        p: spec.p,
        q: spec.q,
        nh,
        nz,
        samples,
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        mean_ratio: ratios.iter().sum::<f64>() / samples as f64,
        admissible: spec.admissible(),
        admissibility_margin: spec.admissibility_margin(),
    })
}
