//! Overflow-safe scalar and matrix symbols of the resolvent kernels and
//! numerical Mikhlin-constant estimation.
//!
//! For a mode `n ≠ 0` write `k = |n|`, `s = (λ + k²)^{1/2}`, `a = εk` and
//! `D = s² − a²`. Every exponential is evaluated with nonpositive real
//! exponent; near-cancelling differences go through `expm1`.

use crate::fields::HorizontalMode;
use crate::{Error, Result, C64};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Spectral parameter, scaling and sector half-opening.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventQuery {
    pub lambda: C64,
    pub epsilon: f64,
    pub theta: f64,
}

impl ResolventQuery {
    /// Validates `ε ∈ (0, 1]`, `θ ∈ (0, π/2)` and `|arg λ| < π − θ`.
    pub fn new(lambda: C64, epsilon: f64, theta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::Parameter(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        if !(theta > 0.0 && theta < PI / 2.0) {
            return Err(Error::Parameter(format!("theta must lie in (0, pi/2), got {theta}")));
        }
        let q = ResolventQuery { lambda, epsilon, theta };
        q.check_sector()?;
        Ok(q)
    }

    /// Like [`ResolventQuery::new`] but admits the closed sector, as needed on
    /// contour rays.
    pub fn on_contour(lambda: C64, epsilon: f64, theta: f64) -> Result<Self> {
        Self::new(lambda, epsilon, theta * (1.0 - 1e-9))
    }

    pub fn in_sector(&self) -> bool {
        self.lambda.norm() > 0.0 && self.lambda.arg().abs() < PI - self.theta
    }

    fn check_sector(&self) -> Result<()> {
        if self.in_sector() {
            Ok(())
        } else {
            Err(Error::Sector {
                re: self.lambda.re,
                im: self.lambda.im,
                theta: self.theta,
            })
        }
    }
}

/// `J₂ = diag(1, 1, 0)`.
pub fn j2() -> Matrix3<C64> {
    let one = C64::new(1.0, 0.0);
    Matrix3::from_diagonal(&nalgebra::Vector3::new(one, one, C64::new(0.0, 0.0)))
}

/// `s_λ = (λ + |n|²)^{1/2}`, principal branch.
pub fn s_lambda(q: &ResolventQuery, n: HorizontalMode) -> Result<C64> {
    q.check_sector()?;
    Ok(s_raw(q.lambda, n.k2() as f64))
}

fn s_raw(lambda: C64, k2: f64) -> C64 {
    (lambda + k2).sqrt()
}

/// `e′_λ(n, x₃) = e^{−|x₃| s_λ} / s_λ`.
pub fn e_prime_lambda(q: &ResolventQuery, n: HorizontalMode, x3: f64) -> Result<C64> {
    let s = s_lambda(q, n)?;
    Ok((-s * x3.abs()).exp() / s)
}

/// `e^w − 1` without cancellation for small `|w|`.
pub fn cexpm1(w: C64) -> C64 {
    if w.norm() < 0.5 {
        let mut term = w;
        let mut sum = w;
        for k in 2..30 {
            term *= w / k as f64;
            sum += term;
            if term.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        w.exp() - 1.0
    }
}

/// `(e^{−w t} − 1) / w`, continuous at `w = 0` (value `−t`).
pub fn expm1_quot(w: C64, t: f64) -> C64 {
    let wt = w * t;
    if wt.norm() < 0.5 {
        // −t Σ (−wt)^k / (k+1)!
        let mut term = C64::new(1.0, 0.0);
        let mut sum = term;
        for k in 1..30 {
            term *= -wt / (k + 1) as f64;
            sum += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        -t * sum
    } else {
        cexpm1(-wt) / w
    }
}

/// Scalar ingredients of the kernels at one `(λ, ε, n)`.
#[derive(Clone, Copy, Debug)]
pub struct ModeSymbols {
    pub n: [f64; 2],
    pub k: f64,
    pub s: C64,
    pub a: f64,
    pub eps: f64,
    pub lambda: C64,
}

impl ModeSymbols {
    pub fn new(lambda: C64, eps: f64, n: HorizontalMode) -> Result<Self> {
        if n.is_zero() {
            return Err(Error::ZeroMode);
        }
        let k = n.norm();
        Ok(ModeSymbols {
            n: n.as_f64(),
            k,
            s: s_raw(lambda, n.k2() as f64),
            a: eps * k,
            eps,
            lambda,
        })
    }

    /// `η′(x) = ε²/D (e^{−a|x|}/(2a) − e^{−s|x|}/(2s))`.
    pub fn eta(&self, x: f64) -> C64 {
        let t = x.abs();
        let (s, a) = (self.s, self.a);
        // ε²/a = ε/k keeps the prefactor finite as a → 0
        let pre = (self.eps / self.k) / (2.0 * s * (s + a));
        pre * (-a * t).exp() * (1.0 - a * expm1_quot(s - a, t))
    }

    /// `(e^{−s|x|} − e^{−a|x|}) / D`.
    pub fn exp_diff_over_d(&self, x: f64) -> C64 {
        let t = x.abs();
        let (s, a) = (self.s, self.a);
        (-a * t).exp() * expm1_quot(s - a, t) / (s + a)
    }

    /// Convolution kernel `k′_{λ,ε}(n, x)` of the cylinder resolvent.
    pub fn kernel(&self, x: f64) -> Matrix3<C64> {
        let s = self.s;
        let eta = self.eta(x);
        let es = (-s * x.abs()).exp() / (2.0 * s);
        let sg = sign(x);
        let off = C64::new(0.0, 1.0) * self.eps * sg * self.exp_diff_over_d(x) * 0.5;
        let [n1, n2] = self.n;
        let mut m = Matrix3::zeros();
        m[(0, 0)] = es - n1 * n1 * eta;
        m[(1, 1)] = es - n2 * n2 * eta;
        m[(0, 1)] = -n1 * n2 * eta;
        m[(1, 0)] = m[(0, 1)];
        m[(0, 2)] = off * n1;
        m[(2, 0)] = m[(0, 2)];
        m[(1, 2)] = off * n2;
        m[(2, 1)] = m[(1, 2)];
        m[(2, 2)] = self.k * self.k * eta;
        m
    }

    /// Pressure-gradient kernel of the cylinder resolvent without its
    /// `δ(x) e₃ ⊗ e₃` part. `side` fixes `sign(0)`.
    pub fn pressure_kernel(&self, x: f64, side: f64) -> Matrix3<C64> {
        let (a, k, eps) = (self.a, self.k, self.eps);
        let ea = (-a * x.abs()).exp();
        let sg = if x == 0.0 { side.signum() } else { x.signum() };
        let [n1, n2] = self.n;
        let i = C64::new(0.0, 1.0);
        let mut m = Matrix3::zeros();
        let hh = eps * ea / (2.0 * k);
        m[(0, 0)] = C64::new(n1 * n1 * hh, 0.0);
        m[(1, 1)] = C64::new(n2 * n2 * hh, 0.0);
        m[(0, 1)] = C64::new(n1 * n2 * hh, 0.0);
        m[(1, 0)] = m[(0, 1)];
        m[(0, 2)] = i * n1 * eps * sg * ea * 0.5;
        m[(2, 0)] = m[(0, 2)];
        m[(1, 2)] = i * n2 * eps * sg * ea * 0.5;
        m[(2, 1)] = m[(1, 2)];
        m[(2, 2)] = C64::new(-a * ea * 0.5, 0.0);
        m
    }

    /// `y_{λ,ε}(n)`.
    pub fn y(&self) -> Matrix3<C64> {
        let s = self.s;
        let [n1, n2] = self.n;
        let r = self.a / (self.k * self.k);
        let mut m = Matrix3::zeros();
        m[(0, 0)] = 2.0 * s + 2.0 * r * n1 * n1;
        m[(1, 1)] = 2.0 * s + 2.0 * r * n2 * n2;
        m[(0, 1)] = C64::new(2.0 * r * n1 * n2, 0.0);
        m[(1, 0)] = m[(0, 1)];
        m
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Kernel `k′_{λ,ε}(n, x₃)`; the zero mode is rejected.
pub fn kernel_k(q: &ResolventQuery, n: HorizontalMode, x3: f64) -> Result<Matrix3<C64>> {
    q.check_sector()?;
    Ok(ModeSymbols::new(q.lambda, q.epsilon, n)?.kernel(x3))
}

/// `y_{λ,ε}(n)`: top-left block `2s(I₂ + (ε|n|/s) n̂ ⊗ n̂)`, zero third row and column.
pub fn y_lambda_eps(q: &ResolventQuery, n: HorizontalMode) -> Result<Matrix3<C64>> {
    q.check_sector()?;
    Ok(ModeSymbols::new(q.lambda, q.epsilon, n)?.y())
}

/// `sinh(a x) / sinh(a)`.
pub fn sinh_ratio(a: f64, x: f64) -> f64 {
    if a == 0.0 {
        return x;
    }
    let t = x.abs();
    sign(x) * (-a * (1.0 - t)).exp() * (-(-2.0 * a * t).exp_m1()) / (-(-2.0 * a).exp_m1())
}

/// `cosh(a x) / cosh(a)`.
pub fn cosh_ratio(a: f64, x: f64) -> f64 {
    let t = x.abs();
    (-a * (1.0 - t)).exp() * (1.0 + (-2.0 * a * t).exp()) / (1.0 + (-2.0 * a).exp())
}

/// `sinh(a x) / cosh(a)`.
pub fn sinh_cosh_ratio(a: f64, x: f64) -> f64 {
    let t = x.abs();
    sign(x) * (-a * (1.0 - t)).exp() * (-(-2.0 * a * t).exp_m1()) / (1.0 + (-2.0 * a).exp())
}

/// `cosh(a x) / sinh(a)`; infinite at `a = 0`.
pub fn cosh_sinh_ratio(a: f64, x: f64) -> f64 {
    if a == 0.0 {
        return f64::INFINITY;
    }
    let t = x.abs();
    (-a * (1.0 - t)).exp() * (1.0 + (-2.0 * a * t).exp()) / (-(-2.0 * a).exp_m1())
}

/// The factors `α_{ε,±}(n, x₃)` of the harmonic pressure gradient: with
/// Neumann data `φ±` the gradient is `φ₊ α₊ + φ₋ α₋`.
pub fn alpha_pm(eps: f64, n: HorizontalMode, x3: f64) -> Result<([C64; 3], [C64; 3])> {
    if n.is_zero() {
        return Err(Error::ZeroMode);
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Parameter(format!("epsilon must lie in (0, 1], got {eps}")));
    }
    let k = n.norm();
    let a = eps * k;
    let (sc, cs) = (sinh_cosh_ratio(a, x3), cosh_sinh_ratio(a, x3));
    let (cc, ss) = (cosh_ratio(a, x3), sinh_ratio(a, x3));
    let [n1, n2] = n.as_f64();
    let i = C64::new(0.0, 1.0);
    let plus_h = (sc + cs) / (2.0 * k);
    let minus_h = (sc - cs) / (2.0 * k);
    Ok((
        [i * n1 * plus_h, i * n2 * plus_h, C64::new(0.5 * (cc + ss), 0.0)],
        [i * n1 * minus_h, i * n2 * minus_h, C64::new(0.5 * (cc - ss), 0.0)],
    ))
}

/// Symbol families whose Mikhlin constants are measured.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SymbolFamily {
    /// Constant symbol.
    Constant(f64),
    /// `ξ₁ / |ξ|`.
    Riesz,
    /// `|ξ|^α e^{−t s_λ(ξ)}`.
    HeatLike { alpha: f64, t: f64, lambda: f64 },
    /// `sinh(ε|ξ|x)/sinh(ε|ξ|) · a/(1+a)`.
    SinhSinh { eps: f64, x: f64 },
    /// `cosh(ε|ξ|x)/sinh(ε|ξ|) · a/(1+a)`.
    CoshSinh { eps: f64, x: f64 },
    /// `sinh(ε|ξ|x)/cosh(ε|ξ|)`.
    SinhCosh { eps: f64, x: f64 },
    /// `cosh(ε|ξ|x)/cosh(ε|ξ|)`.
    CoshCosh { eps: f64, x: f64 },
}

impl SymbolFamily {
    pub fn name(&self) -> &'static str {
        match self {
            SymbolFamily::Constant(_) => "constant",
            SymbolFamily::Riesz => "riesz",
            SymbolFamily::HeatLike { .. } => "heat",
            SymbolFamily::SinhSinh { .. } => "sinh_sinh",
            SymbolFamily::CoshSinh { .. } => "cosh_sinh",
            SymbolFamily::SinhCosh { .. } => "sinh_cosh",
            SymbolFamily::CoshCosh { .. } => "cosh_cosh",
        }
    }

    pub fn eval(&self, xi: [f64; 2]) -> C64 {
        let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
        let damp = |a: f64| a / (1.0 + a);
        let v = match *self {
            SymbolFamily::Constant(c) => c,
            SymbolFamily::Riesz => xi[0] / r,
            SymbolFamily::HeatLike { alpha, t, lambda } => {
                return r.powf(alpha) * (-t * (C64::new(lambda, 0.0) + r * r).sqrt()).exp();
            }
            SymbolFamily::SinhSinh { eps, x } => sinh_ratio(eps * r, x) * damp(eps * r),
            SymbolFamily::CoshSinh { eps, x } => {
                let a = eps * r;
                // cosh(ax)/sinh(a) · a/(1+a), written without the pole at a = 0
                cosh_ratio(a, x) * a / ((1.0 + a) * (a.tanh().max(1e-300)))
            }
            SymbolFamily::SinhCosh { eps, x } => sinh_cosh_ratio(eps * r, x),
            SymbolFamily::CoshCosh { eps, x } => cosh_ratio(eps * r, x),
        };
        C64::new(v, 0.0)
    }
}

/// Sampling grid for [`mikhlin_estimate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MikhlinGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub n_radii: usize,
    pub n_directions: usize,
    /// Relative difference step `h = rel_step · |ξ|`.
    pub rel_step: f64,
}

impl Default for MikhlinGrid {
    fn default() -> Self {
        MikhlinGrid {
            r_min: 1e-3,
            r_max: 1e3,
            n_radii: 121,
            n_directions: 64,
            rel_step: 1e-4,
        }
    }
}

/// `max |ξ^α ∂^α m(ξ)|` over the grid and `α ∈ {0,1}²`, with central differences.
pub fn mikhlin_estimate(m: impl Fn([f64; 2]) -> C64, grid: &MikhlinGrid) -> Result<f64> {
    if !(grid.r_min > 0.0 && grid.r_max >= grid.r_min && grid.n_radii >= 1 && grid.n_directions >= 1 && grid.rel_step > 0.0) {
        return Err(Error::Domain("degenerate Mikhlin grid".into()));
    }
    let mut best: f64 = 0.0;
    let lr = (grid.r_max / grid.r_min).ln();
    for ir in 0..grid.n_radii {
        let r = if grid.n_radii == 1 {
            grid.r_min
        } else {
            grid.r_min * (lr * ir as f64 / (grid.n_radii - 1) as f64).exp()
        };
        let h = grid.rel_step * r;
        for id in 0..grid.n_directions {
            // offset avoids sampling exactly on the axes
            let phi = 2.0 * PI * (id as f64 + 0.5) / grid.n_directions as f64;
            let (x1, x2) = (r * phi.cos(), r * phi.sin());
            let m0 = m([x1, x2]);
            let d1 = (m([x1 + h, x2]) - m([x1 - h, x2])) / (2.0 * h);
            let d2 = (m([x1, x2 + h]) - m([x1, x2 - h])) / (2.0 * h);
            let d12 = (m([x1 + h, x2 + h]) - m([x1 + h, x2 - h]) - m([x1 - h, x2 + h]) + m([x1 - h, x2 - h]))
                / (4.0 * h * h);
            let v = m0.norm().max((x1 * d1).norm()).max((x2 * d2).norm()).max((x1 * x2 * d12).norm());
            if !v.is_finite() {
                return Err(Error::Domain(format!("symbol not finite near |xi| = {r}")));
            }
            best = best.max(v);
        }
    }
    Ok(best)
}

/// Envelope `M(t, λ) ≤ C e^{−c t |λ|^{1/2}} / t^α` fitted to measured constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub c_const: f64,
    pub c_rate: f64,
}

/// Fits `(C, c)` by least squares on `log(M t^α)` against `t|λ|^{1/2}`, then
/// raises `C` until every sample lies under the envelope.
pub fn fit_envelope(samples: &[(f64, f64, f64)], alpha: f64) -> Result<EnvelopeFit> {
    if samples.len() < 2 {
        return Err(Error::Domain("need at least two samples for an envelope fit".into()));
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(t, lam, m)| (t * lam.abs().sqrt(), (m * t.powf(alpha)).ln()))
        .collect();
    let (slope, _) = least_squares(&pts);
    let c_rate = (-slope).max(0.0);
    let c_const = pts.iter().map(|&(u, y)| (y + c_rate * u).exp()).fold(0.0, f64::max);
    Ok(EnvelopeFit { c_const, c_rate })
}

/// Ordinary least-squares line `y = slope·x + intercept`.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::cheb::gauss_legendre;
    use proptest::prelude::*;

    fn mabs(m: &Matrix3<C64>) -> f64 {
        m.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    fn q(l: C64, e: f64) -> ResolventQuery {
        ResolventQuery::new(l, e, PI / 4.0).unwrap()
    }

    #[test]
    fn s_lambda_examples() {
        let one = C64::new(1.0, 0.0);
        assert!((s_lambda(&q(one, 1.0), HorizontalMode::new(0, 0)).unwrap() - 1.0).norm() < 1e-15);
        assert!((s_lambda(&q(C64::new(3.0, 0.0), 1.0), HorizontalMode::new(1, 0)).unwrap() - 2.0).norm() < 1e-15);
        let l = C64::from_polar(1.0, 2.0);
        assert!(s_lambda(&q(l, 1.0), HorizontalMode::new(0, 0)).unwrap().re > 0.0);
        assert!(matches!(
            ResolventQuery::new(C64::new(-1.0, 0.1), 1.0, PI / 4.0),
            Err(Error::Sector { .. })
        ));
    }

    #[test]
    fn e_prime_examples() {
        let z = HorizontalMode::new(0, 0);
        assert!((e_prime_lambda(&q(C64::new(1.0, 0.0), 1.0), z, 0.0).unwrap() - 1.0).norm() < 1e-15);
        let v = e_prime_lambda(&q(C64::new(4.0, 0.0), 1.0), z, 1.0).unwrap();
        assert!((v.re - (-2.0f64).exp() / 2.0).abs() < 1e-15 && (v.re - 0.06767).abs() < 1e-5);
        let qq = q(C64::new(2.0, 1.0), 0.5);
        let n = HorizontalMode::new(1, 2);
        assert_eq!(e_prime_lambda(&qq, n, 0.3).unwrap(), e_prime_lambda(&qq, n, -0.3).unwrap());
    }

    #[test]
    fn zero_mode_is_rejected() {
        let qq = q(C64::new(1.0, 0.0), 0.5);
        assert!(matches!(kernel_k(&qq, HorizontalMode::new(0, 0), 0.1), Err(Error::ZeroMode)));
        assert!(matches!(y_lambda_eps(&qq, HorizontalMode::new(0, 0)), Err(Error::ZeroMode)));
        assert!(matches!(alpha_pm(0.5, HorizontalMode::new(0, 0), 0.1), Err(Error::ZeroMode)));
    }

    /// Inverse Fourier transform in ξ₃ of the full symbol, by Gauss–Legendre
    /// panels on [0, Ξ] plus a three-term asymptotic tail.
    fn kernel_by_quadrature(lambda: C64, eps: f64, n: [f64; 2], x: f64) -> Matrix3<C64> {
        let k2 = n[0] * n[0] + n[1] * n[1];
        let sym = |xi: f64| -> Matrix3<C64> {
            let v = [n[0], n[1], xi / eps];
            let nv = k2 + v[2] * v[2];
            let g = 1.0 / (lambda + k2 + xi * xi);
            Matrix3::from_fn(|i, j| {
                let d = if i == j { 1.0 } else { 0.0 };
                g * (d - v[i] * v[j] / nv)
            })
        };
        let (gx, gw) = gauss_legendre(20);
        let big = 3000.0;
        let panels = 6000;
        let h = big / panels as f64;
        let mut acc = Matrix3::<C64>::zeros();
        for p in 0..panels {
            let (lo, hi) = (p as f64 * h, (p + 1) as f64 * h);
            for (t, w) in gx.iter().zip(&gw) {
                let xi = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
                let m = sym(xi);
                let ww = 0.5 * (hi - lo) * w;
                for i in 0..3 {
                    for j in 0..3 {
                        // even entries pair with cos, odd entries with sin
                        let odd = (i == 2) != (j == 2);
                        let c = if odd {
                            C64::new(0.0, (xi * x).sin())
                        } else {
                            C64::new((xi * x).cos(), 0.0)
                        };
                        acc[(i, j)] += m[(i, j)] * c * ww;
                    }
                }
            }
        }
        // tail ∫_Ξ^∞ h(ξ) cos/sin(ξx) via repeated integration by parts
        if x == 0.0 {
            let m0 = sym(big);
            for i in 0..3 {
                for j in 0..3 {
                    if (i == 2) == (j == 2) {
                        acc[(i, j)] += m0[(i, j)] * big;
                    }
                }
            }
        } else {
            let d = 1e-2 * big;
            let m0 = sym(big);
            let m1 = (sym(big + d) - sym(big - d)) / C64::new(2.0 * d, 0.0);
            let m2 = (sym(big + d) - sym(big) * C64::new(2.0, 0.0) + sym(big - d)) / C64::new(d * d, 0.0);
            let (s, c) = ((big * x).sin(), (big * x).cos());
            for i in 0..3 {
                for j in 0..3 {
                    let odd = (i == 2) != (j == 2);
                    let tail = if odd {
                        C64::new(0.0, 1.0) * (m0[(i, j)] * c / x - m1[(i, j)] * s / (x * x) - m2[(i, j)] * c / (x * x * x))
                    } else {
                        -m0[(i, j)] * s / x - m1[(i, j)] * c / (x * x) + m2[(i, j)] * s / (x * x * x)
                    };
                    acc[(i, j)] += tail;
                }
            }
        }
        acc / C64::new(PI, 0.0)
    }

    #[test]
    fn kernel_matches_fourier_quadrature() {
        let got = kernel_k(&q(C64::new(2.0, 1.0), 0.7), HorizontalMode::new(1, 1), 0.4).unwrap();
        let want = kernel_by_quadrature(C64::new(2.0, 1.0), 0.7, [1.0, 1.0], 0.4);
        let err = mabs(&(got - want));
        assert!(err < 1e-8, "kernel gap {err:e}");
    }

    #[test]
    fn kernel_matches_quadrature_on_parameter_sample() {
        for &lam in &[C64::new(2.0, 1.0), C64::new(50.0, 0.0), C64::new(-3.0, 5.0)] {
            for &eps in &[1.0, 0.3, 0.05] {
                for &x in &[0.0, 0.25, -1.3] {
                    let got = kernel_k(&q(lam, eps), HorizontalMode::new(1, -2), x).unwrap();
                    let want = kernel_by_quadrature(lam, eps, [1.0, -2.0], x);
                    let err = mabs(&(got - want));
                    assert!(err < 1e-8, "lam={lam} eps={eps} x={x}: {err:e}");
                }
            }
        }
    }

    #[test]
    fn kernel_decays_and_is_symmetric() {
        let qq = q(C64::new(10.0, 3.0), 0.2);
        let n = HorizontalMode::new(2, 1);
        let m = kernel_k(&qq, n, 0.6).unwrap();
        assert!(mabs(&(m - m.transpose())) < 1e-16);
        let far = mabs(&kernel_k(&qq, n, 30.0).unwrap());
        let rate = (10.0f64).sqrt().min(0.2 * 5f64.sqrt());
        assert!(far < (-rate * 29.0).exp());
    }

    #[test]
    fn y_block_limits() {
        let n = HorizontalMode::new(3, -1);
        let qq = q(C64::new(7.0, -2.0), 1e-9);
        let y = y_lambda_eps(&qq, n).unwrap();
        let s = s_lambda(&qq, n).unwrap();
        assert!((y[(0, 0)] - 2.0 * s).norm() < 1e-7 && y[(0, 1)].norm() < 1e-7);
        assert!(y[(2, 2)].norm() == 0.0 && y[(0, 2)].norm() == 0.0);
        assert!(mabs(&(y - y.transpose())) == 0.0);
    }

    #[test]
    fn sinh_cosh_ratio_examples() {
        for &a in &[0.0, 1e-8, 0.3, 5.0, 1e6] {
            assert!((sinh_ratio(a, 1.0) - 1.0).abs() < 1e-15);
            assert!((cosh_ratio(a, 1.0) - 1.0).abs() < 1e-15);
            assert_eq!(sinh_ratio(a, 0.0), 0.0);
        }
        let (a, x) = (1e4, 0.5f64);
        let oracle = (-a * (1.0 - x)).exp() * (1.0 - (-2.0 * a * x).exp()) / (1.0 - (-2.0 * a).exp());
        assert_eq!(sinh_ratio(a, x), oracle);
        for i in 0..=40 {
            let a = 0.5 * i as f64;
            for j in 0..=20 {
                let x = -1.0 + 0.1 * j as f64;
                if a > 0.0 {
                    assert!((sinh_ratio(a, x) - (a * x).sinh() / a.sinh()).abs() < 1e-13);
                    assert!((cosh_sinh_ratio(a, x) - (a * x).cosh() / a.sinh()).abs() < 1e-13 * (1.0 + 1.0 / a));
                }
                assert!((cosh_ratio(a, x) - (a * x).cosh() / a.cosh()).abs() < 1e-13);
                assert!((sinh_cosh_ratio(a, x) - (a * x).sinh() / a.cosh()).abs() < 1e-13);
                assert!(sinh_ratio(a, x).abs() <= 1.0 && cosh_ratio(a, x) <= 1.0 && sinh_cosh_ratio(a, x).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn alpha_traces_reproduce_neumann_data() {
        let n = HorizontalMode::new(1, 2);
        for &eps in &[1.0, 0.3, 0.01] {
            let (p1, m1) = alpha_pm(eps, n, 1.0).unwrap();
            let (p0, m0) = alpha_pm(eps, n, -1.0).unwrap();
            assert!((p1[2] - 1.0).norm() < 1e-14 && p0[2].norm() < 1e-14);
            assert!(m1[2].norm() < 1e-14 && (m0[2] - 1.0).norm() < 1e-14);
        }
        for &x in &[-0.7, 0.0, 0.4] {
            let (p, _) = alpha_pm(1e-7, HorizontalMode::new(1, 0), x).unwrap();
            assert!((p[2].re - (1.0 + x) / 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn complex_expm1_small_arguments() {
        let w = C64::new(1e-9, -2e-9);
        assert!((cexpm1(w) - (w + w * w / 2.0)).norm() < 1e-26);
        let w = C64::new(0.3, 0.2);
        assert!((cexpm1(w) - (w.exp() - 1.0)).norm() < 1e-15);
        assert!((expm1_quot(C64::new(0.0, 0.0), 0.7) + 0.7).norm() < 1e-16);
    }

    #[test]
    fn mikhlin_simple_symbols() {
        let g = MikhlinGrid::default();
        let c = mikhlin_estimate(|_| C64::new(-2.5, 0.0), &g).unwrap();
        assert!((c - 2.5).abs() < 1e-12);
        let r1 = mikhlin_estimate(|x| SymbolFamily::Riesz.eval(x), &g).unwrap();
        let fine = MikhlinGrid {
            n_directions: 128,
            n_radii: 241,
            ..g.clone()
        };
        let r2 = mikhlin_estimate(|x| SymbolFamily::Riesz.eval(x), &fine).unwrap();
        assert!(r1.is_finite() && ((r1 - r2) / r2).abs() < 0.05);
        let bad = MikhlinGrid { r_min: 0.0, ..g };
        assert!(mikhlin_estimate(|_| C64::new(1.0, 0.0), &bad).is_err());
    }

    #[test]
    fn heat_family_envelope() {
        let alpha = 1.0;
        let g = MikhlinGrid::default();
        let mut samples = Vec::new();
        for &t in &[0.5, 1.0, 2.0] {
            for &lam in &[1.0, 10.0, 100.0] {
                let m = mikhlin_estimate(|x| SymbolFamily::HeatLike { alpha, t, lambda: lam }.eval(x), &g).unwrap();
                samples.push((t, lam, m));
            }
        }
        let fit = fit_envelope(&samples, alpha).unwrap();
        assert!(fit.c_rate > 0.0 && fit.c_const.is_finite());
        for &(t, lam, m) in &samples {
            assert!(m <= fit.c_const * (-fit.c_rate * t * lam.sqrt()).exp() / t.powf(alpha) * (1.0 + 1e-12));
        }
    }

    proptest! {
        #[test]
        fn identity_k_y_equals_j2(r in 0.01f64..1e4, arg in -2.3f64..2.3, eps in 1e-3f64..1.0, n1 in -8i64..8, n2 in -8i64..8) {
            prop_assume!(n1 != 0 || n2 != 0);
            let qq = q(C64::from_polar(r, arg), eps);
            let n = HorizontalMode::new(n1, n2);
            let prod = kernel_k(&qq, n, 0.0).unwrap() * y_lambda_eps(&qq, n).unwrap();
            prop_assert!(mabs(&(prod - j2())) < 1e-12);
        }

        #[test]
        fn ratios_never_overflow(a in 0.0f64..1e6, x in -1.0f64..1.0) {
            for v in [sinh_ratio(a, x), cosh_ratio(a, x), sinh_cosh_ratio(a, x)] {
                prop_assert!(v.is_finite() && v.abs() <= 1.0 + 1e-15);
            }
        }
    }
}
