//! Anisotropic Helmholtz projection on the cylinder restricted to the layer,
//! the harmonic-pressure operator `Π_ε`, the normal-trace projection
//! `P_{N,ε}` and the layer Helmholtz projection `H_ε`.
//!
//! Per mode `n ≠ 0`, with `a = ε|n|`, every cylinder operator reduces to the
//! one-sided exponential integrals over `[−1, 1]`
//!
//! ```text
//! L_σ p(x) = ∫_{−1}^{x} e^{−σ(x−ζ)} p(ζ) dζ,   R_σ p(x) = ∫_{x}^{1} e^{−σ(ζ−x)} p(ζ) dζ,
//! E_σ = L_σ + R_σ,   O_σ = L_σ − R_σ.
//! ```

use crate::fields::cheb::gauss_legendre;
use crate::fields::{Cheb, Grid, HorizontalMode, SpectralField, VectorField};
use crate::symbols::{cosh_ratio, cosh_sinh_ratio, sinh_cosh_ratio, sinh_ratio};
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;
use std::sync::OnceLock;

const GL_POINTS: usize = 24;

fn gl() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(GL_POINTS))
}

/// `E_σ` and `O_σ` from the nodes of `cheb` to arbitrary targets in `[−1, 1]`.
#[derive(Clone, Debug)]
pub struct ExpConv {
    pub even: DMatrix<C64>,
    pub odd: DMatrix<C64>,
}

/// One-sided integral rows: `∫_0^{len} e^{−σt} p(x ∓ t) dt` against the interpolant.
fn one_sided_row(cheb: &Cheb, sigma: C64, x: f64, left: bool, out: &mut [C64], row: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
    let len = if left { x + 1.0 } else { 1.0 - x };
    if len <= 0.0 {
        return;
    }
    let tmax = if sigma.re > 0.0 { len.min(40.0 / sigma.re) } else { len };
    let h0 = if sigma.norm() > 0.0 { (2.0 / sigma.norm()).min(0.25) } else { 0.25 };
    let panels = ((tmax / h0).ceil() as usize).max(1);
    let h = tmax / panels as f64;
    let (gx, gw) = gl();
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (t0, w0) in gx.iter().zip(gw) {
            let t = mid + 0.5 * h * t0;
            let z = if left { x - t } else { x + t };
            cheb.interp_row(z.clamp(-1.0, 1.0), row);
            let wt = (-sigma * t).exp() * (0.5 * h * w0);
            for (o, r) in out.iter_mut().zip(row.iter()) {
                *o += wt * *r;
            }
        }
    }
}

/// Builds `E_σ`, `O_σ` by Gauss–Legendre panels graded to the decay scale `1/|σ|`.
pub fn exp_convolution(cheb: &Cheb, sigma: C64, targets: &[f64]) -> ExpConv {
    let n = cheb.n;
    let mut even = DMatrix::<C64>::zeros(targets.len(), n);
    let mut odd = DMatrix::<C64>::zeros(targets.len(), n);
    let mut l = vec![C64::new(0.0, 0.0); n];
    let mut r = vec![C64::new(0.0, 0.0); n];
    let mut row = vec![0.0; n];
    for (i, &x) in targets.iter().enumerate() {
        one_sided_row(cheb, sigma, x, true, &mut l, &mut row);
        one_sided_row(cheb, sigma, x, false, &mut r, &mut row);
        for j in 0..n {
            even[(i, j)] = l[j] + r[j];
            odd[(i, j)] = l[j] - r[j];
        }
    }
    ExpConv { even, odd }
}

/// Harmonic `π` with `Δ_ε π = 0` and Neumann data `∂₃π/ε = φ±` at `x₃ = ±1`,
/// evaluated at `xs`. Returns `(∇_ε π, π)`.
pub fn harmonic_gradient(eps: f64, n: HorizontalMode, phi_p: C64, phi_m: C64, xs: &[f64]) -> ([DVector<C64>; 3], DVector<C64>) {
    let k = n.norm();
    let a = eps * k;
    let (aa, bb) = ((phi_p + phi_m) * 0.5, (phi_p - phi_m) * 0.5);
    let m = xs.len();
    let mut pi = DVector::<C64>::zeros(m);
    let mut g3 = DVector::<C64>::zeros(m);
    for (i, &x) in xs.iter().enumerate() {
        pi[i] = (aa * sinh_cosh_ratio(a, x) + bb * cosh_sinh_ratio(a, x)) / k;
        g3[i] = aa * cosh_ratio(a, x) + bb * sinh_ratio(a, x);
    }
    let i = C64::new(0.0, 1.0);
    let [n1, n2] = n.as_f64();
    ([&pi * (i * n1), &pi * (i * n2), g3], pi)
}

/// Column of a vector field at one mode.
pub fn mode_columns(u: &VectorField, idx: usize) -> [DVector<C64>; 3] {
    let nz = u.nz();
    [0, 1, 2].map(|c| DVector::from_column_slice(&u.c[c].data[idx * nz..(idx + 1) * nz]))
}

/// Writes mode columns into a vector field.
pub fn set_mode_columns(u: &mut VectorField, idx: usize, cols: &[DVector<C64>; 3]) {
    let nz = u.nz();
    for c in 0..3 {
        u.c[c].data[idx * nz..(idx + 1) * nz].copy_from_slice(cols[c].as_slice());
    }
}

fn zero_mode_norm(u: &VectorField) -> f64 {
    let i0 = u.c[0].index_of(HorizontalMode::new(0, 0)).unwrap();
    let nz = u.nz();
    (0..3)
        .map(|c| u.c[c].data[i0 * nz..(i0 + 1) * nz].iter().map(|v| v.norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

/// Output of [`ProjectionWorkspace::helmholtz`].
#[derive(Clone, Debug)]
pub struct HelmholtzSplit {
    /// `H_ε u`.
    pub projected: VectorField,
    /// `∇_ε(π⁰ + π¹ + π²)`.
    pub grad_pi: VectorField,
    /// The pressure `π⁰ + π¹ + π²`, mean-free.
    pub pi: SpectralField,
}

/// Cached `E_a`, `O_a` per `|n|²` for one `(N_h, N_z, ε)`.
#[derive(Clone, Debug)]
pub struct ProjectionWorkspace {
    pub nh: usize,
    pub eps: f64,
    pub cheb: Cheb,
    kernels: HashMap<i64, ExpConv>,
}

impl ProjectionWorkspace {
    pub fn new(grid: &Grid, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::Parameter(format!("epsilon must lie in (0, 1], got {eps}")));
        }
        let mut kernels = HashMap::new();
        let nh = grid.nh as i64;
        for n1 in 0..=nh {
            for n2 in 0..=nh {
                let k2 = n1 * n1 + n2 * n2;
                if k2 == 0 || kernels.contains_key(&k2) {
                    continue;
                }
                let a = eps * (k2 as f64).sqrt();
                kernels.insert(k2, exp_convolution(&grid.cheb, C64::new(a, 0.0), &grid.cheb.nodes));
            }
        }
        Ok(ProjectionWorkspace {
            nh: grid.nh,
            eps,
            cheb: grid.cheb.clone(),
            kernels,
        })
    }

    fn conv(&self, n: HorizontalMode) -> &ExpConv {
        &self.kernels[&n.k2()]
    }

    fn check(&self, u: &VectorField) -> Result<()> {
        if u.nh() != self.nh || u.nz() != self.cheb.n {
            return Err(Error::Dimension {
                expected: self.cheb.n,
                actual: u.nz(),
            });
        }
        Ok(())
    }

    /// Per-mode `∇_ε φ` with `φ` the whole-cylinder potential of `E₀f`; the
    /// cylinder projection is `f − ∇_ε φ`.
    pub fn cylinder_gradient_mode(&self, n: HorizontalMode, f: &[DVector<C64>; 3]) -> [DVector<C64>; 3] {
        let eps = self.eps;
        let k = n.norm();
        let a = eps * k;
        let [n1, n2] = n.as_f64();
        let i = C64::new(0.0, 1.0);
        let cv = self.conv(n);
        let nf = &f[0] * C64::new(n1, 0.0) + &f[1] * C64::new(n2, 0.0);
        let ea_nf = &cv.even * &nf;
        let oa_f3 = &cv.odd * &f[2];
        let h = &ea_nf * C64::new(eps / (2.0 * k), 0.0) + &oa_f3 * (i * eps * 0.5);
        let g3 = &f[2] + &cv.odd * &nf * (i * eps * 0.5) - &cv.even * &f[2] * C64::new(a * 0.5, 0.0);
        [&h * C64::new(n1, 0.0), &h * C64::new(n2, 0.0), g3]
    }

    fn map_modes(
        &self,
        u: &VectorField,
        zero: impl Fn(&[DVector<C64>; 3]) -> [DVector<C64>; 3],
        f: impl Fn(HorizontalMode, &[DVector<C64>; 3]) -> [DVector<C64>; 3],
    ) -> VectorField {
        let mut out = VectorField::zeros(u.nh(), u.nz());
        for (idx, n) in u.c[0].modes() {
            let cols = mode_columns(u, idx);
            let r = if n.is_zero() { zero(&cols) } else { f(n, &cols) };
            set_mode_columns(&mut out, idx, &r);
        }
        out
    }

    /// `R₀ P_ε E₀ f` on the layer.
    pub fn project_cylinder(&self, f: &VectorField) -> Result<VectorField> {
        self.check(f)?;
        if zero_mode_norm(f) > 0.0 {
            return Err(Error::ZeroMode);
        }
        Ok(self.map_modes(f, |c| c.clone(), |n, c| {
            let g = self.cylinder_gradient_mode(n, c);
            [&c[0] - &g[0], &c[1] - &g[1], &c[2] - &g[2]]
        }))
    }

    /// `Π_ε f = ∇_ε π₃` whose Neumann data are the normal traces of the cylinder projection.
    pub fn pi_eps(&self, f: &VectorField) -> Result<VectorField> {
        self.check(f)?;
        if zero_mode_norm(f) > 0.0 {
            return Err(Error::ZeroMode);
        }
        let nz = self.cheb.n;
        Ok(self.map_modes(f, |c| c.clone(), |n, c| {
            let g = self.cylinder_gradient_mode(n, c);
            let (pp, pm) = (c[2][0] - g[2][0], c[2][nz - 1] - g[2][nz - 1]);
            harmonic_gradient(self.eps, n, pp, pm, &self.cheb.nodes).0
        }))
    }

    /// `P_{N,ε} f = R₀(P_ε − Π_ε) E₀ f`.
    pub fn p_n_eps(&self, f: &VectorField) -> Result<VectorField> {
        let p = self.project_cylinder(f)?;
        let pi = self.pi_eps(f)?;
        Ok(p.sub(&pi))
    }

    /// Layer Helmholtz projection `u = H_ε u + ∇_ε π`, `π = π⁰ + π¹ + π²`.
    pub fn helmholtz(&self, u: &VectorField) -> Result<HelmholtzSplit> {
        self.check(u)?;
        let eps = self.eps;
        let cheb = &self.cheb;
        let nz = cheb.n;
        let i = C64::new(0.0, 1.0);
        let mut grad = VectorField::zeros(u.nh(), nz);
        let mut pi = SpectralField::zeros(u.nh(), nz);
        for (idx, n) in u.c[0].modes() {
            let c = mode_columns(u, idx);
            if n.is_zero() {
                // ∇_ε π⁰ = (0, 0, u₃), π⁰ = ε ∫ u₃
                let p0 = real_times(&cheb.cumint, &c[2]) * C64::new(eps, 0.0);
                let z = DVector::zeros(nz);
                set_mode_columns(&mut grad, idx, &[z.clone(), z, c[2].clone()]);
                pi.column_mut(idx).copy_from_slice(p0.as_slice());
                continue;
            }
            let k = n.norm();
            let [n1, n2] = n.as_f64();
            let cv = self.conv(n);
            let dz = real_times(&cheb.d1, &c[2]);
            let g = (&c[0] * (i * n1)) + (&c[1] * (i * n2)) + dz * C64::new(1.0 / eps, 0.0);
            let p1 = &cv.even * &g * C64::new(-eps / (2.0 * k), 0.0);
            let p1z = &cv.odd * &g * C64::new(eps * eps * 0.5, 0.0);
            let (phi_p, phi_m) = (c[2][0] - p1z[0] / eps, c[2][nz - 1] - p1z[nz - 1] / eps);
            let (g2, p2) = harmonic_gradient(eps, n, phi_p, phi_m, &cheb.nodes);
            let total = &p1 + &p2;
            let cols = [
                &total * (i * n1),
                &total * (i * n2),
                &p1z * C64::new(1.0 / eps, 0.0) + &g2[2],
            ];
            set_mode_columns(&mut grad, idx, &cols);
            pi.column_mut(idx).copy_from_slice(total.as_slice());
        }
        crate::fields::remove_mean(&mut pi, cheb);
        Ok(HelmholtzSplit {
            projected: u.sub(&grad),
            grad_pi: grad,
            pi,
        })
    }
}

/// Real matrix times complex vector.
pub fn real_times(m: &DMatrix<f64>, v: &DVector<C64>) -> DVector<C64> {
    let mut out = DVector::<C64>::zeros(m.nrows());
    for i in 0..m.nrows() {
        let mut s = C64::new(0.0, 0.0);
        for j in 0..m.ncols() {
            s += v[j] * m[(i, j)];
        }
        out[i] = s;
    }
    out
}

/// Discrete `div_ε` of a vector field followed by its largest value.
pub fn divergence_defect(u: &VectorField, eps: f64, cheb: &Cheb) -> f64 {
    crate::fields::divergence_eps(u, eps, cheb).map(|d| d.max_abs()).unwrap_or(f64::INFINITY)
}

/// Largest normal trace `|u₃(±1)|`.
pub fn normal_trace_defect(u: &VectorField) -> f64 {
    let nz = u.nz();
    u.c[2].data.chunks(nz).map(|c| c[0].norm().max(c[nz - 1].norm())).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::random::{random_vector, RandomShape};
    use crate::fields::{transform, PhysicalField};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel(a: &VectorField, b: &VectorField, cheb: &Cheb) -> f64 {
        a.sub(b).l2_norm(cheb) / b.l2_norm(cheb).max(1e-300)
    }

    #[test]
    fn convolution_matches_closed_form() {
        // p ≡ 1: L_σ 1 = (1 − e^{−σ(x+1)})/σ
        let cheb = Cheb::new(12);
        let sigma = C64::new(7.0, 2.0);
        let cv = exp_convolution(&cheb, sigma, &cheb.nodes);
        let one = DVector::from_element(12, C64::new(1.0, 0.0));
        let e = &cv.even * &one;
        let o = &cv.odd * &one;
        for (i, &x) in cheb.nodes.iter().enumerate() {
            let l = (1.0 - (-sigma * (x + 1.0)).exp()) / sigma;
            let r = (1.0 - (-sigma * (1.0 - x)).exp()) / sigma;
            assert!((e[i] - (l + r)).norm() < 1e-14);
            assert!((o[i] - (l - r)).norm() < 1e-14);
        }
    }

    #[test]
    fn cylinder_vertical_component_matches_direct_quadrature() {
        // e₃·P f = (a/2) ∫ e^{−a|x−ζ|} f₃ − i(ε/2) ∫ sign(x−ζ) e^{−a|x−ζ|} n·f_H
        let nz = 14;
        let grid = Grid::new(2, nz);
        let eps = 0.4;
        let ws = ProjectionWorkspace::new(&grid, eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_vector(&mut rng, 2, &grid.cheb, RandomShape::default());
        let p = ws.project_cylinder(&f).unwrap();
        let n = HorizontalMode::new(1, -2);
        let idx = f.c[0].index_of(n).unwrap();
        let cols = mode_columns(&f, idx);
        let coef = |c: &DVector<C64>| -> (Vec<f64>, Vec<f64>) {
            let re: Vec<f64> = c.iter().map(|v| v.re).collect();
            let im: Vec<f64> = c.iter().map(|v| v.im).collect();
            (grid.cheb.coefficients(&re), grid.cheb.coefficients(&im))
        };
        let eval = |cf: &(Vec<f64>, Vec<f64>), z: f64| -> C64 {
            let t = |a: &Vec<f64>| a.iter().enumerate().map(|(k, c)| c * (k as f64 * z.acos()).cos()).sum::<f64>();
            C64::new(t(&cf.0), t(&cf.1))
        };
        let nf = &cols[0] * C64::new(1.0, 0.0) + &cols[1] * C64::new(-2.0, 0.0);
        let (cf3, cnf) = (coef(&cols[2]), coef(&nf));
        let a = eps * 5f64.sqrt();
        // Clenshaw–Curtis on each side of x with 200 nodes
        let cc = Cheb::new(201);
        for (j, &x) in grid.cheb.nodes.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (lo, hi, sg) in [(-1.0, x, 1.0), (x, 1.0, -1.0)] {
                if hi <= lo {
                    continue;
                }
                for (zq, wq) in cc.nodes.iter().zip(&cc.weights) {
                    let z = 0.5 * (lo + hi) + 0.5 * (hi - lo) * zq;
                    let w = 0.5 * (hi - lo) * wq;
                    let e = (-a * (x - z).abs()).exp();
                    acc += w * e * (a / 2.0 * eval(&cf3, z) - C64::new(0.0, eps / 2.0) * sg * eval(&cnf, z));
                }
            }
            let got = p.c[2].data[idx * nz + j];
            assert!((got - acc).norm() < 1e-10, "node {j}: {got} vs {acc}");
        }
    }

    #[test]
    fn zero_inputs_and_zero_mode_error() {
        let grid = Grid::new(2, 8);
        let ws = ProjectionWorkspace::new(&grid, 0.5).unwrap();
        let z = VectorField::zeros(2, 8);
        assert_eq!(ws.project_cylinder(&z).unwrap().max_abs(), 0.0);
        assert_eq!(ws.pi_eps(&z).unwrap().max_abs(), 0.0);
        assert_eq!(ws.p_n_eps(&z).unwrap().max_abs(), 0.0);
        let mut f = z.clone();
        f.c[0].set(HorizontalMode::new(0, 0), 2, C64::new(1.0, 0.0));
        assert!(matches!(ws.project_cylinder(&f), Err(Error::ZeroMode)));
    }

    #[test]
    fn pi_eps_is_harmonic_and_p_n_has_zero_normal_trace() {
        let grid = Grid::new(3, 24);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for &eps in &[1.0, 0.1] {
            let ws = ProjectionWorkspace::new(&grid, eps).unwrap();
            let f = random_vector(&mut rng, 3, &grid.cheb, RandomShape::default());
            let g = ws.pi_eps(&f).unwrap();
            // ∇_ε π₃ is harmonic iff div_ε of it vanishes
            assert!(divergence_defect(&g, eps, &grid.cheb) < 1e-9 * g.max_abs().max(1.0));
            let p = ws.p_n_eps(&f).unwrap();
            assert!(normal_trace_defect(&p) < 1e-9);
            assert!(divergence_defect(&p, eps, &grid.cheb) < 1e-9 * f.max_abs().max(1.0) / eps);
        }
    }

    #[test]
    fn helmholtz_fixed_point_and_gradient_annihilation() {
        let grid = Grid::new(3, 24);
        let cheb = &grid.cheb;
        let eps = 0.3;
        let ws = ProjectionWorkspace::new(&grid, eps).unwrap();
        // u = ∇_ε φ with ∂₃φ = 0 at the walls
        let phi = transform(
            &PhysicalField::from_fn(7, &cheb.nodes, |x, _, z| x.cos() * (1.0 - z * z).powi(2)),
            3,
        )
        .unwrap();
        let u = VectorField::new(phi.dx(), phi.dy(), phi.dz(cheb).scale_re(1.0 / eps));
        let h = ws.helmholtz(&u).unwrap();
        assert!(h.projected.l2_norm(cheb) <= 1e-8 * u.l2_norm(cheb));
        // idempotence on a random field
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = random_vector(&mut rng, 3, cheb, RandomShape::default());
        let h1 = ws.helmholtz(&r).unwrap();
        let h2 = ws.helmholtz(&h1.projected).unwrap();
        assert!(rel(&h2.projected, &h1.projected, cheb) < 1e-9);
        assert!(rel(&h1.projected.add(&h1.grad_pi), &r, cheb) < 1e-15);
    }

    #[test]
    fn helmholtz_zero_mode_removes_vertical_component() {
        let grid = Grid::new(1, 10);
        let ws = ProjectionWorkspace::new(&grid, 0.5).unwrap();
        let mut u = VectorField::zeros(1, 10);
        for j in 0..10 {
            let z = grid.cheb.nodes[j];
            u.c[2].set(HorizontalMode::new(0, 0), j, C64::new(z * z, 0.0));
            u.c[0].set(HorizontalMode::new(0, 0), j, C64::new(z, 0.0));
        }
        let h = ws.helmholtz(&u).unwrap();
        assert_eq!(h.grad_pi.c[2], u.c[2]);
        assert_eq!(h.projected.c[0], u.c[0]);
        assert_eq!(h.projected.c[2].max_abs(), 0.0);
    }

    proptest! {
        #[test]
        fn projection_symbol_is_idempotent(n1 in -5.0f64..5.0, n2 in -5.0f64..5.0, x3 in -20.0f64..20.0, eps in 0.01f64..1.0) {
            let v = [n1, n2, x3 / eps];
            let nv: f64 = v.iter().map(|x| x * x).sum();
            prop_assume!(nv > 1e-6);
            let p = nalgebra::Matrix3::from_fn(|i, j| (if i == j { 1.0 } else { 0.0 }) - v[i] * v[j] / nv);
            prop_assert!((p * p - p).abs().max() < 1e-14);
        }
    }
}
