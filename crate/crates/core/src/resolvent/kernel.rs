//! Per-mode resolvent from the explicit kernels: the cylinder solve (I), the
//! boundary corrector (II) and the harmonic pressure (III).

use crate::fields::{Cheb, HorizontalMode};
use crate::projections::{exp_convolution, harmonic_gradient, ExpConv};
use crate::symbols::ModeSymbols;
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3, Vector4};

type Cols = [DVector<C64>; 3];

/// Tangential and normal boundary values of one mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeBoundaryData {
    pub g_plus: [C64; 2],
    pub g_minus: [C64; 2],
    pub phi_plus: C64,
    pub phi_minus: C64,
}

impl ModeBoundaryData {
    pub fn tangential(&self) -> Vector4<C64> {
        Vector4::new(self.g_plus[0], self.g_plus[1], self.g_minus[0], self.g_minus[1])
    }
}

/// Exponential integrals for `σ ∈ {s, a}` at the targets and at `x = ±1`.
#[derive(Clone, Debug)]
pub struct ModeConvolutions {
    pub es: ExpConv,
    pub ea: ExpConv,
    pub es_wall: ExpConv,
    pub ea_wall: ExpConv,
    /// Interpolation from the source nodes to the targets.
    pub interp: DMatrix<f64>,
}

impl ModeConvolutions {
    /// `s = (λ + k²)^{1/2}` and `a = εk`; for `k = 0` only `s` is meaningful.
    pub fn new(cheb: &Cheb, s: C64, a: f64, targets: &[f64]) -> Self {
        let walls = [1.0, -1.0];
        ModeConvolutions {
            es: exp_convolution(cheb, s, targets),
            ea: exp_convolution(cheb, C64::new(a, 0.0), targets),
            es_wall: exp_convolution(cheb, s, &walls),
            ea_wall: exp_convolution(cheb, C64::new(a, 0.0), &walls),
            interp: cheb.interp_matrix(targets),
        }
    }
}

/// Output of the per-mode kernel solve at the targets.
#[derive(Clone, Debug)]
pub struct KernelModeSolution {
    pub u: Cols,
    pub grad_p: Cols,
    pub v1: Cols,
    pub v2: Cols,
    pub grad_pi3: Cols,
    pub condition: f64,
}

fn scale(v: &DVector<C64>, c: C64) -> DVector<C64> {
    v * c
}

fn cplx(m: &DMatrix<f64>, v: &DVector<C64>) -> DVector<C64> {
    crate::projections::real_times(m, v)
}

/// Boundary corrector pieces of one mode `n ≠ 0`: problems (II) and (III).
#[derive(Clone, Copy, Debug)]
pub struct Corrector {
    pub sym: ModeSymbols,
    pub n: HorizontalMode,
}

/// Kernel solver for one mode `n ≠ 0`.
pub struct KernelMode<'a> {
    pub corr: Corrector,
    pub targets: &'a [f64],
    pub conv: &'a ModeConvolutions,
}

impl Corrector {
    pub fn new(lambda: C64, eps: f64, n: HorizontalMode) -> Result<Self> {
        Ok(Corrector {
            sym: ModeSymbols::new(lambda, eps, n)?,
            n,
        })
    }

    /// `c = λ + (1 − ε²)k²`, the factor by which `λ − Δ` acts on `∇_ε π₃`.
    pub fn c_factor(&self) -> C64 {
        let k2 = self.sym.k * self.sym.k;
        self.sym.lambda + (1.0 - self.sym.eps * self.sym.eps) * k2
    }

    /// Problem (III): `∇_ε π₃` at `xs` for Neumann data `φ±`.
    pub fn problem_iii(&self, phi_p: C64, phi_m: C64, xs: &[f64]) -> Cols {
        harmonic_gradient(self.sym.eps, self.n, phi_p, phi_m, xs).0
    }

    /// `L h` and its pressure gradient at `xs`.
    fn l_apply(&self, h: &Vector4<C64>, xs: &[f64]) -> (Cols, Cols) {
        let y = self.sym.y();
        let yp: Vector3<C64> = y * Vector3::new(h[0], h[1], C64::new(0.0, 0.0));
        let ym: Vector3<C64> = y * Vector3::new(h[2], h[3], C64::new(0.0, 0.0));
        let m = xs.len();
        let mut u: Cols = [DVector::zeros(m), DVector::zeros(m), DVector::zeros(m)];
        let mut g: Cols = u.clone();
        for (i, &x) in xs.iter().enumerate() {
            let kv: Vector3<C64> = -(self.sym.kernel(x - 1.0) * yp) - self.sym.kernel(x + 1.0) * ym;
            // interior one-sided limits at the walls
            let kp: Matrix3<C64> = self.sym.pressure_kernel(x - 1.0, -1.0);
            let km: Matrix3<C64> = self.sym.pressure_kernel(x + 1.0, 1.0);
            let gv: Vector3<C64> = -(kp * yp) - km * ym;
            for c in 0..3 {
                u[c][i] = kv[c];
                g[c][i] = gv[c];
            }
        }
        (u, g)
    }

    /// `W h = L h − ∇_ε π₃[e₃·γ L h]` and its pressure gradient at `xs`.
    pub fn w_apply(&self, h: &Vector4<C64>, xs: &[f64]) -> (Cols, Cols) {
        let (l, pl) = self.l_apply(h, xs);
        let (lw, _) = self.l_apply(h, &[1.0, -1.0]);
        let g3 = self.problem_iii(lw[2][0], lw[2][1], xs);
        let c = self.c_factor();
        (
            [&l[0] - &g3[0], &l[1] - &g3[1], &l[2] - &g3[2]],
            [&pl[0] + &g3[0] * c, &pl[1] + &g3[1] * c, &pl[2] + &g3[2] * c],
        )
    }

    /// `S_{λ,ε}`: tangential traces of `W` on the basis `(e₁⁺, e₂⁺, e₁⁻, e₂⁻)`.
    pub fn assemble_s(&self) -> Matrix4<C64> {
        let mut s = Matrix4::zeros();
        for j in 0..4 {
            let mut h = Vector4::zeros();
            h[j] = C64::new(1.0, 0.0);
            let (w, _) = self.w_apply(&h, &[1.0, -1.0]);
            s[(0, j)] = w[0][0];
            s[(1, j)] = w[1][0];
            s[(2, j)] = w[0][1];
            s[(3, j)] = w[1][1];
        }
        s
    }
}

impl<'a> KernelMode<'a> {
    pub fn new(lambda: C64, eps: f64, n: HorizontalMode, targets: &'a [f64], conv: &'a ModeConvolutions) -> Result<Self> {
        Ok(KernelMode {
            corr: Corrector::new(lambda, eps, n)?,
            targets,
            conv,
        })
    }

    fn d(&self) -> C64 {
        let sym = &self.corr.sym;
        sym.s * sym.s - sym.a * sym.a
    }
    /// Problem (I) on the given integrals: returns `(v₁, ∇_ε π₁)`; `f3_t` is
    /// `f₃` at the same points.
    fn problem_i_on(&self, es: &ExpConv, ea: &ExpConv, f: &Cols, f3_t: &DVector<C64>) -> (Cols, Cols) {
        let ModeSymbols { s, a, eps, k, n, .. } = self.corr.sym;
        let i = C64::new(0.0, 1.0);
        let d = self.d();
        let nf = &f[0] * C64::new(n[0], 0.0) + &f[1] * C64::new(n[1], 0.0);
        let es_nf = &es.even * &nf;
        let ea_nf = &ea.even * &nf;
        let es_f3 = &es.even * &f[2];
        let ea_f3 = &ea.even * &f[2];
        let os_oa_f3 = &es.odd * &f[2] - &ea.odd * &f[2];
        let os_oa_nf = &es.odd * &nf - &ea.odd * &nf;
        // η-operator: ε/(2kD) E_a − ε²/(2sD) E_s
        let c_a = eps / (2.0 * k) / d;
        let c_s = -(eps * eps) / (2.0 * s * d);
        let eta_nf = &ea_nf * c_a + &es_nf * c_s;
        let eta_f3 = &ea_f3 * c_a + &es_f3 * c_s;
        let off = i * eps / d * 0.5;
        let v1 = [
            scale(&(&es.even * &f[0]), 1.0 / (2.0 * s)) - &eta_nf * C64::from(n[0]) + &os_oa_f3 * (off * n[0]),
            scale(&(&es.even * &f[1]), 1.0 / (2.0 * s)) - &eta_nf * C64::from(n[1]) + &os_oa_f3 * (off * n[1]),
            &os_oa_nf * off + &eta_f3 * C64::from(k * k),
        ];
        let oa_f3 = &ea.odd * &f[2];
        let h = &ea_nf * C64::new(eps / (2.0 * k), 0.0) + &oa_f3 * (i * eps * 0.5);
        let gp = [
            &h * C64::from(n[0]),
            &h * C64::from(n[1]),
            f3_t + &ea.odd * &nf * (i * eps * 0.5) - &ea_f3 * C64::from(a * 0.5),
        ];
        (v1, gp)
    }

    /// Problem (I) at the targets plus the wall values of `v₁`.
    pub fn problem_i(&self, f: &Cols) -> (Cols, Cols, Cols) {
        let f3_t = cplx(&self.conv.interp, &f[2]);
        let (v1, gp1) = self.problem_i_on(&self.conv.es, &self.conv.ea, f, &f3_t);
        let f3_w = DVector::from_vec(vec![f[2][0], f[2][f[2].len() - 1]]);
        let (v1w, _) = self.problem_i_on(&self.conv.es_wall, &self.conv.ea_wall, f, &f3_w);
        (v1, gp1, v1w)
    }

    /// Problem (II): `v₂ = W S⁻¹ g` and its pressure gradient at the targets.
    pub fn problem_ii(&self, s_inv: &Matrix4<C64>, g: &Vector4<C64>) -> (Cols, Cols) {
        let h = s_inv * g;
        self.corr.w_apply(&h, self.targets)
    }

    /// Full resolvent `u = v₁ − ∇_ε π₃ − v₂` with `∇_ε π = ∇_ε π₁ + c∇_ε π₃ − ∇_ε π_W`.
    pub fn solve(&self, f: &Cols, cond_max: f64) -> Result<KernelModeSolution> {
        let (v1, gp1, v1w) = self.problem_i(f);
        let g3 = self.corr.problem_iii(v1w[2][0], v1w[2][1], self.targets);
        let g3w = self.corr.problem_iii(v1w[2][0], v1w[2][1], &[1.0, -1.0]);
        let g = Vector4::new(
            v1w[0][0] - g3w[0][0],
            v1w[1][0] - g3w[1][0],
            v1w[0][1] - g3w[0][1],
            v1w[1][1] - g3w[1][1],
        );
        let s = self.corr.assemble_s();
        let (s_inv, condition) = invert_s(&s, self.corr.n, cond_max)?;
        let (v2, gp2) = self.problem_ii(&s_inv, &g);
        let c = self.corr.c_factor();
        let u = [0, 1, 2].map(|j| &v1[j] - &g3[j] - &v2[j]);
        let grad_p = [0, 1, 2].map(|j| &gp1[j] + &g3[j] * c - &gp2[j]);
        Ok(KernelModeSolution {
            u,
            grad_p,
            v1,
            v2,
            grad_pi3: g3,
            condition,
        })
    }
}

/// Direct 4×4 inversion with a 1-norm condition estimate.
pub fn invert_s(s: &Matrix4<C64>, n: HorizontalMode, cond_max: f64) -> Result<(Matrix4<C64>, f64)> {
    let inv = s.try_inverse().ok_or(Error::ResolventRadius {
        n1: n.n1,
        n2: n.n2,
        cond: f64::INFINITY,
    })?;
    let norm1 = |m: &Matrix4<C64>| (0..4).map(|j| (0..4).map(|i| m[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max);
    let cond = norm1(s) * norm1(&inv);
    if !cond.is_finite() || cond > cond_max {
        return Err(Error::ResolventRadius { n1: n.n1, n2: n.n2, cond });
    }
    Ok((inv, cond))
}

/// Zero mode: `(λ − ∂²)u_H = f_H` with Dirichlet walls, `u₃ = 0`, `∇_ε π = (0, 0, f₃)`.
pub fn zero_mode_solve(lambda: C64, f: &Cols, conv: &ModeConvolutions, targets: &[f64]) -> Cols {
    let s = lambda.sqrt();
    let m = targets.len();
    let mut out: Cols = [DVector::zeros(m), DVector::zeros(m), DVector::zeros(m)];
    let e2 = (-2.0 * s).exp();
    for c in 0..2 {
        let v = &conv.es.even * &f[c] / (2.0 * s);
        let w = &conv.es_wall.even * &f[c] / (2.0 * s);
        // α e^{−s(1−x)} + β e^{−s(1+x)} cancels the wall values
        let det = C64::new(1.0, 0.0) - e2 * e2;
        let alpha = (-w[0] + e2 * w[1]) / det;
        let beta = (-w[1] + e2 * w[0]) / det;
        for i in 0..m {
            let x = targets[i];
            out[c][i] = v[i] + alpha * (-s * (1.0 - x)).exp() + beta * (-s * (1.0 + x)).exp();
        }
    }
    out
}
