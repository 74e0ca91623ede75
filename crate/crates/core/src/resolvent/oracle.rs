//! Per-mode collocation discretization of the anisotropic Stokes operator.
//!
//! For `n ≠ 0` the velocity is split into the components along `n̂`, along
//! `t = (−n̂₂, n̂₁)` and vertical. Eliminating the pressure and the component
//! along `n̂` through `div_ε u = 0` leaves the clamped fourth-order problem
//!
//! ```text
//! (λ − L)(D² − a²) u₃ = −a² f₃ − i a D f_∥,   u₃ = Du₃ = 0 at ±1,   L = D² − k²,
//! ```
//!
//! discretized on a basis that satisfies both boundary conditions. The
//! component along `t` is a Dirichlet Helmholtz problem. Each block is a
//! pencil `λB − C` and the discrete Stokes operator is `A = −B⁻¹C`.

use crate::fields::{Cheb, HorizontalMode};
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};

/// One pencil `λB − C` acting on a block of state coordinates.
#[derive(Clone, Debug)]
pub struct Pencil {
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl Pencil {
    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// `λB − C` as a complex matrix.
    pub fn shifted(&self, lambda: C64) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| lambda * self.b[(i, j)] - self.c[(i, j)])
    }

    /// The operator `A = −B⁻¹C`.
    pub fn operator(&self) -> Result<DMatrix<f64>> {
        let lu = self.b.clone().lu();
        let x = lu.solve(&self.c).ok_or(Error::Spectrum { k2: -1 })?;
        Ok(-x)
    }
}

/// State coordinates of a velocity in the discrete solenoidal space of one mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeState {
    pub blocks: Vec<DVector<C64>>,
}

impl ModeState {
    pub fn scale(&self, c: C64) -> ModeState {
        ModeState {
            blocks: self.blocks.iter().map(|b| b * c).collect(),
        }
    }
    pub fn axpy(&mut self, c: C64, o: &ModeState) {
        for (a, b) in self.blocks.iter_mut().zip(&o.blocks) {
            *a += b * c;
        }
    }
    pub fn zeros_like(&self) -> ModeState {
        self.scale(C64::new(0.0, 0.0))
    }
}

/// Velocity, pressure gradient and pressure of one mode at the nodes.
#[derive(Clone, Debug)]
pub struct ModeSolution {
    pub u: [DVector<C64>; 3],
    pub grad_p: [DVector<C64>; 3],
    pub p: DVector<C64>,
}

/// Discrete Stokes operator of one horizontal mode.
#[derive(Clone, Debug)]
pub struct ModeOperator {
    pub n: HorizontalMode,
    pub eps: f64,
    pub nz: usize,
    pub blocks: Vec<Pencil>,
    k: f64,
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
    cumint: DMatrix<f64>,
    /// Clamped basis: interior values of nodes `2..N−3` to all node values.
    z: DMatrix<f64>,
    /// Rows `2..N−3` of `D`.
    d_rows: DMatrix<f64>,
}

fn rows(m: &DMatrix<f64>, lo: usize, hi: usize) -> DMatrix<f64> {
    m.rows(lo, hi - lo).into_owned()
}

fn interior(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    m.view((1, 1), (n - 2, n - 2)).into_owned()
}

fn real_mul(m: &DMatrix<f64>, v: &DVector<C64>) -> DVector<C64> {
    crate::projections::real_times(m, v)
}

fn lu_solve(m: DMatrix<C64>, rhs: &DVector<C64>, k2: i64) -> Result<DVector<C64>> {
    let lu = m.lu();
    let x = lu.solve(rhs).ok_or(Error::Spectrum { k2 })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Spectrum { k2 });
    }
    Ok(x)
}

impl ModeOperator {
    pub fn new(cheb: &Cheb, n: HorizontalMode, eps: f64) -> Result<Self> {
        let nz = cheb.n;
        if nz < 6 {
            return Err(Error::Parameter(format!("the collocation oracle needs N_z >= 6, got {nz}")));
        }
        if !(eps > 0.0) {
            return Err(Error::Parameter(format!("epsilon must be positive, got {eps}")));
        }
        let k = n.norm();
        let d1 = cheb.d1.clone();
        let d2 = cheb.d2.clone();
        let ident = DMatrix::<f64>::identity(nz, nz);
        let lap = &d2 - &ident * (k * k);
        let l_int = interior(&lap);
        let dir_b = DMatrix::<f64>::identity(nz - 2, nz - 2);
        let m = nz - 4;
        let mut z = DMatrix::<f64>::zeros(nz, m);
        // two clamped rows fix the values at nodes 1 and N−2
        let sys = nalgebra::Matrix2::new(d1[(0, 1)], d1[(0, nz - 2)], d1[(nz - 1, 1)], d1[(nz - 1, nz - 2)]);
        let sys_inv = sys.try_inverse().ok_or(Error::Spectrum { k2: n.k2() })?;
        for jj in 0..m {
            let j = jj + 2;
            z[(j, jj)] = 1.0;
            let r = nalgebra::Vector2::new(-d1[(0, j)], -d1[(nz - 1, j)]);
            let v = sys_inv * r;
            z[(1, jj)] = v[0];
            z[(nz - 2, jj)] = v[1];
        }
        let blocks = if n.is_zero() {
            vec![
                Pencil {
                    b: dir_b.clone(),
                    c: l_int.clone(),
                },
                Pencil { b: dir_b, c: l_int },
            ]
        } else {
            let a = eps * k;
            let bf = (&d2 - &ident * (a * a)) * &z;
            let cf = &lap * &bf;
            vec![
                Pencil {
                    b: rows(&bf, 2, nz - 2),
                    c: rows(&cf, 2, nz - 2),
                },
                Pencil { b: dir_b, c: l_int },
            ]
        };
        Ok(ModeOperator {
            n,
            eps,
            nz,
            blocks,
            k,
            d_rows: rows(&d1, 2, nz - 2),
            d1,
            d2,
            cumint: cheb.cumint.clone(),
            z,
        })
    }

    fn frame(&self) -> ([f64; 2], [f64; 2]) {
        let [n1, n2] = self.n.as_f64();
        let (h1, h2) = (n1 / self.k, n2 / self.k);
        ([h1, h2], [-h2, h1])
    }

    fn interior_of(&self, v: &DVector<C64>) -> DVector<C64> {
        v.rows(1, self.nz - 2).into_owned()
    }

    fn pad(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(self.nz);
        out.rows_mut(1, self.nz - 2).copy_from(v);
        out
    }

    /// Right-hand sides of the pencils for the forcing `f` (node values).
    pub fn rhs(&self, f: &[DVector<C64>; 3]) -> Vec<DVector<C64>> {
        if self.n.is_zero() {
            return vec![self.interior_of(&f[0]), self.interior_of(&f[1])];
        }
        let (nh, t) = self.frame();
        let a = self.eps * self.k;
        let fpar = &f[0] * C64::new(nh[0], 0.0) + &f[1] * C64::new(nh[1], 0.0);
        let fperp = &f[0] * C64::new(t[0], 0.0) + &f[1] * C64::new(t[1], 0.0);
        let g = f[2].rows(2, self.nz - 4) * C64::new(-a * a, 0.0) + real_mul(&self.d_rows, &fpar) * C64::new(0.0, -a);
        vec![g, self.interior_of(&fperp)]
    }

    /// Discrete Helmholtz projection of `f` in state coordinates, `B⁻¹ G f`.
    pub fn project(&self, f: &[DVector<C64>; 3]) -> Result<ModeState> {
        let rhs = self.rhs(f);
        let mut blocks = Vec::with_capacity(rhs.len());
        for (p, r) in self.blocks.iter().zip(&rhs) {
            let bc = p.b.map(|v| C64::new(v, 0.0));
            blocks.push(lu_solve(bc, r, self.n.k2())?);
        }
        Ok(ModeState { blocks })
    }

    /// `(λ + A)⁻¹ s` in state coordinates.
    pub fn resolvent_state(&self, lambda: C64, s: &ModeState) -> Result<ModeState> {
        let mut blocks = Vec::with_capacity(s.blocks.len());
        for (p, x) in self.blocks.iter().zip(&s.blocks) {
            let rhs = real_mul(&p.b, x);
            blocks.push(lu_solve(p.shifted(lambda), &rhs, self.n.k2())?);
        }
        Ok(ModeState { blocks })
    }

    /// Velocity at the nodes of a state.
    pub fn velocity(&self, s: &ModeState) -> [DVector<C64>; 3] {
        if self.n.is_zero() {
            return [self.pad(&s.blocks[0]), self.pad(&s.blocks[1]), DVector::zeros(self.nz)];
        }
        let (nh, t) = self.frame();
        let a = self.eps * self.k;
        let u3 = real_mul(&self.z, &s.blocks[0]);
        let upar = real_mul(&self.d1, &u3) * C64::new(0.0, 1.0 / a);
        let uperp = self.pad(&s.blocks[1]);
        [
            &upar * C64::new(nh[0], 0.0) + &uperp * C64::new(t[0], 0.0),
            &upar * C64::new(nh[1], 0.0) + &uperp * C64::new(t[1], 0.0),
            u3,
        ]
    }

    /// Solves `(λ − Δ)u + ∇_ε π = f`, `div_ε u = 0`, `u(±1) = 0`.
    pub fn resolvent(&self, lambda: C64, f: &[DVector<C64>; 3]) -> Result<ModeSolution> {
        let rhs = self.rhs(f);
        let mut blocks = Vec::with_capacity(rhs.len());
        for (p, r) in self.blocks.iter().zip(&rhs) {
            blocks.push(lu_solve(p.shifted(lambda), r, self.n.k2())?);
        }
        let s = ModeState { blocks };
        let u = self.velocity(&s);
        let (p, grad_p) = self.pressure(lambda, f, &u);
        Ok(ModeSolution { u, grad_p, p })
    }

    /// Pressure recovered from the momentum equation along `n̂`.
    pub fn pressure(&self, lambda: C64, f: &[DVector<C64>; 3], u: &[DVector<C64>; 3]) -> (DVector<C64>, [DVector<C64>; 3]) {
        let nz = self.nz;
        if self.n.is_zero() {
            let p = real_mul(&self.cumint, &f[2]) * C64::new(self.eps, 0.0);
            return (p, [DVector::zeros(nz), DVector::zeros(nz), f[2].clone()]);
        }
        let (nh, _) = self.frame();
        let k = self.k;
        let fpar = &f[0] * C64::new(nh[0], 0.0) + &f[1] * C64::new(nh[1], 0.0);
        let upar = &u[0] * C64::new(nh[0], 0.0) + &u[1] * C64::new(nh[1], 0.0);
        let lu = real_mul(&self.d2, &upar) - &upar * C64::new(k * k, 0.0);
        let p = (fpar - &upar * lambda + lu) / C64::new(0.0, k);
        let [n1, n2] = self.n.as_f64();
        let i = C64::new(0.0, 1.0);
        let dp = real_mul(&self.d1, &p) * C64::new(1.0 / self.eps, 0.0);
        (p.clone(), [&p * (i * n1), &p * (i * n2), dp])
    }

    /// Dense operator matrices `A = −B⁻¹C` per block.
    pub fn dense_blocks(&self) -> Result<Vec<DMatrix<f64>>> {
        self.blocks.iter().map(|p| p.operator()).collect()
    }
}
