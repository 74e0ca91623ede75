//! Spectral fields on T² × (−1, 1): storage, transforms, differential
//! operators and discrete mixed norms.

pub mod cheb;
pub mod norms;
pub mod random;
pub mod transform;

pub use cheb::Cheb;
pub use norms::{e0_norm, e1_norm, mixed_norm, proxy_trace_norm, NormSpec};
pub use transform::{inverse, transform, Fft2, PhysicalField};

use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Horizontal Fourier wavenumber pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HorizontalMode {
    pub n1: i64,
    pub n2: i64,
}

impl HorizontalMode {
    pub fn new(n1: i64, n2: i64) -> Self {
        HorizontalMode { n1, n2 }
    }
    pub fn is_zero(&self) -> bool {
        self.n1 == 0 && self.n2 == 0
    }
    /// `|n|²` as an integer key.
    pub fn k2(&self) -> i64 {
        self.n1 * self.n1 + self.n2 * self.n2
    }
    pub fn norm(&self) -> f64 {
        (self.k2() as f64).sqrt()
    }
    pub fn as_f64(&self) -> [f64; 2] {
        [self.n1 as f64, self.n2 as f64]
    }
    pub fn neg(&self) -> Self {
        HorizontalMode::new(-self.n1, -self.n2)
    }
}

/// Horizontal truncation plus vertical collocation data.
#[derive(Clone, Debug)]
pub struct Grid {
    pub nh: usize,
    pub nz: usize,
    pub cheb: Cheb,
}

impl Grid {
    pub fn new(nh: usize, nz: usize) -> Self {
        Grid {
            nh,
            nz,
            cheb: Cheb::new(nz),
        }
    }
    pub fn side(&self) -> usize {
        2 * self.nh + 1
    }
    pub fn n_modes(&self) -> usize {
        self.side() * self.side()
    }
    pub fn mode(&self, idx: usize) -> HorizontalMode {
        mode_of(self.nh, idx)
    }
}

fn mode_of(nh: usize, idx: usize) -> HorizontalMode {
    let s = 2 * nh + 1;
    HorizontalMode::new((idx / s) as i64 - nh as i64, (idx % s) as i64 - nh as i64)
}

/// Complex coefficients indexed by horizontal mode and vertical node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    pub nh: usize,
    pub nz: usize,
    pub data: Vec<C64>,
}

impl SpectralField {
    pub fn zeros(nh: usize, nz: usize) -> Self {
        let s = 2 * nh + 1;
        SpectralField {
            nh,
            nz,
            data: vec![ZERO; s * s * nz],
        }
    }

    pub fn side(&self) -> usize {
        2 * self.nh + 1
    }

    pub fn n_modes(&self) -> usize {
        self.side() * self.side()
    }

    /// Iterates `(storage index, mode)`.
    pub fn modes(&self) -> impl Iterator<Item = (usize, HorizontalMode)> {
        let nh = self.nh;
        (0..self.n_modes()).map(move |i| (i, mode_of(nh, i)))
    }

    pub fn index_of(&self, n: HorizontalMode) -> Option<usize> {
        let nh = self.nh as i64;
        if n.n1.abs() > nh || n.n2.abs() > nh {
            return None;
        }
        Some(((n.n1 + nh) * (2 * nh + 1) + (n.n2 + nh)) as usize)
    }

    pub fn column(&self, idx: usize) -> &[C64] {
        &self.data[idx * self.nz..(idx + 1) * self.nz]
    }

    pub fn column_mut(&mut self, idx: usize) -> &mut [C64] {
        let nz = self.nz;
        &mut self.data[idx * nz..(idx + 1) * nz]
    }

    pub fn get(&self, n: HorizontalMode, j: usize) -> C64 {
        self.index_of(n).map(|i| self.data[i * self.nz + j]).unwrap_or(ZERO)
    }

    pub fn set(&mut self, n: HorizontalMode, j: usize, v: C64) {
        let i = self.index_of(n).expect("mode within truncation");
        self.data[i * self.nz + j] = v;
    }

    fn check_same(&self, other: &SpectralField) {
        assert_eq!((self.nh, self.nz), (other.nh, other.nz), "field shapes differ");
    }

    pub fn scale(&self, c: C64) -> SpectralField {
        SpectralField {
            nh: self.nh,
            nz: self.nz,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn scale_re(&self, c: f64) -> SpectralField {
        self.scale(C64::new(c, 0.0))
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: C64, other: &SpectralField) {
        self.check_same(other);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `L²(Ω)` norm via Parseval and Clenshaw–Curtis weights.
    pub fn l2_norm(&self, cheb: &Cheb) -> f64 {
        let area = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
        let mut s = 0.0;
        for col in self.data.chunks(self.nz) {
            for (v, w) in col.iter().zip(&cheb.weights) {
                s += w * v.norm_sqr();
            }
        }
        (area * s).sqrt()
    }

    /// `∂/∂x₁` (spectral).
    pub fn dx(&self) -> SpectralField {
        self.mode_multiply(|n| I * n.n1 as f64)
    }

    /// `∂/∂x₂` (spectral).
    pub fn dy(&self) -> SpectralField {
        self.mode_multiply(|n| I * n.n2 as f64)
    }

    /// Horizontal Laplacian.
    pub fn lap_h(&self) -> SpectralField {
        self.mode_multiply(|n| C64::new(-(n.k2() as f64), 0.0))
    }

    /// Multiplies every column by a mode-dependent scalar.
    pub fn mode_multiply(&self, f: impl Fn(HorizontalMode) -> C64) -> SpectralField {
        let mut out = self.clone();
        let nz = self.nz;
        for (idx, n) in self.modes() {
            let c = f(n);
            for v in &mut out.data[idx * nz..(idx + 1) * nz] {
                *v *= c;
            }
        }
        out
    }

    /// Applies a real `nz × nz` matrix to every column.
    pub fn apply_vertical(&self, m: &nalgebra::DMatrix<f64>) -> SpectralField {
        let nz = self.nz;
        assert_eq!(m.ncols(), nz);
        let rows = m.nrows();
        let mut out = SpectralField {
            nh: self.nh,
            nz: rows,
            data: vec![ZERO; self.n_modes() * rows],
        };
        for (col, dst) in self.data.chunks(nz).zip(out.data.chunks_mut(rows)) {
            for i in 0..rows {
                let mut s = ZERO;
                for j in 0..nz {
                    s += col[j] * m[(i, j)];
                }
                dst[i] = s;
            }
        }
        out
    }

    /// `∂/∂z` by collocation.
    pub fn dz(&self, cheb: &Cheb) -> SpectralField {
        self.apply_vertical(&cheb.d1)
    }

    /// `∂²/∂z²` by collocation.
    pub fn dzz(&self, cheb: &Cheb) -> SpectralField {
        self.apply_vertical(&cheb.d2)
    }

    /// Full Laplacian.
    pub fn laplacian(&self, cheb: &Cheb) -> SpectralField {
        &self.lap_h() + &self.dzz(cheb)
    }

    /// Largest `|c(−n) − conj c(n)|`; zero for real-valued fields.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (idx, n) in self.modes() {
            let jdx = self.index_of(n.neg()).expect("symmetric truncation");
            for j in 0..self.nz {
                d = d.max((self.data[jdx * self.nz + j] - self.data[idx * self.nz + j].conj()).norm());
            }
        }
        d
    }

    /// Replaces the field by its real part in physical space.
    pub fn symmetrize(&mut self) {
        let src = self.clone();
        for (idx, n) in src.modes() {
            let jdx = src.index_of(n.neg()).unwrap();
            for j in 0..self.nz {
                self.data[idx * self.nz + j] =
                    0.5 * (src.data[idx * self.nz + j] + src.data[jdx * self.nz + j].conj());
            }
        }
    }

    /// Zero-pads (or truncates) the horizontal modes to `nh`.
    pub fn resize_modes(&self, nh: usize) -> SpectralField {
        let mut out = SpectralField::zeros(nh, self.nz);
        let nz = self.nz;
        let modes: Vec<_> = out.modes().collect();
        for (idx, n) in modes {
            if let Some(src) = self.index_of(n) {
                out.data[idx * nz..(idx + 1) * nz].copy_from_slice(&self.data[src * nz..(src + 1) * nz]);
            }
        }
        out
    }

    /// Interpolates every column onto a different Chebyshev grid.
    pub fn resample_z(&self, from: &Cheb, to: &Cheb) -> SpectralField {
        self.apply_vertical(&from.interp_matrix(&to.nodes))
    }

    /// Column of the zero mode.
    pub fn zero_mode(&self) -> &[C64] {
        self.column(self.index_of(HorizontalMode::new(0, 0)).unwrap())
    }

    /// Removes the horizontal average.
    pub fn without_zero_mode(&self) -> SpectralField {
        let mut out = self.clone();
        let i0 = self.index_of(HorizontalMode::new(0, 0)).unwrap();
        out.column_mut(i0).iter_mut().for_each(|v| *v = ZERO);
        out
    }
}

impl<'a> Add for &'a SpectralField {
    type Output = SpectralField;
    fn add(self, o: &SpectralField) -> SpectralField {
        self.check_same(o);
        SpectralField {
            nh: self.nh,
            nz: self.nz,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub for &'a SpectralField {
    type Output = SpectralField;
    fn sub(self, o: &SpectralField) -> SpectralField {
        self.check_same(o);
        SpectralField {
            nh: self.nh,
            nz: self.nz,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<'a> Mul<f64> for &'a SpectralField {
    type Output = SpectralField;
    fn mul(self, c: f64) -> SpectralField {
        self.scale_re(c)
    }
}

/// Three-component field `(u1, u2, u3)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub c: [SpectralField; 3],
}

impl VectorField {
    pub fn zeros(nh: usize, nz: usize) -> Self {
        VectorField {
            c: [
                SpectralField::zeros(nh, nz),
                SpectralField::zeros(nh, nz),
                SpectralField::zeros(nh, nz),
            ],
        }
    }
    pub fn new(u1: SpectralField, u2: SpectralField, u3: SpectralField) -> Self {
        VectorField { c: [u1, u2, u3] }
    }
    pub fn nh(&self) -> usize {
        self.c[0].nh
    }
    pub fn nz(&self) -> usize {
        self.c[0].nz
    }
    pub fn map(&self, f: impl Fn(&SpectralField) -> SpectralField) -> VectorField {
        VectorField {
            c: [f(&self.c[0]), f(&self.c[1]), f(&self.c[2])],
        }
    }
    pub fn zip(&self, o: &VectorField, f: impl Fn(&SpectralField, &SpectralField) -> SpectralField) -> VectorField {
        VectorField {
            c: [f(&self.c[0], &o.c[0]), f(&self.c[1], &o.c[1]), f(&self.c[2], &o.c[2])],
        }
    }
    pub fn add(&self, o: &VectorField) -> VectorField {
        self.zip(o, |a, b| a + b)
    }
    pub fn sub(&self, o: &VectorField) -> VectorField {
        self.zip(o, |a, b| a - b)
    }
    pub fn scale(&self, s: f64) -> VectorField {
        self.map(|a| a * s)
    }
    pub fn axpy(&mut self, s: f64, o: &VectorField) {
        for k in 0..3 {
            self.c[k].axpy(C64::new(s, 0.0), &o.c[k]);
        }
    }
    pub fn l2_norm(&self, cheb: &Cheb) -> f64 {
        self.c.iter().map(|f| f.l2_norm(cheb).powi(2)).sum::<f64>().sqrt()
    }
    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|f| f.max_abs()).fold(0.0, f64::max)
    }
    /// Values at node `j` of mode column `idx`.
    pub fn at(&self, idx: usize, j: usize) -> [C64; 3] {
        let nz = self.nz();
        [
            self.c[0].data[idx * nz + j],
            self.c[1].data[idx * nz + j],
            self.c[2].data[idx * nz + j],
        ]
    }
    pub fn without_zero_mode(&self) -> VectorField {
        self.map(|f| f.without_zero_mode())
    }
}

/// Velocity `(v, w)` with a mean-free pressure and the scaling parameter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VelocityPressureState {
    pub vh: [SpectralField; 2],
    pub w: SpectralField,
    pub pressure: SpectralField,
    pub epsilon: f64,
    pub dirichlet: bool,
}

impl VelocityPressureState {
    /// Vertical average of the zero-mode pressure column.
    pub fn pressure_mean(&self, cheb: &Cheb) -> C64 {
        let col = self.pressure.zero_mode();
        col.iter().zip(&cheb.weights).map(|(v, w)| v * *w).sum::<C64>() * 0.5
    }

    /// Largest velocity value on the walls.
    pub fn wall_defect(&self) -> f64 {
        let nz = self.w.nz;
        let mut d: f64 = 0.0;
        for f in self.vh.iter().chain(std::iter::once(&self.w)) {
            for col in f.data.chunks(nz) {
                d = d.max(col[0].norm()).max(col[nz - 1].norm());
            }
        }
        d
    }

    /// Checks the zero-mean pressure and (if flagged) the no-slip condition.
    pub fn validate(&self, cheb: &Cheb, tol: f64) -> Result<()> {
        let m = self.pressure_mean(cheb).norm();
        if m > tol {
            return Err(Error::Precondition {
                what: "pressure mean".into(),
                defect: m,
            });
        }
        if self.dirichlet {
            let d = self.wall_defect();
            if d > tol {
                return Err(Error::Precondition {
                    what: "no-slip walls".into(),
                    defect: d,
                });
            }
        }
        Ok(())
    }
}

/// Vertical average `½ ∫ f dζ`, returned constant in z.
pub fn vertical_average(f: &SpectralField, cheb: &Cheb) -> SpectralField {
    let mut out = f.clone();
    let nz = f.nz;
    for col in out.data.chunks_mut(nz) {
        let avg: C64 = col.iter().zip(&cheb.weights).map(|(v, w)| v * *w).sum::<C64>() * 0.5;
        col.iter_mut().for_each(|v| *v = avg);
    }
    out
}

/// Removes the pressure mean (vertical average of the zero mode).
pub fn remove_mean(p: &mut SpectralField, cheb: &Cheb) {
    let i0 = p.index_of(HorizontalMode::new(0, 0)).unwrap();
    let col = p.column_mut(i0);
    let avg: C64 = col.iter().zip(&cheb.weights).map(|(v, w)| v * *w).sum::<C64>() * 0.5;
    col.iter_mut().for_each(|v| *v -= avg);
}

/// Horizontal divergence `∂1 v1 + ∂2 v2`.
pub fn div_h(v1: &SpectralField, v2: &SpectralField) -> SpectralField {
    &v1.dx() + &v2.dy()
}

/// `div_ε u = ∂1 u1 + ∂2 u2 + ∂3 u3 / ε`.
pub fn divergence_eps(u: &VectorField, eps: f64, cheb: &Cheb) -> Result<SpectralField> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("epsilon must be positive, got {eps}")));
    }
    Ok(&div_h(&u.c[0], &u.c[1]) + &u.c[2].dz(cheb).scale_re(1.0 / eps))
}

/// Output of [`reconstruct_w`].
#[derive(Clone, Debug)]
pub struct WReconstruction {
    pub w: SpectralField,
    /// Largest `|w(·, 1)|`; nonzero when the vertical mean of `v` is not solenoidal.
    pub top_defect: f64,
}

/// `w = −∫_{−1}^{z} div_H v dζ`.
pub fn reconstruct_w(v1: &SpectralField, v2: &SpectralField, cheb: &Cheb) -> WReconstruction {
    let w = div_h(v1, v2).apply_vertical(&cheb.cumint).scale_re(-1.0);
    let top_defect = w.data.chunks(w.nz).map(|c| c[0].norm()).fold(0.0, f64::max);
    WReconstruction { w, top_defect }
}

/// Like [`reconstruct_w`] but fails when the top value exceeds `tol`.
pub fn reconstruct_w_checked(v1: &SpectralField, v2: &SpectralField, cheb: &Cheb, tol: f64) -> Result<SpectralField> {
    let r = reconstruct_w(v1, v2, cheb);
    if r.top_defect > tol {
        return Err(Error::Precondition {
            what: "vertical mean of v is not horizontally solenoidal".into(),
            defect: r.top_defect,
        });
    }
    Ok(r.w)
}

/// Dealiased products on a padded grid.
pub struct Dealias {
    pub nh: usize,
    pub fft: Fft2,
}

impl Dealias {
    pub fn new(nh: usize) -> Self {
        Dealias {
            nh,
            fft: Fft2::new(Fft2::dealias_side(nh)),
        }
    }

    pub fn physical(&self, f: &SpectralField) -> PhysicalField {
        self.fft.to_physical(f).expect("padded grid fits")
    }

    pub fn spectral(&self, p: &PhysicalField) -> SpectralField {
        self.fft.to_spectral(p, self.nh).expect("padded grid fits")
    }

    /// Truncated product `P_N(a b)`.
    pub fn product(&self, a: &SpectralField, b: &SpectralField) -> SpectralField {
        self.spectral(&self.physical(a).mul(&self.physical(b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_field_has_only_zero_mode() {
        let nh = 3;
        let cheb = Cheb::new(5);
        let p = PhysicalField::from_fn(2 * nh + 1, &cheb.nodes, |_, _, _| 1.0);
        let f = transform(&p, nh).unwrap();
        for (idx, n) in f.modes() {
            for j in 0..5 {
                let v = f.data[idx * 5 + j];
                if n.is_zero() {
                    assert!((v - C64::new(1.0, 0.0)).norm() < 1e-14);
                } else {
                    assert!(v.norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn sine_has_expected_coefficients() {
        let nh = 2;
        let cheb = Cheb::new(3);
        let p = PhysicalField::from_fn(5, &cheb.nodes, |x, _, _| x.sin());
        let f = transform(&p, nh).unwrap();
        // direct DFT of one row: c_{±1} = (1/M) Σ sin(x_i) e^{∓i x_i}
        let m = 5;
        let mut c1 = C64::new(0.0, 0.0);
        for i in 0..m {
            let x = 2.0 * PI * i as f64 / m as f64;
            c1 += x.sin() * C64::new(0.0, -x).exp();
        }
        c1 /= m as f64;
        assert!((f.get(HorizontalMode::new(1, 0), 0) - c1).norm() < 1e-14);
        assert!((c1 - C64::new(0.0, -0.5)).norm() < 1e-14);
        assert!((f.get(HorizontalMode::new(-1, 0), 1) - C64::new(0.0, 0.5)).norm() < 1e-14);
        assert!(f.get(HorizontalMode::new(0, 1), 0).norm() < 1e-14);
    }

    #[test]
    fn size_mismatch_is_reported() {
        let p = PhysicalField::zeros(6, 3);
        assert!(matches!(transform(&p, 2), Err(Error::Dimension { .. })));
    }

    #[test]
    fn vertical_average_of_quadratic() {
        let cheb = Cheb::new(7);
        let mut f = SpectralField::zeros(1, 7);
        for j in 0..7 {
            f.set(HorizontalMode::new(0, 0), j, C64::new(cheb.nodes[j].powi(2), 0.0));
        }
        let a = vertical_average(&f, &cheb);
        assert!((a.get(HorizontalMode::new(0, 0), 3) - C64::new(1.0 / 3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn reconstruct_w_symbolic_case() {
        // v = (z sin x, 0) gives w = −cos x (z² − 1)/2
        let nh = 2;
        let cheb = Cheb::new(9);
        let v1 = transform(&PhysicalField::from_fn(5, &cheb.nodes, |x, _, z| z * x.sin()), nh).unwrap();
        let v2 = SpectralField::zeros(nh, 9);
        let r = reconstruct_w(&v1, &v2, &cheb);
        let expect = transform(
            &PhysicalField::from_fn(5, &cheb.nodes, |x, _, z| -x.cos() * (z * z - 1.0) / 2.0),
            nh,
        )
        .unwrap();
        assert!((&r.w - &expect).max_abs() < 1e-13);
        assert!(r.top_defect < 1e-13);
    }

    #[test]
    fn divergence_examples() {
        let nh = 2;
        let cheb = Cheb::new(6);
        let u1 = transform(&PhysicalField::from_fn(5, &cheb.nodes, |x, _, _| x.sin()), nh).unwrap();
        let z = SpectralField::zeros(nh, 6);
        let u = VectorField::new(u1, z.clone(), z.clone());
        let d = divergence_eps(&u, 1.0, &cheb).unwrap();
        let cosx = transform(&PhysicalField::from_fn(5, &cheb.nodes, |x, _, _| x.cos()), nh).unwrap();
        assert!((&d - &cosx).max_abs() < 1e-13);

        let u3 = transform(&PhysicalField::from_fn(5, &cheb.nodes, |_, _, z| z), nh).unwrap();
        let u = VectorField::new(z.clone(), z.clone(), u3);
        let d = divergence_eps(&u, 0.5, &cheb).unwrap();
        let two = transform(&PhysicalField::from_fn(5, &cheb.nodes, |_, _, _| 2.0), nh).unwrap();
        assert!((&d - &two).max_abs() < 1e-12);
        assert!(divergence_eps(&u, 0.0, &cheb).is_err());
    }

    #[test]
    fn dealiased_product_is_exact_for_band_limited() {
        let nh = 4;
        let cheb = Cheb::new(3);
        let a = transform(&PhysicalField::from_fn(9, &cheb.nodes, |x, y, _| (2.0 * x).cos() + y.sin()), nh).unwrap();
        let b = transform(&PhysicalField::from_fn(9, &cheb.nodes, |x, _, _| (x).sin()), nh).unwrap();
        let p = Dealias::new(nh).product(&a, &b);
        let exact = transform(
            &PhysicalField::from_fn(9, &cheb.nodes, |x, y, _| ((2.0 * x).cos() + y.sin()) * x.sin()),
            nh,
        )
        .unwrap();
        assert!((&p - &exact).max_abs() < 1e-14);
    }
}
