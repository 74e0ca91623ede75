//! Time stepping for the hydrostatic and scaled Navier–Stokes systems, the
//! difference system between them and the diagnostics built on top.

pub mod bilinear;
pub mod difference;
pub mod pe;
pub mod sns;
pub mod w_identity;
pub use bilinear::{bilinear_ratio, bilinear_sampling, BilinearKind, BilinearReport};
pub use difference::{difference_iteration, direct_difference, forcing_terms, DifferenceOptions, DifferenceResult, ForcingTriple};
pub use pe::simulate_pe;
pub use sns::simulate_sns;
pub use w_identity::{w_regularity_check, WIdentityReport};

use crate::fields::{reconstruct_w, transform, vertical_average, Cheb, Dealias, Fft2, Grid, PhysicalField, SpectralField, VectorField, VelocityPressureState};
use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Named initial velocity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    /// Vortical shear `(1 − z²)(−sin y, sin x)` plus a cellular part
    /// `z(1 − z²)(−sin x cos y, −cos x sin y)` that drives `w`.
    Default,
    /// Cellular part only.
    Cellular,
    Zero,
}

impl InitialData {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(InitialData::Default),
            "cellular" => Ok(InitialData::Cellular),
            "zero" => Ok(InitialData::Zero),
            other => Err(Error::Config(format!("unknown initial data '{other}'"))),
        }
    }
}

/// Discretization and run parameters shared by both simulations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub nh: usize,
    pub nz: usize,
    pub t_final: f64,
    pub dt: f64,
    pub amplitude: f64,
    pub initial: InitialData,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            nh: 8,
            nz: 24,
            t_final: 0.5,
            dt: 1.0 / 256.0,
            amplitude: 1.0,
            initial: InitialData::Default,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.nh < 1 || self.nz < 8 {
            return Err(Error::Parameter(format!("grid too small: N_h={}, N_z={}", self.nh, self.nz)));
        }
        if !(self.dt > 0.0 && self.t_final > 0.0) {
            return Err(Error::Parameter("T and dt must be positive".into()));
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) || steps.round() < 2.0 {
            return Err(Error::Parameter(format!(
                "T/dt = {steps} must be an integer of at least 2"
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Parameter("amplitude must be finite".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.nh, self.nz)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps()).map(|i| i as f64 * self.dt).collect()
    }

    /// Same run with a different step.
    pub fn with_dt(&self, dt: f64) -> Self {
        SimParams { dt, ..self.clone() }
    }
}

/// Initial `(v1, v2, w)` with `w = −∫_{−1}^{z} div_H v`.
pub fn initial_velocity(params: &SimParams, grid: &Grid) -> [SpectralField; 3] {
    let a = params.amplitude;
    let (shear, cell) = match params.initial {
        InitialData::Default => (a, a),
        InitialData::Cellular => (0.0, a),
        InitialData::Zero => (0.0, 0.0),
    };
    let m = sample_side(grid.nh);
    let nodes = &grid.cheb.nodes;
    let v1 = PhysicalField::from_fn(m, nodes, |x, y, z| {
        shear * (1.0 - z * z) * (-y.sin()) + cell * z * (1.0 - z * z) * (-x.sin() * y.cos())
    });
    let v2 = PhysicalField::from_fn(m, nodes, |x, y, z| {
        shear * (1.0 - z * z) * x.sin() + cell * z * (1.0 - z * z) * (-x.cos() * y.sin())
    });
    let v1 = transform(&v1, grid.nh).expect("grid side fits");
    let v2 = transform(&v2, grid.nh).expect("grid side fits");
    let w = reconstruct_w(&v1, &v2, &grid.cheb).w;
    [v1, v2, w]
}

fn sample_side(nh: usize) -> usize {
    // smallest odd side resolving |n| ≤ N_h; the data live in |n| ≤ 1
    (2 * nh + 1).max(3)
}

/// Per-step diagnostics of a simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    /// `‖u‖²_{L²}` of the stored velocity (for the scaled system, of `(v, εw)`).
    pub energy: f64,
    /// Largest divergence defect (hydrostatic: `|w(·, 1)|`).
    pub divergence_defect: f64,
    /// Largest vertical variation of the pressure columns.
    pub pressure_z_variation: f64,
    /// Advective Courant number of the step that produced this state.
    pub cfl: f64,
}

/// Sampled solution of one simulation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub nh: usize,
    pub nz: usize,
    pub times: Vec<f64>,
    pub states: Vec<VelocityPressureState>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    /// `(v1, v2, w)` per sample.
    pub fn velocities(&self) -> Vec<Vec<SpectralField>> {
        self.states
            .iter()
            .map(|s| vec![s.vh[0].clone(), s.vh[1].clone(), s.w.clone()])
            .collect()
    }

    /// `(v1, v2, εw)` per sample.
    pub fn scaled_velocities(&self, eps: f64) -> Vec<VectorField> {
        self.states
            .iter()
            .map(|s| VectorField::new(s.vh[0].clone(), s.vh[1].clone(), s.w.scale_re(eps)))
            .collect()
    }

    /// Keeps every `k`-th sample.
    pub fn subsample(&self, k: usize) -> Trajectory {
        let pick = |i: &usize| i % k == 0;
        Trajectory {
            nh: self.nh,
            nz: self.nz,
            times: (0..self.times.len()).filter(pick).map(|i| self.times[i]).collect(),
            states: (0..self.states.len()).filter(pick).map(|i| self.states[i].clone()).collect(),
            diagnostics: (0..self.diagnostics.len()).filter(pick).map(|i| self.diagnostics[i]).collect(),
        }
    }
}

/// Dealiased transport products `(a·∇) f`.
pub struct Advection {
    pub dealias: Dealias,
    pub cheb: Cheb,
}

impl Advection {
    pub fn new(grid: &Grid) -> Self {
        Advection {
            dealias: Dealias::new(grid.nh),
            cheb: grid.cheb.clone(),
        }
    }

    /// Physical values of a transport velocity `(a1, a2, a3)`; `a3` multiplies `∂_z`.
    pub fn transport(&self, a: [&SpectralField; 3]) -> [PhysicalField; 3] {
        a.map(|f| self.dealias.physical(f))
    }

    /// `P_N[(a·∇) f]` for each target.
    pub fn apply(&self, a: &[PhysicalField; 3], targets: &[&SpectralField]) -> Vec<SpectralField> {
        targets
            .iter()
            .map(|f| {
                let derivs = [f.dx(), f.dy(), f.dz(&self.cheb)];
                let mut acc = PhysicalField::zeros(a[0].m, a[0].nz);
                for (ai, d) in a.iter().zip(&derivs) {
                    let pd = self.dealias.physical(d);
                    for ((o, x), y) in acc.data.iter_mut().zip(&ai.data).zip(&pd.data) {
                        *o += x * y;
                    }
                }
                self.dealias.spectral(&acc)
            })
            .collect()
    }

    /// Dealiased product of two fields.
    pub fn product(&self, a: &SpectralField, b: &SpectralField) -> SpectralField {
        self.dealias.product(a, b)
    }
}

/// Advective Courant number `Δt (max|u_H| / Δx + max|u_3| / Δz_min)` from physical values.
pub(crate) fn courant(a: &[PhysicalField; 3], dt: f64, nh: usize, cheb: &Cheb) -> f64 {
    let max = |p: &PhysicalField| p.data.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    let dx = 2.0 * PI / (2 * nh + 1) as f64;
    let dz = (0..cheb.n - 1).map(|j| cheb.nodes[j] - cheb.nodes[j + 1]).fold(f64::INFINITY, f64::min);
    dt * ((max(&a[0]) + max(&a[1])) / dx + max(&a[2]) / dz)
}

/// Fourth-order first derivative on a uniform grid; one-sided near the ends.
pub fn uniform_derivative4(samples: &[SpectralField], dt: f64) -> Result<Vec<SpectralField>> {
    let n = samples.len();
    if n < 5 {
        return Err(Error::Domain(format!("need at least 5 samples, got {n}")));
    }
    let comb = |cs: &[(usize, f64)]| {
        let mut out = samples[cs[0].0].scale_re(cs[0].1 / (12.0 * dt));
        for &(i, w) in &cs[1..] {
            out.axpy(C64::new(w / (12.0 * dt), 0.0), &samples[i]);
        }
        out
    };
    Ok((0..n)
        .map(|i| match i {
            0 => comb(&[(0, -25.0), (1, 48.0), (2, -36.0), (3, 16.0), (4, -3.0)]),
            1 => comb(&[(0, -3.0), (1, -10.0), (2, 18.0), (3, -6.0), (4, 1.0)]),
            _ if i == n - 2 => comb(&[(n - 1, 3.0), (n - 2, 10.0), (n - 3, -18.0), (n - 4, 6.0), (n - 5, -1.0)]),
            _ if i == n - 1 => comb(&[(n - 1, 25.0), (n - 2, -48.0), (n - 3, 36.0), (n - 4, -16.0), (n - 5, 3.0)]),
            _ => comb(&[(i - 2, 1.0), (i - 1, -8.0), (i + 1, 8.0), (i + 2, -1.0)]),
        })
        .collect())
}

/// Largest spread of a column from its mean value.
pub(crate) fn column_variation(f: &SpectralField) -> f64 {
    f.data
        .chunks(f.nz)
        .map(|c| {
            let m = c.iter().sum::<C64>() / c.len() as f64;
            c.iter().map(|v| (v - m).norm()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Embedding into the refined grid and exact products there.
pub(crate) struct Refined {
    pub(crate) nh: usize,
    pub(crate) from: Cheb,
    pub(crate) to: Cheb,
    fft: Fft2,
}

impl Refined {
    pub(crate) fn new(nh: usize, nz: usize) -> Self {
        Refined {
            nh: 2 * nh,
            from: Cheb::new(nz),
            to: Cheb::new(2 * nz),
            fft: Fft2::new(4 * nh + 1),
        }
    }

    pub(crate) fn embed(&self, f: &SpectralField) -> SpectralField {
        f.resize_modes(self.nh).resample_z(&self.from, &self.to)
    }

    pub(crate) fn phys(&self, f: &SpectralField) -> PhysicalField {
        self.fft.to_physical(f).expect("refined grid fits")
    }

    pub(crate) fn spec(&self, p: &PhysicalField) -> SpectralField {
        self.fft.to_spectral(p, self.nh).expect("refined grid fits")
    }

    /// `Σ c_k a_k b_k` pointwise.
    pub(crate) fn sum_products(&self, terms: &[(f64, &PhysicalField, &PhysicalField)]) -> SpectralField {
        let mut acc = PhysicalField::zeros(terms[0].1.m, terms[0].1.nz);
        for (c, a, b) in terms {
            for ((o, x), y) in acc.data.iter_mut().zip(&a.data).zip(&b.data) {
                *o += x * y * *c;
            }
        }
        self.spec(&acc)
    }

    /// Multiplies each column by `z + 1`.
    pub(crate) fn times_z_plus_one(&self, f: &SpectralField) -> SpectralField {
        let mut out = f.clone();
        for col in out.data.chunks_mut(f.nz) {
            for (v, z) in col.iter_mut().zip(&self.to.nodes) {
                *v *= z + 1.0;
            }
        }
        out
    }

    /// `∫_{−1}^{1} f dz`, constant in z.
    pub(crate) fn full_integral(&self, f: &SpectralField) -> SpectralField {
        vertical_average(f, &self.to).scale_re(2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_initial_data_is_compatible() {
        let p = SimParams::default();
        let g = p.grid();
        let [v1, v2, w] = initial_velocity(&p, &g);
        let r = reconstruct_w(&v1, &v2, &g.cheb);
        assert!(r.top_defect < 1e-13);
        // w = −½ cos x cos y (1 − z²)²
        let n = crate::fields::HorizontalMode::new(1, 1);
        for (j, z) in g.cheb.nodes.iter().enumerate() {
            let exact = -0.125 * (1.0 - z * z).powi(2);
            assert!((w.get(n, j).re - exact).abs() < 1e-13);
        }
        assert!(v1.conjugate_symmetry_defect() < 1e-14);
    }

    #[test]
    fn fourth_order_derivative_is_exact_on_quartics() {
        let cheb = Cheb::new(4);
        let dt = 0.1;
        let samples: Vec<SpectralField> = (0..9)
            .map(|i| {
                let t = i as f64 * dt;
                let mut f = SpectralField::zeros(1, 4);
                f.data.iter_mut().for_each(|v| *v = C64::new(t.powi(4) - t, 0.0));
                f
            })
            .collect();
        let d = uniform_derivative4(&samples, dt).unwrap();
        for (i, f) in d.iter().enumerate() {
            let t = i as f64 * dt;
            assert!((f.data[0].re - (4.0 * t.powi(3) - 1.0)).abs() < 1e-12, "{i}");
        }
        let _ = cheb;
    }

    #[test]
    fn advection_of_linear_profile() {
        let g = Grid::new(3, 8);
        let adv = Advection::new(&g);
        let x = PhysicalField::from_fn(7, &g.cheb.nodes, |x, _, _| x.sin());
        let z = PhysicalField::from_fn(7, &g.cheb.nodes, |_, _, z| z);
        let fx = transform(&x, 3).unwrap();
        let fz = transform(&z, 3).unwrap();
        let zero = SpectralField::zeros(3, 8);
        // (sin x ∂_x + 0 + sin x ∂_z) z = sin x
        let a = adv.transport([&zero, &zero, &fx]);
        let out = adv.apply(&a, &[&fz]);
        assert!((&out[0] - &fx).max_abs() < 1e-13);
    }
}
