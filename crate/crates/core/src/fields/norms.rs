//! Discrete mixed Lebesgue–Sobolev norms `L^p(0,T; L^q(Ω))` and their
//! first-order-in-time, second-order-in-space analog.

use super::{inverse, Cheb, SpectralField};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Exponents and time samples for the mixed norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    /// Time exponent.
    pub p: f64,
    /// Space exponent.
    pub q: f64,
    /// Optional Sobolev order for the trace proxy; `2 − 2/p` when absent.
    pub s: Option<f64>,
    /// Increasing sample times.
    pub time_grid: Vec<f64>,
}

impl NormSpec {
    pub fn new(p: f64, q: f64, time_grid: Vec<f64>) -> Result<Self> {
        if !(p > 1.0 && p.is_finite() && q > 1.0 && q.is_finite()) {
            return Err(Error::Parameter(format!("exponents must lie in (1, ∞), got p={p}, q={q}")));
        }
        if time_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("time grid must be increasing".into()));
        }
        Ok(NormSpec { p, q, s: None, time_grid })
    }

    /// Uniform grid with `steps + 1` samples on `[0, t]`.
    pub fn uniform(p: f64, q: f64, t: f64, steps: usize) -> Result<Self> {
        Self::new(p, q, (0..=steps).map(|i| t * i as f64 / steps as f64).collect())
    }

    /// Trace-space order `s = 2 − 2/p` unless overridden.
    pub fn trace_order(&self) -> f64 {
        self.s.unwrap_or(2.0 - 2.0 / self.p)
    }

    /// `min(1 − 1/q, 3/2 − 2/q) − 1/p`; nonnegative iff admissible.
    pub fn admissibility_margin(&self) -> f64 {
        (1.0 - 1.0 / self.q).min(1.5 - 2.0 / self.q) - 1.0 / self.p
    }

    pub fn admissible(&self) -> bool {
        self.admissibility_margin() >= -1e-14
    }
}

/// Pointwise Euclidean `L^q(Ω)` norm of weighted components:
/// `(∫ (Σ w_c |f_c|²)^{q/2})^{1/q}`, on the natural physical grid.
pub fn lq_norm(components: &[(&SpectralField, f64)], q: f64, cheb: &Cheb) -> f64 {
    if components.is_empty() {
        return 0.0;
    }
    if q == 2.0 {
        // Parseval; identical to the grid sum on the natural grid
        return components.iter().map(|(f, w)| w * f.l2_norm(cheb).powi(2)).sum::<f64>().sqrt();
    }
    let nz = components[0].0.nz;
    let m = 2 * components[0].0.nh + 1;
    let cell = (2.0 * std::f64::consts::PI / m as f64).powi(2);
    let mut pointwise = vec![0.0; m * m * nz];
    for (f, w) in components {
        let p = inverse(f);
        for (acc, v) in pointwise.iter_mut().zip(&p.data) {
            *acc += w * v.norm_sqr();
        }
    }
    let mut s = 0.0;
    for col in pointwise.chunks(nz) {
        for (v, wz) in col.iter().zip(&cheb.weights) {
            s += wz * v.powf(q / 2.0);
        }
    }
    (cell * s).powf(1.0 / q)
}

/// `L^q(Ω)` norm of one scalar field.
pub fn lq_scalar(f: &SpectralField, q: f64, cheb: &Cheb) -> f64 {
    lq_norm(&[(f, 1.0)], q, cheb)
}

/// Composite trapezoid of `g(t)^p`, then the `1/p` power.
pub fn time_lp(values: &[f64], times: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("empty trajectory".into()));
    }
    if values.len() != times.len() {
        return Err(Error::Dimension {
            expected: times.len(),
            actual: values.len(),
        });
    }
    if values.len() == 1 {
        return Ok(values[0]);
    }
    let mut s = 0.0;
    for i in 1..values.len() {
        let dt = times[i] - times[i - 1];
        s += 0.5 * dt * (values[i - 1].powf(p) + values[i].powf(p));
    }
    Ok(s.powf(1.0 / p))
}

/// `‖u‖_{L^p(0,T;L^q)}` for a trajectory of vector-valued samples.
pub fn mixed_norm(traj: &[Vec<SpectralField>], spec: &NormSpec, cheb: &Cheb) -> Result<f64> {
    let vals: Vec<f64> = traj
        .iter()
        .map(|u| {
            let parts: Vec<_> = u.iter().map(|f| (f, 1.0)).collect();
            lq_norm(&parts, spec.q, cheb)
        })
        .collect();
    time_lp(&vals, &spec.time_grid, spec.p)
}

/// Alias of [`mixed_norm`] under the name of the solution-space norm.
pub fn e0_norm(traj: &[Vec<SpectralField>], spec: &NormSpec, cheb: &Cheb) -> Result<f64> {
    mixed_norm(traj, spec, cheb)
}

/// Second derivatives of one scalar with Frobenius weights (off-diagonals twice).
pub fn hessian_parts(f: &SpectralField, cheb: &Cheb) -> Vec<(SpectralField, f64)> {
    let fz = f.dz(cheb);
    vec![
        (f.dx().dx(), 1.0),
        (f.dy().dy(), 1.0),
        (f.dzz(cheb), 1.0),
        (f.dx().dy(), 2.0),
        (fz.dx(), 2.0),
        (fz.dy(), 2.0),
    ]
}

/// Pointwise Frobenius `L^q` norm of `∇²u`.
pub fn hessian_lq(u: &[SpectralField], q: f64, cheb: &Cheb) -> f64 {
    let parts: Vec<(SpectralField, f64)> = u.iter().flat_map(|f| hessian_parts(f, cheb)).collect();
    let refs: Vec<_> = parts.iter().map(|(f, w)| (f, *w)).collect();
    lq_norm(&refs, q, cheb)
}

/// Time derivative of a sampled trajectory: central differences inside,
/// second-order one-sided at the ends.
pub fn time_derivative(traj: &[Vec<SpectralField>], times: &[f64]) -> Result<Vec<Vec<SpectralField>>> {
    let n = traj.len();
    if n < 3 {
        return Err(Error::Domain(format!("need at least 3 time samples, got {n}")));
    }
    let comb = |cs: &[(usize, f64)]| -> Vec<SpectralField> {
        (0..traj[0].len())
            .map(|c| {
                let mut out = traj[cs[0].0][c].scale_re(cs[0].1);
                for &(i, w) in &cs[1..] {
                    out.axpy(crate::C64::new(w, 0.0), &traj[i][c]);
                }
                out
            })
            .collect()
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let v = if i == 0 {
            let (h1, h2) = (times[1] - times[0], times[2] - times[1]);
            let h = h1 + h2;
            comb(&[(0, -(2.0 * h1 + h2) / (h1 * h)), (1, h / (h1 * h2)), (2, -h1 / (h2 * h))])
        } else if i == n - 1 {
            let (h1, h2) = (times[n - 2] - times[n - 3], times[n - 1] - times[n - 2]);
            let h = h1 + h2;
            comb(&[(n - 3, h2 / (h1 * h)), (n - 2, -h / (h1 * h2)), (n - 1, (2.0 * h2 + h1) / (h2 * h))])
        } else {
            let (h1, h2) = (times[i] - times[i - 1], times[i + 1] - times[i]);
            comb(&[
                (i - 1, -h2 / (h1 * (h1 + h2))),
                (i, (h2 - h1) / (h1 * h2)),
                (i + 1, h1 / (h2 * (h1 + h2))),
            ])
        };
        out.push(v);
    }
    Ok(out)
}

/// `E₁` norm: `E₀(u) + E₀(∂_t u) + E₀(∇²u)`.
pub fn e1_norm(traj: &[Vec<SpectralField>], spec: &NormSpec, cheb: &Cheb) -> Result<f64> {
    let (a, b, c) = e1_parts(traj, spec, cheb)?;
    Ok(a + b + c)
}

/// The three contributions to [`e1_norm`].
pub fn e1_parts(traj: &[Vec<SpectralField>], spec: &NormSpec, cheb: &Cheb) -> Result<(f64, f64, f64)> {
    let base = mixed_norm(traj, spec, cheb)?;
    let dt = time_derivative(traj, &spec.time_grid)?;
    let dtn = mixed_norm(&dt, spec, cheb)?;
    let hess: Vec<f64> = traj.iter().map(|u| hessian_lq(u, spec.q, cheb)).collect();
    let hn = time_lp(&hess, &spec.time_grid, spec.p)?;
    Ok((base, dtn, hn))
}

/// Spectral-derivative surrogate of the initial trace norm:
/// `‖u‖^{1−s/2} (‖u‖ + ‖∇²u‖)^{s/2}` in `L^q`, with `s` the trace order.
pub fn proxy_trace_norm(u: &[SpectralField], spec: &NormSpec, cheb: &Cheb) -> f64 {
    let s = spec.trace_order().clamp(0.0, 2.0);
    let parts: Vec<_> = u.iter().map(|f| (f, 1.0)).collect();
    let l = lq_norm(&parts, spec.q, cheb);
    let h = hessian_lq(u, spec.q, cheb);
    if l == 0.0 {
        return 0.0;
    }
    l.powf(1.0 - s / 2.0) * (l + h).powf(s / 2.0)
}
