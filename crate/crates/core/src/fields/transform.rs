//! Horizontal Fourier transforms between coefficients and a physical grid.
//!
//! Convention: `f(x, y) = Σ c_n e^{i(n1 x + n2 y)}` with `x_i = 2π i / M`.

use super::SpectralField;
use crate::{Error, Result, C64};
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Values on an `M × M × N_z` grid, laid out `[(ix * M + iy) * nz + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalField {
    pub m: usize,
    pub nz: usize,
    pub data: Vec<C64>,
}

impl PhysicalField {
    pub fn zeros(m: usize, nz: usize) -> Self {
        PhysicalField {
            m,
            nz,
            data: vec![C64::new(0.0, 0.0); m * m * nz],
        }
    }

    /// Samples `f(x, y, z)` on the grid with the given vertical nodes.
    pub fn from_fn(m: usize, nodes: &[f64], f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let nz = nodes.len();
        let h = 2.0 * std::f64::consts::PI / m as f64;
        let mut out = Self::zeros(m, nz);
        for ix in 0..m {
            for iy in 0..m {
                for (j, &z) in nodes.iter().enumerate() {
                    out.data[(ix * m + iy) * nz + j] = C64::new(f(ix as f64 * h, iy as f64 * h, z), 0.0);
                }
            }
        }
        out
    }

    /// Pointwise product.
    pub fn mul(&self, other: &PhysicalField) -> PhysicalField {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        PhysicalField {
            m: self.m,
            nz: self.nz,
            data,
        }
    }
}

/// Cached 1-D plans for a given grid side.
pub struct Fft2 {
    pub m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            m,
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
        }
    }

    /// Smallest grid side that multiplies two fields of truncation `nh` without aliasing.
    pub fn dealias_side(nh: usize) -> usize {
        3 * nh + 1
    }

    /// 2-D transforms of `nz` stacked planes laid out `[j][ix * m + iy]`.
    fn transform_planes(&self, planes: &mut [C64], forward: bool) {
        let m = self.m;
        let plan = if forward { &self.fwd } else { &self.inv };
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(planes, &mut scratch);
        let mut t = vec![C64::new(0.0, 0.0); planes.len()];
        for (src, dst) in planes.chunks(m * m).zip(t.chunks_mut(m * m)) {
            for ix in 0..m {
                for iy in 0..m {
                    dst[iy * m + ix] = src[ix * m + iy];
                }
            }
        }
        plan.process_with_scratch(&mut t, &mut scratch);
        for (src, dst) in t.chunks(m * m).zip(planes.chunks_mut(m * m)) {
            for ix in 0..m {
                for iy in 0..m {
                    dst[ix * m + iy] = src[iy * m + ix];
                }
            }
        }
    }

    /// Evaluates a spectral field on this grid (zero padding when `m > 2 nh + 1`).
    pub fn to_physical(&self, f: &SpectralField) -> Result<PhysicalField> {
        let m = self.m;
        if 2 * f.nh + 1 > m {
            return Err(Error::Dimension {
                expected: m,
                actual: 2 * f.nh + 1,
            });
        }
        let nz = f.nz;
        let mm = m * m;
        let mut planes = vec![C64::new(0.0, 0.0); mm * nz];
        for (idx, mode) in f.modes() {
            let ix = mode.n1.rem_euclid(m as i64) as usize;
            let iy = mode.n2.rem_euclid(m as i64) as usize;
            for j in 0..nz {
                planes[j * mm + ix * m + iy] = f.data[idx * nz + j];
            }
        }
        self.transform_planes(&mut planes, false);
        let mut out = PhysicalField::zeros(m, nz);
        for j in 0..nz {
            for p in 0..mm {
                out.data[p * nz + j] = planes[j * mm + p];
            }
        }
        Ok(out)
    }

    /// Projects physical values onto the modes `|n1|, |n2| <= nh`.
    pub fn to_spectral(&self, p: &PhysicalField, nh: usize) -> Result<SpectralField> {
        let m = self.m;
        if p.m != m {
            return Err(Error::Dimension {
                expected: m,
                actual: p.m,
            });
        }
        if 2 * nh + 1 > m {
            return Err(Error::Dimension {
                expected: m,
                actual: 2 * nh + 1,
            });
        }
        let nz = p.nz;
        let mm = m * m;
        let mut planes = vec![C64::new(0.0, 0.0); mm * nz];
        for q in 0..mm {
            for j in 0..nz {
                planes[j * mm + q] = p.data[q * nz + j];
            }
        }
        self.transform_planes(&mut planes, true);
        let mut out = SpectralField::zeros(nh, nz);
        let scale = 1.0 / mm as f64;
        let modes: Vec<_> = out.modes().collect();
        for (idx, mode) in modes {
            let ix = mode.n1.rem_euclid(m as i64) as usize;
            let iy = mode.n2.rem_euclid(m as i64) as usize;
            for j in 0..nz {
                out.data[idx * nz + j] = planes[j * mm + ix * m + iy] * scale;
            }
        }
        Ok(out)
    }
}

/// Forward transform on the natural `(2 N_h + 1)²` grid.
pub fn transform(p: &PhysicalField, nh: usize) -> Result<SpectralField> {
    if p.m != 2 * nh + 1 {
        return Err(Error::Dimension {
            expected: 2 * nh + 1,
            actual: p.m,
        });
    }
    Fft2::new(p.m).to_spectral(p, nh)
}

/// Inverse transform on the natural `(2 N_h + 1)²` grid.
pub fn inverse(f: &SpectralField) -> PhysicalField {
    Fft2::new(2 * f.nh + 1)
        .to_physical(f)
        .expect("natural grid always fits")
}
