//! Seeded random smooth real fields for probes and property tests.

use super::{Cheb, HorizontalMode, SpectralField, VectorField};
use crate::C64;
use rand::Rng;

/// Shape options for [`random_scalar`].
#[derive(Clone, Copy, Debug)]
pub struct RandomShape {
    /// Largest `|n1|, |n2|` populated.
    pub kmax: usize,
    /// Polynomial degree in z.
    pub degree: usize,
    /// Multiply by `1 − z²` so the field vanishes on the walls.
    pub wall_zero: bool,
    /// Leave the horizontal average at zero.
    pub average_free: bool,
}

impl Default for RandomShape {
    fn default() -> Self {
        RandomShape {
            kmax: 3,
            degree: 4,
            wall_zero: false,
            average_free: true,
        }
    }
}

/// Real-valued trigonometric-polynomial field with decaying coefficients.
pub fn random_scalar<R: Rng>(rng: &mut R, nh: usize, cheb: &Cheb, shape: RandomShape) -> SpectralField {
    let mut f = SpectralField::zeros(nh, cheb.n);
    let k = shape.kmax.min(nh) as i64;
    for n1 in -k..=k {
        for n2 in -k..=k {
            let n = HorizontalMode::new(n1, n2);
            // one representative per ± pair
            if (n1, n2) < (0, 0) || (shape.average_free && n.is_zero()) {
                continue;
            }
            let decay = 1.0 / (1.0 + n.k2() as f64);
            let coef: Vec<C64> = (0..=shape.degree)
                .map(|_| {
                    let re: f64 = rng.random_range(-1.0..1.0);
                    let im: f64 = if n.is_zero() { 0.0 } else { rng.random_range(-1.0..1.0) };
                    C64::new(re, im) * decay
                })
                .collect();
            for (j, &z) in cheb.nodes.iter().enumerate() {
                let mut v = coef.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * z + c);
                if shape.wall_zero {
                    v *= 1.0 - z * z;
                }
                f.set(n, j, v);
                if !n.is_zero() {
                    f.set(n.neg(), j, v.conj());
                }
            }
        }
    }
    f
}

/// Three independent random components.
pub fn random_vector<R: Rng>(rng: &mut R, nh: usize, cheb: &Cheb, shape: RandomShape) -> VectorField {
    VectorField::new(
        random_scalar(rng, nh, cheb, shape),
        random_scalar(rng, nh, cheb, shape),
        random_scalar(rng, nh, cheb, shape),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_fields_are_real_and_deterministic() {
        let cheb = Cheb::new(7);
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let shape = RandomShape {
            wall_zero: true,
            ..Default::default()
        };
        let a = random_scalar(&mut r1, 4, &cheb, shape);
        let b = random_scalar(&mut r2, 4, &cheb, shape);
        assert_eq!(a, b);
        assert!(a.conjugate_symmetry_defect() < 1e-15);
        assert!(a.zero_mode().iter().all(|v| v.norm() == 0.0));
        for col in a.data.chunks(7) {
            assert!(col[0].norm() < 1e-15 && col[6].norm() < 1e-15);
        }
    }
}
