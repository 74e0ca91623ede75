//! Chebyshev–Gauss–Lobatto collocation on [−1, 1].
//!
//! Nodes are ordered from `z = 1` down to `z = −1`.

use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Collocation data for one vertical resolution.
#[derive(Clone, Debug)]
pub struct Cheb {
    /// Number of nodes.
    pub n: usize,
    /// Nodes `cos(πj/(n−1))`, strictly decreasing.
    pub nodes: Vec<f64>,
    /// First-derivative collocation matrix.
    pub d1: DMatrix<f64>,
    /// Second-derivative collocation matrix.
    pub d2: DMatrix<f64>,
    /// Clenshaw–Curtis weights (sum to 2).
    pub weights: Vec<f64>,
    /// `cumint[(i, j)]` maps node values to `∫_{−1}^{z_i} p(ζ) dζ` of the interpolant.
    pub cumint: DMatrix<f64>,
    bary: Vec<f64>,
}

impl Cheb {
    /// Builds the collocation data for `n >= 3` nodes.
    pub fn new(n: usize) -> Self {
        assert!(n >= 3, "need at least three Chebyshev nodes");
        let m = (n - 1) as f64;
        let nodes: Vec<f64> = (0..n)
            .map(|j| {
                // sin form keeps the nodes exactly antisymmetric
                (PI * (m - 2.0 * j as f64) / (2.0 * m)).sin()
            })
            .collect();
        let c = |j: usize| -> f64 {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n - 1 {
                2.0 * s
            } else {
                s
            }
        };
        let mut d1 = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                if i != j {
                    let v = c(i) / c(j) / (nodes[i] - nodes[j]);
                    d1[(i, j)] = v;
                    row += v;
                }
            }
            d1[(i, i)] = -row;
        }
        let d2 = &d1 * &d1;
        let weights = clenshaw_curtis(n);
        let bary = (0..n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n - 1 {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let cumint = cumulative_integral(&nodes);
        Cheb {
            n,
            nodes,
            d1,
            d2,
            weights,
            cumint,
            bary,
        }
    }

    /// Barycentric weights of the interpolation rows into arbitrary points.
    pub fn interp_row(&self, t: f64, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.n);
        for (j, &x) in self.nodes.iter().enumerate() {
            if (t - x).abs() < 1e-15 {
                row.iter_mut().for_each(|r| *r = 0.0);
                row[j] = 1.0;
                return;
            }
        }
        let mut sum = 0.0;
        for j in 0..self.n {
            let q = self.bary[j] / (t - self.nodes[j]);
            row[j] = q;
            sum += q;
        }
        row.iter_mut().for_each(|r| *r /= sum);
    }

    /// Interpolation matrix from this grid to the points `ts`.
    pub fn interp_matrix(&self, ts: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::<f64>::zeros(ts.len(), self.n);
        let mut row = vec![0.0; self.n];
        for (i, &t) in ts.iter().enumerate() {
            self.interp_row(t, &mut row);
            for j in 0..self.n {
                out[(i, j)] = row[j];
            }
        }
        out
    }

    /// Chebyshev coefficients `a_k` of the interpolant, `p = Σ a_k T_k`.
    pub fn coefficients(&self, vals: &[f64]) -> Vec<f64> {
        cheb_coefficients(&self.nodes, vals)
    }
}

fn cheb_coefficients(nodes: &[f64], vals: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let m = (n - 1) as f64;
    (0..n)
        .map(|k| {
            let mut s = 0.0;
            for (j, &v) in vals.iter().enumerate() {
                let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                s += w * v * (PI * (j * k) as f64 / m).cos();
            }
            let ck = if k == 0 || k == n - 1 { 2.0 } else { 1.0 };
            2.0 * s / (m * ck)
        })
        .collect()
}

fn clenshaw_curtis(n: usize) -> Vec<f64> {
    let m = n - 1;
    let mf = m as f64;
    let mut w = vec![0.0; n];
    let theta: Vec<f64> = (0..n).map(|j| PI * j as f64 / mf).collect();
    let interior: Vec<usize> = (1..m).collect();
    let mut v = vec![1.0; interior.len()];
    if m % 2 == 0 {
        w[0] = 1.0 / (mf * mf - 1.0);
        w[m] = w[0];
        for k in 1..m / 2 {
            for (idx, &j) in interior.iter().enumerate() {
                v[idx] -= 2.0 * (2.0 * k as f64 * theta[j]).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
        }
        for (idx, &j) in interior.iter().enumerate() {
            v[idx] -= (mf * theta[j]).cos() / (mf * mf - 1.0);
        }
    } else {
        w[0] = 1.0 / (mf * mf);
        w[m] = w[0];
        for k in 1..=(m - 1) / 2 {
            for (idx, &j) in interior.iter().enumerate() {
                v[idx] -= 2.0 * (2.0 * k as f64 * theta[j]).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
        }
    }
    for (idx, &j) in interior.iter().enumerate() {
        w[j] = 2.0 * v[idx] / mf;
    }
    w
}

fn cumulative_integral(nodes: &[f64]) -> DMatrix<f64> {
    let n = nodes.len();
    let mut out = DMatrix::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    for col in 0..n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[col] = 1.0;
        let a = cheb_coefficients(nodes, &e);
        // antiderivative coefficients, degree n
        let mut b = vec![0.0; n + 1];
        for (k, &ak) in a.iter().enumerate() {
            match k {
                0 => b[1] += ak,
                1 => b[2] += ak / 4.0,
                _ => {
                    b[k + 1] += ak / (2.0 * (k + 1) as f64);
                    b[k - 1] -= ak / (2.0 * (k - 1) as f64);
                }
            }
        }
        let at = |x: f64| -> f64 {
            // Clenshaw recurrence
            let (mut b1, mut b2) = (0.0, 0.0);
            for k in (1..b.len()).rev() {
                let t = 2.0 * x * b1 - b2 + b[k];
                b2 = b1;
                b1 = t;
            }
            x * b1 - b2 + b[0]
        };
        let base = at(-1.0);
        for i in 0..n {
            out[(i, col)] = at(nodes[i]) - base;
        }
    }
    out
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(m, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(m, z);
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn legendre(m: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}
