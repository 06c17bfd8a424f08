//! Small dense matrices for Jacobians and their blocks.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// A 3×3 real matrix stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix3(pub [[f64; 3]; 3]);

impl Matrix3 {
    pub const ZERO: Matrix3 = Matrix3([[0.0; 3]; 3]);
    pub const IDENTITY: Matrix3 = Matrix3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        Matrix3(rows)
    }

    pub fn diagonal(d: [f64; 3]) -> Self {
        let mut m = Matrix3::ZERO;
        for (i, v) in d.into_iter().enumerate() {
            m.0[i][i] = v;
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn transpose(&self) -> Matrix3 {
        let mut t = Matrix3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                t.0[j][i] = self.0[i][j];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3([
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ])
    }

    pub fn mul(&self, other: &Matrix3) -> Matrix3 {
        let mut out = Matrix3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] = (0..3).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        out
    }

    pub fn sub(&self, other: &Matrix3) -> Matrix3 {
        let mut out = *self;
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] -= other.0[i][j];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix3 {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|x| *x *= s);
        out
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Inverse by the adjugate; `None` when `|det| < min_det`.
    pub fn inverse(&self, min_det: f64) -> Option<Matrix3> {
        let d = self.det();
        if !d.is_finite() || d.abs() < min_det {
            return None;
        }
        let m = &self.0;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        Some(Matrix3(adj).scale(1.0 / d))
    }

    /// Solves `self · x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: Vec3) -> Option<Vec3> {
        let mut a = self.0;
        let mut rhs = b.0;
        for col in 0..3 {
            let piv = (col..3).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap_or(col);
            if a[piv][col].abs() < 1e-300 {
                return None;
            }
            a.swap(col, piv);
            rhs.swap(col, piv);
            for row in col + 1..3 {
                let f = a[row][col] / a[col][col];
                let pivot = a[col];
                for (v, p) in a[row].iter_mut().zip(pivot).skip(col) {
                    *v -= f * p;
                }
                rhs[row] -= f * rhs[col];
            }
        }
        let mut x = [0.0; 3];
        for row in (0..3).rev() {
            let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
            x[row] = (rhs[row] - s) / a[row][row];
        }
        x.iter().all(|v| v.is_finite()).then_some(Vec3(x))
    }

    /// The 2×2 block on rows and columns `(i, j)`.
    pub fn block2(&self, i: usize, j: usize) -> Matrix2 {
        Matrix2([[self.0[i][i], self.0[i][j]], [self.0[j][i], self.0[j][j]]])
    }

    pub fn max_abs_diff(&self, other: &Matrix3) -> f64 {
        self.0.iter().flatten().zip(other.0.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    /// Real eigenvalues from the characteristic cubic, each polished by one
    /// Newton step on the characteristic polynomial. Complex pairs are omitted.
    ///
    /// Debug path only: boundary spectra never need the full 3×3 problem.
    pub fn real_eigenvalues(&self) -> Vec<f64> {
        let m = &self.0;
        // det(μI − M) = μ³ − c2 μ² + c1 μ − c0
        let c2 = self.trace();
        let c1 = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0] + m[1][1] * m[2][2]
            - m[1][2] * m[2][1];
        let c0 = self.det();
        let p = |mu: f64| ((mu - c2) * mu + c1) * mu - c0;
        let dp = |mu: f64| (3.0 * mu - 2.0 * c2) * mu + c1;

        // Depressed cubic t³ + a t + b with μ = t + c2/3.
        let shift = c2 / 3.0;
        let a = c1 - c2 * c2 / 3.0;
        let b = -2.0 * c2 * c2 * c2 / 27.0 + c2 * c1 / 3.0 - c0;
        let disc = (b / 2.0).powi(2) + (a / 3.0).powi(3);
        let mut roots = if disc > 1e-14 * (1.0 + b.abs()).powi(2) {
            let sq = disc.sqrt();
            vec![(-b / 2.0 + sq).cbrt() + (-b / 2.0 - sq).cbrt() + shift]
        } else if a.abs() < 1e-300 {
            vec![shift; 3]
        } else {
            let r = (-a / 3.0).max(0.0).sqrt();
            let cos_arg = if r > 0.0 { (-b / (2.0 * r * r * r)).clamp(-1.0, 1.0) } else { 0.0 };
            let phi = cos_arg.acos();
            (0..3).map(|k| 2.0 * r * ((phi - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift).collect()
        };
        for mu in roots.iter_mut() {
            let d = dp(*mu);
            if d.abs() > 1e-14 {
                *mu -= p(*mu) / d;
            }
        }
        roots.sort_by(f64::total_cmp);
        roots
    }
}

/// A 2×2 real matrix, used for Jacobian blocks restricted to planar faces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix2(pub [[f64; 2]; 2]);

/// Real eigen-decomposition of a 2×2 matrix, eigenvalues ordered by modulus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigen2 {
    /// Smaller-modulus eigenvalue and a unit eigenvector.
    pub small: (f64, [f64; 2]),
    /// Larger-modulus eigenvalue and a unit eigenvector.
    pub large: (f64, [f64; 2]),
}

impl Matrix2 {
    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn inverse(&self) -> Option<Matrix2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let m = &self.0;
        Some(Matrix2([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]))
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [self.0[0][0] * v[0] + self.0[0][1] * v[1], self.0[1][0] * v[0] + self.0[1][1] * v[1]]
    }

    /// Discriminant `(tr/2)² − det`; negative means a complex pair.
    pub fn discriminant(&self) -> f64 {
        let half = self.trace() / 2.0;
        half * half - self.det()
    }

    /// Closed-form real eigenpairs; `None` for a complex pair.
    pub fn eigen(&self) -> Option<Eigen2> {
        let half = self.trace() / 2.0;
        let disc = self.discriminant();
        let scale = 1e-14 * (1.0 + half * half);
        if disc < -scale {
            return None;
        }
        let sq = disc.max(0.0).sqrt();
        // Avoid cancellation: compute the larger root directly, the other from det.
        let big = if half >= 0.0 { half + sq } else { half - sq };
        let other = if big != 0.0 { self.det() / big } else { half - sq };
        let (small, large) = if other.abs() <= big.abs() { (other, big) } else { (big, other) };
        Some(Eigen2 { small: (small, self.eigenvector(small)), large: (large, self.eigenvector(large)) })
    }

    /// Unit vector in the kernel of `self − μ·Id`, chosen from the better
    /// conditioned row.
    pub fn eigenvector(&self, mu: f64) -> [f64; 2] {
        let a = self.0[0][0] - mu;
        let b = self.0[0][1];
        let c = self.0[1][0];
        let d = self.0[1][1] - mu;
        let (v0, v1) = if a.abs() + b.abs() >= c.abs() + d.abs() { (-b, a) } else { (-d, c) };
        let n = v0.hypot(v1);
        if n == 0.0 {
            // Scalar multiple of the identity: any vector is an eigenvector.
            return [1.0, 0.0];
        }
        [v0 / n, v1 / n]
    }
}
