//! Closed-form 2×2 linear algebra.
//!
//! Everything the model needs (products, inverses, eigen-decompositions) is
//! done with explicit formulas; there is no iteration anywhere in here.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Row-major 2×2 real matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2([[a11, a12], [a21, a22]])
    }

    pub const fn diag(d1: f64, d2: f64) -> Self {
        Mat2([[d1, 0.0], [0.0, d2]])
    }

    /// Matrix whose columns are `c1` and `c2`.
    pub const fn from_columns(c1: [f64; 2], c2: [f64; 2]) -> Self {
        Mat2([[c1[0], c2[0]], [c1[1], c2[1]]])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn transpose(&self) -> Self {
        Mat2::new(self.0[0][0], self.0[1][0], self.0[0][1], self.0[1][1])
    }

    /// Inverse by the adjugate formula; `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let [[a, b], [c, d]] = self.0;
        Some(Mat2::new(d / det, -b / det, -c / det, a / det))
    }

    #[inline]
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    /// Row vector times matrix, `vᵀ·self`.
    pub fn apply_left(&self, v: [f64; 2]) -> [f64; 2] {
        [
            v[0] * self.0[0][0] + v[1] * self.0[1][0],
            v[0] * self.0[0][1] + v[1] * self.0[1][1],
        ]
    }

    pub fn row_sums(&self) -> [f64; 2] {
        [self.0[0][0] + self.0[0][1], self.0[1][0] + self.0[1][1]]
    }

    pub fn is_symmetric(&self) -> bool {
        self.0[0][1] == self.0[1][0]
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        m
    }

    pub fn off_diagonal_norm(&self) -> f64 {
        self.0[0][1].abs().max(self.0[1][0].abs())
    }

    /// Real eigenvalues `(larger, smaller)` from the characteristic polynomial
    /// `λ² − tr·λ + det`. Returns `None` for a complex pair.
    pub fn real_eigenvalues(&self) -> Option<(f64, f64)> {
        let tr = self.trace();
        let [[a, b], [c, d]] = self.0;
        // (a − d)² + 4bc is the discriminant written without cancellation in tr² − 4det.
        let disc = (a - d) * (a - d) + 4.0 * b * c;
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        let big = if tr >= 0.0 { 0.5 * (tr + s) } else { 0.5 * (tr - s) };
        if big == 0.0 {
            return Some((0.0, 0.0));
        }
        // Vieta for the second root avoids subtracting nearly equal numbers.
        let other = self.det() / big;
        Some(if big >= other { (big, other) } else { (other, big) })
    }

    /// Unit right eigenvector for a known eigenvalue.
    pub fn eigenvector(&self, lambda: f64) -> [f64; 2] {
        let [[a, b], [c, d]] = self.0;
        // Pick the better conditioned row of (self − λI).
        let r1 = [a - lambda, b];
        let r2 = [c, d - lambda];
        let n1 = r1[0].hypot(r1[1]);
        let n2 = r2[0].hypot(r2[1]);
        let v = if n1 == 0.0 && n2 == 0.0 {
            [1.0, 0.0]
        } else if n1 >= n2 {
            [-r1[1], r1[0]]
        } else {
            [-r2[1], r2[0]]
        };
        let n = v[0].hypot(v[1]);
        let mut v = [v[0] / n, v[1] / n];
        if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
            v = [-v[0], -v[1]];
        }
        v
    }

    /// Eigen-decomposition of a symmetric matrix: `(λ₁, λ₂, O)` with
    /// `λ₁ ≥ λ₂` and `Oᵀ·self·O = diag(λ₁, λ₂)`, `O` orthogonal.
    pub fn symmetric_eigen(&self) -> (f64, f64, Mat2) {
        let (l1, l2) = self
            .real_eigenvalues()
            .expect("symmetric matrices have real eigenvalues");
        let v1 = self.eigenvector(l1);
        // Orthogonal complement keeps O exactly orthogonal even for a double root.
        let v2 = [-v1[1], v1[0]];
        (l1, l2, Mat2::from_columns(v1, v2))
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = self.0;
        let b = rhs.0;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;

    fn mul(self, s: f64) -> Mat2 {
        let a = self.0;
        Mat2::new(a[0][0] * s, a[0][1] * s, a[1][0] * s, a[1][1] * s)
    }
}

impl Add for Mat2 {
    type Output = Mat2;

    fn add(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (self.0, rhs.0);
        Mat2::new(a[0][0] + b[0][0], a[0][1] + b[0][1], a[1][0] + b[1][0], a[1][1] + b[1][1])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;

    fn sub(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (self.0, rhs.0);
        Mat2::new(a[0][0] - b[0][0], a[0][1] - b[0][1], a[1][0] - b[1][0], a[1][1] - b[1][1])
    }
}
