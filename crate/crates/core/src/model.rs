//! Problem parameters, coupling matrices and background fields.
//!
//! The coupling matrix of the system is
//!
//! ```text
//!     ⎡ α       β     ⎤        α = 3/2 − 1/(2N)
//! A = ⎢               ⎥        β = N − 3/2 + 1/(2N)
//!     ⎣ α − ½   β + ½ ⎦
//! ```
//!
//! It is neither symmetric nor definite. Two devices recover structure:
//! the Crout split `A = L·R` (used by the variational formulation) and the
//! diagonal symmetrizer `B` with `M = B·A` symmetric positive definite (used
//! by the decay analysis). All of it is closed form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat2::Mat2;

/// A problem instance: gauge rank `N`, vortex multiplicities and the
/// background scale `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Gauge-group rank `N ≥ 2`.
    pub rank: u32,
    pub n1: f64,
    pub n2: f64,
    pub tau: f64,
    /// Require positive integer multiplicities. When off, any finite
    /// non-negative multiplicity is accepted.
    pub theorem_mode: bool,
}

impl ModelParams {
    /// Theorem-mode parameters (positive integer multiplicities).
    pub fn new(rank: u32, n1: f64, n2: f64, tau: f64) -> Result<Self> {
        let p = ModelParams { rank, n1, n2, tau, theorem_mode: true };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with theorem mode switched off: multiplicities may be zero
    /// or fractional.
    pub fn relaxed(rank: u32, n1: f64, n2: f64, tau: f64) -> Result<Self> {
        let p = ModelParams { rank, n1, n2, tau, theorem_mode: false };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank < 2 {
            return Err(Error::invalid(format!("N must be at least 2, got {}", self.rank)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        for (name, n) in [("n1", self.n1), ("n2", self.n2)] {
            if !n.is_finite() || n < 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {n}")));
            }
            if self.theorem_mode && (n <= 0.0 || n.fract() != 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be a positive integer in theorem mode, got {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn multiplicities(&self) -> [f64; 2] {
        [self.n1, self.n2]
    }

    pub fn is_vacuum(&self) -> bool {
        self.n1 == 0.0 && self.n2 == 0.0
    }

    pub fn n(&self) -> f64 {
        f64::from(self.rank)
    }
}

/// `α` and `β` for rank `N`.
pub fn alpha_beta(rank: u32) -> (f64, f64) {
    let n = f64::from(rank);
    (1.5 - 0.5 / n, n - 1.5 + 0.5 / n)
}

/// Coupling coefficients and the matrices built from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingData {
    pub alpha: f64,
    pub beta: f64,
    pub a: Mat2,
    /// Unit lower-triangular Crout factor.
    pub l: Mat2,
    /// Upper-triangular Crout factor.
    pub r: Mat2,
    /// `L₂₁ = (2N − 1)/(3N − 1)`.
    pub gamma: f64,
    /// Diagonal symmetrizer, `B·A` symmetric.
    pub b: Mat2,
    /// `M = B·A`, symmetric positive definite.
    pub m: Mat2,
}

/// Builds `A`, its Crout factors and the symmetrized matrix `M = B·A`.
///
/// `L` and `R` are the closed forms, not the output of a factorization
/// routine.
pub fn coupling_matrix(params: &ModelParams) -> Result<CouplingData> {
    if params.rank < 2 {
        return Err(Error::invalid(format!("N must be at least 2, got {}", params.rank)));
    }
    let n = params.n();
    let (alpha, beta) = alpha_beta(params.rank);
    let a = Mat2::new(alpha, beta, alpha - 0.5, beta + 0.5);
    let gamma = (2.0 * n - 1.0) / (3.0 * n - 1.0);
    let l = Mat2::new(1.0, 0.0, gamma, 1.0);
    let r = Mat2::new(alpha, beta, 0.0, n * n / (3.0 * n - 1.0));
    let b1 = (2.0 * alpha - 1.0) / beta;
    let b = Mat2::diag(b1, 2.0);
    // Entries written out so that M is symmetric bit for bit.
    let off = 2.0 * alpha - 1.0;
    let m = Mat2::new((2.0 * alpha * alpha - alpha) / beta, off, off, 2.0 * beta + 1.0);
    Ok(CouplingData { alpha, beta, a, l, r, gamma, b, m })
}

impl CouplingData {
    pub fn a_inverse(&self) -> Mat2 {
        // det A = N/2 > 0 for every admissible N.
        self.a.inverse().expect("A is nonsingular")
    }

    /// `D = M·B⁻¹ = B·A·B⁻¹`.
    pub fn d(&self) -> Mat2 {
        let b_inv = Mat2::diag(1.0 / self.b.get(0, 0), 1.0 / self.b.get(1, 1));
        self.m * b_inv
    }
}

/// Eigen-data of `M` and `D` and the decay/flux constants `m, p, q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConstants {
    /// Eigenvalues of `M`, `λ₁ ≥ λ₂`.
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda0: f64,
    /// Orthogonal, `Oᵀ·M·O = diag(λ₁, λ₂)`.
    pub o: Mat2,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda: f64,
    /// Rows are left eigenvectors of `D`, so `T·D·T⁻¹ = diag(λ₃, λ₄)`.
    pub t: Mat2,
    pub m: f64,
    pub p: f64,
    pub q: f64,
}

pub fn spectral_constants(cd: &CouplingData) -> SpectralConstants {
    let (lambda1, lambda2, o) = cd.m.symmetric_eigen();
    let lambda0 = lambda1.min(lambda2);

    let (lambda3, lambda4) = d_eigenvalues(cd);
    let lambda = lambda3.min(lambda4);

    let t = t_right_eigenvectors(cd, lambda3, lambda4)
        .inverse()
        .expect("eigenvectors of D for distinct eigenvalues are independent");

    let (alpha, beta) = (cd.alpha, cd.beta);
    let m = (2.0 * alpha - 1.0).powi(2) / (2.0 * beta * (lambda3 - alpha));
    let p = (2.0 * alpha - 1.0) / beta;
    let q = 4.0 * (lambda4 - alpha) / (2.0 * alpha - 1.0);

    SpectralConstants { lambda1, lambda2, lambda0, o, lambda3, lambda4, lambda, t, m, p, q }
}

/// `λ₃, λ₄` from the closed form `(2N + 1 ± 2√(N² − N + 1/4))/4`.
fn d_eigenvalues(cd: &CouplingData) -> (f64, f64) {
    let n = cd.alpha + cd.beta;
    let root = (n * n - n + 0.25).sqrt();
    ((2.0 * n + 1.0 + 2.0 * root) / 4.0, (2.0 * n + 1.0 - 2.0 * root) / 4.0)
}

/// Matrix whose columns are right eigenvectors of `D` for `λ₃`, `λ₄`:
///
/// ```text
/// ⎡ (2α−1)/(2(λ₃−α))   1              ⎤
/// ⎣ 1                  2(λ₄−α)/(2α−1) ⎦
/// ```
///
/// It satisfies `S⁻¹·D·S = diag(λ₃, λ₄)`; [`SpectralConstants::t`] is its
/// inverse.
pub fn t_right_eigenvectors(cd: &CouplingData, lambda3: f64, lambda4: f64) -> Mat2 {
    let alpha = cd.alpha;
    Mat2::new(
        (2.0 * alpha - 1.0) / (2.0 * (lambda3 - alpha)),
        1.0,
        1.0,
        2.0 * (lambda4 - alpha) / (2.0 * alpha - 1.0),
    )
}

/// Coefficient rows of the two quantized integrands: row 1 is `(m, 2)·A`,
/// row 2 is `(p, q)·A`.
pub fn flux_coefficients(cd: &CouplingData, sc: &SpectralConstants) -> Mat2 {
    let (alpha, beta) = (cd.alpha, cd.beta);
    let (m, p, q) = (sc.m, sc.p, sc.q);
    Mat2::new(
        (m + 2.0) * alpha - 1.0,
        (m + 2.0) * beta + 1.0,
        (p + q) * alpha - q / 2.0,
        (p + q) * beta + q / 2.0,
    )
}

/// Exact values of the two quantized integrals:
/// `−4π(m·n₁ + 2·n₂)` and `−4π(p·n₁ + q·n₂)`.
pub fn flux_targets(params: &ModelParams, sc: &SpectralConstants) -> [f64; 2] {
    let (n1, n2) = (params.n1, params.n2);
    // Adding zero turns a negative zero into a positive one.
    [-4.0 * PI * (sc.m * n1 + 2.0 * n2) + 0.0, -4.0 * PI * (sc.p * n1 + sc.q * n2) + 0.0]
}

/// `(∫E₁, ∫E₂) = −4π·A⁻¹·(n₁, n₂)`, forced by integrating the equations for
/// the regular parts over the plane.
pub fn component_flux_targets(params: &ModelParams, cd: &CouplingData) -> [f64; 2] {
    let v = cd.a_inverse().apply([params.n1, params.n2]);
    [-4.0 * PI * v[0] + 0.0, -4.0 * PI * v[1] + 0.0]
}

/// Coefficients of the discrete action functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalCoefficients {
    /// `1 − 1/(2α)`, equal to `γ`.
    pub a_mix: f64,
    pub c_grad1: f64,
    pub c_grad2: f64,
    pub c_exp1: f64,
    pub c_psi1: f64,
    pub c_lin1: f64,
    pub c_psi2: f64,
}

impl FunctionalCoefficients {
    pub fn new(cd: &CouplingData) -> Self {
        let (a, b) = (cd.alpha, cd.beta);
        FunctionalCoefficients {
            a_mix: 1.0 - 1.0 / (2.0 * a),
            c_grad1: (2.0 * a - 1.0) / (2.0 * a * b),
            c_grad2: 2.0 * a / (a + b),
            c_exp1: (2.0 * a - 1.0) / (2.0 * b),
            c_psi1: (2.0 * a - 1.0) / (a * b),
            c_lin1: (2.0 * a - 1.0) * (a + b) / (a * b),
            c_psi2: 4.0 * a / (a + b),
        }
    }
}

/// The singular background `u⁰ᵢ = −nᵢ·ln(1 + τ/|x|²)` that carries the delta
/// sources, and the smooth densities `φᵢ = −Δu⁰ᵢ` away from the origin.
///
/// Every evaluator takes the squared radius `r² = |x|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundField {
    pub params: ModelParams,
    /// Coefficient of `φ₁` in `ψ₂ = (1/(2α) − 1)·φ₁ + φ₂`.
    psi2_mix: f64,
}

pub fn background(params: &ModelParams) -> Result<BackgroundField> {
    params.validate()?;
    let (alpha, _) = alpha_beta(params.rank);
    Ok(BackgroundField { params: *params, psi2_mix: 1.0 / (2.0 * alpha) - 1.0 })
}

impl BackgroundField {
    #[inline]
    fn mult(&self, i: usize) -> f64 {
        match i {
            0 => self.params.n1,
            1 => self.params.n2,
            _ => panic!("component index {i} out of range"),
        }
    }

    /// `u⁰ᵢ`; `−∞` at the origin when `nᵢ > 0`.
    #[inline]
    pub fn u0(&self, i: usize, r2: f64) -> f64 {
        let n = self.mult(i);
        if n == 0.0 {
            0.0
        } else {
            -n * (self.params.tau / r2).ln_1p()
        }
    }

    /// `e^{2u⁰ᵢ} = (r²/(r² + τ))^{2nᵢ}`, regular at the origin.
    #[inline]
    pub fn exp_two_u0(&self, i: usize, r2: f64) -> f64 {
        let n = self.mult(i);
        if n == 0.0 {
            1.0
        } else {
            (r2 / (r2 + self.params.tau)).powf(2.0 * n)
        }
    }

    /// `d u⁰ᵢ / dr = 2nᵢτ / (r(r² + τ))`.
    #[inline]
    pub fn du0_dr(&self, i: usize, r: f64) -> f64 {
        let n = self.mult(i);
        if n == 0.0 {
            0.0
        } else {
            2.0 * n * self.params.tau / (r * (r * r + self.params.tau))
        }
    }

    /// `r·du⁰ᵢ/dr`, finite at the origin (limit `2nᵢ`).
    #[inline]
    pub fn r_du0_dr(&self, i: usize, r2: f64) -> f64 {
        2.0 * self.mult(i) * self.params.tau / (r2 + self.params.tau)
    }

    #[inline]
    pub fn phi(&self, i: usize, r2: f64) -> f64 {
        let t = self.params.tau + r2;
        4.0 * self.mult(i) * self.params.tau / (t * t)
    }

    #[inline]
    pub fn psi1(&self, r2: f64) -> f64 {
        self.phi(0, r2)
    }

    #[inline]
    pub fn psi2(&self, r2: f64) -> f64 {
        self.psi2_mix * self.phi(0, r2) + self.phi(1, r2)
    }

    /// `∫_{|x|<R} φᵢ = 4πnᵢ·R²/(R² + τ)`.
    pub fn phi_disc_integral(&self, i: usize, radius: f64) -> f64 {
        let r2 = radius * radius;
        4.0 * PI * self.mult(i) * r2 / (r2 + self.params.tau)
    }
}
