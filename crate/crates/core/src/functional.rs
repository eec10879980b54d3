//! Discrete action functional on a uniform planar grid.
//!
//! In the variables `w = L⁻¹·P` (so `u₁ = u⁰₁ + w₁`, `u₂ = u⁰₂ + a·w₁ + w₂`
//! with `a = 1 − 1/(2α)`) the system is the Euler–Lagrange equation of
//!
//! ```text
//! I(w) = ∫ c_g1|∇w₁|² + c_g2|∇w₂|²
//!        + e^{2u⁰₂}(e^{2(a·w₁ + w₂)} − 1) + c_e1·e^{2u⁰₁}(e^{2w₁} − 1)
//!        + c_ψ1·ψ₁·w₁ − c_l1·w₁ + c_ψ2·ψ₂·w₂ − 2w₂
//! ```
//!
//! The grid version sums the gradient terms over forward-difference edges
//! and the potential over interior nodes, each weighted by the cell area.
//! [`Functional::gradient`] and [`Functional::hessian_apply`] are the exact
//! derivatives of that discrete sum, so the Euler–Lagrange residual of the
//! grid problem is `gradient / h²` and reduces to the five-point Laplacian
//! form of the transformed equations.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{BackgroundField, FunctionalCoefficients};

/// Default cap on exponent arguments `2w₁` and `2(a·w₁ + w₂)`.
pub const DEFAULT_EXPONENT_CAP: f64 = 300.0;

/// Uniform grid on the box `[−L, L]²` with `n` points per side.
///
/// Nodes sit at `(i − (n − 1)/2)·h` with `h = 2L/(n − 1)`. For even `n` the
/// lattice is offset by `h/2` from the origin, so no node lies on a vortex
/// centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarGrid {
    half_width: f64,
    points: usize,
    h: f64,
}

impl PlanarGrid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(half_width: f64, points_per_side: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::invalid(format!("box half-width must be positive, got {half_width}")));
        }
        if points_per_side < Self::MIN_POINTS {
            return Err(Error::invalid(format!(
                "need at least {} points per side, got {points_per_side}",
                Self::MIN_POINTS
            )));
        }
        let h = 2.0 * half_width / (points_per_side - 1) as f64;
        Ok(PlanarGrid { half_width, points: points_per_side, h })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_side(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn node_count(&self) -> usize {
        self.points * self.points
    }

    /// True when no node sits at the origin.
    pub fn origin_offset(&self) -> bool {
        self.points.is_multiple_of(2)
    }

    /// Coordinate of column (or row) `i`. Exactly antisymmetric under
    /// `i → n − 1 − i`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        let m = (self.points - 1) as f64;
        (2.0 * i as f64 - m) / m * self.half_width
    }

    /// Flat index of column `i`, row `j`.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.points + i
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.points || j + 1 == self.points
    }

    pub fn interior_count(&self) -> usize {
        (self.points - 2) * (self.points - 2)
    }
}

/// The two unknowns `(w₁, w₂)` at every grid node, boundary included.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

impl FieldPair {
    pub fn zeros(grid: &PlanarGrid) -> Self {
        let n = grid.node_count();
        FieldPair { w1: vec![0.0; n], w2: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.w1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w1.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.w1.iter().chain(&self.w2).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_diff(&self, other: &FieldPair) -> f64 {
        let d1 = self.w1.iter().zip(&other.w1).map(|(a, b)| (a - b).abs());
        let d2 = self.w2.iter().zip(&other.w2).map(|(a, b)| (a - b).abs());
        d1.chain(d2).fold(0.0, f64::max)
    }

    /// `self + t·dir`.
    pub fn stepped(&self, dir: &FieldPair, t: f64) -> FieldPair {
        let step = |a: &[f64], d: &[f64]| a.iter().zip(d).map(|(x, y)| x + t * y).collect::<Vec<_>>();
        FieldPair { w1: step(&self.w1, &dir.w1), w2: step(&self.w2, &dir.w2) }
    }

    pub fn scaled(&self, s: f64) -> FieldPair {
        FieldPair {
            w1: self.w1.iter().map(|v| s * v).collect(),
            w2: self.w2.iter().map(|v| s * v).collect(),
        }
    }
}

/// Background data at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeData {
    /// `2u⁰ᵢ`, `−∞` at a vortex centre.
    pub two_u0: [f64; 2],
    /// `e^{2u⁰ᵢ}` in the rational power form.
    pub e2u0: [f64; 2],
    pub psi: [f64; 2],
}

impl NodeData {
    pub fn from_background(bg: &BackgroundField, r2: f64) -> Self {
        NodeData {
            two_u0: [2.0 * bg.u0(0, r2), 2.0 * bg.u0(1, r2)],
            e2u0: [bg.exp_two_u0(0, r2), bg.exp_two_u0(1, r2)],
            psi: [bg.psi1(r2), bg.psi2(r2)],
        }
    }

    /// Node data with `u⁰ = 0`, `ψ = 0`.
    pub const VACUUM: NodeData = NodeData { two_u0: [0.0; 2], e2u0: [1.0; 2], psi: [0.0; 2] };
}

/// `eˣ − 1 − x` without cancellation for small `x`.
#[inline]
pub(crate) fn expm1_minus_x(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        x2 * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x * (1.0 / 120.0))))
    } else {
        x.exp_m1() - x
    }
}

impl FunctionalCoefficients {
    /// Mixed exponent `s = a·w₁ + w₂`, so `u₂ = u⁰₂ + s`.
    #[inline]
    pub fn mixed(&self, w1: f64, w2: f64) -> f64 {
        self.a_mix * w1 + w2
    }

    /// Potential energy density at a node.
    #[inline]
    pub fn density(&self, nd: &NodeData, w1: f64, w2: f64) -> f64 {
        let s = self.mixed(w1, w2);
        nd.e2u0[1] * (2.0 * s).exp_m1()
            + self.c_exp1 * nd.e2u0[0] * (2.0 * w1).exp_m1()
            + (self.c_psi1 * nd.psi[0] - self.c_lin1) * w1
            + (self.c_psi2 * nd.psi[1] - 2.0) * w2
    }

    /// `(E₁, E₂) = (e^{2u₁} − 1, e^{2u₂} − 1)`.
    #[inline]
    pub fn e_values(&self, nd: &NodeData, w1: f64, w2: f64) -> [f64; 2] {
        let s = self.mixed(w1, w2);
        [(nd.two_u0[0] + 2.0 * w1).exp_m1(), (nd.two_u0[1] + 2.0 * s).exp_m1()]
    }

    /// Gradient of [`Self::density`]. Uses `c_l1 = 2a + 2c_e1` to write the
    /// constant terms through `E`, which vanishes exactly at the vacuum.
    #[inline]
    pub fn density_gradient(&self, nd: &NodeData, w1: f64, w2: f64) -> [f64; 2] {
        let [e1, e2] = self.e_values(nd, w1, w2);
        [
            2.0 * self.a_mix * e2 + 2.0 * self.c_exp1 * e1 + self.c_psi1 * nd.psi[0],
            2.0 * e2 + self.c_psi2 * nd.psi[1],
        ]
    }

    /// Hessian of [`Self::density`] as `(h11, h12, h22)`.
    #[inline]
    pub fn density_hessian(&self, nd: &NodeData, w1: f64, w2: f64) -> [f64; 3] {
        let [e1, e2] = self.e_values(nd, w1, w2);
        self.hessian_from_e(e1, e2)
    }

    #[inline]
    fn hessian_from_e(&self, e1: f64, e2: f64) -> [f64; 3] {
        let x2 = 4.0 * (e2 + 1.0);
        let x1 = 4.0 * self.c_exp1 * (e1 + 1.0);
        [self.a_mix * self.a_mix * x2 + x1, self.a_mix * x2, x2]
    }

    /// `density(w + t·d) − density(w)` without cancellation against the
    /// value of the density itself.
    #[inline]
    pub fn density_change(&self, nd: &NodeData, w1: f64, w2: f64, d1: f64, d2: f64, t: f64) -> f64 {
        let [e1, e2] = self.e_values(nd, w1, w2);
        let xs = 2.0 * t * self.mixed(d1, d2);
        let x1 = 2.0 * t * d1;
        e2 * xs.exp_m1()
            + expm1_minus_x(xs)
            + self.c_exp1 * (e1 * x1.exp_m1() + expm1_minus_x(x1))
            + t * (self.c_psi1 * nd.psi[0] * d1 + self.c_psi2 * nd.psi[1] * d2)
    }
}

/// The discrete functional bound to a grid and a background.
pub struct Functional {
    grid: PlanarGrid,
    fc: FunctionalCoefficients,
    nodes: Vec<NodeData>,
    exponent_cap: f64,
}

impl Functional {
    pub fn new(grid: &PlanarGrid, bg: &BackgroundField, fc: &FunctionalCoefficients) -> Self {
        let n = grid.points_per_side();
        let nodes = (0..grid.node_count())
            .map(|k| {
                let (x, y) = (grid.coord(k % n), grid.coord(k / n));
                NodeData::from_background(bg, x * x + y * y)
            })
            .collect();
        Functional { grid: *grid, fc: *fc, nodes, exponent_cap: DEFAULT_EXPONENT_CAP }
    }

    /// Functional with `u⁰ = 0`, `ψ = 0` at every node.
    pub fn vacuum(grid: &PlanarGrid, fc: &FunctionalCoefficients) -> Self {
        Functional {
            grid: *grid,
            fc: *fc,
            nodes: vec![NodeData::VACUUM; grid.node_count()],
            exponent_cap: DEFAULT_EXPONENT_CAP,
        }
    }

    pub fn with_exponent_cap(mut self, cap: f64) -> Self {
        self.exponent_cap = cap;
        self
    }

    pub fn grid(&self) -> &PlanarGrid {
        &self.grid
    }

    pub fn coefficients(&self) -> &FunctionalCoefficients {
        &self.fc
    }

    pub fn node(&self, k: usize) -> &NodeData {
        &self.nodes[k]
    }

    #[inline]
    fn check(&self, k: usize, w1: f64, w2: f64) -> Result<()> {
        if !(w1.is_finite() && w2.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        let worst = (2.0 * w1).max(2.0 * self.fc.mixed(w1, w2));
        if worst > self.exponent_cap {
            return Err(Error::ExponentOverflow { value: worst, cap: self.exponent_cap, node: k });
        }
        Ok(())
    }

    fn check_all(&self, fp: &FieldPair) -> Result<()> {
        let n = self.grid.points_per_side();
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let k = self.grid.index(i, j);
                self.check(k, fp.w1[k], fp.w2[k])?;
            }
        }
        Ok(())
    }

    pub fn energy(&self, fp: &FieldPair) -> Result<f64> {
        let n = self.grid.points_per_side();
        let area = self.grid.cell_area();
        let (c1, c2) = (self.fc.c_grad1, self.fc.c_grad2);
        let rows: Vec<f64> = (1..n - 1)
            .into_par_iter()
            .map(|j| {
                let mut grad = 0.0;
                let mut pot = 0.0;
                for i in 0..n - 1 {
                    let k = self.grid.index(i, j);
                    let (a, b) = (fp.w1[k + 1] - fp.w1[k], fp.w2[k + 1] - fp.w2[k]);
                    grad += c1 * a * a + c2 * b * b;
                }
                let mut vertical = |jj: usize| {
                    for i in 1..n - 1 {
                        let k = self.grid.index(i, jj);
                        let (a, b) = (fp.w1[k + n] - fp.w1[k], fp.w2[k + n] - fp.w2[k]);
                        grad += c1 * a * a + c2 * b * b;
                    }
                };
                vertical(j - 1);
                if j == n - 2 {
                    vertical(j);
                }
                for i in 1..n - 1 {
                    let k = self.grid.index(i, j);
                    self.check(k, fp.w1[k], fp.w2[k])?;
                    pot += self.fc.density(&self.nodes[k], fp.w1[k], fp.w2[k]);
                }
                Ok(grad + area * pot)
            })
            .collect::<Result<_>>()?;
        Ok(rows.iter().sum())
    }

    /// Exact derivative of [`Self::energy`] with respect to every interior
    /// node value; boundary entries are zero.
    pub fn gradient(&self, fp: &FieldPair) -> Result<FieldPair> {
        self.check_all(fp)?;
        let n = self.grid.points_per_side();
        let area = self.grid.cell_area();
        let (c1, c2) = (2.0 * self.fc.c_grad1, 2.0 * self.fc.c_grad2);
        let mut g = FieldPair::zeros(&self.grid);
        g.w1.par_chunks_mut(n)
            .zip(g.w2.par_chunks_mut(n))
            .enumerate()
            .filter(|(j, _)| *j >= 1 && *j + 1 < n)
            .for_each(|(j, (g1, g2))| {
                for i in 1..n - 1 {
                    let k = self.grid.index(i, j);
                    let lap1 = 4.0 * fp.w1[k] - ((fp.w1[k - 1] + fp.w1[k + 1]) + (fp.w1[k - n] + fp.w1[k + n]));
                    let lap2 = 4.0 * fp.w2[k] - ((fp.w2[k - 1] + fp.w2[k + 1]) + (fp.w2[k - n] + fp.w2[k + n]));
                    let dg = self.fc.density_gradient(&self.nodes[k], fp.w1[k], fp.w2[k]);
                    g1[i] = c1 * lap1 + area * dg[0];
                    g2[i] = c2 * lap2 + area * dg[1];
                }
            });
        Ok(g)
    }

    /// Hessian of the discrete energy at `fp` applied to `dir`. Boundary
    /// entries of `dir` are ignored (treated as zero).
    pub fn hessian_apply(&self, fp: &FieldPair, dir: &FieldPair) -> Result<FieldPair> {
        let op = self.hessian_at(fp)?;
        let mut out = FieldPair::zeros(&self.grid);
        op.apply(dir, &mut out);
        Ok(out)
    }

    /// Freezes the pointwise Hessian at `fp` for repeated application.
    pub fn hessian_at(&self, fp: &FieldPair) -> Result<HessianOperator> {
        self.check_all(fp)?;
        let blocks = (0..self.grid.node_count())
            .into_par_iter()
            .map(|k| {
                let [e1, e2] = self.fc.e_values(&self.nodes[k], fp.w1[k], fp.w2[k]);
                self.fc.hessian_from_e(e1, e2)
            })
            .collect();
        Ok(HessianOperator {
            grid: self.grid,
            c1: 2.0 * self.fc.c_grad1,
            c2: 2.0 * self.fc.c_grad2,
            area: self.grid.cell_area(),
            blocks,
        })
    }

    /// `energy(fp + t·dir) − energy(fp)`, accurate even when the change is
    /// far below the rounding level of the energy itself.
    pub fn energy_change(&self, fp: &FieldPair, dir: &FieldPair, t: f64) -> Result<f64> {
        let n = self.grid.points_per_side();
        let area = self.grid.cell_area();
        let (c1, c2) = (self.fc.c_grad1, self.fc.c_grad2);
        let edge = |c: f64, dw: f64, dd: f64| c * t * dd * (2.0 * dw + t * dd);
        let rows: Vec<f64> = (1..n - 1)
            .into_par_iter()
            .map(|j| {
                let mut grad = 0.0;
                let mut pot = 0.0;
                // Boundary entries of dir do not move.
                let d = |v: &[f64], k: usize| {
                    let (i, jj) = (k % n, k / n);
                    if self.grid.is_boundary(i, jj) {
                        0.0
                    } else {
                        v[k]
                    }
                };
                for i in 0..n - 1 {
                    let k = self.grid.index(i, j);
                    grad += edge(c1, fp.w1[k + 1] - fp.w1[k], d(&dir.w1, k + 1) - d(&dir.w1, k));
                    grad += edge(c2, fp.w2[k + 1] - fp.w2[k], d(&dir.w2, k + 1) - d(&dir.w2, k));
                }
                let mut vertical = |jj: usize| {
                    for i in 1..n - 1 {
                        let k = self.grid.index(i, jj);
                        grad += edge(c1, fp.w1[k + n] - fp.w1[k], d(&dir.w1, k + n) - d(&dir.w1, k));
                        grad += edge(c2, fp.w2[k + n] - fp.w2[k], d(&dir.w2, k + n) - d(&dir.w2, k));
                    }
                };
                vertical(j - 1);
                if j == n - 2 {
                    vertical(j);
                }
                for i in 1..n - 1 {
                    let k = self.grid.index(i, j);
                    let (n1, n2) = (fp.w1[k] + t * dir.w1[k], fp.w2[k] + t * dir.w2[k]);
                    self.check(k, n1, n2)?;
                    pot += self
                        .fc
                        .density_change(&self.nodes[k], fp.w1[k], fp.w2[k], dir.w1[k], dir.w2[k], t);
                }
                Ok(grad + area * pot)
            })
            .collect::<Result<_>>()?;
        Ok(rows.iter().sum())
    }

    /// `(E₁, E₂)` at every node for the physical fields `u = u⁰ + L·w`.
    pub fn e_fields(&self, fp: &FieldPair) -> (Vec<f64>, Vec<f64>) {
        (0..fp.len())
            .map(|k| {
                let e = self.fc.e_values(&self.nodes[k], fp.w1[k], fp.w2[k]);
                (e[0], e[1])
            })
            .unzip()
    }
}

/// Hessian of the discrete energy frozen at one point.
pub struct HessianOperator {
    grid: PlanarGrid,
    c1: f64,
    c2: f64,
    area: f64,
    /// `(h11, h12, h22)` of the potential density per node.
    blocks: Vec<[f64; 3]>,
}

impl HessianOperator {
    pub fn apply(&self, dir: &FieldPair, out: &mut FieldPair) {
        let n = self.grid.points_per_side();
        let d = |v: &[f64], i: usize, j: usize| {
            if self.grid.is_boundary(i, j) {
                0.0
            } else {
                v[self.grid.index(i, j)]
            }
        };
        out.w1
            .par_chunks_mut(n)
            .zip(out.w2.par_chunks_mut(n))
            .enumerate()
            .for_each(|(j, (o1, o2))| {
                if j == 0 || j + 1 == n {
                    o1.fill(0.0);
                    o2.fill(0.0);
                    return;
                }
                o1[0] = 0.0;
                o2[0] = 0.0;
                o1[n - 1] = 0.0;
                o2[n - 1] = 0.0;
                for i in 1..n - 1 {
                    let k = self.grid.index(i, j);
                    let (x1, x2) = (dir.w1[k], dir.w2[k]);
                    let nb1 = (d(&dir.w1, i - 1, j) + d(&dir.w1, i + 1, j))
                        + (d(&dir.w1, i, j - 1) + d(&dir.w1, i, j + 1));
                    let nb2 = (d(&dir.w2, i - 1, j) + d(&dir.w2, i + 1, j))
                        + (d(&dir.w2, i, j - 1) + d(&dir.w2, i, j + 1));
                    let [h11, h12, h22] = self.blocks[k];
                    o1[i] = self.c1 * (4.0 * x1 - nb1) + self.area * (h11 * x1 + h12 * x2);
                    o2[i] = self.c2 * (4.0 * x2 - nb2) + self.area * (h12 * x1 + h22 * x2);
                }
            });
    }

    /// Applies the inverse of the per-node 2×2 diagonal block.
    pub fn block_jacobi(&self, r: &FieldPair, out: &mut FieldPair) {
        let n = self.grid.points_per_side();
        out.w1
            .par_chunks_mut(n)
            .zip(out.w2.par_chunks_mut(n))
            .enumerate()
            .for_each(|(j, (o1, o2))| {
                for i in 0..n {
                    let k = self.grid.index(i, j);
                    if self.grid.is_boundary(i, j) {
                        o1[i] = 0.0;
                        o2[i] = 0.0;
                        continue;
                    }
                    let [h11, h12, h22] = self.blocks[k];
                    let a = 4.0 * self.c1 + self.area * h11;
                    let b = self.area * h12;
                    let c = 4.0 * self.c2 + self.area * h22;
                    let det = a * c - b * b;
                    o1[i] = (c * r.w1[k] - b * r.w2[k]) / det;
                    o2[i] = (a * r.w2[k] - b * r.w1[k]) / det;
                }
            });
    }
}

/// Deterministic inner product: per-row partial sums, added in row order.
pub fn dot(grid: &PlanarGrid, a: &FieldPair, b: &FieldPair) -> f64 {
    let n = grid.points_per_side();
    let rows: Vec<f64> = a
        .w1
        .par_chunks(n)
        .zip(a.w2.par_chunks(n))
        .zip(b.w1.par_chunks(n).zip(b.w2.par_chunks(n)))
        .map(|((a1, a2), (b1, b2))| {
            a1.iter().zip(b1).map(|(x, y)| x * y).sum::<f64>() + a2.iter().zip(b2).map(|(x, y)| x * y).sum::<f64>()
        })
        .collect();
    rows.iter().sum()
}
