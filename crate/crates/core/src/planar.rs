//! Planar solver: Newton–CG minimization of the discrete functional.
//!
//! Each outer step solves `H·d = −g` by block-Jacobi preconditioned
//! conjugate gradients with an inexact (Eisenstat–Walker) tolerance, then
//! backtracks along `d` until the energy decrease satisfies Armijo's rule.
//! The energy change is evaluated directly rather than as a difference of
//! two energies, so the line search stays meaningful near convergence.

use log::{debug, warn};
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::functional::{dot, FieldPair, Functional, PlanarGrid};
use crate::model::{BackgroundField, CouplingData, FunctionalCoefficients, ModelParams};

/// Values imposed on the box boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// `w = 0` on the boundary, so `u = u⁰ ≈ −n·τ/L²` there.
    ZeroW,
    /// `w` chosen so that `u = 0` on the boundary, the vacuum value the
    /// solution approaches at infinity.
    #[default]
    Vacuum,
}

/// Starting field for the interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InitialGuess {
    #[default]
    Zero,
    /// Independent uniform values in `[−amplitude, amplitude]`.
    Random { seed: u64, amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarOptions {
    /// Bound on the sup norm of the per-node Euler–Lagrange residual.
    pub tol: f64,
    pub max_iter: usize,
    pub max_cg_iter: usize,
    pub boundary: BoundaryMode,
    pub init: InitialGuess,
}

impl Default for PlanarOptions {
    fn default() -> Self {
        PlanarOptions {
            tol: 1e-8,
            max_iter: 100,
            max_cg_iter: 5000,
            boundary: BoundaryMode::Vacuum,
            init: InitialGuess::Zero,
        }
    }
}

/// A planar solve and the physical fields derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarSolution {
    pub params: ModelParams,
    pub grid: PlanarGrid,
    pub boundary: BoundaryMode,
    pub w: FieldPair,
    /// `P = L·w`.
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Sup norm over interior nodes of `gradient / h²`.
    pub final_gradient_norm: f64,
    pub final_energy: f64,
    /// Energy after each accepted step, starting from the initial field.
    pub energy_history: Vec<f64>,
    pub cg_iterations: usize,
}

/// Boundary values of `w` for the chosen mode.
fn boundary_values(grid: &PlanarGrid, bg: &BackgroundField, cd: &CouplingData, mode: BoundaryMode, w: &mut FieldPair) {
    let n = grid.points_per_side();
    for j in 0..n {
        for i in 0..n {
            if !grid.is_boundary(i, j) {
                continue;
            }
            let k = grid.index(i, j);
            let (x, y) = (grid.coord(i), grid.coord(j));
            let r2 = x * x + y * y;
            match mode {
                BoundaryMode::ZeroW => {
                    w.w1[k] = 0.0;
                    w.w2[k] = 0.0;
                }
                BoundaryMode::Vacuum => {
                    // w = L⁻¹·(−u⁰)
                    let (a, b) = (bg.u0(0, r2), bg.u0(1, r2));
                    w.w1[k] = -a;
                    w.w2[k] = -b + cd.gamma * a;
                }
            }
        }
    }
}

fn el_residual_sup(grid: &PlanarGrid, g: &FieldPair) -> f64 {
    g.sup_norm() / grid.cell_area()
}

/// Minimizes the discrete functional and returns the unique minimizer.
pub fn solve_planar(
    params: &ModelParams,
    cd: &CouplingData,
    bg: &BackgroundField,
    grid: &PlanarGrid,
    opts: &PlanarOptions,
) -> Result<PlanarSolution> {
    params.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::invalid(format!("tol must be positive, got {}", opts.tol)));
    }
    let fc = FunctionalCoefficients::new(cd);
    let functional = Functional::new(grid, bg, &fc);
    let n = grid.points_per_side();

    let mut w = FieldPair::zeros(grid);
    if let InitialGuess::Random { seed, amplitude } = opts.init {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let k = grid.index(i, j);
                w.w1[k] = rng.gen_range(-amplitude..=amplitude);
                w.w2[k] = rng.gen_range(-amplitude..=amplitude);
            }
        }
    }
    boundary_values(grid, bg, cd, opts.boundary, &mut w);

    let mut energy = functional.energy(&w)?;
    let mut history = vec![energy];
    let mut g = functional.gradient(&w)?;
    let mut res = el_residual_sup(grid, &g);
    let mut iterations = 0;
    let mut cg_total = 0;

    // Work vectors for CG.
    let mut d = FieldPair::zeros(grid);
    let mut r = FieldPair::zeros(grid);
    let mut z = FieldPair::zeros(grid);
    let mut p = FieldPair::zeros(grid);
    let mut hp = FieldPair::zeros(grid);

    while res >= opts.tol {
        if iterations == opts.max_iter {
            return Err(Error::NotConverged {
                solver: "planar",
                iterations,
                residual: res,
                last_iterate: Some(Box::new(w)),
            });
        }
        iterations += 1;
        let hess = functional.hessian_at(&w)?;

        // Preconditioned CG for H·d = −g.
        let eta = res.sqrt().min(0.5);
        let g_norm = dot(grid, &g, &g).sqrt();
        zero(&mut d);
        for (rv, gv) in r.w1.iter_mut().zip(&g.w1).chain(r.w2.iter_mut().zip(&g.w2)) {
            *rv = -gv;
        }
        hess.block_jacobi(&r, &mut z);
        copy(&z, &mut p);
        let mut rz = dot(grid, &r, &z);
        let mut cg = 0;
        while cg < opts.max_cg_iter {
            hess.apply(&p, &mut hp);
            let php = dot(grid, &p, &hp);
            if !(php > 0.0) {
                warn!("non-positive curvature {php:e} in CG; using current direction");
                break;
            }
            let a = rz / php;
            axpy(a, &p, &mut d);
            axpy(-a, &hp, &mut r);
            cg += 1;
            if dot(grid, &r, &r).sqrt() <= eta * g_norm {
                break;
            }
            hess.block_jacobi(&r, &mut z);
            let rz_new = dot(grid, &r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pv, zv) in p.w1.iter_mut().zip(&z.w1).chain(p.w2.iter_mut().zip(&z.w2)) {
                *pv = zv + beta * *pv;
            }
        }
        cg_total += cg;
        if cg == 0 {
            // Degenerate system: fall back to steepest descent.
            for (dv, rv) in d.w1.iter_mut().zip(&r.w1).chain(d.w2.iter_mut().zip(&r.w2)) {
                *dv = *rv;
            }
        }

        let slope = dot(grid, &g, &d);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            match functional.energy_change(&w, &d, t) {
                Ok(change) if change <= 1e-4 * t * slope => {
                    accepted = Some(change);
                    break;
                }
                Ok(_) | Err(Error::ExponentOverflow { .. }) => t *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some(change) = accepted else {
            return Err(Error::NotConverged {
                solver: "planar line search",
                iterations,
                residual: res,
                last_iterate: Some(Box::new(w)),
            });
        };
        for (wv, dv) in w.w1.iter_mut().zip(&d.w1).chain(w.w2.iter_mut().zip(&d.w2)) {
            *wv += t * dv;
        }
        energy += change;
        history.push(energy);
        g = functional.gradient(&w)?;
        res = el_residual_sup(grid, &g);
        debug!("planar newton {iterations}: cg {cg}, step {t}, residual {res:.3e}, energy {energy:.12e}");
    }

    let mut sol = PlanarSolution::from_fields(params, cd, bg, grid, opts.boundary, w)?;
    sol.iterations = iterations;
    sol.final_gradient_norm = res;
    sol.energy_history = history;
    sol.cg_iterations = cg_total;
    Ok(sol)
}

fn zero(v: &mut FieldPair) {
    v.w1.fill(0.0);
    v.w2.fill(0.0);
}

fn copy(src: &FieldPair, dst: &mut FieldPair) {
    dst.w1.copy_from_slice(&src.w1);
    dst.w2.copy_from_slice(&src.w2);
}

fn axpy(a: f64, x: &FieldPair, y: &mut FieldPair) {
    for (yv, xv) in y.w1.iter_mut().zip(&x.w1).chain(y.w2.iter_mut().zip(&x.w2)) {
        *yv += a * xv;
    }
}

impl PlanarSolution {
    /// Derives `P`, `u`, `E`, the energy and the residual from a field `w`.
    /// The result is marked converged when the residual is finite; callers
    /// judge it against their own tolerance.
    pub fn from_fields(
        params: &ModelParams,
        cd: &CouplingData,
        bg: &BackgroundField,
        grid: &PlanarGrid,
        boundary: BoundaryMode,
        w: FieldPair,
    ) -> Result<Self> {
        if w.len() != grid.node_count() || w.w2.len() != grid.node_count() {
            return Err(Error::invalid("field size does not match the grid"));
        }
        let functional = Functional::new(grid, bg, &FunctionalCoefficients::new(cd));
        let final_energy = functional.energy(&w)?;
        let res = el_residual_sup(grid, &functional.gradient(&w)?);
        let (e1, e2) = functional.e_fields(&w);
        let nodes = grid.node_count();
        let mut sol = PlanarSolution {
            params: *params,
            grid: *grid,
            boundary,
            p1: w.w1.clone(),
            p2: (0..nodes).map(|k| cd.gamma * w.w1[k] + w.w2[k]).collect(),
            u1: vec![0.0; nodes],
            u2: vec![0.0; nodes],
            e1,
            e2,
            w,
            converged: res.is_finite(),
            iterations: 0,
            final_gradient_norm: res,
            final_energy,
            energy_history: vec![final_energy],
            cg_iterations: 0,
        };
        for k in 0..nodes {
            let r2 = sol.r2(k);
            sol.u1[k] = bg.u0(0, r2) + sol.p1[k];
            sol.u2[k] = bg.u0(1, r2) + sol.p2[k];
        }
        Ok(sol)
    }

    /// Squared distance of node `k` from the origin.
    pub fn r2(&self, k: usize) -> f64 {
        let n = self.grid.points_per_side();
        let (x, y) = (self.grid.coord(k % n), self.grid.coord(k / n));
        x * x + y * y
    }

    /// `(∫E₁, ∫E₂)` by the cell sum over interior nodes.
    pub fn component_fluxes(&self) -> [f64; 2] {
        let n = self.grid.points_per_side();
        let mut s = [0.0; 2];
        for j in 1..n - 1 {
            let mut row = [0.0; 2];
            for i in 1..n - 1 {
                let k = self.grid.index(i, j);
                row[0] += self.e1[k];
                row[1] += self.e2[k];
            }
            s[0] += row[0];
            s[1] += row[1];
        }
        [s[0] * self.grid.cell_area(), s[1] * self.grid.cell_area()]
    }

    /// Largest deviation from the reflections `x → −x`, `y → −y` and
    /// `x ↔ y`, which generate the symmetries of the square.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.grid.points_per_side();
        let mut worst: f64 = 0.0;
        for field in [&self.w.w1, &self.w.w2] {
            for j in 0..n {
                for i in 0..n {
                    let v = field[self.grid.index(i, j)];
                    worst = worst
                        .max((v - field[self.grid.index(n - 1 - i, j)]).abs())
                        .max((v - field[self.grid.index(i, n - 1 - j)]).abs())
                        .max((v - field[self.grid.index(j, i)]).abs());
                }
            }
        }
        worst
    }

    pub fn max_u(&self) -> f64 {
        self.u1.iter().chain(&self.u2).cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One sample of a radial slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicePoint {
    pub r: f64,
    pub u1: f64,
    pub u2: f64,
}

/// `u` along the positive x-axis at the node columns.
///
/// The regular part `P` is interpolated linearly across the rows adjacent
/// to `y = 0` and the exact background `u⁰(x)` is added back, so the
/// logarithmic core is not smeared by the interpolation.
pub fn extract_radial_slice(sol: &PlanarSolution, bg: &BackgroundField) -> Vec<SlicePoint> {
    let grid = &sol.grid;
    let n = grid.points_per_side();
    let rows: Vec<usize> = if n.is_multiple_of(2) { vec![n / 2 - 1, n / 2] } else { vec![(n - 1) / 2] };
    let weight = 1.0 / rows.len() as f64;
    (0..n)
        .filter(|&i| grid.coord(i) > 0.0)
        .map(|i| {
            let x = grid.coord(i);
            let mut p = [0.0; 2];
            for &j in &rows {
                let k = grid.index(i, j);
                p[0] += weight * sol.p1[k];
                p[1] += weight * sol.p2[k];
            }
            let r2 = x * x;
            SlicePoint { r: x, u1: bg.u0(0, r2) + p[0], u2: bg.u0(1, r2) + p[1] }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{background, coupling_matrix};

    #[test]
    fn vacuum_converges_immediately() {
        let p = ModelParams::relaxed(2, 0.0, 0.0, 1.0).unwrap();
        let cd = coupling_matrix(&p).unwrap();
        let bg = background(&p).unwrap();
        let grid = PlanarGrid::new(5.0, 32).unwrap();
        let sol = solve_planar(&p, &cd, &bg, &grid, &PlanarOptions::default()).unwrap();
        assert!(sol.iterations <= 2);
        assert_eq!(sol.final_energy, 0.0);
        assert_eq!(sol.w.sup_norm(), 0.0);
        let slice = extract_radial_slice(&sol, &bg);
        assert!(slice.iter().all(|s| s.u1 == 0.0 && s.u2 == 0.0));
    }

    #[test]
    fn small_grid_solve_is_symmetric_and_monotone() {
        let p = ModelParams::new(2, 1.0, 1.0, 1.0).unwrap();
        let cd = coupling_matrix(&p).unwrap();
        let bg = background(&p).unwrap();
        let grid = PlanarGrid::new(8.0, 64).unwrap();
        let sol = solve_planar(&p, &cd, &bg, &grid, &PlanarOptions::default()).unwrap();
        assert!(sol.final_gradient_norm < 1e-8);
        assert!(sol.energy_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(sol.symmetry_defect() < 1e-9);
        assert!(sol.max_u() <= 0.05);
        assert!(sol.e1.iter().chain(&sol.e2).all(|&e| e >= -1.0));
    }

    #[test]
    fn zero_w_boundary_slice_ends_at_background() {
        let p = ModelParams::new(2, 1.0, 1.0, 1.0).unwrap();
        let cd = coupling_matrix(&p).unwrap();
        let bg = background(&p).unwrap();
        let grid = PlanarGrid::new(6.0, 48).unwrap();
        let opts = PlanarOptions { boundary: BoundaryMode::ZeroW, ..Default::default() };
        let sol = solve_planar(&p, &cd, &bg, &grid, &opts).unwrap();
        let last = *extract_radial_slice(&sol, &bg).last().unwrap();
        assert_eq!(last.r, 6.0);
        assert_eq!(last.u1, bg.u0(0, 36.0));
        assert!((last.u1 + 1.0 / 36.0).abs() < 1e-3);
    }
}
