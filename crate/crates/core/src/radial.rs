//! Radially symmetric solvers.
//!
//! Two formulations of the same vortex:
//!
//! * the regular parts `P = u − u⁰` of the elliptic system, a two-point
//!   boundary-value problem `P'' + P'/r = A·E + φ` solved by damped Newton
//!   on a finite-volume discretization ([`solve_radial_p`]);
//! * the first-order profile system for `(f, f_NA, Q₁, Q₂)` solved by a
//!   midpoint box scheme with Newton on the whole mesh ([`solve_profile_bps`]).
//!
//! [`reconstruct_profiles`] maps the first onto the second.

use log::debug;

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::model::{background, coupling_matrix, BackgroundField, CouplingData, ModelParams};

/// Radius where the mesh switches from geometric to uniform spacing.
pub const GRADING_SWITCH: f64 = 2.0;

/// Default Newton iteration cap for both radial solvers.
pub const DEFAULT_MAX_ITER: usize = 200;

/// Strictly increasing radial nodes on `[r_min, r_max]`, geometric up to
/// `r = 2` and uniform beyond.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialMesh {
    r_min: f64,
    r_max: f64,
    nodes: Vec<f64>,
}

impl Default for RadialMesh {
    fn default() -> Self {
        RadialMesh::new(1e-4, 30.0, 4000).expect("default mesh is valid")
    }
}

impl RadialMesh {
    pub const MIN_NODES: usize = 1000;
    pub const MIN_RMAX: f64 = 20.0;

    /// Builds a mesh with `count` nodes. The split between geometric and
    /// uniform intervals is chosen so that the last geometric step matches
    /// the uniform spacing.
    pub fn new(r_min: f64, r_max: f64, count: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_min < GRADING_SWITCH) {
            return Err(Error::invalid(format!("r_min must lie in (0, {GRADING_SWITCH}), got {r_min}")));
        }
        if !(r_max.is_finite() && r_max >= Self::MIN_RMAX) {
            return Err(Error::invalid(format!("r_max must be at least {}, got {r_max}", Self::MIN_RMAX)));
        }
        if count < Self::MIN_NODES {
            return Err(Error::invalid(format!("need at least {} nodes, got {count}", Self::MIN_NODES)));
        }
        let rs = GRADING_SWITCH;
        let log_span = (rs / r_min).ln();
        let ratio = rs * log_span / (r_max - rs);
        let intervals = count - 1;
        let k = ((intervals as f64 * ratio / (1.0 + ratio)).round() as usize).clamp(1, intervals - 1);
        let m = intervals - k;
        let mut nodes = Vec::with_capacity(count);
        for i in 0..k {
            nodes.push(r_min * (log_span * i as f64 / k as f64).exp());
        }
        let h = (r_max - rs) / m as f64;
        for j in 0..m {
            nodes.push(rs + h * j as f64);
        }
        nodes.push(r_max);
        Ok(RadialMesh { r_min, r_max, nodes })
    }

    /// Mesh from explicit nodes.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 || nodes[0] <= 0.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("radial nodes must be positive and strictly increasing"));
        }
        Ok(RadialMesh { r_min: nodes[0], r_max: *nodes.last().unwrap(), nodes })
    }

    /// Every interval bisected: the spacing is halved everywhere.
    pub fn refined(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(self.r_max);
        RadialMesh { r_min: self.r_min, r_max: self.r_max, nodes }
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest ratio of neighbouring spacings.
    pub fn max_growth(&self) -> f64 {
        let h: Vec<f64> = self.nodes.windows(2).map(|w| w[1] - w[0]).collect();
        h.windows(2).map(|w| (w[1] / w[0]).max(w[0] / w[1])).fold(1.0, f64::max)
    }

    /// `∫ g(r)·2πr dr` by the trapezoid rule plus the disc `r < r_min`
    /// with `g` frozen at its first value.
    pub fn disc_integral(&self, g: &[f64]) -> f64 {
        let r = &self.nodes;
        let mut s = 0.5 * r[0] * r[0] * g[0];
        for i in 0..r.len() - 1 {
            s += 0.5 * (r[i + 1] - r[i]) * (r[i] * g[i] + r[i + 1] * g[i + 1]);
        }
        2.0 * std::f64::consts::PI * s
    }

    /// Second-order first derivative at every node. `left` replaces the
    /// value at the first node; the last node uses a one-sided formula.
    pub fn derivative(&self, v: &[f64], left: f64) -> Vec<f64> {
        let r = &self.nodes;
        let n = r.len();
        let mut d = vec![0.0; n];
        d[0] = left;
        for i in 1..n - 1 {
            let (hm, hp) = (r[i] - r[i - 1], r[i + 1] - r[i]);
            d[i] = (hm * hm * (v[i + 1] - v[i]) + hp * hp * (v[i] - v[i - 1])) / (hm * hp * (hm + hp));
        }
        let (h1, h2) = (r[n - 1] - r[n - 2], r[n - 2] - r[n - 3]);
        // Quadratic through the last three nodes, differentiated at the end.
        let c0 = (2.0 * h1 + h2) / (h1 * (h1 + h2));
        let c1 = -(h1 + h2) / (h1 * h2);
        let c2 = h1 / (h2 * (h1 + h2));
        d[n - 1] = c0 * v[n - 1] + c1 * v[n - 2] + c2 * v[n - 3];
        d
    }

    /// [`Self::derivative`] for a function smooth and even at `r = 0`: the
    /// first node uses the even quadratic `a + b·r²` through the first two
    /// nodes.
    pub fn derivative_even(&self, v: &[f64]) -> Vec<f64> {
        let r = &self.nodes;
        let b = (v[1] - v[0]) / ((r[1] - r[0]) * (r[1] + r[0]));
        self.derivative(v, 2.0 * b * r[0])
    }

    /// Index range of nodes with `r` in `[a, b]`.
    pub fn window(&self, a: f64, b: f64) -> std::ops::Range<usize> {
        let lo = self.nodes.partition_point(|&r| r < a);
        let hi = self.nodes.partition_point(|&r| r <= b);
        lo..hi
    }
}

/// Finite-volume geometry: face conductances and cell areas (per 2π).
struct Cells {
    k_plus: Vec<f64>,
    k_minus: Vec<f64>,
    vol: Vec<f64>,
}

/// Cell averages of `φᵢ = −Δu⁰ᵢ`, as minus the discrete flux balance of
/// `u⁰` with the same difference quotient the scheme applies to `P`.
///
/// The scheme is then exactly the finite-volume discretization of
/// `Δu = A·E` for `r > 0`, and `u` carries no truncation error from the
/// algebraic tail of `u⁰`. Through `r = 0` the smooth part has flux `2nᵢ`;
/// it is scaled by the quotient's relative bias on the first face so the
/// first cell sees a consistent flux pair.
fn cell_sources(cells: &Cells, bg: &BackgroundField, mesh: &RadialMesh) -> [Vec<f64>; 2] {
    let r = mesh.nodes();
    let n = r.len();
    std::array::from_fn(|c| {
        let u0: Vec<f64> = r.iter().map(|x| bg.u0(c, x * x)).collect();
        let face = |i: usize| cells.k_plus[i] * (u0[i + 1] - u0[i]);
        let r_half = 0.5 * (r[0] + r[1]);
        let exact_half = bg.r_du0_dr(c, r_half * r_half);
        let inner = if exact_half == 0.0 { 0.0 } else { bg.r_du0_dr(c, 0.0) * face(0) / exact_half };
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    return 0.0;
                }
                let inn = if i == 0 { inner } else { face(i - 1) };
                -(face(i) - inn) / cells.vol[i]
            })
            .collect()
    })
}

/// Face coefficient `1/ln(b/a)`: the flux `r·v'` is exact for `v = ln r`
/// on any mesh and agrees with `r_f/h` to second order.
#[inline]
fn log_face(a: f64, b: f64) -> f64 {
    1.0 / ((b - a) / a).ln_1p()
}

impl Cells {
    fn new(mesh: &RadialMesh) -> Self {
        let r = mesh.nodes();
        let n = r.len();
        let mut k_plus = vec![0.0; n];
        let mut k_minus = vec![0.0; n];
        let mut vol = vec![0.0; n];
        for i in 0..n {
            let lo = if i == 0 { 0.0 } else { 0.5 * (r[i - 1] + r[i]) };
            let hi = if i + 1 == n { r[i] } else { 0.5 * (r[i] + r[i + 1]) };
            vol[i] = 0.5 * (hi * hi - lo * lo);
            if i + 1 < n {
                k_plus[i] = log_face(r[i], r[i + 1]);
            }
            if i > 0 {
                k_minus[i] = log_face(r[i - 1], r[i]);
            }
        }
        Cells { k_plus, k_minus, vol }
    }

    /// Discrete `P'' + P'/r` at an interior node; zero flux through `r = 0`.
    #[inline]
    fn laplacian(&self, p: &[f64], i: usize) -> f64 {
        let mut flux = -self.k_minus[i] * (p[i] - if i > 0 { p[i - 1] } else { p[i] });
        flux += self.k_plus[i] * (p[i + 1] - p[i]);
        flux / self.vol[i]
    }
}

/// Converged regular parts and derived fields on a radial mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSolution {
    pub params: ModelParams,
    pub mesh: RadialMesh,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub iterations: usize,
    /// Weighted sup-norm residual, see [`radial_residual`].
    pub residual: f64,
}

impl RadialSolution {
    /// `u₁`, `u₂` by component index.
    pub fn u(&self, i: usize) -> &[f64] {
        if i == 0 {
            &self.u1
        } else {
            &self.u2
        }
    }

    /// `(∫E₁, ∫E₂)` over the plane.
    pub fn component_fluxes(&self) -> [f64; 2] {
        [self.mesh.disc_integral(&self.e1), self.mesh.disc_integral(&self.e2)]
    }

    /// Radial derivatives `u₁'`, `u₂'`.
    ///
    /// Inside the grading switch: analytic `u⁰'` plus differences of `P`.
    /// Beyond it `u` is differenced directly, because `u⁰'` and `P'` cancel
    /// there down to the exponentially small `u'`.
    pub fn du_dr(&self) -> Result<[Vec<f64>; 2]> {
        let bg = background(&self.params)?;
        let r = self.mesh.nodes();
        let mut out = [self.mesh.derivative_even(&self.p1), self.mesh.derivative_even(&self.p2)];
        let far = [self.mesh.derivative(&self.u1, 0.0), self.mesh.derivative(&self.u2, 0.0)];
        for (c, d) in out.iter_mut().enumerate() {
            for (i, (di, &ri)) in d.iter_mut().zip(r).enumerate() {
                *di = if ri < GRADING_SWITCH { *di + bg.du0_dr(c, ri) } else { far[c][i] };
            }
        }
        Ok(out)
    }
}

/// Residual of the discrete system `P'' + P'/r − A·E − φ` at every
/// node, weighted by `min(1, r²)`, with `φ` replaced by its cell-consistent
/// average. The last node carries the Dirichlet residual `u(r_max)`.
///
/// The weight removes the rounding floor of the Laplacian at the innermost
/// nodes, where the cell areas are of order `r_min²`.
pub fn radial_residual(
    cd: &CouplingData,
    bg: &BackgroundField,
    mesh: &RadialMesh,
    p: [&[f64]; 2],
) -> Vec<[f64; 2]> {
    let cells = Cells::new(mesh);
    let phi = cell_sources(&cells, bg, mesh);
    residual_with(&cells, &phi, cd, bg, mesh, p)
}

fn residual_with(
    cells: &Cells,
    phi: &[Vec<f64>; 2],
    cd: &CouplingData,
    bg: &BackgroundField,
    mesh: &RadialMesh,
    p: [&[f64]; 2],
) -> Vec<[f64; 2]> {
    let r = mesh.nodes();
    let n = r.len();
    (0..n)
        .map(|i| {
            if i + 1 == n {
                let r2 = r[i] * r[i];
                return [p[0][i] + bg.u0(0, r2), p[1][i] + bg.u0(1, r2)];
            }
            let r2 = r[i] * r[i];
            let e = [(2.0 * (bg.u0(0, r2) + p[0][i])).exp_m1(), (2.0 * (bg.u0(1, r2) + p[1][i])).exp_m1()];
            let ae = cd.a.apply(e);
            let w = r2.min(1.0);
            [
                w * (cells.laplacian(p[0], i) - ae[0] - phi[0][i]),
                w * (cells.laplacian(p[1], i) - ae[1] - phi[1][i]),
            ]
        })
        .collect()
}

fn sup(res: &[[f64; 2]]) -> f64 {
    res.iter().fold(0.0, |m, v| m.max(v[0].abs()).max(v[1].abs()))
}

fn merit(res: &[[f64; 2]]) -> f64 {
    res.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>().sqrt()
}

/// Solves for the regular parts with `P'(r_min) = 0` and
/// `P(r_max) = −u⁰(r_max)`, so that `u(r_max) = 0`.
pub fn solve_radial_p(
    params: &ModelParams,
    cd: &CouplingData,
    bg: &BackgroundField,
    mesh: &RadialMesh,
    tol: f64,
) -> Result<RadialSolution> {
    solve_radial_p_with(params, cd, bg, mesh, tol, DEFAULT_MAX_ITER)
}

pub fn solve_radial_p_with(
    params: &ModelParams,
    cd: &CouplingData,
    bg: &BackgroundField,
    mesh: &RadialMesh,
    tol: f64,
    max_iter: usize,
) -> Result<RadialSolution> {
    params.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol must be positive, got {tol}")));
    }
    let r = mesh.nodes();
    let n = r.len();
    let cells = Cells::new(mesh);
    let phi = cell_sources(&cells, bg, mesh);
    let rb2 = mesh.r_max() * mesh.r_max();
    let mut p = [vec![0.0; n], vec![0.0; n]];
    p[0][n - 1] = -bg.u0(0, rb2);
    p[1][n - 1] = -bg.u0(1, rb2);

    let mut res = residual_with(&cells, &phi, cd, bg, mesh, [&p[0], &p[1]]);
    let mut iterations = 0;
    let mut jac = BandMatrix::zeros(2 * n, 2, 2);
    let mut rhs = vec![0.0; 2 * n];
    while sup(&res) >= tol {
        if iterations == max_iter {
            return Err(Error::NotConverged {
                solver: "radial",
                iterations,
                residual: sup(&res),
                last_iterate: None,
            });
        }
        iterations += 1;
        jac.clear();
        for i in 0..n {
            let (a, b) = (2 * i, 2 * i + 1);
            if i + 1 == n {
                jac.add(a, a, 1.0);
                jac.add(b, b, 1.0);
                rhs[a] = -res[i][0];
                rhs[b] = -res[i][1];
                continue;
            }
            let r2 = r[i] * r[i];
            let w = r2.min(1.0);
            let s = w / cells.vol[i];
            let ex = [
                2.0 * (2.0 * (bg.u0(0, r2) + p[0][i])).exp(),
                2.0 * (2.0 * (bg.u0(1, r2) + p[1][i])).exp(),
            ];
            for (row, c) in [(a, 0usize), (b, 1usize)] {
                let diag = -(cells.k_plus[i] + if i > 0 { cells.k_minus[i] } else { 0.0 });
                jac.add(row, row, s * diag);
                jac.add(row, row + 2, s * cells.k_plus[i]);
                if i > 0 {
                    jac.add(row, row - 2, s * cells.k_minus[i]);
                }
                jac.add(row, a, -w * cd.a.get(c, 0) * ex[0]);
                jac.add(row, b, -w * cd.a.get(c, 1) * ex[1]);
                rhs[row] = -res[i][c];
            }
        }
        jac.solve_in_place(&mut rhs)?;

        let m0 = merit(&res);
        let mut t = 1.0;
        loop {
            let trial = [
                p[0].iter().enumerate().map(|(i, v)| v + t * rhs[2 * i]).collect::<Vec<_>>(),
                p[1].iter().enumerate().map(|(i, v)| v + t * rhs[2 * i + 1]).collect::<Vec<_>>(),
            ];
            let trial_res = residual_with(&cells, &phi, cd, bg, mesh, [&trial[0], &trial[1]]);
            let m1 = merit(&trial_res);
            if (m1.is_finite() && m1 <= (1.0 - 1e-4 * t) * m0) || t < 1e-6 {
                if !m1.is_finite() {
                    return Err(Error::NonFinite(0));
                }
                p = trial;
                res = trial_res;
                break;
            }
            t *= 0.5;
        }
        debug!("radial newton {iterations}: step {t}, residual {:.3e}", sup(&res));
    }

    let mut u = [vec![0.0; n], vec![0.0; n]];
    let mut e = [vec![0.0; n], vec![0.0; n]];
    for c in 0..2 {
        for i in 0..n {
            u[c][i] = bg.u0(c, r[i] * r[i]) + p[c][i];
            e[c][i] = (2.0 * u[c][i]).exp_m1();
        }
    }
    let [p1, p2] = p;
    let [u1, u2] = u;
    let [e1, e2] = e;
    Ok(RadialSolution {
        params: *params,
        mesh: mesh.clone(),
        p1,
        p2,
        u1,
        u2,
        e1,
        e2,
        iterations,
        residual: sup(&res),
    })
}

/// Profile functions `(f, f_NA, Q₁, Q₂)` on a radial mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    pub rank: u32,
    pub mesh: RadialMesh,
    pub f: Vec<f64>,
    pub f_na: Vec<f64>,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
}

impl ProfileSet {
    /// The far-field state `Q₁ = Q₂ = 1`, `f = f_NA = 0`.
    pub fn vacuum(rank: u32, mesh: &RadialMesh) -> Self {
        let n = mesh.len();
        ProfileSet {
            rank,
            mesh: mesh.clone(),
            f: vec![0.0; n],
            f_na: vec![0.0; n],
            q1: vec![1.0; n],
            q2: vec![1.0; n],
        }
    }

    /// Least-squares slope of `ln Q₁` against `ln r` on `[r_min, 10·r_min]`.
    pub fn q1_origin_exponent(&self) -> f64 {
        let r0 = self.mesh.r_min();
        let range = self.mesh.window(r0, 10.0 * r0);
        let xs: Vec<f64> = self.mesh.nodes()[range.clone()].iter().map(|r| r.ln()).collect();
        let ys: Vec<f64> = self.q1[range].iter().map(|q| q.ln()).collect();
        crate::verify::least_squares_slope(&xs, &ys)
    }
}

/// A converged profile solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSolution {
    pub profiles: ProfileSet,
    /// `Q₁ ≈ c₁·r` near the origin.
    pub c1: f64,
    /// `Q₂(0⁺)`.
    pub c2: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// The four residuals of the profile system on interval `i`, with the two
/// gauge equations multiplied by `r`, evaluated at the midpoint with
/// centred differences.
#[inline]
fn box_residual(rank: f64, r: &[f64], x: &[[f64; 4]], i: usize) -> [f64; 4] {
    let h = r[i + 1] - r[i];
    let rm = 0.5 * (r[i] + r[i + 1]);
    let (a, b) = (x[i], x[i + 1]);
    let m = |k: usize| 0.5 * (a[k] + b[k]);
    let (f, g, q1, q2) = (m(0), m(1), m(2), m(3));
    [
        (b[0] - a[0]) / h - rm * rank * (q1 * q1 + (rank - 1.0) * q2 * q2 - rank),
        (b[1] - a[1]) / h - rm * 0.5 * (q1 * q1 - q2 * q2),
        rm * (b[2] - a[2]) / h - q1 * ((rank - 1.0) * g + f) / rank,
        rm * (b[3] - a[3]) / h - q2 * (f - g) / rank,
    ]
}

fn stack(ps: &ProfileSet) -> Vec<[f64; 4]> {
    (0..ps.mesh.len()).map(|i| [ps.f[i], ps.f_na[i], ps.q1[i], ps.q2[i]]).collect()
}

/// Sup over all mesh intervals of the four profile-equation residuals.
pub fn ode_residual(ps: &ProfileSet) -> f64 {
    let x = stack(ps);
    let r = ps.mesh.nodes();
    let rank = f64::from(ps.rank);
    (0..r.len() - 1)
        .flat_map(|i| box_residual(rank, r, &x, i))
        .fold(0.0, |m, v| m.max(v.abs()))
}

/// Near-origin conditions for `f`, `f_NA` given `Q₂(r₀)`, from the series
/// `f = 1 + a·r²`, `f_NA = 1 + b·r²`.
#[inline]
fn origin_conditions(rank: f64, r0: f64, x: &[f64; 4]) -> ([f64; 2], [[f64; 4]; 2]) {
    let q2 = x[3];
    let a = 0.5 * rank * ((rank - 1.0) * q2 * q2 - rank);
    let b = -0.25 * q2 * q2;
    let r2 = r0 * r0;
    (
        [x[0] - 1.0 - a * r2, x[1] - 1.0 - b * r2],
        [
            [1.0, 0.0, 0.0, -rank * (rank - 1.0) * q2 * r2],
            [0.0, 1.0, 0.0, 0.5 * q2 * r2],
        ],
    )
}

/// Solves the profile system for the minimal vortex, `f(0) = f_NA(0) = 1`,
/// with `f = f_NA = 0` at `r_max`. The initial guess is the reconstruction
/// of the regular-part solve with `(n₁, n₂) = (1/2, 0)`.
pub fn solve_profile_bps(rank: u32, mesh: &RadialMesh, tol: f64) -> Result<ProfileSolution> {
    solve_profile_bps_with(rank, mesh, tol, DEFAULT_MAX_ITER)
}

pub fn solve_profile_bps_with(rank: u32, mesh: &RadialMesh, tol: f64, max_iter: usize) -> Result<ProfileSolution> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol must be positive, got {tol}")));
    }
    let params = ModelParams::relaxed(rank, 0.5, 0.0, 1.0)?;
    let cd = coupling_matrix(&params)?;
    let bg = background(&params)?;
    let seed = solve_radial_p(&params, &cd, &bg, mesh, 1e-10)?;
    let mut x = stack(&reconstruct_profiles(&seed)?);

    let r = mesh.nodes();
    let n = r.len();
    let nk = f64::from(rank);
    let residuals = |x: &[[f64; 4]]| -> Vec<f64> {
        let mut v = Vec::with_capacity(4 * n);
        v.extend(origin_conditions(nk, r[0], &x[0]).0);
        for i in 0..n - 1 {
            v.extend(box_residual(nk, r, x, i));
        }
        v.push(x[n - 1][0]);
        v.push(x[n - 1][1]);
        v
    };
    let interior_sup = |v: &[f64]| v.iter().fold(0.0, |m: f64, e| m.max(e.abs()));

    let mut res = residuals(&x);
    let mut iterations = 0;
    let mut jac = BandMatrix::zeros(4 * n, 5, 5);
    while interior_sup(&res) >= tol {
        if iterations == max_iter {
            return Err(Error::NotConverged {
                solver: "profile",
                iterations,
                residual: interior_sup(&res),
                last_iterate: None,
            });
        }
        iterations += 1;
        jac.clear();
        let (_, left) = origin_conditions(nk, r[0], &x[0]);
        for (row, coeffs) in left.iter().enumerate() {
            for (col, &c) in coeffs.iter().enumerate() {
                if c != 0.0 {
                    jac.add(row, col, c);
                }
            }
        }
        for i in 0..n - 1 {
            let h = r[i + 1] - r[i];
            let rm = 0.5 * (r[i] + r[i + 1]);
            let (a, b) = (x[i], x[i + 1]);
            let (f, g, q1, q2) = (0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2]), 0.5 * (a[3] + b[3]));
            // Derivatives with respect to the midpoint values (each node gets half).
            let d_mid: [[f64; 4]; 4] = [
                [0.0, 0.0, -2.0 * rm * nk * q1, -2.0 * rm * nk * (nk - 1.0) * q2],
                [0.0, 0.0, -rm * q1, rm * q2],
                [-q1 / nk, -q1 * (nk - 1.0) / nk, -((nk - 1.0) * g + f) / nk, 0.0],
                [-q2 / nk, q2 / nk, 0.0, -(f - g) / nk],
            ];
            let d_diff = [1.0 / h, 1.0 / h, rm / h, rm / h];
            let row0 = 2 + 4 * i;
            for eq in 0..4 {
                for var in 0..4 {
                    let mut left = 0.5 * d_mid[eq][var];
                    let mut right = 0.5 * d_mid[eq][var];
                    if var == eq {
                        left -= d_diff[eq];
                        right += d_diff[eq];
                    }
                    if left != 0.0 {
                        jac.add(row0 + eq, 4 * i + var, left);
                    }
                    if right != 0.0 {
                        jac.add(row0 + eq, 4 * (i + 1) + var, right);
                    }
                }
            }
        }
        jac.add(4 * n - 2, 4 * (n - 1), 1.0);
        jac.add(4 * n - 1, 4 * (n - 1) + 1, 1.0);

        let mut dx: Vec<f64> = res.iter().map(|v| -v).collect();
        jac.solve_in_place(&mut dx)?;

        let norm = |v: &[f64]| v.iter().map(|e| e * e).sum::<f64>().sqrt();
        let m0 = norm(&res);
        let mut t = 1.0;
        loop {
            let trial: Vec<[f64; 4]> = x
                .iter()
                .enumerate()
                .map(|(i, v)| std::array::from_fn(|k| v[k] + t * dx[4 * i + k]))
                .collect();
            let trial_res = residuals(&trial);
            let m1 = norm(&trial_res);
            if (m1.is_finite() && m1 <= (1.0 - 1e-4 * t) * m0) || t < 1e-6 {
                if !m1.is_finite() {
                    return Err(Error::NonFinite(0));
                }
                x = trial;
                res = trial_res;
                break;
            }
            t *= 0.5;
        }
        debug!("profile newton {iterations}: step {t}, residual {:.3e}", interior_sup(&res));
    }

    let profiles = ProfileSet {
        rank,
        mesh: mesh.clone(),
        f: x.iter().map(|v| v[0]).collect(),
        f_na: x.iter().map(|v| v[1]).collect(),
        q1: x.iter().map(|v| v[2]).collect(),
        q2: x.iter().map(|v| v[3]).collect(),
    };
    Ok(ProfileSolution {
        c1: x[0][2] / r[0],
        c2: x[0][3],
        iterations,
        residual: ode_residual(&profiles),
        profiles,
    })
}

/// Profile functions from a solution of the elliptic system:
/// `f_NA = r(u₁' − u₂')`, `f = r(u₁' + (N−1)u₂')`, `Qᵢ = e^{uᵢ}`.
pub fn reconstruct_profiles(sol: &RadialSolution) -> Result<ProfileSet> {
    let params = &sol.params;
    let bg = background(params)?;
    let r = sol.mesh.nodes();
    let nk = params.n();
    let dp = [sol.mesh.derivative_even(&sol.p1), sol.mesh.derivative_even(&sol.p2)];
    let n = r.len();
    let mut ps = ProfileSet {
        rank: params.rank,
        mesh: sol.mesh.clone(),
        f: vec![0.0; n],
        f_na: vec![0.0; n],
        q1: vec![0.0; n],
        q2: vec![0.0; n],
    };
    for i in 0..n {
        let r2 = r[i] * r[i];
        let ru1 = bg.r_du0_dr(0, r2) + r[i] * dp[0][i];
        let ru2 = bg.r_du0_dr(1, r2) + r[i] * dp[1][i];
        ps.f_na[i] = ru1 - ru2;
        ps.f[i] = ru1 + (nk - 1.0) * ru2;
        let base = r2 / (r2 + params.tau);
        ps.q1[i] = base.powf(params.n1) * sol.p1[i].exp();
        ps.q2[i] = base.powf(params.n2) * sol.p2[i].exp();
    }
    Ok(ps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_grading() {
        let m = RadialMesh::default();
        assert_eq!(m.len(), 4000);
        assert_eq!(m.nodes()[0], 1e-4);
        assert_eq!(*m.nodes().last().unwrap(), 30.0);
        assert!(m.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(m.max_growth() < 1.02);
        assert!(RadialMesh::new(1e-4, 19.0, 4000).is_err());
        assert!(RadialMesh::new(1e-4, 30.0, 999).is_err());
        assert!(RadialMesh::new(0.0, 30.0, 4000).is_err());
        let f = m.refined();
        assert_eq!(f.len(), 7999);
        assert_eq!(f.nodes()[2], m.nodes()[1]);
    }

    #[test]
    fn derivative_is_exact_on_quadratics() {
        let m = RadialMesh::new(1e-3, 20.0, 1000).unwrap();
        let v: Vec<f64> = m.nodes().iter().map(|r| 3.0 * r * r - r + 2.0).collect();
        let d = m.derivative(&v, f64::NAN);
        assert!(d[0].is_nan());
        for (i, (&di, &r)) in d.iter().zip(m.nodes()).enumerate().skip(1) {
            let exact = 6.0 * r - 1.0;
            assert!((di - exact).abs() < 1e-7 * (1.0 + exact.abs()), "node {i}: {di} vs {exact}");
        }
    }

    #[test]
    fn disc_integral_of_gaussian() {
        let m = RadialMesh::default();
        let g: Vec<f64> = m.nodes().iter().map(|r| (-r * r).exp()).collect();
        assert!((m.disc_integral(&g) - std::f64::consts::PI).abs() < 1e-4);
    }

    #[test]
    fn vacuum_is_exact() {
        let p = ModelParams::relaxed(4, 0.0, 0.0, 1.0).unwrap();
        let cd = coupling_matrix(&p).unwrap();
        let bg = background(&p).unwrap();
        let mesh = RadialMesh::new(1e-4, 20.0, 1000).unwrap();
        let sol = solve_radial_p(&p, &cd, &bg, &mesh, 1e-12).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.u1.iter().chain(&sol.u2).all(|&u| u == 0.0));
    }

    #[test]
    fn vacuum_profiles_have_zero_residual() {
        let mesh = RadialMesh::new(1e-4, 20.0, 1000).unwrap();
        assert_eq!(ode_residual(&ProfileSet::vacuum(3, &mesh)), 0.0);
    }

    #[test]
    fn non_convergence_is_reported() {
        let p = ModelParams::new(2, 1.0, 1.0, 1.0).unwrap();
        let cd = coupling_matrix(&p).unwrap();
        let bg = background(&p).unwrap();
        let mesh = RadialMesh::new(1e-4, 20.0, 1000).unwrap();
        let err = solve_radial_p_with(&p, &cd, &bg, &mesh, 1e-10, 1).unwrap_err();
        assert!(matches!(err, Error::NotConverged { iterations: 1, .. }));
    }

    #[test]
    fn log_faces_are_exact_for_ln_r() {
        let mesh = RadialMesh::default().refined();
        let cells = Cells::new(&mesh);
        let r = mesh.nodes();
        for i in (0..r.len() - 1).step_by(97) {
            let flux = cells.k_plus[i] * (r[i + 1].ln() - r[i].ln());
            assert!((flux - 1.0).abs() < 1e-10, "face {i}: {flux}");
        }
    }

    #[test]
    fn sources_carry_the_background_flux() {
        // Σ Vᵢ·φ̄ᵢ telescopes to the flux of u⁰ through the outermost face,
        // which for the exact field is 2n·τ/(r² + τ) subtracted from 2n.
        let p = ModelParams::new(3, 1.0, 2.0, 1.5).unwrap();
        let bg = background(&p).unwrap();
        let mesh = RadialMesh::default();
        let cells = Cells::new(&mesh);
        let phi = cell_sources(&cells, &bg, &mesh);
        let r = mesh.nodes();
        let n = r.len();
        let rf = 0.5 * (r[n - 2] + r[n - 1]);
        for (c, nc) in [(0, 1.0), (1, 2.0)] {
            let total: f64 = (0..n).map(|i| cells.vol[i] * phi[c][i]).sum();
            let exact = 2.0 * nc * (1.0 - p.tau / (rf * rf + p.tau));
            assert!((total - exact).abs() < 1e-4 * exact, "component {c}: {total} vs {exact}");
            assert!(phi[c].iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn minimal_vortex_fluxes_are_quantized() {
        let p = ModelParams::new(2, 1.0, 1.0, 1.0).unwrap();
        let cd = coupling_matrix(&p).unwrap();
        let bg = background(&p).unwrap();
        let sol = solve_radial_p(&p, &cd, &bg, &RadialMesh::new(1e-4, 25.0, 2000).unwrap(), 1e-10).unwrap();
        // A·(1/2, 1/2) = (1, 1), so each ∫Eᵢ is −2π.
        for flux in sol.component_fluxes() {
            assert!((flux + 2.0 * std::f64::consts::PI).abs() < 1e-3, "{flux}");
        }
        // Equal multiplicities at N = 2 make the system swap-symmetric.
        assert!(sol.p1.iter().zip(&sol.p2).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn profile_solution_meets_the_boundary_data() {
        let mesh = RadialMesh::new(1e-4, 25.0, 2000).unwrap();
        let sol = solve_profile_bps(2, &mesh, 1e-9).unwrap();
        let ps = &sol.profiles;
        assert!(sol.residual < 1e-8);
        assert!((ps.f[0] - 1.0).abs() < 1e-6 && (ps.f_na[0] - 1.0).abs() < 1e-6);
        let last = mesh.len() - 1;
        assert!(ps.f[last].abs() < 1e-12 && ps.f_na[last].abs() < 1e-12);
        assert!(ps.q1.iter().all(|&q| q > 0.0) && ps.q2.iter().all(|&q| q > 0.0));
        assert!((sol.c1 - ps.q1[0] / mesh.r_min()).abs() < 1e-3 * sol.c1);
    }
}
