//! Executable checks of the existence result: quantized fluxes, decay rates,
//! equation residuals and agreement between the two discretizations.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat2::Mat2;
use crate::model::{
    component_flux_targets, flux_coefficients, flux_targets, BackgroundField, CouplingData, ModelParams,
    SpectralConstants,
};
use crate::planar::{extract_radial_slice, PlanarSolution};
use crate::radial::{radial_residual, RadialSolution};

/// Values below this are treated as rounding noise by the decay fit.
pub const DECAY_FLOOR: f64 = 1e-13;

/// Default decay-fit window.
pub const DEFAULT_WINDOW: [f64; 2] = [10.0, 14.0];

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// A computed integral against its exact value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxRecord {
    pub value: f64,
    pub target: f64,
    pub abs_error: f64,
    /// Relative to `|target|`, or to the largest target of the pair when
    /// this one is zero.
    pub rel_error: f64,
}

fn records(values: [f64; 2], targets: [f64; 2]) -> [FluxRecord; 2] {
    let big = targets[0].abs().max(targets[1].abs());
    std::array::from_fn(|i| {
        let abs_error = (values[i] - targets[i]).abs();
        let scale = if targets[i] != 0.0 {
            targets[i].abs()
        } else if big > 0.0 {
            big
        } else {
            1.0
        };
        FluxRecord { value: values[i], target: targets[i], abs_error, rel_error: abs_error / scale }
    })
}

/// Anything that can integrate `E₁`, `E₂` over the plane.
pub trait FieldSolution {
    fn params(&self) -> &ModelParams;
    fn component_fluxes(&self) -> [f64; 2];
}

impl FieldSolution for RadialSolution {
    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn component_fluxes(&self) -> [f64; 2] {
        RadialSolution::component_fluxes(self)
    }
}

impl FieldSolution for PlanarSolution {
    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn component_fluxes(&self) -> [f64; 2] {
        PlanarSolution::component_fluxes(self)
    }
}

/// The two quantized integrals.
pub fn flux_integrals(sol: &impl FieldSolution, cd: &CouplingData, sc: &SpectralConstants) -> [FluxRecord; 2] {
    let coef = flux_coefficients(cd, sc);
    records(coef.apply(sol.component_fluxes()), flux_targets(sol.params(), sc))
}

/// `∫E₁`, `∫E₂` against `−4π·A⁻¹·n`.
pub fn component_flux(sol: &impl FieldSolution, cd: &CouplingData) -> [FluxRecord; 2] {
    records(sol.component_fluxes(), component_flux_targets(sol.params(), cd))
}

/// Fitted exponential decay of one tracked quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRecord {
    pub quantity: String,
    /// Window actually used, after dropping values under the rounding floor.
    pub window: [f64; 2],
    /// `None` when fewer than three samples survive the floor.
    pub fitted_rate: Option<f64>,
    pub stated_bound: f64,
    /// Rate from the linearization of the derivative system, when it
    /// differs from the stated bound.
    pub alternative_bound: Option<f64>,
    pub linearized_rate: f64,
}

fn fit_rate(name: &str, r: &[f64], q: &[f64], window: [f64; 2]) -> (Option<f64>, [f64; 2]) {
    let inside: Vec<usize> = (0..r.len()).filter(|&i| r[i] >= window[0] && r[i] <= window[1]).collect();
    let kept: Vec<usize> = inside.iter().copied().filter(|&i| q[i].abs() > DECAY_FLOOR).collect();
    if kept.is_empty() {
        debug!("{name}: every sample under {DECAY_FLOOR:e}, no fit");
    } else if kept.len() < inside.len() {
        warn!("{name}: {} of {} samples under {DECAY_FLOOR:e}, window shrunk", inside.len() - kept.len(), inside.len());
    }
    // Keep the leading run so that the fit never straddles a gap.
    let run: Vec<usize> = kept.iter().copied().enumerate().take_while(|(k, i)| *i == kept[0] + k).map(|(_, i)| i).collect();
    if run.len() < 3 {
        return (None, window);
    }
    let xs: Vec<f64> = run.iter().map(|&i| r[i]).collect();
    let ys: Vec<f64> = run.iter().map(|&i| q[i].abs().ln()).collect();
    (Some(-least_squares_slope(&xs, &ys)), [xs[0], *xs.last().unwrap()])
}

/// Decay fits from radial samples of `u` and `u'`.
///
/// Tracked quantities: `|v|` with `v = (p·u₁, 2·u₂)`; the combined vector
/// `(m·u₁ + 2u₂, p·u₁ + q·u₂)`; and the two derivative combinations
/// `|(m·u₁ + 2u₂)'|`, `|(p·u₁ + q·u₂)'|`.
pub fn decay_fit_samples(
    r: &[f64],
    u: [&[f64]; 2],
    du: [&[f64]; 2],
    sc: &SpectralConstants,
    window: [f64; 2],
) -> Vec<DecayRecord> {
    let (m, p, q) = (sc.m, sc.p, sc.q);
    let n = r.len();
    let field: Vec<f64> = (0..n).map(|i| (p * u[0][i]).hypot(2.0 * u[1][i])).collect();
    let combined: Vec<f64> = (0..n).map(|i| (m * u[0][i] + 2.0 * u[1][i]).hypot(p * u[0][i] + q * u[1][i])).collect();
    let grad1: Vec<f64> = (0..n).map(|i| m * du[0][i] + 2.0 * du[1][i]).collect();
    let grad2: Vec<f64> = (0..n).map(|i| p * du[0][i] + q * du[1][i]).collect();
    let field_bound = sc.lambda0.sqrt();
    let grad_bound = sc.lambda.sqrt();
    let mut out = Vec::new();
    for (name, values, bound, alt) in [
        ("field", &field, field_bound, None),
        ("field_combined", &combined, field_bound, None),
        ("gradient_1", &grad1, grad_bound, Some((2.0 * sc.lambda).sqrt())),
        ("gradient_2", &grad2, grad_bound, Some((2.0 * sc.lambda).sqrt())),
    ] {
        let (fitted_rate, used) = fit_rate(name, r, values, window);
        out.push(DecayRecord {
            quantity: name.to_string(),
            window: used,
            fitted_rate,
            stated_bound: bound,
            alternative_bound: alt,
            linearized_rate: 1.0,
        });
    }
    out
}

pub fn decay_fit(sol: &RadialSolution, sc: &SpectralConstants, window: [f64; 2]) -> Result<Vec<DecayRecord>> {
    if sol.mesh.r_max() < window[1] {
        return Err(Error::invalid(format!("decay window ends at {} beyond r_max {}", window[1], sol.mesh.r_max())));
    }
    let du = sol.du_dr()?;
    Ok(decay_fit_samples(sol.mesh.nodes(), [&sol.u1, &sol.u2], [&du[0], &du[1]], sc, window))
}

/// Sup of the weighted radial residual, the quantity the solver drives to
/// zero.
pub fn pde_residual_radial(sol: &RadialSolution, cd: &CouplingData, bg: &BackgroundField) -> f64 {
    radial_residual(cd, bg, &sol.mesh, [&sol.p1, &sol.p2])
        .iter()
        .fold(0.0, |m, v| m.max(v[0].abs()).max(v[1].abs()))
}

/// Sup over interior nodes of `|Δₕ P − A·E − φ|` with the five-point
/// Laplacian used by the functional.
pub fn pde_residual_planar(sol: &PlanarSolution, cd: &CouplingData, bg: &BackgroundField) -> f64 {
    let grid = &sol.grid;
    let n = grid.points_per_side();
    let inv_h2 = 1.0 / grid.cell_area();
    let mut worst: f64 = 0.0;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let k = grid.index(i, j);
            let r2 = sol.r2(k);
            let ae = cd.a.apply([sol.e1[k], sol.e2[k]]);
            for (c, p) in [&sol.p1, &sol.p2].into_iter().enumerate() {
                let lap = ((p[k - 1] + p[k + 1]) + (p[k - n] + p[k + n]) - 4.0 * p[k]) * inv_h2;
                worst = worst.max((lap - ae[c] - bg.phi(c, r2)).abs());
            }
        }
    }
    worst
}

/// Sup difference between radial and planar `u` on a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub sup_difference: f64,
    pub window: [f64; 2],
}

/// Compares the planar slice with the radial solution interpolated to the
/// slice radii, on `r ∈ [0.5, min(10, L − 5)]`.
pub fn cross_validate(
    radial: &RadialSolution,
    planar: &PlanarSolution,
    bg: &BackgroundField,
) -> Result<CrossValidation> {
    if radial.params != planar.params {
        return Err(Error::invalid("cross-validation needs both solutions for the same parameters"));
    }
    let window = [0.5, 10f64.min(planar.grid.half_width() - 5.0)];
    let r = radial.mesh.nodes();
    let mut sup: f64 = 0.0;
    for s in extract_radial_slice(planar, bg) {
        if s.r < window[0] || s.r > window[1] {
            continue;
        }
        let hi = r.partition_point(|&x| x < s.r).clamp(1, r.len() - 1);
        let t = (s.r - r[hi - 1]) / (r[hi] - r[hi - 1]);
        let lerp = |v: &[f64]| v[hi - 1] + t * (v[hi] - v[hi - 1]);
        let r2 = s.r * s.r;
        let u1 = bg.u0(0, r2) + lerp(&radial.p1);
        let u2 = bg.u0(1, r2) + lerp(&radial.p2);
        sup = sup.max((u1 - s.u1).abs()).max((u2 - s.u2).abs());
    }
    Ok(CrossValidation { sup_difference: sup, window })
}

/// Closed-form constants echoed in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsRecord {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub a: Mat2,
    pub l: Mat2,
    pub r: Mat2,
    pub b: Mat2,
    pub m_matrix: Mat2,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda: f64,
    pub t: Mat2,
    pub m: f64,
    pub p: f64,
    pub q: f64,
}

impl ConstantsRecord {
    pub fn new(cd: &CouplingData, sc: &SpectralConstants) -> Self {
        ConstantsRecord {
            alpha: cd.alpha,
            beta: cd.beta,
            gamma: cd.gamma,
            a: cd.a,
            l: cd.l,
            r: cd.r,
            b: cd.b,
            m_matrix: cd.m,
            lambda0: sc.lambda0,
            lambda1: sc.lambda1,
            lambda2: sc.lambda2,
            lambda3: sc.lambda3,
            lambda4: sc.lambda4,
            lambda: sc.lambda,
            t: sc.t,
            m: sc.m,
            p: sc.p,
            q: sc.q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub pde_sup: f64,
    pub ode_sup: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uniqueness {
    pub sup_difference: Option<f64>,
}

/// Everything checked for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationReport {
    pub params: ModelParams,
    pub constants: ConstantsRecord,
    pub flux: [FluxRecord; 2],
    pub component_flux: [FluxRecord; 2],
    pub decay: Vec<DecayRecord>,
    pub residuals: Residuals,
    pub uniqueness: Uniqueness,
    pub cross_validation: Option<CrossValidation>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{coupling_matrix, spectral_constants};
    use std::f64::consts::PI;

    #[test]
    fn slope_of_a_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 - 0.75 * x).collect();
        assert!((least_squares_slope(&xs, &ys) + 0.75).abs() < 1e-15);
    }

    #[test]
    fn records_normalize_zero_targets() {
        let r = records([-16.0 * PI, 0.1], [-16.0 * PI, 0.0]);
        assert_eq!(r[0].abs_error, 0.0);
        assert!((r[1].rel_error - 0.1 / (16.0 * PI)).abs() < 1e-15);
        let v = records([0.0, 0.0], [0.0, 0.0]);
        assert_eq!(v[0].rel_error, 0.0);
    }

    #[test]
    fn targets_recombine_from_component_identity() {
        for rank in 2..=16 {
            for n1 in 1..=4 {
                for n2 in 1..=4 {
                    let p = ModelParams::new(rank, n1 as f64, n2 as f64, 1.0).unwrap();
                    let cd = coupling_matrix(&p).unwrap();
                    let sc = spectral_constants(&cd);
                    let comp = component_flux_targets(&p, &cd);
                    let via = flux_coefficients(&cd, &sc).apply(comp);
                    let t = flux_targets(&p, &sc);
                    for i in 0..2 {
                        assert!((via[i] - t[i]).abs() < 1e-10 * (1.0 + t[i].abs()), "N={rank} n=({n1},{n2})");
                    }
                }
            }
        }
    }

    #[test]
    fn decay_of_pure_exponentials() {
        let p = ModelParams::new(3, 1.0, 1.0, 1.0).unwrap();
        let sc = spectral_constants(&coupling_matrix(&p).unwrap());
        let r: Vec<f64> = (0..400).map(|i| 5.0 + 0.05 * i as f64).collect();
        let u: Vec<f64> = r.iter().map(|x| -(-1.3 * x).exp()).collect();
        let du: Vec<f64> = r.iter().map(|x| 1.3 * (-1.3 * x).exp()).collect();
        let recs = decay_fit_samples(&r, [&u, &u], [&du, &du], &sc, DEFAULT_WINDOW);
        for rec in &recs {
            assert!((rec.fitted_rate.unwrap() - 1.3).abs() < 1e-9, "{rec:?}");
        }
        assert!((recs[0].stated_bound - sc.lambda0.sqrt()).abs() < 1e-15);
        assert!((recs[2].alternative_bound.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decay_floor_drops_noise() {
        let p = ModelParams::new(2, 1.0, 1.0, 1.0).unwrap();
        let sc = spectral_constants(&coupling_matrix(&p).unwrap());
        let r: Vec<f64> = (0..100).map(|i| 10.0 + 0.04 * i as f64).collect();
        let zero = vec![0.0; r.len()];
        let recs = decay_fit_samples(&r, [&zero, &zero], [&zero, &zero], &sc, DEFAULT_WINDOW);
        assert!(recs.iter().all(|d| d.fitted_rate.is_none()));
    }
}
