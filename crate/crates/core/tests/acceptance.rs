//! Acceptance criteria, one test per criterion.
//!
//! Every test prints a single `PASS` or `FAIL` line with the measured values
//! and then asserts. The tests take a shared lock so that wall-clock budgets
//! are not inflated by other tests running on the same cores.

use std::f64::consts::PI;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use vortexlab::functional::{FieldPair, Functional, PlanarGrid};
use vortexlab::model::{background, coupling_matrix, spectral_constants, FunctionalCoefficients, ModelParams};
use vortexlab::planar::{solve_planar, InitialGuess, PlanarOptions, PlanarSolution};
use vortexlab::radial::{ode_residual, solve_profile_bps, solve_radial_p, RadialMesh, RadialSolution};
use vortexlab::verify::{component_flux, cross_validate, decay_fit, flux_integrals, pde_residual_radial, DEFAULT_WINDOW};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Collects named checks and prints the verdict line.
struct Verdict {
    id: u32,
    title: &'static str,
    checks: Vec<(String, bool)>,
}

impl Verdict {
    fn new(id: u32, title: &'static str) -> Self {
        Verdict { id, title, checks: Vec::new() }
    }

    fn check(&mut self, ok: bool, detail: String) {
        self.checks.push((detail, ok));
    }

    fn finish(self) {
        let ok = self.checks.iter().all(|(_, ok)| *ok);
        let details: Vec<String> =
            self.checks.iter().map(|(d, ok)| format!("[{}] {d}", if *ok { "ok" } else { "FAILED" })).collect();
        println!(
            "{} criterion {} ({}): {}",
            if ok { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            details.join("; ")
        );
        assert!(ok, "criterion {} failed", self.id);
    }
}

fn within_budget(v: &mut Verdict, elapsed: Duration, budget: Duration) {
    v.check(elapsed < budget, format!("time {:.2?} < {:.0?}", elapsed, budget));
}

fn radial(rank: u32, n1: f64, n2: f64, mesh: &RadialMesh) -> RadialSolution {
    let params = ModelParams::new(rank, n1, n2, 1.0).unwrap();
    let cd = coupling_matrix(&params).unwrap();
    let bg = background(&params).unwrap();
    solve_radial_p(&params, &cd, &bg, mesh, 1e-10).unwrap()
}

#[test]
fn criterion_1_algebra() {
    let _g = serial();
    let start = Instant::now();
    let mut v = Verdict::new(1, "algebra suite");
    let tol = 1e-12;
    let mut worst = [0.0f64; 10];
    let mut gamma_ok = true;
    let mut pd_ok = true;
    for rank in 2..=64u32 {
        let n = f64::from(rank);
        let params = ModelParams::new(rank, 1.0, 1.0, 1.0).unwrap();
        let cd = coupling_matrix(&params).unwrap();
        let sc = spectral_constants(&cd);
        let rows = cd.a.row_sums();
        worst[0] = worst[0].max((rows[0] - n).abs()).max((rows[1] - n).abs());
        worst[1] = worst[1].max((cd.l * cd.r).max_abs_diff(&cd.a));
        gamma_ok &= cd.gamma > 0.5 && cd.gamma < 2.0 / 3.0;
        let m = cd.b * cd.a;
        let scale = m.get(0, 0).abs().max(m.get(1, 1).abs());
        worst[8] = worst[8].max((m.get(0, 1) - m.get(1, 0)).abs() / scale);
        worst[9] = worst[9].max(m.max_abs_diff(&cd.m) / scale);
        // Positive definiteness from trace and determinant.
        pd_ok &= sc.lambda0 > 0.0 && m.det() > 0.0 && m.trace() > 0.0;
        worst[2] = worst[2].max((sc.lambda3 - n).abs());
        worst[3] = worst[3].max((sc.lambda4 - 0.5).abs());
        // Eigenvalues of D straight from its characteristic polynomial.
        let (d1, d2) = cd.d().real_eigenvalues().unwrap();
        let (hi, lo) = (d1.max(d2), d1.min(d2));
        worst[4] = worst[4].max((hi - n).abs() / n).max((lo - 0.5).abs());
        worst[5] = worst[5].max((sc.m - 2.0 / ((n - 1.0) * (n - 1.0))).abs());
        worst[6] = worst[6].max((sc.p - 2.0 / (n - 1.0)).abs());
        worst[7] = worst[7].max((sc.q + 2.0).abs());
    }
    let names =
        ["row sums = N", "L·R = A", "λ₃ = N", "λ₄ = 1/2", "eig(D)", "m", "p", "q = −2", "B·A symmetric", "B·A = M"];
    for (name, w) in names.iter().zip(worst) {
        v.check(w < tol, format!("{name} err {w:.1e}"));
    }
    v.check(gamma_ok, "γ ∈ (1/2, 2/3)".into());
    v.check(pd_ok, "M positive definite, λ₀ > 0".into());
    let cd2 = coupling_matrix(&ModelParams::new(2, 1.0, 1.0, 1.0).unwrap()).unwrap();
    let a2 = [[cd2.a.get(0, 0), cd2.a.get(0, 1)], [cd2.a.get(1, 0), cd2.a.get(1, 1)]];
    v.check(a2 == [[1.25, 0.75], [0.75, 1.25]], format!("N=2 A = {a2:?}"));
    within_budget(&mut v, start.elapsed(), Duration::from_secs(1));
    v.finish();
}

#[test]
fn criterion_2_gradient_and_hessian() {
    let _g = serial();
    let start = Instant::now();
    let mut v = Verdict::new(2, "gradient/Hessian suite");
    let params = ModelParams::new(2, 1.0, 1.0, 1.0).unwrap();
    let cd = coupling_matrix(&params).unwrap();
    let bg = background(&params).unwrap();
    let grid = PlanarGrid::new(6.0, 33).unwrap();
    let func = Functional::new(&grid, &bg, &FunctionalCoefficients::new(&cd));
    let n = grid.points_per_side();
    let interior: Vec<usize> = (1..n - 1).flat_map(|j| (1..n - 1).map(move |i| j * n + i)).collect();
    let mut rng = StdRng::seed_from_u64(20240611);
    let random_field = |rng: &mut StdRng, amp: f64| {
        let mut fp = FieldPair::zeros(&grid);
        for &k in &interior {
            fp.w1[k] = rng.gen_range(-amp..amp);
            fp.w2[k] = rng.gen_range(-amp..amp);
        }
        fp
    };

    let step = 1e-5;
    let mut worst_rel: f64 = 0.0;
    for _ in 0..20 {
        let fp = random_field(&mut rng, 1.0);
        let g = func.gradient(&fp).unwrap();
        let scale = g.sup_norm();
        let mut err: f64 = 0.0;
        for &k in &interior {
            for comp in 0..2 {
                let mut plus = fp.clone();
                let mut minus = fp.clone();
                let (p, m) = if comp == 0 { (&mut plus.w1, &mut minus.w1) } else { (&mut plus.w2, &mut minus.w2) };
                p[k] += step;
                m[k] -= step;
                let fd = (func.energy(&plus).unwrap() - func.energy(&minus).unwrap()) / (2.0 * step);
                let an = if comp == 0 { g.w1[k] } else { g.w2[k] };
                err = err.max((an - fd).abs());
            }
        }
        worst_rel = worst_rel.max(err / scale);
    }
    v.check(worst_rel < 1e-6, format!("gradient vs central differences rel sup err {worst_rel:.2e} < 1e-6"));

    let eps = 1e-2;
    let mut min_second = f64::INFINITY;
    for _ in 0..100 {
        let fp = random_field(&mut rng, 1.0);
        let dir = random_field(&mut rng, 1.0);
        let e0 = func.energy(&fp).unwrap();
        let ep = func.energy(&fp.stepped(&dir, eps)).unwrap();
        let em = func.energy(&fp.stepped(&dir, -eps)).unwrap();
        min_second = min_second.min((ep - 2.0 * e0 + em) / (eps * eps));
    }
    v.check(min_second > 0.0, format!("min directional second difference {min_second:.3e} > 0"));

    let mut min_gap = f64::INFINITY;
    for _ in 0..100 {
        let a = random_field(&mut rng, 1.0);
        let b = random_field(&mut rng, 1.0);
        let mid = a.stepped(&b, 1.0).scaled(0.5);
        let gap = 0.5 * (func.energy(&a).unwrap() + func.energy(&b).unwrap()) - func.energy(&mid).unwrap();
        min_gap = min_gap.min(gap);
    }
    v.check(min_gap > 0.0, format!("min midpoint convexity gap {min_gap:.3e} > 0"));
    within_budget(&mut v, start.elapsed(), Duration::from_secs(10));
    v.finish();
}

#[test]
fn criterion_3_radial_n2() {
    let _g = serial();
    let start = Instant::now();
    let mut v = Verdict::new(3, "radial solve N=2, n=(1,1)");
    let mesh = RadialMesh::new(1e-4, 30.0, 4000).unwrap();
    let sol = radial(2, 1.0, 1.0, &mesh);
    let cd = coupling_matrix(&sol.params).unwrap();
    let sc = spectral_constants(&cd);
    let bg = background(&sol.params).unwrap();

    let res = pde_residual_radial(&sol, &cd, &bg);
    v.check(res < 1e-8, format!("residual {res:.2e} < 1e-8"));
    let comp = component_flux(&sol, &cd);
    for (i, c) in comp.iter().enumerate() {
        let err = (c.value + 2.0 * PI).abs() / (2.0 * PI);
        v.check(err < 5e-3, format!("∫E{} = {:.8} vs −2π rel {err:.2e}", i + 1, c.value));
    }
    let flux = flux_integrals(&sol, &cd, &sc);
    let e1 = (flux[0].value + 16.0 * PI).abs() / (16.0 * PI);
    v.check(e1 < 5e-3, format!("flux₁ = {:.8} vs −16π rel {e1:.2e}", flux[0].value));
    v.check(
        flux[1].value.abs() <= 5e-3 * 16.0 * PI,
        format!("flux₂ = {:.2e} vs 0 ± {:.3}", flux[1].value, 5e-3 * 16.0 * PI),
    );
    let decay = decay_fit(&sol, &sc, DEFAULT_WINDOW).unwrap();
    let field = decay.iter().find(|d| d.quantity == "field").unwrap();
    let rate = field.fitted_rate.unwrap_or(f64::NAN);
    v.check((0.9..=1.15).contains(&rate), format!("field decay rate {rate:.4} in [0.9, 1.15]"));
    let floor = 0.85 * sc.lambda0.sqrt();
    v.check(rate >= floor, format!("field decay rate {rate:.4} ≥ 0.85·√λ₀ = {floor:.4}"));
    within_budget(&mut v, start.elapsed(), Duration::from_secs(10));
    v.finish();
}

#[test]
fn criterion_4_radial_n3() {
    let _g = serial();
    let start = Instant::now();
    let mut v = Verdict::new(4, "radial solve N=3, n=(1,2)");
    let sol = radial(3, 1.0, 2.0, &RadialMesh::default());
    let cd = coupling_matrix(&sol.params).unwrap();
    let sc = spectral_constants(&cd);
    let flux = flux_integrals(&sol, &cd, &sc);
    for (f, target, label) in [(flux[0], -18.0 * PI, "−18π"), (flux[1], 12.0 * PI, "12π")] {
        let err = (f.value - target).abs() / target.abs();
        v.check(err < 1e-2, format!("flux = {:.8} vs {label} rel {err:.2e}", f.value));
    }
    let lambda0 = (17.0 - 181f64.sqrt()) / 6.0;
    v.check((sc.lambda0 - lambda0).abs() < 1e-12, format!("λ₀ = {:.12}", sc.lambda0));
    let decay = decay_fit(&sol, &sc, DEFAULT_WINDOW).unwrap();
    let rate = decay.iter().find(|d| d.quantity == "field").unwrap().fitted_rate.unwrap_or(f64::NAN);
    let floor = 0.85 * lambda0.sqrt();
    v.check(rate >= floor, format!("field decay rate {rate:.4} ≥ 0.85·√λ₀ = {floor:.4}"));
    within_budget(&mut v, start.elapsed(), Duration::from_secs(10));
    v.finish();
}

fn planar_params() -> ModelParams {
    ModelParams::new(2, 1.0, 1.0, 1.0).unwrap()
}

fn planar_solve(points: usize, init: InitialGuess) -> (PlanarSolution, Duration) {
    let params = planar_params();
    let cd = coupling_matrix(&params).unwrap();
    let bg = background(&params).unwrap();
    let grid = PlanarGrid::new(15.0, points).unwrap();
    let opts = PlanarOptions { tol: 1e-8, init, ..PlanarOptions::default() };
    let start = Instant::now();
    let sol = solve_planar(&params, &cd, &bg, &grid, &opts).unwrap();
    (sol, start.elapsed())
}

/// The 512² solve from the zero guess, shared by criteria 5, 6 and 8.
fn planar_512() -> &'static (PlanarSolution, Duration) {
    static CELL: OnceLock<(PlanarSolution, Duration)> = OnceLock::new();
    CELL.get_or_init(|| planar_solve(512, InitialGuess::Zero))
}

#[test]
fn criterion_5_planar() {
    let _g = serial();
    let mut v = Verdict::new(5, "planar solve N=2, 512², L=15");
    let (sol, solve_time) = planar_512();
    let start = Instant::now();
    let params = planar_params();
    let cd = coupling_matrix(&params).unwrap();
    let sc = spectral_constants(&cd);
    let bg = background(&params).unwrap();
    v.check(sol.converged, format!("converged in {} Newton steps", sol.iterations));
    let flux = flux_integrals(sol, &cd, &sc);
    let e1 = (flux[0].value + 16.0 * PI).abs() / (16.0 * PI);
    v.check(e1 < 2e-2, format!("flux₁ = {:.8} vs −16π rel {e1:.2e}", flux[0].value));
    v.check(
        flux[1].value.abs() <= 2e-2 * 16.0 * PI,
        format!("flux₂ = {:.2e} vs 0 ± {:.3}", flux[1].value, 2e-2 * 16.0 * PI),
    );
    let rad = radial(2, 1.0, 1.0, &RadialMesh::default());
    let cv = cross_validate(&rad, sol, &bg).unwrap();
    v.check(
        cv.sup_difference < 5e-3 && cv.window == [0.5, 10.0],
        format!("radial vs planar sup diff {:.2e} < 5e-3 on {:?}", cv.sup_difference, cv.window),
    );
    let sym = sol.symmetry_defect();
    v.check(sym < 1e-9, format!("four-fold symmetry defect {sym:.1e} < 1e-9"));
    within_budget(&mut v, *solve_time + start.elapsed(), Duration::from_secs(180));
    v.finish();
}

#[test]
fn criterion_6_uniqueness() {
    let _g = serial();
    let mut v = Verdict::new(6, "uniqueness probe");
    let (zero, zero_time) = planar_512();
    let (random, random_time) = planar_solve(512, InitialGuess::Random { seed: 7, amplitude: 1.0 });
    v.check(zero.converged && random.converged, format!("both converged ({} and {} steps)", zero.iterations, random.iterations));
    let diff = zero.w.sup_diff(&random.w);
    v.check(diff < 1e-6, format!("sup |w_zero − w_random| = {diff:.2e} < 1e-6"));
    within_budget(&mut v, *zero_time + random_time, Duration::from_secs(300));
    v.finish();
}

#[test]
fn criterion_7_profiles() {
    let _g = serial();
    let start = Instant::now();
    let mut v = Verdict::new(7, "profile solver N=2");
    let mesh = RadialMesh::default();
    let sol = solve_profile_bps(2, &mesh, 1e-9).unwrap();
    let ps = &sol.profiles;
    let res = ode_residual(ps);
    v.check(res < 1e-6, format!("profile residual {res:.2e} < 1e-6"));
    let last = mesh.len() - 1;
    let end = [ps.q1[last] - 1.0, ps.q2[last] - 1.0, ps.f[last], ps.f_na[last]];
    let worst = end.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.check(worst < 1e-3, format!("far-field deviation {worst:.2e} < 1e-3"));
    // Log-log slope of Q₁ over the first decade of the mesh.
    let r = mesh.nodes();
    let k = r.partition_point(|&x| x < 10.0 * r[0]);
    let exponent = (ps.q1[k] / ps.q1[0]).ln() / (r[k] / r[0]).ln();
    v.check((exponent - 1.0).abs() < 0.05, format!("Q₁ origin exponent {exponent:.6}"));
    within_budget(&mut v, start.elapsed(), Duration::from_secs(10));
    v.finish();
}

#[test]
fn criterion_8_refinement() {
    let _g = serial();
    let mut v = Verdict::new(8, "second-order refinement");
    let params = planar_params();
    let cd = coupling_matrix(&params).unwrap();
    let sc = spectral_constants(&cd);

    let mesh = RadialMesh::new(1e-4, 30.0, 4000).unwrap();
    let coarse = radial(2, 1.0, 1.0, &mesh);
    let fine = radial(2, 1.0, 1.0, &mesh.refined());
    let ratio = flux_integrals(&coarse, &cd, &sc)[0].abs_error / flux_integrals(&fine, &cd, &sc)[0].abs_error;
    v.check(ratio >= 3.0, format!("radial flux₁ error ratio {ratio:.2}"));
    let rc = component_flux(&coarse, &cd)[0].abs_error / component_flux(&fine, &cd)[0].abs_error;
    v.check(rc >= 3.0, format!("radial ∫E₁ error ratio {rc:.2}"));

    let (coarse, _) = planar_512();
    let (fine, _) = planar_solve(1024, InitialGuess::Zero);
    let ratio = flux_integrals(coarse, &cd, &sc)[0].abs_error / flux_integrals(&fine, &cd, &sc)[0].abs_error;
    v.check(ratio >= 3.0, format!("planar flux₁ error ratio 512²→1024² {ratio:.2}"));
    let pc = component_flux(coarse, &cd)[0].abs_error / component_flux(&fine, &cd)[0].abs_error;
    v.check(pc >= 3.0, format!("planar ∫E₁ error ratio {pc:.2}"));
    v.finish();
}
