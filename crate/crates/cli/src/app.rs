use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;

use vortexlab::functional::PlanarGrid;
use vortexlab::io::{
    read_solution, report_to_json, to_exact_json, write_planar_csv, write_profile_csv, write_radial_csv, Metadata,
    StoredSolution,
};
use vortexlab::model::{
    background, component_flux_targets, coupling_matrix, flux_targets, spectral_constants, CouplingData,
    ModelParams, SpectralConstants,
};
use vortexlab::planar::{solve_planar, BoundaryMode, InitialGuess, PlanarOptions, PlanarSolution};
use vortexlab::radial::{
    ode_residual, reconstruct_profiles, solve_profile_bps_with, solve_radial_p_with, RadialMesh, RadialSolution,
    DEFAULT_MAX_ITER,
};
use vortexlab::verify::{
    component_flux, cross_validate, decay_fit, flux_integrals, pde_residual_planar, pde_residual_radial,
    ConstantsRecord, Residuals, Uniqueness, VerificationReport, DEFAULT_WINDOW,
};
use vortexlab::{Error, Result};

pub const EXIT_OK: u8 = 0;
pub const EXIT_NOT_CONVERGED: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_IO: u8 = 3;

const RADIAL_TOL: f64 = 1e-10;
const PROFILE_TOL: f64 = 1e-9;
const PLANAR_TOL: f64 = 1e-8;
/// Seed of the second start in the uniqueness probe.
const UNIQUENESS_SEED: u64 = 7;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Command {
    #[default]
    Constants,
    SolveRadial,
    SolveProfile,
    SolvePlanar,
    Verify,
    Report,
}

/// Model flags as given; `None` means not on the command line.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ModelChoice {
    pub rank: Option<u32>,
    pub n1: Option<f64>,
    pub n2: Option<f64>,
    pub tau: Option<f64>,
    pub relaxed: bool,
}

impl ModelChoice {
    fn is_empty(&self) -> bool {
        self.rank.is_none() && self.n1.is_none() && self.n2.is_none() && self.tau.is_none() && !self.relaxed
    }

    fn resolve(&self) -> Result<ModelParams> {
        let (rank, n1, n2, tau) =
            (self.rank.unwrap_or(2), self.n1.unwrap_or(1.0), self.n2.unwrap_or(1.0), self.tau.unwrap_or(1.0));
        if self.relaxed {
            ModelParams::relaxed(rank, n1, n2, tau)
        } else {
            ModelParams::new(rank, n1, n2, tau)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSettings {
    pub r_min: f64,
    pub r_max: f64,
    pub nodes: usize,
}

impl Default for RadialSettings {
    fn default() -> Self {
        RadialSettings { r_min: 1e-4, r_max: 30.0, nodes: 4000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    Zero,
    Random { seed: u64, amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarSettings {
    pub half_width: f64,
    pub points: usize,
    pub zero_w: bool,
    pub init: InitKind,
}

impl Default for PlanarSettings {
    fn default() -> Self {
        PlanarSettings { half_width: 15.0, points: 512, zero_w: false, init: InitKind::Zero }
    }
}

/// Everything one invocation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub model: ModelChoice,
    pub radial: RadialSettings,
    pub planar: Option<PlanarSettings>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub window: [f64; 2],
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub json: bool,
    pub uniqueness: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::default(),
            model: ModelChoice::default(),
            radial: RadialSettings::default(),
            planar: None,
            tol: None,
            max_iter: None,
            window: DEFAULT_WINDOW,
            input: None,
            out: None,
            json: false,
            uniqueness: false,
        }
    }
}

/// Option ranges that the library constructors do not already check.
fn validate(cfg: &RunConfig) -> Result<()> {
    if let Some(tol) = cfg.tol {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::InvalidParams(format!("--tol must be positive, got {tol}")));
        }
    }
    if cfg.max_iter == Some(0) {
        return Err(Error::InvalidParams("--max-iter must be at least 1".into()));
    }
    let [a, b] = cfg.window;
    if !(a.is_finite() && b.is_finite() && 0.0 < a && a < b) {
        return Err(Error::InvalidParams(format!("--window needs 0 < a < b, got {a},{b}")));
    }
    if let Some(InitKind::Random { amplitude, .. }) = cfg.planar.map(|p| p.init) {
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(Error::InvalidParams(format!("--amplitude must be non-negative, got {amplitude}")));
        }
    }
    Ok(())
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidParams(_) | Error::Parse { .. } => EXIT_INVALID,
        Error::NotConverged { .. } | Error::ExponentOverflow { .. } | Error::NonFinite(_) | Error::Singular(_) => {
            EXIT_NOT_CONVERGED
        }
        Error::Io { .. } => EXIT_IO,
    }
}

/// Runs one command and returns the process exit code.
pub fn run(cfg: &RunConfig) -> u8 {
    let outcome = validate(cfg).and_then(|()| match cfg.command {
        Command::Constants => constants(cfg),
        Command::SolveRadial => solve_radial(cfg),
        Command::SolveProfile => solve_profile(cfg),
        Command::SolvePlanar => solve_planar_cmd(cfg),
        Command::Verify => verify(cfg),
        Command::Report => report(cfg),
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source }),
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{}", text.trim_end()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(Error::Io { path: PathBuf::from("<stdout>"), source: e })
                }
                _ => Ok(()),
            }
        }
    }
}

fn model_data(params: &ModelParams) -> Result<(CouplingData, SpectralConstants)> {
    let cd = coupling_matrix(params)?;
    let sc = spectral_constants(&cd);
    Ok((cd, sc))
}

fn constants(cfg: &RunConfig) -> Result<()> {
    let params = cfg.model.resolve()?;
    let (cd, sc) = model_data(&params)?;
    let record = ConstantsRecord::new(&cd, &sc);
    let text = if cfg.json {
        to_exact_json(&record)
    } else {
        let m = |name: &str, a: vortexlab::mat2::Mat2| {
            format!("{name} = [[{}, {}], [{}, {}]]\n", a.get(0, 0), a.get(0, 1), a.get(1, 0), a.get(1, 1))
        };
        let ft = flux_targets(&params, &sc);
        let ct = component_flux_targets(&params, &cd);
        let mut s = format!("N = {}\nalpha = {}\nbeta = {}\ngamma = {}\n", params.rank, cd.alpha, cd.beta, cd.gamma);
        for (name, mat) in [("A", cd.a), ("L", cd.l), ("R", cd.r), ("B", cd.b), ("M", cd.m), ("T", sc.t)] {
            s += &m(name, mat);
        }
        s += &format!(
            "lambda0 = {}\nlambda1 = {}\nlambda2 = {}\nlambda3 = {}\nlambda4 = {}\nlambda = {}\nm = {}\np = {}\nq = {}\n",
            sc.lambda0, sc.lambda1, sc.lambda2, sc.lambda3, sc.lambda4, sc.lambda, sc.m, sc.p, sc.q
        );
        s += &format!("flux targets = [{}, {}]\ncomponent flux targets = [{}, {}]\n", ft[0], ft[1], ct[0], ct[1]);
        s
    };
    emit(cfg.out.as_deref(), &text)
}

fn mesh(cfg: &RunConfig) -> Result<RadialMesh> {
    RadialMesh::new(cfg.radial.r_min, cfg.radial.r_max, cfg.radial.nodes)
}

fn radial_solve(cfg: &RunConfig, params: &ModelParams, cd: &CouplingData) -> Result<RadialSolution> {
    let bg = background(params)?;
    let mesh = mesh(cfg)?;
    let sol = solve_radial_p_with(
        params,
        cd,
        &bg,
        &mesh,
        cfg.tol.unwrap_or(RADIAL_TOL),
        cfg.max_iter.unwrap_or(DEFAULT_MAX_ITER),
    )?;
    info!("radial solve: {} Newton steps, residual {:.3e}", sol.iterations, sol.residual);
    Ok(sol)
}

fn print_fluxes(sol: &impl vortexlab::verify::FieldSolution, cd: &CouplingData, sc: &SpectralConstants) {
    for (label, recs) in [("flux", flux_integrals(sol, cd, sc)), ("component flux", component_flux(sol, cd))] {
        for (i, r) in recs.iter().enumerate() {
            println!("{label} {}: {} (target {}, rel error {:.3e})", i + 1, r.value, r.target, r.rel_error);
        }
    }
}

fn solve_radial(cfg: &RunConfig) -> Result<()> {
    let params = cfg.model.resolve()?;
    let (cd, sc) = model_data(&params)?;
    let sol = radial_solve(cfg, &params, &cd)?;
    println!("converged in {} Newton steps, residual {:.3e}", sol.iterations, sol.residual);
    print_fluxes(&sol, &cd, &sc);
    if let Some(path) = &cfg.out {
        write_radial_csv(path, &sol)?;
    }
    Ok(())
}

fn solve_profile(cfg: &RunConfig) -> Result<()> {
    let rank = cfg.model.rank.unwrap_or(2);
    let mesh = mesh(cfg)?;
    let sol = solve_profile_bps_with(
        rank,
        &mesh,
        cfg.tol.unwrap_or(PROFILE_TOL),
        cfg.max_iter.unwrap_or(DEFAULT_MAX_ITER),
    )?;
    println!(
        "converged in {} Newton steps, residual {:.3e}; Q1 ~ {}·r, Q2(0) = {}, origin exponent {}",
        sol.iterations,
        sol.residual,
        sol.c1,
        sol.c2,
        sol.profiles.q1_origin_exponent()
    );
    if let Some(path) = &cfg.out {
        let mut extra = Metadata::default();
        extra
            .set_real("r_min", mesh.r_min())
            .set_real("r_max", mesh.r_max())
            .set("iterations", sol.iterations)
            .set_real("residual", sol.residual)
            .set_real("c1", sol.c1)
            .set_real("c2", sol.c2);
        write_profile_csv(path, &sol.profiles, &extra)?;
    }
    Ok(())
}

fn planar_options(cfg: &RunConfig, settings: &PlanarSettings) -> PlanarOptions {
    let defaults = PlanarOptions::default();
    PlanarOptions {
        tol: cfg.tol.unwrap_or(PLANAR_TOL),
        max_iter: cfg.max_iter.unwrap_or(defaults.max_iter),
        boundary: if settings.zero_w { BoundaryMode::ZeroW } else { BoundaryMode::Vacuum },
        init: match settings.init {
            InitKind::Zero => InitialGuess::Zero,
            InitKind::Random { seed, amplitude } => InitialGuess::Random { seed, amplitude },
        },
        ..defaults
    }
}

fn planar_solve(cfg: &RunConfig, params: &ModelParams, cd: &CouplingData, s: &PlanarSettings) -> Result<PlanarSolution> {
    let bg = background(params)?;
    let grid = PlanarGrid::new(s.half_width, s.points)?;
    let sol = solve_planar(params, cd, &bg, &grid, &planar_options(cfg, s))?;
    info!("planar solve: {} Newton steps, {} CG steps", sol.iterations, sol.cg_iterations);
    Ok(sol)
}

fn solve_planar_cmd(cfg: &RunConfig) -> Result<()> {
    let params = cfg.model.resolve()?;
    let (cd, sc) = model_data(&params)?;
    let settings = cfg.planar.unwrap_or_default();
    let sol = planar_solve(cfg, &params, &cd, &settings)?;
    println!(
        "converged in {} Newton steps ({} CG), residual {:.3e}, energy {}",
        sol.iterations, sol.cg_iterations, sol.final_gradient_norm, sol.final_energy
    );
    print_fluxes(&sol, &cd, &sc);
    if let Some(path) = &cfg.out {
        write_planar_csv(path, &sol)?;
    }
    Ok(())
}

fn radial_report(cfg: &RunConfig, sol: &RadialSolution, cd: &CouplingData, sc: &SpectralConstants) -> Result<VerificationReport> {
    let bg = background(&sol.params)?;
    let ode = ode_residual(&reconstruct_profiles(sol)?);
    Ok(VerificationReport {
        params: sol.params,
        constants: ConstantsRecord::new(cd, sc),
        flux: flux_integrals(sol, cd, sc),
        component_flux: component_flux(sol, cd),
        decay: decay_fit(sol, sc, cfg.window)?,
        residuals: Residuals { pde_sup: pde_residual_radial(sol, cd, &bg), ode_sup: Some(ode) },
        uniqueness: Uniqueness { sup_difference: None },
        cross_validation: None,
    })
}

fn verify(cfg: &RunConfig) -> Result<()> {
    let input = cfg.input.as_deref().ok_or_else(|| Error::InvalidParams("verify needs --input".into()))?;
    if !input.exists() {
        return Err(Error::InvalidParams(format!("solution file {} does not exist", input.display())));
    }
    let stored = read_solution(input)?;
    let params = match &stored {
        StoredSolution::Radial(s) => s.params,
        StoredSolution::Planar(s) => s.params,
    };
    if !cfg.model.is_empty() && cfg.model.resolve()? != params {
        return Err(Error::InvalidParams(format!(
            "{} holds a solution for {params:?}, not for the parameters given",
            input.display()
        )));
    }
    let (cd, sc) = model_data(&params)?;
    let report = match &stored {
        StoredSolution::Radial(sol) => radial_report(cfg, sol, &cd, &sc)?,
        StoredSolution::Planar(sol) => {
            let bg = background(&params)?;
            VerificationReport {
                params,
                constants: ConstantsRecord::new(&cd, &sc),
                flux: flux_integrals(sol, &cd, &sc),
                component_flux: component_flux(sol, &cd),
                decay: Vec::new(),
                residuals: Residuals { pde_sup: pde_residual_planar(sol, &cd, &bg), ode_sup: None },
                uniqueness: Uniqueness { sup_difference: None },
                cross_validation: None,
            }
        }
    };
    emit(cfg.out.as_deref(), &report_to_json(&report))
}

fn report(cfg: &RunConfig) -> Result<()> {
    let params = cfg.model.resolve()?;
    let (cd, sc) = model_data(&params)?;
    let radial = radial_solve(cfg, &params, &cd)?;
    let mut report = radial_report(cfg, &radial, &cd, &sc)?;
    if let Some(settings) = &cfg.planar {
        // The radial tolerance is far below what the planar solver needs.
        let planar_cfg = RunConfig { tol: None, ..cfg.clone() };
        let planar = planar_solve(&planar_cfg, &params, &cd, settings)?;
        let bg = background(&params)?;
        report.cross_validation = Some(cross_validate(&radial, &planar, &bg)?);
        if cfg.uniqueness {
            let other = PlanarSettings { init: InitKind::Random { seed: UNIQUENESS_SEED, amplitude: 1.0 }, ..*settings };
            let second = planar_solve(&planar_cfg, &params, &cd, &other)?;
            report.uniqueness = Uniqueness { sup_difference: Some(planar.w.sup_diff(&second.w)) };
        }
    }
    emit(cfg.out.as_deref(), &report_to_json(&report))
}
