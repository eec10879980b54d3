use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod app;

use app::{Command, InitKind, ModelChoice, PlanarSettings, RadialSettings, RunConfig};

/// Solvers and verification for the coupled non-Abelian vortex equations.
#[derive(Debug, Parser)]
#[command(name = "vortexlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Print the coupling matrices, spectral constants and flux targets.
    Constants {
        #[command(flatten)]
        model: ModelArgs,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the radial system for the regular parts and write the profiles.
    SolveRadial {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        mesh: MeshArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the first-order profile system of the minimal vortex.
    SolveProfile {
        #[arg(long = "N", default_value_t = 2)]
        rank: u32,
        #[command(flatten)]
        mesh: MeshArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimize the action functional on a square grid.
    SolvePlanar {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        planar: PlanarArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a stored solution file and emit a JSON report.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        /// Solution CSV written by solve-radial or solve-planar.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve and verify in one pass and emit a JSON report.
    Report {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        mesh: MeshArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        window: WindowArgs,
        /// Also solve on a planar grid of this many points per side and
        /// cross-validate against the radial solution.
        #[arg(long)]
        grid: Option<usize>,
        /// Half side length of the planar box.
        #[arg(long = "box", default_value_t = 15.0)]
        half_width: f64,
        /// Repeat the planar solve from a random start and compare.
        #[arg(long, requires = "grid")]
        uniqueness: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Rank N of the gauge group, at least 2 [default: 2].
    #[arg(long = "N")]
    rank: Option<u32>,
    /// Multiplicity n₁ [default: 1].
    #[arg(long)]
    n1: Option<f64>,
    /// Multiplicity n₂ [default: 1].
    #[arg(long)]
    n2: Option<f64>,
    /// Background scale τ [default: 1].
    #[arg(long)]
    tau: Option<f64>,
    /// Allow zero or fractional multiplicities.
    #[arg(long)]
    relaxed: bool,
}

#[derive(Debug, Args)]
struct MeshArgs {
    #[arg(long, default_value_t = 1e-4)]
    rmin: f64,
    #[arg(long, default_value_t = 30.0)]
    rmax: f64,
    #[arg(long, default_value_t = 4000)]
    nodes: usize,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Convergence tolerance [default depends on the solver].
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Debug, Args)]
struct PlanarArgs {
    /// Half side length L of the box [−L, L]².
    #[arg(long = "box", default_value_t = 15.0)]
    half_width: f64,
    /// Grid points per side.
    #[arg(long, default_value_t = 512)]
    grid: usize,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Vacuum)]
    boundary: BoundaryArg,
    #[arg(long, value_enum, default_value_t = InitArg::Zero)]
    init: InitArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Amplitude of the random initial field.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
}

#[derive(Debug, Args)]
struct WindowArgs {
    /// Decay fit window `a,b`.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [10.0, 14.0])]
    window: Vec<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Vacuum,
    ZeroW,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitArg {
    Zero,
    Random,
}

impl From<ModelArgs> for ModelChoice {
    fn from(a: ModelArgs) -> Self {
        ModelChoice { rank: a.rank, n1: a.n1, n2: a.n2, tau: a.tau, relaxed: a.relaxed }
    }
}

impl From<MeshArgs> for RadialSettings {
    fn from(a: MeshArgs) -> Self {
        RadialSettings { r_min: a.rmin, r_max: a.rmax, nodes: a.nodes }
    }
}

impl From<PlanarArgs> for PlanarSettings {
    fn from(a: PlanarArgs) -> Self {
        PlanarSettings {
            half_width: a.half_width,
            points: a.grid,
            zero_w: matches!(a.boundary, BoundaryArg::ZeroW),
            init: match a.init {
                InitArg::Zero => InitKind::Zero,
                InitArg::Random => InitKind::Random { seed: a.seed, amplitude: a.amplitude },
            },
        }
    }
}

fn window(a: WindowArgs) -> [f64; 2] {
    [a.window[0], a.window[1]]
}

fn config(cli: Cli) -> RunConfig {
    let mut cfg = RunConfig::default();
    match cli.command {
        Cmd::Constants { model, json, out } => {
            cfg.command = Command::Constants;
            cfg.model = model.into();
            cfg.json = json;
            cfg.out = out;
        }
        Cmd::SolveRadial { model, mesh, solver, out } => {
            cfg.command = Command::SolveRadial;
            cfg.model = model.into();
            cfg.radial = mesh.into();
            (cfg.tol, cfg.max_iter, cfg.out) = (solver.tol, solver.max_iter, out);
        }
        Cmd::SolveProfile { rank, mesh, solver, out } => {
            cfg.command = Command::SolveProfile;
            cfg.model.rank = Some(rank);
            cfg.radial = mesh.into();
            (cfg.tol, cfg.max_iter, cfg.out) = (solver.tol, solver.max_iter, out);
        }
        Cmd::SolvePlanar { model, planar, solver, out } => {
            cfg.command = Command::SolvePlanar;
            cfg.model = model.into();
            cfg.planar = Some(planar.into());
            (cfg.tol, cfg.max_iter, cfg.out) = (solver.tol, solver.max_iter, out);
        }
        Cmd::Verify { model, input, window: w, out } => {
            cfg.command = Command::Verify;
            cfg.model = model.into();
            cfg.input = Some(input);
            cfg.window = window(w);
            cfg.out = out;
        }
        Cmd::Report { model, mesh, solver, window: w, grid, half_width, uniqueness, out } => {
            cfg.command = Command::Report;
            cfg.model = model.into();
            cfg.radial = mesh.into();
            (cfg.tol, cfg.max_iter, cfg.out) = (solver.tol, solver.max_iter, out);
            cfg.window = window(w);
            cfg.planar = grid.map(|points| PlanarSettings { half_width, points, ..PlanarSettings::default() });
            cfg.uniqueness = uniqueness;
        }
    }
    cfg
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("VORTEXLAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| format!("VORTEXLAB_THREADS must be an integer of at least 1, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(app::EXIT_INVALID);
    }
    ExitCode::from(app::run(&config(cli)))
}
