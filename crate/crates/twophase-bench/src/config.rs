//! Run configuration: benchmark case presets, CLI flags, and the plain-text
//! config file (`key = value` lines; CLI flags override file values).

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use twophase::{FluidParams, Vec2};

/// Which rising-bubble benchmark case to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Case {
    /// Moderate density/viscosity contrast (1000:100, 10:1), γ = 24.5.
    #[value(name = "1", alias = "i", alias = "I")]
    One,
    /// Strong contrast (1000:1, 10:0.1), γ = 1.96; large deformations.
    #[value(name = "2", alias = "ii", alias = "II")]
    Two,
}

/// Which time stepper drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    /// Unfitted scheme on a fixed uniform bulk mesh.
    #[value(name = "eulerian")]
    Eulerian,
    /// Fitted moving-mesh scheme, natural (√𝒥-weighted) inertia.
    #[value(name = "ale_n")]
    AleN,
    /// Fitted moving-mesh scheme, conservative inertia.
    #[value(name = "ale_c")]
    AleC,
}

/// Velocity/pressure element pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pair {
    /// P2 velocity, continuous P1 pressure enriched by the inner-phase
    /// indicator (the only pair of the unfitted scheme).
    #[value(name = "p2p1x")]
    P2P1X,
    /// P2 velocity, piecewise constant pressure (fitted scheme).
    #[value(name = "p2p0")]
    P2P0,
    /// P2 velocity, continuous P1 plus piecewise constants (fitted scheme).
    #[value(name = "p2p1p0")]
    P2P1P0,
    /// P2 velocity, plain continuous P1: volume conservation fails by
    /// construction; kept as a negative control.
    #[value(name = "p2p1")]
    P2P1,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::One => "1",
            Case::Two => "2",
        })
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Eulerian => "eulerian",
            Scheme::AleN => "ale_n",
            Scheme::AleC => "ale_c",
        })
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pair::P2P1X => "p2p1x",
            Pair::P2P0 => "p2p0",
            Pair::P2P1P0 => "p2p1p0",
            Pair::P2P1 => "p2p1",
        })
    }
}

/// Command line of the benchmark driver. Every flag can also be given in a
/// config file (`--config`, `key = value` per line, same names without the
/// leading dashes); explicit flags win over file values.
#[derive(Debug, Parser)]
#[command(
    name = "bubble-bench",
    about = "Rising-bubble benchmarks for the structure-preserving two-phase flow solvers"
)]
pub struct Cli {
    /// Plain-text config file (`key = value` lines, `#` comments).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Benchmark case.
    #[arg(long)]
    pub case: Option<Case>,
    /// Time stepper.
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Element pair (default: p2p1x for eulerian, p2p1p0 for ALE).
    #[arg(long)]
    pub pair: Option<Pair>,
    /// Interface vertex count.
    #[arg(long)]
    pub jgamma: Option<usize>,
    /// Bulk mesh target spacing: element size of the uniform unfitted mesh,
    /// or the far-field size of the graded fitted mesh.
    #[arg(long)]
    pub h: Option<f64>,
    /// Time step size.
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    /// Final time.
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Fixed-point tolerance of the per-step iteration.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output directory (CSV, summary JSON, VTK snapshots).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write VTK snapshots every N steps (0 = off; step 0 always written
    /// when on).
    #[arg(long)]
    pub vtk_every: Option<usize>,
    /// Signed vertical gravity (override; cases default to -0.98).
    #[arg(long, allow_negative_numbers = true)]
    pub gravity: Option<f64>,
    /// Force sequential linear algebra so reruns are bit-identical.
    #[arg(long)]
    pub deterministic: bool,
    /// Random seed recorded in the config (consumed by tests only).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Disable the pressure indicator enrichment of the unfitted scheme
    /// (negative control: volume conservation fails).
    #[arg(long)]
    pub no_xfem: bool,
    /// Use start-of-step interface normals instead of time-weighted ones in
    /// the kinematic rows (negative control: volume drifts).
    #[arg(long)]
    pub lagged_normal: bool,
    /// Drop the mesh-motion Jacobian weighting of the ALE inertia
    /// (negative control: energy audit fails on moving meshes).
    #[arg(long)]
    pub no_jacobian_weight: bool,
    /// Solve the per-sweep ALE system fully coupled instead of
    /// interface-then-fluid (cross-check; slower).
    #[arg(long)]
    pub coupled: bool,
}

/// Fully resolved configuration of one benchmark run.
#[derive(Debug, Clone)]
pub struct CaseConfig {
    pub case: Case,
    pub scheme: Scheme,
    pub pair: Pair,
    pub jgamma: usize,
    pub h: f64,
    pub dt: f64,
    pub tmax: f64,
    pub tol: f64,
    pub out: PathBuf,
    pub vtk_every: usize,
    pub gravity: f64,
    pub deterministic: bool,
    pub seed: u64,
    pub no_xfem: bool,
    pub lagged_normal: bool,
    pub no_jacobian_weight: bool,
    pub coupled: bool,
}

impl CaseConfig {
    /// Paper defaults for a case and scheme: the unfitted runs use the
    /// finest tabulated uniform resolution, the fitted runs the base
    /// resolution of the corresponding table.
    pub fn defaults(case: Case, scheme: Scheme) -> CaseConfig {
        let (jgamma, h, dt) = match (case, scheme) {
            (Case::One, Scheme::Eulerian) => (128, 1.0 / 64.0, 1e-3),
            (Case::One, _) => (32, 1.0 / 16.0, 0.01),
            (Case::Two, Scheme::Eulerian) => (128, 1.0 / 64.0, 1e-3),
            (Case::Two, _) => (128, 1.0 / 16.0, 1e-3),
        };
        CaseConfig {
            case,
            scheme,
            pair: match scheme {
                Scheme::Eulerian => Pair::P2P1X,
                _ => Pair::P2P1P0,
            },
            jgamma,
            h,
            dt,
            tmax: 3.0,
            tol: 1e-8,
            out: PathBuf::from("bench-out"),
            vtk_every: 0,
            gravity: -0.98,
            deterministic: false,
            seed: 0,
            no_xfem: false,
            lagged_normal: false,
            no_jacobian_weight: false,
            coupled: false,
        }
    }

    /// Resolves a command line (and its optional config file) into a full
    /// configuration: file values override case defaults, flags override
    /// file values.
    pub fn resolve(cli: &Cli) -> Result<CaseConfig, String> {
        let file = match &cli.config {
            Some(path) => parse_config_file(path)?,
            None => Vec::new(),
        };
        let get = |key: &str| file.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v);
        let parse_with = |key: &str, what: &str| -> Result<Option<String>, String> {
            let _ = what;
            Ok(get(key).cloned())
        };

        // Case and scheme decide the defaults, so resolve them first.
        let case = match (&cli.case, get("case")) {
            (Some(c), _) => *c,
            (None, Some(v)) => parse_enum::<Case>(v, "case")?,
            (None, None) => Case::One,
        };
        let scheme = match (&cli.scheme, get("scheme")) {
            (Some(s), _) => *s,
            (None, Some(v)) => parse_enum::<Scheme>(v, "scheme")?,
            (None, None) => Scheme::AleN,
        };
        let mut cfg = CaseConfig::defaults(case, scheme);

        if let Some(v) = parse_with("pair", "pair")? {
            cfg.pair = parse_enum::<Pair>(&v, "pair")?;
        }
        if let Some(v) = get("jgamma") {
            cfg.jgamma = parse_num(v, "jgamma")?;
        }
        if let Some(v) = get("h") {
            cfg.h = parse_num(v, "h")?;
        }
        if let Some(v) = get("dt") {
            cfg.dt = parse_num(v, "dt")?;
        }
        if let Some(v) = get("tmax") {
            cfg.tmax = parse_num(v, "tmax")?;
        }
        if let Some(v) = get("tol") {
            cfg.tol = parse_num(v, "tol")?;
        }
        if let Some(v) = get("out") {
            cfg.out = PathBuf::from(v);
        }
        if let Some(v) = get("vtk_every") {
            cfg.vtk_every = parse_num(v, "vtk_every")?;
        }
        if let Some(v) = get("gravity") {
            cfg.gravity = parse_num(v, "gravity")?;
        }
        if let Some(v) = get("seed") {
            cfg.seed = parse_num(v, "seed")?;
        }
        for (key, field) in [
            ("deterministic", &mut cfg.deterministic),
            ("no_xfem", &mut cfg.no_xfem),
            ("lagged_normal", &mut cfg.lagged_normal),
            ("no_jacobian_weight", &mut cfg.no_jacobian_weight),
            ("coupled", &mut cfg.coupled),
        ] {
            if let Some(v) = get(key) {
                *field = parse_bool(v, key)?;
            }
        }

        if let Some(p) = cli.pair {
            cfg.pair = p;
        }
        if let Some(j) = cli.jgamma {
            cfg.jgamma = j;
        }
        if let Some(h) = cli.h {
            cfg.h = h;
        }
        if let Some(dt) = cli.dt {
            cfg.dt = dt;
        }
        if let Some(t) = cli.tmax {
            cfg.tmax = t;
        }
        if let Some(t) = cli.tol {
            cfg.tol = t;
        }
        if let Some(o) = &cli.out {
            cfg.out = o.clone();
        }
        if let Some(v) = cli.vtk_every {
            cfg.vtk_every = v;
        }
        if let Some(g) = cli.gravity {
            cfg.gravity = g;
        }
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        cfg.deterministic |= cli.deterministic;
        cfg.no_xfem |= cli.no_xfem;
        cfg.lagged_normal |= cli.lagged_normal;
        cfg.no_jacobian_weight |= cli.no_jacobian_weight;
        cfg.coupled |= cli.coupled;

        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field checks.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.h > 0.0 && self.dt > 0.0 && self.tmax > 0.0 && self.tol > 0.0) {
            return Err("h, dt, tmax, and tol must all be positive".into());
        }
        if self.jgamma < 8 {
            return Err(format!("jgamma must be at least 8, got {}", self.jgamma));
        }
        match self.scheme {
            Scheme::Eulerian => {
                if self.pair != Pair::P2P1X && !(self.pair == Pair::P2P1 && self.no_xfem) {
                    return Err(format!(
                        "the unfitted scheme supports p2p1x (or p2p1 with --no-xfem), got {}",
                        self.pair
                    ));
                }
            }
            _ => {
                if self.pair == Pair::P2P1X {
                    return Err("the fitted schemes use p2p0, p2p1p0, or p2p1".into());
                }
                if self.no_xfem || self.lagged_normal {
                    return Err(
                        "--no-xfem and --lagged-normal apply to the unfitted scheme only".into(),
                    );
                }
            }
        }
        if self.scheme == Scheme::Eulerian && (self.no_jacobian_weight || self.coupled) {
            return Err(
                "--no-jacobian-weight and --coupled apply to the fitted schemes only".into(),
            );
        }
        Ok(())
    }

    /// Material parameters of the configured case (§ physical setup):
    /// the enclosed phase is the light one.
    pub fn params(&self) -> FluidParams {
        let (rho_inner, mu_inner, surface_tension) = match self.case {
            Case::One => (100.0, 1.0, 24.5),
            Case::Two => (1.0, 0.1, 1.96),
        };
        FluidParams {
            rho_inner,
            rho_outer: 1000.0,
            mu_inner,
            mu_outer: 10.0,
            surface_tension,
            gravity: Vec2::new(0.0, self.gravity),
        }
    }

    /// Domain corners: the benchmark rectangle `[0,1] × [0,2]`.
    pub fn domain(&self) -> (Vec2, Vec2) {
        (Vec2::new(0.0, 0.0), Vec2::new(1.0, 2.0))
    }

    /// Initial interface: circle of radius ¼ about `(½, ½)`.
    pub fn initial_circle(&self) -> (Vec2, f64) {
        (Vec2::new(0.5, 0.5), 0.25)
    }

    /// One-line description used in logs and the summary.
    pub fn label(&self) -> String {
        format!(
            "case{} {} {} jgamma={} h={} dt={} tmax={} tol={:.0e}",
            self.case, self.scheme, self.pair, self.jgamma, self.h, self.dt, self.tmax, self.tol
        )
    }
}

fn parse_enum<T: ValueEnum>(v: &str, key: &str) -> Result<T, String> {
    T::from_str(v, true).map_err(|_| format!("config value `{v}` is not a valid {key}"))
}

fn parse_num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse()
        .map_err(|e| format!("config value `{v}` for {key}: {e}"))
}

fn parse_bool(v: &str, key: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("config value `{v}` for {key} is not a boolean")),
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are
/// skipped. Later lines win over earlier ones (and flags over all).
fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected `key = value`", path.display(), lineno + 1))?;
        out.push((
            key.trim().to_string(),
            value.trim().trim_matches('"').to_string(),
        ));
    }
    Ok(out)
}
