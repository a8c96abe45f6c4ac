//! `rpskin`: command-line front end for the 3-RPS analysis library.
//!
//! Exit codes: 0 on success, 1 when an analysis comes out negative (no
//! certificate, no path, a reproduction that does not match), 2 on invalid
//! input.

mod config;
mod output;
mod repro;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rpskin::atlas::{
    atlas_csv, atlas_header, basic_regions, classify_jointspace_slice, classify_workspace_with, AtlasConfig,
    AtlasMap, Axis, GridSpec,
};
use rpskin::continuation::{cusp_csv, sweep_cusp_curves};
use rpskin::dkp::solve_dkp;
use rpskin::kinematics::ikp;
use rpskin::trajectory::{certify_amc, det_profile, plan_path, AMC_JOINT_TOL};
use rpskin::{JointConfig, OperationMode, Pose};
use serde::Deserialize;
use serde_json::{json, Value};

use config::{Overrides, RunConfig, SEED_ENV};
use output::Writer;

#[derive(Parser, Debug)]
#[command(name = "rpskin", version, about = "Kinematic analysis of the 3-RPS parallel robot")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// JSON (`.json`) or TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed. Falls back to the config file, then `RPSKIN_SEED`, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    mode: Option<OperationMode>,
    /// Base circumradius.
    #[arg(long, global = true)]
    g: Option<f64>,
    /// Platform circumradius.
    #[arg(long, global = true)]
    h: Option<f64>,
    /// Newton starts per direct-kinematics solve.
    #[arg(long, global = true)]
    starts: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Leg lengths of a chart pose.
    Ikp {
        #[arg(long, num_args = 3, value_names = ["A", "B", "Z"], allow_negative_numbers = true, required = true)]
        pose: Vec<f64>,
    },
    /// All platform poses for given leg lengths.
    Dkp {
        #[arg(long, num_args = 3, value_names = ["RHO1", "RHO2", "RHO3"], allow_negative_numbers = true, required = true)]
        rho: Vec<f64>,
    },
    /// Grid classification of the workspace or the joint space.
    Atlas(AtlasArgs),
    /// Plans a nonsingular path through waypoints and certifies assembly-mode changes.
    Traj {
        /// JSON file: `{"mode": "om1", "waypoints": [[a, b, z], ...]}` or a bare list.
        #[arg(long)]
        waypoints: PathBuf,
        /// Return to the first waypoint.
        #[arg(long)]
        close: bool,
    },
    /// Traces cusp curves over a range of the first leg length.
    Cusp {
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true, required = true)]
        rho1_range: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
    },
    /// Runs a canned reproduction pipeline.
    Repro {
        #[arg(long, value_enum)]
        figure: Figure,
    },
}

#[derive(Args, Debug)]
struct AtlasArgs {
    #[command(flatten)]
    kind: AtlasKindArg,
    /// Box as `lo hi` pairs per axis.
    #[arg(long = "box", num_args = 4..=6, allow_negative_numbers = true)]
    bounds: Option<Vec<f64>>,
    /// Nodes per axis.
    #[arg(long)]
    res: Option<usize>,
    /// First leg length of a joint-space slice.
    #[arg(long, default_value_t = 3.0)]
    rho1: f64,
    /// Height of a basic-region slice.
    #[arg(long, default_value_t = 3.0)]
    z: f64,
    /// Only label basic regions with this sign of `det A` (1 or -1).
    #[arg(long, allow_negative_numbers = true)]
    sign: Option<i8>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct AtlasKindArg {
    #[arg(long)]
    workspace: bool,
    #[arg(long)]
    jointslice: bool,
    #[arg(long)]
    basic: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Table1,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

/// Marks an error as invalid input (exit code 2).
#[derive(Debug)]
pub struct Usage(anyhow::Error);

impl Usage {
    pub fn wrap(e: anyhow::Error) -> anyhow::Error {
        anyhow::Error::new(Usage(e))
    }
}

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for Usage {}

/// How a successful run ended.
pub enum Outcome {
    Done,
    /// The analysis ran but its result is negative.
    Negative(String),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<rpskin::Error>() {
            return match e {
                rpskin::Error::InvalidInput(_) | rpskin::Error::ChartBoundary { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Negative(msg)) => {
            eprintln!("negative: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(g: &GlobalArgs, res: Option<usize>, bounds: Option<Vec<f64>>) -> anyhow::Result<RunConfig> {
    let file = match &g.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        g: g.g,
        h: g.h,
        mode: g.mode,
        seed: g.seed,
        out: g.out.clone(),
        res,
        bounds,
        starts: g.starts,
    };
    let env = std::env::var(SEED_ENV).ok();
    file.resolve(&overrides, env.as_deref())
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let (res, bounds) = match &cli.command {
        Command::Atlas(a) => (a.res, a.bounds.clone()),
        _ => (None, None),
    };
    let cfg = load_config(&cli.global, res, bounds)?;
    let explicit_out = cli.global.out.is_some();
    match cli.command {
        Command::Ikp { pose } => cmd_ikp(&cfg, &pose, explicit_out),
        Command::Dkp { rho } => cmd_dkp(&cfg, &rho, explicit_out),
        Command::Atlas(args) => cmd_atlas(&cfg, &args),
        Command::Traj { waypoints, close } => cmd_traj(&cfg, &waypoints, close),
        Command::Cusp { rho1_range, step } => cmd_cusp(&cfg, rho1_range[0], rho1_range[1], step),
        Command::Repro { figure } => repro::run(&cfg, figure),
    }
}

/// Prints a line to stdout; a closed pipe is not an error.
fn emit(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn cmd_ikp(cfg: &RunConfig, pose: &[f64], write: bool) -> anyhow::Result<Outcome> {
    let pose = Pose::new(cfg.mode, pose[0], pose[1], pose[2])?;
    let joints = ikp(&pose, &cfg.design);
    emit(&serde_json::to_string(&joints)?)?;
    if write {
        let mut w = Writer::new(cfg, json!({ "ikp": { "pose": pose } }))?;
        w.json("ikp.json", json!({ "joints": joints }))?;
        output::announce(w.written());
    }
    Ok(Outcome::Done)
}

fn cmd_dkp(cfg: &RunConfig, rho: &[f64], write: bool) -> anyhow::Result<Outcome> {
    let joints = JointConfig::new(rho[0], rho[1], rho[2])?;
    let set = solve_dkp(&joints, cfg.mode, &cfg.design, &cfg.dkp)?;
    emit(&serde_json::to_string_pretty(&set)?)?;
    if write {
        let mut w = Writer::new(cfg, json!({ "dkp": { "rho": joints.rho } }))?;
        w.json("dkp.json", json!({ "solutions": set }))?;
        output::announce(w.written());
    }
    Ok(Outcome::Done)
}

/// Node grid over `bounds`, or over `default` when the config has none.
pub fn grid(cfg: &RunConfig, default: &[f64]) -> anyhow::Result<GridSpec> {
    let bounds = cfg.grid.bounds.as_deref().unwrap_or(default);
    if bounds.len() != default.len() {
        return Err(Usage::wrap(anyhow::anyhow!(
            "expected {} box values, got {}",
            default.len(),
            bounds.len()
        )));
    }
    let axes = bounds
        .chunks(2)
        .map(|p| Axis::new(p[0], p[1], cfg.grid.res))
        .collect::<rpskin::Result<Vec<_>>>()?;
    Ok(GridSpec::new(axes)?)
}

pub const WORKSPACE_BOX: [f64; 6] = [-0.99, 0.99, -0.99, 0.99, 0.5, 5.0];
pub const JOINT_BOX: [f64; 4] = [1.0, 5.0, 1.0, 5.0];
pub const CHART_BOX: [f64; 4] = [-0.99, 0.99, -0.99, 0.99];

/// Writes `<name>.csv` and `<name>.json` for an atlas map.
pub fn write_atlas(w: &mut Writer, map: &AtlasMap, name: &str) -> anyhow::Result<()> {
    w.csv(&format!("{name}.csv"), &atlas_csv(map))?;
    let header = atlas_header(map, &Value::Null);
    let mut header = header.as_object().cloned().context("atlas header is an object")?;
    header.remove("config");
    w.json(&format!("{name}.json"), Value::Object(header))
}

fn cmd_atlas(cfg: &RunConfig, args: &AtlasArgs) -> anyhow::Result<Outcome> {
    let d = &cfg.design;
    let (name, map, command) = if args.kind.workspace {
        let spec = grid(cfg, &WORKSPACE_BOX)?;
        let map = classify_workspace_with(&spec, cfg.mode, d, cfg.atlas.boundary_factor)?;
        ("workspace", map, json!({ "atlas": "workspace" }))
    } else if args.kind.jointslice {
        let spec = grid(cfg, &JOINT_BOX)?;
        let map = classify_jointspace_slice(args.rho1, &spec, cfg.mode, d, &cfg.dkp)?;
        ("jointslice", map, json!({ "atlas": "jointslice", "rho1": args.rho1 }))
    } else {
        let spec = grid(cfg, &CHART_BOX)?;
        if let Some(s) = args.sign {
            if s != 1 && s != -1 {
                return Err(Usage::wrap(anyhow::anyhow!("--sign must be 1 or -1, got {s}")));
            }
        }
        let atlas = AtlasConfig {
            sign_filter: args.sign.or(cfg.atlas.sign_filter),
            ..cfg.atlas
        };
        let map = basic_regions(cfg.mode, args.z, &spec, d, &atlas)?;
        ("basic", map, json!({ "atlas": "basic", "z": args.z, "sign": atlas.sign_filter }))
    };
    let mut w = Writer::new(cfg, command)?;
    write_atlas(&mut w, &map, name)?;
    output::announce(w.written());
    Ok(Outcome::Done)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WaypointFile {
    Tagged {
        mode: Option<OperationMode>,
        waypoints: Vec<[f64; 3]>,
    },
    Bare(Vec<[f64; 3]>),
}

fn cmd_traj(cfg: &RunConfig, path: &PathBuf, close: bool) -> anyhow::Result<Outcome> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Usage::wrap)?;
    let file: WaypointFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing waypoints {}", path.display()))
        .map_err(Usage::wrap)?;
    let (mode, charts) = match file {
        WaypointFile::Tagged { mode, waypoints } => (mode.unwrap_or(cfg.mode), waypoints),
        WaypointFile::Bare(w) => (cfg.mode, w),
    };
    let mut poses = charts
        .iter()
        .map(|&[a, b, z]| Pose::new(mode, a, b, z))
        .collect::<rpskin::Result<Vec<_>>>()?;
    if poses.is_empty() {
        return Err(Usage::wrap(anyhow::anyhow!("no waypoints in {}", path.display())));
    }
    if close && poses.last() != poses.first() {
        poses.push(poses[0]);
    }

    let d = &cfg.design;
    let plan = plan_path(&poses, d, &cfg.trajectory)?;
    let profile = det_profile(&plan, d)?;
    let mut certificates = Vec::new();
    let mut failures = Vec::new();
    for w in poses.windows(2) {
        if ikp(&w[0], d).distance(&ikp(&w[1], d)) > AMC_JOINT_TOL || w[0] == w[1] {
            continue;
        }
        match certify_amc(&w[0], &w[1], &plan, d, &cfg.trajectory) {
            Ok(c) => certificates.push(c),
            Err(e) => failures.push(json!({ "start": w[0], "end": w[1], "error": e.to_string() })),
        }
    }

    let mut w = Writer::new(cfg, json!({ "traj": { "waypoints": path, "close": close } }))?;
    w.csv("profile.csv", &profile.to_csv())?;
    w.csv("jointspace.csv", &jointspace_csv(&profile))?;
    w.json(
        "certificate.json",
        json!({
            "plan": plan,
            "min_abs_det": profile.min_abs_det(),
            "constant_sign": profile.constant_sign(),
            "certificates": certificates,
            "failures": failures,
        }),
    )?;
    output::announce(w.written());
    if !profile.constant_sign() {
        return Ok(Outcome::Negative("det A changes sign along the plan".into()));
    }
    if !failures.is_empty() {
        return Ok(Outcome::Negative(format!("{} assembly-mode changes not certified", failures.len())));
    }
    Ok(Outcome::Done)
}

/// Columns `s, rho1, rho2, rho3`.
pub fn jointspace_csv(profile: &rpskin::trajectory::DetProfile) -> String {
    let mut s = String::from("s,rho1,rho2,rho3\n");
    for r in &profile.rows {
        s.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", r.s, r.rho[0], r.rho[1], r.rho[2]));
    }
    s
}

fn cmd_cusp(cfg: &RunConfig, lo: f64, hi: f64, step: f64) -> anyhow::Result<Outcome> {
    if hi < lo {
        return Err(Usage::wrap(anyhow::anyhow!("empty range [{lo}, {hi}]")));
    }
    let lines = sweep_cusp_curves(lo, hi, step, cfg.mode, &cfg.design, &cfg.continuation)?;
    let mut w = Writer::new(cfg, json!({ "cusp": { "rho1_range": [lo, hi], "step": step } }))?;
    w.csv("cusps.csv", &cusp_csv(&lines))?;
    output::announce(w.written());
    Ok(Outcome::Done)
}
