mod grid;

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::SystemTime;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use wlexit::exitlab::{
    output_file_names, raw_means, read_raw_csv, read_summary_csv, run_grid, write_raw_csv, write_summary_csv, ExperimentConfig,
    ModelSpec, RunManifest,
};
use wlexit::landscape::{
    theta_star_quadrature, Landscape, QuadratureOptions, DEFAULT_HALF_WIDTH, DEFAULT_STRATA, DEFAULT_UPSILON,
};
use wlexit::scalefit::{fit_exp_in_beta, fit_power_in_beta, fit_power_in_logeps, table_report, FitKind};
use wlexit::toy::DEFAULT_STEP_CAP;
use wlexit::{StepSchedule, UpdateRule};

use crate::grid::parse_grid;

#[derive(Parser)]
#[command(name = "wlexit", version, about = "Exit-time experiments for Wang-Landau sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exit times of the three-state chain over a grid of epsilon.
    ToyExit(ToyExitArgs),
    /// Exit times of the 2D double well over a grid of beta.
    Wl2dExit(Wl2dExitArgs),
    /// Log-linear fit of mean exit times from a summary or raw CSV.
    Fit(FitArgs),
    /// Reference stratum weights and free-energy profile by quadrature.
    ThetaStar(ThetaStarArgs),
    /// Re-run the experiment recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Zero gives the non-adaptive dynamics.
    #[arg(long = "gamma-star", default_value_t = 1.0)]
    gamma_star: f64,
    #[arg(long, default_value = "nonlinear")]
    update: UpdateRule,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 1000)]
    replicas: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Largest total number of steps per replica.
    #[arg(long = "step-cap", default_value_t = DEFAULT_STEP_CAP)]
    step_cap: u64,
    /// Record this many successive alternating exits per replica.
    #[arg(long)]
    successive: Option<usize>,
}

#[derive(Args)]
struct ToyExitArgs {
    /// `lo:hi:logN`, `lo:hi:linN` or a comma-separated list.
    #[arg(long = "eps-grid")]
    eps_grid: String,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct Wl2dExitArgs {
    /// `lo:hi:logN`, `lo:hi:linN` or a comma-separated list.
    #[arg(long = "beta-grid")]
    beta_grid: String,
    /// Half-width of the stratified interval in x1.
    #[arg(long = "R", default_value_t = DEFAULT_HALF_WIDTH)]
    half_width: f64,
    /// Number of strata.
    #[arg(long = "d", default_value_t = DEFAULT_STRATA)]
    strata: usize,
    /// Standard deviation of the Gaussian proposal.
    #[arg(long, default_value_t = DEFAULT_UPSILON)]
    upsilon: f64,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct FitArgs {
    /// Summary CSV (`mean` column) or raw CSV (`exit_time` column).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    kind: FitKind,
    /// Expected slope; overrides the one implied by the schedule.
    #[arg(long)]
    expected: Option<f64>,
    /// Drop points whose abscissa is below this: beta, or ln(1/eps) for
    /// power-logeps.
    #[arg(long = "min-x")]
    min_x: Option<f64>,
    /// Schedule of the data; read from a sibling manifest.json when absent.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "gamma-star")]
    gamma_star: Option<f64>,
    /// Also write the fit JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ThetaStarArgs {
    #[arg(long)]
    beta: f64,
    #[arg(long = "R", default_value_t = DEFAULT_HALF_WIDTH)]
    half_width: f64,
    #[arg(long = "d", default_value_t = DEFAULT_STRATA)]
    strata: usize,
    /// Integration range in x2 as `lo:hi`.
    #[arg(long = "x2-window", default_value = "-3:3.5", allow_hyphen_values = true)]
    x2_window: String,
    /// Gauss-Legendre panels per stratum width.
    #[arg(long, default_value_t = 2)]
    resolution: usize,
    /// Largest relative weight change allowed when doubling the resolution.
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    /// Output directory; the CSV goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

type CmdResult = Result<(), Failure>;

/// Files written by the current command, deleted again if it fails.
struct Outputs {
    files: Vec<PathBuf>,
    created_dir: Option<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn in_dir(dir: &Path) -> anyhow::Result<Self> {
        let created_dir = if dir.exists() {
            None
        } else {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            Some(dir.to_path_buf())
        };
        Ok(Self {
            files: Vec::new(),
            created_dir,
            committed: false,
        })
    }

    fn track(&mut self, path: PathBuf) -> PathBuf {
        self.files.push(path.clone());
        path
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if let Some(d) = &self.created_dir {
            let _ = fs::remove_dir(d);
        }
    }
}

fn run_experiment(config: ExperimentConfig, dir: &Path) -> CmdResult {
    config.validate().map_err(usage)?;
    let started = SystemTime::now();
    let run = run_grid(&config).context("experiment failed")?;

    let mut out = Outputs::in_dir(dir)?;
    let k = run.series.len();
    for s in &run.series {
        let (raw, summary) = output_file_names(s.exit_index, k);
        let raw = out.track(dir.join(raw));
        write_raw_csv(&raw, s).with_context(|| format!("writing {}", raw.display()))?;
        let summary = out.track(dir.join(summary));
        let summaries = s.summaries();
        write_summary_csv(&summary, &summaries).with_context(|| format!("writing {}", summary.display()))?;

        if k > 1 {
            println!("exit {}", s.exit_index);
        }
        println!(
            "{:>12} {:>14} {:>12} {:>14} {:>8} {:>7}",
            config.model.grid_name(),
            "mean",
            "stderr",
            "median",
            "m_eff",
            "capped"
        );
        for r in &summaries {
            println!(
                "{:>12} {:>14.4} {:>12.4} {:>14.1} {:>8} {:>7}",
                r.grid_value, r.mean, r.stderr, r.median, r.m_effective, r.capped_count
            );
            if r.capped_count > 0 {
                eprintln!(
                    "warning: {} replicas hit the step cap at {} = {}",
                    r.capped_count,
                    config.model.grid_name(),
                    r.grid_value
                );
            }
        }
    }
    let manifest_path = out.track(dir.join("manifest.json"));
    let manifest = RunManifest::new(config, started, &out.files);
    manifest.write(&manifest_path).context("writing manifest")?;
    out.committed = true;
    Ok(())
}

fn schedule(args: &ScheduleArgs) -> Result<StepSchedule, Failure> {
    StepSchedule::new(args.gamma_star, args.alpha).map_err(usage)
}

fn experiment(model: ModelSpec, grid: &str, sched: &ScheduleArgs, run: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let grid = parse_grid(grid).map_err(usage)?;
    let mut cfg = ExperimentConfig::new(model, grid, schedule(sched)?, run.replicas, run.seed);
    cfg.update_rule = sched.update;
    cfg.step_cap = run.step_cap;
    cfg.exits = run.successive.unwrap_or(1);
    Ok(cfg)
}

fn cmd_toy_exit(args: ToyExitArgs) -> CmdResult {
    let cfg = experiment(ModelSpec::Toy, &args.eps_grid, &args.schedule, &args.run)?;
    run_experiment(cfg, &args.run.out)
}

fn cmd_wl2d_exit(args: Wl2dExitArgs) -> CmdResult {
    let model = ModelSpec::Landscape {
        half_width: args.half_width,
        strata: args.strata,
        upsilon: args.upsilon,
    };
    let cfg = experiment(model, &args.beta_grid, &args.schedule, &args.run)?;
    run_experiment(cfg, &args.run.out)
}

fn cmd_replay(args: ReplayArgs) -> CmdResult {
    let manifest = RunManifest::read(&args.manifest)
        .with_context(|| format!("cannot read manifest {}", args.manifest.display()))?;
    run_experiment(manifest.config, &args.out)
}

fn read_points(path: &Path) -> anyhow::Result<Vec<(f64, f64)>> {
    let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut header = String::new();
    BufReader::new(file).read_line(&mut header)?;
    let columns: Vec<&str> = header.trim().split(',').collect();
    if columns.contains(&"mean") {
        let rows = read_summary_csv(path)?;
        for r in rows.iter().filter(|r| r.capped_count > 0) {
            eprintln!("warning: {} capped replicas at {}", r.capped_count, r.grid_value);
        }
        Ok(rows
            .iter()
            .filter(|r| r.m_effective > 0 && r.mean.is_finite())
            .map(|r| (r.grid_value, r.mean))
            .collect())
    } else if columns.contains(&"exit_time") {
        Ok(raw_means(&read_raw_csv(path)?))
    } else {
        bail!("{} has neither a mean nor an exit_time column", path.display())
    }
}

fn fit_schedule(args: &FitArgs) -> Result<Option<StepSchedule>, Failure> {
    if let (Some(a), Some(g)) = (args.alpha, args.gamma_star) {
        return StepSchedule::new(g, a).map(Some).map_err(usage);
    }
    let sibling = args.input.parent().unwrap_or(Path::new(".")).join("manifest.json");
    let from_manifest = RunManifest::read(&sibling).ok().map(|m| m.config.schedule);
    Ok(match (args.alpha, args.gamma_star, from_manifest) {
        (Some(a), None, Some(s)) => Some(StepSchedule::new(s.gamma_star(), a).map_err(usage)?),
        (None, Some(g), Some(s)) => Some(StepSchedule::new(g, s.alpha()).map_err(usage)?),
        (None, None, s) => s,
        _ => return Err(usage(anyhow!("give both --alpha and --gamma-star"))),
    })
}

fn cmd_fit(args: FitArgs) -> CmdResult {
    let points = read_points(&args.input)?;
    let sched = fit_schedule(&args)?;
    let fit = match args.kind {
        FitKind::ExpBeta => fit_exp_in_beta(&points, args.min_x),
        FitKind::PowerBeta => fit_power_in_beta(&points, sched.map(|s| s.alpha()), args.min_x),
        FitKind::PowerLogEps => {
            let s = sched.ok_or_else(|| {
                usage(anyhow!(
                    "power-logeps needs the schedule: pass --alpha and --gamma-star or keep manifest.json next to the input"
                ))
            })?;
            fit_power_in_logeps(&points, &s, args.min_x)
        }
    }
    .context("fit failed")?;
    let fit = match args.expected {
        Some(e) => fit.with_expected(e),
        None => fit,
    };

    let label = serde_json::to_value(fit.kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let report = table_report(&[(label, fit.clone())], &[]).context("report")?;
    print!("{}", report.to_text());
    let json = serde_json::to_string_pretty(&fit).context("serializing fit")?;
    println!("{json}");
    if let Some(path) = &args.json {
        fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ThetaStarManifest {
    landscape: Landscape,
    quadrature: QuadratureOptions,
    max_relative_change: f64,
    library_version: String,
    outputs: Vec<String>,
}

fn cmd_theta_star(args: ThetaStarArgs) -> CmdResult {
    let window: Vec<&str> = args.x2_window.split(':').collect();
    let [lo, hi] = window.as_slice() else {
        return Err(usage(anyhow!("--x2-window must look like lo:hi")));
    };
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| usage(anyhow!("bad --x2-window bound {s:?}: {e}")));
    let opts = QuadratureOptions {
        x2_min: parse(lo)?,
        x2_max: parse(hi)?,
        resolution: args.resolution,
        tolerance: args.tolerance,
    };
    // Only beta matters for the stratum weights; the proposal width is unused.
    let landscape = Landscape::new(args.beta, args.half_width, args.strata, DEFAULT_UPSILON).map_err(usage)?;
    if !(opts.x2_max > opts.x2_min) || opts.resolution == 0 || !(opts.tolerance > 0.0) {
        return Err(usage(anyhow!("invalid quadrature options")));
    }
    let theta = theta_star_quadrature(&landscape, &opts).context("quadrature")?;
    eprintln!("max relative change on doubling resolution: {:.3e}", theta.max_relative_change);

    let mut csv = String::from("stratum,x1_left,x1_right,theta_star,free_energy\n");
    let fe = theta.free_energy(args.beta);
    for l in 0..landscape.strata {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            l + 1,
            landscape.boundary(l),
            landscape.boundary(l + 1),
            theta.weights[l],
            fe[l]
        ));
    }

    let Some(dir) = args.out else {
        print!("{csv}");
        return Ok(());
    };
    let mut out = Outputs::in_dir(&dir)?;
    let path = out.track(dir.join("theta_star.csv"));
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    let manifest = ThetaStarManifest {
        landscape,
        quadrature: opts,
        max_relative_change: theta.max_relative_change,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: vec!["theta_star.csv".into()],
    };
    let mpath = out.track(dir.join("manifest.json"));
    fs::write(&mpath, serde_json::to_string_pretty(&manifest).context("manifest")?)
        .with_context(|| format!("writing {}", mpath.display()))?;
    out.committed = true;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::ToyExit(a) => cmd_toy_exit(a),
        Command::Wl2dExit(a) => cmd_wl2d_exit(a),
        Command::Fit(a) => cmd_fit(a),
        Command::ThetaStar(a) => cmd_theta_star(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
