//! The `bmcond` command line: analytic curves, binned simulations,
//! worst-fit reports and the time-averaged variance table.

pub mod output;
pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bmcond_core::analytic::ExtremaTriple;
use bmcond_core::estimator::{
    grid_max_shift, mse_rank, time_avg_variance, ConditioningSet, EdgeSource, RankBy, Statistic, StoreOptions,
};
use bmcond_core::moments::Givens;
use bmcond_core::simulation::{
    default_close_targets, default_threads, run, AnalyticMode, PlanResult, PlanSpec, RunSpec, SimulationConfig, PILOT,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

use output::{num, opt_num, write_csv, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] bmcond_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for usage errors, 3 for numerical-domain errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(bmcond_core::Error::Config(_)) => 2,
            CliError::Core(bmcond_core::Error::Domain { .. }) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bmcond", version, about = "Brownian motion conditioned on its close, high and argmax")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic mean and variance curves.
    Curves(CurvesArgs),
    /// Simulate, bin and write per-bin curves.
    Simulate(SimulateArgs),
    /// Rank bins by their gap to the formulas.
    WorstFit(WorstFitArgs),
    /// Time-averaged variance for each conditioning set.
    Table(TableArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveGiven {
    A,
    Ah,
    Cah,
    /// Every (theta, high) pair from comma lists.
    ThTable,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[arg(long, value_enum)]
    pub given: CurveGiven,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub high: Vec<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub close: Option<f64>,
    /// Number of equally spaced times on [0, 1].
    #[arg(long, default_value_t = 101)]
    pub times: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimFlags {
    #[arg(long, default_value_t = 200_000)]
    pub sims: usize,
    #[arg(long, default_value_t = 512)]
    pub steps: usize,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Letters from `cahl`, or `none`.
    #[arg(long, default_value = "cah")]
    pub given: ConditioningSet,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub close_targets: Option<Vec<f64>>,
    /// Keep every k-th grid time.
    #[arg(long, default_value_t = 1)]
    pub time_stride: usize,
    /// Evaluate formulas at the high plus the expected grid-maximum shortfall.
    #[arg(long)]
    pub correct_high: bool,
    /// Byte cap on per-bin, per-time storage.
    #[arg(long, default_value_t = 2 << 30)]
    pub memory_cap: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalyticArg {
    Representative,
    Mixture,
    #[value(name = "self")]
    SelfCompare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RankArg {
    Mean,
    Variance,
}

#[derive(Debug, Args)]
pub struct WorstFitArgs {
    #[command(flatten)]
    pub sim: SimFlags,
    /// Worst-fit marks in percent.
    #[arg(long, value_delimiter = ',', default_value = "5,2,1,0.2")]
    pub quantiles: Vec<f64>,
    #[arg(long, value_enum, default_value_t = AnalyticArg::Representative)]
    pub analytic: AnalyticArg,
    #[arg(long, value_enum, default_value_t = RankArg::Mean)]
    pub rank_by: RankArg,
    #[arg(long, default_value_t = 50)]
    pub min_count: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long, default_value_t = 200_000)]
    pub sims: usize,
    #[arg(long, default_value_t = 512)]
    pub steps: usize,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub time_stride: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command. Text meant for
/// the terminal goes to `stdout`.
pub fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cli = Cli::try_parse_from(args).map_err(|e| {
        if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
            let _ = write!(stdout, "{e}");
            return CliError::Usage(String::new());
        }
        CliError::Usage(e.to_string())
    });
    match cli {
        Ok(cli) => dispatch(cli, stdout),
        Err(CliError::Usage(msg)) if msg.is_empty() => Ok(()),
        Err(e) => Err(e),
    }
}

pub fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Curves(a) => cmd_curves(&a, stdout),
        Command::Simulate(a) => cmd_simulate(&a).map(|_| ()),
        Command::WorstFit(a) => cmd_worst_fit(&a).map(|_| ()),
        Command::Table(a) => cmd_table(&a, stdout),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn time_grid(n: usize) -> Result<Vec<f64>, CliError> {
    if n < 2 {
        return Err(usage("--times needs at least 2 points"));
    }
    Ok((0..n).map(|k| k as f64 / (n - 1) as f64).collect())
}

fn single(v: &[f64], flag: &str) -> Result<f64, CliError> {
    match v {
        [x] => Ok(*x),
        [] => Err(usage(format!("--given needs {flag}"))),
        _ => Err(usage(format!("{flag} takes one value here"))),
    }
}

pub fn cmd_curves(a: &CurvesArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let times = time_grid(a.times)?;
    let mut rows = Vec::new();
    let header: &[&str];
    let fixed = |g: Givens, rows: &mut Vec<Vec<String>>| -> Result<(), CliError> {
        for &t in &times {
            let m = g.moments(t)?;
            rows.push(vec![num(t), num(m.mean), num(m.variance)]);
        }
        Ok(())
    };
    match a.given {
        CurveGiven::A => {
            if !a.high.is_empty() || a.close.is_some() {
                return Err(usage("--given a takes only --theta"));
            }
            fixed(Givens::Argmax { theta: single(&a.theta, "--theta")? }, &mut rows)?;
            header = &["t", "mean_analytic", "var_analytic"];
        }
        CurveGiven::Ah => {
            if a.close.is_some() {
                return Err(usage("--given ah does not take --close"));
            }
            let (theta, h) = (single(&a.theta, "--theta")?, single(&a.high, "--high")?);
            fixed(Givens::ArgmaxHigh { theta, h }, &mut rows)?;
            header = &["t", "mean_analytic", "var_analytic"];
        }
        CurveGiven::Cah => {
            let (theta, h) = (single(&a.theta, "--theta")?, single(&a.high, "--high")?);
            let c = a.close.ok_or_else(|| usage("--given cah needs --close"))?;
            fixed(Givens::CloseArgmaxHigh(ExtremaTriple::new(theta, h, c)?), &mut rows)?;
            header = &["t", "mean_analytic", "var_analytic"];
        }
        CurveGiven::ThTable => {
            if a.theta.is_empty() || a.high.is_empty() {
                return Err(usage("--given th-table needs --theta and --high lists"));
            }
            if a.close.is_some() {
                return Err(usage("--given th-table does not take --close"));
            }
            for &theta in &a.theta {
                for &h in &a.high {
                    let g = Givens::ArgmaxHigh { theta, h };
                    for &t in &times {
                        let m = g.moments(t)?;
                        rows.push(vec![num(theta), num(h), num(t), num(m.mean), num(m.variance)]);
                    }
                }
            }
            header = &["theta", "high", "t", "mean_analytic", "var_analytic"];
        }
    }
    match &a.out {
        Some(p) => write_csv(fs::File::create(p)?, header, rows),
        None => write_csv(stdout, header, rows),
    }
}

fn sim_config(f: &SimFlags) -> Result<SimulationConfig, CliError> {
    let cfg = SimulationConfig {
        n_sim: f.sims,
        n_steps: f.steps,
        seed: f.seed,
        n_bins: f.bins,
        conditioning: f.given,
        close_targets: f.close_targets.clone(),
    };
    cfg.validate()?;
    if f.time_stride == 0 {
        return Err(usage("--time-stride must be positive"));
    }
    Ok(cfg)
}

fn run_single(f: &SimFlags, mixture: bool, manifest: &mut RunManifest) -> Result<PlanResult, CliError> {
    let cfg = sim_config(f)?;
    let mut spec = cfg.run_spec();
    let plan = &mut spec.plans[0];
    plan.time_stride = f.time_stride;
    plan.store = StoreOptions {
        mixture: (mixture && f.given.has_formulas()).then_some(f.given),
        high_shift: if f.correct_high { grid_max_shift(f.steps) } else { 0.0 },
        memory_cap: f.memory_cap,
        ..StoreOptions::default()
    };
    manifest.input("sims", f.sims);
    manifest.input("steps", f.steps);
    manifest.input("bins", f.bins);
    manifest.input("seed", f.seed);
    manifest.input("given", f.given.letters());
    manifest.input(
        "close_targets",
        spec.close_targets.iter().map(|&c| num(c)).collect::<Vec<_>>().join(","),
    );
    manifest.input("time_stride", f.time_stride);
    manifest.input("correct_high", f.correct_high);
    manifest.input("pilot", PILOT.min(f.sims));
    Ok(run(&spec)?.remove(0))
}

const BIN_HEADER: [&str; 11] = [
    "bin_id", "close", "argmax", "high", "low", "n_paths", "t", "mean_sim", "var_sim", "mean_analytic", "var_analytic",
];

/// Long-format rows: one per bin and stored time.
pub fn bin_rows(res: &PlanResult, mode: AnalyticMode) -> Result<Vec<Vec<String>>, CliError> {
    let mut rows = Vec::new();
    for b in res.bin_curves(mode, 2)? {
        let p = b.params;
        for k in 0..b.empirical.len() {
            rows.push(vec![
                b.cell.to_string(),
                num(p.close),
                num(p.argmax),
                num(p.high),
                num(p.low),
                b.count.to_string(),
                num(b.empirical.times[k]),
                num(b.empirical.means[k]),
                num(b.empirical.variances[k]),
                opt_num(b.analytic.as_ref().map(|a| a.means[k])),
                opt_num(b.analytic.as_ref().map(|a| a.variances[k])),
            ]);
        }
    }
    Ok(rows)
}

/// Runs a simulation and writes `bins.csv` and `manifest.txt` under `--out`.
pub fn cmd_simulate(a: &SimulateArgs) -> Result<Vec<PathBuf>, CliError> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("simulate");
    let res = run_single(&a.sim, false, &mut manifest)?;
    fs::create_dir_all(&a.out)?;
    let csv_path = a.out.join("bins.csv");
    write_csv(fs::File::create(&csv_path)?, &BIN_HEADER, bin_rows(&res, AnalyticMode::Representative)?)?;
    manifest.outputs.push(csv_path.clone());
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    let m = manifest.write(&a.out)?;
    Ok(vec![csv_path, m])
}

/// Ranks bins against the formulas and writes the report CSV and SVG.
pub fn cmd_worst_fit(a: &WorstFitArgs) -> Result<Vec<PathBuf>, CliError> {
    if a.quantiles.iter().any(|q| !(0.0..=100.0).contains(q)) {
        return Err(usage("--quantiles are percentages in [0, 100]"));
    }
    if !a.sim.given.has_formulas() && a.analytic != AnalyticArg::SelfCompare {
        return Err(usage(format!(
            "no formulas for {}; use --analytic self or a set among none, c, a, ah, cah",
            a.sim.given.label()
        )));
    }
    let start = Instant::now();
    let mut manifest = RunManifest::new("worst-fit");
    let mode = match a.analytic {
        AnalyticArg::Representative => AnalyticMode::Representative,
        AnalyticArg::Mixture => AnalyticMode::Mixture,
        AnalyticArg::SelfCompare => AnalyticMode::SelfCompare,
    };
    let res = run_single(&a.sim, mode == AnalyticMode::Mixture, &mut manifest)?;
    manifest.input("quantiles", a.quantiles.iter().map(|&q| num(q)).collect::<Vec<_>>().join(","));
    manifest.input("analytic", format!("{:?}", a.analytic).to_lowercase());
    manifest.input("rank_by", format!("{:?}", a.rank_by).to_lowercase());
    manifest.input("min_count", a.min_count);
    let by = match a.rank_by {
        RankArg::Mean => RankBy::Mean,
        RankArg::Variance => RankBy::Variance,
    };
    let curves = res.bin_curves(mode, a.min_count)?;
    let report = mse_rank(&curves, &a.quantiles, a.min_count, by)?;

    fs::create_dir_all(&a.out)?;
    let csv_path = a.out.join("worst_fit.csv");
    let rows = report.marks.iter().map(|(mark, r)| {
        let rank = report.ranked.iter().position(|x| x.cell == r.cell).unwrap_or(0) + 1;
        vec![
            num(*mark),
            rank.to_string(),
            r.cell.to_string(),
            r.count.to_string(),
            num(r.params.close),
            num(r.params.argmax),
            num(r.params.high),
            num(r.params.low),
            num(r.mse_mean),
            num(r.mse_var),
        ]
    });
    write_csv(
        fs::File::create(&csv_path)?,
        &["mark_pct", "rank", "bin_id", "n_paths", "close", "argmax", "high", "low", "mse_mean", "mse_var"],
        rows,
    )?;

    let mut mean_panel = svg::Panel {
        title: format!("mean, {} bins", res.spec.set.label()),
        series: Vec::new(),
    };
    let mut var_panel = svg::Panel {
        title: format!("variance, {} bins", res.spec.set.label()),
        series: Vec::new(),
    };
    for (i, (mark, row)) in report.marks.iter().enumerate() {
        let b = curves.iter().find(|b| b.cell == row.cell).expect("ranked bin has curves");
        let color = svg::PALETTE[i % svg::PALETTE.len()];
        let an = b.analytic.as_ref().expect("ranked bin has an analytic curve");
        let pts = |ys: &[f64]| b.empirical.times.iter().copied().zip(ys.iter().copied()).collect::<Vec<_>>();
        for (panel, sim, ana) in [
            (&mut mean_panel, &b.empirical.means, &an.means),
            (&mut var_panel, &b.empirical.variances, &an.variances),
        ] {
            panel.series.push(svg::Series {
                label: format!("worst {mark}% sim, bin {}", row.cell),
                points: pts(sim),
                color,
                markers: true,
            });
            panel.series.push(svg::Series {
                label: format!("worst {mark}% analytic, bin {}", row.cell),
                points: pts(ana),
                color,
                markers: false,
            });
        }
    }
    let svg_path = a.out.join("worst_fit.svg");
    fs::write(&svg_path, svg::render(&[mean_panel, var_panel]))?;
    manifest.outputs.push(csv_path.clone());
    manifest.outputs.push(svg_path.clone());
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    let m = manifest.write(&a.out)?;
    Ok(vec![csv_path, svg_path, m])
}

/// The rows of the variance table, in print order.
pub const TABLE_ROWS: [(&str, &str); 9] = [
    ("Start point only", "none"),
    ("Close", "c"),
    ("High", "h"),
    ("ArgMax", "a"),
    ("Close, High", "ch"),
    ("Close, ArgMax", "ca"),
    ("ArgMax, High", "ah"),
    ("Close, High, ArgMax", "cah"),
    ("Close, High, Low", "chl"),
];

/// Time-averaged variance for every table row from one shared run.
pub fn table_values(a: &TableArgs) -> Result<Vec<(&'static str, f64)>, CliError> {
    if a.bins < 2 || a.steps < 2 || a.sims == 0 || a.time_stride == 0 {
        return Err(usage("sims, steps, time-stride must be positive; bins and steps at least 2"));
    }
    let plans = TABLE_ROWS
        .iter()
        .map(|(_, letters)| {
            let set: ConditioningSet = letters.parse()?;
            Ok(PlanSpec {
                set,
                n_bins: a.bins,
                edges: EdgeSource::Empirical,
                shift_close: set.contains(Statistic::Close),
                time_stride: a.time_stride,
                store: StoreOptions::default(),
                grids: None,
            })
        })
        .collect::<Result<Vec<_>, bmcond_core::Error>>()?;
    let spec = RunSpec {
        n_sim: a.sims,
        n_steps: a.steps,
        seed: a.seed,
        close_targets: default_close_targets(a.bins),
        plans,
        pilot: PILOT,
        threads: default_threads(),
    };
    let results = run(&spec)?;
    TABLE_ROWS
        .iter()
        .zip(&results)
        .map(|((name, _), r)| Ok((*name, time_avg_variance(&r.store, 2)?)))
        .collect()
}

pub fn cmd_table(a: &TableArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let values = table_values(a)?;
    let mut text = format!("{:<22} {:>10} {:>10}\n", "Givens", "Var", "Var*6");
    for (name, v) in &values {
        text.push_str(&format!("{name:<22} {v:>10.5} {:>10.4}\n", 6.0 * v));
    }
    match &a.out {
        Some(p) => write_file(p, &text),
        None => Ok(stdout.write_all(text.as_bytes())?),
    }
}

fn write_file(p: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::write(p, text)?)
}
