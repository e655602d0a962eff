//! The binned Monte Carlo pipeline.
//!
//! One run generates `n_sim` paths and feeds every path to one or more
//! [`PlanSpec`]s, each with its own conditioning set, grid and store. Sets
//! that contain the close are handled by shifting each path to every close
//! target, so a single set of raw paths serves all targets.
//!
//! Paths are split into fixed chunks. Chunks run on worker threads and are
//! merged in chunk order, so output does not depend on the thread count.

use std::thread;

use crate::error::{Error, Result};
use crate::estimator::{
    build_quantile_edges, empirical_curve, BinCurves, BinGrid, BinParams, BinStore, ConditioningSet, EdgeSource,
    Statistic, StoreOptions,
};
use crate::sampler::{lane, shift_to_close_into, summarize, Path, PathSummary, RandomSource};
use crate::special::std_normal_quantile;

/// Paths per work unit. Fixed so that results do not depend on threading.
pub const CHUNK: usize = 4096;
/// Paths used to place empirical quantile edges.
pub const PILOT: usize = 100_000;

/// User-facing run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_sim: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub n_bins: usize,
    pub conditioning: ConditioningSet,
    pub close_targets: Option<Vec<f64>>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sim == 0 {
            return Err(Error::Config("sims must be positive".into()));
        }
        if self.n_steps < 2 {
            return Err(Error::Config(format!("steps must be at least 2, got {}", self.n_steps)));
        }
        if self.n_bins < 2 {
            return Err(Error::Config(format!("bins must be at least 2, got {}", self.n_bins)));
        }
        if let Some(t) = &self.close_targets {
            if t.is_empty() || t.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config("close targets must be a nonempty list of finite numbers".into()));
            }
            if !self.conditioning.contains(Statistic::Close) {
                return Err(Error::Config("close targets need the close in the conditioning set".into()));
            }
        }
        Ok(())
    }

    /// Close targets in use: the given list, or the midpoint quantiles of the
    /// standard normal, one per bin.
    pub fn targets(&self) -> Vec<f64> {
        match &self.close_targets {
            Some(t) => t.clone(),
            None if self.conditioning.contains(Statistic::Close) => default_close_targets(self.n_bins),
            None => Vec::new(),
        }
    }

    /// The single plan this configuration describes.
    pub fn plan(&self) -> PlanSpec {
        PlanSpec {
            set: self.conditioning,
            n_bins: self.n_bins,
            edges: EdgeSource::Empirical,
            shift_close: self.conditioning.contains(Statistic::Close),
            time_stride: 1,
            store: StoreOptions::default(),
            grids: None,
        }
    }

    pub fn run_spec(&self) -> RunSpec {
        RunSpec {
            n_sim: self.n_sim,
            n_steps: self.n_steps,
            seed: self.seed,
            close_targets: self.targets(),
            plans: vec![self.plan()],
            pilot: PILOT,
            threads: default_threads(),
        }
    }
}

/// `Φ⁻¹((k + ½) / n)` for `k = 0..n`.
pub fn default_close_targets(n: usize) -> Vec<f64> {
    (0..n).map(|k| std_normal_quantile((k as f64 + 0.5) / n as f64)).collect()
}

/// Worker count: `BMCOND_THREADS` when set, else the available parallelism.
pub fn default_threads() -> usize {
    std::env::var("BMCOND_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
}

/// How one conditioning set is binned and stored.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSpec {
    pub set: ConditioningSet,
    pub n_bins: usize,
    pub edges: EdgeSource,
    /// Condition on the close by shifting to each run target instead of
    /// binning it.
    pub shift_close: bool,
    pub time_stride: usize,
    pub store: StoreOptions,
    /// Fixed grids, one per close target (or one when not shifting).
    pub grids: Option<Vec<BinGrid>>,
}

impl PlanSpec {
    /// Statistics that are binned by quantiles.
    pub fn binned_dims(&self) -> Vec<Statistic> {
        let set = if self.shift_close {
            self.set.without(Statistic::Close)
        } else {
            self.set
        };
        set.members()
    }
}

/// A full run: shared paths, several plans.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub n_sim: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub close_targets: Vec<f64>,
    pub plans: Vec<PlanSpec>,
    pub pilot: usize,
    pub threads: usize,
}

/// Which analytic curve a bin is compared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyticMode {
    /// The formula at the bin's count-weighted mean statistics.
    Representative,
    /// The average over the bin's paths of the formula at each path's own
    /// statistics.
    Mixture,
    /// The empirical curve itself.
    SelfCompare,
}

/// The merged output of one plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub spec: PlanSpec,
    /// One entry per grid: the close target, or `None` when not shifting.
    pub targets: Vec<Option<f64>>,
    pub grids: Vec<BinGrid>,
    pub store: BinStore,
}

impl PlanResult {
    /// First global cell id of each grid.
    pub fn offsets(&self) -> Vec<usize> {
        cell_offsets(&self.grids)
    }

    /// Grid index and local cell of a global cell id.
    pub fn split_cell(&self, cell: usize) -> (usize, usize) {
        let offsets = self.offsets();
        let k = offsets.partition_point(|&o| o <= cell) - 1;
        (k, cell - offsets[k])
    }

    /// Mean statistics of a bin, with the close set exactly to the target.
    pub fn params(&self, cell: usize) -> BinParams {
        let mut p = self.store.params(cell);
        if let Some(c) = self.targets[self.split_cell(cell).0] {
            p.close = c;
        }
        p
    }

    /// Empirical and analytic curves of every bin with at least `min_count`
    /// paths (and never fewer than two).
    pub fn bin_curves(&self, mode: AnalyticMode, min_count: u64) -> Result<Vec<BinCurves>> {
        let times = self.store.times();
        let mut out = Vec::new();
        for cell in 0..self.store.n_cells() {
            let acc = self.store.cell(cell);
            if acc.count() < min_count.max(2) {
                continue;
            }
            let params = self.params(cell);
            let shifted = BinParams {
                high: params.high + self.spec.store.high_shift,
                ..params
            };
            let empirical = empirical_curve(acc, &times, format!("sim {} bin {cell}", self.spec.set.label()))?;
            let analytic = match mode {
                AnalyticMode::SelfCompare => Some(empirical.clone()),
                AnalyticMode::Mixture => self.store.mixture_curve(cell),
                AnalyticMode::Representative => match self.spec.set.givens(&shifted) {
                    Some(g) => Some(g.curve(&times)?),
                    None => None,
                },
            };
            out.push(BinCurves {
                cell,
                count: acc.count(),
                params,
                empirical,
                analytic,
            });
        }
        Ok(out)
    }
}

/// Summary of the raw path and of its shift to each close target.
struct PathViews {
    raw: PathSummary,
    shifted: Vec<PathSummary>,
}

struct Workspace {
    path: Path,
    shifted: Vec<Path>,
    weights: Vec<u32>,
}

impl Workspace {
    fn new(n_steps: usize, n_targets: usize, n_boot: usize) -> Self {
        Self {
            path: Path::zeros(n_steps),
            shifted: (0..n_targets).map(|_| Path::zeros(n_steps)).collect(),
            weights: vec![0; n_boot],
        }
    }

    fn load(&mut self, seed: u64, index: u64, targets: &[f64]) -> PathViews {
        self.path.resample(&mut RandomSource::new(seed, index));
        let raw = summarize(&self.path, &mut RandomSource::for_lane(seed, lane::EDGE, index));
        let shifted = targets
            .iter()
            .zip(&mut self.shifted)
            .enumerate()
            .map(|(k, (&c, out))| {
                shift_to_close_into(&self.path, c, out);
                summarize(out, &mut RandomSource::for_lane(seed, lane::SHIFTED + k as u64, index))
            })
            .collect();
        PathViews { raw, shifted }
    }
}

/// Runs every plan of `spec` over the same paths.
pub fn run(spec: &RunSpec) -> Result<Vec<PlanResult>> {
    if spec.n_sim == 0 || spec.n_steps < 2 {
        return Err(Error::Config("need at least one path of at least 2 steps".into()));
    }
    let targets = &spec.close_targets;
    if spec.plans.iter().any(|p| p.shift_close) && targets.is_empty() {
        return Err(Error::Config("a plan shifts to the close but no targets were given".into()));
    }
    let grids = resolve_grids(spec)?;
    let offsets: Vec<Vec<usize>> = grids.iter().map(|g| cell_offsets(g)).collect();
    let fresh = || -> Result<Vec<BinStore>> {
        spec.plans
            .iter()
            .zip(&grids)
            .map(|(p, g)| {
                let cells = g.iter().map(BinGrid::n_cells).sum();
                BinStore::new(cells, spec.n_steps, p.time_stride, &p.store)
            })
            .collect()
    };
    let mut merged = fresh()?;
    let n_boot = spec.plans.iter().map(|p| p.store.bootstrap).max().unwrap_or(0);
    let n_chunks = spec.n_sim.div_ceil(CHUNK);
    let threads = spec.threads.max(1);

    let do_chunk = |chunk: usize| -> Result<Vec<BinStore>> {
        let mut stores = fresh()?;
        let mut ws = Workspace::new(spec.n_steps, targets.len(), n_boot);
        let end = ((chunk + 1) * CHUNK).min(spec.n_sim);
        for index in (chunk * CHUNK) as u64..end as u64 {
            let views = ws.load(spec.seed, index, targets);
            if n_boot > 0 {
                let mut rng = RandomSource::for_lane(spec.seed, lane::BOOTSTRAP, index);
                for w in &mut ws.weights {
                    *w = rng.poisson_one();
                }
            }
            for (((plan, plan_grids), offs), store) in spec.plans.iter().zip(&grids).zip(&offsets).zip(&mut stores) {
                if plan.shift_close {
                    for (k, (s, path)) in views.shifted.iter().zip(&ws.shifted).enumerate() {
                        let cell = offs[k] + plan_grids[k].locate(s);
                        store.push(cell, path.values(), s, &ws.weights)?;
                    }
                } else {
                    let cell = plan_grids[0].locate(&views.raw);
                    store.push(cell, ws.path.values(), &views.raw, &ws.weights)?;
                }
            }
        }
        Ok(stores)
    };

    let mut next = 0;
    while next < n_chunks {
        let wave = next..(next + threads).min(n_chunks);
        next = wave.end;
        let results: Vec<Result<Vec<BinStore>>> = if wave.len() == 1 {
            wave.map(do_chunk).collect()
        } else {
            thread::scope(|s| {
                let handles: Vec<_> = wave.map(|c| s.spawn(move || do_chunk(c))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
                    .collect()
            })
        };
        for stores in results {
            for (m, s) in merged.iter_mut().zip(stores?) {
                m.merge(&s);
            }
        }
    }

    Ok(spec
        .plans
        .iter()
        .zip(grids)
        .zip(merged)
        .map(|((plan, grids), store)| PlanResult {
            spec: plan.clone(),
            targets: if plan.shift_close {
                targets.iter().map(|&c| Some(c)).collect()
            } else {
                vec![None]
            },
            grids,
            store,
        })
        .collect())
}

fn cell_offsets(grids: &[BinGrid]) -> Vec<usize> {
    grids
        .iter()
        .scan(0, |acc, g| {
            let o = *acc;
            *acc += g.n_cells();
            Some(o)
        })
        .collect()
}

/// Grids for every plan, placing empirical edges from a pilot of the first
/// paths of the run.
fn resolve_grids(spec: &RunSpec) -> Result<Vec<Vec<BinGrid>>> {
    let targets = &spec.close_targets;
    let needs_pilot = spec
        .plans
        .iter()
        .any(|p| p.grids.is_none() && p.edges == EdgeSource::Empirical && !p.binned_dims().is_empty());
    let pilot: Vec<PathViews> = if needs_pilot {
        let n = spec.pilot.min(spec.n_sim);
        let mut ws = Workspace::new(spec.n_steps, targets.len(), 0);
        (0..n as u64).map(|i| ws.load(spec.seed, i, targets)).collect()
    } else {
        Vec::new()
    };
    let mut out = Vec::new();
    for plan in &spec.plans {
        let n_grids = if plan.shift_close { targets.len() } else { 1 };
        if let Some(g) = &plan.grids {
            if g.len() != n_grids {
                return Err(Error::Config(format!(
                    "plan {} needs {n_grids} grids",
                    plan.set.label()
                )));
            }
            out.push(g.clone());
            continue;
        }
        let dims = plan.binned_dims();
        let mut grids = Vec::with_capacity(n_grids);
        for k in 0..n_grids {
            if dims.is_empty() {
                grids.push(BinGrid::single());
                continue;
            }
            let edges = dims
                .iter()
                .map(|&d| {
                    let sample: Vec<f64> = match plan.edges {
                        EdgeSource::Analytic => Vec::new(),
                        EdgeSource::Empirical => pilot
                            .iter()
                            .map(|v| d.of(if plan.shift_close { &v.shifted[k] } else { &v.raw }))
                            .collect(),
                    };
                    build_quantile_edges(d, plan.n_bins, plan.edges, &sample)
                })
                .collect::<Result<Vec<_>>>()?;
            grids.push(BinGrid::new(dims.clone(), edges)?);
        }
        out.push(grids);
    }
    Ok(out)
}
