//! Quantile binning of path summaries and streaming per-bin moments.
//!
//! Paths are assigned to cells of a [`BinGrid`] built from quantiles of the
//! conditioning statistics. Each cell keeps a [`BinAccumulator`] with a
//! running mean and sum of squared deviations at every stored time, so a
//! bin's empirical mean and variance curves come out of a single pass.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::analytic::{ExtremaTriple, THETA_EPS};
use crate::error::{Error, Result};
use crate::moments::{Givens, MomentCurve, MomentPair};
use crate::sampler::PathSummary;
use crate::special::std_normal_quantile;

/// A statistic of a path that can be conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Statistic {
    Close,
    Argmax,
    High,
    Low,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [Statistic::Close, Statistic::Argmax, Statistic::High, Statistic::Low];

    pub fn of(self, s: &PathSummary) -> f64 {
        match self {
            Statistic::Close => s.close,
            Statistic::Argmax => s.argmax,
            Statistic::High => s.high,
            Statistic::Low => s.low,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Statistic::Close => 'c',
            Statistic::Argmax => 'a',
            Statistic::High => 'h',
            Statistic::Low => 'l',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Close => "close",
            Statistic::Argmax => "argmax",
            Statistic::High => "high",
            Statistic::Low => "low",
        }
    }

    fn bit(self) -> u8 {
        1 << self as u8
    }
}

/// A subset of {close, argmax, high, low}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ConditioningSet(u8);

impl ConditioningSet {
    pub fn empty() -> Self {
        Self(0)
    }

    pub fn of(stats: &[Statistic]) -> Self {
        Self(stats.iter().fold(0, |b, s| b | s.bit()))
    }

    pub fn contains(self, s: Statistic) -> bool {
        self.0 & s.bit() != 0
    }

    pub fn with(self, s: Statistic) -> Self {
        Self(self.0 | s.bit())
    }

    pub fn without(self, s: Statistic) -> Self {
        Self(self.0 & !s.bit())
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Members in the fixed order close, argmax, high, low.
    pub fn members(self) -> Vec<Statistic> {
        Statistic::ALL.into_iter().filter(|&s| self.contains(s)).collect()
    }

    /// Whether closed-form moments exist for this set.
    pub fn has_formulas(self) -> bool {
        use Statistic::*;
        let sets = [
            Self::empty(),
            Self::of(&[Close]),
            Self::of(&[Argmax]),
            Self::of(&[Argmax, High]),
            Self::of(&[Close, Argmax, High]),
        ];
        sets.contains(&self)
    }

    /// The analytic conditioning at the given statistics, when formulas exist
    /// and the point lies in their domain.
    pub fn givens(self, p: &BinParams) -> Option<Givens> {
        use Statistic::*;
        if !self.has_formulas() {
            return None;
        }
        let theta = p.argmax.clamp(THETA_EPS, 1.0 - THETA_EPS);
        let g = if self.is_empty() {
            Givens::Nothing
        } else if self == Self::of(&[Close]) {
            Givens::Close { c: p.close }
        } else if self == Self::of(&[Argmax]) {
            Givens::Argmax { theta }
        } else if self == Self::of(&[Argmax, High]) {
            if !(p.high > 0.0) {
                return None;
            }
            Givens::ArgmaxHigh { theta, h: p.high }
        } else {
            Givens::CloseArgmaxHigh(ExtremaTriple::new(theta, p.high.max(0.0), p.close.min(p.high.max(0.0))).ok()?)
        };
        Some(g)
    }

    /// A readable name such as `close+argmax+high`, or `start` when empty.
    pub fn label(self) -> String {
        if self.is_empty() {
            return "start".to_string();
        }
        self.members().iter().map(|s| s.name()).collect::<Vec<_>>().join("+")
    }

    pub fn letters(self) -> String {
        self.members().iter().map(|s| s.letter()).collect()
    }
}

impl FromStr for ConditioningSet {
    type Err = Error;

    /// Parses letters from `cahl` (any order), or `none`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "none" || s.is_empty() {
            return Ok(Self::empty());
        }
        let mut set = Self::empty();
        for ch in s.chars() {
            let stat = Statistic::ALL
                .into_iter()
                .find(|st| st.letter() == ch)
                .ok_or_else(|| Error::Config(format!("unknown statistic '{ch}' in '{s}', expected letters from 'cahl'")))?;
            if set.contains(stat) {
                return Err(Error::Config(format!("statistic '{ch}' repeated in '{s}'")));
            }
            set = set.with(stat);
        }
        Ok(set)
    }
}

impl fmt::Display for ConditioningSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Where quantile edges come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeSource {
    /// Closed-form quantiles of the unconditional marginals.
    Analytic,
    /// Order statistics of a sample.
    Empirical,
}

/// Quantile edges for `n_bins` equal-probability bins, with outer edges ±∞.
///
/// Empirical edges drop repeated order statistics, so a sample with atoms
/// can yield fewer bins.
pub fn build_quantile_edges(stat: Statistic, n_bins: usize, source: EdgeSource, sample: &[f64]) -> Result<Vec<f64>> {
    if n_bins < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {n_bins}")));
    }
    let interior: Vec<f64> = match source {
        EdgeSource::Analytic => (1..n_bins)
            .map(|k| {
                let q = k as f64 / n_bins as f64;
                match stat {
                    Statistic::Close => std_normal_quantile(q),
                    Statistic::Argmax => (0.5 * PI * q).sin().powi(2),
                    Statistic::High => std_normal_quantile(0.5 * (1.0 + q)),
                    Statistic::Low => -std_normal_quantile(1.0 - 0.5 * q),
                }
            })
            .collect(),
        EdgeSource::Empirical => {
            if sample.len() < 10 * n_bins {
                return Err(Error::InsufficientData(format!(
                    "{} edges from {} samples; need at least {}",
                    stat.name(),
                    sample.len(),
                    10 * n_bins
                )));
            }
            let mut sorted = sample.to_vec();
            sorted.sort_by(f64::total_cmp);
            // an atom (a high of exactly 0, say) repeats an order statistic;
            // such bins merge with their neighbour
            let mut e: Vec<f64> = (1..n_bins).map(|k| sorted[k * sorted.len() / n_bins - 1]).collect();
            e.dedup();
            e
        }
    };
    let mut edges = Vec::with_capacity(n_bins + 1);
    edges.push(f64::NEG_INFINITY);
    edges.extend(interior);
    edges.push(f64::INFINITY);
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InsufficientData(format!(
            "{} quantile edges are not strictly increasing",
            stat.name()
        )));
    }
    Ok(edges)
}

/// Quantile cells over an ordered list of statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BinGrid {
    dims: Vec<Statistic>,
    edges: Vec<Vec<f64>>,
}

impl BinGrid {
    pub fn new(dims: Vec<Statistic>, edges: Vec<Vec<f64>>) -> Result<Self> {
        if dims.len() != edges.len() {
            return Err(Error::Config("one edge vector per dimension is required".into()));
        }
        for e in &edges {
            if e.len() < 3 || e[0] != f64::NEG_INFINITY || e[e.len() - 1] != f64::INFINITY {
                return Err(Error::Config("edges need at least 2 bins and outer edges at ±∞".into()));
            }
            if e.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Config("edges must be strictly increasing".into()));
            }
        }
        Ok(Self { dims, edges })
    }

    /// The one-cell grid of an empty conditioning set.
    pub fn single() -> Self {
        Self {
            dims: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn dims(&self) -> &[Statistic] {
        &self.dims
    }

    pub fn edges(&self) -> &[Vec<f64>] {
        &self.edges
    }

    pub fn bins_per_dim(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.len() - 1).collect()
    }

    pub fn n_cells(&self) -> usize {
        self.bins_per_dim().iter().product()
    }

    /// Row-major cell index; the first dimension varies slowest.
    pub fn locate(&self, s: &PathSummary) -> usize {
        self.dims.iter().zip(&self.edges).fold(0, |acc, (d, e)| {
            let x = d.of(s);
            let k = e[1..e.len() - 1].partition_point(|&edge| edge <= x);
            acc * (e.len() - 1) + k
        })
    }

    /// Per-dimension bin indices of a cell.
    pub fn coords(&self, mut cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, e) in out.iter_mut().zip(&self.edges).rev() {
            let n = e.len() - 1;
            *slot = cell % n;
            cell /= n;
        }
        out
    }
}

/// Streaming per-time mean and sum of squared deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct BinAccumulator {
    count: u64,
    weight: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl BinAccumulator {
    pub fn new(n_times: usize) -> Self {
        Self {
            count: 0,
            weight: 0.0,
            mean: vec![0.0; n_times],
            m2: vec![0.0; n_times],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Sum of weights; equals the count when every push had weight one.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn n_times(&self) -> usize {
        self.mean.len()
    }

    /// Welford update with one observation per time.
    pub fn push(&mut self, xs: impl IntoIterator<Item = f64>) {
        self.count += 1;
        self.weight += 1.0;
        let inv = 1.0 / self.weight;
        for ((m, s), x) in self.mean.iter_mut().zip(&mut self.m2).zip(xs) {
            let d = x - *m;
            *m += d * inv;
            *s += d * (x - *m);
        }
    }

    /// Frequency-weighted update; weight zero is a no-op.
    pub fn push_weighted(&mut self, xs: impl IntoIterator<Item = f64>, w: f64) {
        if w == 0.0 {
            return;
        }
        self.count += 1;
        self.weight += w;
        let r = w / self.weight;
        for ((m, s), x) in self.mean.iter_mut().zip(&mut self.m2).zip(xs) {
            let d = x - *m;
            *m += d * r;
            *s += w * d * (x - *m);
        }
    }

    /// Chan's pairwise combination; equals accumulating the union.
    pub fn merge(&mut self, other: &BinAccumulator) {
        assert_eq!(self.n_times(), other.n_times(), "merging accumulators of different lengths");
        if other.weight == 0.0 {
            return;
        }
        if self.weight == 0.0 {
            self.clone_from(other);
            return;
        }
        let total = self.weight + other.weight;
        let f = other.weight / total;
        let g = self.weight * other.weight / total;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * f;
            self.m2[i] += other.m2[i] + d * d * g;
        }
        self.count += other.count;
        self.weight = total;
    }

    /// Unbiased sample variance per time.
    pub fn variance(&self) -> Result<Vec<f64>> {
        if self.weight < 2.0 {
            return Err(Error::InsufficientData(format!(
                "variance needs at least 2 paths, bin has {}",
                self.count
            )));
        }
        let den = self.weight - 1.0;
        Ok(self.m2.iter().map(|s| (s / den).max(0.0)).collect())
    }
}

/// Count-weighted mean statistics of the paths in a bin.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BinParams {
    pub close: f64,
    pub argmax: f64,
    pub high: f64,
    pub low: f64,
}

/// Sums over the paths in a bin of their own analytic moments, so that the
/// analytic curve of a bin can be the mixture over its members.
#[derive(Debug, Clone, PartialEq)]
struct MixtureSums {
    n: u64,
    mean: Vec<f64>,
    second: Vec<f64>,
}

/// Options for a [`BinStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct StoreOptions {
    /// Poisson bootstrap replicates kept per cell (0 disables).
    pub bootstrap: usize,
    /// Accumulate each path's analytic moments for mixture curves.
    pub mixture: Option<ConditioningSet>,
    /// Added to each path's high before its formula is evaluated; see
    /// [`grid_max_shift`].
    pub high_shift: f64,
    /// Upper bound on the bytes of per-cell, per-time storage.
    pub memory_cap: usize,
}

/// `−ζ(1/2)/√(2π)`: a random walk with `n` steps of variance `1/n` peaks
/// about this many multiples of `1/√n` below the Brownian path it samples.
pub const GRID_MAX_BIAS: f64 = 0.582_597_157_939_010_6;

/// Expected shortfall of the grid maximum at `n_steps` steps.
pub fn grid_max_shift(n_steps: usize) -> f64 {
    GRID_MAX_BIAS / (n_steps as f64).sqrt()
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self {
            bootstrap: 0,
            mixture: None,
            high_shift: 0.0,
            memory_cap: 2 << 30,
        }
    }
}

/// All per-cell accumulators of one conditioning plan.
#[derive(Debug, Clone, PartialEq)]
pub struct BinStore {
    n_steps: usize,
    time_index: Vec<usize>,
    cells: Vec<BinAccumulator>,
    params: Vec<[f64; 4]>,
    boot: Vec<Vec<BinAccumulator>>,
    mixture_set: Option<ConditioningSet>,
    mixture: Vec<MixtureSums>,
    high_shift: f64,
}

/// Bytes one cell needs per stored time.
fn bytes_per_cell_time(opts: &StoreOptions) -> usize {
    16 * (1 + opts.bootstrap) + if opts.mixture.is_some() { 16 } else { 0 }
}

impl BinStore {
    /// Storage for `n_cells` cells of paths with `n_steps` steps, keeping
    /// every `time_stride`-th grid time (the last time is always kept).
    pub fn new(n_cells: usize, n_steps: usize, time_stride: usize, opts: &StoreOptions) -> Result<Self> {
        if time_stride == 0 || n_steps == 0 || n_cells == 0 {
            return Err(Error::Config("cells, steps and time stride must be positive".into()));
        }
        let mut time_index: Vec<usize> = (0..=n_steps).step_by(time_stride).collect();
        if *time_index.last().unwrap() != n_steps {
            time_index.push(n_steps);
        }
        let times = time_index.len();
        let needed = n_cells
            .checked_mul(times)
            .and_then(|x| x.checked_mul(bytes_per_cell_time(opts)))
            .unwrap_or(usize::MAX);
        if needed > opts.memory_cap {
            return Err(Error::MemoryCap {
                bins: n_cells,
                times,
                needed,
                cap: opts.memory_cap,
            });
        }
        let mixture = match opts.mixture {
            Some(_) => vec![
                MixtureSums {
                    n: 0,
                    mean: vec![0.0; times],
                    second: vec![0.0; times],
                };
                n_cells
            ],
            None => Vec::new(),
        };
        Ok(Self {
            n_steps,
            cells: vec![BinAccumulator::new(times); n_cells],
            params: vec![[0.0; 4]; n_cells],
            boot: (0..opts.bootstrap).map(|_| vec![BinAccumulator::new(times); n_cells]).collect(),
            mixture_set: opts.mixture,
            mixture,
            high_shift: opts.high_shift,
            time_index,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Stored times as fractions of `[0, 1]`.
    pub fn times(&self) -> Vec<f64> {
        self.time_index.iter().map(|&j| j as f64 / self.n_steps as f64).collect()
    }

    pub fn time_index(&self) -> &[usize] {
        &self.time_index
    }

    pub fn cell(&self, cell: usize) -> &BinAccumulator {
        &self.cells[cell]
    }

    pub fn bootstrap_replicates(&self) -> usize {
        self.boot.len()
    }

    pub fn total_count(&self) -> u64 {
        self.cells.iter().map(|c| c.count()).sum()
    }

    /// Adds one path to `cell`. `weights` holds one Poisson bootstrap weight
    /// per replicate (only the first [`Self::bootstrap_replicates`] are read).
    pub fn push(&mut self, cell: usize, values: &[f64], summary: &PathSummary, weights: &[u32]) -> Result<()> {
        if values.len() != self.n_steps + 1 {
            return Err(Error::Config(format!(
                "path has {} steps, store expects {}",
                values.len().saturating_sub(1),
                self.n_steps
            )));
        }
        let idx = &self.time_index;
        self.cells[cell].push(idx.iter().map(|&j| values[j]));
        let p = &mut self.params[cell];
        p[0] += summary.close;
        p[1] += summary.argmax;
        p[2] += summary.high;
        p[3] += summary.low;
        for (reps, &w) in self.boot.iter_mut().zip(weights) {
            reps[cell].push_weighted(idx.iter().map(|&j| values[j]), w as f64);
        }
        if let Some(set) = self.mixture_set {
            let own = BinParams {
                close: summary.close,
                argmax: summary.argmax,
                high: summary.high + self.high_shift,
                low: summary.low,
            };
            if let Some(g) = set.givens(&own) {
                let m = &mut self.mixture[cell];
                m.n += 1;
                for (k, &j) in idx.iter().enumerate() {
                    let mp = g.moments(j as f64 / self.n_steps as f64)?;
                    m.mean[k] += mp.mean;
                    m.second[k] += mp.variance + mp.mean * mp.mean;
                }
            }
        }
        Ok(())
    }

    /// Folds `other` (same shape) into `self`.
    pub fn merge(&mut self, other: &BinStore) {
        assert_eq!(self.cells.len(), other.cells.len(), "merging stores of different shapes");
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.merge(b);
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for k in 0..4 {
                a[k] += b[k];
            }
        }
        for (ra, rb) in self.boot.iter_mut().zip(&other.boot) {
            for (a, b) in ra.iter_mut().zip(rb) {
                a.merge(b);
            }
        }
        for (a, b) in self.mixture.iter_mut().zip(&other.mixture) {
            a.n += b.n;
            for k in 0..a.mean.len() {
                a.mean[k] += b.mean[k];
                a.second[k] += b.second[k];
            }
        }
    }

    /// Count-weighted mean statistics of the paths in `cell`.
    pub fn params(&self, cell: usize) -> BinParams {
        let n = self.cells[cell].count().max(1) as f64;
        let p = self.params[cell];
        BinParams {
            close: p[0] / n,
            argmax: p[1] / n,
            high: p[2] / n,
            low: p[3] / n,
        }
    }

    /// Mixture-of-members analytic curve of `cell`, when it was accumulated.
    pub fn mixture_curve(&self, cell: usize) -> Option<MomentCurve> {
        let m = self.mixture.get(cell).filter(|m| m.n > 0)?;
        let n = m.n as f64;
        let means: Vec<f64> = m.mean.iter().map(|s| s / n).collect();
        let vars = m
            .second
            .iter()
            .zip(&means)
            .map(|(s, mu)| MomentPair::new(0.0, s / n - mu * mu).variance)
            .collect();
        MomentCurve::new(self.times(), means, vars, format!("mixture {}", self.mixture_set?.label())).ok()
    }

    /// Time-averaged squared bootstrap deviations of the mean and variance
    /// curves: the Monte Carlo error floor of the bin.
    pub fn bootstrap_floor(&self, cell: usize) -> Option<(f64, f64)> {
        if self.boot.is_empty() {
            return None;
        }
        let base = &self.cells[cell];
        let base_var = base.variance().ok()?;
        let times = self.times();
        let r = self.boot.len() as f64;
        let mut dm = vec![0.0; times.len()];
        let mut dv = vec![0.0; times.len()];
        for reps in &self.boot {
            let acc = &reps[cell];
            let var = acc.variance().ok()?;
            for k in 0..times.len() {
                dm[k] += (acc.mean()[k] - base.mean()[k]).powi(2) / r;
                dv[k] += (var[k] - base_var[k]).powi(2) / r;
            }
        }
        Some((time_average(&times, &dm), time_average(&times, &dv)))
    }

    /// Standard errors of the mean and variance at each stored time from the
    /// bootstrap replicates.
    pub fn bootstrap_standard_errors(&self, cell: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.boot.len() < 2 {
            return None;
        }
        let n_times = self.time_index.len();
        let r = self.boot.len() as f64;
        let mut sm = vec![0.0; n_times];
        let mut sv = vec![0.0; n_times];
        let mut means = Vec::new();
        let mut vars = Vec::new();
        for reps in &self.boot {
            means.push(reps[cell].mean().to_vec());
            vars.push(reps[cell].variance().ok()?);
        }
        for k in 0..n_times {
            let mm = means.iter().map(|m| m[k]).sum::<f64>() / r;
            let mv = vars.iter().map(|v| v[k]).sum::<f64>() / r;
            sm[k] = (means.iter().map(|m| (m[k] - mm).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
            sv[k] = (vars.iter().map(|v| (v[k] - mv).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
        }
        Some((sm, sv))
    }
}

/// Adds a path to the cell of `grid` that its summary falls in.
pub fn accumulate(summary: &PathSummary, values: &[f64], grid: &BinGrid, store: &mut BinStore, weights: &[u32]) -> Result<usize> {
    let cell = grid.locate(summary);
    store.push(cell, values, summary, weights)?;
    Ok(cell)
}

/// Sample mean and unbiased sample variance curves of an accumulator.
pub fn empirical_curve(acc: &BinAccumulator, times: &[f64], label: impl Into<String>) -> Result<MomentCurve> {
    let variances = acc.variance()?;
    if times.len() != acc.n_times() {
        return Err(Error::Config("time grid does not match the accumulator".into()));
    }
    MomentCurve::new(times.to_vec(), acc.mean().to_vec(), variances, label)
}

/// Trapezoid average of `ys` over `times`.
pub fn time_average(times: &[f64], ys: &[f64]) -> f64 {
    if times.len() < 2 {
        return ys.first().copied().unwrap_or(0.0);
    }
    let area: f64 = times
        .windows(2)
        .zip(ys.windows(2))
        .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
        .sum();
    area / (times[times.len() - 1] - times[0])
}

/// One bin's empirical and analytic curves, ready for ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct BinCurves {
    pub cell: usize,
    pub count: u64,
    pub params: BinParams,
    pub empirical: MomentCurve,
    pub analytic: Option<MomentCurve>,
}

/// One ranked bin.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub cell: usize,
    pub count: u64,
    pub params: BinParams,
    pub mse_mean: f64,
    pub mse_var: f64,
}

/// Which error orders the bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankBy {
    #[default]
    Mean,
    Variance,
}

/// Bins ranked from worst to best fit, with the bins at the requested
/// worst-quantile marks.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstFitReport {
    pub ranked: Vec<FitRow>,
    /// `(mark in percent, row)` for each requested mark.
    pub marks: Vec<(f64, FitRow)>,
}

/// Time-averaged squared gap between two curves on the same grid.
pub fn curve_mse(a: &MomentCurve, b: &MomentCurve) -> Result<(f64, f64)> {
    if a.times != b.times {
        return Err(Error::Config("curves are sampled on different time grids".into()));
    }
    let dm: Vec<f64> = a.means.iter().zip(&b.means).map(|(x, y)| (x - y).powi(2)).collect();
    let dv: Vec<f64> = a.variances.iter().zip(&b.variances).map(|(x, y)| (x - y).powi(2)).collect();
    Ok((time_average(&a.times, &dm), time_average(&a.times, &dv)))
}

/// Ranks bins with at least `min_count` paths by time-averaged MSE.
pub fn mse_rank(bins: &[BinCurves], marks: &[f64], min_count: u64, by: RankBy) -> Result<WorstFitReport> {
    let mut ranked = Vec::new();
    for b in bins.iter().filter(|b| b.count >= min_count) {
        let Some(analytic) = &b.analytic else { continue };
        let (mse_mean, mse_var) = curve_mse(&b.empirical, analytic)?;
        ranked.push(FitRow {
            cell: b.cell,
            count: b.count,
            params: b.params,
            mse_mean,
            mse_var,
        });
    }
    if ranked.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no bin with an analytic curve has at least {min_count} paths"
        )));
    }
    let key = |r: &FitRow| match by {
        RankBy::Mean => r.mse_mean,
        RankBy::Variance => r.mse_var,
    };
    ranked.sort_by(|a, b| key(b).total_cmp(&key(a)).then(a.cell.cmp(&b.cell)));
    let n = ranked.len();
    let marks = marks
        .iter()
        .map(|&m| {
            let i = ((m / 100.0) * n as f64).floor() as usize;
            (m, ranked[i.min(n - 1)].clone())
        })
        .collect();
    Ok(WorstFitReport { ranked, marks })
}

/// Count-weighted average over bins of the time-averaged sample variance.
pub fn time_avg_variance(store: &BinStore, min_count: u64) -> Result<f64> {
    let times = store.times();
    let (mut num, mut den) = (0.0, 0.0);
    for cell in 0..store.n_cells() {
        let acc = store.cell(cell);
        if acc.count() < min_count.max(2) {
            continue;
        }
        let n = acc.count() as f64;
        num += n * time_average(&times, &acc.variance()?);
        den += n;
    }
    if den == 0.0 {
        return Err(Error::InsufficientData(format!("no bin holds {min_count} paths")));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn summary(close: f64, argmax: f64, high: f64, low: f64) -> PathSummary {
        PathSummary {
            close,
            high,
            low,
            argmax,
            argmax_grid_index: 0,
        }
    }

    #[test]
    fn parse_sets() {
        let s: ConditioningSet = "hac".parse().unwrap();
        assert_eq!(s.letters(), "cah");
        assert_eq!(s.label(), "close+argmax+high");
        assert!(s.has_formulas());
        assert!(!"chl".parse::<ConditioningSet>().unwrap().has_formulas());
        assert!("cx".parse::<ConditioningSet>().is_err());
        assert!("cc".parse::<ConditioningSet>().is_err());
        assert_eq!("none".parse::<ConditioningSet>().unwrap(), ConditioningSet::empty());
        assert_eq!(ConditioningSet::empty().label(), "start");
    }

    #[test]
    fn analytic_edges() {
        let e = build_quantile_edges(Statistic::Argmax, 2, EdgeSource::Analytic, &[]).unwrap();
        assert_eq!(e.len(), 3);
        assert!((e[1] - 0.5).abs() < 1e-15);
        let e = build_quantile_edges(Statistic::High, 2, EdgeSource::Analytic, &[]).unwrap();
        assert!((e[1] - 0.674_489_750_196_081_7).abs() < 1e-15);
        let e = build_quantile_edges(Statistic::Close, 2, EdgeSource::Analytic, &[]).unwrap();
        assert_eq!(e[1], 0.0);
        let lo = build_quantile_edges(Statistic::Low, 4, EdgeSource::Analytic, &[]).unwrap();
        let hi = build_quantile_edges(Statistic::High, 4, EdgeSource::Analytic, &[]).unwrap();
        for k in 1..4 {
            assert!((lo[k] + hi[4 - k]).abs() < 1e-15);
        }
        assert_eq!(e[0], f64::NEG_INFINITY);
        assert_eq!(e[2], f64::INFINITY);
        assert!(build_quantile_edges(Statistic::Close, 1, EdgeSource::Analytic, &[]).is_err());
    }

    #[test]
    fn empirical_edges_are_order_statistics() {
        let sample: Vec<f64> = (1..=100).rev().map(|k| k as f64).collect();
        let e = build_quantile_edges(Statistic::High, 4, EdgeSource::Empirical, &sample).unwrap();
        assert_eq!(&e[1..4], &[25.0, 50.0, 75.0]);
        let mut atom = vec![0.0; 60];
        atom.extend((1..=40).map(|k| k as f64));
        let e = build_quantile_edges(Statistic::High, 4, EdgeSource::Empirical, &atom).unwrap();
        assert_eq!(&e[1..e.len() - 1], &[0.0, 15.0]);
        let err = build_quantile_edges(Statistic::High, 4, EdgeSource::Empirical, &sample[..39]);
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn grid_locates_row_major() {
        let g = BinGrid::new(
            vec![Statistic::Close, Statistic::High],
            vec![vec![f64::NEG_INFINITY, 0.0, f64::INFINITY], vec![f64::NEG_INFINITY, 0.5, 1.0, f64::INFINITY]],
        )
        .unwrap();
        assert_eq!(g.n_cells(), 6);
        assert_eq!(g.locate(&summary(-1.0, 0.5, 0.2, -1.0)), 0);
        assert_eq!(g.locate(&summary(0.0, 0.5, 0.5, -1.0)), 4);
        assert_eq!(g.locate(&summary(0.3, 0.5, 2.0, -1.0)), 5);
        assert_eq!(g.coords(4), vec![1, 1]);
        assert_eq!(BinGrid::single().n_cells(), 1);
        assert!(BinGrid::new(vec![Statistic::High], vec![vec![0.0, 1.0, 2.0]]).is_err());
    }

    #[test]
    fn accumulator_examples() {
        let mut a = BinAccumulator::new(3);
        a.push([0.0, 0.5, 1.0]);
        a.push([0.0, 0.5, 1.0]);
        assert_eq!(a.variance().unwrap(), vec![0.0; 3]);
        let mut b = BinAccumulator::new(1);
        b.push([0.0]);
        b.push([1.0]);
        assert_eq!(b.mean(), &[0.5]);
        assert_eq!(b.variance().unwrap(), vec![0.5]);
        assert_eq!(b.count(), 2);
        let mut c = BinAccumulator::new(1);
        c.push([1.0]);
        assert!(matches!(c.variance(), Err(Error::InsufficientData(_))));
        let times = [0.5];
        assert!(empirical_curve(&c, &times, "x").is_err());
        let curve = empirical_curve(&b, &times, "x").unwrap();
        assert_eq!(curve.variances, vec![0.5]);
    }

    #[test]
    fn weighted_push_matches_repeats() {
        let mut a = BinAccumulator::new(2);
        let mut b = BinAccumulator::new(2);
        for (x, w) in [(0.3, 2u32), (1.1, 0), (-0.4, 3), (2.0, 1)] {
            a.push_weighted([x, 2.0 * x], w as f64);
            for _ in 0..w {
                b.push([x, 2.0 * x]);
            }
        }
        assert_eq!(a.weight(), b.weight());
        for k in 0..2 {
            assert!((a.mean()[k] - b.mean()[k]).abs() < 1e-14);
            assert!((a.variance().unwrap()[k] - b.variance().unwrap()[k]).abs() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn merge_equals_union(xs in prop::collection::vec(-10.0f64..10.0, 2..60), split in 0usize..60) {
            let split = split.min(xs.len());
            let mut whole = BinAccumulator::new(2);
            let mut left = BinAccumulator::new(2);
            let mut right = BinAccumulator::new(2);
            for (i, &x) in xs.iter().enumerate() {
                whole.push([x, x * x]);
                if i < split { left.push([x, x * x]) } else { right.push([x, x * x]) }
            }
            left.merge(&right);
            prop_assert_eq!(left.count(), whole.count());
            let (vl, vw) = (left.variance().unwrap(), whole.variance().unwrap());
            for k in 0..2 {
                prop_assert!((left.mean()[k] - whole.mean()[k]).abs() <= 1e-9 * whole.mean()[k].abs().max(1.0));
                prop_assert!((vl[k] - vw[k]).abs() <= 1e-9 * vw[k].abs().max(1.0));
            }
        }

        #[test]
        fn edges_partition_the_sample(xs in prop::collection::vec(-5.0f64..5.0, 40..200), bins in 2usize..5) {
            let e = build_quantile_edges(Statistic::Close, bins, EdgeSource::Empirical, &xs);
            prop_assume!(e.is_ok());
            let g = BinGrid::new(vec![Statistic::Close], vec![e.unwrap()]).unwrap();
            let mut store = BinStore::new(g.n_cells(), 1, 1, &StoreOptions::default()).unwrap();
            for &x in &xs {
                accumulate(&summary(x, 0.5, x.max(0.0), x.min(0.0)), &[0.0, x], &g, &mut store, &[]).unwrap();
            }
            prop_assert_eq!(store.total_count(), xs.len() as u64);
        }
    }

    #[test]
    fn ranking_examples() {
        let times = vec![0.0, 0.5, 1.0];
        let curve = |m: f64, v: f64| MomentCurve::new(times.clone(), vec![m; 3], vec![v; 3], "c").unwrap();
        let bins = vec![
            BinCurves {
                cell: 0,
                count: 100,
                params: BinParams::default(),
                empirical: curve(0.0, 1.0),
                analytic: Some(curve(0.25, 1.0)),
            },
            BinCurves {
                cell: 1,
                count: 100,
                params: BinParams::default(),
                empirical: curve(0.0, 1.0),
                analytic: Some(curve(0.0, 1.0)),
            },
        ];
        let r = mse_rank(&bins, &[5.0, 50.0], 50, RankBy::Mean).unwrap();
        assert_eq!(r.ranked[0].cell, 0);
        assert!((r.ranked[0].mse_mean - 0.0625).abs() < 1e-15);
        assert_eq!(r.ranked[1].mse_mean, 0.0);
        assert_eq!(r.marks[0].1.cell, 0);
        assert_eq!(r.marks[1].1.cell, 1);
        let single = mse_rank(&bins[1..], &[5.0, 2.0, 1.0, 0.2], 50, RankBy::Mean).unwrap();
        assert!(single.marks.iter().all(|(_, row)| row.cell == 1));
        assert!(mse_rank(&bins, &[5.0], 1000, RankBy::Mean).is_err());
    }

    #[test]
    fn store_respects_memory_cap() {
        let opts = StoreOptions {
            memory_cap: 1000,
            ..StoreOptions::default()
        };
        match BinStore::new(100, 512, 1, &opts) {
            Err(Error::MemoryCap { bins, times, .. }) => assert_eq!((bins, times), (100, 513)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn store_time_grid_keeps_the_end() {
        let s = BinStore::new(1, 10, 4, &StoreOptions::default()).unwrap();
        assert_eq!(s.time_index(), &[0, 4, 8, 10]);
        assert!((time_average(&[0.0, 0.5, 1.0], &[0.0, 0.5, 1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mixture_of_one_point_is_the_formula() {
        let opts = StoreOptions {
            mixture: Some("c".parse().unwrap()),
            ..StoreOptions::default()
        };
        let mut store = BinStore::new(1, 4, 1, &opts).unwrap();
        let s = summary(0.8, 0.5, 1.0, 0.0);
        store.push(0, &[0.0, 0.2, 0.4, 0.6, 0.8], &s, &[]).unwrap();
        let m = store.mixture_curve(0).unwrap();
        assert!((m.means[2] - 0.4).abs() < 1e-15 && (m.variances[2] - 0.25).abs() < 1e-15);
    }
}
