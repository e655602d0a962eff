//! Brownian path generation, path summaries and exact one-shot samplers.
//!
//! Randomness comes from [`RandomSource`], a ChaCha8 generator whose key is
//! derived from `(seed, lane)` and whose stream is a caller-chosen index.
//! Simulations key one stream per path, so the paths produced do not depend
//! on how work is split between threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{domain, Error, Result};

/// Independent key lanes derived from one user seed.
pub mod lane {
    /// Gaussian increments of the unshifted path.
    pub const PATH: u64 = 0;
    /// Edge-argmax draws of the unshifted path.
    pub const EDGE: u64 = 1;
    /// Poisson bootstrap weights.
    pub const BOOTSTRAP: u64 = 2;
    /// Edge-argmax draws after shifting to close target `k` use `SHIFTED + k`.
    pub const SHIFTED: u64 = 16;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A reproducible random stream identified by `(seed, lane, stream)`.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self::for_lane(seed, lane::PATH, stream)
    }

    /// A stream under a key derived from both `seed` and `lane`.
    pub fn for_lane(seed: u64, lane: u64, stream: u64) -> Self {
        let key = splitmix64(seed ^ splitmix64(lane.wrapping_add(0x5eed)));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Standard exponential.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        self.rng.sample(Exp1)
    }

    /// Standard normal.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Poisson(1) variate by inversion; used for bootstrap weights.
    pub fn poisson_one(&mut self) -> u32 {
        const E_INV: f64 = 0.367_879_441_171_442_33;
        let u = self.uniform();
        let (mut k, mut p) = (0u32, E_INV);
        let mut cdf = p;
        while u >= cdf && k < 30 {
            k += 1;
            p /= k as f64;
            cdf += p;
        }
        k
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// A discretely sampled path on the uniform grid `t_j = j / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    values: Vec<f64>,
}

impl Path {
    /// Wraps grid values; requires `values[0] = 0`, finite entries and at
    /// least one step.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || values[0] != 0.0 || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "a path needs at least two finite values starting at 0".into(),
            ));
        }
        Ok(Self { values })
    }

    /// An all-zero path with `n_steps` steps, for reuse as a buffer.
    pub fn zeros(n_steps: usize) -> Self {
        Self {
            values: vec![0.0; n_steps + 1],
        }
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 / self.n_steps() as f64
    }

    pub fn close(&self) -> f64 {
        self.values[self.n_steps()]
    }

    /// Overwrites the path with fresh N(0, dt) increments.
    pub fn resample(&mut self, rng: &mut RandomSource) {
        let sd = self.dt().sqrt();
        let mut acc = 0.0;
        self.values[0] = 0.0;
        for v in &mut self.values[1..] {
            acc += sd * rng.normal();
            *v = acc;
        }
    }
}

/// The statistics extracted from one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSummary {
    pub close: f64,
    pub high: f64,
    pub low: f64,
    /// Time of the maximum after parabolic interpolation.
    pub argmax: f64,
    pub argmax_grid_index: usize,
}

/// Random-walk path with independent N(0, 1/n) increments.
pub fn sample_standard_path(n_steps: usize, rng: &mut RandomSource) -> Result<Path> {
    if n_steps == 0 {
        return Err(Error::Config("n_steps must be at least 1".into()));
    }
    let mut path = Path::zeros(n_steps);
    path.resample(rng);
    Ok(path)
}

/// `B(t) − (B(1) − c) t`: the bridge tilt that moves the close to `c`.
pub fn shift_to_close(path: &Path, c: f64) -> Path {
    let mut out = Path::zeros(path.n_steps());
    shift_to_close_into(path, c, &mut out);
    out
}

/// [`shift_to_close`] into a preallocated path of the same length.
pub fn shift_to_close_into(path: &Path, c: f64, out: &mut Path) {
    assert_eq!(path.values.len(), out.values.len(), "shift target has the wrong length");
    let n = path.n_steps();
    let slope = path.close() - c;
    let nf = n as f64;
    for (j, (o, &v)) in out.values.iter_mut().zip(&path.values).enumerate() {
        *o = v - slope * (j as f64 / nf);
    }
    out.values[0] = 0.0;
    out.values[n] = c;
}

/// Close, high, low and interpolated argmax of a path.
///
/// The argmax is the vertex of the parabola through the grid maximum and its
/// two neighbours, clamped to one step either side. When the maximum sits on
/// the first or last grid point it is drawn uniformly within the adjacent
/// step using `rng`.
pub fn summarize(path: &Path, rng: &mut RandomSource) -> PathSummary {
    let v = &path.values;
    let n = path.n_steps();
    let dt = path.dt();
    let (mut i, mut high, mut low) = (0usize, v[0], v[0]);
    for (j, &x) in v.iter().enumerate().skip(1) {
        if x > high {
            high = x;
            i = j;
        }
        if x < low {
            low = x;
        }
    }
    let argmax = if i == 0 {
        dt * rng.uniform()
    } else if i == n {
        1.0 - dt * rng.uniform()
    } else {
        let (l, m, r) = (v[i - 1], v[i], v[i + 1]);
        let den = l - 2.0 * m + r;
        let offset = if den == 0.0 {
            0.0
        } else {
            (dt * (l - r) / (2.0 * den)).clamp(-dt, dt)
        };
        (path.time(i) + offset).clamp(0.0, 1.0)
    };
    PathSummary {
        close: v[n],
        high,
        low,
        argmax,
        argmax_grid_index: i,
    }
}

/// Maximum of a Brownian bridge from 0 to `c` on `[0, 1]`.
pub fn sample_bridge_max(c: f64, rng: &mut RandomSource) -> f64 {
    bridge_max_from_exponential(c, rng.exponential())
}

/// `c/2 + √(c² + 2E)/2`; inverts `P(H > h) = exp(−2h(h − c))`.
pub fn bridge_max_from_exponential(c: f64, e: f64) -> f64 {
    0.5 * (c + (c * c + 2.0 * e).sqrt())
}

/// A jointly sampled argmax, maximum and close of Brownian motion on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremaSample {
    pub theta: f64,
    pub high: f64,
    pub close: f64,
}

pub fn sample_theta_m_b1(rng: &mut RandomSource) -> ExtremaSample {
    let u = rng.uniform();
    let e = rng.exponential();
    let e2 = rng.exponential();
    theta_m_b1_from(u, e, e2)
}

/// `Θ = (1 + cos 2πU)/2`, `M = √(2ΘE)`, `B1 = M − √(2(1 − Θ)E′)`.
pub fn theta_m_b1_from(u: f64, e: f64, e2: f64) -> ExtremaSample {
    let theta = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * u).cos());
    let high = (2.0 * theta * e).sqrt();
    ExtremaSample {
        theta,
        high,
        close: high - (2.0 * (1.0 - theta) * e2).sqrt(),
    }
}

/// Value at time `t` of a meander on `[0, 1]` pinned to `c` at time 1.
pub fn sample_meander_marginal(t: f64, c: f64, rng: &mut RandomSource) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) || !(c >= 0.0) {
        return Err(domain(
            "sample_meander_marginal",
            format!("need 0 < t <= 1 and c >= 0, got t = {t}, c = {c}"),
        ));
    }
    let n = rng.normal();
    let e = rng.exponential();
    Ok(meander_marginal_from(t, c, n, e))
}

/// `√((ct + √(t(1−t)) N)² + 2E t(1−t))`: the radius of a three-dimensional
/// Brownian bridge, one coordinate of which ends at `c`.
pub fn meander_marginal_from(t: f64, c: f64, n: f64, e: f64) -> f64 {
    let v = t * (1.0 - t);
    let x = c * t + v.sqrt() * n;
    (x * x + 2.0 * e * v).sqrt()
}
