//! Closed-form densities of Brownian motion on `[0, 1]` given its maximum
//! `h`, the time `θ` at which the maximum is attained, and its final value `c`.
//!
//! Three families live here:
//!
//! * the extrema densities `p(θ, h, c)` and all of their marginals and
//!   conditionals,
//! * the Brownian meander transition density built from the reflected
//!   Gaussian kernel `g_t(x, y) = φ_t(y − x) − φ_t(y + x)` and its
//!   Bayes-reversed form,
//! * the densities of `B(t)` given `(θ, h, c)` or `(θ, h)`, obtained by
//!   splicing two time-scaled meanders back to back at `θ`.
//!
//! Every function is pure. Large exponentials such as `exp(h²/2θ)` are
//! combined in log space before exponentiation so that the products stay
//! finite wherever the density itself is representable.

use std::f64::consts::{FRAC_1_PI, PI};

use crate::error::{domain, Result};
use crate::special::{erf, erfc, gauss_density, SQRT_2PI, SQRT_2_OVER_PI};

/// Values of `θ` closer than this to 0 or 1 are rejected: the densities blow
/// up like `θ^{-3/2}` there.
pub const THETA_EPS: f64 = 1e-9;

/// A time in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct UnitTime(f64);

impl UnitTime {
    pub fn new(t: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&t) {
            Ok(Self(t))
        } else {
            Err(domain("UnitTime", format!("t = {t} is outside [0, 1]")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// The conditioning statistics: argmax `theta`, maximum `h` and close `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremaTriple {
    pub theta: f64,
    pub h: f64,
    pub c: f64,
}

impl ExtremaTriple {
    pub fn new(theta: f64, h: f64, c: f64) -> Result<Self> {
        check_theta("ExtremaTriple", theta)?;
        if !(h >= 0.0 && h >= c) || !h.is_finite() || !c.is_finite() {
            return Err(domain(
                "ExtremaTriple",
                format!("need h >= max(0, c), got h = {h}, c = {c}"),
            ));
        }
        Ok(Self { theta, h, c })
    }
}

/// The intermediate quantities of the meander moment integrals for a
/// meander observed at `s` and pinned to `c` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanderKernelParams {
    /// `t - s`
    pub tau: f64,
    /// `t / (2 s (t - s))`, the Gaussian rate of the integrand
    pub a: f64,
    /// `c / (t - s)`, the sinh rate
    pub b: f64,
    /// `s / (1 - s)`
    pub kappa: f64,
    /// `sqrt(s (1 - s))`
    pub sigma: f64,
    /// `sqrt(s / t)`
    pub mu: f64,
}

impl MeanderKernelParams {
    pub fn new(s: f64, t: f64, c: f64) -> Result<Self> {
        if !(s > 0.0 && s < t && t <= 1.0) {
            return Err(domain("MeanderKernelParams", format!("need 0 < s < t <= 1, got s = {s}, t = {t}")));
        }
        let tau = t - s;
        let kappa = if s < 1.0 { s / (1.0 - s) } else { f64::INFINITY };
        Ok(Self {
            tau,
            a: t / (2.0 * s * tau),
            b: c / tau,
            kappa,
            sigma: (s * (1.0 - s)).sqrt(),
            mu: (s / t).sqrt(),
        })
    }
}

/// Outcome of a density of `B(t)` that degenerates to an atom at pinned times
/// (`t = 0`, `t = θ`, and `t = 1` when the close is given).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointDensity {
    Density(f64),
    /// All mass (`weight`) sits at `at`.
    PointMass { at: f64, weight: f64 },
}

impl PointDensity {
    /// The density value, or `None` at an atom.
    pub fn value(self) -> Option<f64> {
        match self {
            PointDensity::Density(v) => Some(v),
            PointDensity::PointMass { .. } => None,
        }
    }
}

pub(crate) fn check_theta(op: &'static str, theta: f64) -> Result<()> {
    if (THETA_EPS..=1.0 - THETA_EPS).contains(&theta) {
        Ok(())
    } else {
        Err(domain(op, format!("theta = {theta} is outside [{THETA_EPS:e}, 1 - {THETA_EPS:e}]")))
    }
}

fn check_time(op: &'static str, t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(domain(op, format!("t = {t} is outside [0, 1]")))
    }
}

/// `1 - exp(-2 u w / v)` divided by `w`, continuous at `w = 0`.
#[inline]
fn reflection_ratio(u: f64, w: f64, v: f64) -> f64 {
    if w == 0.0 {
        2.0 * u / v
    } else {
        -(-2.0 * u * w / v).exp_m1() / w
    }
}

/// `N_s(0, y)`: mass of N(0, s) on `[0, y]`, with the `s = 0` limit 1/2.
fn half_mass(s: f64, y: f64) -> f64 {
    if s <= 0.0 {
        if y > 0.0 {
            0.5
        } else {
            0.0
        }
    } else {
        0.5 * erf(y / (2.0 * s).sqrt())
    }
}

/// The reflected Gaussian kernel `g_t(x, y) = φ_t(y − x) − φ_t(y + x)`.
pub fn g_kernel(t: f64, x: f64, y: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(domain("g_kernel", format!("t = {t} must be positive")));
    }
    Ok(g_unchecked(t, x, y))
}

#[inline]
fn g_unchecked(t: f64, x: f64, y: f64) -> f64 {
    if x * y >= 0.0 {
        // φ_t(y-x) (1 - exp(-2xy/t)) keeps precision when the two terms are close
        gauss_density(t, y - x) * -(-2.0 * x * y / t).exp_m1()
    } else {
        gauss_density(t, y + x) * (2.0 * x * y / t).exp_m1()
    }
}

/// Joint density `p(θ, h, c)` of argmax, maximum and close.
pub fn joint_density_theta_h_c(p: &ExtremaTriple) -> Result<f64> {
    let ExtremaTriple { theta, h, c } = ExtremaTriple::new(p.theta, p.h, p.c)?;
    let w = h - c;
    let norm = PI * (theta * (1.0 - theta)).powf(1.5);
    Ok(h * w / norm * (-h * h / (2.0 * theta) - w * w / (2.0 * (1.0 - theta))).exp())
}

/// `p(θ, h | B(1) = c)`.
pub fn density_theta_h_given_c(theta: f64, h: f64, c: f64) -> Result<f64> {
    let joint = joint_density_theta_h_c(&ExtremaTriple::new(theta, h, c)?)?;
    Ok(joint * SQRT_2PI * (0.5 * c * c).exp())
}

/// `p(θ, h)`, the close integrated out.
pub fn density_theta_h(theta: f64, h: f64) -> Result<f64> {
    check_theta("density_theta_h", theta)?;
    if !(h > 0.0) {
        return Err(domain("density_theta_h", format!("h = {h} must be positive")));
    }
    Ok(FRAC_1_PI * h * (-h * h / (2.0 * theta)).exp() / (theta.powf(1.5) * (1.0 - theta).sqrt()))
}

/// `p(h | θ)`: Rayleigh with scale `sqrt(θ)`.
pub fn density_h_given_theta(h: f64, theta: f64) -> Result<f64> {
    check_theta("density_h_given_theta", theta)?;
    if !(h > 0.0) {
        return Err(domain("density_h_given_theta", format!("h = {h} must be positive")));
    }
    Ok(h / theta * (-h * h / (2.0 * theta)).exp())
}

/// `p(h, c)`, the argmax integrated out.
pub fn density_h_c(h: f64, c: f64) -> Result<f64> {
    if !(h >= 0.0 && h >= c) {
        return Err(domain("density_h_c", format!("need h >= max(0, c), got h = {h}, c = {c}")));
    }
    let u = 2.0 * h - c;
    Ok(SQRT_2_OVER_PI * u * (-0.5 * u * u).exp())
}

/// Half-normal density of the maximum.
pub fn marginal_density_h(h: f64) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(domain("marginal_density_h", format!("h = {h} must be nonnegative")));
    }
    Ok(SQRT_2_OVER_PI * (-0.5 * h * h).exp())
}

/// Arcsine density of the argmax.
pub fn marginal_density_theta(theta: f64) -> Result<f64> {
    check_theta("marginal_density_theta", theta)?;
    Ok(FRAC_1_PI / (theta * (1.0 - theta)).sqrt())
}

/// `p(θ, c)`, the maximum integrated out.
///
/// The two branches are time reversals of each other (`θ → 1 − θ`,
/// `c → −c`) and agree at `c = 0`, where `p(θ | c = 0)` is uniform.
pub fn density_theta_c(theta: f64, c: f64) -> Result<f64> {
    check_theta("density_theta_c", theta)?;
    if !c.is_finite() {
        return Err(domain("density_theta_c", format!("c = {c} must be finite")));
    }
    let root = (theta * (1.0 - theta)).sqrt();
    let tail = (c * c - 1.0) * (-0.5 * c * c).exp() / SQRT_2PI;
    let v = if c > 0.0 {
        let lead = c * theta * (-c * c / (2.0 * theta)).exp() / (PI * root);
        lead - tail * erfc(c * ((1.0 - theta) / (2.0 * theta)).sqrt())
    } else {
        let kappa = theta / (1.0 - theta);
        let lead = -c * (1.0 - theta) * (-c * c / (2.0 * (1.0 - theta))).exp() / (PI * root);
        lead - tail * erfc(-c * (kappa / 2.0).sqrt())
    };
    Ok(v)
}

/// Meander transition density `p(B^me(t) = y | B^me(s) = x)`.
///
/// With `s = 0` this is the one-point marginal
/// `2 y t^{-3/2} exp(-y²/2t) N_{1-t}(0, y)`, which is Rayleigh at `t = 1`.
pub fn meander_transition(s: f64, x: f64, t: f64, y: f64) -> Result<f64> {
    if !(0.0 <= s && s < t && t <= 1.0) {
        return Err(domain("meander_transition", format!("need 0 <= s < t <= 1, got s = {s}, t = {t}")));
    }
    if y <= 0.0 {
        return Ok(0.0);
    }
    if s == 0.0 {
        return Ok(2.0 * y * t.powf(-1.5) * (-y * y / (2.0 * t)).exp() * half_mass(1.0 - t, y));
    }
    if !(x > 0.0) {
        return Err(domain("meander_transition", format!("x = {x} must be positive")));
    }
    Ok(g_unchecked(t - s, x, y) * half_mass(1.0 - t, y) / half_mass(1.0 - s, x))
}

/// Bayes-reversed meander density `p(B^me(s) = x | B^me(t) = c)`.
pub fn meander_reverse_transition(s: f64, x: f64, t: f64, c: f64) -> Result<f64> {
    if !(0.0 < s && s < t && t <= 1.0) {
        return Err(domain(
            "meander_reverse_transition",
            format!("need 0 < s < t <= 1, got s = {s}, t = {t}"),
        ));
    }
    if !(c > 0.0) {
        return Err(domain("meander_reverse_transition", format!("c = {c} must be positive")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let tau = t - s;
    let log_e = -(c - x).powi(2) / (2.0 * tau) - x * x / (2.0 * s) + c * c / (2.0 * t);
    let reflect = -(-2.0 * x * c / tau).exp_m1();
    Ok(log_e.exp() / (2.0 * PI * tau).sqrt() * reflect * x * (t / s).powf(1.5) / c)
}

/// The `t = 1` restatement `g_{s(1-s)}(x, s c) · x / (s c)`: the radial
/// density of a three-dimensional Gaussian centred at distance `s c`.
pub fn meander_reverse_transition_unit_end(s: f64, x: f64, c: f64) -> Result<f64> {
    if !(0.0 < s && s < 1.0) || !(c > 0.0) {
        return Err(domain(
            "meander_reverse_transition_unit_end",
            format!("need 0 < s < 1 and c > 0, got s = {s}, c = {c}"),
        ));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let m = s * c;
    Ok(g_unchecked(s * (1.0 - s), x, m) * x / m)
}

/// `p(B(t) = x | θ, h, c)` from splicing two meanders at `θ`.
///
/// Returns an atom at the pinned times: `0` at `t = 0`, `h` at `t = θ`,
/// `c` at `t = 1`. Above the maximum the density is zero.
pub fn spliced_density_given_thc(x: f64, t: f64, cond: &ExtremaTriple) -> Result<PointDensity> {
    check_time("spliced_density_given_thc", t)?;
    let ExtremaTriple { theta, h, c } = ExtremaTriple::new(cond.theta, cond.h, cond.c)?;
    if let Some(at) = pinned_value(t, theta, h, Some(c)) {
        return Ok(PointDensity::PointMass { at, weight: 1.0 });
    }
    if x >= h {
        return Ok(PointDensity::Density(0.0));
    }
    let u = h - x;
    let v = if t < theta {
        let lag = theta - t;
        let log_e = -x * x / (2.0 * t) + h * h / (2.0 * theta) - u * u / (2.0 * lag);
        u * (theta / lag).powf(1.5) * reflection_ratio(u, h, t) * log_e.exp() / (2.0 * PI * t).sqrt()
    } else {
        let lag = t - theta;
        let rest = 1.0 - t;
        let w = h - c;
        let log_e = -(x - c).powi(2) / (2.0 * rest) + w * w / (2.0 * (1.0 - theta)) - u * u / (2.0 * lag);
        u * ((1.0 - theta) / lag).powf(1.5) * reflection_ratio(u, w, rest) * log_e.exp() / (2.0 * PI * rest).sqrt()
    };
    Ok(PointDensity::Density(v))
}

/// Joint density `p(B(t) = x, θ, h, c)`; the atoms carry weight `p(θ, h, c)`.
pub fn joint_density_x_thc(x: f64, t: f64, cond: &ExtremaTriple) -> Result<PointDensity> {
    check_time("joint_density_x_thc", t)?;
    let ExtremaTriple { theta, h, c } = ExtremaTriple::new(cond.theta, cond.h, cond.c)?;
    if let Some(at) = pinned_value(t, theta, h, Some(c)) {
        let weight = joint_density_theta_h_c(cond)?;
        return Ok(PointDensity::PointMass { at, weight });
    }
    if x >= h {
        return Ok(PointDensity::Density(0.0));
    }
    let u = h - x;
    let w = h - c;
    let v = if t < theta {
        let lag = theta - t;
        let e = (-u * u / (2.0 * lag) - w * w / (2.0 * (1.0 - theta))).exp();
        w * u / (PI * (1.0 - theta).powf(1.5) * lag.powf(1.5)) * g_unchecked(t, u, h) * e
    } else {
        let lag = t - theta;
        let e = (-u * u / (2.0 * lag) - h * h / (2.0 * theta)).exp();
        h * u / (PI * theta.powf(1.5) * lag.powf(1.5)) * g_unchecked(1.0 - t, u, w) * e
    };
    Ok(PointDensity::Density(v))
}

/// `p(B(t) = x | θ, h)`. Left of `θ` this coincides with the `(θ, h, c)`
/// density for every `c`; right of `θ` the close is integrated out, which
/// turns the reflected kernel into `erf((h − x)/sqrt(2(1 − t)))`.
pub fn density_x_given_th(x: f64, t: f64, theta: f64, h: f64) -> Result<PointDensity> {
    check_time("density_x_given_th", t)?;
    check_theta("density_x_given_th", theta)?;
    if !(h > 0.0) {
        return Err(domain("density_x_given_th", format!("h = {h} must be positive")));
    }
    if let Some(at) = pinned_value(t, theta, h, None) {
        return Ok(PointDensity::PointMass { at, weight: 1.0 });
    }
    if t < theta {
        // any admissible close gives the same value
        return spliced_density_given_thc(x, t, &ExtremaTriple { theta, h, c: h });
    }
    if x >= h {
        return Ok(PointDensity::Density(0.0));
    }
    let u = h - x;
    let lag = t - theta;
    let tail = if t < 1.0 { erf(u / (2.0 * (1.0 - t)).sqrt()) } else { 1.0 };
    Ok(PointDensity::Density(
        u * (1.0 - theta).sqrt() / lag.powf(1.5) * tail * (-u * u / (2.0 * lag)).exp(),
    ))
}

/// Joint density `p(B(t) = x, θ, h)`; atoms carry weight `p(θ, h)`.
pub fn joint_density_x_th(x: f64, t: f64, theta: f64, h: f64) -> Result<PointDensity> {
    match density_x_given_th(x, t, theta, h)? {
        PointDensity::Density(v) => Ok(PointDensity::Density(v * density_theta_h(theta, h)?)),
        PointDensity::PointMass { at, .. } => Ok(PointDensity::PointMass {
            at,
            weight: density_theta_h(theta, h)?,
        }),
    }
}

fn pinned_value(t: f64, theta: f64, h: f64, close: Option<f64>) -> Option<f64> {
    if t == 0.0 {
        Some(0.0)
    } else if t == theta {
        Some(h)
    } else if t == 1.0 {
        close
    } else {
        None
    }
}
