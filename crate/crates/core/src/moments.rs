//! Closed-form first and second moments.
//!
//! The building block is the Brownian meander on `[0, t]` pinned to `c` at
//! time `t`, whose mean `M1(s, t, c)` and second moment `M2(s, t, c)` are
//! elementary. Conditioning Brownian motion on `(θ, h, c)` splits the path
//! into two rescaled meanders hanging down from the maximum, so every
//! conditional moment below is a meander moment after an affine change of
//! variables. Dropping `c` or `h` integrates the meander mean against a
//! Gaussian or Rayleigh weight, which produces the function `G11`.

use std::f64::consts::{FRAC_2_SQRT_PI, PI};

use crate::analytic::{check_theta, ExtremaTriple};
use crate::error::{domain, Error, Result};
use crate::special::{erf, erfc, SQRT_2_OVER_PI};

const SQRT_HALF_PI: f64 = 1.253_314_137_315_500_3;

/// Mean and variance of `B(t)` under some conditioning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentPair {
    pub mean: f64,
    pub variance: f64,
}

impl MomentPair {
    /// Builds a pair, clamping roundoff-sized negative variances to zero.
    pub fn new(mean: f64, variance: f64) -> Self {
        debug_assert!(variance >= -1e-9, "variance {variance} is not roundoff");
        Self {
            mean,
            variance: if variance < 1e-12 { variance.max(0.0) } else { variance },
        }
    }
}

/// Mean and variance of `B(t)` sampled on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCurve {
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub label: String,
}

impl MomentCurve {
    pub fn new(times: Vec<f64>, means: Vec<f64>, variances: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if times.len() != means.len() || times.len() != variances.len() {
            return Err(Error::Config(format!(
                "curve columns differ in length: {} times, {} means, {} variances",
                times.len(),
                means.len(),
                variances.len()
            )));
        }
        if times.iter().any(|t| !(0.0..=1.0).contains(t)) || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("curve times must increase strictly within [0, 1]".into()));
        }
        if variances.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("curve variances must be nonnegative".into()));
        }
        Ok(Self {
            times,
            means,
            variances,
            label: label.into(),
        })
    }

    /// Evaluates `f` at each time of a caller-supplied grid.
    pub fn from_fn(times: &[f64], label: impl Into<String>, f: impl Fn(f64) -> Result<MomentPair>) -> Result<Self> {
        let mut means = Vec::with_capacity(times.len());
        let mut variances = Vec::with_capacity(times.len());
        for &t in times {
            let m = f(t)?;
            means.push(m.mean);
            variances.push(m.variance);
        }
        Self::new(times.to_vec(), means, variances, label)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_meander(op: &'static str, s: f64, t: f64, c: f64) -> Result<()> {
    if !(t > 0.0) || !(0.0..=t).contains(&s) {
        return Err(domain(op, format!("need 0 <= s <= t and t > 0, got s = {s}, t = {t}")));
    }
    if !(c >= 0.0) || !c.is_finite() {
        return Err(domain(op, format!("c = {c} must be finite and nonnegative")));
    }
    Ok(())
}

/// `erf(a c) / c`, with the series `2a/√π (1 − (ac)²/3 + (ac)⁴/10)` near `c = 0`.
fn erf_over_c(a: f64, c: f64) -> f64 {
    let z = a * c;
    if z < 1e-4 / std::f64::consts::SQRT_2 {
        let z2 = z * z;
        FRAC_2_SQRT_PI * a * (1.0 - z2 / 3.0 + z2 * z2 / 10.0)
    } else {
        erf(z) / c
    }
}

/// Mean of a meander on `[0, t]` at time `s`, pinned to `c` at `t`.
pub fn meander_m1(s: f64, t: f64, c: f64) -> Result<f64> {
    check_meander("meander_m1", s, t, c)?;
    if s == 0.0 {
        return Ok(0.0);
    }
    if s == t {
        return Ok(c);
    }
    let lag = t - s;
    let a = (s / (2.0 * t * lag)).sqrt();
    let lead = (lag + s * c * c / t) * erf_over_c(a, c);
    let tail = (2.0 * s * lag / (PI * t)).sqrt() * (-(a * c).powi(2)).exp();
    Ok(lead + tail)
}

/// Second moment of the pinned meander; a polynomial in `s` and `c`.
pub fn meander_m2(s: f64, t: f64, c: f64) -> Result<f64> {
    check_meander("meander_m2", s, t, c)?;
    Ok(3.0 * s * (t - s) / t + c * c * s * s / (t * t))
}

/// `M1(s, 1, c) − s c`: the lift of the unit-time meander mean above the
/// straight line to `c`. Writing the moments through this difference keeps
/// the variance free of cancellation when `c` is large.
fn meander_lift(s: f64, c: f64) -> f64 {
    if s == 0.0 || s == 1.0 {
        return 0.0;
    }
    let a = (s / (2.0 * (1.0 - s))).sqrt();
    let z = a * c;
    let sigma = (s * (1.0 - s)).sqrt();
    (1.0 - s) * erf_over_c(a, c) - s * c * erfc(z) + SQRT_2_OVER_PI * sigma * (-z * z).exp()
}

/// Variance of the unit-time meander at `s` pinned to `c`:
/// `3s(1−s) + c²s² − M1(s, 1, c)²`.
pub fn meander_var(s: f64, c: f64) -> Result<f64> {
    check_meander("meander_var", s, 1.0, c)?;
    Ok(unit_meander(s, c).variance)
}

fn unit_meander(s: f64, c: f64) -> MomentPair {
    let d = meander_lift(s, c);
    MomentPair::new(s * c + d, 3.0 * s * (1.0 - s) - 2.0 * s * c * d - d * d)
}

/// `√(2/π) [arctan √(s/(1−s)) + √(s(1−s))]`.
pub fn g11(s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(domain("g11", format!("s = {s} is outside [0, 1]")));
    }
    Ok(g11_unchecked(s))
}

fn g11_unchecked(s: f64) -> f64 {
    let r = 1.0 - s;
    SQRT_2_OVER_PI * (s.sqrt().atan2(r.sqrt()) + (s * r).sqrt())
}

/// Which side of the argmax a formula describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    /// `0 ≤ t ≤ θ`.
    Before,
    /// `θ ≤ t ≤ 1`.
    After,
}

impl Segment {
    fn of(t: f64, theta: f64) -> Self {
        if t <= theta {
            Segment::Before
        } else {
            Segment::After
        }
    }
}

fn check_segment(op: &'static str, seg: Segment, t: f64, theta: f64) -> Result<()> {
    let ok = match seg {
        Segment::Before => t <= theta,
        Segment::After => t >= theta,
    };
    if ok {
        Ok(())
    } else {
        Err(domain(op, format!("t = {t} is on the other side of theta = {theta}")))
    }
}

/// Moments of `B(t)` given argmax, maximum and close.
///
/// Left of `θ` the path is `h` minus a meander of length `θ` run backwards
/// from the maximum; right of `θ` it is `h` minus a meander of length `1 − θ`
/// ending at `h − c`.
pub fn cond_moments_given_c_theta_h(t: f64, cond: &ExtremaTriple) -> Result<MomentPair> {
    c_theta_h_on(Segment::of(t, cond.theta), t, cond)
}

/// One side's formula of [`cond_moments_given_c_theta_h`]; both sides are
/// defined at `t = θ`.
pub fn c_theta_h_on(seg: Segment, t: f64, cond: &ExtremaTriple) -> Result<MomentPair> {
    let ExtremaTriple { theta, h, c } = ExtremaTriple::new(cond.theta, cond.h, cond.c)?;
    check_t("cond_moments_given_c_theta_h", t)?;
    check_segment("cond_moments_given_c_theta_h", seg, t, theta)?;
    match seg {
        Segment::Before => {
            let s = 1.0 - t / theta;
            let root = theta.sqrt();
            let r = h / root;
            let d = meander_lift(s, r);
            let m = unit_meander(s, r);
            // h − √θ (s r + d) with h(1 − s) written as h t / θ so that t = 0 is exact
            Ok(MomentPair::new(h * t / theta - root * d, theta * m.variance))
        }
        Segment::After => {
            let span = 1.0 - theta;
            let s = (t - theta) / span;
            let root = span.sqrt();
            let q = (h - c) / root;
            let d = meander_lift(s, q);
            let m = unit_meander(s, q);
            let mean = if t == 1.0 { c } else { h - (h - c) * s - root * d };
            Ok(MomentPair::new(mean, span * m.variance))
        }
    }
}

/// Moments of `B(t)` given argmax and maximum. Right of `θ` the close is
/// integrated out and the mean drop below `h` no longer depends on `h`.
pub fn cond_moments_given_theta_h(t: f64, theta: f64, h: f64) -> Result<MomentPair> {
    theta_h_on(Segment::of(t, theta), t, theta, h)
}

/// One side's formula of [`cond_moments_given_theta_h`].
pub fn theta_h_on(seg: Segment, t: f64, theta: f64, h: f64) -> Result<MomentPair> {
    check_t("cond_moments_given_theta_h", t)?;
    check_theta("cond_moments_given_theta_h", theta)?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(domain("cond_moments_given_theta_h", format!("h = {h} must be positive")));
    }
    check_segment("cond_moments_given_theta_h", seg, t, theta)?;
    match seg {
        Segment::Before => c_theta_h_on(seg, t, &ExtremaTriple { theta, h, c: h }),
        Segment::After => {
            let span = 1.0 - theta;
            let s = (t - theta) / span;
            let g = g11_unchecked(s);
            Ok(MomentPair::new(h - span.sqrt() * g, span * (3.0 * s - s * s - g * g)))
        }
    }
}

/// Moments of `B(t)` given only the argmax; the maximum is Rayleigh with
/// scale `√θ` and is averaged out.
pub fn cond_moments_given_theta(t: f64, theta: f64) -> Result<MomentPair> {
    theta_on(Segment::of(t, theta), t, theta)
}

/// One side's formula of [`cond_moments_given_theta`].
pub fn theta_on(seg: Segment, t: f64, theta: f64) -> Result<MomentPair> {
    check_t("cond_moments_given_theta", t)?;
    check_theta("cond_moments_given_theta", theta)?;
    check_segment("cond_moments_given_theta", seg, t, theta)?;
    let mean_h = SQRT_HALF_PI * theta.sqrt();
    match seg {
        Segment::Before => {
            let s = 1.0 - t / theta;
            let g = g11_unchecked(s);
            let mean = theta.sqrt() * (SQRT_HALF_PI - g);
            let second = theta * (2.0 - 4.0 * s.sqrt() + 3.0 * s - s * s);
            Ok(MomentPair::new(mean, second - mean * mean))
        }
        Segment::After => {
            let span = 1.0 - theta;
            let s = (t - theta) / span;
            let g = g11_unchecked(s);
            let var_h = (2.0 - 0.5 * PI) * theta;
            Ok(MomentPair::new(mean_h - span.sqrt() * g, var_h + span * (3.0 * s - s * s - g * g)))
        }
    }
}

/// Moments of the close given the argmax.
pub fn b1_moments_given_theta(theta: f64) -> Result<MomentPair> {
    check_theta("b1_moments_given_theta", theta)?;
    Ok(MomentPair::new(
        SQRT_HALF_PI * (theta.sqrt() - (1.0 - theta).sqrt()),
        2.0 - 0.5 * PI,
    ))
}

fn check_t(op: &'static str, t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(domain(op, format!("t = {t} is outside [0, 1]")))
    }
}

/// Closed-form integrals used to assemble the moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AppendixIntegral {
    /// `∫_0^∞ x e^{-a x²} sinh(b x) dx`
    XSinh1 { a: f64, b: f64 },
    /// `∫_0^∞ x² e^{-a x²} sinh(b x) dx`
    XSinh2 { a: f64, b: f64 },
    /// `∫_0^∞ x³ e^{-a x²} sinh(b x) dx`
    XSinh3 { a: f64, b: f64 },
    /// `∫_0^∞ x M1(s, 1, x) e^{-x²/2} dx`, which equals `G11(s)`
    G11Integral { s: f64 },
    /// `∫_0^∞ x M2(s, 1, x) e^{-x²/2} dx = 3s − s²`
    M2Weighted { s: f64 },
    /// `∫_0^∞ x² M1(s, 1, x) e^{-x²/2} dx = 2√s`
    G12Integral { s: f64 },
}

/// Evaluates an [`AppendixIntegral`] from its closed form.
pub fn appendix_integral(kind: AppendixIntegral) -> Result<f64> {
    use AppendixIntegral::*;
    match kind {
        XSinh1 { a, b } | XSinh2 { a, b } | XSinh3 { a, b } => {
            if !(a > 0.0) {
                return Err(domain("appendix_integral", format!("a = {a} must be positive")));
            }
            let k = match kind {
                XSinh1 { .. } => 1,
                XSinh2 { .. } => 2,
                _ => 3,
            };
            Ok(x_sinh_scaled(k, a, b) * (b * b / (4.0 * a)).exp())
        }
        G11Integral { s } | M2Weighted { s } | G12Integral { s } => {
            if !(0.0..=1.0).contains(&s) {
                return Err(domain("appendix_integral", format!("s = {s} is outside [0, 1]")));
            }
            let r = 1.0 - s;
            let sigma = (s * r).sqrt();
            Ok(match kind {
                G11Integral { .. } => {
                    // κ/(κ+1) = s and √κ/(κ+1) = √(s(1−s)), so κ itself is never formed
                    let angle = s.sqrt().atan2(r.sqrt());
                    SQRT_2_OVER_PI * (angle + s * sigma + sigma * r)
                }
                M2Weighted { .. } => 3.0 * s - s * s,
                _ => {
                    // (1−s)√κ/√(1+κ) + s√κ(2κ+3)/(1+κ)^{3/2} + σ(1−s)^{3/2}, in terms of s
                    let root_s = s.sqrt();
                    r * root_s + s * root_s * (2.0 * s + 3.0 * r) + sigma * r * r.sqrt()
                }
            })
        }
    }
}

/// `e^{-b²/4a} ∫_0^∞ x^k e^{-a x²} sinh(b x) dx` for `k = 1, 2, 3`.
fn x_sinh_scaled(k: u32, a: f64, b: f64) -> f64 {
    let rp = PI.sqrt();
    match k {
        1 => rp * b / (4.0 * a.powf(1.5)),
        2 => {
            let z = b / (2.0 * a.sqrt());
            rp * (2.0 * a + b * b) * erf(z) / (8.0 * a.powf(2.5)) + b / (4.0 * a * a) * (-z * z).exp()
        }
        _ => rp * b * (6.0 * a + b * b) / (16.0 * a.powf(3.5)),
    }
}

/// Meander moment `M_k(s, t, c) = E[B^me(s)^k | B^me(t) = c]` for `k ≤ 2`,
/// assembled from the Gaussian–sinh integrals instead of the final closed
/// forms. An independent route to [`meander_m1`] and [`meander_m2`].
pub fn meander_moment_via_sinh(k: u32, s: f64, t: f64, c: f64) -> Result<f64> {
    check_meander("meander_moment_via_sinh", s, t, c)?;
    if k > 2 {
        return Err(domain("meander_moment_via_sinh", format!("k = {k} must be at most 2")));
    }
    if !(s > 0.0 && s < t && c > 0.0) {
        return Err(domain("meander_moment_via_sinh", "needs 0 < s < t and c > 0".to_string()));
    }
    let tau = t - s;
    let a = t / (2.0 * s * tau);
    let b = c / tau;
    // the exponents −c²/2τ + c²/2t + b²/4a cancel exactly
    let pre = (t / s).powf(1.5) / c * 2.0 / (2.0 * PI * tau).sqrt();
    Ok(pre * x_sinh_scaled(k + 1, a, b))
}

/// The conditioning sets with closed-form moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Givens {
    /// Only `B(0) = 0`.
    Nothing,
    /// The Brownian bridge to `c`.
    Close { c: f64 },
    Argmax { theta: f64 },
    ArgmaxHigh { theta: f64, h: f64 },
    CloseArgmaxHigh(ExtremaTriple),
}

impl Givens {
    pub fn moments(&self, t: f64) -> Result<MomentPair> {
        match *self {
            Givens::Nothing => {
                check_t("Givens::moments", t)?;
                Ok(MomentPair::new(0.0, t))
            }
            Givens::Close { c } => {
                check_t("Givens::moments", t)?;
                Ok(MomentPair::new(c * t, t * (1.0 - t)))
            }
            Givens::Argmax { theta } => cond_moments_given_theta(t, theta),
            Givens::ArgmaxHigh { theta, h } => cond_moments_given_theta_h(t, theta, h),
            Givens::CloseArgmaxHigh(cond) => cond_moments_given_c_theta_h(t, &cond),
        }
    }

    pub fn curve(&self, times: &[f64]) -> Result<MomentCurve> {
        MomentCurve::from_fn(times, self.label(), |t| self.moments(t))
    }

    pub fn label(&self) -> String {
        match self {
            Givens::Nothing => "B(t)".to_string(),
            Givens::Close { c } => format!("B(t) | c={c}"),
            Givens::Argmax { theta } => format!("B(t) | theta={theta}"),
            Givens::ArgmaxHigh { theta, h } => format!("B(t) | theta={theta}, h={h}"),
            Givens::CloseArgmaxHigh(p) => format!("B(t) | c={}, theta={}, h={}", p.c, p.theta, p.h),
        }
    }
}
