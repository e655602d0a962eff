//! Globally adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! The interval with the largest error estimate is bisected until the summed
//! estimate falls below `max(abs_tol, rel_tol * |I|)`. Semi-infinite ranges are
//! handled by the caller, who truncates at a point where the integrand is
//! negligible (ten standard deviations for the Gaussian-tailed integrands used
//! in this workspace).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and limits for [`Quad::integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quad {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_intervals: 2000,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kron += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kron * half,
        error: ((kron - gauss) * half).abs(),
    }
}

impl Quad {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            abs_tol: tol,
            rel_tol: tol,
            ..Self::default()
        }
    }

    /// Integrates `f` over `[a, b]` (finite bounds).
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        assert!(a.is_finite() && b.is_finite(), "truncate infinite ranges first");
        if a == b {
            return 0.0;
        }
        let first = kronrod(&f, a, b);
        let mut total = first.value;
        let mut total_err = first.error;
        let mut heap = BinaryHeap::new();
        heap.push(first);
        while total_err > self.abs_tol.max(self.rel_tol * total.abs()) && heap.len() < self.max_intervals {
            let worst = heap.pop().expect("heap never empties");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // interval collapsed to machine precision
                heap.push(worst);
                break;
            }
            let left = kronrod(&f, worst.a, mid);
            let right = kronrod(&f, mid, worst.b);
            total += left.value + right.value - worst.value;
            total_err += left.error + right.error - worst.error;
            heap.push(left);
            heap.push(right);
        }
        // resum to shed the drift of the running updates
        heap.iter().map(|s| s.value).sum()
    }
}

/// One-dimensional integral at the default 1e-10 tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    Quad::default().integrate(f, a, b)
}

/// Iterated integral `∫_{x0}^{x1} ∫_{y0(x)}^{y1(x)} f(x, y) dy dx`.
pub fn integrate_2d<F, Lo, Hi>(quad: &Quad, f: F, x0: f64, x1: f64, y0: Lo, y1: Hi) -> f64
where
    F: Fn(f64, f64) -> f64,
    Lo: Fn(f64) -> f64,
    Hi: Fn(f64) -> f64,
{
    quad.integrate(|x| quad.integrate(|y| f(x, y), y0(x), y1(x)), x0, x1)
}

/// Iterated integral over a box whose inner bounds may depend on the outer
/// variables: `∫ dx ∫ dy ∫ dz f(x, y, z)`.
#[allow(clippy::too_many_arguments)]
pub fn integrate_3d<F, YLo, YHi, ZLo, ZHi>(
    quad: &Quad,
    f: F,
    x0: f64,
    x1: f64,
    y0: YLo,
    y1: YHi,
    z0: ZLo,
    z1: ZHi,
) -> f64
where
    F: Fn(f64, f64, f64) -> f64,
    YLo: Fn(f64) -> f64,
    YHi: Fn(f64) -> f64,
    ZLo: Fn(f64, f64) -> f64,
    ZHi: Fn(f64, f64) -> f64,
{
    quad.integrate(
        |x| quad.integrate(|y| quad.integrate(|z| f(x, y, z), z0(x, y), z1(x, y)), y0(x), y1(x)),
        x0,
        x1,
    )
}
