//! One-sample Kolmogorov-Smirnov statistic.

use crate::quad::Quad;

/// `sup_x |F_n(x) - F(x)|` for the empirical CDF of `samples`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0_f64, |acc, (i, &x)| {
        let f = cdf(x);
        let above = (i as f64 + 1.0) / n - f;
        let below = f - i as f64 / n;
        acc.max(above).max(below)
    })
}

/// KS statistic against the CDF of `density`, whose support starts at
/// `lower`. The CDF is accumulated by quadrature between consecutive order
/// statistics, so it is independent of any closed-form CDF.
pub fn ks_statistic_from_density<F: Fn(f64) -> f64>(samples: &[f64], density: F, lower: f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let quad = Quad::with_tol(1e-12);
    let n = xs.len() as f64;
    let (mut prev, mut cdf, mut d) = (lower, 0.0, 0.0_f64);
    for (i, &x) in xs.iter().enumerate() {
        if x > prev {
            cdf += quad.integrate(&density, prev, x);
            prev = x;
        }
        d = d.max((i as f64 + 1.0) / n - cdf).max(cdf - i as f64 / n);
    }
    d
}

/// Asymptotic critical value `c(α)/sqrt(n)`; supports α = 0.05 and 0.01.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    let c = if (alpha - 0.01).abs() < 1e-12 {
        1.63
    } else if (alpha - 0.05).abs() < 1e-12 {
        1.36
    } else {
        panic!("unsupported KS level {alpha}")
    };
    c / (n as f64).sqrt()
}
