//! Acceptance checks, one line per criterion.
//!
//! Prints `PASS` or `FAIL` for each of the nine criteria with the measured
//! numbers. A failing criterion is reported, not hidden; the process exits
//! non-zero on failure only when `BMCOND_ACCEPTANCE_STRICT` is set.

use std::f64::consts::PI;
use std::process::Command;
use std::time::Instant;

use bmcond_cli::{table_values, TableArgs};
use bmcond_core::analytic::*;
use bmcond_core::estimator::{
    curve_mse, grid_max_shift, BinGrid, ConditioningSet, EdgeSource, Statistic, StoreOptions,
};
use bmcond_core::moments::*;
use bmcond_core::sampler::*;
use bmcond_core::simulation::{default_close_targets, default_threads, run, AnalyticMode, PlanSpec, RunSpec};
use bmcond_core::special::{erf, gauss_density, std_normal_quantile};
use bmcond_oracle::{integrate_3d, ks_critical_value, ks_statistic, ks_statistic_from_density, Quad};

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

fn theta_of(u: f64) -> Option<(f64, f64)> {
    let (s, c) = (0.5 * PI * u).sin_cos();
    let th = s * s;
    (THETA_EPS..=1.0 - THETA_EPS).contains(&th).then_some((th, PI * s * c))
}

fn joint(theta: f64, h: f64, c: f64) -> f64 {
    joint_density_theta_h_c(&ExtremaTriple::new(theta, h, c).unwrap()).unwrap()
}

fn meander_oracle() -> Outcome {
    let quad = Quad {
        max_intervals: 10_000,
        ..Quad::with_tol(1e-12)
    };
    let (mut worst, mut worst_mass, mut n) = (0.0f64, 0.0f64, 0);
    for &t in &[0.2, 0.4, 0.6, 0.8, 1.0] {
        for i in 1..=5 {
            let s = t * i as f64 / 6.0;
            for &c in &[0.1, 0.5, 1.5, 3.0] {
                let f = |x: f64| meander_reverse_transition(s, x, t, c).unwrap();
                let hi = s * c / t + 12.0 * s.sqrt();
                let m0 = quad.integrate(f, 0.0, hi);
                let m1 = quad.integrate(|x| x * f(x), 0.0, hi);
                let m2 = quad.integrate(|x| x * x * f(x), 0.0, hi);
                worst_mass = worst_mass.max((m0 - 1.0).abs());
                worst = worst
                    .max(rel(meander_m1(s, t, c).unwrap(), m1))
                    .max(rel(meander_m2(s, t, c).unwrap(), m2));
                n += 1;
            }
        }
    }
    Outcome::new(
        worst < 1e-6 && worst_mass < 1e-8,
        format!("{n} (s,t,c) points, worst relative moment error {worst:.1e} (< 1e-6), worst |M0 - 1| {worst_mass:.1e} (< 1e-8)"),
    )
}

fn density_chain() -> Outcome {
    let quad = Quad::with_tol(1e-10);
    let mut worst = [0.0f64; 3];
    let thetas = [0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95];
    let hs = [0.1, 0.6, 1.5];
    let cs = [-1.5, -0.4, 0.3, 1.2];
    let mut spots = [0; 3];
    for &th in &thetas {
        for &h in &hs {
            let q = quad.integrate(|c| joint(th, h, c), h - 12.0, h);
            worst[0] = worst[0].max((q - density_theta_h(th, h).unwrap()).abs());
            spots[0] += 1;
        }
        for &c in &cs {
            let lo = f64::max(c, 0.0);
            let q = quad.integrate(|h| joint(th, h, c), lo, lo + 12.0);
            worst[1] = worst[1].max((q - density_theta_c(th, c).unwrap()).abs());
            spots[1] += 1;
        }
    }
    let q3 = Quad {
        max_intervals: 10_000,
        ..Quad::with_tol(1e-10)
    };
    for &(h, c) in &[
        (0.5, -0.3),
        (1.0, 0.4),
        (1.7, 1.6),
        (0.2, -2.0),
        (0.8, 0.0),
        (2.5, 1.0),
        (0.05, -0.5),
        (1.2, -1.2),
        (3.0, 2.9),
        (0.9, 0.85),
    ] {
        let q = q3.integrate(|u| theta_of(u).map_or(0.0, |(th, jac)| joint(th, h, c) * jac), 0.0, 1.0);
        worst[2] = worst[2].max((q - density_h_c(h, c).unwrap()).abs());
        spots[2] += 1;
    }
    let mass = integrate_3d(
        &Quad::with_tol(1e-7),
        |c, h, u| theta_of(u).map_or(0.0, |(th, jac)| joint(th, h, c) * jac),
        -9.0,
        9.0,
        |c| c.max(0.0),
        |c| c.max(0.0) + 9.0,
        |_, _| 0.0,
        |_, _| 1.0,
    );
    let pass = worst.iter().all(|&w| w < 1e-6) && (mass - 1.0).abs() < 1e-4;
    Outcome::new(
        pass,
        format!(
            "max errors p(θ,h) {:.1e} [{} pts], p(θ,c) {:.1e} [{} pts], p(h,c) {:.1e} [{} pts] (< 1e-6); total mass {mass:.7} (1 ± 1e-4)",
            worst[0], spots[0], worst[1], spots[1], worst[2], spots[2]
        ),
    )
}

fn pinning() -> Outcome {
    let mut worst = 0.0f64;
    let mut n = 0;
    // a deterministic low-discrepancy sweep over (θ, h, h − c)
    for k in 0..100 {
        let u = |base: f64| ((k as f64 + 0.5) * base).fract();
        let theta = 0.01 + 0.98 * u(0.618_033_988_749_895);
        let h = 0.02 + 3.0 * u(0.754_877_666_246_693);
        let c = h - 4.0 * u(0.569_840_290_998_053);
        let cond = ExtremaTriple::new(theta, h, c).unwrap();
        let cah = |t| cond_moments_given_c_theta_h(t, &cond).unwrap();
        let ah = |t| cond_moments_given_theta_h(t, theta, h).unwrap();
        let a = |t| cond_moments_given_theta(t, theta).unwrap();
        let left = c_theta_h_on(Segment::Before, theta, &cond).unwrap();
        let right = c_theta_h_on(Segment::After, theta, &cond).unwrap();
        let left_ah = theta_h_on(Segment::Before, theta, theta, h).unwrap();
        let right_ah = theta_h_on(Segment::After, theta, theta, h).unwrap();
        let left_a = theta_on(Segment::Before, theta, theta).unwrap();
        let right_a = theta_on(Segment::After, theta, theta).unwrap();
        let bridge = Givens::Close { c }.moments(1.0).unwrap();
        let gaps = [
            cah(0.0).mean,
            cah(0.0).variance,
            cah(theta).mean - h,
            cah(theta).variance,
            cah(1.0).mean - c,
            cah(1.0).variance,
            ah(0.0).mean,
            ah(0.0).variance,
            ah(theta).mean - h,
            ah(theta).variance,
            a(0.0).mean,
            a(0.0).variance,
            bridge.mean - c,
            bridge.variance,
            left.mean - right.mean,
            left.variance - right.variance,
            left_ah.mean - right_ah.mean,
            left_ah.variance - right_ah.variance,
            left_a.mean - right_a.mean,
            left_a.variance - right_a.variance,
        ];
        worst = gaps.iter().fold(worst, |w, g| w.max(g.abs()));
        n += 1;
    }
    Outcome::new(worst <= 1e-9, format!("{n} parameter points, largest pinning or branch gap {worst:.1e} (≤ 1e-9)"))
}

fn argmax_close_variance() -> Outcome {
    let want = 2.0 * (1.0 - PI / 4.0);
    let mut worst_exact = 0.0f64;
    for i in 1..200 {
        let th = i as f64 / 200.0;
        worst_exact = worst_exact
            .max((b1_moments_given_theta(th).unwrap().variance - want).abs())
            .max((cond_moments_given_theta(1.0, th).unwrap().variance - want).abs());
    }
    let mut rng = RandomSource::new(104, 0);
    let mut draws: Vec<ExtremaSample> = (0..200_000).map(|_| sample_theta_m_b1(&mut rng)).collect();
    draws.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    let mut worst_emp = 0.0f64;
    for decile in draws.chunks(20_000) {
        let n = decile.len() as f64;
        let mean = decile.iter().map(|s| s.close).sum::<f64>() / n;
        let var = decile.iter().map(|s| (s.close - mean).powi(2)).sum::<f64>() / (n - 1.0);
        worst_emp = worst_emp.max(rel(var, want));
    }
    Outcome::new(
        worst_exact < 1e-12 && worst_emp < 0.03,
        format!(
            "2(1-π/4) = {want:.4}; analytic max gap {worst_exact:.1e}; worst decile relative gap {:.2}% (< 3%)",
            100.0 * worst_emp
        ),
    )
}

// (label, letters, reference value, relative tolerance)
const TABLE_TARGETS: [(&str, &str, f64, f64); 8] = [
    ("Close", "c", 1.0 / 6.0, 0.02),
    ("High", "h", 0.1602, 0.05),
    ("ArgMax", "a", 0.2487, 0.05),
    ("Close, High", "ch", 0.0990, 0.05),
    ("Close, ArgMax", "ca", 0.1037, 0.05),
    ("ArgMax, High", "ah", 0.11585, 0.05),
    ("Close, High, ArgMax", "cah", 0.07535, 0.07),
    ("Close, High, Low", "chl", 0.0701, 0.07),
];

fn variance_table() -> Outcome {
    let args = TableArgs {
        sims: 200_000,
        steps: 512,
        bins: 20,
        seed: 2024,
        time_stride: 4,
        out: None,
    };
    let values = table_values(&args).expect("table run");
    let mut out = Outcome::new(true, String::new());
    let mut failed = Vec::new();
    for (label, _, want, tol) in TABLE_TARGETS {
        let got = values.iter().find(|(n, _)| *n == label).expect("row present").1;
        let r = (got - want) / want;
        let ok = r.abs() <= tol;
        if !ok {
            failed.push(label);
        }
        out.pass &= ok;
        out.details.push(format!(
            "{:<20} {got:.5} vs {want:.5}  {:+.1}% (±{:.0}%) {}",
            label,
            100.0 * r,
            100.0 * tol,
            if ok { "ok" } else { "out of band" }
        ));
    }
    let start = values[0].1;
    out.details.push(format!("{:<20} {start:.5} (1/2 expected, not graded)", "Start point only"));
    out.summary = if failed.is_empty() {
        "all 8 rows within tolerance at 2e5 paths, 512 steps, 20 bins".into()
    } else {
        format!("{} of 8 rows out of band: {}", failed.len(), failed.join("; "))
    };
    out
}

fn spliced_vs_simulation() -> Outcome {
    let set: ConditioningSet = "cah".parse().unwrap();
    let plan = PlanSpec {
        set,
        n_bins: 8,
        edges: EdgeSource::Empirical,
        shift_close: true,
        time_stride: 4,
        store: StoreOptions {
            bootstrap: 20,
            mixture: Some(set),
            high_shift: grid_max_shift(512),
            ..StoreOptions::default()
        },
        grids: None,
    };
    let spec = RunSpec {
        n_sim: 500_000,
        n_steps: 512,
        seed: 606,
        close_targets: default_close_targets(8),
        plans: vec![plan],
        pilot: 100_000,
        threads: default_threads(),
    };
    let res = run(&spec).expect("simulation").remove(0);
    let curves = res.bin_curves(AnalyticMode::Mixture, 200).expect("curves");
    let (mut good, mut total) = (0, 0);
    let mut ratios = Vec::new();
    for b in &curves {
        let Some(analytic) = &b.analytic else { continue };
        let (mm, mv) = curve_mse(&b.empirical, analytic).unwrap();
        let (fm, fv) = res.store.bootstrap_floor(b.cell).unwrap();
        total += 1;
        if mm < 4.0 * fm && mv < 4.0 * fv {
            good += 1;
        }
        ratios.push((mm / fm).max(mv / fv));
    }
    ratios.sort_by(f64::total_cmp);
    let frac = good as f64 / total.max(1) as f64;
    let median = ratios.get(ratios.len() / 2).copied().unwrap_or(f64::NAN);
    Outcome::new(
        total > 0 && frac >= 0.95,
        format!(
            "{good}/{total} bins with ≥200 paths have both MSEs below 4x floor ({:.1}%, need 95%); median worst ratio {median:.2}",
            100.0 * frac
        ),
    )
}

fn sampler_ks() -> Outcome {
    const N: usize = 100_000;
    let crit = ks_critical_value(N, 0.01);
    let mut rng = RandomSource::new(707, 0);
    let mut stats = Vec::new();
    for &c in &[-1.0, 0.0, 1.0] {
        let xs: Vec<f64> = (0..N).map(|_| sample_bridge_max(c, &mut rng)).collect();
        let phi = gauss_density(1.0, c);
        stats.push((format!("bridge max c={c}"), ks_statistic_from_density(&xs, |h| density_h_c(h, c).unwrap() / phi, f64::max(c, 0.0))));
    }
    let draws: Vec<ExtremaSample> = (0..N).map(|_| sample_theta_m_b1(&mut rng)).collect();
    let theta: Vec<f64> = draws.iter().map(|s| s.theta).collect();
    let high: Vec<f64> = draws.iter().map(|s| s.high).collect();
    stats.push(("Θ".into(), ks_statistic(&theta, |t| 2.0 / PI * t.clamp(0.0, 1.0).sqrt().asin())));
    stats.push(("M".into(), ks_statistic(&high, |h| erf(h.max(0.0) / 2f64.sqrt()))));
    let pass = stats.iter().all(|(_, d)| *d < crit);
    let list: Vec<String> = stats.iter().map(|(n, d)| format!("{n} {d:.4}")).collect();
    Outcome::new(pass, format!("KS at n=1e5 vs critical {crit:.4}: {}", list.join(", ")))
}

fn reflection_symmetry() -> Outcome {
    let c = 1.0;
    let n_bins = 10;
    let set: ConditioningSet = "ca".parse().unwrap();
    let side = |target: f64, seed: u64, grid: Option<BinGrid>| {
        let plan = PlanSpec {
            set,
            n_bins,
            edges: EdgeSource::Empirical,
            shift_close: true,
            time_stride: 4,
            store: StoreOptions {
                bootstrap: 40,
                ..StoreOptions::default()
            },
            grids: grid.map(|g| vec![g]),
        };
        let spec = RunSpec {
            n_sim: 200_000,
            n_steps: 512,
            seed,
            close_targets: vec![target],
            plans: vec![plan],
            pilot: 100_000,
            threads: default_threads(),
        };
        run(&spec).expect("simulation").remove(0)
    };
    // argmax quantile bins at close -c, and their mirror images θ -> 1 - θ at +c
    let neg = side(-c, 801, None);
    let e = &neg.grids[0].edges()[0];
    let mut mirrored: Vec<f64> = e.iter().rev().map(|x| 1.0 - x).collect();
    mirrored[0] = f64::NEG_INFINITY;
    *mirrored.last_mut().unwrap() = f64::INFINITY;
    let pos = side(c, 802, Some(BinGrid::new(vec![Statistic::Argmax], vec![mirrored]).unwrap()));
    let times = neg.store.times();
    let last = times.len() - 1;
    let probes: Vec<usize> = [0.25, 0.5, 0.75]
        .iter()
        .map(|&t| times.iter().position(|&x| (x - t).abs() < 1e-12).expect("probe on grid"))
        .collect();
    let tests_per_pair = 2 * probes.len();
    let z_crit = std_normal_quantile(1.0 - 0.01 / (2.0 * tests_per_pair as f64));
    let (mut pairs_ok, mut worst_z) = (0, 0.0f64);
    for k in 0..n_bins {
        let (a, b) = (k, n_bins - 1 - k);
        let (acc_a, acc_b) = (neg.store.cell(a), pos.store.cell(b));
        let (va, vb) = (acc_a.variance().unwrap(), acc_b.variance().unwrap());
        let (_, sva) = neg.store.bootstrap_standard_errors(a).unwrap();
        let (_, svb) = pos.store.bootstrap_standard_errors(b).unwrap();
        let mut ok = true;
        for &j in &probes {
            let jr = last - j;
            let se_m = (va[j] / acc_a.count() as f64 + vb[jr] / acc_b.count() as f64).sqrt();
            let zm = (acc_a.mean()[j] - (acc_b.mean()[jr] - c)) / se_m;
            let zv = (va[j] - vb[jr]) / (sva[j].powi(2) + svb[jr].powi(2)).sqrt();
            worst_z = worst_z.max(zm.abs()).max(zv.abs());
            ok &= zm.abs() < z_crit && zv.abs() < z_crit;
        }
        pairs_ok += ok as usize;
    }
    Outcome::new(
        pairs_ok == n_bins,
        format!(
            "{pairs_ok}/{n_bins} mirrored argmax bin pairs (c=∓1) agree at t=0.25,0.5,0.75; largest |z| {worst_z:.2} vs {z_crit:.2} (1% per pair)"
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_bmcond");
    let args = ["simulate", "--sims", "20000", "--steps", "128", "--bins", "4", "--seed", "9", "--given", "cah"];
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let out = dir.path().join(name);
        let status = Command::new(exe)
            .args(args)
            .arg("--out")
            .arg(&out)
            .env("BMCOND_THREADS", threads)
            .status()
            .expect("binary runs");
        assert!(status.success());
        outputs.push(std::fs::read(out.join("bins.csv")).unwrap());
    }
    let same_threads = outputs[0] == outputs[1];
    let across = outputs[0] == outputs[2];
    Outcome::new(
        same_threads && across,
        format!(
            "two runs at 1 thread identical: {same_threads}; 1 vs 3 threads identical: {across} ({} bytes)",
            outputs[0].len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("meander moments vs reverse-transition quadrature", meander_oracle),
        ("density consistency chain", density_chain),
        ("pinning and branch continuity", pinning),
        ("Var[B(1)|θ] = 2(1-π/4)", argmax_close_variance),
        ("variance table at desk scale", variance_table),
        ("spliced formulas vs simulation", spliced_vs_simulation),
        ("sampler KS tests", sampler_ks),
        ("reflection symmetry", reflection_symmetry),
        ("determinism", determinism),
    ];
    // BMCOND_ACCEPTANCE_ONLY=5,8 runs a subset
    let only: Option<Vec<usize>> = std::env::var("BMCOND_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failures = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let out = check();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "{} criterion {}: {name}: {} [{secs:.1}s]",
            if out.pass { "PASS" } else { "FAIL" },
            i + 1,
            out.summary
        );
        for d in &out.details {
            println!("    {d}");
        }
        failures += (!out.pass) as usize;
    }
    println!("acceptance: {}/{ran} criteria pass", ran - failures);
    if failures > 0 && std::env::var_os("BMCOND_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
