//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria marked `known` cannot hold as stated; their line still reads FAIL
//! but they do not set the exit status. Each such case also carries an
//! attainable companion check that does.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fa_core::activescalar::{
    markers, ribbon_velocity, slit_rhs, solve_ribbon, solve_slit, MollifiedKernel, RibbonField, RibbonHistory,
    SlitField, SlitHistory, SolverConfig,
};
use fa_core::fields::{
    default_xi, full_stage_time, sobolev_norm, window_start, CollapseField, FullField, Reversed, SeriesField,
    DEFAULT_DEPTH, DEFAULT_KMAX,
};
use fa_core::flow::{
    enclosure_check, full_dim_scale_check, full_field_stage_image, integrate_recorded, rescaled_trajectory_check,
    verify_contraction, IntegratorConfig, ParticleCloud, Planar,
};
use fa_core::geometry::{sample_homogeneous, separation_check, AffineSimilarity, IfsParams, Rect};
use fa_core::measures::{
    attractor_scales, box_dimension, ribbon_measure_series, slit_measure_series, time_reverse, weak_residuals_2d,
    weak_residuals_3d, MeasureSeries, ParticleMeasure, TestFunction, WeakResidualReport,
};
use fa_core::profiles::{mollifier_2d, smoothed_sign};
use fa_core::quad;
use fa_core::{Vec2, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Line {
    label: String,
    pass: bool,
    known: bool,
    detail: String,
}

#[derive(Default)]
struct Board {
    lines: Vec<Line>,
}

impl Board {
    fn record(&mut self, label: &str, pass: bool, detail: String) {
        self.push(label, pass, false, detail);
    }

    fn record_known(&mut self, label: &str, pass: bool, detail: String) {
        self.push(label, pass, true, detail);
    }

    fn push(&mut self, label: &str, pass: bool, known: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        let note = if known && !pass { " (known, see notes)" } else { "" };
        println!("{tag} {label}{note}: {detail}");
        self.lines.push(Line {
            label: label.to_string(),
            pass,
            known,
            detail,
        });
    }

    fn timed<T>(&mut self, label: &str, budget: Duration, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        let el = start.elapsed();
        self.record(
            &format!("{label} runtime"),
            el <= budget,
            format!("{:.2} s (budget {} s)", el.as_secs_f64(), budget.as_secs()),
        );
        out
    }
}

fn max_abs_residual(r: &[WeakResidualReport]) -> f64 {
    r.iter().map(|x| x.residual.abs()).fold(0.0, f64::max)
}

/// Least-squares order of `errors` against a halving step.
fn fitted_order(errors: &[f64]) -> f64 {
    let xs: Vec<f64> = (0..errors.len()).map(|i| -(i as f64) * 2f64.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn constants(b: &mut Board) {
    b.timed("constants identity", Duration::from_secs(1), |b| {
        let (lo, hi) = (0.5, std::f64::consts::FRAC_1_SQRT_2);
        let mut worst = 0.0f64;
        for i in 0..50 {
            let a = lo + (hi - lo) * (i as f64 + 0.5) / 50.0;
            let p = IfsParams::derive(a).unwrap();
            worst = worst
                .max((p.delta - a * p.eps).abs())
                .max((p.gamma - (1.0 - p.delta)).abs());
        }
        b.record(
            "constants identity",
            worst <= 1e-14,
            format!("worst deviation {worst:e} over 50 scales"),
        );
    });
}

fn separation(b: &mut Board) {
    b.timed("separation at depth 4", Duration::from_secs(5), |b| {
        for a in [0.55, 0.6, 0.65, 0.69] {
            let r = separation_check(&IfsParams::derive(a).unwrap(), 4).unwrap();
            b.record(
                &format!("separation at depth 4, alpha {a}"),
                r.passed(),
                format!("{} pairs, {} violations", r.pairs_checked, r.violations.len()),
            );
        }
    });
}

fn dimension(b: &mut Board) {
    b.timed("box-counting dimension", Duration::from_secs(30), |b| {
        for a in [0.55, 0.6, 0.65] {
            let p = IfsParams::derive(a).unwrap();
            let pts = sample_homogeneous(&p, 10, 20_000, 17);
            let r = box_dimension(&pts, &attractor_scales(a, 10)).unwrap();
            b.record(
                &format!("box-counting dimension, alpha {a}"),
                (r.slope - p.h).abs() <= 0.1,
                format!("slope {:.4}, similarity dimension {:.4}", r.slope, p.h),
            );
        }
    });
}

fn contraction(b: &mut Board) {
    b.timed("segment contraction", Duration::from_secs(120), |b| {
        let reports = verify_contraction(0.6, 3, &IntegratorConfig::fixed(1e-4)).unwrap();
        let worst = reports.iter().map(|r| r.endpoint_error).fold(0.0, f64::max);
        b.record(
            "segment contraction under U",
            worst < 1e-5,
            format!("{} words, worst endpoint error {worst:e}", reports.len()),
        );
    });
}

fn enclosure(b: &mut Board) {
    b.timed("collapse enclosure", Duration::from_secs(120), |b| {
        let p = IfsParams::derive(0.6).unwrap();
        let r = enclosure_check(0.6, default_xi(p.gamma), 3, 4, 1e-5, &IntegratorConfig::fixed(1e-3)).unwrap();
        let worst = r.windows.iter().map(|w| w.max_excess).fold(f64::NEG_INFINITY, f64::max);
        b.record(
            "collapse enclosure in shrinking rectangles",
            r.passed,
            format!("{} samples, windows 0..=3, largest excess {worst:e}", r.samples),
        );
    });
}

fn full_dimension(b: &mut Board) {
    b.timed("full-dimension flow", Duration::from_secs(300), |b| {
        let cfg = IntegratorConfig::fixed(1e-4);
        let r = full_dim_scale_check(DEFAULT_KMAX, 3, &cfg).unwrap();
        b.record(
            "full-dimension flow moves (24,0) to (21,0)",
            r.image_24_error < 1e-4,
            format!("image ({:.8}, {:.2e}), error {:e}", r.image_24[0], r.image_24[1], r.image_24_error),
        );
        b.record_known(
            "full-dimension flow contracts every block by 7/8",
            r.block_error_t1 < 1e-3 && r.block_error_t2 < 1e-3,
            format!("deviation {:e} at t = 1, {:e} at t = 2 over blocks 1..={}", r.block_error_t1, r.block_error_t2, r.kmax),
        );
        let conditioned = 12;
        let (c1, c2) = r.per_block[..conditioned]
            .iter()
            .fold((0.0f64, 0.0f64), |(a, c), &(_, e1, e2)| (a.max(e1), c.max(e2)));
        let first_bad = r.per_block.iter().find(|b| b.1.max(b.2) >= 1e-3).map(|b| b.0);
        b.record(
            "full-dimension flow contracts well-conditioned blocks by 7/8",
            c1 < 1e-3 && c2 < 1e-3,
            format!(
                "deviation {c1:e} at t = 1, {c2:e} at t = 2 over blocks 1..={conditioned}; first block over 1e-3: {first_bad:?}"
            ),
        );
        b.record(
            "full-dimension flow keeps the line on the axis",
            r.line_offaxis < 1e-3 && r.line_range[0].abs() < 1e-3 && (r.line_range[1] - 21.0).abs() < 1e-3,
            format!("off-axis {:e}, range [{:.6}, {:.6}]", r.line_offaxis, r.line_range[0], r.line_range[1]),
        );
        let (t1, t2) = (full_stage_time(1), full_stage_time(2));
        let stages_ok = (t1 - 2.0).abs() < 1e-14
            && (t2 - 34.0 / 9.0).abs() < 1e-14
            && FullField::stage(t1 - 1e-9) == Some(0)
            && FullField::stage(t1) == Some(1)
            && FullField::stage(t2) == Some(2);
        let ff = FullField::new(DEFAULT_KMAX, DEFAULT_DEPTH).unwrap();
        let img = full_field_stage_image(&ff, Vec2::new(24.0, 0.0), 2, &cfg).unwrap();
        let want = Vec2::new(24.0 * 0.875 * 0.875, 0.0);
        let err = (img - want).norm();
        b.record(
            "full-dimension stage times",
            stages_ok && err < 1e-3,
            format!("t_1 = {t1}, t_2 = {t2:.15}, (24,0) after two stages off by {err:e}"),
        );
    });
}

fn sobolev_scaling(b: &mut Board) {
    b.timed("Sobolev scaling of the collapse field", Duration::from_secs(300), |b| {
        let p = IfsParams::derive(0.6).unwrap();
        let xi = default_xi(p.gamma);
        let w = CollapseField::new(p, xi, DEFAULT_DEPTH).unwrap();
        let h0 = p.delta / 8.0;
        let mut logs = Vec::new();
        for k in 0..=4 {
            let gk = p.gamma.powi(k);
            let t = 0.5 * (window_start(xi, k as usize) + window_start(xi, k as usize + 1));
            let region = Rect::r(p.eps).scaled(gk);
            let est = sobolev_norm(&w, t, 1.0, &region, h0 * gk).unwrap();
            logs.push(est.value.ln());
        }
        let n = logs.len() as f64;
        let mk = (n - 1.0) / 2.0;
        let my = logs.iter().sum::<f64>() / n;
        let slope = logs
            .iter()
            .enumerate()
            .map(|(k, y)| (k as f64 - mk) * (y - my))
            .sum::<f64>()
            / (0..logs.len()).map(|k| (k as f64 - mk).powi(2)).sum::<f64>();
        let stated = (p.gamma / xi).ln();
        let exact = (p.gamma * p.gamma / xi).ln();
        b.record_known(
            "Sobolev slope against log(gamma/xi)",
            ((slope - stated) / stated).abs() <= 0.15,
            format!("fitted {slope:.5}, stated {stated:.5}"),
        );
        b.record(
            "Sobolev slope against exact scaling log(gamma^2/xi)",
            ((slope - exact) / exact).abs() <= 0.01,
            format!("fitted {slope:.5}, exact {exact:.5}"),
        );
    });
}

/// `Y` at label `a` by linear interpolation between markers.
fn interpolate(alphas: &[f64], y: &[f64], a: f64) -> f64 {
    let n = alphas.len();
    let i = alphas.partition_point(|&x| x < a).clamp(1, n - 1);
    let (a0, a1) = (alphas[i - 1], alphas[i]);
    y[i - 1] + (y[i] - y[i - 1]) * (a - a0) / (a1 - a0)
}

/// Largest label-matched gap between a coarse and a fine run over their
/// common record times.
fn history_gap(coarse: &SlitHistory, fine: &SlitHistory) -> f64 {
    let mut worst = 0.0f64;
    for (k, t) in coarse.times.iter().enumerate() {
        let Some(j) = fine.times.iter().position(|s| (s - t).abs() < 1e-9) else {
            continue;
        };
        for (&a, &y) in coarse.alphas.iter().zip(&coarse.states[k]) {
            worst = worst.max((y - interpolate(&fine.alphas, &fine.states[j], a)).abs());
        }
    }
    worst
}

fn refined_config(n: usize, t_end: f64) -> SolverConfig {
    let h = 0.4 / n as f64;
    let mut cfg = SolverConfig::new(n, Some(h), h, t_end);
    cfg.record_every = 10;
    cfg
}

fn slit_collapse(b: &mut Board) -> Vec<SlitHistory> {
    b.timed("slit collapse", Duration::from_secs(300), |b| {
        let runs: Vec<SlitHistory> = [100, 200, 400]
            .iter()
            .map(|&n| solve_slit(&refined_config(n, 2.05)).unwrap())
            .collect();
        let fine = &runs[2];
        let log = &fine.log;
        b.record(
            "slit oddness",
            log.max_oddness <= 1e-10,
            format!("max |Y_i + Y_(N+1-i)| = {:e} over {} steps", log.max_oddness, log.steps),
        );
        b.record(
            "slit label derivative in (0, 1]",
            log.min_gap > 0.0 && log.max_gap_excess <= 1e-10 * 2.0 / 400.0,
            format!(
                "smallest gap {:e}, largest gap above spacing {:e}",
                log.min_gap, log.max_gap_excess
            ),
        );
        let bound_excess = fine
            .times
            .iter()
            .zip(&fine.states)
            .filter(|(t, _)| **t <= 2.0 + 1e-12)
            .map(|(t, y)| y[y.len() - 1] - ((1.0 - t / 2.0).powi(2) + 0.05))
            .fold(f64::NEG_INFINITY, f64::max);
        b.record(
            "slit outer trace below the square-root bound",
            bound_excess <= 0.0,
            format!("largest excess over (1 - t/2)^2 + 0.05 is {bound_excess:e}"),
        );
        let last = fine.states.last().unwrap();
        let terminal = last.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        b.record(
            "slit collapsed after t = 2.05",
            terminal < 1e-2,
            format!("max |Y(2.05)| = {terminal:e}"),
        );
        let d1 = history_gap(&runs[0], &runs[1]);
        let d2 = history_gap(&runs[1], &runs[2]);
        let ratio = d2 / d1;
        b.record(
            "slit refinement consistent with first order",
            (0.3..=0.7).contains(&ratio),
            format!(
                "deviations {d1:e}, {d2:e}; ratio {ratio:.3}, order {:.2}",
                -ratio.log2()
            ),
        );
        runs
    })
}

fn ribbon(b: &mut Board) -> RibbonHistory {
    b.timed("ribbon collapse", Duration::from_secs(300), |b| {
        let n = 200;
        let m = MollifiedKernel::build(2e-3).unwrap();
        let y = markers(n);
        let (mut slit, mut rib) = (vec![0.0; n], vec![0.0; n]);
        slit_rhs(&y, &m, 1.0, &mut slit);
        slit_rhs(&y, &m, 2.0, &mut rib);
        let factor = slit
            .iter()
            .zip(&rib)
            .map(|(s, r)| (r - 2.0 * s).abs())
            .fold(0.0, f64::max);
        b.record(
            "ribbon rate twice the slit rate",
            factor == 0.0,
            format!("largest |rhs_ribbon - 2 rhs_slit| = {factor:e}"),
        );

        let mut cfg = SolverConfig::new(n, Some(2e-3), 2e-3, 1.1);
        cfg.record_every = 5;
        let h = solve_ribbon(&cfg).unwrap();
        let excess = h
            .inner
            .times
            .iter()
            .zip(&h.inner.states)
            .filter(|(t, _)| **t <= 1.0 + 1e-12)
            .map(|(t, y)| y[n - 1] - ((1.0 - t).powi(2) + 0.05))
            .fold(f64::NEG_INFINITY, f64::max);
        let extent = h.inner.states.last().unwrap()[n - 1] * 2.0;
        b.record(
            "ribbon extent collapses by t = 1",
            excess <= 0.0 && extent < 1e-2,
            format!("largest excess over (1 - t)^2 + 0.05 is {excess:e}, extent at t = 1.1 is {extent:e}"),
        );

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let states = [&h.inner.states[0], &h.inner.states[h.inner.states.len() / 3]];
        let (mut u2, mut u1) = (0.0f64, 0.0f64);
        for y in states {
            for _ in 0..200 {
                let x = Vec3::new(
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-4.0..4.0),
                );
                u2 = u2.max(ribbon_velocity(y, 8, x).y.abs());
            }
            for _ in 0..200 {
                let yj = y[rng.random_range(0..n)];
                let x = Vec3::new(0.0, rng.random_range(-1.0..1.0), yj + rng.random_range(-0.01..0.01));
                u1 = u1.max(ribbon_velocity(y, 8, x).x.abs());
            }
        }
        b.record(
            "ribbon velocity has no transverse components",
            u2 <= 1e-12 && u1 <= 1e-12,
            format!("max |u_2| = {u2:e} off the ribbon, max |u_1| = {u1:e} on its plane"),
        );
        h
    })
}

fn u_measure_residuals(b: &mut Board) -> f64 {
    let p = IfsParams::derive(0.6).unwrap();
    let u = SeriesField::new(p, DEFAULT_DEPTH);
    let pts: Vec<Vec2> = (0..64)
        .map(|i| Vec2::new(-1.0 + (2 * i + 1) as f64 / 64.0, 0.0))
        .collect();
    let cloud = ParticleCloud::planar(&pts);
    let phis = TestFunction::family(20, Vec3::new(-1.0, -0.3, 0.0), Vec3::new(1.0, 0.3, 0.0), 0.6, 2, 7);
    let mut errs = Vec::new();
    for rec in [64, 128, 256] {
        let (_, tr) = integrate_recorded(
            &Planar(&u),
            &cloud,
            0.0,
            1.0,
            rec,
            &IntegratorConfig::fixed(1.0 / 1024.0),
        )
        .unwrap();
        let samples = tr
            .positions
            .iter()
            .map(|ps| ParticleMeasure::scalar(ps.clone(), vec![1.0 / 64.0; 64], 2).unwrap())
            .collect();
        let s = MeasureSeries::new(tr.times.clone(), samples).unwrap();
        errs.push(max_abs_residual(&weak_residuals_2d(&u, &s, &phis).unwrap()));
    }
    let order = fitted_order(&errs);
    b.record(
        "weak residual of the U-advected measure",
        order >= 1.0 && errs[2] < errs[0],
        format!(
            "max residuals {:e}, {:e}, {:e}; order {order:.2}",
            errs[0], errs[1], errs[2]
        ),
    );
    order
}

fn slit_residuals(b: &mut Board, runs: &[SlitHistory]) {
    let phis = TestFunction::family(20, Vec3::new(-1.2, -0.5, 0.0), Vec3::new(1.2, 0.5, 0.0), 0.8, 2, 11);
    let mut errs = Vec::new();
    let mut worst_negation = 0.0f64;
    let mut involution = true;
    for h in runs {
        let s = slit_measure_series(h, 2.0).unwrap();
        let f = SlitField::from_history(h);
        let rev_s = time_reverse(&s);
        involution &= time_reverse(&rev_s) == s;
        let rev = Reversed {
            inner: f,
            horizon: s.horizon(),
        };
        let rphis: Vec<TestFunction> = phis.iter().map(|q| q.reflect(s.horizon())).collect();
        let r = weak_residuals_2d(&rev, &rev_s, &rphis).unwrap();
        let fwd = weak_residuals_2d(&rev.inner, &s, &phis).unwrap();
        for (a, c) in fwd.iter().zip(&r) {
            worst_negation = worst_negation.max((a.residual + c.residual).abs());
        }
        errs.push(max_abs_residual(&r));
    }
    let order = fitted_order(&errs);
    b.record(
        "weak residual of the reversed slit",
        order >= 1.0 && errs[2] < errs[0],
        format!(
            "max residuals {:e}, {:e}, {:e}; order {order:.2}",
            errs[0], errs[1], errs[2]
        ),
    );
    b.record(
        "time reversal is an involution",
        involution && worst_negation < 1e-12,
        format!("double reversal restores the series; forward + reversed residual at most {worst_negation:e}"),
    );
}

fn ribbon_residuals(b: &mut Board) {
    let phis = TestFunction::family(20, Vec3::new(-0.3, -1.0, -1.0), Vec3::new(0.3, 1.0, 1.0), 0.8, 3, 13);
    let mut errs = Vec::new();
    for (n, m) in [(40usize, 4usize), (80, 8), (160, 16)] {
        let h = solve_ribbon(&refined_config(n, 1.0)).unwrap();
        let s = ribbon_measure_series(&h, m).unwrap();
        let f = RibbonField::from_history(&h, m);
        errs.push(max_abs_residual(&weak_residuals_3d(&f, &s, &phis).unwrap()));
    }
    let order = fitted_order(&errs);
    b.record(
        "weak residual of the ribbon",
        order >= 1.0 && errs[2] < errs[0],
        format!(
            "max residuals {:e}, {:e}, {:e}; order {order:.2}",
            errs[0], errs[1], errs[2]
        ),
    );
}

fn weak_residuals(b: &mut Board, runs: &[SlitHistory]) {
    b.timed("weak residuals", Duration::from_secs(600), |b| {
        u_measure_residuals(b);
        slit_residuals(b, runs);
        ribbon_residuals(b);
    });
}

fn oracles(b: &mut Board) {
    b.timed("oracle equivalences", Duration::from_secs(120), |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst = 0.0f64;
        for a in [0.55, 0.6, 0.69] {
            let u = SeriesField::new(IfsParams::derive(a).unwrap(), 8);
            for _ in 0..400 {
                let t = rng.random_range(0.0..1.0);
                let x = Vec2::new(rng.random_range(-2.2..2.2), rng.random_range(-1.6..1.6));
                worst = worst.max((u.eval_descent(t, x) - u.eval_naive(t, x)).norm());
            }
        }
        b.record(
            "tree descent matches the naive sum",
            worst <= 1e-12,
            format!("largest difference {worst:e}"),
        );

        let delta = 0.2;
        let mut worst = 0.0f64;
        for _ in 0..12 {
            let x = Vec2::new(rng.random_range(-0.3..0.3), rng.random_range(-1.0..1.0));
            let conv = convolved_psi(x, delta);
            worst = worst.max((conv - x.y * smoothed_sign(x.x, delta).0).abs());
        }
        b.record(
            "smoothed stream function matches the 2D convolution",
            worst <= 1e-6,
            format!("largest difference {worst:e}"),
        );

        let p = IfsParams::derive(0.6).unwrap();
        let u = SeriesField::new(p, DEFAULT_DEPTH);
        let g = AffineSimilarity::new(Vec2::zeros(), 1, p.gamma);
        let cfg = IntegratorConfig::fixed(1e-4);
        let mut worst = 0.0f64;
        for seed in 0..32u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let r = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let gr = AffineSimilarity::new(r, g.rotation, g.scale);
            let pts: Vec<Vec2> = (0..3)
                .map(|_| gr.apply(Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-1.4..1.4))))
                .collect();
            let cloud = ParticleCloud::planar(&pts);
            worst = worst.max(rescaled_trajectory_check(&u, &g, r, &cloud, 0.0, 1.0, &cfg).unwrap());
        }
        b.record(
            "affine conjugation trajectory identity",
            worst < 1e-8,
            format!("largest deviation {worst:e} over 32 conjugations"),
        );
    });
}

/// `(ρ_δ * Ψ)(x)` with `Ψ(y) = y_2 sign(y_1)`, by nested quadrature over the
/// disc of radius `δ`.
fn convolved_psi(x: Vec2, delta: f64) -> f64 {
    let rho = |a: f64, b: f64| mollifier_2d(a / delta, b / delta) / (delta * delta);
    let outer = |z1: f64| {
        let half = (delta * delta - z1 * z1).max(0.0).sqrt();
        let s = (x.x - z1).signum();
        s * quad::integrate(|z2| rho(z1, z2) * (x.y - z2), -half, half, &[], 1e-13).unwrap()
    };
    quad::integrate(outer, -delta, delta, &[x.x], 1e-12).unwrap()
}

fn main() -> ExitCode {
    let mut b = Board::default();
    constants(&mut b);
    separation(&mut b);
    dimension(&mut b);
    contraction(&mut b);
    enclosure(&mut b);
    full_dimension(&mut b);
    sobolev_scaling(&mut b);
    let runs = slit_collapse(&mut b);
    ribbon(&mut b);
    weak_residuals(&mut b, &runs);
    oracles(&mut b);

    let failed: Vec<&Line> = b.lines.iter().filter(|l| !l.pass && !l.known).collect();
    let known = b.lines.iter().filter(|l| !l.pass && l.known).count();
    println!(
        "{} checks, {} failed, {} known failures",
        b.lines.len(),
        failed.len(),
        known
    );
    for l in &failed {
        eprintln!("failed: {} ({})", l.label, l.detail);
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
