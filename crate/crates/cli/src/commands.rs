use std::io::Write;
use std::path::Path;

use anyhow::Result;
use fa_core::activescalar::{
    collapse_verdict, solve_ribbon, solve_slit, RibbonField, RibbonHistory, SlitField, SlitHistory, SolverConfig,
    GROWTH_TOL, ODDNESS_TOL,
};
use fa_core::fields::{Reversed, SeriesField, DEFAULT_DEPTH};
use fa_core::flow::{
    enclosure_check, full_dim_scale_check, integrate_recorded, verify_contraction, IntegratorConfig, ParticleCloud,
    Planar, FULL_DIM_POINT_TOL, FULL_DIM_SET_TOL,
};
use fa_core::geometry::{attractor_approx, sample_homogeneous, separation_check, word_map, BinaryWord, IfsParams};
use fa_core::measures::{
    box_dimension, ribbon_measure_series, slit_measure_series, time_reverse, weak_residuals_2d, weak_residuals_3d,
    MeasureSeries, ParticleMeasure, TestFunction, WeakResidualReport,
};
use fa_core::{GridSample, Rect, Vec2, Vec3};
use serde::Serialize;

use crate::config::*;
use crate::manifest::Run;
use crate::Failure;

fn write_points(buf: &mut Vec<u8>, pts: &[Vec2]) -> Result<()> {
    writeln!(buf, "x,y")?;
    for p in pts {
        writeln!(buf, "{},{}", p.x, p.y)?;
    }
    Ok(())
}

pub fn attractor(cfg: &AttractorConfig, run: &mut Run) -> Result<()> {
    let p = cfg.params();
    let approx = attractor_approx(&p, cfg.depth)?;
    println!(
        "alpha = {}, {} segments at depth {}",
        p.alpha,
        approx.segments.len(),
        cfg.depth
    );
    run.emit_json("attractor.json", &approx)?;
    run.emit("segments.csv", |b| {
        writeln!(b, "word,ax,ay,bx,by")?;
        for s in &approx.segments {
            writeln!(b, "{},{},{},{},{}", s.word, s.a[0], s.a[1], s.b[0], s.b[1])?;
        }
        Ok(())
    })?;
    let pts = if cfg.samples > 0 {
        sample_homogeneous(&p, cfg.sample_depth, cfg.samples, cfg.seed)
    } else {
        approx.endpoints()
    };
    run.emit("attractor.csv", |b| write_points(b, &pts))?;
    let sep = separation_check(&p, cfg.separation_depth)?;
    run.check(
        "separation",
        sep.passed(),
        format!(
            "{} pairs at depth {}, {} violations",
            sep.pairs_checked,
            sep.depth,
            sep.violations.len()
        ),
    );
    run.emit_json("separation.json", &sep)
}

pub fn verify(cfg: &ContractionConfig, run: &mut Run) -> Result<()> {
    let ic = IntegratorConfig::fixed(cfg.dt);
    let reports = verify_contraction(cfg.alpha, cfg.depth, &ic)?;
    let worst = reports.iter().map(|r| r.endpoint_error).fold(0.0, f64::max);
    run.check(
        "endpoints land on the contracted segments",
        worst < cfg.tol,
        format!(
            "worst endpoint error {worst:e} over {} words, tolerance {:e}",
            reports.len(),
            cfg.tol
        ),
    );
    run.emit_json("contraction.json", &reports)?;
    if cfg.records > 0 {
        let u = SeriesField::new(IfsParams::derive(cfg.alpha)?, DEFAULT_DEPTH);
        let pts: Vec<Vec2> = BinaryWord::up_to(cfg.depth)
            .flat_map(|w| {
                let g = word_map(&w, 0.0, cfg.alpha);
                [g.apply(Vec2::new(-1.0, 0.0)), g.apply(Vec2::new(1.0, 0.0))]
            })
            .collect();
        let (_, tr) = integrate_recorded(&Planar(&u), &ParticleCloud::planar(&pts), 0.0, 1.0, cfg.records, &ic)?;
        run.emit("trajectory.csv", |b| Ok(tr.write_csv(b)?))?;
    }
    Ok(())
}

pub fn collapse(cfg: &CollapseConfig, run: &mut Run) -> Result<()> {
    let xi = cfg.xi.expect("filled in finish");
    let r = enclosure_check(
        cfg.alpha,
        xi,
        cfg.k,
        cfg.sample_depth,
        cfg.slack,
        &IntegratorConfig::fixed(cfg.dt),
    )?;
    let worst = r.windows.iter().map(|w| w.max_excess).fold(f64::NEG_INFINITY, f64::max);
    run.check(
        "samples stay in the shrinking rectangles",
        r.passed,
        format!(
            "{} samples over windows 0..={}, largest excess {worst:e}, slack {:e}",
            r.samples, cfg.k, cfg.slack
        ),
    );
    run.emit_json("enclosure.json", &r)?;
    run.emit("windows.csv", |b| {
        writeln!(b, "k,t_start,t_end,max_excess,width,expected_width")?;
        for w in &r.windows {
            writeln!(
                b,
                "{},{},{},{},{},{}",
                w.k, w.t_start, w.t_end, w.max_excess, w.width, w.expected_width
            )?;
        }
        Ok(())
    })
}

pub fn full_dim(cfg: &FullDimConfig, run: &mut Run) -> Result<()> {
    let r = full_dim_scale_check(cfg.kmax, cfg.sample_depth, &IntegratorConfig::fixed(cfg.dt))?;
    run.check(
        "(24, 0) moves to (21, 0)",
        r.image_24_error < FULL_DIM_POINT_TOL,
        format!(
            "image ({}, {}), error {:e}",
            r.image_24[0], r.image_24[1], r.image_24_error
        ),
    );
    let e = r.block_error_t1.max(r.block_error_t2);
    run.check(
        "blocks contract by 7/8",
        e < FULL_DIM_SET_TOL,
        format!("largest deviation {e:e} over blocks 1..={}", cfg.kmax),
    );
    let on_axis = r.line_offaxis < FULL_DIM_SET_TOL
        && r.line_range[0].abs() < FULL_DIM_SET_TOL
        && (r.line_range[1] - 21.0).abs() < FULL_DIM_SET_TOL;
    run.check(
        "line maps onto [0, 21] x {0}",
        on_axis,
        format!(
            "off-axis {:e}, range [{}, {}]",
            r.line_offaxis, r.line_range[0], r.line_range[1]
        ),
    );
    run.emit_json("full_dim.json", &r)?;
    run.emit("blocks.csv", |b| {
        writeln!(b, "k,error_t1,error_t2")?;
        for (k, e1, e2) in &r.per_block {
            writeln!(b, "{k},{e1},{e2}")?;
        }
        Ok(())
    })
}

fn history_outputs(h: &SlitHistory, run: &mut Run) -> Result<()> {
    let log = &h.log;
    run.check(
        "oddness and ordering invariants",
        log.max_oddness <= ODDNESS_TOL && log.min_gap > 0.0 && log.max_growth <= GROWTH_TOL,
        format!(
            "oddness {:e}, smallest gap {:e}, growth {:e} over {} steps",
            log.max_oddness, log.min_gap, log.max_growth, log.steps
        ),
    );
    let v = collapse_verdict(h);
    let detail = if v.reached {
        format!(
            "excess over the profile bound {:e}, max |Y| = {:e} at the end",
            v.bound_excess, v.terminal
        )
    } else {
        format!(
            "excess over the profile bound {:e}; run ends before t = {}",
            v.bound_excess, v.collapse_time
        )
    };
    run.check("collapse verdict", v.passed, detail);
    println!("{} markers, step {}, collapse time {}", h.n(), h.dt, v.collapse_time);
    run.emit("history.csv", |b| Ok(h.write_csv(b)?))?;
    run.emit("outer.csv", |b| {
        writeln!(b, "t,max_y")?;
        for (t, y) in h.outer_trace() {
            writeln!(b, "{t},{y}")?;
        }
        Ok(())
    })?;
    #[derive(Serialize)]
    struct Invariants<'a> {
        log: &'a fa_core::activescalar::InvariantLog,
        verdict: fa_core::CollapseVerdict,
    }
    run.emit_json("invariants.json", &Invariants { log, verdict: v })
}

fn velocity_box() -> Rect {
    Rect::new(Vec2::zeros(), Vec2::new(4.0, 3.0))
}

pub fn slit(cfg: &SlitConfig, run: &mut Run) -> Result<()> {
    let h = solve_slit(&cfg.0.solver())?;
    history_outputs(&h, run)?;
    run.emit_json("history.json", &h)?;
    if let Some(spacing) = cfg.0.grid_spacing {
        let t = cfg.0.grid_time.unwrap_or(*h.times.last().unwrap_or(&0.0));
        let g = GridSample::sample(&SlitField::from_history(&h), &velocity_box(), spacing, t)?;
        run.emit("velocity.csv", |b| Ok(g.write_csv(b)?))?;
    }
    Ok(())
}

pub fn ribbon(cfg: &RibbonConfig, run: &mut Run) -> Result<()> {
    let h = solve_ribbon(&cfg.0.solver())?;
    history_outputs(&h.inner, run)?;
    run.emit_json("history.json", &h)?;
    if let Some(spacing) = cfg.0.grid_spacing {
        let t = cfg.0.grid_time.unwrap_or(*h.inner.times.last().unwrap_or(&0.0));
        let f = RibbonField::from_history(&h, cfg.0.m_nodes);
        let g = GridSample::sample3(&f, &velocity_box(), spacing, t)?;
        run.emit("velocity.csv", |b| Ok(g.write_csv(b)?))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Level {
    /// Particles, or records for the `u` scenario.
    n: usize,
    max_residual: f64,
    reports: Vec<WeakResidualReport>,
}

fn max_abs(r: &[WeakResidualReport]) -> f64 {
    r.iter().map(|x| x.residual.abs()).fold(0.0, f64::max)
}

/// Least-squares slope of `log e` against `log(1/n)`.
fn fitted_order(levels: &[Level]) -> f64 {
    let xs: Vec<f64> = levels.iter().map(|l| -(l.n as f64).ln()).collect();
    let ys: Vec<f64> = levels.iter().map(|l| l.max_residual.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn refined(n: usize, t_end: f64) -> SolverConfig {
    let h = 0.4 / n as f64;
    let mut cfg = SolverConfig::new(n, Some(h), h, t_end);
    cfg.record_every = 10;
    cfg
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?)
}

pub fn residual(cfg: &ResidualConfig, run: &mut Run) -> Result<()> {
    let levels: Vec<usize> = (0..=cfg.refine).map(|j| cfg.n.unwrap_or(2) << j).collect();
    let mut out = Vec::new();
    match cfg.scenario {
        Scenario::Slit => {
            let phis = TestFunction::family(
                cfg.test_functions,
                Vec3::new(-1.2, -0.5, 0.0),
                Vec3::new(1.2, 0.5, 0.0),
                0.8,
                2,
                cfg.seed,
            );
            let runs: Vec<SlitHistory> = if cfg.inputs.is_empty() {
                levels
                    .iter()
                    .map(|&n| solve_slit(&refined(n, 2.05)))
                    .collect::<fa_core::Result<_>>()?
            } else {
                cfg.inputs.iter().map(|p| load(p)).collect::<Result<_>>()?
            };
            let mut worst_negation = 0.0f64;
            for h in &runs {
                let t_end = h.times.last().copied().unwrap_or(0.0).min(2.0);
                let s = slit_measure_series(h, t_end)?;
                let rev_s = time_reverse(&s);
                let rev = Reversed {
                    inner: SlitField::from_history(h),
                    horizon: s.horizon(),
                };
                let rphis: Vec<TestFunction> = phis.iter().map(|q| q.reflect(s.horizon())).collect();
                let bwd = weak_residuals_2d(&rev, &rev_s, &rphis)?;
                let fwd = weak_residuals_2d(&rev.inner, &s, &phis)?;
                for (a, c) in fwd.iter().zip(&bwd) {
                    worst_negation = worst_negation.max((a.residual + c.residual).abs());
                }
                out.push(Level {
                    n: h.n(),
                    max_residual: max_abs(&bwd),
                    reports: bwd,
                });
            }
            run.check(
                "reversal negates the residuals",
                worst_negation < 1e-12,
                format!("largest |forward + reversed| {worst_negation:e}"),
            );
        }
        Scenario::Ribbon => {
            let phis = TestFunction::family(
                cfg.test_functions,
                Vec3::new(-0.3, -1.0, -1.0),
                Vec3::new(0.3, 1.0, 1.0),
                0.8,
                3,
                cfg.seed,
            );
            let runs: Vec<RibbonHistory> = if cfg.inputs.is_empty() {
                levels
                    .iter()
                    .map(|&n| solve_ribbon(&refined(n, 1.0)))
                    .collect::<fa_core::Result<_>>()?
            } else {
                cfg.inputs.iter().map(|p| load(p)).collect::<Result<_>>()?
            };
            for h in &runs {
                let n = h.inner.n();
                let m = (n / 10).max(1);
                let s = ribbon_measure_series(h, m)?;
                let r = weak_residuals_3d(&RibbonField::from_history(h, m), &s, &phis)?;
                out.push(Level {
                    n,
                    max_residual: max_abs(&r),
                    reports: r,
                });
            }
        }
        Scenario::U => {
            let u = SeriesField::new(IfsParams::derive(0.6)?, DEFAULT_DEPTH);
            let np = 64;
            let pts: Vec<Vec2> = (0..np)
                .map(|i| Vec2::new(-1.0 + (2 * i + 1) as f64 / np as f64, 0.0))
                .collect();
            let cloud = ParticleCloud::planar(&pts);
            let phis = TestFunction::family(
                cfg.test_functions,
                Vec3::new(-1.0, -0.3, 0.0),
                Vec3::new(1.0, 0.3, 0.0),
                0.6,
                2,
                cfg.seed,
            );
            let ic = IntegratorConfig::fixed(1.0 / 1024.0);
            for &records in &levels {
                let (_, tr) = integrate_recorded(&Planar(&u), &cloud, 0.0, 1.0, records, &ic)?;
                let samples = tr
                    .positions
                    .iter()
                    .map(|ps| ParticleMeasure::scalar(ps.clone(), vec![1.0 / np as f64; np], 2))
                    .collect::<fa_core::Result<_>>()?;
                let s = MeasureSeries::new(tr.times, samples)?;
                let r = weak_residuals_2d(&u, &s, &phis)?;
                out.push(Level {
                    n: records,
                    max_residual: max_abs(&r),
                    reports: r,
                });
            }
        }
    }
    out.sort_by_key(|l| l.n);
    let order = fitted_order(&out);
    let (first, last) = (out[0].max_residual, out[out.len() - 1].max_residual);
    run.check(
        "residuals decrease with refinement",
        order >= cfg.min_order && last < first,
        format!(
            "max residuals {first:e} -> {last:e}, order {order:.2}, required {}",
            cfg.min_order
        ),
    );
    run.emit("residual.csv", |b| {
        writeln!(b, "n,max_residual")?;
        for l in &out {
            writeln!(b, "{},{}", l.n, l.max_residual)?;
        }
        Ok(())
    })?;
    #[derive(Serialize)]
    struct Report<'a> {
        scenario: Scenario,
        order: f64,
        levels: &'a [Level],
    }
    run.emit_json(
        "residual.json",
        &Report {
            scenario: cfg.scenario,
            order,
            levels: &out,
        },
    )
}

/// Points from a CSV file: the `x` and `y` columns when named in a header,
/// otherwise the first two columns.
fn read_points(path: &Path) -> Result<Vec<Vec2>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut cols = (0, 1);
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed = (
            fields.get(cols.0).map(|f| f.parse::<f64>()),
            fields.get(cols.1).map(|f| f.parse::<f64>()),
        );
        match parsed {
            (Some(Ok(x)), Some(Ok(y))) => pts.push(Vec2::new(x, y)),
            _ if pts.is_empty() && i == 0 => {
                if let (Some(x), Some(y)) = (
                    fields.iter().position(|f| *f == "x"),
                    fields.iter().position(|f| *f == "y"),
                ) {
                    cols = (x, y);
                }
            }
            _ => return Err(Failure::Input(format!("{}:{}: expected two numbers", path.display(), i + 1)).into()),
        }
    }
    if pts.is_empty() {
        return Err(Failure::Input(format!("{} holds no points", path.display())).into());
    }
    Ok(pts)
}

pub fn dimension(cfg: &DimensionConfig, run: &mut Run) -> Result<()> {
    let pts = read_points(&cfg.input)?;
    let r = box_dimension(&pts, &cfg.scales())?;
    println!("{} points, slope {:.4}", pts.len(), r.slope);
    if let Some(want) = cfg.expect {
        run.check(
            "box-counting slope",
            (r.slope - want).abs() <= cfg.tol,
            format!("slope {:.4}, expected {want:.4} within {}", r.slope, cfg.tol),
        );
    }
    run.emit_json("dimension.json", &r)
}

pub fn field_sample(cfg: &FieldSampleConfig, run: &mut Run) -> Result<()> {
    let f = cfg.field.build()?;
    let region = Rect::from_bounds(Vec2::new(cfg.lo[0], cfg.lo[1]), Vec2::new(cfg.hi[0], cfg.hi[1]));
    let g = GridSample::sample(&f, &region, cfg.spacing, cfg.t)?;
    println!("{:?} on {} x {} nodes at t = {}", f.kind(), g.nx, g.ny, cfg.t);
    match cfg.format {
        GridFormat::Csv => run.emit("field.csv", |b| Ok(g.write_csv(b)?)),
        GridFormat::Binary => run.emit("field.bin", |b| Ok(g.write_binary(b)?)),
    }
}
