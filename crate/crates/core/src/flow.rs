//! Lagrangian particle transport by any of the velocity fields, and the
//! checks that trajectories contract the attractors as constructed.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    alpha_n, block_map, full_stage_time, window_start, CollapseField, CombinedField, Conjugated, Field2, Field3,
    FullField, SeriesField, DEFAULT_DEPTH,
};
use crate::geometry::{attractor_approx, word_map, AffineSimilarity, BinaryWord, IfsParams, Rect};
use crate::{Vec2, Vec3};

/// A planar field seen in `R^3` as `(u_1, u_2, 0)`.
pub struct Planar<F>(pub F);

impl<F: Field2> Field3 for Planar<F> {
    fn eval3(&self, t: f64, x: Vec3) -> Vec3 {
        let v = self.0.eval(t, Vec2::new(x.x, x.y));
        Vec3::new(v.x, v.y, 0.0)
    }
}

/// Particles with their Lagrangian labels, masses and, for the ribbon,
/// the stretch vectors `∂_{α_2} X`. Planar clouds keep `z = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    pub positions: Vec<Vec3>,
    labels: Vec<Vec3>,
    weights: Vec<f64>,
    stretch: Option<Vec<Vec3>>,
    dim: usize,
}

impl ParticleCloud {
    pub fn new(positions: Vec<Vec3>, weights: Vec<f64>, stretch: Option<Vec<Vec3>>, dim: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Invalid(format!("cloud dimension must be 2 or 3, got {dim}")));
        }
        if weights.len() != positions.len() || stretch.as_ref().is_some_and(|s| s.len() != positions.len()) {
            return Err(Error::LengthMismatch(format!(
                "{} positions, {} weights, {} stretch vectors",
                positions.len(),
                weights.len(),
                stretch.as_ref().map_or(0, |s| s.len())
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::Invalid(format!("negative or undefined weight {w}")));
        }
        Ok(Self {
            labels: positions.clone(),
            positions,
            weights,
            stretch,
            dim,
        })
    }

    /// Planar particles of equal mass `1/n`.
    pub fn planar(points: &[Vec2]) -> Self {
        let n = points.len().max(1) as f64;
        let positions: Vec<Vec3> = points.iter().map(|p| Vec3::new(p.x, p.y, 0.0)).collect();
        Self {
            labels: positions.clone(),
            weights: vec![1.0 / n; points.len()],
            positions,
            stretch: None,
            dim: 2,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[Vec3] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn stretch(&self) -> Option<&[Vec3]> {
        self.stretch.as_deref()
    }

    pub fn points2(&self) -> Vec<Vec2> {
        self.positions.iter().map(|p| Vec2::new(p.x, p.y)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed,
    Rk4Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4Fixed,
            dt: 1e-4,
            tol: 1e-9,
            max_steps: 50_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn fixed(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    pub fn adaptive(tol: f64) -> Self {
        Self {
            method: Method::Rk4Adaptive,
            dt: 1e-2,
            tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.tol > 0.0) {
            return Err(Error::Invalid(format!(
                "dt and tol must be positive, got {} and {}",
                self.dt, self.tol
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Invalid("max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[inline]
fn rk4_step<F: Field3 + ?Sized>(f: &F, t: f64, x: Vec3, h: f64) -> Vec3 {
    let k1 = f.eval3(t, x);
    let k2 = f.eval3(t + 0.5 * h, x + k1 * (0.5 * h));
    let k3 = f.eval3(t + 0.5 * h, x + k2 * (0.5 * h));
    let k4 = f.eval3(t + h, x + k3 * h);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

enum Outcome {
    Done(Vec3),
    Overflow(Vec3, f64),
}

fn advance_fixed<F: Field3 + ?Sized>(f: &F, x0: Vec3, t0: f64, t1: f64, n: usize) -> Vec3 {
    let h = (t1 - t0) / n as f64;
    let mut x = x0;
    for i in 0..n {
        x = rk4_step(f, t0 + i as f64 * h, x, h);
    }
    x
}

fn advance_adaptive<F: Field3 + ?Sized>(f: &F, x0: Vec3, t0: f64, t1: f64, cfg: &IntegratorConfig) -> Outcome {
    let span = t1 - t0;
    let mut x = x0;
    let mut t = t0;
    let mut h = cfg.dt.min(span);
    let h_min = span * 1e-14;
    let mut steps = 0usize;
    while t < t1 {
        if steps >= cfg.max_steps {
            return Outcome::Overflow(x, t);
        }
        steps += 1;
        let last = t + h >= t1;
        let h_try = if last { t1 - t } else { h };
        let full = rk4_step(f, t, x, h_try);
        let mid = rk4_step(f, t, x, 0.5 * h_try);
        let fine = rk4_step(f, t + 0.5 * h_try, mid, 0.5 * h_try);
        let err = (fine - full).norm() / 15.0;
        if err > cfg.tol && h_try > h_min {
            h = 0.5 * h_try.max(h_min);
            continue;
        }
        // local extrapolation
        x = fine + (fine - full) / 15.0;
        t = if last { t1 } else { t + h_try };
        let grow = if err > 0.0 {
            (0.9 * (cfg.tol / err).powf(0.2)).clamp(0.2, 4.0)
        } else {
            4.0
        };
        h = (h_try * grow).max(h_min);
    }
    Outcome::Done(x)
}

/// Advances every particle from `t0` to `t1`. Particles move independently
/// and in parallel; each follows the same step sequence, so the result does
/// not depend on the thread count. Labels, weights and stretch are kept.
pub fn integrate<F: Field3 + ?Sized>(
    field: &F,
    cloud: &ParticleCloud,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<ParticleCloud> {
    cfg.validate()?;
    if !(t1 >= t0) {
        return Err(Error::Invalid(format!("end time {t1} precedes start time {t0}")));
    }
    let mut out = cloud.clone();
    if t1 == t0 {
        return Ok(out);
    }
    match cfg.method {
        Method::Rk4Fixed => {
            let n = ((t1 - t0) / cfg.dt - 1e-9).ceil().max(1.0) as usize;
            if n > cfg.max_steps {
                return Err(Error::StepOverflow {
                    max_steps: cfg.max_steps,
                    t: t0,
                    partial: flatten(&cloud.positions, cloud.dim),
                });
            }
            out.positions = cloud
                .positions
                .par_iter()
                .map(|&x| advance_fixed(field, x, t0, t1, n))
                .collect();
        }
        Method::Rk4Adaptive => {
            let results: Vec<Outcome> = cloud
                .positions
                .par_iter()
                .map(|&x| advance_adaptive(field, x, t0, t1, cfg))
                .collect();
            let mut stop = None::<f64>;
            let positions: Vec<Vec3> = results
                .into_iter()
                .map(|r| match r {
                    Outcome::Done(x) => x,
                    Outcome::Overflow(x, t) => {
                        stop = Some(stop.map_or(t, |s| s.min(t)));
                        x
                    }
                })
                .collect();
            if let Some(t) = stop {
                return Err(Error::StepOverflow {
                    max_steps: cfg.max_steps,
                    t,
                    partial: flatten(&positions, cloud.dim),
                });
            }
            out.positions = positions;
        }
    }
    Ok(out)
}

/// [`integrate`] for a planar field.
pub fn integrate_planar<F: Field2>(
    field: &F,
    cloud: &ParticleCloud,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<ParticleCloud> {
    integrate(&Planar(field), cloud, t0, t1, cfg)
}

fn flatten(p: &[Vec3], dim: usize) -> Vec<Vec<f64>> {
    p.iter().map(|v| v.as_slice()[..dim].to_vec()).collect()
}

/// Positions recorded on a uniform time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Vec3>>,
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        if self.dim == 3 {
            writeln!(out, "t,id,x,y,z")?;
        } else {
            writeln!(out, "t,id,x,y")?;
        }
        for (t, snap) in self.times.iter().zip(&self.positions) {
            for (id, p) in snap.iter().enumerate() {
                if self.dim == 3 {
                    writeln!(out, "{t},{id},{},{},{}", p.x, p.y, p.z)?;
                } else {
                    writeln!(out, "{t},{id},{},{}", p.x, p.y)?;
                }
            }
        }
        Ok(())
    }
}

/// Integrates over `[t0, t1]` and keeps the positions at `records + 1`
/// equally spaced times.
pub fn integrate_recorded<F: Field3 + ?Sized>(
    field: &F,
    cloud: &ParticleCloud,
    t0: f64,
    t1: f64,
    records: usize,
    cfg: &IntegratorConfig,
) -> Result<(ParticleCloud, Trajectory)> {
    let records = records.max(1);
    let mut cur = cloud.clone();
    let mut traj = Trajectory {
        dim: cloud.dim,
        times: vec![t0],
        positions: vec![cloud.positions.clone()],
    };
    for i in 0..records {
        let a = t0 + (t1 - t0) * i as f64 / records as f64;
        let b = t0 + (t1 - t0) * (i + 1) as f64 / records as f64;
        cur = integrate(field, &cur, a, b, cfg)?;
        traj.times.push(b);
        traj.positions.push(cur.positions.clone());
    }
    Ok((cur, traj))
}

/// Largest distance between `X_{G U ∘ G_r^{-1}}(t, x)` and `G_r X_U(t, G_r^{-1} x)`
/// over the cloud after integrating on `[t0, t1]`.
pub fn rescaled_trajectory_check<F: Field2 + Clone>(
    field: &F,
    g: &AffineSimilarity,
    r: Vec2,
    cloud: &ParticleCloud,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let gr = AffineSimilarity::new(r, g.rotation, g.scale);
    let conj = Conjugated {
        inner: field.clone(),
        map: gr,
    };
    let direct = integrate_planar(&conj, cloud, t0, t1, cfg)?;
    let pulled = ParticleCloud::planar(&cloud.points2().iter().map(|&x| gr.apply_inverse(x)).collect::<Vec<_>>());
    let moved = integrate_planar(field, &pulled, t0, t1, cfg)?;
    Ok(direct
        .points2()
        .iter()
        .zip(moved.points2())
        .map(|(a, b)| (a - gr.apply(b)).norm())
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub word: BinaryWord,
    pub endpoint_error: f64,
    /// `γ F_w(±1, 0)`.
    pub expected: [[f64; 2]; 2],
    pub measured: [[f64; 2]; 2],
}

/// Integrates the endpoints of every `F_w(I)`, `|w| <= depth`, under `U` over
/// `[0,1]` and compares them with `γ F_w(I)`.
pub fn verify_contraction(alpha: f64, depth: usize, cfg: &IntegratorConfig) -> Result<Vec<ContractionReport>> {
    let params = IfsParams::derive(alpha)?;
    let u = SeriesField::new(params, DEFAULT_DEPTH);
    let words: Vec<BinaryWord> = BinaryWord::up_to(depth).collect();
    let mut pts = Vec::with_capacity(2 * words.len());
    for w in &words {
        let g = word_map(w, 0.0, alpha);
        pts.push(g.apply(Vec2::new(-1.0, 0.0)));
        pts.push(g.apply(Vec2::new(1.0, 0.0)));
    }
    let end = integrate_planar(&u, &ParticleCloud::planar(&pts), 0.0, 1.0, cfg)?.points2();
    Ok(words
        .into_iter()
        .enumerate()
        .map(|(i, word)| {
            let e = [pts[2 * i] * params.gamma, pts[2 * i + 1] * params.gamma];
            let m = [end[2 * i], end[2 * i + 1]];
            ContractionReport {
                word,
                endpoint_error: (m[0] - e[0]).norm().max((m[1] - e[1]).norm()),
                expected: [[e[0].x, e[0].y], [e[1].x, e[1].y]],
                measured: [[m[0].x, m[0].y], [m[1].x, m[1].y]],
            }
        })
        .collect())
}

/// `t_0, …, t_k` with `t_j = Σ_{i<j} ξ^i`.
pub fn collapse_schedule(gamma: f64, xi: f64, k: usize) -> Result<Vec<f64>> {
    crate::fields::check_xi(gamma, xi)?;
    Ok(geometric_schedule(xi, k))
}

/// The partial geometric sums without the window constraint on `ξ`.
pub fn geometric_schedule(xi: f64, k: usize) -> Vec<f64> {
    (0..=k).map(|j| window_start(xi, j)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub k: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Largest distance by which any sample left `γ^k R_ε` on the window.
    pub max_excess: f64,
    /// Width of the sample cloud along `x_1` at `t_k`.
    pub width: f64,
    pub expected_width: f64,
    pub width_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnclosureReport {
    pub alpha: f64,
    pub xi: f64,
    pub kmax: usize,
    pub samples: usize,
    pub slack: f64,
    pub integrator: IntegratorConfig,
    pub windows: Vec<WindowReport>,
    pub passed: bool,
}

fn excess(r: &Rect, p: Vec2) -> f64 {
    let d = (p - r.center).abs() - r.half;
    d.x.max(d.y)
}

fn width(points: &[Vec2]) -> f64 {
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.x), hi.max(p.x))
    });
    hi - lo
}

/// Advects the segment endpoints of the depth-`sample_depth` approximation of
/// `S_α` under `W` and checks that on each window `k <= kmax` they stay in
/// `γ^k R_ε` up to `slack`. Containment is tested at `checks` times per window.
pub fn enclosure_check(
    alpha: f64,
    xi: f64,
    kmax: usize,
    sample_depth: usize,
    slack: f64,
    cfg: &IntegratorConfig,
) -> Result<EnclosureReport> {
    let params = IfsParams::derive(alpha)?;
    let w = CollapseField::new(params, xi, DEFAULT_DEPTH)?;
    let start = attractor_approx(&params, sample_depth)?.endpoints();
    let w0 = width(&start);
    let mut cloud = ParticleCloud::planar(&start);
    let checks = 16;
    let mut windows = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let (a, b) = (window_start(xi, k), window_start(xi, k + 1));
        let gk = params.gamma.powi(k as i32);
        let rect = Rect::r(params.eps).scaled(gk);
        let pts = cloud.points2();
        let wk = width(&pts);
        let mut max_excess = pts.iter().map(|&p| excess(&rect, p)).fold(f64::NEG_INFINITY, f64::max);
        let scaled = IntegratorConfig {
            dt: cfg.dt * xi.powi(k as i32),
            ..*cfg
        };
        let (next, traj) = integrate_recorded(&Planar(&w), &cloud, a, b, checks, &scaled)?;
        for snap in &traj.positions[1..] {
            for p in snap {
                max_excess = max_excess.max(excess(&rect, Vec2::new(p.x, p.y)));
            }
        }
        cloud = next;
        windows.push(WindowReport {
            k,
            t_start: a,
            t_end: b,
            max_excess,
            width: wk,
            expected_width: w0 * gk,
            width_rel_error: (wk - w0 * gk).abs() / (w0 * gk),
        });
    }
    let passed = windows.iter().all(|w| w.max_excess <= slack);
    Ok(EnclosureReport {
        alpha,
        xi,
        kmax,
        samples: start.len(),
        slack,
        integrator: *cfg,
        windows,
        passed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullDimReport {
    pub kmax: usize,
    pub sample_depth: usize,
    pub integrator: IntegratorConfig,
    /// Image of `(24, 0)` after `[0, 2]`.
    pub image_24: [f64; 2],
    pub image_24_error: f64,
    /// Largest deviation of block samples from `G_k((7/8) G_k^{-1} x)` at `t = 1`.
    pub block_error_t1: f64,
    /// Largest deviation of block samples from `(7/8) x` at `t = 2`.
    pub block_error_t2: f64,
    /// Per-block deviations `(k, t = 1, t = 2)`. Segment endpoints are saddle
    /// points of the child fields, so rounding errors grow geometrically with
    /// the number of windows `k + 1` in the block.
    pub per_block: Vec<(usize, f64, f64)>,
    /// Largest `|x_2|` of the line samples at `t = 2`, and the range they cover.
    pub line_offaxis: f64,
    pub line_range: [f64; 2],
    pub passed: bool,
}

pub const FULL_DIM_POINT_TOL: f64 = 1e-4;
pub const FULL_DIM_SET_TOL: f64 = 1e-3;

/// Integrates `(24, 0)`, samples of `[0, 24] x {0}` and the segment endpoints
/// of `G_k(S_{α_k})` approximations, `k <= kmax`, under `V` over `[0, 2]`.
pub fn full_dim_scale_check(kmax: usize, sample_depth: usize, cfg: &IntegratorConfig) -> Result<FullDimReport> {
    let v = CombinedField::new(kmax, DEFAULT_DEPTH)?;
    let mut line: Vec<Vec2> = (0..=48).map(|i| Vec2::new(0.5 * i as f64, 0.0)).collect();
    line.push(Vec2::new(24.0, 0.0));
    let mut block_pts = Vec::new();
    let mut block_of = Vec::new();
    for k in 1..=kmax {
        let p = IfsParams::derive(alpha_n(k))?;
        let g = block_map(k);
        for y in attractor_approx(&p, sample_depth)?.endpoints() {
            block_pts.push(g.apply(y));
            block_of.push(k);
        }
    }
    let nl = line.len();
    let mut all = line.clone();
    all.extend_from_slice(&block_pts);
    let cloud = ParticleCloud::planar(&all);
    let mid = integrate_planar(&v, &cloud, 0.0, 1.0, cfg)?;
    let fin = integrate_planar(&v, &mid, 1.0, 2.0, cfg)?;
    let (mid, fin) = (mid.points2(), fin.points2());

    let mut per_block: Vec<(usize, f64, f64)> = (1..=kmax).map(|k| (k, 0.0, 0.0)).collect();
    for (i, (&x, &k)) in block_pts.iter().zip(&block_of).enumerate() {
        let g = block_map(k);
        let want1 = g.apply(g.apply_inverse(x) * 0.875);
        let b = &mut per_block[k - 1];
        b.1 = b.1.max((mid[nl + i] - want1).norm());
        b.2 = b.2.max((fin[nl + i] - x * 0.875).norm());
    }
    let e1 = per_block.iter().map(|b| b.1).fold(0.0, f64::max);
    let e2 = per_block.iter().map(|b| b.2).fold(0.0, f64::max);
    let line_end = &fin[..nl];
    let offaxis = line_end.iter().map(|p| p.y.abs()).fold(0.0, f64::max);
    let lo = line_end.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let hi = line_end.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let img = fin[nl - 1];
    let err24 = (img - Vec2::new(21.0, 0.0)).norm();
    let passed = err24 < FULL_DIM_POINT_TOL
        && e1 < FULL_DIM_SET_TOL
        && e2 < FULL_DIM_SET_TOL
        && offaxis < FULL_DIM_SET_TOL
        && lo.abs() < FULL_DIM_SET_TOL
        && (hi - 21.0).abs() < FULL_DIM_SET_TOL;
    Ok(FullDimReport {
        kmax,
        sample_depth,
        integrator: *cfg,
        image_24: [img.x, img.y],
        image_24_error: err24,
        block_error_t1: e1,
        block_error_t2: e2,
        per_block,
        line_offaxis: offaxis,
        line_range: [lo, hi],
        passed,
    })
}

/// Image of `x` under `Ṽ` at the end of stage `stages`, i.e. at `t_{stages}`.
pub fn full_field_stage_image(field: &FullField, x: Vec2, stages: usize, cfg: &IntegratorConfig) -> Result<Vec2> {
    let mut cloud = ParticleCloud::planar(&[x]);
    for k in 0..stages {
        cloud = integrate_planar(field, &cloud, full_stage_time(k), full_stage_time(k + 1), cfg)?;
    }
    Ok(cloud.points2()[0])
}

pub fn write_json<T: Serialize, W: Write>(value: &T, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, value)?;
    Ok(())
}
