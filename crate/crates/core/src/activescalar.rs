//! Active scalar particle systems whose velocity is recovered from the
//! particles themselves: a slit of particles on the `x_1` axis in the plane,
//! and a ribbon `{0} x [-1,1] x [-1,1]` in space that collapses along `x_3`.
//!
//! Both reduce to the one-dimensional system
//! `dY_i/dt = c (2/N) Σ_j M_eps(Y_i - Y_j)` with `c = 1` for the slit and
//! `c = 2` for the ribbon, where `M_eps` is the axis kernel smoothed at radius
//! `eps`. The markers are the midpoints of `N` equal cells of `[-1,1]`.

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Field2, Field3};
use crate::profiles::{cutoff, mollifier_1d, mollifier_1d_deriv};
use crate::quad;
use crate::table::GradedTable;
use crate::{Vec2, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Slit2d,
    Ribbon3x3,
}

/// Kernel family and the radii of its cutoff `χ`: 1 below `inner`, 0 above `outer`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub inner: f64,
    pub outer: f64,
}

impl KernelSpec {
    pub fn slit() -> Self {
        Self {
            kind: KernelKind::Slit2d,
            inner: 2.0,
            outer: 3.0,
        }
    }

    pub fn ribbon() -> Self {
        Self {
            kind: KernelKind::Ribbon3x3,
            inner: 3.0,
            outer: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelValue {
    Vector(Vec2),
    Matrix(Matrix3<f64>),
}

/// `K = ∇⊥κ` for `κ(x) = x_1 x_2 |x|^{-1/2} χ(|x|)`; zero at the origin.
#[inline]
pub fn slit_kernel(x: Vec2) -> Vec2 {
    slit_kernel_with(&KernelSpec::slit(), x)
}

#[inline]
fn slit_kernel_with(spec: &KernelSpec, x: Vec2) -> Vec2 {
    let r2 = x.norm_squared();
    if r2 == 0.0 {
        return Vec2::zeros();
    }
    let r = r2.sqrt();
    if r >= spec.outer {
        return Vec2::zeros();
    }
    let (c, dc) = cutoff(r, spec.inner, spec.outer);
    // κ = x1 x2 f(r), f = r^{-1/2} χ
    let f = c / r.sqrt();
    let fr = (-0.5 * c / r + dc) / r.sqrt();
    let k1 = x.y * f + x.x * x.y * fr * x.x / r;
    let k2 = x.x * f + x.x * x.y * fr * x.y / r;
    Vec2::new(-k2, k1)
}

/// Second column `(∂_3κ, 0, -∂_1κ)` of the ribbon kernel, with
/// `κ(x) = x_1 x_3 |(x_1,x_3)|^{-1/2} χ(|x|)`; it is the only column that
/// acts on the stretch `(0,1,0)`.
#[inline]
pub fn ribbon_column(x: Vec3) -> Vec3 {
    ribbon_column_with(&KernelSpec::ribbon(), x)
}

#[inline]
fn ribbon_column_with(spec: &KernelSpec, x: Vec3) -> Vec3 {
    let (d1, d3) = ribbon_partials(spec, x);
    Vec3::new(d3, 0.0, -d1)
}

/// `(∂_1κ, ∂_3κ)` for the ribbon potential.
#[inline]
fn ribbon_partials(spec: &KernelSpec, x: Vec3) -> (f64, f64) {
    let q2 = x.x * x.x + x.z * x.z;
    if q2 == 0.0 {
        return (0.0, 0.0);
    }
    let r = x.norm();
    if r >= spec.outer {
        return (0.0, 0.0);
    }
    let (c, dc) = cutoff(r, spec.inner, spec.outer);
    let q = q2.sqrt();
    let g = q.powf(-0.5);
    let gq = -0.5 * g / q;
    let k = x.x * x.z;
    let d1 = x.z * g * c + k * gq * (x.x / q) * c + k * g * dc * x.x / r;
    let d3 = x.x * g * c + k * gq * (x.z / q) * c + k * g * dc * x.z / r;
    (d1, d3)
}

/// Full ribbon kernel matrix: rows `(0, ∂_3κ, 0)`, `(0, 0, 0)`, `(0, -∂_1κ, 0)`.
pub fn ribbon_kernel(x: Vec3) -> Matrix3<f64> {
    let col = ribbon_column(x);
    let mut m = Matrix3::zeros();
    m.set_column(1, &col);
    m
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64]) -> Result<KernelValue> {
    match (spec.kind, x.len()) {
        (KernelKind::Slit2d, 2) => Ok(KernelValue::Vector(slit_kernel_with(spec, Vec2::new(x[0], x[1])))),
        (KernelKind::Ribbon3x3, 3) => {
            let col = ribbon_column_with(spec, Vec3::new(x[0], x[1], x[2]));
            let mut m = Matrix3::zeros();
            m.set_column(1, &col);
            Ok(KernelValue::Matrix(m))
        }
        (kind, n) => Err(Error::LengthMismatch(format!(
            "{kind:?} kernel takes a point in R^{}, got {n} coordinates",
            if kind == KernelKind::Slit2d { 2 } else { 3 }
        ))),
    }
}

/// `K(s, 0)_1 = -sign(s) |s|^{1/2} χ(|s|)`, the kernel along the axis.
#[inline]
pub fn axis_kernel(s: f64) -> f64 {
    let a = s.abs();
    if a >= 3.0 {
        return 0.0;
    }
    let (c, _) = cutoff(a, 2.0, 3.0);
    -s.signum() * a.sqrt() * c
}

/// `M_eps = rho_eps * K(·,0)_1`, tabulated on `[0, 3 + eps]` and extended oddly.
#[derive(Clone, Debug)]
pub struct MollifiedKernel {
    eps: f64,
    table: GradedTable,
}

const KERNEL_NODES_PER_BLOCK: usize = 256;

impl MollifiedKernel {
    pub fn build(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::Domain {
                name: "eps",
                value: eps,
                interval: "(0, 1/2)",
            });
        }
        let hi = 3.0 + eps;
        let mut failure = None;
        let table = GradedTable::build_capped(2.0 * eps, hi, KERNEL_NODES_PER_BLOCK, (eps / 8.0).min(2e-3), |s| {
            match Self::direct(eps, s) {
                Ok((_, d)) if s == 0.0 => (0.0, d),
                Ok(vd) => vd,
                Err(e) => {
                    failure.get_or_insert(e);
                    (0.0, 0.0)
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let m = Self { eps, table };
        // non-increasing on [0, 2 - eps], where the cutoff is not felt
        let mut prev = f64::INFINITY;
        for (s, v, _) in m.table.nodes() {
            if s > 2.0 - eps {
                break;
            }
            if v > prev + 1e-14 {
                return Err(Error::Invalid(format!("mollified kernel increases at s = {s}")));
            }
            prev = v;
        }
        Ok(m)
    }

    /// `M_eps(s)` and `M_eps'(s)` by adaptive quadrature, without the table.
    pub fn direct(eps: f64, s: f64) -> Result<(f64, f64)> {
        let mut breaks = Vec::with_capacity(5);
        for c in [0.0, 2.0, -2.0, 3.0, -3.0] {
            let w = (s - c) / eps;
            if w.abs() < 1.0 {
                breaks.push(w);
            }
        }
        breaks.sort_by(f64::total_cmp);
        let v = quad::integrate(
            |w| mollifier_1d(w) * axis_kernel(s - eps * w),
            -1.0,
            1.0,
            &breaks,
            1e-14,
        )?;
        let d = quad::integrate(
            |w| mollifier_1d_deriv(w) * axis_kernel(s - eps * w),
            -1.0,
            1.0,
            &breaks,
            1e-13,
        )? / eps;
        Ok((v, d))
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        let a = s.abs();
        if a >= self.table.hi() {
            return 0.0;
        }
        let v = self.table.eval(a);
        if s < 0.0 {
            -v
        } else {
            v
        }
    }

    #[inline]
    pub fn eval_deriv(&self, s: f64) -> f64 {
        let a = s.abs();
        if a >= self.table.hi() {
            return 0.0;
        }
        self.table.eval_deriv(a)
    }
}

/// Cell midpoints `(2i - N + 1)/N`, `i = 0..N`, of the uniform partition of `[-1,1]`.
pub fn markers(n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * i as f64 + 1.0 - n as f64) / n as f64).collect()
}

/// `out_i = rate (2/N) Σ_j M_eps(Y_i - Y_j)`, each row summed in index order.
pub fn slit_rhs(y: &[f64], m: &MollifiedKernel, rate: f64, out: &mut [f64]) {
    let w = rate * 2.0 / y.len() as f64;
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        let yi = y[i];
        let mut s = 0.0;
        for &yj in y {
            s += m.eval(yi - yj);
        }
        *o = w * s;
    });
}

/// [`slit_rhs`] for a state with `Y_{N-1-i} = -Y_i`: the upper half is the
/// negated mirror of the lower half, so the odd symmetry and the zero mean
/// are kept exactly instead of drifting at rounding level.
pub fn slit_rhs_odd(y: &[f64], m: &MollifiedKernel, rate: f64, out: &mut [f64]) {
    let n = y.len();
    let w = rate * 2.0 / n as f64;
    let (lo, hi) = out.split_at_mut(n / 2);
    lo.par_iter_mut().enumerate().for_each(|(i, o)| {
        let yi = y[i];
        let mut s = 0.0;
        for &yj in y {
            s += m.eval(yi - yj);
        }
        *o = w * s;
    });
    for (k, o) in hi.iter_mut().enumerate() {
        *o = -lo[n / 2 - 1 - k];
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlitState {
    pub alphas: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
    pub eps: f64,
}

impl SlitState {
    pub fn initial(n: usize, eps: f64) -> Self {
        let alphas = markers(n);
        Self {
            y: alphas.clone(),
            alphas,
            t: 0.0,
            eps,
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n: usize,
    /// Mollification radius; `2/N` when absent.
    pub eps: Option<f64>,
    pub dt: f64,
    pub t_end: f64,
    /// Keep every `record_every`-th step in the history.
    pub record_every: usize,
    /// Relative tolerance of the step-doubling controller used near collapse.
    pub adaptive_tol: f64,
}

impl SolverConfig {
    pub fn new(n: usize, eps: Option<f64>, dt: f64, t_end: f64) -> Self {
        Self {
            n,
            eps,
            dt,
            t_end,
            record_every: 1,
            adaptive_tol: 1e-10,
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(2.0 / self.n as f64)
    }

    /// The step actually used: `min(dt, eps)`.
    pub fn effective_dt(&self) -> f64 {
        self.dt.min(self.eps())
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n % 2 == 1 {
            return Err(Error::Invalid(format!(
                "particle count must be even and at least 2, got {}",
                self.n
            )));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::Invalid(format!("end time must be positive, got {}", self.t_end)));
        }
        if !(self.dt > 0.0) || self.record_every == 0 || !(self.adaptive_tol > 0.0) {
            return Err(Error::Invalid(
                "dt, record_every and adaptive_tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Worst values of the monitored invariants over all accepted steps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantLog {
    pub steps: usize,
    pub adaptive_steps: usize,
    pub rejected_steps: usize,
    /// `max_i |Y_i + Y_{N-1-i}|`.
    pub max_oddness: f64,
    /// Smallest `Y_{i+1} - Y_i`.
    pub min_gap: f64,
    /// Largest `(Y_{i+1} - Y_i) - 2/N`.
    pub max_gap_excess: f64,
    /// Largest one-step increase of `max |Y|`.
    pub max_growth: f64,
}

pub const ODDNESS_TOL: f64 = 1e-10;
pub const GAP_TOL: f64 = 1e-10;
pub const GROWTH_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlitHistory {
    pub alphas: Vec<f64>,
    pub eps: f64,
    pub rate: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub log: InvariantLog,
}

impl SlitHistory {
    pub fn n(&self) -> usize {
        self.alphas.len()
    }

    pub fn state(&self, k: usize) -> SlitState {
        SlitState {
            alphas: self.alphas.clone(),
            y: self.states[k].clone(),
            t: self.times[k],
            eps: self.eps,
        }
    }

    /// `max_i Y_i`, the position of the outermost marker, at each recorded time.
    pub fn outer_trace(&self) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(&t, y)| (t, y.iter().cloned().fold(f64::NEG_INFINITY, f64::max)))
            .collect()
    }

    /// Index of the recorded time closest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        nearest_index(&self.times, t)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,alpha,Y")?;
        for (t, y) in self.times.iter().zip(&self.states) {
            for (a, v) in self.alphas.iter().zip(y) {
                writeln!(out, "{t},{a},{v}")?;
            }
        }
        Ok(())
    }
}

fn nearest_index(times: &[f64], t: f64) -> usize {
    match times.binary_search_by(|probe| probe.total_cmp(&t)) {
        Ok(i) => i,
        Err(0) => 0,
        Err(i) if i >= times.len() => times.len() - 1,
        Err(i) => {
            if (times[i] - t).abs() < (t - times[i - 1]).abs() {
                i
            } else {
                i - 1
            }
        }
    }
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, y: &[f64], h: f64, m: &MollifiedKernel, rate: f64, out: &mut [f64]) {
        slit_rhs_odd(y, m, rate, &mut self.k1);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        slit_rhs_odd(&self.tmp, m, rate, &mut self.k2);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        slit_rhs_odd(&self.tmp, m, rate, &mut self.k3);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        slit_rhs_odd(&self.tmp, m, rate, &mut self.k4);
        for i in 0..y.len() {
            out[i] = y[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

fn max_abs(y: &[f64]) -> f64 {
    y.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn check_step(y: &[f64], prev_max: f64, spacing: f64, step: usize, t: f64, log: &mut InvariantLog) -> Result<()> {
    let n = y.len();
    let odd = (0..n / 2).map(|i| (y[i] + y[n - 1 - i]).abs()).fold(0.0, f64::max);
    let mut min_gap = f64::INFINITY;
    let mut max_excess = f64::NEG_INFINITY;
    for w in y.windows(2) {
        let g = w[1] - w[0];
        min_gap = min_gap.min(g);
        max_excess = max_excess.max(g - spacing);
    }
    let growth = max_abs(y) - prev_max;
    log.max_oddness = log.max_oddness.max(odd);
    log.min_gap = log.min_gap.min(min_gap);
    log.max_gap_excess = log.max_gap_excess.max(max_excess);
    log.max_growth = log.max_growth.max(growth);
    let fail = |what: String| Err(Error::Invariant { step, t, what });
    if odd > ODDNESS_TOL {
        return fail(format!("oddness defect {odd:e}"));
    }
    if !(min_gap > 0.0) {
        return fail(format!("markers out of order, smallest gap {min_gap:e}"));
    }
    if max_excess > GAP_TOL {
        return fail(format!("gap exceeds marker spacing by {max_excess:e}"));
    }
    if growth > GROWTH_TOL {
        return fail(format!("max |Y| grew by {growth:e}"));
    }
    Ok(())
}

/// Integrates `dY/dt = rate (2/N) Σ_j M_eps(Y_i - Y_j)` from `Y(0) = markers`
/// with RK4, checking oddness, ordering, the `∂_α Y <= 1` bound and the decay
/// of `max |Y|` after every accepted step. Once `max |Y| < 10 eps` the step is
/// chosen by step doubling.
pub fn solve_system(cfg: &SolverConfig, rate: f64) -> Result<SlitHistory> {
    cfg.validate()?;
    let eps = cfg.eps();
    let m = MollifiedKernel::build(eps)?;
    let n = cfg.n;
    let dt = cfg.effective_dt();
    let spacing = 2.0 / n as f64;
    let alphas = markers(n);
    let mut y = alphas.clone();
    let mut next = vec![0.0; n];
    let mut half = vec![0.0; n];
    let mut coarse = vec![0.0; n];
    let mut rk = Rk4::new(n);
    let mut log = InvariantLog {
        min_gap: f64::INFINITY,
        max_gap_excess: f64::NEG_INFINITY,
        max_growth: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut times = vec![0.0];
    let mut states = vec![y.clone()];
    let mut t = 0.0;
    let mut step = 0usize;
    let mut h_adapt = dt;
    let max_steps = ((cfg.t_end / dt).ceil() as usize + 1) * 64;
    let record_span = dt * cfg.record_every as f64;
    let mut next_record = record_span;

    while t < cfg.t_end - 1e-12 * cfg.t_end {
        let target = next_record.min(cfg.t_end);
        let cur_max = max_abs(&y);
        if cur_max < 10.0 * eps {
            // step doubling with a relative error target
            let h = h_adapt.min(target - t);
            rk.step(&y, h, &m, rate, &mut coarse);
            rk.step(&y, 0.5 * h, &m, rate, &mut half);
            let mid = half.clone();
            rk.step(&mid, 0.5 * h, &m, rate, &mut next);
            let err = next.iter().zip(&coarse).fold(0.0f64, |e, (a, b)| e.max((a - b).abs())) / 15.0;
            let scale = cfg.adaptive_tol * cur_max.max(f64::MIN_POSITIVE);
            if err > scale && h > dt / 1024.0 {
                log.rejected_steps += 1;
                h_adapt = (h * (0.9 * (scale / err).powf(0.2)).clamp(0.1, 0.5)).max(dt / 1024.0);
                continue;
            }
            let grow = if err > 0.0 {
                (0.9 * (scale / err).powf(0.2)).clamp(1.0, 2.0)
            } else {
                2.0
            };
            h_adapt = (h * grow).min(dt);
            t += h;
            log.adaptive_steps += 1;
        } else {
            let h = dt.min(target - t);
            rk.step(&y, h, &m, rate, &mut next);
            t += h;
        }
        step += 1;
        if step > max_steps {
            return Err(Error::StepOverflow {
                max_steps,
                t,
                partial: vec![y.clone()],
            });
        }
        check_step(&next, cur_max, spacing, step, t, &mut log)?;
        std::mem::swap(&mut y, &mut next);
        if t >= target - 1e-12 * target.max(1.0) {
            t = target;
            times.push(t);
            states.push(y.clone());
            next_record = target + record_span;
        }
    }
    log.steps = step;
    Ok(SlitHistory {
        alphas,
        eps,
        rate,
        dt,
        times,
        states,
        log,
    })
}

pub fn solve_slit(cfg: &SolverConfig) -> Result<SlitHistory> {
    solve_system(cfg, 1.0)
}

/// The ribbon reduces to the slit system at twice the rate, since the
/// `α_2` extent `[-1,1]` integrates to 2.
pub fn solve_ribbon(cfg: &SolverConfig) -> Result<RibbonHistory> {
    Ok(RibbonHistory {
        inner: solve_system(cfg, 2.0)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RibbonHistory {
    /// The `α_3` dynamics; `X(t,α) = (0, α_2, Y(t, α_3))`.
    pub inner: SlitHistory,
}

impl RibbonHistory {
    pub fn alpha2_extent(&self) -> [f64; 2] {
        [-1.0, 1.0]
    }
}

/// Margin above the square-root profile allowed before collapse.
pub const COLLAPSE_MARGIN: f64 = 0.05;
/// Largest `max |Y|` at the last record that still counts as collapsed.
pub const COLLAPSE_TOL: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseVerdict {
    /// `2 / rate`, the time by which the profile bound reaches zero.
    pub collapse_time: f64,
    /// Largest `max_i Y_i - (1 - rate t/2)^2 - margin` over records up to the collapse time.
    pub bound_excess: f64,
    /// `max |Y|` at the last record.
    pub terminal: f64,
    /// False when the run stops before the collapse time.
    pub reached: bool,
    pub passed: bool,
}

/// Compares a run at `rate` with the profile bound `(1 - rate t/2)^2` and
/// checks that the markers have collapsed once the bound reaches zero.
pub fn collapse_verdict(h: &SlitHistory) -> CollapseVerdict {
    let tc = 2.0 / h.rate;
    let bound_excess = h
        .outer_trace()
        .into_iter()
        .filter(|(t, _)| *t <= tc + 1e-12)
        .map(|(t, y)| y - ((1.0 - t / tc).powi(2) + COLLAPSE_MARGIN))
        .fold(f64::NEG_INFINITY, f64::max);
    let terminal = h
        .states
        .last()
        .map_or(0.0, |y| y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let reached = h.times.last().is_some_and(|&t| t >= tc - 1e-12);
    CollapseVerdict {
        collapse_time: tc,
        bound_excess,
        terminal,
        reached,
        passed: bound_excess <= 0.0 && (!reached || terminal < COLLAPSE_TOL),
    }
}

/// `u(x) = (2/N) Σ_j K(x - (Y_j, 0))`.
pub fn slit_velocity(y: &[f64], x: Vec2) -> Vec2 {
    let w = 2.0 / y.len() as f64;
    let mut acc = Vec2::zeros();
    for &yj in y {
        acc += slit_kernel(x - Vec2::new(yj, 0.0));
    }
    acc * w
}

/// `u(x) = Σ_{m,j} w K(x - (0, β_m, Y_j)) (0,1,0)` with `M` midpoint nodes
/// `β_m` in `[-1,1]` and weight `w = (2/M)(2/N)`.
pub fn ribbon_velocity(y: &[f64], m_nodes: usize, x: Vec3) -> Vec3 {
    let w = (2.0 / m_nodes as f64) * (2.0 / y.len() as f64);
    let betas = markers(m_nodes);
    let mut acc = Vec3::zeros();
    for &b in &betas {
        for &yj in y {
            acc += ribbon_column(x - Vec3::new(0.0, b, yj));
        }
    }
    acc * w
}

/// Velocity recovered from recorded slit states; evaluated at `t` with the
/// state recorded nearest to `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlitField {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl SlitField {
    pub fn snapshot(y: Vec<f64>) -> Self {
        Self {
            times: vec![0.0],
            states: vec![y],
        }
    }

    pub fn from_history(h: &SlitHistory) -> Self {
        Self {
            times: h.times.clone(),
            states: h.states.clone(),
        }
    }
}

impl Field2 for SlitField {
    fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        slit_velocity(&self.states[nearest_index(&self.times, t)], x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RibbonField {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub m_nodes: usize,
}

impl RibbonField {
    pub fn from_history(h: &RibbonHistory, m_nodes: usize) -> Self {
        Self {
            times: h.inner.times.clone(),
            states: h.inner.states.clone(),
            m_nodes,
        }
    }
}

impl Field3 for RibbonField {
    fn eval3(&self, t: f64, x: Vec3) -> Vec3 {
        ribbon_velocity(&self.states[nearest_index(&self.times, t)], self.m_nodes, x)
    }
}

impl Field2 for RibbonField {
    /// `(u_1, u_3)` on the section `x_2 = 0`, with `x = (x_1, x_3)`.
    fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        let v = self.eval3(t, Vec3::new(x.x, 0.0, x.y));
        Vec2::new(v.x, v.z)
    }
}

/// `‖∇u(t,·)‖_{L^p}` of the slit velocity over the box `[-4,4] x [-3,3]`,
/// which contains its support.
pub fn active_sobolev_check(y: &[f64], p: f64, h: f64) -> Result<crate::fields::SobolevEstimate> {
    if !(1.0..2.0).contains(&p) && p != 2.0 {
        return Err(Error::Domain {
            name: "p",
            value: p,
            interval: "[1, 2]",
        });
    }
    let field = SlitField::snapshot(y.to_vec());
    let region = crate::geometry::Rect::new(Vec2::zeros(), Vec2::new(4.0, 3.0));
    crate::fields::sobolev_norm(&field, 0.0, p, &region, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn slit_kernel_on_axis() {
        assert_abs_diff_eq!(slit_kernel(Vec2::new(1.0, 0.0)), Vec2::new(-1.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(slit_kernel(Vec2::new(-0.25, 0.0)), Vec2::new(0.5, 0.0), epsilon = 1e-15);
        assert_eq!(slit_kernel(Vec2::new(4.0, 0.0)), Vec2::zeros());
        assert_eq!(slit_kernel(Vec2::zeros()), Vec2::zeros());
        for s in [-1.9, -0.3, 0.01, 1.2] {
            assert_abs_diff_eq!(slit_kernel(Vec2::new(s, 0.0)).x, axis_kernel(s), epsilon = 1e-15);
        }
    }

    #[test]
    fn slit_kernel_matches_finite_differences() {
        let kappa = |x: Vec2| {
            let r = x.norm();
            x.x * x.y / r.sqrt() * cutoff(r, 2.0, 3.0).0
        };
        let h = 1e-6;
        for x in [Vec2::new(0.7, -0.4), Vec2::new(-1.9, 1.2), Vec2::new(0.1, 2.5)] {
            let d1 = (kappa(x + Vec2::new(h, 0.0)) - kappa(x - Vec2::new(h, 0.0))) / (2.0 * h);
            let d2 = (kappa(x + Vec2::new(0.0, h)) - kappa(x - Vec2::new(0.0, h))) / (2.0 * h);
            assert_abs_diff_eq!(slit_kernel(x), Vec2::new(-d2, d1), epsilon = 1e-7);
        }
    }

    #[test]
    fn ribbon_column_on_plane() {
        let c = ribbon_column(Vec3::new(0.0, 0.4, 0.81));
        assert_eq!(c.x, 0.0);
        assert_eq!(c.y, 0.0);
        assert_abs_diff_eq!(c.z, -0.9, epsilon = 1e-15);
        let m = ribbon_kernel(Vec3::new(0.2, 0.1, -0.3));
        assert_eq!(m.row(1).norm(), 0.0);
        assert_eq!(m.column(0).norm(), 0.0);
    }

    #[test]
    fn mollified_kernel_is_odd_and_accurate() {
        let m = MollifiedKernel::build(0.05).unwrap();
        assert_eq!(m.eval(0.0), 0.0);
        for k in 0..200 {
            let s = 3.2 * k as f64 / 199.0;
            assert_eq!(m.eval(-s), -m.eval(s));
            let (v, d) = MollifiedKernel::direct(0.05, s).unwrap();
            assert!((m.eval(s) - v).abs() < 1e-10, "s = {s} {} {v}", m.eval(s));
            assert!((m.eval_deriv(s) - d).abs() < 1e-5 * d.abs().max(1.0), "s = {s}");
        }
    }

    #[test]
    fn rhs_examples() {
        let m = MollifiedKernel::build(1e-3).unwrap();
        let mut out = vec![0.0; 4];
        slit_rhs(&[0.0; 4], &m, 1.0, &mut out);
        assert!(out.iter().all(|&v| v == 0.0));

        let a = 0.3;
        let mut two = vec![0.0; 2];
        slit_rhs(&[-a, a], &m, 1.0, &mut two);
        assert_abs_diff_eq!(two[1], -(2.0 * a).sqrt(), epsilon = 1e-6);
        assert_eq!(two[0], -two[1]);
    }

    #[test]
    fn rejects_odd_counts() {
        assert!(matches!(
            solve_slit(&SolverConfig::new(3, None, 1e-3, 0.1)),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn short_run_keeps_invariants() {
        let h = solve_slit(&SolverConfig::new(40, None, 1e-3, 0.2)).unwrap();
        assert!(h.log.max_oddness <= ODDNESS_TOL);
        assert!(h.log.min_gap > 0.0);
        assert_eq!(h.times.len(), h.states.len());
        assert_abs_diff_eq!(*h.times.last().unwrap(), 0.2, epsilon = 1e-12);
    }
}
