//! Velocity fields: the fundamental local flow `u`, the series `U` built from
//! rescaled copies of it, the collapse field `W`, the auxiliary translation
//! field `nu`, the combined field `V` and the full-dimension field `Ṽ`.
//!
//! Every field is a pure function of `(t, x)` once built. Sums over words
//! are evaluated by descending the word tree, so a point costs `O(depth)`.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activescalar::{RibbonField, SlitField};
use crate::error::{Error, Result};
use crate::geometry::{descend, rotate, word_map, BinaryWord, IfsParams, Rect};
use crate::profiles::{cutoff, mollifier_marginal, smoothed_sign, smoothstep, smoothstep_d1, TimeProfile};
use crate::{Vec2, Vec3};

/// Default number of word levels summed for `U`.
pub const DEFAULT_DEPTH: usize = 24;
/// Default number of blocks `G_k` carried by `V`.
pub const DEFAULT_KMAX: usize = 40;

/// A planar time-dependent velocity.
pub trait Field2: Sync {
    fn eval(&self, t: f64, x: Vec2) -> Vec2;

    /// Bound on the truncation error of `eval` at time `t`.
    fn tolerance(&self, _t: f64) -> f64 {
        0.0
    }

    /// Width of the thinnest layer where the field varies at time `t`; a grid
    /// must be finer than this to resolve the gradient.
    fn feature_scale(&self, _t: f64) -> f64 {
        f64::INFINITY
    }
}

/// A time-dependent velocity on `R^3`.
pub trait Field3: Sync {
    fn eval3(&self, t: f64, x: Vec3) -> Vec3;
}

impl<T: Field2 + ?Sized> Field2 for &T {
    fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        (**self).eval(t, x)
    }
    fn tolerance(&self, t: f64) -> f64 {
        (**self).tolerance(t)
    }
    fn feature_scale(&self, t: f64) -> f64 {
        (**self).feature_scale(t)
    }
}

/// Wraps a closure as a field.
#[derive(Clone, Copy)]
pub struct FnField<F>(pub F);

impl<F: Fn(f64, Vec2) -> Vec2 + Sync> Field2 for FnField<F> {
    fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        (self.0)(t, x)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ZeroField;

impl Field2 for ZeroField {
    fn eval(&self, _t: f64, _x: Vec2) -> Vec2 {
        Vec2::zeros()
    }
}

/// `-f(T - t, x)`: the field that retraces the trajectories of `f` backwards.
pub struct Reversed<F> {
    pub inner: F,
    pub horizon: f64,
}

impl<F: Field2> Field2 for Reversed<F> {
    fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        -self.inner.eval(self.horizon - t, x)
    }
    fn tolerance(&self, t: f64) -> f64 {
        self.inner.tolerance(self.horizon - t)
    }
    fn feature_scale(&self, t: f64) -> f64 {
        self.inner.feature_scale(self.horizon - t)
    }
}

impl<F: Field3> Field3 for Reversed<F> {
    fn eval3(&self, t: f64, x: Vec3) -> Vec3 {
        -self.inner.eval3(self.horizon - t, x)
    }
}

/// `x ↦ L f(t, G^{-1} x)` for a similarity `G` with linear part `L`.
pub struct Conjugated<F> {
    pub inner: F,
    pub map: crate::geometry::AffineSimilarity,
}

impl<F: Field2> Field2 for Conjugated<F> {
    fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        self.map.apply_linear(self.inner.eval(t, self.map.apply_inverse(x)))
    }
}

// ---------------------------------------------------------------------------
// fundamental field

/// `u = ∇⊥(χ · x_2 · S_delta(x_1))`, with `χ` a product of quintic cutoffs
/// that equals 1 on `R_0` and vanishes outside `R_eps`.
#[inline]
pub fn fundamental_u(p: &IfsParams, x: Vec2) -> Vec2 {
    let (ax, ay) = (x.x.abs(), x.y.abs());
    let e = p.eps;
    if ax >= 2.0 + e || ay >= SQRT_2 + e {
        return Vec2::zeros();
    }
    let (c1, d1) = cutoff(ax, 2.0, 2.0 + e);
    let (c2, d2) = cutoff(ay, SQRT_2, SQRT_2 + e);
    let (s, ds) = smoothed_sign(x.x, p.delta);
    let chi = c1 * c2;
    let chi_1 = d1 * x.x.signum() * c2;
    let chi_2 = c1 * d2 * x.y.signum();
    let psi_1 = chi_1 * x.y * s + chi * x.y * ds;
    let psi_2 = chi_2 * x.y * s + chi * s;
    Vec2::new(-psi_2, psi_1)
}

/// Upper bound on `sup |u|` assembled from the sup norms of the factors.
pub fn fundamental_sup_bound(p: &IfsParams) -> f64 {
    let dchi = 1.875 / p.eps;
    let y = SQRT_2 + p.eps;
    let ds = 2.0 * mollifier_marginal(0.0) / p.delta;
    let u1 = dchi * y + 1.0;
    let u2 = dchi * y + y * ds;
    u1.hypot(u2)
}

/// `R^k u((F_w^t)^{-1} x)`; supported on `F_w^t(R_eps)`.
pub fn eval_rescaled(w: &BinaryWord, eta_integral: f64, p: &IfsParams, x: Vec2) -> Vec2 {
    let g = word_map(w, eta_integral, p.alpha);
    rotate((w.len() & 3) as u8, fundamental_u(p, g.apply_inverse(x)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FundamentalField {
    pub params: IfsParams,
}

impl FundamentalField {
    pub fn new(params: IfsParams) -> Self {
        Self { params }
    }
}

impl Field2 for FundamentalField {
    fn eval(&self, _t: f64, x: Vec2) -> Vec2 {
        fundamental_u(&self.params, x)
    }
    fn feature_scale(&self, _t: f64) -> f64 {
        self.params.delta
    }
}

// ---------------------------------------------------------------------------
// series U

/// `U(t,x) = eta(t) Σ_k Σ_{|w|=k} α^k R^k u((F_w^t)^{-1} x)` for `t ∈ [0,1]`,
/// zero otherwise, with `∫eta = delta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesField {
    pub params: IfsParams,
    pub depth: usize,
    eta: TimeProfile,
    sup_u: f64,
}

impl SeriesField {
    pub fn new(params: IfsParams, depth: usize) -> Self {
        Self {
            params,
            depth,
            eta: TimeProfile::with_mass(params.delta),
            sup_u: fundamental_sup_bound(&params),
        }
    }

    pub fn eta(&self) -> TimeProfile {
        self.eta
    }

    pub fn sup_u(&self) -> f64 {
        self.sup_u
    }

    /// `η(t)‖u‖∞/(1-α)`, the bound on `|U(t,·)|`.
    pub fn sup_bound(&self, t: f64) -> f64 {
        self.eta.eval(t) * self.sup_u / (1.0 - self.params.alpha)
    }

    /// Sum by walking down the unique chain of words whose images contain `x`.
    #[inline]
    pub fn eval_descent(&self, t: f64, x: Vec2) -> Vec2 {
        if t <= 0.0 || t >= 1.0 {
            return Vec2::zeros();
        }
        let e = self.eta.eval(t);
        let s = self.eta.integral_to(t);
        let p = &self.params;
        let mut acc = Vec2::zeros();
        let mut scale = 1.0;
        descend(x, s, p, self.depth, |step| {
            acc += rotate((step.level & 3) as u8, fundamental_u(p, step.local)) * scale;
            scale *= p.alpha;
        });
        acc * e
    }

    /// Sum over every word up to `depth`; exponential cost, used as an oracle.
    pub fn eval_naive(&self, t: f64, x: Vec2) -> Vec2 {
        if t <= 0.0 || t >= 1.0 {
            return Vec2::zeros();
        }
        let e = self.eta.eval(t);
        let s = self.eta.integral_to(t);
        let r_eps = Rect::r(self.params.eps);
        let mut acc = Vec2::zeros();
        for k in 0..=self.depth {
            let mut level = Vec2::zeros();
            for w in BinaryWord::all_of_length(k) {
                let g = word_map(&w, s, self.params.alpha);
                let y = g.apply_inverse(x);
                if r_eps.contains(y) {
                    level += rotate((k & 3) as u8, fundamental_u(&self.params, y));
                }
            }
            acc += level * self.params.alpha.powi(k as i32);
        }
        acc * e
    }
}

impl Field2 for SeriesField {
    #[inline]
    fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        self.eval_descent(t, x)
    }

    fn tolerance(&self, t: f64) -> f64 {
        self.sup_bound(t) * self.params.alpha.powi(self.depth as i32 + 1)
    }

    fn feature_scale(&self, _t: f64) -> f64 {
        self.params.delta
    }
}

// ---------------------------------------------------------------------------
// collapse field W

/// `t_k = Σ_{j<k} ξ^j`.
#[inline]
pub fn window_start(xi: f64, k: usize) -> f64 {
    (1.0 - xi.powi(k as i32)) / (1.0 - xi)
}

/// Index `k` with `t ∈ [t_k, t_{k+1})` for the geometric schedule.
pub fn window_index(xi: f64, t: f64) -> usize {
    if t <= 0.0 {
        return 0;
    }
    let arg = 1.0 - t * (1.0 - xi);
    if arg <= 0.0 {
        return usize::MAX;
    }
    let mut k = (arg.ln() / xi.ln()).floor().max(0.0) as usize;
    while k > 0 && window_start(xi, k) > t {
        k -= 1;
    }
    while window_start(xi, k + 1) <= t {
        k += 1;
    }
    k
}

pub fn default_xi(gamma: f64) -> f64 {
    0.5 * (1.0 + gamma.sqrt())
}

pub fn check_xi(gamma: f64, xi: f64) -> Result<()> {
    if !(xi > gamma.sqrt() && xi < 1.0) {
        return Err(Error::Domain {
            name: "xi",
            value: xi,
            interval: "(sqrt(gamma), 1)",
        });
    }
    Ok(())
}

/// `W(t,x) = (γ/ξ)^k U((t - t_k)/ξ^k, x/γ^k)` on the `k`-th window; it drives
/// the attractor into the origin by time `1/(1-ξ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollapseField {
    pub u: SeriesField,
    pub xi: f64,
}

impl CollapseField {
    pub fn new(params: IfsParams, xi: f64, depth: usize) -> Result<Self> {
        check_xi(params.gamma, xi)?;
        Ok(Self {
            u: SeriesField::new(params, depth),
            xi,
        })
    }

    pub fn terminal_time(&self) -> f64 {
        1.0 / (1.0 - self.xi)
    }

    fn window(&self, t: f64) -> Option<(usize, f64)> {
        if t < 0.0 || t >= self.terminal_time() {
            return None;
        }
        let k = window_index(self.xi, t);
        if k == usize::MAX || k > 20_000 {
            return None;
        }
        let tau = (t - window_start(self.xi, k)) / self.xi.powi(k as i32);
        Some((k, tau))
    }
}

impl Field2 for CollapseField {
    fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        match self.window(t) {
            None => Vec2::zeros(),
            Some((k, tau)) => {
                let g = self.u.params.gamma;
                let gk = g.powi(k as i32);
                self.u.eval(tau, x / gk) * (g / self.xi).powi(k as i32)
            }
        }
    }

    fn tolerance(&self, t: f64) -> f64 {
        match self.window(t) {
            None => 0.0,
            Some((k, tau)) => self.u.tolerance(tau) * (self.u.params.gamma / self.xi).powi(k as i32),
        }
    }

    fn feature_scale(&self, t: f64) -> f64 {
        match self.window(t) {
            None => f64::INFINITY,
            Some((k, _)) => self.u.params.delta * self.u.params.gamma.powi(k as i32),
        }
    }
}

// ---------------------------------------------------------------------------
// auxiliary field nu

const SEVEN_EIGHTHS: f64 = 0.875;

/// Cone profile: 1 where `|x_2| <= x_1/10` and `|x| <= 26`, 0 outside
/// `{|x_2| < x_1} ∩ {|x| < 30}`. Returns the value and gradient.
#[inline]
pub fn cone_profile(x: Vec2) -> (f64, Vec2) {
    if x.x <= 0.0 {
        return (0.0, Vec2::zeros());
    }
    let r = x.norm();
    if r >= 30.0 {
        return (0.0, Vec2::zeros());
    }
    let theta = x.y.abs() / x.x;
    if theta >= 1.0 {
        return (0.0, Vec2::zeros());
    }
    let z = (theta - 0.1) / 0.9;
    let a = 1.0 - smoothstep(z);
    let da = -smoothstep_d1(z) / 0.9;
    let (b, db) = cutoff(r, 26.0, 30.0);
    let dtheta = Vec2::new(-x.y.abs() / (x.x * x.x), x.y.signum() / x.x);
    (a * b, dtheta * (da * b) + x * (a * db / r))
}

/// `Σ_j χ_j(s, x)` with `χ_j = (7/8)^j χ~((8/7)^j (x_1 - g_j(s)))`, and its
/// `x_1` derivative. All `χ_j` past the transition layer are saturated, so
/// the tail is summed in closed form; `kmax` truncates the sum instead.
fn chi_sum(s: f64, x1: f64, kmax: Option<usize>) -> (f64, f64) {
    if x1 <= 0.0 {
        return (0.0, 0.0);
    }
    let b = SEVEN_EIGHTHS * (25.0 - 3.0 * s);
    let a = b + 0.75;
    let ln = SEVEN_EIGHTHS.ln();
    // χ_j ≡ (7/8)^j once (7/8)^j a <= x1 and χ_j ≡ 0 while (7/8)^j b >= x1
    let first_live = ((x1 / b).ln() / ln).floor().max(-1.0) + 1.0;
    let first_sat = ((x1 / a).ln() / ln).ceil().max(0.0);
    let (j0, j1) = (first_live as usize, first_sat as usize);
    let end = kmax.unwrap_or(usize::MAX);
    let mut v = 0.0;
    let mut d = 0.0;
    for j in j0..j1.min(end) {
        let q = SEVEN_EIGHTHS.powi(j as i32);
        let z = (x1 / q - b) / 0.75;
        v += q * smoothstep(z);
        d += smoothstep_d1(z) / 0.75;
    }
    if j1 < end {
        let tail_end = if end == usize::MAX {
            0.0
        } else {
            SEVEN_EIGHTHS.powi(end as i32)
        };
        v += 8.0 * (SEVEN_EIGHTHS.powi(j1 as i32) - tail_end);
    }
    (v, d)
}

/// `Σ_k ν_k(s, x) = ∇⊥(x_2 Φ(x) Σ_k χ_k(s, x))` at reparametrised time `s`.
pub fn nu_partial(s: f64, x: Vec2, kmax: Option<usize>) -> Vec2 {
    let (phi, dphi) = cone_profile(x);
    if phi == 0.0 && dphi == Vec2::zeros() {
        return Vec2::zeros();
    }
    let (c, dc) = chi_sum(s, x.x, kmax);
    // ψ = x2 Φ C(x1)
    let psi_1 = x.y * (dphi.x * c + phi * dc);
    let psi_2 = (phi + x.y * dphi.y) * c;
    Vec2::new(-psi_2, psi_1)
}

/// `ν(t,x) = η~(t) (3/8) Σ_k ν_k(∫_0^t η~, x)`, with `∫η~ = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NuField {
    /// `None` sums every term exactly; `Some(k)` keeps `ν_0 … ν_{k-1}`.
    pub kmax: Option<usize>,
    eta: TimeProfile,
}

impl Default for NuField {
    fn default() -> Self {
        Self::new(None)
    }
}

impl NuField {
    pub fn new(kmax: Option<usize>) -> Self {
        Self {
            kmax,
            eta: TimeProfile::with_mass(1.0),
        }
    }

    pub fn eta(&self) -> TimeProfile {
        self.eta
    }
}

impl Field2 for NuField {
    fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        if t <= 0.0 || t >= 1.0 {
            return Vec2::zeros();
        }
        nu_partial(self.eta.integral_to(t), x, self.kmax) * (self.eta.eval(t) * 0.375)
    }

    fn tolerance(&self, t: f64) -> f64 {
        match self.kmax {
            None => 0.0,
            Some(k) => 3.0 * self.eta.eval(t) * SEVEN_EIGHTHS.powi(k as i32) * 30.0,
        }
    }
}

// ---------------------------------------------------------------------------
// combined field V

/// `α_n = 2√2((7/8)^{1/(n+1)} - 3/4)`, chosen so that `γ_{α_n}^{n+1} = 7/8`.
pub fn alpha_n(n: usize) -> f64 {
    2.0 * SQRT_2 * (gamma_n(n) - 0.75)
}

/// `γ_n = (7/8)^{1/(n+1)}`.
pub fn gamma_n(n: usize) -> f64 {
    SEVEN_EIGHTHS.powf(1.0 / (n as f64 + 1.0))
}

/// `G_k(x) = (7/8)^{k-1} [(1/√2) R x + (24, 0)]`.
pub fn block_map(k: usize) -> crate::geometry::AffineSimilarity {
    let c = SEVEN_EIGHTHS.powi(k as i32 - 1);
    crate::geometry::AffineSimilarity::new(Vec2::new(24.0 * c, 0.0), 1, c * FRAC_1_SQRT_2)
}

/// `V`: on `[0,1]` each block `G_k(R_{1/2})` carries a conjugated copy of
/// `V_k`, which contracts `S_{α_k}` by `7/8`; on `[1,2]` it equals `ν(t-1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CombinedField {
    pub kmax: usize,
    pub depth: usize,
    blocks: Vec<SeriesField>,
    pub nu: NuField,
}

impl CombinedField {
    pub fn new(kmax: usize, depth: usize) -> Result<Self> {
        if kmax < 1 {
            return Err(Error::Invalid("kmax must be at least 1".into()));
        }
        let blocks = (1..=kmax)
            .map(|k| IfsParams::derive(alpha_n(k)).map(|p| SeriesField::new(p, depth)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kmax,
            depth,
            blocks,
            nu: NuField::default(),
        })
    }

    pub fn block_params(&self, k: usize) -> &IfsParams {
        &self.blocks[k - 1].params
    }

    /// The unique `k <= kmax` with `x ∈ G_k(R_{1/2})`.
    pub fn locate_block(&self, x: Vec2) -> Option<usize> {
        if x.x <= 0.0 {
            return None;
        }
        let guess = ((24.0 / x.x).ln() / (8.0f64 / 7.0).ln()).round() as i64 + 1;
        let r_half = Rect::r(0.5);
        (guess - 1..=guess + 1)
            .filter(|&k| k >= 1 && k as usize <= self.kmax)
            .map(|k| k as usize)
            .find(|&k| r_half.contains(block_map(k).apply_inverse(x)))
    }

    /// `V_k(t, y) = (k+1) Σ_n γ_k^n U_{α_k}((k+1)t - n, γ_k^{-n} y)`; at most
    /// one `n` has its time window open.
    pub fn eval_vk(&self, k: usize, t: f64, y: Vec2) -> Vec2 {
        if !(0.0..=1.0).contains(&t) {
            return Vec2::zeros();
        }
        let m = (k + 1) as f64;
        let n = ((m * t).floor() as usize).min(k);
        let tau = m * t - n as f64;
        let g = gamma_n(k).powi(n as i32);
        self.blocks[k - 1].eval(tau, y / g) * (m * g)
    }
}

impl Field2 for CombinedField {
    fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        if (0.0..1.0).contains(&t) {
            match self.locate_block(x) {
                None => Vec2::zeros(),
                Some(k) => {
                    let g = block_map(k);
                    g.apply_linear(self.eval_vk(k, t, g.apply_inverse(x)))
                }
            }
        } else if (1.0..=2.0).contains(&t) {
            self.nu.eval(t - 1.0, x)
        } else {
            Vec2::zeros()
        }
    }

    fn tolerance(&self, t: f64) -> f64 {
        if (0.0..1.0).contains(&t) {
            // largest per-block bound after conjugation
            (1..=self.kmax)
                .map(|k| {
                    let m = (k + 1) as f64;
                    let n = ((m * t).floor() as usize).min(k);
                    let c = block_map(k).scale;
                    c * m * self.blocks[k - 1].tolerance(m * t - n as f64)
                })
                .fold(0.0, f64::max)
        } else {
            self.nu.tolerance(t - 1.0)
        }
    }

    fn feature_scale(&self, t: f64) -> f64 {
        if (0.0..1.0).contains(&t) {
            let k = self.kmax;
            block_map(k).scale * self.blocks[k - 1].params.delta
        } else {
            0.75 * SEVEN_EIGHTHS.powi(self.kmax as i32)
        }
    }
}

// ---------------------------------------------------------------------------
// full-dimension field Ṽ

/// `t_k = 18(1 - (8/9)^k)`.
pub fn full_stage_time(k: usize) -> f64 {
    18.0 * (1.0 - (8.0f64 / 9.0).powi(k as i32))
}

/// `Ṽ(t,x) = (63/64)^k V((9/8)^k (t - t_k), (8/7)^k x)` for `t ∈ [t_k, t_{k+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct FullField {
    pub v: CombinedField,
}

impl FullField {
    pub fn new(kmax: usize, depth: usize) -> Result<Self> {
        Ok(Self {
            v: CombinedField::new(kmax, depth)?,
        })
    }

    pub fn stage(t: f64) -> Option<usize> {
        if !(0.0..18.0).contains(&t) {
            return None;
        }
        let arg = 1.0 - t / 18.0;
        let mut k = (arg.ln() / (8.0f64 / 9.0).ln()).floor().max(0.0) as usize;
        while k > 0 && full_stage_time(k) > t {
            k -= 1;
        }
        while full_stage_time(k + 1) <= t {
            k += 1;
        }
        Some(k)
    }
}

impl Field2 for FullField {
    fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        match Self::stage(t) {
            Some(k) if k < 5000 => {
                let k32 = k as i32;
                let tau = (9.0f64 / 8.0).powi(k32) * (t - full_stage_time(k));
                self.v.eval(tau.min(2.0), x * (8.0f64 / 7.0).powi(k32)) * (63.0f64 / 64.0).powi(k32)
            }
            _ => Vec2::zeros(),
        }
    }

    fn tolerance(&self, t: f64) -> f64 {
        match Self::stage(t) {
            Some(k) => {
                let tau = (9.0f64 / 8.0).powi(k as i32) * (t - full_stage_time(k));
                self.v.tolerance(tau) * (63.0f64 / 64.0).powi(k as i32)
            }
            None => 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// handles and specs

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    FundamentalU,
    SeriesU,
    CollapseW,
    AuxNu,
    CombinedV,
    FullVtilde,
    SlitU,
    RibbonU,
}

/// Any of the velocity fields, with uniform access to evaluation and
/// truncation metadata. Planar fields are embedded in `R^3` as `(u_1, u_2, 0)`;
/// the ribbon field seen as planar is its `(x_1, x_3)` section at `x_2 = 0`.
#[derive(Clone, Debug)]
pub enum FieldHandle {
    Fundamental(FundamentalField),
    Series(SeriesField),
    Collapse(CollapseField),
    Nu(NuField),
    Combined(CombinedField),
    Full(FullField),
    Slit(SlitField),
    Ribbon(RibbonField),
}

impl FieldHandle {
    pub fn kind(&self) -> FieldKind {
        match self {
            Self::Fundamental(_) => FieldKind::FundamentalU,
            Self::Series(_) => FieldKind::SeriesU,
            Self::Collapse(_) => FieldKind::CollapseW,
            Self::Nu(_) => FieldKind::AuxNu,
            Self::Combined(_) => FieldKind::CombinedV,
            Self::Full(_) => FieldKind::FullVtilde,
            Self::Slit(_) => FieldKind::SlitU,
            Self::Ribbon(_) => FieldKind::RibbonU,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Ribbon(_) => 3,
            _ => 2,
        }
    }

    fn planar(&self) -> &dyn Field2 {
        match self {
            Self::Fundamental(f) => f,
            Self::Series(f) => f,
            Self::Collapse(f) => f,
            Self::Nu(f) => f,
            Self::Combined(f) => f,
            Self::Full(f) => f,
            Self::Slit(f) => f,
            Self::Ribbon(f) => f,
        }
    }
}

impl Field2 for FieldHandle {
    fn eval(&self, t: f64, x: Vec2) -> Vec2 {
        self.planar().eval(t, x)
    }
    fn tolerance(&self, t: f64) -> f64 {
        self.planar().tolerance(t)
    }
    fn feature_scale(&self, t: f64) -> f64 {
        self.planar().feature_scale(t)
    }
}

impl Field3 for FieldHandle {
    fn eval3(&self, t: f64, x: Vec3) -> Vec3 {
        match self {
            Self::Ribbon(f) => f.eval3(t, x),
            other => {
                let v = other.eval(t, Vec2::new(x.x, x.y));
                Vec3::new(v.x, v.y, 0.0)
            }
        }
    }
}

/// Serializable description of an analytic field; `build` turns it into a
/// handle. Either `alpha` or `h` selects the scale where one is needed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    FundamentalU {
        alpha: f64,
    },
    SeriesU {
        alpha: f64,
        #[serde(default = "default_depth")]
        depth: usize,
    },
    CollapseW {
        alpha: f64,
        #[serde(default)]
        xi: Option<f64>,
        #[serde(default = "default_depth")]
        depth: usize,
    },
    AuxNu {
        #[serde(default)]
        kmax: Option<usize>,
    },
    CombinedV {
        #[serde(default = "default_kmax")]
        kmax: usize,
        #[serde(default = "default_depth")]
        depth: usize,
    },
    FullVtilde {
        #[serde(default = "default_kmax")]
        kmax: usize,
        #[serde(default = "default_depth")]
        depth: usize,
    },
}

fn default_depth() -> usize {
    DEFAULT_DEPTH
}

fn default_kmax() -> usize {
    DEFAULT_KMAX
}

impl FieldSpec {
    pub fn build(&self) -> Result<FieldHandle> {
        Ok(match *self {
            Self::FundamentalU { alpha } => FieldHandle::Fundamental(FundamentalField::new(IfsParams::derive(alpha)?)),
            Self::SeriesU { alpha, depth } => FieldHandle::Series(SeriesField::new(IfsParams::derive(alpha)?, depth)),
            Self::CollapseW { alpha, xi, depth } => {
                let p = IfsParams::derive(alpha)?;
                let xi = xi.unwrap_or_else(|| default_xi(p.gamma));
                FieldHandle::Collapse(CollapseField::new(p, xi, depth)?)
            }
            Self::AuxNu { kmax } => FieldHandle::Nu(NuField::new(kmax)),
            Self::CombinedV { kmax, depth } => FieldHandle::Combined(CombinedField::new(kmax, depth)?),
            Self::FullVtilde { kmax, depth } => FieldHandle::Full(FullField::new(kmax, depth)?),
        })
    }
}

// ---------------------------------------------------------------------------
// grids

/// Field values on the nodes `origin + (i h, j h)`, row-major with `x`
/// varying fastest; each node holds `components` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSample {
    pub origin: [f64; 2],
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    pub components: usize,
    pub values: Vec<f64>,
}

pub const GRID_MAGIC: &[u8; 8] = b"FAGRID01";

fn grid_dims(region: &Rect, h: f64) -> Result<(usize, usize)> {
    if !(h > 0.0) {
        return Err(Error::Invalid(format!("grid spacing must be positive, got {h}")));
    }
    let span = region.half * 2.0;
    let nx = (span.x / h).round() as usize + 1;
    let ny = (span.y / h).round() as usize + 1;
    if nx.saturating_mul(ny) > 1 << 26 {
        return Err(Error::Resource(format!("grid of {nx} x {ny} nodes is too large")));
    }
    Ok((nx, ny))
}

impl GridSample {
    pub fn sample<F: Field2>(field: &F, region: &Rect, h: f64, t: f64) -> Result<Self> {
        let (nx, ny) = grid_dims(region, h)?;
        let lo = region.lo();
        let values: Vec<f64> = (0..ny)
            .into_par_iter()
            .flat_map_iter(|j| {
                (0..nx).flat_map(move |i| {
                    let v = field.eval(t, Vec2::new(lo.x + i as f64 * h, lo.y + j as f64 * h));
                    [v.x, v.y]
                })
            })
            .collect();
        Ok(Self {
            origin: [lo.x, lo.y],
            spacing: h,
            nx,
            ny,
            components: 2,
            values,
        })
    }

    /// Samples the `x_2 = 0` section of a 3D field, keeping all three components.
    pub fn sample3<F: Field3>(field: &F, region: &Rect, h: f64, t: f64) -> Result<Self> {
        let (nx, ny) = grid_dims(region, h)?;
        let lo = region.lo();
        let values: Vec<f64> = (0..ny)
            .into_par_iter()
            .flat_map_iter(|j| {
                (0..nx).flat_map(move |i| {
                    let v = field.eval3(t, Vec3::new(lo.x + i as f64 * h, 0.0, lo.y + j as f64 * h));
                    [v.x, v.y, v.z]
                })
            })
            .collect();
        Ok(Self {
            origin: [lo.x, lo.y],
            spacing: h,
            nx,
            ny,
            components: 3,
            values,
        })
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin[0] + i as f64 * self.spacing,
            self.origin[1] + j as f64 * self.spacing,
        )
    }

    pub fn value(&self, i: usize, j: usize) -> &[f64] {
        let k = (j * self.nx + i) * self.components;
        &self.values[k..k + self.components]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header = match self.components {
            2 => "x,y,vx,vy",
            _ => "x,y,vx,vy,vz",
        };
        writeln!(out, "{header}")?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let p = self.node(i, j);
                write!(out, "{},{}", p.x, p.y)?;
                for v in self.value(i, j) {
                    write!(out, ",{v}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    /// Layout: magic `FAGRID01`, then little-endian `u64` nx, ny, components,
    /// `f64` spacing, origin x, origin y, then the values.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(GRID_MAGIC)?;
        for n in [self.nx, self.ny, self.components] {
            out.write_all(&(n as u64).to_le_bytes())?;
        }
        for v in [self.spacing, self.origin[0], self.origin[1]] {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != GRID_MAGIC {
            return Err(Error::Invalid("not a grid file (bad magic)".into()));
        }
        let mut word = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let nx = next_u64(&mut input)? as usize;
        let ny = next_u64(&mut input)? as usize;
        let components = next_u64(&mut input)? as usize;
        let spacing = f64::from_bits(next_u64(&mut input)?);
        let ox = f64::from_bits(next_u64(&mut input)?);
        let oy = f64::from_bits(next_u64(&mut input)?);
        let len = nx
            .checked_mul(ny)
            .and_then(|n| n.checked_mul(components))
            .ok_or_else(|| Error::Invalid("grid dimensions overflow".into()))?;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(f64::from_bits(next_u64(&mut input)?));
        }
        Ok(Self {
            origin: [ox, oy],
            spacing,
            nx,
            ny,
            components,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        if path.extension().is_some_and(|e| e == "csv") {
            self.write_csv(f)
        } else {
            self.write_binary(f)
        }
    }
}

/// Largest central-difference divergence over the interior nodes of the grid
/// with spacing `h` covering `region`.
pub fn grid_divergence<F: Field2>(field: &F, region: &Rect, h: f64, t: f64) -> Result<f64> {
    let (nx, ny) = grid_dims(region, h)?;
    let lo = region.lo();
    let row_max: Vec<f64> = (1..ny.saturating_sub(1))
        .into_par_iter()
        .map(|j| {
            let mut m = 0.0f64;
            for i in 1..nx - 1 {
                let p = Vec2::new(lo.x + i as f64 * h, lo.y + j as f64 * h);
                let dx = field.eval(t, p + Vec2::new(h, 0.0)).x - field.eval(t, p - Vec2::new(h, 0.0)).x;
                let dy = field.eval(t, p + Vec2::new(0.0, h)).y - field.eval(t, p - Vec2::new(0.0, h)).y;
                m = m.max(((dx + dy) / (2.0 * h)).abs());
            }
            m
        })
        .collect();
    Ok(row_max.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevEstimate {
    pub p: f64,
    pub t: f64,
    pub h: f64,
    pub nodes: usize,
    pub value: f64,
    pub warning: Option<String>,
}

/// Riemann-sum estimate of `‖∇f(t,·)‖_{L^p}` over `region` from central
/// differences of the field on the grid of spacing `h`.
pub fn sobolev_norm<F: Field2>(field: &F, t: f64, p: f64, region: &Rect, h: f64) -> Result<SobolevEstimate> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Domain {
            name: "p",
            value: p,
            interval: "[1, inf)",
        });
    }
    let (nx, ny) = grid_dims(region, h)?;
    let lo = region.lo();
    // values on a grid padded by one node on each side
    let (mx, my) = (nx + 2, ny + 2);
    let vals: Vec<Vec2> = (0..my)
        .into_par_iter()
        .flat_map_iter(|j| {
            (0..mx).map(move |i| field.eval(t, Vec2::new(lo.x + (i as f64 - 1.0) * h, lo.y + (j as f64 - 1.0) * h)))
        })
        .collect();
    let rows: Vec<f64> = (1..=ny)
        .into_par_iter()
        .map(|j| {
            let mut s = 0.0;
            for i in 1..=nx {
                let dx = (vals[j * mx + i + 1] - vals[j * mx + i - 1]) / (2.0 * h);
                let dy = (vals[(j + 1) * mx + i] - vals[(j - 1) * mx + i]) / (2.0 * h);
                let g = (dx.norm_squared() + dy.norm_squared()).sqrt();
                s += g.powf(p);
            }
            s
        })
        .collect();
    let total: f64 = rows.iter().sum::<f64>() * h * h;
    let scale = field.feature_scale(t);
    let warning = (h > scale / 4.0)
        .then(|| format!("grid spacing {h:e} does not resolve the finest active layer of width {scale:e}"));
    Ok(SobolevEstimate {
        p,
        t,
        h,
        nodes: nx * ny,
        value: total.powf(1.0 / p),
        warning,
    })
}
