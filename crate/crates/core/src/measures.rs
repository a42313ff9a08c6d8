//! Particle measures transported by a flow, the residuals of the weak
//! advection identities they satisfy, time reversal, and box counting.

use std::collections::HashSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activescalar::{RibbonHistory, SlitHistory};
use crate::error::{Error, Result};
use crate::fields::{Field2, Field3};
use crate::flow::ParticleCloud;
use crate::{Vec2, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weights {
    Scalar(Vec<f64>),
    Vector(Vec<Vec3>),
}

impl Weights {
    pub fn len(&self) -> usize {
        match self {
            Self::Scalar(w) => w.len(),
            Self::Vector(w) => w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Images of the two `α_2 = ±1` edges of the ribbon, sampled at `α_3`
/// quadrature nodes of equal weight; they carry the divergence of `ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceBoundary {
    pub plus: Vec<Vec3>,
    pub minus: Vec<Vec3>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleMeasure {
    pub dim: usize,
    pub points: Vec<Vec3>,
    pub weights: Weights,
    pub divergence_boundary: Option<DivergenceBoundary>,
}

impl ParticleMeasure {
    pub fn scalar(points: Vec<Vec3>, weights: Vec<f64>, dim: usize) -> Result<Self> {
        check_len(points.len(), weights.len())?;
        Ok(Self {
            dim,
            points,
            weights: Weights::Scalar(weights),
            divergence_boundary: None,
        })
    }

    pub fn vector(points: Vec<Vec3>, weights: Vec<Vec3>, boundary: DivergenceBoundary) -> Result<Self> {
        check_len(points.len(), weights.len())?;
        check_len(boundary.plus.len(), boundary.minus.len())?;
        Ok(Self {
            dim: 3,
            points,
            weights: Weights::Vector(weights),
            divergence_boundary: Some(boundary),
        })
    }

    pub fn total_mass(&self) -> f64 {
        match &self.weights {
            Weights::Scalar(w) => w.iter().sum(),
            Weights::Vector(w) => w.iter().map(|v| v.norm()).sum(),
        }
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch(format!("{a} points but {b} weights")));
    }
    Ok(())
}

/// `μ(t) = X(t)#μ_0`: the cloud positions carrying the initial masses.
pub fn pushforward(cloud: &ParticleCloud, mu0: &[f64]) -> Result<ParticleMeasure> {
    ParticleMeasure::scalar(cloud.positions.clone(), mu0.to_vec(), cloud.dim())
}

/// Vector pushforward `ω(X(t,α)) = ∇_α X ω_0(α)` for `ω_0` along `e_2`: each
/// particle carries its stretch vector times the `e_2` component of `ω_0`.
pub fn pushforward_vector(
    cloud: &ParticleCloud,
    omega0: &[Vec3],
    boundary: DivergenceBoundary,
) -> Result<ParticleMeasure> {
    check_len(cloud.len(), omega0.len())?;
    let stretch = cloud
        .stretch()
        .ok_or_else(|| Error::Missing("vector pushforward needs stretch vectors".into()))?;
    let w = stretch.iter().zip(omega0).map(|(s, o)| s * o.y).collect();
    ParticleMeasure::vector(cloud.positions.clone(), w, boundary)
}

/// Measures sampled on a uniform time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSeries {
    pub times: Vec<f64>,
    pub samples: Vec<ParticleMeasure>,
}

impl MeasureSeries {
    pub fn new(times: Vec<f64>, samples: Vec<ParticleMeasure>) -> Result<Self> {
        if times.len() != samples.len() || times.len() < 2 {
            return Err(Error::LengthMismatch(format!(
                "{} times for {} samples (need at least 2)",
                times.len(),
                samples.len()
            )));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        let uniform = times
            .iter()
            .enumerate()
            .all(|(i, &t)| (t - (times[0] + i as f64 * dt)).abs() <= 1e-9 * dt.abs().max(1.0));
        if !(dt > 0.0) || !uniform {
            return Err(Error::Invalid(
                "measure samples must lie on a uniform increasing time grid".into(),
            ));
        }
        Ok(Self { times, samples })
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn dt(&self) -> f64 {
        (self.horizon() - self.times[0]) / (self.times.len() - 1) as f64
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let dim = self.samples[0].dim;
        let vector = matches!(self.samples[0].weights, Weights::Vector(_));
        let coords = if dim == 3 { "x,y,z" } else { "x,y" };
        let w = if vector { "wx,wy,wz" } else { "w" };
        writeln!(out, "t,{coords},{w}")?;
        for (t, m) in self.times.iter().zip(&self.samples) {
            for (i, p) in m.points.iter().enumerate() {
                let pos = if dim == 3 {
                    format!("{},{},{}", p.x, p.y, p.z)
                } else {
                    format!("{},{}", p.x, p.y)
                };
                let wt = match &m.weights {
                    Weights::Scalar(w) => format!("{}", w[i]),
                    Weights::Vector(w) => format!("{},{},{}", w[i].x, w[i].y, w[i].z),
                };
                writeln!(out, "{t},{pos},{wt}")?;
            }
        }
        Ok(())
    }
}

/// `φ(t,x) = τ(t) B((x-c)/s) Π_i ((x_i-c_i)/s)^{p_i} e`, with `τ` quadratic,
/// `B(z) = Π_i exp(-1/(1-z_i^2))` over the active coordinates and `e` the
/// component pattern (ignored for scalar measures).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: Vec3,
    pub scale: f64,
    pub powers: [u8; 3],
    /// `τ(t) = c_0 + c_1 t + c_2 t^2`.
    pub time_coeffs: [f64; 3],
    pub pattern: Vec3,
    pub dim: usize,
}

struct Eval {
    value: f64,
    dt: f64,
    grad: Vec3,
}

#[inline]
fn factor(z: f64, p: u8) -> (f64, f64) {
    let q = 1.0 - z * z;
    if q <= 0.0 {
        return (0.0, 0.0);
    }
    let b = (-1.0 / q).exp();
    let db = b * (-2.0 * z / (q * q));
    let m = z.powi(p as i32);
    let dm = if p == 0 { 0.0 } else { p as f64 * z.powi(p as i32 - 1) };
    (b * m, db * m + b * dm)
}

impl TestFunction {
    pub fn degree(&self) -> u32 {
        self.powers.iter().map(|&p| p as u32).sum()
    }

    #[inline]
    fn tau(&self, t: f64) -> (f64, f64) {
        let [a, b, c] = self.time_coeffs;
        (a + t * (b + t * c), b + 2.0 * c * t)
    }

    #[inline]
    fn space(&self, x: Vec3) -> (f64, Vec3) {
        let z = (x - self.center) / self.scale;
        let mut f = [(1.0, 0.0); 3];
        for i in 0..self.dim {
            f[i] = factor(z[i], self.powers[i]);
        }
        let v = f[0].0 * f[1].0 * f[2].0;
        let g = Vec3::new(
            f[0].1 * f[1].0 * f[2].0,
            f[0].0 * f[1].1 * f[2].0,
            f[0].0 * f[1].0 * f[2].1,
        ) / self.scale;
        (v, g)
    }

    #[inline]
    fn eval(&self, t: f64, x: Vec3) -> Eval {
        let (tau, dtau) = self.tau(t);
        let (s, g) = self.space(x);
        Eval {
            value: tau * s,
            dt: dtau * s,
            grad: g * tau,
        }
    }

    /// The scalar factor `φ/e` at `(t,x)`.
    pub fn value(&self, t: f64, x: Vec3) -> f64 {
        self.eval(t, x).value
    }

    /// `φ~(t) = φ(T - t)`.
    pub fn reflect(&self, horizon: f64) -> Self {
        let [a, b, c] = self.time_coeffs;
        let t = horizon;
        Self {
            time_coeffs: [a + b * t + c * t * t, -b - 2.0 * c * t, c],
            ..self.clone()
        }
    }

    /// Whether the support `c + s[-1,1]^d` lies in the box `[lo, hi]`.
    pub fn support_within(&self, lo: Vec3, hi: Vec3) -> bool {
        (0..self.dim).all(|i| self.center[i] - self.scale >= lo[i] && self.center[i] + self.scale <= hi[i])
    }

    /// `n` test functions with centres drawn uniformly from `[lo, hi]`,
    /// degrees at most 3, scales in `[scale/2, scale]`, random quadratic time
    /// profiles and unit patterns.
    pub fn family(n: usize, lo: Vec3, hi: Vec3, scale: f64, dim: usize, seed: u64) -> Vec<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut center = Vec3::zeros();
                for i in 0..dim {
                    center[i] = if hi[i] > lo[i] {
                        rng.random_range(lo[i]..=hi[i])
                    } else {
                        lo[i]
                    };
                }
                let mut powers = [0u8; 3];
                let mut budget = rng.random_range(0..=3u8);
                for p in powers.iter_mut().take(dim) {
                    let k = rng.random_range(0..=budget);
                    *p = k;
                    budget -= k;
                }
                let pattern = if dim == 3 {
                    let v = Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    v / v.norm().max(1e-3)
                } else {
                    Vec3::new(1.0, 0.0, 0.0)
                };
                Self {
                    center,
                    scale: scale * rng.random_range(0.5..=1.0),
                    powers,
                    time_coeffs: [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ],
                    pattern,
                    dim,
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub particles: usize,
    pub time_step: f64,
    pub quadrature: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakResidualReport {
    pub residual: f64,
    pub terms: Vec<Term>,
    pub discretization: Discretization,
    pub warning: Option<String>,
}

fn report(terms: Vec<(&str, f64)>, series: &MeasureSeries, warning: Option<String>) -> WeakResidualReport {
    let residual = terms.iter().map(|t| t.1).sum();
    WeakResidualReport {
        residual,
        terms: terms
            .into_iter()
            .map(|(n, v)| Term {
                name: n.to_string(),
                value: v,
            })
            .collect(),
        discretization: Discretization {
            particles: series.samples[0].points.len(),
            time_step: series.dt(),
            quadrature: "trapezoid".into(),
        },
        warning,
    }
}

fn trapezoid_weights(n: usize, dt: f64) -> Vec<f64> {
    (0..n)
        .map(|i| if i == 0 || i + 1 == n { 0.5 * dt } else { dt })
        .collect()
}

fn bounding_box(series: &MeasureSeries) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for m in &series.samples {
        for p in &m.points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
    }
    (lo, hi)
}

fn support_warning(phi: &TestFunction, lo: Vec3, hi: Vec3) -> Option<String> {
    (!phi.support_within(lo, hi)).then(|| "test function support extends beyond the sampled region".to_string())
}

/// Residuals of the scalar identity
/// `∫∫ ∂_tφ dμ dt - ∫φ(T) dμ(T) + ∫φ(0) dμ(0) + ∫∫ u·∇φ dμ dt`
/// for each test function. Velocities are evaluated once per sample point.
pub fn weak_residuals_2d<F: Field2>(
    field: &F,
    series: &MeasureSeries,
    phis: &[TestFunction],
) -> Result<Vec<WeakResidualReport>> {
    let mut masses = Vec::with_capacity(series.samples.len());
    for m in &series.samples {
        match &m.weights {
            Weights::Scalar(w) => masses.push(w),
            Weights::Vector(_) => return Err(Error::Invalid("scalar residual needs scalar weights".into())),
        }
    }
    let vel: Vec<Vec<Vec2>> = series
        .times
        .par_iter()
        .zip(&series.samples)
        .map(|(&t, m)| m.points.iter().map(|p| field.eval(t, Vec2::new(p.x, p.y))).collect())
        .collect();
    let n = series.times.len();
    let wt = trapezoid_weights(n, series.dt());
    let (lo, hi) = bounding_box(series);
    Ok(phis
        .par_iter()
        .map(|phi| {
            let mut t1 = 0.0;
            let mut t4 = 0.0;
            let mut end = [0.0; 2];
            for k in 0..n {
                let t = series.times[k];
                let (mut a, mut b) = (0.0, 0.0);
                for ((p, &w), u) in series.samples[k].points.iter().zip(masses[k].iter()).zip(&vel[k]) {
                    let e = phi.eval(t, *p);
                    a += w * e.dt;
                    b += w * (u.x * e.grad.x + u.y * e.grad.y);
                    if k == 0 {
                        end[0] += w * e.value;
                    } else if k + 1 == n {
                        end[1] += w * e.value;
                    }
                }
                t1 += wt[k] * a;
                t4 += wt[k] * b;
            }
            report(
                vec![
                    ("time_derivative", t1),
                    ("final", -end[1]),
                    ("initial", end[0]),
                    ("transport", t4),
                ],
                series,
                support_warning(phi, lo, hi),
            )
        })
        .collect())
}

pub fn weak_residual_2d<F: Field2>(
    field: &F,
    series: &MeasureSeries,
    phi: &TestFunction,
) -> Result<WeakResidualReport> {
    Ok(weak_residuals_2d(field, series, std::slice::from_ref(phi))?.remove(0))
}

/// Residuals of the vector identity with stretching and the divergence
/// pairing, the latter through the images of the `α_2 = ±1` edges.
pub fn weak_residuals_3d<F: Field3>(
    field: &F,
    series: &MeasureSeries,
    phis: &[TestFunction],
) -> Result<Vec<WeakResidualReport>> {
    let mut data = Vec::with_capacity(series.samples.len());
    for m in &series.samples {
        let w = match &m.weights {
            Weights::Vector(w) => w,
            Weights::Scalar(_) => return Err(Error::Invalid("vector residual needs vector weights".into())),
        };
        let b = m
            .divergence_boundary
            .as_ref()
            .ok_or_else(|| Error::Missing("divergence boundary curves".into()))?;
        data.push((w, b));
    }
    let vel: Vec<(Vec<Vec3>, Vec<Vec3>, Vec<Vec3>)> = series
        .times
        .par_iter()
        .zip(&series.samples)
        .zip(&data)
        .map(|((&t, m), (_, b))| {
            (
                m.points.iter().map(|&p| field.eval3(t, p)).collect(),
                b.plus.iter().map(|&p| field.eval3(t, p)).collect(),
                b.minus.iter().map(|&p| field.eval3(t, p)).collect(),
            )
        })
        .collect();
    let n = series.times.len();
    let wt = trapezoid_weights(n, series.dt());
    let (lo, hi) = bounding_box(series);
    Ok(phis
        .par_iter()
        .map(|phi| {
            let e = phi.pattern;
            let (mut t1, mut t4, mut t5, mut t6) = (0.0, 0.0, 0.0, 0.0);
            let mut end = [0.0; 2];
            for k in 0..n {
                let t = series.times[k];
                let (w, b) = data[k];
                let (u, up, um) = &vel[k];
                let (mut a, mut tr, mut st, mut bd) = (0.0, 0.0, 0.0, 0.0);
                for ((p, om), u) in series.samples[k].points.iter().zip(w.iter()).zip(u) {
                    let ev = phi.eval(t, *p);
                    let we = om.dot(&e);
                    a += ev.dt * we;
                    // ((u·∇)φ)·ω = (u·∇s) (e·ω)
                    tr += u.dot(&ev.grad) * we;
                    // ((∇φ)^T u)·ω = Σ_k ω_k ∂_k s (e·u)
                    st += om.dot(&ev.grad) * e.dot(u);
                    if k == 0 {
                        end[0] += ev.value * we;
                    } else if k + 1 == n {
                        end[1] += ev.value * we;
                    }
                }
                for ((pp, pm), (vp, vm)) in b.plus.iter().zip(&b.minus).zip(up.iter().zip(um)) {
                    bd += phi.value(t, *pp) * e.dot(vp) - phi.value(t, *pm) * e.dot(vm);
                }
                t1 += wt[k] * a;
                t4 += wt[k] * tr;
                t5 -= wt[k] * st;
                t6 += wt[k] * bd * b.weight;
            }
            report(
                vec![
                    ("time_derivative", t1),
                    ("final", -end[1]),
                    ("initial", end[0]),
                    ("transport", t4),
                    ("stretching", t5),
                    ("divergence", t6),
                ],
                series,
                support_warning(phi, lo, hi),
            )
        })
        .collect())
}

pub fn weak_residual_3d<F: Field3>(
    field: &F,
    series: &MeasureSeries,
    phi: &TestFunction,
) -> Result<WeakResidualReport> {
    Ok(weak_residuals_3d(field, series, std::slice::from_ref(phi))?.remove(0))
}

/// `μ~(t_i) = μ(t_{n-i})` on the same time grid; the matching field is
/// [`crate::fields::Reversed`] with the series horizon.
pub fn time_reverse(series: &MeasureSeries) -> MeasureSeries {
    MeasureSeries {
        times: series.times.clone(),
        samples: series.samples.iter().rev().cloned().collect(),
    }
}

/// The empirical measure `(2/N) Σ_i δ_{(Y_i, 0)}` of a slit run at each
/// record up to `t_end`.
pub fn slit_measure_series(h: &SlitHistory, t_end: f64) -> Result<MeasureSeries> {
    let n = h.n();
    let w = vec![2.0 / n as f64; n];
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (&t, y) in h.times.iter().zip(&h.states) {
        if t > t_end + 1e-9 {
            break;
        }
        let pts = y.iter().map(|&v| Vec3::new(v, 0.0, 0.0)).collect();
        times.push(t);
        samples.push(ParticleMeasure::scalar(pts, w.clone(), 2)?);
    }
    MeasureSeries::new(times, samples)
}

/// The vorticity measure of a ribbon run: `M` midpoint nodes `β_m` across the
/// `α_2` extent per marker, each carrying `(0, w, 0)` with `w = (2/M)(2/N)`.
/// The divergence pairing uses the images of the edges `α_2 = ±1`.
pub fn ribbon_measure_series(h: &RibbonHistory, m_nodes: usize) -> Result<MeasureSeries> {
    if m_nodes == 0 {
        return Err(Error::Invalid(
            "ribbon measure needs at least one node across the ribbon".into(),
        ));
    }
    let n = h.inner.n();
    let betas = crate::activescalar::markers(m_nodes);
    let w = (2.0 / n as f64) * (2.0 / m_nodes as f64);
    let samples = h
        .inner
        .states
        .iter()
        .map(|y| {
            let mut pts = Vec::with_capacity(n * m_nodes);
            for &beta in &betas {
                pts.extend(y.iter().map(|&v| Vec3::new(0.0, beta, v)));
            }
            let boundary = DivergenceBoundary {
                plus: y.iter().map(|&v| Vec3::new(0.0, 1.0, v)).collect(),
                minus: y.iter().map(|&v| Vec3::new(0.0, -1.0, v)).collect(),
                weight: 2.0 / n as f64,
            };
            ParticleMeasure::vector(pts, vec![Vec3::new(0.0, w, 0.0); n * m_nodes], boundary)
        })
        .collect::<Result<Vec<_>>>()?;
    MeasureSeries::new(h.inner.times.clone(), samples)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxCountReport {
    pub scales: Vec<f64>,
    pub counts: Vec<usize>,
    pub slope: f64,
    pub fit_residual: f64,
    /// Set when every scale gave the same count and no slope can be fitted.
    pub degenerate: bool,
}

/// `2^{-j}` for `j = 2..=10`.
pub fn default_scales() -> Vec<f64> {
    (2..=10).map(|j| 0.5f64.powi(j)).collect()
}

fn count_boxes(points: &[Vec2], s: f64) -> usize {
    let shifts = [
        Vec2::zeros(),
        Vec2::new(0.5 * s, 0.0),
        Vec2::new(0.0, 0.5 * s),
        Vec2::new(0.5 * s, 0.5 * s),
    ];
    shifts
        .iter()
        .map(|sh| {
            points
                .iter()
                .map(|p| (((p.x + sh.x) / s).floor() as i64, ((p.y + sh.y) / s).floor() as i64))
                .collect::<HashSet<_>>()
                .len()
        })
        .min()
        .unwrap_or(0)
}

/// Least-squares slope of `log N(s)` against `log(1/s)`, with `N(s)` the
/// fewest occupied boxes of side `s` over four half-shifted grids.
pub fn box_dimension(points: &[Vec2], scales: &[f64]) -> Result<BoxCountReport> {
    if points.is_empty() {
        return Err(Error::Invalid("box counting needs at least one point".into()));
    }
    if scales.len() < 2 || scales.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Invalid("box counting needs at least two positive scales".into()));
    }
    let counts: Vec<usize> = scales.par_iter().map(|&s| count_boxes(points, s)).collect();
    let xs: Vec<f64> = scales.iter().map(|s| -s.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    if counts.iter().all(|&c| c == counts[0]) {
        return Ok(BoxCountReport {
            scales: scales.to_vec(),
            counts,
            slope: 0.0,
            fit_residual: 0.0,
            degenerate: true,
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    Ok(BoxCountReport {
        scales: scales.to_vec(),
        counts,
        slope,
        fit_residual: (rss / n).sqrt(),
        degenerate: false,
    })
}

/// Scales `4 α^j`, `j = 2..depth`, matched to the cylinder sizes of a
/// depth-`depth` sample of the attractor with ratio `α`.
pub fn attractor_scales(alpha: f64, depth: usize) -> Vec<f64> {
    (2..depth).map(|j| 4.0 * alpha.powi(j as i32)).collect()
}
