//! Smooth one-dimensional building blocks: the quintic smoothstep used for all
//! cutoffs, the time bump that drives each unit window, and the radial
//! mollifier together with its tabulated one-dimensional marginal.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::quad;
use crate::table::HermiteTable;

/// Quintic smoothstep: 0 for `x <= 0`, 1 for `x >= 1`, C² at both ends.
#[inline]
pub fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (10.0 + x * (6.0 * x - 15.0))
    }
}

#[inline]
pub fn smoothstep_d1(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        let y = x * (1.0 - x);
        30.0 * y * y
    }
}

#[inline]
pub fn smoothstep_d2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        60.0 * x * (1.0 - x) * (1.0 - 2.0 * x)
    }
}

/// Cutoff equal to 1 for `r <= inner`, 0 for `r >= outer`, with derivative.
#[inline]
pub fn cutoff(r: f64, inner: f64, outer: f64) -> (f64, f64) {
    let w = outer - inner;
    let x = (r - inner) / w;
    (1.0 - smoothstep(x), -smoothstep_d1(x) / w)
}

/// `exp(-1/(t(1-t)))` on (0, 1), zero elsewhere.
#[inline]
pub fn time_bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t))).exp()
    }
}

struct BumpTable {
    integral: f64,
    cumulative: HermiteTable,
}

const BUMP_NODES: usize = 8192;

fn bump_table() -> &'static BumpTable {
    static TABLE: OnceLock<BumpTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let h = 1.0 / BUMP_NODES as f64;
        let mut values = Vec::with_capacity(BUMP_NODES + 1);
        let mut slopes = Vec::with_capacity(BUMP_NODES + 1);
        let mut acc = 0.0;
        values.push(0.0);
        slopes.push(0.0);
        for i in 0..BUMP_NODES {
            let a = i as f64 * h;
            acc += quad::integrate(time_bump, a, a + h, &[], 1e-19).expect("bump quadrature");
            values.push(acc);
            slopes.push(time_bump(a + h));
        }
        BumpTable {
            integral: acc,
            cumulative: HermiteTable::from_nodes(0.0, 1.0, values, slopes),
        }
    })
}

/// Smooth non-negative profile supported in (0, 1) with prescribed total mass.
///
/// `eta(t) = mass * b(t) / ∫b` with `b(t) = exp(-1/(t(1-t)))`. Its sup norm is
/// `mass * SUP_CONSTANT` with `SUP_CONSTANT = b(1/2)/∫b ≈ 2.6054`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeProfile {
    mass: f64,
}

impl TimeProfile {
    pub fn with_mass(mass: f64) -> Self {
        Self { mass }
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Ratio `sup eta / mass` of the chosen profile.
    pub fn sup_constant() -> f64 {
        time_bump(0.5) / bump_table().integral
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.mass * time_bump(t) / bump_table().integral
    }

    /// `∫_0^t eta`.
    #[inline]
    pub fn integral_to(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t >= 1.0 {
            self.mass
        } else {
            let tab = bump_table();
            self.mass * tab.cumulative.eval(t) / tab.integral
        }
    }
}

/// Raw integral of the time bump over (0, 1).
pub fn time_bump_integral() -> f64 {
    bump_table().integral
}

#[inline]
fn radial_profile(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

fn radial_normalisation() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let m = quad::integrate(|r| r * radial_profile(r * r), 0.0, 1.0, &[], 1e-18).expect("mollifier mass");
        1.0 / (2.0 * PI * m)
    })
}

/// Radial mollifier `rho(x) = c exp(-1/(1-|x|^2))` on the unit disc, mass 1.
pub fn mollifier_2d(x: f64, y: f64) -> f64 {
    radial_normalisation() * radial_profile(x * x + y * y)
}

/// One-dimensional even mollifier `c exp(-1/(1-s^2))` on (-1, 1), mass 1.
pub fn mollifier_1d(s: f64) -> f64 {
    mollifier_1d_norm() * radial_profile(s * s)
}

pub fn mollifier_1d_deriv(s: f64) -> f64 {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        mollifier_1d_norm() * (-1.0 / q).exp() * (-2.0 * s / (q * q))
    }
}

fn mollifier_1d_norm() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| 1.0 / quad::integrate(|s| radial_profile(s * s), -1.0, 1.0, &[], 1e-18).expect("1d mass"))
}

struct SignTables {
    sign: HermiteTable,
    marginal: HermiteTable,
}

const SIGN_NODES: usize = 2048;

fn sign_tables() -> &'static SignTables {
    static TABLES: OnceLock<SignTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let c = radial_normalisation();
        let marginal_at = |s: f64| -> (f64, f64) {
            let q = 1.0 - s * s;
            if q <= 0.0 {
                return (0.0, 0.0);
            }
            let w = q.sqrt();
            let m = quad::integrate(|y| radial_profile(s * s + y * y), -w, w, &[], 1e-17).expect("marginal");
            let dm = quad::integrate(
                |y| {
                    let p = 1.0 - s * s - y * y;
                    if p <= 0.0 {
                        0.0
                    } else {
                        (-1.0 / p).exp() * (-2.0 * s / (p * p))
                    }
                },
                -w,
                w,
                &[],
                1e-16,
            )
            .expect("marginal derivative");
            (c * m, c * dm)
        };
        let h = 1.0 / SIGN_NODES as f64;
        let mut m_vals = Vec::with_capacity(SIGN_NODES + 1);
        let mut m_slopes = Vec::with_capacity(SIGN_NODES + 1);
        for i in 0..=SIGN_NODES {
            let (m, dm) = marginal_at(i as f64 * h);
            m_vals.push(m);
            m_slopes.push(dm);
        }
        // S(s) = 2 ∫_0^s m, accumulated panel by panel
        let mut s_vals = Vec::with_capacity(SIGN_NODES + 1);
        let mut acc = 0.0;
        s_vals.push(0.0);
        for i in 0..SIGN_NODES {
            let a = i as f64 * h;
            acc += 2.0 * quad::integrate(|s| marginal_at(s).0, a, a + h, &[], 1e-17).expect("sign integral");
            s_vals.push(acc);
        }
        let s_slopes: Vec<f64> = m_vals.iter().map(|m| 2.0 * m).collect();
        SignTables {
            sign: HermiteTable::from_nodes(0.0, 1.0, s_vals, s_slopes),
            marginal: HermiteTable::from_nodes(0.0, 1.0, m_vals, m_slopes),
        }
    })
}

/// One-dimensional marginal of the radial mollifier, `∫ rho(s, y) dy`.
pub fn mollifier_marginal(s: f64) -> f64 {
    let a = s.abs();
    if a >= 1.0 {
        0.0
    } else {
        sign_tables().marginal.eval(a)
    }
}

/// The sign function mollified at unit radius by the 1D marginal of `rho`:
/// odd, non-decreasing, equal to ±1 for `|s| >= 1`. Returns value and derivative.
#[inline]
pub fn smoothed_sign_unit(s: f64) -> (f64, f64) {
    let a = s.abs();
    if a >= 1.0 {
        return (s.signum(), 0.0);
    }
    let tab = sign_tables();
    let v = tab.sign.eval(a).min(1.0);
    let d = 2.0 * tab.marginal.eval(a);
    (if s < 0.0 { -v } else { v }, d)
}

/// `S_delta(x) = (rho_delta * sign)(x)` and its derivative.
#[inline]
pub fn smoothed_sign(x: f64, delta: f64) -> (f64, f64) {
    let (v, d) = smoothed_sign_unit(x / delta);
    (v, d / delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_endpoints_and_symmetry() {
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        for k in 0..=20 {
            let x = k as f64 / 20.0;
            assert!((smoothstep(x) + smoothstep(1.0 - x) - 1.0).abs() < 1e-14);
        }
        assert_eq!(smoothstep_d1(0.0), 0.0);
        assert_eq!(smoothstep_d2(1.0), 0.0);
    }

    #[test]
    fn time_profile_mass_and_sup() {
        let eta = TimeProfile::with_mass(0.037);
        let total = quad::integrate(|t| eta.eval(t), 0.0, 1.0, &[], 1e-16).unwrap();
        assert!((total - 0.037).abs() < 1e-12);
        assert!((eta.integral_to(1.0) - 0.037).abs() < 1e-15);
        let half = quad::integrate(|t| eta.eval(t), 0.0, 0.3, &[], 1e-17).unwrap();
        assert!((eta.integral_to(0.3) - half).abs() < 1e-13);
        let c = TimeProfile::sup_constant();
        assert!((c - 2.6054).abs() < 1e-3, "{c}");
        assert!((eta.eval(0.5) - 0.037 * c).abs() < 1e-15);
    }

    #[test]
    fn mollifier_masses() {
        let m1 = quad::integrate(mollifier_1d, -1.0, 1.0, &[], 1e-15).unwrap();
        assert!((m1 - 1.0).abs() < 1e-12);
        let m2 = quad::integrate(mollifier_marginal, -1.0, 1.0, &[], 1e-14).unwrap();
        assert!((m2 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn smoothed_sign_basics() {
        assert_eq!(smoothed_sign_unit(0.0).0, 0.0);
        assert_eq!(smoothed_sign(0.2, 0.1).0, 1.0);
        assert_eq!(smoothed_sign(-0.2, 0.1).0, -1.0);
        let (v, _) = smoothed_sign_unit(0.999_999);
        assert!((v - 1.0).abs() < 1e-10);
        let mut prev = -1.0;
        for k in -100..=100 {
            let (v, d) = smoothed_sign_unit(k as f64 / 100.0);
            assert!(v >= prev - 1e-15);
            assert!(d >= 0.0);
            prev = v;
        }
    }
}
