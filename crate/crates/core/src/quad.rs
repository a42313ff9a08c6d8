//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

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
    0.022_935_322_010_529_225,
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
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

#[derive(Clone, Copy, Debug)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut gauss = fc * WG[3];
    let mut kronrod = fc * WGK[7];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Panel {
        a,
        b,
        value: kronrod * h,
        err: ((kronrod - gauss) * h).abs(),
    }
}

/// Integrates `f` over `[a, b]` to the absolute tolerance `tol`.
///
/// `breaks` are interior points where the integrand is known to be
/// non-smooth; they become initial panel boundaries.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut edges: Vec<f64> = vec![lo];
    let mut interior: Vec<f64> = breaks.iter().copied().filter(|&p| p > lo && p < hi).collect();
    interior.sort_by(f64::total_cmp);
    edges.extend(interior);
    edges.push(hi);

    let mut panels: Vec<Panel> = edges.windows(2).map(|w| kronrod15(&f, w[0], w[1])).collect();
    loop {
        let err: f64 = panels.iter().map(|p| p.err).sum();
        if err <= tol {
            break;
        }
        if panels.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature { a, b, err });
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .expect("at least one panel");
        let p = panels.swap_remove(idx);
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // panel cannot be split any further at double precision
            return Err(Error::Quadrature { a, b, err });
        }
        panels.push(kronrod15(&f, p.a, m));
        panels.push(kronrod15(&f, m, p.b));
    }
    Ok(sign * panels.iter().map(|p| p.value).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x.powi(5) - 2.0 * x * x, -1.0, 2.0, &[], 1e-14).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - 2.0 * (8.0 + 1.0) / 3.0;
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn sqrt_cusp_with_breakpoint() {
        let v = integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, &[0.0], 1e-12).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let a = integrate(f64::exp, 0.0, 1.0, &[], 1e-13).unwrap();
        let b = integrate(f64::exp, 1.0, 0.0, &[], 1e-13).unwrap();
        assert_eq!(a, -b);
        assert!((a - (1f64.exp() - 1.0)).abs() < 1e-13);
    }
}
