//! Cubic Hermite tables for functions whose values and first derivatives are
//! known at the nodes.

/// Piecewise cubic Hermite interpolant on a uniform grid over `[a, b]`.
/// Outside the grid the end values are held constant.
#[derive(Clone, Debug)]
pub struct HermiteTable {
    a: f64,
    h: f64,
    inv_h: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HermiteTable {
    /// Tabulates `f` (returning value and derivative) at `n + 1` uniform nodes.
    pub fn build<F: FnMut(f64) -> (f64, f64)>(a: f64, b: f64, n: usize, mut f: F) -> Self {
        assert!(n >= 1 && b > a);
        let h = (b - a) / n as f64;
        let (values, slopes): (Vec<f64>, Vec<f64>) = (0..=n).map(|i| f(a + i as f64 * h)).unzip();
        Self {
            a,
            h,
            inv_h: 1.0 / h,
            values,
            slopes,
        }
    }

    pub fn from_nodes(a: f64, b: f64, values: Vec<f64>, slopes: Vec<f64>) -> Self {
        assert!(values.len() == slopes.len() && values.len() >= 2);
        let h = (b - a) / (values.len() - 1) as f64;
        Self {
            a,
            h,
            inv_h: 1.0 / h,
            values,
            slopes,
        }
    }

    pub fn lo(&self) -> f64 {
        self.a
    }

    pub fn hi(&self) -> f64 {
        self.a + self.h * (self.values.len() - 1) as f64
    }

    #[inline]
    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let s = (x - self.a) * self.inv_h;
        let last = self.values.len() - 1;
        if !(s >= 0.0) {
            return None;
        }
        let i = (s as usize).min(last - 1);
        let u = s - i as f64;
        if u > 1.0 {
            return None;
        }
        Some((i, u))
    }

    /// Interpolated value.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some((i, u)) => {
                let (y0, y1) = (self.values[i], self.values[i + 1]);
                let (d0, d1) = (self.slopes[i] * self.h, self.slopes[i + 1] * self.h);
                let u2 = u * u;
                let u3 = u2 * u;
                y0 * (2.0 * u3 - 3.0 * u2 + 1.0)
                    + d0 * (u3 - 2.0 * u2 + u)
                    + y1 * (-2.0 * u3 + 3.0 * u2)
                    + d1 * (u3 - u2)
            }
            None if x < self.a => self.values[0],
            None => *self.values.last().unwrap(),
        }
    }

    /// Derivative of the interpolant.
    #[inline]
    pub fn eval_deriv(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some((i, u)) => {
                let (y0, y1) = (self.values[i], self.values[i + 1]);
                let (d0, d1) = (self.slopes[i] * self.h, self.slopes[i + 1] * self.h);
                let u2 = u * u;
                (y0 * (6.0 * u2 - 6.0 * u)
                    + d0 * (3.0 * u2 - 4.0 * u + 1.0)
                    + y1 * (-6.0 * u2 + 6.0 * u)
                    + d1 * (3.0 * u2 - 2.0 * u))
                    * self.inv_h
            }
            None => 0.0,
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.slopes)
            .enumerate()
            .map(move |(i, (&v, &d))| (self.a + i as f64 * self.h, v, d))
    }
}

/// Hermite table on `[0, hi]` whose node spacing grows geometrically: a
/// uniform block on `[0, s0]`, then blocks `[s0 2^j, s0 2^(j+1)]` with the same
/// node count each. Suited to functions whose derivatives scale like powers of
/// the distance to the origin.
#[derive(Clone, Debug)]
pub struct GradedTable {
    s0: f64,
    inv_s0: f64,
    hi: f64,
    blocks: Vec<HermiteTable>,
}

impl GradedTable {
    pub fn build<F: FnMut(f64) -> (f64, f64)>(s0: f64, hi: f64, per_block: usize, f: F) -> Self {
        Self::build_capped(s0, hi, per_block, f64::INFINITY, f)
    }

    /// As [`GradedTable::build`], with extra nodes in any block whose spacing
    /// would exceed `max_h`.
    pub fn build_capped<F: FnMut(f64) -> (f64, f64)>(s0: f64, hi: f64, per_block: usize, max_h: f64, mut f: F) -> Self {
        assert!(s0 > 0.0 && hi > s0 && max_h > 0.0);
        let count = |w: f64| per_block.max((w / max_h).ceil() as usize);
        let mut blocks = vec![HermiteTable::build(0.0, s0, count(s0), &mut f)];
        let mut lo = s0;
        while lo < hi {
            blocks.push(HermiteTable::build(lo, 2.0 * lo, count(lo), &mut f));
            lo *= 2.0;
        }
        Self {
            s0,
            inv_s0: 1.0 / s0,
            hi,
            blocks,
        }
    }

    #[inline]
    fn block(&self, s: f64) -> &HermiteTable {
        let r = s * self.inv_s0;
        if r < 1.0 {
            return &self.blocks[0];
        }
        // r in [2^j, 2^(j+1)) -> block j + 1; j read off the exponent bits
        let j = ((r.to_bits() >> 52) as usize & 0x7ff) - 1023;
        &self.blocks[(j + 1).min(self.blocks.len() - 1)]
    }

    /// Value at `s >= 0`; beyond the table the last value is held.
    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        self.block(s).eval(s)
    }

    #[inline]
    pub fn eval_deriv(&self, s: f64) -> f64 {
        self.block(s).eval_deriv(s)
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.blocks.iter().flat_map(|b| b.nodes())
    }
}
