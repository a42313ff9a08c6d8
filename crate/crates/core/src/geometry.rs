//! Binary words, the rotation-similarity pair `F_1`, `F_2`, the inhomogeneous
//! attractor generated by the segment `I = [-1,1] x {0}`, and the rectangle
//! arithmetic used to check that the images of the construction stay apart.

use std::f64::consts::SQRT_2;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec2;

/// Largest number of word images a single call may enumerate.
pub const MAX_IMAGES: usize = 1 << 20;

/// Absolute slack used for all rectangle containment and overlap decisions.
pub const RECT_SLACK: f64 = 1e-12;

/// Finite word over the alphabet `{1, 2}`; the empty word is allowed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinaryWord(Vec<u8>);

impl BinaryWord {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn new(letters: Vec<u8>) -> Result<Self> {
        if let Some(bad) = letters.iter().find(|&&l| l != 1 && l != 2) {
            return Err(Error::Invalid(format!("word letter {bad} is not 1 or 2")));
        }
        Ok(Self(letters))
    }

    pub fn parse(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|c| match c {
                '1' => Ok(1),
                '2' => Ok(2),
                other => Err(Error::Invalid(format!("word letter {other:?} is not 1 or 2"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self(letters))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn child(&self, letter: u8) -> Self {
        debug_assert!(letter == 1 || letter == 2);
        let mut v = self.0.clone();
        v.push(letter);
        Self(v)
    }

    /// All `2^k` words of length `k` in lexicographic order.
    pub fn all_of_length(k: usize) -> impl Iterator<Item = BinaryWord> {
        (0..1usize << k).map(move |bits| {
            BinaryWord(
                (0..k)
                    .map(|j| if bits >> (k - 1 - j) & 1 == 0 { 1 } else { 2 })
                    .collect(),
            )
        })
    }

    /// All words with length at most `depth`, shortest first.
    pub fn up_to(depth: usize) -> impl Iterator<Item = BinaryWord> {
        (0..=depth).flat_map(Self::all_of_length)
    }
}

impl fmt::Display for BinaryWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.0 {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl Serialize for BinaryWord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BinaryWord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BinaryWord::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Scale `alpha` of the similarity pair and the constants derived from it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IfsParams {
    pub alpha: f64,
    /// Cutoff margin: `1/(4 alpha) - 1/(2 sqrt 2)`.
    pub eps: f64,
    /// Mollification radius: `1/4 - alpha/(2 sqrt 2) = alpha * eps`.
    pub delta: f64,
    /// Contraction ratio `1 - delta`.
    pub gamma: f64,
    /// Similarity dimension `-log 2 / log alpha`.
    pub h: f64,
}

pub const ALPHA_INTERVAL: &str = "(1/2, 1/sqrt(2))";

impl IfsParams {
    pub fn derive(alpha: f64) -> Result<Self> {
        if !(alpha > 0.5 && alpha < std::f64::consts::FRAC_1_SQRT_2) {
            return Err(Error::Domain {
                name: "alpha",
                value: alpha,
                interval: ALPHA_INTERVAL,
            });
        }
        Ok(Self::unchecked(alpha))
    }

    /// Same formulas without the range check; only for synthetic
    /// counterexamples.
    pub fn unchecked(alpha: f64) -> Self {
        let eps = 1.0 / (4.0 * alpha) - 1.0 / (2.0 * SQRT_2);
        let delta = 0.25 - alpha / (2.0 * SQRT_2);
        Self {
            alpha,
            eps,
            delta,
            gamma: 1.0 - delta,
            h: -(2f64.ln()) / alpha.ln(),
        }
    }

    pub fn from_dimension(h: f64) -> Result<Self> {
        Self::derive(alpha_for_dimension(h)?)
    }
}

/// Constants for a given scale; see [`IfsParams`].
pub fn derive_constants(alpha: f64) -> Result<IfsParams> {
    IfsParams::derive(alpha)
}

/// The scale `2^(-1/h)` whose attractor has similarity dimension `h`.
pub fn alpha_for_dimension(h: f64) -> Result<f64> {
    if !(h > 1.0 && h < 2.0) {
        return Err(Error::Domain {
            name: "h",
            value: h,
            interval: "(1, 2)",
        });
    }
    Ok(2f64.powf(-1.0 / h))
}

/// Quarter-turn counter-clockwise rotation applied `k` times.
#[inline]
pub fn rotate(k: u8, v: Vec2) -> Vec2 {
    match k & 3 {
        0 => v,
        1 => Vec2::new(-v.y, v.x),
        2 => Vec2::new(-v.x, -v.y),
        _ => Vec2::new(v.y, -v.x),
    }
}

/// `x ↦ translation + scale · R^rotation · x` with `R` the quarter turn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineSimilarity {
    pub translation: Vec2,
    pub rotation: u8,
    pub scale: f64,
}

impl AffineSimilarity {
    pub fn identity() -> Self {
        Self {
            translation: Vec2::zeros(),
            rotation: 0,
            scale: 1.0,
        }
    }

    pub fn new(translation: Vec2, rotation: u8, scale: f64) -> Self {
        assert!(scale > 0.0, "similarity scale must be positive");
        Self {
            translation,
            rotation: rotation & 3,
            scale,
        }
    }

    #[inline]
    pub fn apply(&self, x: Vec2) -> Vec2 {
        self.translation + self.apply_linear(x)
    }

    #[inline]
    pub fn apply_linear(&self, v: Vec2) -> Vec2 {
        rotate(self.rotation, v) * self.scale
    }

    #[inline]
    pub fn apply_inverse(&self, x: Vec2) -> Vec2 {
        rotate(4 - self.rotation, x - self.translation) / self.scale
    }

    #[inline]
    pub fn apply_linear_inverse(&self, v: Vec2) -> Vec2 {
        rotate(4 - self.rotation, v) / self.scale
    }

    pub fn inverse(&self) -> Self {
        let rotation = (4 - self.rotation) & 3;
        let scale = 1.0 / self.scale;
        Self {
            translation: -(rotate(rotation, self.translation) * scale),
            rotation,
            scale,
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            translation: self.apply(other.translation),
            rotation: (self.rotation + other.rotation) & 3,
            scale: self.scale * other.scale,
        }
    }
}

/// `F_i^t` with `∫_0^t eta` supplied as `eta_integral`.
pub fn letter_map(letter: u8, eta_integral: f64, alpha: f64) -> AffineSimilarity {
    let shift = 1.0 - eta_integral;
    let x = if letter == 1 { shift } else { -shift };
    AffineSimilarity::new(Vec2::new(x, 0.0), 1, alpha)
}

/// `F_w^t = F_{w_1}^t ∘ … ∘ F_{w_k}^t`, the identity for the empty word.
pub fn word_map(w: &BinaryWord, eta_integral: f64, alpha: f64) -> AffineSimilarity {
    w.letters().iter().fold(AffineSimilarity::identity(), |acc, &l| {
        acc.compose(&letter_map(l, eta_integral, alpha))
    })
}

/// Closed axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub center: Vec2,
    pub half: Vec2,
}

impl Rect {
    pub fn new(center: Vec2, half: Vec2) -> Self {
        Self { center, half }
    }

    pub fn from_bounds(lo: Vec2, hi: Vec2) -> Self {
        let (a, b) = (lo.inf(&hi), lo.sup(&hi));
        Self {
            center: (a + b) * 0.5,
            half: (b - a) * 0.5,
        }
    }

    /// `R_xi = [-2-xi, 2+xi] x [-sqrt 2 - xi, sqrt 2 + xi]`.
    pub fn r(xi: f64) -> Self {
        Self {
            center: Vec2::zeros(),
            half: Vec2::new(2.0 + xi, SQRT_2 + xi),
        }
    }

    pub fn lo(&self) -> Vec2 {
        self.center - self.half
    }

    pub fn hi(&self) -> Vec2 {
        self.center + self.half
    }

    #[inline]
    pub fn contains(&self, p: Vec2) -> bool {
        (p.x - self.center.x).abs() <= self.half.x && (p.y - self.center.y).abs() <= self.half.y
    }

    pub fn contains_with_slack(&self, p: Vec2, slack: f64) -> bool {
        (p.x - self.center.x).abs() <= self.half.x + slack && (p.y - self.center.y).abs() <= self.half.y + slack
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            center: self.center * s,
            half: self.half * s,
        }
    }

    /// Image under a similarity; quarter turns keep rectangles axis-aligned.
    pub fn image(&self, g: &AffineSimilarity) -> Self {
        let half = if g.rotation % 2 == 1 {
            Vec2::new(self.half.y, self.half.x)
        } else {
            self.half
        };
        Self {
            center: g.apply(self.center),
            half: half * g.scale,
        }
    }

    /// Signed overlap depth along each axis (negative means a gap).
    pub fn overlap(&self, other: &Rect) -> Vec2 {
        let a = self.hi().inf(&other.hi());
        let b = self.lo().sup(&other.lo());
        a - b
    }

    /// True when the rectangles overlap by more than `slack` in both axes.
    pub fn overlaps(&self, other: &Rect, slack: f64) -> bool {
        let o = self.overlap(other);
        o.x > slack && o.y > slack
    }

    /// True when `self ⊂ other` up to `slack`.
    pub fn inside(&self, other: &Rect, slack: f64) -> bool {
        let (lo, hi, olo, ohi) = (self.lo(), self.hi(), other.lo(), other.hi());
        lo.x >= olo.x - slack && lo.y >= olo.y - slack && hi.x <= ohi.x + slack && hi.y <= ohi.y + slack
    }

    /// True when `self` lies in the open interior of `other` with a margin
    /// larger than `slack`.
    pub fn strictly_inside(&self, other: &Rect, slack: f64) -> bool {
        let (lo, hi, olo, ohi) = (self.lo(), self.hi(), other.lo(), other.hi());
        lo.x > olo.x + slack && lo.y > olo.y + slack && hi.x < ohi.x - slack && hi.y < ohi.y - slack
    }
}

/// Segment `F_w(I)` stored by its endpoints `F_w(-1,0)` and `F_w(1,0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub word: BinaryWord,
    pub a: [f64; 2],
    pub b: [f64; 2],
}

/// Finite-depth approximation `{F_w(I) : |w| <= depth}` of the attractor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractalApprox {
    pub alpha: f64,
    pub depth: usize,
    pub segments: Vec<Segment>,
}

impl FractalApprox {
    /// Every segment endpoint, in segment order.
    pub fn endpoints(&self) -> Vec<Vec2> {
        self.segments
            .iter()
            .flat_map(|s| [Vec2::new(s.a[0], s.a[1]), Vec2::new(s.b[0], s.b[1])])
            .collect()
    }

    /// `per_segment` evenly spaced points on each segment, endpoints included.
    pub fn sample_points(&self, per_segment: usize) -> Vec<Vec2> {
        let n = per_segment.max(2);
        let mut out = Vec::with_capacity(n * self.segments.len());
        for s in &self.segments {
            let a = Vec2::new(s.a[0], s.a[1]);
            let b = Vec2::new(s.b[0], s.b[1]);
            for j in 0..n {
                let u = j as f64 / (n - 1) as f64;
                out.push(a + (b - a) * u);
            }
        }
        out
    }
}

fn check_image_count(depth: usize) -> Result<()> {
    if depth >= 64 || (1usize << depth) > MAX_IMAGES {
        return Err(Error::Resource(format!(
            "depth {depth} needs 2^{depth} word images, cap is 2^20"
        )));
    }
    Ok(())
}

/// All segments `F_w(I)` with `|w| <= depth`.
pub fn attractor_approx(params: &IfsParams, depth: usize) -> Result<FractalApprox> {
    check_image_count(depth)?;
    let mut segments = Vec::with_capacity((2usize << depth) - 1);
    let mut level = vec![(BinaryWord::empty(), AffineSimilarity::identity())];
    for k in 0..=depth {
        let mut next = Vec::with_capacity(if k < depth { 2 * level.len() } else { 0 });
        for (w, g) in level {
            let a = g.apply(Vec2::new(-1.0, 0.0));
            let b = g.apply(Vec2::new(1.0, 0.0));
            segments.push(Segment {
                word: w.clone(),
                a: [a.x, a.y],
                b: [b.x, b.y],
            });
            if k < depth {
                for l in [1u8, 2] {
                    next.push((w.child(l), g.compose(&letter_map(l, 0.0, params.alpha))));
                }
            }
        }
        level = next;
    }
    Ok(FractalApprox {
        alpha: params.alpha,
        depth,
        segments,
    })
}

/// Points `F_w(0)` for `n` words of length `depth` drawn uniformly at random;
/// they sample the homogeneous attractor `S~ = F_1(S~) ∪ F_2(S~)`.
pub fn sample_homogeneous(params: &IfsParams, depth: usize, n: usize, seed: u64) -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let maps = [letter_map(1, 0.0, params.alpha), letter_map(2, 0.0, params.alpha)];
    (0..n)
        .map(|_| {
            // F_{w_1} ∘ … ∘ F_{w_k}(0): apply the innermost letter first
            let mut p = Vec2::zeros();
            for _ in 0..depth {
                p = maps[rng.random_range(0..2)].apply(p);
            }
            p
        })
        .collect()
}

/// The pieces of `closure(R_eps \ (R_0 ∩ (H_+^delta ∪ H_-^delta)))`: the frame
/// `R_eps \ R_0` as four bands and the central strip `[-delta, delta] x [-√2, √2]`.
pub fn border_pieces(params: &IfsParams) -> [Rect; 5] {
    let (e, d) = (params.eps, params.delta);
    let (ax, ay) = (2.0, SQRT_2);
    [
        Rect::from_bounds(Vec2::new(-ax - e, ay), Vec2::new(ax + e, ay + e)),
        Rect::from_bounds(Vec2::new(-ax - e, -ay - e), Vec2::new(ax + e, -ay)),
        Rect::from_bounds(Vec2::new(-ax - e, -ay), Vec2::new(-ax, ay)),
        Rect::from_bounds(Vec2::new(ax, -ay), Vec2::new(ax + e, ay)),
        Rect::from_bounds(Vec2::new(-d, -ay), Vec2::new(d, ay)),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationViolation {
    pub check: String,
    pub eta_integral: f64,
    pub words: Vec<BinaryWord>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub alpha: f64,
    pub depth: usize,
    pub eta_samples: Vec<f64>,
    /// Left edge of `F_1(R_0)`; equals `4 delta`.
    pub f1_left_edge: f64,
    pub pairs_checked: usize,
    pub violations: Vec<SeparationViolation>,
}

impl SeparationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the half-space inclusions of the first-level images and the
/// pairwise disjointness of the border images for all words up to `depth`,
/// at `∫eta ∈ {0, delta/2, delta}`.
pub fn separation_check(params: &IfsParams, depth: usize) -> Result<SeparationReport> {
    let d = params.delta;
    separation_check_at(params, depth, &[0.0, 0.5 * d, d])
}

pub fn separation_check_at(params: &IfsParams, depth: usize, eta_samples: &[f64]) -> Result<SeparationReport> {
    if depth < 1 {
        return Err(Error::Invalid("separation check needs depth >= 1".into()));
    }
    check_image_count(depth)?;
    let mut violations = Vec::new();
    let (d, slack) = (params.delta, RECT_SLACK);
    let r0 = Rect::r(0.0);
    let r_eps = Rect::r(params.eps);
    let w1 = BinaryWord::new(vec![1]).unwrap();
    let w2 = BinaryWord::new(vec![2]).unwrap();

    let f1_r0 = r0.image(&letter_map(1, 0.0, params.alpha));
    let f2_r0 = r0.image(&letter_map(2, 0.0, params.alpha));
    if f1_r0.lo().x < 4.0 * d - slack || !f1_r0.inside(&r0, slack) {
        violations.push(SeparationViolation {
            check: "F1(R0) in H+^(4 delta) ∩ R0".into(),
            eta_integral: 0.0,
            words: vec![w1.clone()],
            detail: format!("F1(R0) = [{:?}, {:?}]", f1_r0.lo(), f1_r0.hi()),
        });
    }
    if f2_r0.hi().x > -4.0 * d + slack || !f2_r0.inside(&r0, slack) {
        violations.push(SeparationViolation {
            check: "F2(R0) in H-^(4 delta) ∩ R0".into(),
            eta_integral: 0.0,
            words: vec![w2.clone()],
            detail: format!("F2(R0) = [{:?}, {:?}]", f2_r0.lo(), f2_r0.hi()),
        });
    }

    let plus = Rect::from_bounds(Vec2::new(d, -SQRT_2), Vec2::new(2.0, SQRT_2));
    let minus = Rect::from_bounds(Vec2::new(-2.0, -SQRT_2), Vec2::new(-d, SQRT_2));
    let pieces = border_pieces(params);
    let mut pairs_checked = 0;
    for &s in eta_samples {
        for (w, target) in [(&w1, &plus), (&w2, &minus)] {
            let img = r_eps.image(&word_map(w, s, params.alpha));
            if !img.strictly_inside(target, slack) {
                violations.push(SeparationViolation {
                    check: "Fi(R_eps) in int(R0 ∩ H±^delta)".into(),
                    eta_integral: s,
                    words: vec![w.clone()],
                    detail: format!("image = [{:?}, {:?}]", img.lo(), img.hi()),
                });
            }
        }

        // sweep-and-prune over all border pieces of all words
        let words: Vec<BinaryWord> = BinaryWord::up_to(depth).collect();
        let mut rects: Vec<(usize, Rect)> = Vec::with_capacity(5 * words.len());
        for (i, w) in words.iter().enumerate() {
            let g = word_map(w, s, params.alpha);
            rects.extend(pieces.iter().map(|p| (i, p.image(&g))));
        }
        rects.sort_by(|a, b| a.1.lo().x.total_cmp(&b.1.lo().x));
        let mut active: Vec<usize> = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for j in 0..rects.len() {
            let (wj, rj) = rects[j];
            let x0 = rj.lo().x;
            active.retain(|&k| rects[k].1.hi().x - x0 > slack);
            for &k in &active {
                let (wk, rk) = rects[k];
                if wk == wj {
                    continue;
                }
                pairs_checked += 1;
                if rk.overlaps(&rj, slack) {
                    let key = (wk.min(wj), wk.max(wj));
                    if seen.insert(key) {
                        violations.push(SeparationViolation {
                            check: "disjoint border images".into(),
                            eta_integral: s,
                            words: vec![words[key.0].clone(), words[key.1].clone()],
                            detail: format!("overlap depth {:?}", rk.overlap(&rj)),
                        });
                    }
                }
            }
            active.push(j);
        }
    }

    Ok(SeparationReport {
        alpha: params.alpha,
        depth,
        eta_samples: eta_samples.to_vec(),
        f1_left_edge: f1_r0.lo().x,
        pairs_checked,
        violations,
    })
}

/// One level of the descent: the letter taken (none at level 0) and the
/// point expressed in the local frame `(F_w^t)^{-1} x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DescentStep {
    pub level: usize,
    pub letter: Option<u8>,
    pub local: Vec2,
}

/// Walks down the word tree, following at each level the unique child whose
/// image of `R_eps` contains the point. Calls `visit` once per level.
#[inline]
pub fn descend<F: FnMut(DescentStep)>(x: Vec2, eta_integral: f64, params: &IfsParams, max_depth: usize, mut visit: F) {
    let r_eps = Rect::r(params.eps);
    if !r_eps.contains(x) {
        return;
    }
    visit(DescentStep {
        level: 0,
        letter: None,
        local: x,
    });
    let shift = 1.0 - eta_integral;
    let inv_alpha = 1.0 / params.alpha;
    let mut y = x;
    for level in 1..=max_depth {
        // (F_i^t)^{-1} y = R^{-1}(y - c_i) / alpha, R^{-1}(a, b) = (b, -a)
        let (letter, c) = if y.x >= 0.0 { (1u8, shift) } else { (2u8, -shift) };
        let z = Vec2::new(y.y * inv_alpha, -(y.x - c) * inv_alpha);
        if !r_eps.contains(z) {
            return;
        }
        y = z;
        visit(DescentStep {
            level,
            letter: Some(letter),
            local: y,
        });
    }
}

/// Per level `k <= max_depth`, the word `w` with `|w| = k` and
/// `x ∈ F_w^t(R_eps)`, stopping at the first level with none.
pub fn locate_chain(x: Vec2, eta_integral: f64, params: &IfsParams, max_depth: usize) -> Vec<BinaryWord> {
    let mut chain = Vec::new();
    let mut w = BinaryWord::empty();
    descend(x, eta_integral, params, max_depth, |step| {
        if let Some(l) = step.letter {
            w = w.child(l);
        }
        chain.push(w.clone());
    });
    chain
}
