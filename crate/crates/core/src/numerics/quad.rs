//! Globally adaptive Gauss–Kronrod (7/15) quadrature with user breakpoints,
//! and Gauss–Legendre rules for tensor expectations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances for adaptive quadrature.
///
/// A result is accepted once the summed error estimate is below
/// `max(abs_tol, rel_tol * |value|)`. No interval is bisected more than
/// `max_depth` times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-7,
            max_depth: 40,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_depth: u32) -> Result<Self> {
        let q = Self {
            abs_tol,
            rel_tol,
            max_depth,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::invalid("quadrature tolerances must be positive"));
        }
        if self.max_depth < 1 {
            return Err(Error::invalid("quadrature max_depth must be at least 1"));
        }
        Ok(())
    }

    /// Same depth, both tolerances scaled by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            max_depth: self.max_depth,
        }
    }
}

const MAX_SEGMENTS: usize = 1 << 14;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One G7/K15 panel: (Kronrod estimate, |Kronrod - Gauss|).
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

/// Result of an adaptive integration, converged or not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOutcome {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

impl QuadOutcome {
    pub fn into_result(self, what: &str) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::NonConvergence {
                what: what.to_string(),
                estimate: self.value,
                error: self.error,
            })
        }
    }
}

/// Sorted, deduplicated interior breakpoints of `[lo, hi]`.
pub fn interior_points(lo: f64, hi: f64, points: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = points
        .into_iter()
        .filter(|p| p.is_finite() && *p > lo && *p < hi)
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
    v
}

/// Integrate `f` over `[lo, hi]`, starting from panels split at `breaks`.
///
/// Returns the best estimate even when the tolerance is not reached; use
/// [`adaptive_quad_breaks`] for the `Result` form.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, breaks: &[f64], q: &QuadratureSpec) -> QuadOutcome {
    if hi <= lo {
        return QuadOutcome {
            value: 0.0,
            error: 0.0,
            converged: hi == lo,
        };
    }
    let mut edges = Vec::with_capacity(breaks.len() + 2);
    edges.push(lo);
    edges.extend(interior_points(lo, hi, breaks.iter().copied()));
    edges.push(hi);

    let mut heap = BinaryHeap::new();
    let mut done: Vec<Segment> = Vec::new();
    let mut total_err = 0.0;
    let mut total_val = 0.0;
    for w in edges.windows(2) {
        let (value, error) = gk15(&mut f, w[0], w[1]);
        total_err += error;
        total_val += value;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value,
            error,
            depth: 0,
        });
    }

    let finish = |heap: BinaryHeap<Segment>, mut done: Vec<Segment>, converged: bool| {
        done.extend(heap.into_vec());
        done.sort_by(|x, y| x.a.total_cmp(&y.a));
        let value: f64 = done.iter().map(|s| s.value).sum();
        let error: f64 = done.iter().map(|s| s.error).sum();
        QuadOutcome {
            value,
            error,
            converged: converged && value.is_finite(),
        }
    };

    loop {
        if !total_val.is_finite() {
            return finish(heap, done, false);
        }
        if total_err <= q.abs_tol.max(q.rel_tol * total_val.abs()) {
            return finish(heap, done, true);
        }
        if heap.len() + done.len() >= MAX_SEGMENTS {
            return finish(heap, done, false);
        }
        let Some(seg) = heap.pop() else {
            return finish(heap, done, false);
        };
        if seg.depth >= q.max_depth {
            done.push(seg);
            continue;
        }
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            done.push(seg);
            continue;
        }
        let (v1, e1) = gk15(&mut f, seg.a, mid);
        let (v2, e2) = gk15(&mut f, mid, seg.b);
        total_err += e1 + e2 - seg.error;
        total_val += v1 + v2 - seg.value;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
            depth: seg.depth + 1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
            depth: seg.depth + 1,
        });
    }
}

/// Adaptive quadrature of `f` over `[lo, hi]`.
pub fn adaptive_quad<F: FnMut(f64) -> f64>(f: F, lo: f64, hi: f64, q: &QuadratureSpec) -> Result<f64> {
    adaptive_quad_breaks(f, lo, hi, &[], q)
}

/// Adaptive quadrature with known discontinuity or kink locations.
pub fn adaptive_quad_breaks<F: FnMut(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    q: &QuadratureSpec,
) -> Result<f64> {
    if !(lo <= hi) {
        return Err(Error::invalid(format!("integration bounds out of order: [{lo}, {hi}]")));
    }
    q.validate()?;
    integrate(f, lo, hi, breaks, q).into_result("adaptive quadrature")
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x descends from near 1; store ascending on [0, 1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}
