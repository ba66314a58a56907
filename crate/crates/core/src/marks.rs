//! Mark (resource) distributions and the symmetric control sets that decide
//! which mark pairs may cooperate.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::Distribution;
use statrs::function::beta::{beta_reg, inv_beta_reg, ln_beta};

use crate::error::{Error, Result};
use crate::numerics::quad::{integrate, interior_points, QuadOutcome, QuadratureSpec};
use crate::rng::SeededRng;

/// Family and parameters of a mark distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarkKind {
    /// Every node carries the same mark `mu`.
    Degenerate { mu: f64 },
    /// Beta law on `(0, 1)` given by its first two moments.
    Beta { mean: f64, variance: f64 },
    /// Uniform law on `(lo, hi)`.
    Uniform { lo: f64, hi: f64 },
}

/// A validated mark distribution `f(z) dz`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkModel {
    kind: MarkKind,
    // (alpha, beta, ln B(alpha, beta)) for the Beta family
    shape: Option<(f64, f64, f64)>,
}

const NORMALIZATION_TOL: f64 = 1e-8;

impl MarkModel {
    pub fn degenerate(mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::invalid(format!("degenerate mark must be positive, got {mu}")));
        }
        Ok(Self {
            kind: MarkKind::Degenerate { mu },
            shape: None,
        })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || !hi.is_finite() {
            return Err(Error::invalid(format!(
                "uniform marks need 0 < lo < hi, got ({lo}, {hi})"
            )));
        }
        Self {
            kind: MarkKind::Uniform { lo, hi },
            shape: None,
        }
        .checked()
    }

    /// Beta law with the given mean and variance.
    ///
    /// Shapes follow from moment inversion:
    /// `alpha = mean * k`, `beta = (1 - mean) * k` with `k = mean (1 - mean) / var - 1`.
    pub fn beta_from_mean_var(mean: f64, var: f64) -> Result<Self> {
        if !(mean > 0.0 && mean < 1.0) {
            return Err(Error::invalid(format!("beta mean must lie in (0, 1), got {mean}")));
        }
        let cap = mean * (1.0 - mean);
        if !(var > 0.0) || var >= cap {
            return Err(Error::invalid(format!(
                "beta variance must lie in (0, {cap}) for mean {mean}, got {var}"
            )));
        }
        let k = cap / var - 1.0;
        let (alpha, beta) = (mean * k, (1.0 - mean) * k);
        Self {
            kind: MarkKind::Beta { mean, variance: var },
            shape: Some((alpha, beta, ln_beta(alpha, beta))),
        }
        .checked()
    }

    fn checked(self) -> Result<Self> {
        let (lo, hi) = self.support();
        let q = QuadratureSpec::new(1e-12, 1e-12, 60)?;
        let total = self.integrate_against(|_| 1.0, lo, hi, &[], &q);
        if !total.converged || (total.value - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!(
                "mark density for {self} integrates to {} instead of 1",
                total.value
            )));
        }
        Ok(self)
    }

    pub fn kind(&self) -> MarkKind {
        self.kind
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.kind, MarkKind::Degenerate { .. })
    }

    /// `(alpha, beta)` for the Beta family.
    pub fn beta_shapes(&self) -> Option<(f64, f64)> {
        self.shape.map(|(a, b, _)| (a, b))
    }

    /// Closure of the support. For degenerate marks both ends equal `mu`.
    pub fn support(&self) -> (f64, f64) {
        match self.kind {
            MarkKind::Degenerate { mu } => (mu, mu),
            MarkKind::Beta { .. } => (0.0, 1.0),
            MarkKind::Uniform { lo, hi } => (lo, hi),
        }
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            MarkKind::Degenerate { mu } => mu,
            MarkKind::Beta { mean, .. } => mean,
            MarkKind::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            MarkKind::Degenerate { .. } => 0.0,
            MarkKind::Beta { variance, .. } => variance,
            MarkKind::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
        }
    }

    /// Density at `z`; zero outside the support. Degenerate marks have none.
    pub fn density(&self, z: f64) -> Result<f64> {
        if self.is_degenerate() {
            return Err(Error::Unsupported(
                "degenerate marks have no density; use the closed-form path".into(),
            ));
        }
        Ok(self.pdf(z))
    }

    /// Density without the degenerate check (returns 0 for degenerate marks).
    #[inline]
    pub(crate) fn pdf(&self, z: f64) -> f64 {
        match (self.kind, self.shape) {
            (MarkKind::Uniform { lo, hi }, _) => {
                if z >= lo && z <= hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            (MarkKind::Beta { .. }, Some((a, b, ln_b))) => {
                if !(z > 0.0) || z > 1.0 {
                    return 0.0;
                }
                if z == 1.0 {
                    return if b < 1.0 {
                        f64::INFINITY
                    } else if b == 1.0 {
                        (-ln_b).exp()
                    } else {
                        0.0
                    };
                }
                ((a - 1.0) * z.ln() + (b - 1.0) * (-z).ln_1p() - ln_b).exp()
            }
            _ => 0.0,
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match (self.kind, self.shape) {
            (MarkKind::Degenerate { mu }, _) => {
                if z >= mu {
                    1.0
                } else {
                    0.0
                }
            }
            (MarkKind::Uniform { lo, hi }, _) => ((z - lo) / (hi - lo)).clamp(0.0, 1.0),
            (MarkKind::Beta { .. }, Some((a, b, _))) => {
                if z <= 0.0 {
                    0.0
                } else if z >= 1.0 {
                    1.0
                } else if z <= 0.5 {
                    beta_reg(a, b, z)
                } else {
                    // 1 - z is exact here
                    1.0 - beta_reg(b, a, 1.0 - z)
                }
            }
            _ => unreachable!("beta marks always carry shapes"),
        }
    }

    /// Inverse CDF on `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match (self.kind, self.shape) {
            (MarkKind::Degenerate { mu }, _) => mu,
            (MarkKind::Uniform { lo, hi }, _) => lo + u * (hi - lo),
            (MarkKind::Beta { .. }, Some((a, b, ln_b))) => {
                if u == 0.0 || u == 1.0 {
                    u
                } else if u <= 0.5 {
                    beta_lower_quantile(a, b, ln_b, u)
                } else {
                    // upper tail through the mirrored law keeps 1 - z accurate
                    1.0 - beta_lower_quantile(b, a, ln_b, 1.0 - u)
                }
            }
            _ => unreachable!("beta marks always carry shapes"),
        }
    }

    /// One draw from the mark law.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match (self.kind, self.shape) {
            (MarkKind::Degenerate { mu }, _) => mu,
            (MarkKind::Uniform { lo, hi }, _) => loop {
                let z = rng.random_range(lo..hi);
                if z > lo {
                    break z;
                }
            },
            (MarkKind::Beta { .. }, Some((a, b, _))) => {
                let dist = rand_distr::Beta::new(a, b).expect("validated beta shapes");
                // Tiny shapes put real mass within half an ulp of 1, so a draw
                // of exactly 1 is kept; only an underflow to 0 is redrawn.
                loop {
                    let z = dist.sample(rng);
                    if z > 0.0 && z <= 1.0 {
                        break z;
                    }
                }
            }
            _ => unreachable!("beta marks always carry shapes"),
        }
    }

    /// Points where quadrature should split: the support ends and, for Beta
    /// marks, a ladder around the mean so that narrow laws are never missed.
    pub fn hint_points(&self) -> Vec<f64> {
        let (lo, hi) = self.support();
        let mut pts = vec![lo, hi];
        if let MarkKind::Beta { mean, variance } = self.kind {
            let sd = variance.sqrt();
            pts.push(mean);
            for k in [0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 13.0] {
                pts.push(mean - k * sd);
                pts.push(mean + k * sd);
            }
        }
        pts.retain(|p| *p >= lo && *p <= hi);
        pts
    }

    /// `∫_lo^hi f(w) g(w) dw` with `f` extended by zero outside its support.
    ///
    /// The range is cut at the support ends, the hint points and `breaks`.
    /// Beta pieces next to a singular end (shape below 1) are integrated in
    /// the variable `w^alpha` (or `(1-w)^beta`), which absorbs the singularity.
    /// For degenerate marks the integral is `g(mu)` when `mu` is inside.
    pub fn integrate_against<G: FnMut(f64) -> f64>(
        &self,
        mut g: G,
        lo: f64,
        hi: f64,
        breaks: &[f64],
        q: &QuadratureSpec,
    ) -> QuadOutcome {
        let (s_lo, s_hi) = self.support();
        if let MarkKind::Degenerate { mu } = self.kind {
            let value = if mu >= lo && mu <= hi { g(mu) } else { 0.0 };
            return QuadOutcome {
                value,
                error: 0.0,
                converged: value.is_finite(),
            };
        }
        let (a, b) = (lo.max(s_lo), hi.min(s_hi));
        if !(b > a) {
            return QuadOutcome {
                value: 0.0,
                error: 0.0,
                converged: true,
            };
        }
        let mut edges = vec![a];
        edges.extend(interior_points(
            a,
            b,
            self.hint_points().into_iter().chain(breaks.iter().copied()),
        ));
        edges.push(b);
        let pieces = (edges.len() - 1) as f64;
        let piece_q = QuadratureSpec {
            abs_tol: q.abs_tol / pieces,
            ..*q
        };

        let mut out = QuadOutcome {
            value: 0.0,
            error: 0.0,
            converged: true,
        };
        for w in edges.windows(2) {
            let piece = self.integrate_piece(&mut g, w[0], w[1], &piece_q);
            out.value += piece.value;
            out.error += piece.error;
            out.converged &= piece.converged;
        }
        out
    }

    fn integrate_piece<G: FnMut(f64) -> f64>(&self, g: &mut G, a: f64, b: f64, q: &QuadratureSpec) -> QuadOutcome {
        match (self.kind, self.shape) {
            (MarkKind::Beta { mean, .. }, Some((alpha, beta, ln_b))) if alpha < 1.0 && b <= mean => {
                // t = w^alpha, f(w) dw = (1-w)^(beta-1) / (alpha B) dt
                let scale = (-ln_b).exp() / alpha;
                let inv = 1.0 / alpha;
                integrate(
                    |t| {
                        let w = t.powf(inv);
                        scale * ((beta - 1.0) * (-w).ln_1p()).exp() * g(w)
                    },
                    a.powf(alpha),
                    b.powf(alpha),
                    &[],
                    q,
                )
            }
            (MarkKind::Beta { mean, .. }, Some((alpha, beta, ln_b))) if beta < 1.0 && a >= mean => {
                // t = (1-w)^beta, f(w) dw = -w^(alpha-1) / (beta B) dt
                let scale = (-ln_b).exp() / beta;
                let inv = 1.0 / beta;
                integrate(
                    |t| {
                        let one_minus = t.powf(inv);
                        let w = 1.0 - one_minus;
                        scale * ((alpha - 1.0) * (-one_minus).ln_1p()).exp() * g(w)
                    },
                    (1.0 - b).powf(beta),
                    (1.0 - a).powf(beta),
                    &[],
                    q,
                )
            }
            _ => integrate(|w| self.pdf(w) * g(w), a, b, &[], q),
        }
    }
}

/// Solves `I_x(a, b) = u` for `u <= 1/2` by safeguarded Newton, falling back
/// to bisection in log space since the root can sit many decades below 1.
fn beta_lower_quantile(a: f64, b: f64, ln_b: f64, u: f64) -> f64 {
    let pdf = |x: f64| ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_b).exp();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let start = inv_beta_reg(a, b, u);
    let mut x = if start > 0.0 && start < 1.0 { start } else { 0.5 };
    for _ in 0..400 {
        let g = beta_reg(a, b, x) - u;
        if g == 0.0 {
            return x;
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = pdf(x);
        let newton = x - g / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else if lo > 0.0 && hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else if lo == 0.0 {
            hi * 1e-3
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || next == 0.0 {
            return next.max(f64::MIN_POSITIVE);
        }
        x = next;
    }
    x
}

/// `n` i.i.d. marks; deterministic for a given generator state.
pub fn sample_marks(m: &MarkModel, n: usize, rng: &mut SeededRng) -> Vec<f64> {
    (0..n).map(|_| m.sample_one(rng)).collect()
}

/// Beta marks from their first two moments.
pub fn beta_from_mean_var(mean: f64, var: f64) -> Result<MarkModel> {
    MarkModel::beta_from_mean_var(mean, var)
}

impl fmt::Display for MarkModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            MarkKind::Degenerate { mu } => write!(f, "degenerate:mu={mu}"),
            MarkKind::Beta { mean, variance } => write!(f, "beta:mean={mean},var={variance}"),
            MarkKind::Uniform { lo, hi } => write!(f, "uniform:lo={lo},hi={hi}"),
        }
    }
}

/// Splits `name:k1=v1,k2=v2` into the name and its numeric parameters.
fn parse_spec(s: &str, what: &str) -> Result<(String, BTreeMap<String, f64>)> {
    let s = s.trim();
    let (name, rest) = match s.split_once(':') {
        Some((n, r)) => (n.trim(), r.trim()),
        None => (s, ""),
    };
    let mut params = BTreeMap::new();
    for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("{what} parameter `{part}` is not key=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("{what} parameter `{part}` is not a number")))?;
        if params.insert(k.trim().to_ascii_lowercase(), v).is_some() {
            return Err(Error::invalid(format!("{what} parameter `{k}` given twice")));
        }
    }
    Ok((name.to_ascii_lowercase(), params))
}

fn take(params: &mut BTreeMap<String, f64>, key: &str, spec: &str) -> Result<f64> {
    params
        .remove(key)
        .ok_or_else(|| Error::invalid(format!("`{spec}` is missing parameter `{key}`")))
}

fn no_leftovers(params: BTreeMap<String, f64>, spec: &str) -> Result<()> {
    match params.keys().next() {
        Some(k) => Err(Error::invalid(format!("`{spec}` has unknown parameter `{k}`"))),
        None => Ok(()),
    }
}

impl FromStr for MarkModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, mut p) = parse_spec(s, "mark model")?;
        let model = match name.as_str() {
            "degenerate" => MarkModel::degenerate(take(&mut p, "mu", s)?)?,
            "beta" => {
                let mean = take(&mut p, "mean", s)?;
                MarkModel::beta_from_mean_var(mean, take(&mut p, "var", s)?)?
            }
            "uniform" => {
                let lo = take(&mut p, "lo", s)?;
                MarkModel::uniform(lo, take(&mut p, "hi", s)?)?
            }
            other => return Err(Error::invalid(format!("unknown mark model `{other}`"))),
        };
        no_leftovers(p, s)?;
        Ok(model)
    }
}

type MarkPredicate = dyn Fn(f64, f64) -> bool + Send + Sync;

/// A user predicate on mark pairs, checked for symmetry when built.
#[derive(Clone)]
pub struct CustomControl {
    name: String,
    pred: Arc<MarkPredicate>,
}

impl fmt::Debug for CustomControl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomControl").field("name", &self.name).finish()
    }
}

/// The set `D` of mark pairs allowed to cooperate.
#[derive(Debug, Clone)]
pub enum ControlSet {
    Full,
    Empty,
    /// `z * z_t >= tau`
    MinProduct {
        tau: f64,
    },
    /// `max(z, z_t) / min(z, z_t) <= rho`
    MaxRatio {
        rho: f64,
    },
    Custom(CustomControl),
}

/// The partner marks admitted for a given mark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Partners {
    All,
    None,
    Interval(f64, f64),
    /// Custom predicate; membership must be tested pointwise.
    Unknown,
}

const SYMMETRY_SAMPLES: usize = 10_000;

impl ControlSet {
    pub fn min_product(tau: f64) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::invalid(format!("min-product threshold must be >= 0, got {tau}")));
        }
        Ok(ControlSet::MinProduct { tau })
    }

    pub fn max_ratio(rho: f64) -> Result<Self> {
        if !(rho >= 1.0) || !rho.is_finite() {
            return Err(Error::invalid(format!("max-ratio bound must be >= 1, got {rho}")));
        }
        Ok(ControlSet::MaxRatio { rho })
    }

    /// Wraps a predicate after testing `pred(z, w) == pred(w, z)` on random
    /// pairs spread over several decades.
    pub fn custom<F>(name: impl Into<String>, pred: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> bool + Send + Sync + 'static,
    {
        let name = name.into();
        let mut rng = SeededRng::new(0x5EED_C0DE);
        for _ in 0..SYMMETRY_SAMPLES {
            let z = 10f64.powf(rng.random_range(-3.0..3.0));
            let w = if rng.random_bool(0.5) {
                z * rng.random_range(0.5..2.0)
            } else {
                10f64.powf(rng.random_range(-3.0..3.0))
            };
            if pred(z, w) != pred(w, z) {
                return Err(Error::invalid(format!(
                    "control set `{name}` is not symmetric: ({z}, {w})"
                )));
            }
        }
        Ok(ControlSet::Custom(CustomControl {
            name,
            pred: Arc::new(pred),
        }))
    }

    #[inline]
    pub fn contains(&self, z: f64, z_t: f64) -> bool {
        match self {
            ControlSet::Full => true,
            ControlSet::Empty => false,
            ControlSet::MinProduct { tau } => z * z_t >= *tau,
            ControlSet::MaxRatio { rho } => z.max(z_t) <= rho * z.min(z_t),
            ControlSet::Custom(c) => (c.pred)(z, z_t),
        }
    }

    /// Partner marks `z_t` with `(z, z_t)` in the set.
    pub fn partners(&self, z: f64) -> Partners {
        match self {
            ControlSet::Full => Partners::All,
            ControlSet::Empty => Partners::None,
            ControlSet::MinProduct { tau } => Partners::Interval(tau / z, f64::INFINITY),
            ControlSet::MaxRatio { rho } => Partners::Interval(z / rho, z * rho),
            ControlSet::Custom(_) => Partners::Unknown,
        }
    }

    pub fn is_empty_set(&self) -> bool {
        matches!(self, ControlSet::Empty)
    }
}

/// Symmetric membership.
pub fn control_contains(d: &ControlSet, z: f64, z_t: f64) -> bool {
    d.contains(z, z_t)
}

impl fmt::Display for ControlSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlSet::Full => write!(f, "full"),
            ControlSet::Empty => write!(f, "empty"),
            ControlSet::MinProduct { tau } => write!(f, "minproduct:tau={tau}"),
            ControlSet::MaxRatio { rho } => write!(f, "maxratio:rho={rho}"),
            ControlSet::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

impl FromStr for ControlSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, mut p) = parse_spec(s, "control set")?;
        let set = match name.as_str() {
            "full" => ControlSet::Full,
            "empty" => ControlSet::Empty,
            "minproduct" => ControlSet::min_product(take(&mut p, "tau", s)?)?,
            "maxratio" => ControlSet::max_ratio(take(&mut p, "rho", s)?)?,
            other => return Err(Error::invalid(format!("unknown control set `{other}`"))),
        };
        no_leftovers(p, s)?;
        Ok(set)
    }
}
