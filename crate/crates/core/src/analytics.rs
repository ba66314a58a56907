//! Cooperation probability of a pair, the fraction of atoms in pairs
//! `P_D(lambda, f)` and the expected interference of singles and pairs.

use std::cell::RefCell;
use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marks::{ControlSet, MarkKind, MarkModel, Partners};
use crate::numerics::quad::{gauss_legendre_unit, integrate, QuadratureSpec};
use crate::numerics::volume::{volume_f_slice, VolumeEstimate, VolumeMethod, DEGENERATE_AREA_FACTOR};
use crate::rng::{derive_seed, SeededRng};

/// Pathloss `|x|^-beta` switched off inside `excl_radius` and, optionally,
/// beyond `outer_radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathlossModel {
    pub beta: f64,
    pub excl_radius: f64,
    #[serde(default)]
    pub outer_radius: Option<f64>,
}

impl PathlossModel {
    pub fn new(beta: f64, excl_radius: f64) -> Result<Self> {
        let pl = Self {
            beta,
            excl_radius,
            outer_radius: None,
        };
        pl.validate()?;
        Ok(pl)
    }

    /// Same law cut off beyond `outer`.
    pub fn truncated(self, outer: f64) -> Result<Self> {
        let pl = Self {
            outer_radius: Some(outer),
            ..self
        };
        pl.validate()?;
        Ok(pl)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 2.0) || !self.beta.is_finite() {
            return Err(Error::invalid(format!(
                "pathloss exponent must exceed 2 for a finite tail, got {}",
                self.beta
            )));
        }
        if !(self.excl_radius > 0.0) || !self.excl_radius.is_finite() {
            return Err(Error::invalid(format!(
                "exclusion radius must be positive, got {}",
                self.excl_radius
            )));
        }
        if let Some(o) = self.outer_radius {
            if !(o > 0.0) || o.is_nan() {
                return Err(Error::invalid(format!("outer radius must be positive, got {o}")));
            }
        }
        Ok(())
    }

    /// Received power from distance `dist`.
    #[inline]
    pub fn gain(&self, dist: f64) -> f64 {
        if dist > self.excl_radius && self.outer_radius.is_none_or(|o| dist <= o) {
            dist.powf(-self.beta)
        } else {
            0.0
        }
    }
}

/// `∫ g` over the plane: `2π (R^(2-β) - R_max^(2-β)) / (β - 2)`.
pub fn pathloss_tail_integral(pl: &PathlossModel) -> Result<f64> {
    pl.validate()?;
    let e = 2.0 - pl.beta;
    let outer = match pl.outer_radius {
        Some(o) if o <= pl.excl_radius => return Ok(0.0),
        Some(o) => o.powf(e),
        None => 0.0,
    };
    Ok(2.0 * PI * (pl.excl_radius.powf(e) - outer) / (pl.beta - 2.0))
}

/// How the expectation over the two marks is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationSpec {
    /// Gauss–Legendre in quantile space, `nodes` per axis.
    TensorQuadrature { nodes: usize },
    /// `n` sampled mark pairs.
    MonteCarlo { n: usize, seed: u64 },
}

impl Default for ExpectationSpec {
    fn default() -> Self {
        ExpectationSpec::TensorQuadrature { nodes: 32 }
    }
}

impl ExpectationSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ExpectationSpec::TensorQuadrature { nodes } if nodes < 8 => Err(Error::invalid(format!(
                "tensor quadrature needs at least 8 nodes, got {nodes}"
            ))),
            ExpectationSpec::MonteCarlo { n, .. } if n < 1000 => Err(Error::invalid(format!(
                "Monte Carlo expectation needs at least 1000 samples, got {n}"
            ))),
            _ => Ok(()),
        }
    }
}

/// `exp(-lambda F(s, z, z_t))` if `(z, z_t)` is in `d`, else 0.
pub fn pair_probability(
    s: f64,
    z: f64,
    z_t: f64,
    lambda: f64,
    d: &ControlSet,
    m: &MarkModel,
    q: &QuadratureSpec,
) -> Result<f64> {
    check_lambda(lambda)?;
    if !d.contains(z, z_t) {
        return Ok(0.0);
    }
    let f = volume_f_slice(s, z, z_t, m, q)?.value;
    Ok((-lambda * f).exp())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("intensity must be positive, got {lambda}")));
    }
    Ok(())
}

const MAX_PANELS: usize = 200;
const NEGLIGIBLE_EXPONENT: f64 = 745.0;

/// `∫_0^∞ exp(-lambda F(s, z, z_t)) s ds`, on doubling panels.
pub fn radial_integral(z: f64, z_t: f64, lambda: f64, m: &MarkModel, q: &QuadratureSpec) -> Result<f64> {
    check_lambda(lambda)?;
    let f_at = |s: f64| -> Result<f64> {
        if s == 0.0 && z == z_t {
            return Ok(0.0);
        }
        match volume_f_slice(s, z, z_t, m, q) {
            Ok(v) => Ok(v.value),
            // exp(-lambda F) underflows whatever the last digits of F are
            Err(Error::NonConvergence { estimate, .. }) if lambda * estimate > NEGLIGIBLE_EXPONENT => Ok(estimate),
            Err(e) => Err(e),
        }
    };
    let f0 = f_at(0.0)?;
    // F grows with s, so the whole integrand is below exp(-lambda F(0))
    if lambda * f0 > NEGLIGIBLE_EXPONENT {
        return Ok(0.0);
    }

    // panel scale: lambda (F(s) - F(0)) near 1
    let mut scale = 1.0 / (lambda * DEGENERATE_AREA_FACTOR).sqrt();
    for _ in 0..200 {
        let g = lambda * (f_at(scale)? - f0);
        if g < 0.5 {
            scale *= 2.0;
        } else if g > 2.0 {
            scale *= 0.5;
        } else {
            break;
        }
    }

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let integrand = |s: f64| -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match f_at(s) {
            Ok(f) => (-lambda * f).exp() * s,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let mut total = 0.0;
    let mut error = 0.0;
    let (mut lo, mut hi) = (0.0, scale);
    for _ in 0..MAX_PANELS {
        let out = integrate(&integrand, lo, hi, &[], q);
        let edge = integrand(hi);
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        if !out.converged {
            return Err(Error::NonConvergence {
                what: format!("radial integral for marks ({z:e}, {z_t:e}) on [{lo:e}, {hi:e}]"),
                estimate: total + out.value,
                error: error + out.error,
            });
        }
        total += out.value;
        error += out.error;
        let panel_max = edge.max(out.value / (hi - lo));
        if out.value <= q.abs_tol * total && panel_max < 1e-12 {
            return Ok(total);
        }
        lo = hi;
        hi *= 2.0;
    }
    Err(Error::NonConvergence {
        what: format!("radial integral tail for marks ({z:e}, {z_t:e})"),
        estimate: total,
        error,
    })
}

/// `P_D` with its Monte Carlo standard error (zero for quadrature).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFraction {
    pub value: f64,
    pub stderr: f64,
}

/// Fraction of atoms in cooperative pairs,
/// `2πλ E[1_D(Z, Z_t) ∫_0^∞ exp(-λ F(s, Z, Z_t)) s ds]`.
pub fn pair_fraction(
    lambda: f64,
    m: &MarkModel,
    d: &ControlSet,
    e: &ExpectationSpec,
    q: &QuadratureSpec,
) -> Result<f64> {
    Ok(pair_fraction_detailed(lambda, m, d, e, q)?.value)
}

pub fn pair_fraction_detailed(
    lambda: f64,
    m: &MarkModel,
    d: &ControlSet,
    e: &ExpectationSpec,
    q: &QuadratureSpec,
) -> Result<PairFraction> {
    check_lambda(lambda)?;
    e.validate()?;
    q.validate()?;
    if d.is_empty_set() {
        return Ok(PairFraction {
            value: 0.0,
            stderr: 0.0,
        });
    }
    if let MarkKind::Degenerate { mu } = m.kind() {
        // F = K s², so the radial integral is 1 / (2 λ K)
        let value = if d.contains(mu, mu) {
            PI / DEGENERATE_AREA_FACTOR
        } else {
            0.0
        };
        return Ok(PairFraction { value, stderr: 0.0 });
    }
    let radial = |z: f64, z_t: f64| radial_integral(z, z_t, lambda, m, q);

    let (mean, stderr) = match *e {
        ExpectationSpec::TensorQuadrature { nodes } => (tensor_expectation(m, d, nodes, &radial)?, 0.0),
        ExpectationSpec::MonteCarlo { n, seed } => {
            let mut rng = SeededRng::new(seed);
            let draws: Vec<(f64, f64)> = (0..n)
                .map(|_| (m.sample_one(&mut rng), m.sample_one(&mut rng)))
                .collect();
            let vals = draws
                .par_iter()
                .map(|&(z, z_t)| if d.contains(z, z_t) { radial(z, z_t) } else { Ok(0.0) })
                .collect::<Result<Vec<f64>>>()?;
            mean_and_stderr(&vals)
        }
    };
    let k = 2.0 * PI * lambda;
    Ok(PairFraction {
        value: (k * mean).clamp(0.0, 1.0),
        stderr: k * stderr,
    })
}

/// `E[1_D(Z, Z_t) h(Z, Z_t)]` for independent marks, with Gauss–Legendre in
/// quantile space. For interval-shaped partner sets the inner rule covers only
/// the admissible quantile range; the inner range is also split at the
/// diagonal, where `h` has a kink.
fn tensor_expectation<H>(m: &MarkModel, d: &ControlSet, nodes: usize, h: &H) -> Result<f64>
where
    H: Fn(f64, f64) -> Result<f64> + Sync,
{
    let (t, w) = gauss_legendre_unit(nodes);
    let rows = (0..nodes)
        .into_par_iter()
        .map(|i| {
            let u_i = t[i];
            let z = m.quantile(u_i);
            let (u_lo, u_hi, masked) = match d.partners(z) {
                Partners::All | Partners::Unknown => (0.0, 1.0, matches!(d.partners(z), Partners::Unknown)),
                Partners::None => return Ok(0.0),
                Partners::Interval(a, b) => (m.cdf(a), if b.is_finite() { m.cdf(b) } else { 1.0 }, false),
            };
            if !(u_hi > u_lo) {
                return Ok(0.0);
            }
            let mut cuts = vec![u_lo];
            if u_i > u_lo && u_i < u_hi {
                cuts.push(u_i);
            }
            cuts.push(u_hi);
            let mut row = 0.0;
            for c in cuts.windows(2) {
                let len = c[1] - c[0];
                for j in 0..nodes {
                    let z_t = m.quantile(c[0] + len * t[j]);
                    if masked && !d.contains(z, z_t) {
                        continue;
                    }
                    row += len * w[j] * h(z, z_t)?;
                }
            }
            Ok(w[i] * row)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(rows.iter().sum())
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Expected interference at the origin split between singles and pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceSplit {
    pub singles: f64,
    pub pairs: f64,
    pub pair_fraction: f64,
}

/// Both parts with a single evaluation of `P_D`. The singles part is
/// `(1 - P_D) λ ∫g`, the pairs part `P_D λ ∫g`.
pub fn expected_interference(
    lambda: f64,
    m: &MarkModel,
    d: &ControlSet,
    pl: &PathlossModel,
    e: &ExpectationSpec,
    q: &QuadratureSpec,
) -> Result<InterferenceSplit> {
    let tail = pathloss_tail_integral(pl)?;
    let p = pair_fraction(lambda, m, d, e, q)?;
    Ok(InterferenceSplit {
        singles: (1.0 - p) * lambda * tail,
        pairs: p * lambda * tail,
        pair_fraction: p,
    })
}

pub fn expected_interference_singles(
    lambda: f64,
    m: &MarkModel,
    d: &ControlSet,
    pl: &PathlossModel,
    e: &ExpectationSpec,
    q: &QuadratureSpec,
) -> Result<f64> {
    Ok(expected_interference(lambda, m, d, pl, e, q)?.singles)
}

pub fn expected_interference_pairs(
    lambda: f64,
    m: &MarkModel,
    d: &ControlSet,
    pl: &PathlossModel,
    e: &ExpectationSpec,
    q: &QuadratureSpec,
) -> Result<f64> {
    Ok(expected_interference(lambda, m, d, pl, e, q)?.pairs)
}

/// Where a pair kernel can be nonzero: `k(a, b) = 0` unless `a` or `b` lies in
/// the disc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSupport {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Monte Carlo estimate of
/// `λ²/2 ∫∫ k(a, b) E[1_D exp(-λ F(|a - b|, Z, Z_t))] da db`.
///
/// The separation `v = b - a` is drawn with a heavy-tailed radial law, `a`
/// uniformly on the support disc grown by `|v|`, and the marks from `m`.
#[allow(clippy::too_many_arguments)]
pub fn expected_interference_pairs_general<K>(
    lambda: f64,
    m: &MarkModel,
    d: &ControlSet,
    kernel: K,
    support: KernelSupport,
    q: &QuadratureSpec,
    n: usize,
    seed: u64,
) -> Result<VolumeEstimate>
where
    K: Fn([f64; 2], [f64; 2]) -> f64 + Sync,
{
    check_lambda(lambda)?;
    if n < 1000 {
        return Err(Error::invalid(format!(
            "Monte Carlo budget must be at least 1000, got {n}"
        )));
    }
    if !(support.radius > 0.0) || !support.radius.is_finite() {
        return Err(Error::invalid("kernel support radius must be positive"));
    }
    let a_scale = 1.0 / lambda.sqrt();
    let vals = (0..n)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = SeededRng::new(derive_seed(seed, i as u64));
            // radial density 2 s a² / (a² + s²)², i.e. planar density q_v below
            let u: f64 = rng.random_range(0.0..1.0);
            let s = a_scale * (u / (1.0 - u)).sqrt();
            let phi = rng.random_range(0.0..2.0 * PI);
            let v = [s * phi.cos(), s * phi.sin()];
            let q_v = a_scale * a_scale / (PI * (a_scale * a_scale + s * s).powi(2));

            let reach = support.radius + s;
            let rad = reach * rng.random_range(0.0f64..1.0).sqrt();
            let th = rng.random_range(0.0..2.0 * PI);
            let a = [support.center[0] + rad * th.cos(), support.center[1] + rad * th.sin()];
            let b = [a[0] + v[0], a[1] + v[1]];
            let area = PI * reach * reach;

            let k = kernel(a, b);
            let (z, z_t) = (m.sample_one(&mut rng), m.sample_one(&mut rng));
            if k == 0.0 || s == 0.0 || !d.contains(z, z_t) {
                return Ok(0.0);
            }
            let f = volume_f_slice(s, z, z_t, m, q)?.value;
            Ok(0.5 * lambda * lambda * k * (-lambda * f).exp() * area / q_v)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (value, stderr) = mean_and_stderr(&vals);
    Ok(VolumeEstimate {
        value,
        stderr,
        method: VolumeMethod::MonteCarlo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn tail_integral_examples() {
        assert_relative_eq!(
            pathloss_tail_integral(&PathlossModel::new(2.5, 1.0).unwrap()).unwrap(),
            4.0 * PI,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            pathloss_tail_integral(&PathlossModel::new(4.0, 2.0).unwrap()).unwrap(),
            PI / 4.0,
            max_relative = 1e-14
        );
        assert!(PathlossModel::new(2.0, 1.0).is_err());
        let cut = PathlossModel::new(2.5, 1.0).unwrap().truncated(0.5).unwrap();
        assert_eq!(pathloss_tail_integral(&cut).unwrap(), 0.0);
    }

    #[test]
    fn pair_probability_examples() {
        let m = MarkModel::degenerate(0.5).unwrap();
        let p = pair_probability(0.5, 0.5, 0.5, 1.0, &ControlSet::Full, &m, &q()).unwrap();
        assert_relative_eq!(p, (-0.25 * DEGENERATE_AREA_FACTOR).exp(), max_relative = 1e-14);
        assert!((p - 0.28254).abs() < 1e-3);
        assert_eq!(
            pair_probability(0.5, 0.5, 0.5, 1.0, &ControlSet::Empty, &m, &q()).unwrap(),
            0.0
        );
        let tiny = pair_probability(1e-6, 0.5, 0.5, 1.0, &ControlSet::Full, &m, &q()).unwrap();
        assert!(tiny > 1.0 - 1e-10);
    }

    #[test]
    fn degenerate_pair_fraction_closed_form() {
        let m = MarkModel::degenerate(0.5).unwrap();
        for lambda in [0.1, 1.0, 10.0] {
            let p = pair_fraction(lambda, &m, &ControlSet::Full, &ExpectationSpec::default(), &q()).unwrap();
            assert_relative_eq!(p, PI / DEGENERATE_AREA_FACTOR, max_relative = 1e-14);
            assert!((p - 0.6215).abs() < 5e-4);
        }
        let p = pair_fraction(1.0, &m, &ControlSet::Empty, &ExpectationSpec::default(), &q()).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn radial_integral_matches_degenerate_closed_form() {
        // generic machinery on the degenerate closed form: 1 / (2 λ K)
        let m = MarkModel::degenerate(0.5).unwrap();
        for lambda in [0.1, 1.0, 10.0] {
            let g = radial_integral(0.5, 0.5, lambda, &m, &q()).unwrap();
            assert_relative_eq!(g, 1.0 / (2.0 * lambda * DEGENERATE_AREA_FACTOR), max_relative = 1e-7);
        }
    }

    #[test]
    fn narrow_beta_approaches_degenerate_limit() {
        let m = MarkModel::beta_from_mean_var(0.5, 1e-4).unwrap();
        let p = pair_fraction(1.0, &m, &ControlSet::Full, &ExpectationSpec::default(), &q()).unwrap();
        assert!((p - 0.6215).abs() < 0.01, "{p}");
    }

    #[test]
    fn interference_examples() {
        let m = MarkModel::degenerate(0.5).unwrap();
        let pl = PathlossModel::new(2.5, 1.0).unwrap();
        let e = ExpectationSpec::default();
        let split = expected_interference(1.0, &m, &ControlSet::Full, &pl, &e, &q()).unwrap();
        let p_d = PI / DEGENERATE_AREA_FACTOR;
        assert_relative_eq!(split.singles, (1.0 - p_d) * 4.0 * PI, max_relative = 1e-12);
        assert_relative_eq!(split.pairs, p_d * 4.0 * PI, max_relative = 1e-12);
        assert!((split.singles - 4.7571).abs() < 1e-3);
        assert!((split.pairs - 7.8093).abs() < 1e-3);
        assert_relative_eq!(split.singles + split.pairs, 4.0 * PI, max_relative = 1e-12);
        let none = expected_interference(1.0, &m, &ControlSet::Empty, &pl, &e, &q()).unwrap();
        assert_eq!(none.pairs, 0.0);
        assert_relative_eq!(none.singles, 4.0 * PI, max_relative = 1e-14);
    }

    #[test]
    fn zero_kernel_gives_zero() {
        let m = MarkModel::degenerate(0.5).unwrap();
        let sup = KernelSupport {
            center: [0.0, 0.0],
            radius: 1.0,
        };
        let est =
            expected_interference_pairs_general(1.0, &m, &ControlSet::Full, |_, _| 0.0, sup, &q(), 1000, 1).unwrap();
        assert_eq!((est.value, est.stderr), (0.0, 0.0));
    }

    #[test]
    fn expectation_spec_validation() {
        assert!(ExpectationSpec::TensorQuadrature { nodes: 4 }.validate().is_err());
        assert!(ExpectationSpec::MonteCarlo { n: 10, seed: 0 }.validate().is_err());
    }
}
