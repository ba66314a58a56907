//! The mark-weighted volume `F(s, z, z_t)` of the union of the two
//! nearest-neighbour balls of a pair of atoms.
//!
//! `F` carries no intensity factor: the probability that no third atom falls
//! in the union is `exp(-lambda * F)`.

use std::cell::Cell;
use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hypgeom::{lens_geometry, LensGeometry};
use crate::marks::{MarkKind, MarkModel};
use crate::numerics::quad::{integrate, QuadOutcome, QuadratureSpec};
use crate::rng::SeededRng;

/// `4π/3 + √3/2`: with equal degenerate marks `F(s) = s² · DEGENERATE_AREA_FACTOR`.
pub const DEGENERATE_AREA_FACTOR: f64 = 4.0 * PI / 3.0 + 0.866_025_403_784_438_6;

/// Density evaluations allowed per cap in the triple-integral form before it
/// gives up; strongly singular densities would otherwise run for minutes.
const CAP_EVAL_BUDGET: u64 = 50_000_000;

/// Minimum sample count for the Monte Carlo evaluator.
pub const MIN_MC_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeMethod {
    Slice,
    PaperTriple,
    MonteCarlo,
    DegenerateClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeEstimate {
    pub value: f64,
    /// Zero for deterministic methods.
    pub stderr: f64,
    pub method: VolumeMethod,
}

// Both marks in ascending order so that every evaluator is exactly symmetric.
fn canonical(s: f64, z: f64, z_t: f64) -> Result<LensGeometry> {
    lens_geometry(s, z.min(z_t), z.max(z_t))
}

/// `F` by integrating the area of horizontal cross-sections of the union
/// against the mark density.
pub fn volume_f_slice(s: f64, z: f64, z_t: f64, m: &MarkModel, q: &QuadratureSpec) -> Result<VolumeEstimate> {
    q.validate()?;
    let g = canonical(s, z, z_t)?;
    if let MarkKind::Degenerate { mu } = m.kind() {
        let value = if z == mu && z_t == mu {
            s * s * DEGENERATE_AREA_FACTOR
        } else {
            g.slice_area(mu)
        };
        return Ok(VolumeEstimate {
            value,
            stderr: 0.0,
            method: VolumeMethod::DegenerateClosedForm,
        });
    }
    let (lo, hi) = g.height_range();
    let value = m
        .integrate_against(|w| g.slice_area(w), lo, hi, &g.kink_heights(), q)
        .into_result("union volume (slice form)")?;
    Ok(VolumeEstimate {
        value: value.max(0.0),
        stderr: 0.0,
        method: VolumeMethod::Slice,
    })
}

/// `F` as the two ball integrals minus the two lens caps, each cap written as
/// a triple integral in cylindrical coordinates about the line of centres.
///
/// Far more expensive than [`volume_f_slice`]; kept as an independent check.
/// Marks with a singular density at an end of their support converge slowly
/// here.
pub fn volume_f_paper(s: f64, z: f64, z_t: f64, m: &MarkModel, q: &QuadratureSpec) -> Result<VolumeEstimate> {
    q.validate()?;
    if m.is_degenerate() {
        return Err(Error::Unsupported(
            "the triple-integral form needs a mark density; use the slice form".into(),
        ));
    }
    let g = canonical(s, z, z_t)?;
    let levels = m.hint_points();

    // π ∫ f(w + c) (r² - w²) dw with w + c = u and r² - w² = (u - bottom)(top - u)
    let ball = |lo: f64, hi: f64| m.integrate_against(|u| PI * (u - lo) * (hi - u), lo, hi, &[], q);
    let parts = [
        ball(g.bottom, g.top),
        ball(g.bottom_t, g.top_t),
        cap_integral(m, g.c, g.r, g.h, g.delta, &levels, q),
        cap_integral(m, g.c_t, g.r_t, g.h_t, g.delta_t, &levels, q),
    ];
    let value = parts[0].value + parts[1].value - parts[2].value - parts[3].value;
    let error: f64 = parts.iter().map(|p| p.error).sum();
    if parts.iter().any(|p| !p.converged) {
        return Err(Error::NonConvergence {
            what: "union volume (triple-integral form)".into(),
            estimate: value,
            error,
        });
    }
    Ok(VolumeEstimate {
        value: value.max(0.0),
        stderr: 0.0,
        method: VolumeMethod::PaperTriple,
    })
}

/// `∫_{r-h}^{r} ∫_0^{2π} ∫_0^{√(r²-w²)} f(c + w cos δ - t cos θ sin δ) t dt dθ dw`
fn cap_integral(m: &MarkModel, c: f64, r: f64, h: f64, delta: f64, levels: &[f64], q: &QuadratureSpec) -> QuadOutcome {
    let (cos_d, sin_d) = (delta.cos(), delta.sin());
    let q_mid = q.tightened(0.1);
    let q_in = q.tightened(0.01);
    let inner_ok = Cell::new(true);
    let evals = Cell::new(0u64);

    let inner = |axis_h: f64, radius: f64, theta: f64| {
        if evals.get() > CAP_EVAL_BUDGET {
            inner_ok.set(false);
            return 0.0;
        }
        let k = theta.cos() * sin_d;
        let breaks: Vec<f64> = if k != 0.0 {
            levels.iter().map(|e| (axis_h - e) / k).collect()
        } else {
            Vec::new()
        };
        let o = integrate(
            |t| {
                evals.set(evals.get() + 1);
                m.pdf(axis_h - t * k) * t
            },
            0.0,
            radius,
            &breaks,
            &q_in,
        );
        if !o.converged {
            inner_ok.set(false);
        }
        o.value
    };

    let middle = |w: f64| {
        let radius = (r * r - w * w).max(0.0).sqrt();
        let axis_h = c + w * cos_d;
        let mut breaks = Vec::new();
        if radius > 0.0 && sin_d > 0.0 {
            for e in levels {
                let t = (axis_h - e) / (radius * sin_d);
                if t.abs() <= 1.0 {
                    breaks.push(t.acos());
                }
            }
        }
        let o = integrate(|th| inner(axis_h, radius, th), 0.0, PI, &breaks, &q_mid);
        if !o.converged {
            inner_ok.set(false);
        }
        2.0 * o.value
    };

    // the slab at axial offset w first touches / leaves the level e here
    let mut breaks = Vec::new();
    for e in levels {
        let u = e - c;
        if cos_d != 0.0 {
            breaks.push(u / cos_d);
        }
        if u.abs() <= r {
            let side = sin_d * (r * r - u * u).sqrt();
            breaks.push(u * cos_d - side);
            breaks.push(u * cos_d + side);
        }
    }
    let mut out = integrate(middle, r - h, r, &breaks, q);
    out.converged &= inner_ok.get();
    out
}

/// Monte Carlo estimate of `F`: draw a height from the mark law, then a point
/// uniformly on the bounding rectangle of that cross-section of the union.
///
/// Degenerate marks reduce to a planar area estimate at height `mu`.
pub fn volume_f_mc(s: f64, z: f64, z_t: f64, m: &MarkModel, n: usize, rng: &mut SeededRng) -> Result<VolumeEstimate> {
    if n < MIN_MC_SAMPLES {
        return Err(Error::invalid(format!(
            "Monte Carlo volume needs at least {MIN_MC_SAMPLES} samples, got {n}"
        )));
    }
    let g = canonical(s, z, z_t)?;
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for i in 0..n {
        let w = m.sample_one(rng);
        let (p, q) = g.slice_radii(w);
        let x_lo = (-p).min(s - q);
        let x_hi = p.max(s + q);
        let y_hi = p.max(q);
        let mut val = 0.0;
        if y_hi > 0.0 && x_hi > x_lo {
            let x = rng.random_range(x_lo..x_hi);
            let y = rng.random_range(-y_hi..y_hi);
            if x * x + y * y < p * p || (x - s) * (x - s) + y * y < q * q {
                val = (x_hi - x_lo) * 2.0 * y_hi;
            }
        }
        let k = (i + 1) as f64;
        let dev = val - mean;
        mean += dev / k;
        m2 += dev * (val - mean);
    }
    let var = m2 / (n - 1) as f64;
    Ok(VolumeEstimate {
        value: mean,
        stderr: (var / n as f64).sqrt(),
        method: VolumeMethod::MonteCarlo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn q() -> QuadratureSpec {
        QuadratureSpec::new(1e-11, 1e-10, 50).unwrap()
    }

    #[test]
    fn degenerate_closed_form() {
        let m = MarkModel::degenerate(0.5).unwrap();
        let f = volume_f_slice(1.0, 0.5, 0.5, &m, &q()).unwrap();
        assert_eq!(f.method, VolumeMethod::DegenerateClosedForm);
        assert_relative_eq!(f.value, 5.054815, epsilon = 1e-6);
        for s in [0.01, 0.3, 2.0, 17.0] {
            let f = volume_f_slice(s, 0.5, 0.5, &m, &q()).unwrap().value;
            assert_relative_eq!(f / (s * s), DEGENERATE_AREA_FACTOR, max_relative = 1e-15);
        }
    }

    #[test]
    fn degenerate_slice_agrees_with_generic_slice_area() {
        // the closed form is the slice area at height mu
        let g = lens_geometry(0.7, 0.5, 0.5).unwrap();
        assert_relative_eq!(g.slice_area(0.5), 0.49 * DEGENERATE_AREA_FACTOR, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_pair_rejected() {
        let m = MarkModel::uniform(1.0, 3.0).unwrap();
        assert!(matches!(
            volume_f_slice(0.0, 2.0, 2.0, &m, &q()),
            Err(Error::DegeneratePair)
        ));
        let mut rng = SeededRng::new(1);
        assert!(volume_f_mc(0.0, 2.0, 2.0, &m, 1000, &mut rng).is_err());
    }

    #[test]
    fn stacked_atoms_have_finite_volume() {
        let m = MarkModel::uniform(1.0, 3.0).unwrap();
        let f = volume_f_slice(0.0, 1.0, 2.0, &m, &q()).unwrap().value;
        assert!(f.is_finite() && f > 0.0);
        let mut rng = SeededRng::new(3);
        let mc = volume_f_mc(0.0, 1.0, 2.0, &m, 200_000, &mut rng).unwrap();
        assert!((mc.value - f).abs() < 4.0 * mc.stderr);
    }

    #[test]
    fn slice_and_triple_forms_agree() {
        let m = MarkModel::uniform(1.0, 3.0).unwrap();
        let a = volume_f_slice(0.8, 1.5, 2.0, &m, &q()).unwrap().value;
        let b = volume_f_paper(0.8, 1.5, 2.0, &m, &q()).unwrap().value;
        assert_relative_eq!(a, b, max_relative = 1e-6);

        let m = MarkModel::beta_from_mean_var(0.5, 0.05).unwrap();
        let a = volume_f_slice(0.5, 0.4, 0.6, &m, &q()).unwrap().value;
        let b = volume_f_paper(0.5, 0.4, 0.6, &m, &q()).unwrap().value;
        assert_relative_eq!(a, b, max_relative = 1e-6);
    }

    #[test]
    fn triple_form_rejects_degenerate_marks() {
        let m = MarkModel::degenerate(0.5).unwrap();
        assert!(matches!(
            volume_f_paper(1.0, 0.5, 0.5, &m, &q()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn ball_below_zero_height_is_finite() {
        // large separation: the balls reach far below the support (0, 1)
        let m = MarkModel::beta_from_mean_var(0.5, 0.05).unwrap();
        let g = lens_geometry(3.0, 0.3, 0.6).unwrap();
        assert!(g.c - g.r < 0.0 || g.c_t - g.r_t < 0.0 || g.height_range().0 < 0.05);
        let f = volume_f_paper(3.0, 0.3, 0.6, &m, &q()).unwrap().value;
        assert!(f.is_finite() && f > 0.0);
    }

    #[test]
    fn mc_covers_closed_form() {
        let m = MarkModel::degenerate(0.5).unwrap();
        let mut rng = SeededRng::new(7);
        let mc = volume_f_mc(1.0, 0.5, 0.5, &m, 1_000_000, &mut rng).unwrap();
        assert!((mc.value - DEGENERATE_AREA_FACTOR).abs() < 3.0 * mc.stderr);
        assert!(volume_f_mc(1.0, 0.5, 0.5, &m, 999, &mut rng).is_err());
    }

    #[test]
    fn mark_swap_symmetry() {
        let m = MarkModel::uniform(1.0, 3.0).unwrap();
        let a = volume_f_slice(0.8, 1.5, 2.0, &m, &QuadratureSpec::default())
            .unwrap()
            .value;
        let b = volume_f_slice(0.8, 2.0, 1.5, &m, &QuadratureSpec::default())
            .unwrap()
            .value;
        assert_relative_eq!(a, b, max_relative = 1e-10);
    }
}
