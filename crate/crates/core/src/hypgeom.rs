//! Upper half-space geometry: the hyperbolic distance between marked atoms,
//! hyperbolic balls seen as Euclidean balls, and the lens formed by the two
//! nearest-neighbour balls of a pair.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointprocess::PlanarMetric;

/// A node: planar position (km) and a strictly positive resource mark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkedAtom {
    x: f64,
    y: f64,
    z: f64,
}

impl MarkedAtom {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid(format!("atom position ({x}, {y}) is not finite")));
        }
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::invalid(format!(
                "atom mark must be positive and finite, got {z}"
            )));
        }
        Ok(Self { x, y, z })
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }

    /// The resource mark.
    #[inline]
    pub fn z(&self) -> f64 {
        self.z
    }

    #[inline]
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// `cosh(d_H) - 1` for two atoms at squared planar distance `s2`.
///
/// This is the quantity compared during neighbour searches: it is monotone in
/// the hyperbolic distance, exactly symmetric in the marks, and free of the
/// cancellation in `cosh(d_H)` near 1.
#[inline]
pub fn cosh_dist_minus_one(s2: f64, z: f64, z_t: f64) -> f64 {
    let dz = z - z_t;
    (s2 + dz * dz) / (2.0 * z * z_t)
}

/// `acosh(1 + x)` without loss of precision for small `x`.
#[inline]
pub fn acosh1p(x: f64) -> f64 {
    if x > 1e8 {
        (1.0 + x).ln() + std::f64::consts::LN_2
    } else {
        (x + (x * (x + 2.0)).sqrt()).ln_1p()
    }
}

/// Hyperbolic distance between atoms `s` apart in the plane with marks `z`, `z_t`.
pub fn hyperbolic_distance_planar(s: f64, z: f64, z_t: f64) -> f64 {
    acosh1p(cosh_dist_minus_one(s * s, z, z_t))
}

/// Hyperbolic distance between two atoms, with the planar part measured by `metric`.
pub fn hyperbolic_distance(a: &MarkedAtom, b: &MarkedAtom, metric: &PlanarMetric) -> f64 {
    let s2 = metric.distance_squared(a.position(), b.position());
    acosh1p(cosh_dist_minus_one(s2, a.z, b.z))
}

/// A Euclidean ball in `R³`; the third coordinate is the mark axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball3 {
    pub center_x: f64,
    pub center_y: f64,
    pub center_h: f64,
    pub radius: f64,
}

impl Ball3 {
    /// Strict interior membership.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.signed_gap(p) < 0.0
    }

    /// `|p - center|² - radius²`; negative inside.
    pub fn signed_gap(&self, p: [f64; 3]) -> f64 {
        let dx = p[0] - self.center_x;
        let dy = p[1] - self.center_y;
        let dh = p[2] - self.center_h;
        dx * dx + dy * dy + dh * dh - self.radius * self.radius
    }
}

/// The Euclidean ball that coincides with the hyperbolic ball of radius `eps`
/// around `a`: centre `(x, y, z cosh eps)`, radius `z sinh eps`.
pub fn euclidean_ball(a: &MarkedAtom, eps: f64) -> Result<Ball3> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("ball radius must be positive, got {eps}")));
    }
    Ok(Ball3 {
        center_x: a.x,
        center_y: a.y,
        center_h: a.z * eps.cosh(),
        radius: a.z * eps.sinh(),
    })
}

/// Geometry of the union of the two balls `B(R, a)`, `B(R, b)` where `R` is
/// the hyperbolic distance between `a` and `b`.
///
/// Unsuffixed fields belong to `a` (mark `z`), `_t` fields to `b` (mark `z_t`).
/// `h` is the height of the cap of `a`'s ball that lies inside `b`'s ball,
/// measured along the centre line; `delta` is the angle between the vertical
/// and the direction from `a`'s centre to `b`'s centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensGeometry {
    pub z: f64,
    pub z_t: f64,
    /// Hyperbolic distance `R`.
    pub hyp_dist: f64,
    /// Planar distance between the atoms.
    pub planar: f64,
    /// Distance between the two ball centres.
    pub center_dist: f64,
    pub r: f64,
    pub r_t: f64,
    pub c: f64,
    pub c_t: f64,
    pub h: f64,
    pub h_t: f64,
    pub delta: f64,
    pub delta_t: f64,
    /// Lowest and highest points of the two balls, `z e^-R` and `z e^R`.
    pub bottom: f64,
    pub top: f64,
    pub bottom_t: f64,
    pub top_t: f64,
}

/// Lens geometry for two distinct atoms `s` apart with marks `z`, `z_t`.
pub fn lens_geometry(s: f64, z: f64, z_t: f64) -> Result<LensGeometry> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::invalid(format!(
            "planar distance must be finite and >= 0, got {s}"
        )));
    }
    if !(z > 0.0 && z_t > 0.0) || !z.is_finite() || !z_t.is_finite() {
        return Err(Error::invalid(format!("marks must be positive, got ({z}, {z_t})")));
    }
    if s == 0.0 && z == z_t {
        return Err(Error::DegeneratePair);
    }

    let x = cosh_dist_minus_one(s * s, z, z_t);
    let cosh_r = 1.0 + x;
    let sinh_r = x.sqrt() * (x + 2.0).sqrt();
    let hyp_dist = acosh1p(x);

    let dz = z - z_t;
    let center_dist = (s * s + dz * dz * cosh_r * cosh_r).sqrt();
    let r = z * sinh_r;
    let r_t = z_t * sinh_r;
    let c = z * cosh_r;
    let c_t = z_t * cosh_r;
    // c - r by subtraction loses everything once the marks are decades apart
    let exp_r = cosh_r + sinh_r;

    let overlap = r + r_t - center_dist;
    let h = (r_t - r + center_dist) * overlap / (2.0 * center_dist);
    let h_t = (r - r_t + center_dist) * overlap / (2.0 * center_dist);

    let tilt = ((c_t - c) / center_dist).clamp(-1.0, 1.0);
    let delta = FRAC_PI_2 - tilt.asin();
    let delta_t = FRAC_PI_2 - (-tilt).asin();

    Ok(LensGeometry {
        z,
        z_t,
        hyp_dist,
        planar: s,
        center_dist,
        r,
        r_t,
        c,
        c_t,
        h,
        h_t,
        delta,
        delta_t,
        bottom: z / exp_r,
        top: z * exp_r,
        bottom_t: z_t / exp_r,
        top_t: z_t * exp_r,
    })
}

impl LensGeometry {
    /// Radii of the horizontal cross-sections of the two balls at height `w`
    /// (zero where the plane misses a ball).
    #[inline]
    pub fn slice_radii(&self, w: f64) -> (f64, f64) {
        let a = (w - self.bottom) * (self.top - w);
        let b = (w - self.bottom_t) * (self.top_t - w);
        (a.max(0.0).sqrt(), b.max(0.0).sqrt())
    }

    /// Area of the union's cross-section at height `w`.
    #[inline]
    pub fn slice_area(&self, w: f64) -> f64 {
        let (p, q) = self.slice_radii(w);
        circle_union_area(p, q, self.planar)
    }

    /// Heights spanned by the union.
    pub fn height_range(&self) -> (f64, f64) {
        (self.bottom.min(self.bottom_t), self.top.max(self.top_t))
    }

    /// Heights at which the cross-section area is not smooth: the poles of both
    /// balls and the lowest and highest points of the circle where the two
    /// spheres meet (where the slice disks become tangent).
    pub fn kink_heights(&self) -> Vec<f64> {
        let d = self.center_dist;
        let to_plane = (d * d + self.r * self.r - self.r_t * self.r_t) / (2.0 * d);
        let ring = (self.r * self.r - to_plane * to_plane).max(0.0).sqrt();
        let cos_d = (self.c_t - self.c) / d;
        let sin_d = self.planar / d;
        let mid = self.c + to_plane * cos_d;
        vec![
            self.bottom,
            self.top,
            self.bottom_t,
            self.top_t,
            mid - ring * sin_d,
            mid + ring * sin_d,
        ]
    }
}

/// Area of the union of two disks with radii `rho1`, `rho2` whose centres are
/// `s` apart.
pub fn circle_union_area(rho1: f64, rho2: f64, s: f64) -> f64 {
    let (big, small) = if rho1 >= rho2 { (rho1, rho2) } else { (rho2, rho1) };
    if s >= big + small {
        return PI * (big * big + small * small);
    }
    if s <= big - small {
        return PI * big * big;
    }
    let cos_big = ((s * s + big * big - small * small) / (2.0 * s * big)).clamp(-1.0, 1.0);
    let cos_small = ((s * s + small * small - big * big) / (2.0 * s * small)).clamp(-1.0, 1.0);
    let kite = (-s + big + small) * (s + big - small) * (s - big + small) * (s + big + small);
    let lens = big * big * cos_big.acos() + small * small * cos_small.acos() - 0.5 * kite.max(0.0).sqrt();
    PI * (big * big + small * small) - lens
}
