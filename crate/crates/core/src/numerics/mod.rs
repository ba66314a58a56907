//! Quadrature and the union-volume function `F`.

pub mod quad;
pub mod volume;

pub use quad::{adaptive_quad, adaptive_quad_breaks, gauss_legendre_unit, integrate, QuadOutcome, QuadratureSpec};
pub use volume::{volume_f_mc, volume_f_paper, volume_f_slice, VolumeEstimate, VolumeMethod, DEGENERATE_AREA_FACTOR};
