//! Hyperbolic nearest neighbours and the partition of a pattern into
//! cooperative pairs and singles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypgeom::{cosh_dist_minus_one, MarkedAtom};
use crate::marks::ControlSet;
use crate::pointprocess::PlanarMetric;

/// How nearest neighbours are searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborSearch {
    BruteForce,
    /// Uniform grid on the plane; falls back to brute force for tiny patterns.
    #[default]
    Grid,
}

/// Nearest neighbour of atom `i`; ties go to the smaller index.
pub fn nearest_neighbor(atoms: &[MarkedAtom], i: usize, metric: &PlanarMetric) -> Result<usize> {
    if atoms.len() < 2 {
        return Err(Error::invalid("nearest neighbour needs at least two atoms"));
    }
    if i >= atoms.len() {
        return Err(Error::invalid(format!("atom index {i} out of range ({})", atoms.len())));
    }
    Ok(brute_nn(atoms, i, metric))
}

fn brute_nn(atoms: &[MarkedAtom], i: usize, metric: &PlanarMetric) -> usize {
    let a = atoms[i];
    let mut best = (f64::INFINITY, usize::MAX);
    for (j, b) in atoms.iter().enumerate() {
        if j == i {
            continue;
        }
        let x = cosh_dist_minus_one(metric.distance_squared(a.position(), b.position()), a.z(), b.z());
        if x < best.0 {
            best = (x, j);
        }
    }
    best.1
}

/// Nearest neighbour of every atom.
pub fn all_nearest_neighbors(
    atoms: &[MarkedAtom],
    metric: &PlanarMetric,
    search: NeighborSearch,
) -> Result<Vec<usize>> {
    if atoms.len() < 2 {
        return Err(Error::invalid("nearest neighbour needs at least two atoms"));
    }
    if search == NeighborSearch::BruteForce || atoms.len() < 64 {
        return Ok((0..atoms.len())
            .into_par_iter()
            .map(|i| brute_nn(atoms, i, metric))
            .collect());
    }
    let grid = Grid::build(atoms, metric);
    Ok((0..atoms.len())
        .into_par_iter()
        .map(|i| grid.nearest(atoms, i, metric))
        .collect())
}

struct Grid {
    origin: [f64; 2],
    nx: usize,
    ny: usize,
    cell_w: f64,
    cell_h: f64,
    wrap: bool,
    z_max: f64,
    // atoms of cell k are order[start[k]..start[k + 1]]
    start: Vec<usize>,
    order: Vec<usize>,
}

impl Grid {
    fn build(atoms: &[MarkedAtom], metric: &PlanarMetric) -> Self {
        let (origin, w, h, wrap) = match metric.periods() {
            Some((w, h)) => ([0.0, 0.0], w, h, true),
            None => {
                let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
                for a in atoms {
                    let p = a.position();
                    for k in 0..2 {
                        lo[k] = lo[k].min(p[k]);
                        hi[k] = hi[k].max(p[k]);
                    }
                }
                (lo, (hi[0] - lo[0]).max(1e-12), (hi[1] - lo[1]).max(1e-12), false)
            }
        };
        // about two atoms per cell
        let target = (w * h * 2.0 / atoms.len() as f64).sqrt();
        let nx = ((w / target).floor() as usize).clamp(1, 4096);
        let ny = ((h / target).floor() as usize).clamp(1, 4096);
        let (cell_w, cell_h) = (w / nx as f64, h / ny as f64);

        let cell_of = |a: &MarkedAtom| {
            let p = a.position();
            let cx = (((p[0] - origin[0]) / cell_w) as usize).min(nx - 1);
            let cy = (((p[1] - origin[1]) / cell_h) as usize).min(ny - 1);
            cy * nx + cx
        };
        let mut start = vec![0usize; nx * ny + 1];
        for a in atoms {
            start[cell_of(a) + 1] += 1;
        }
        for k in 0..nx * ny {
            start[k + 1] += start[k];
        }
        let mut fill = start.clone();
        let mut order = vec![0usize; atoms.len()];
        for (i, a) in atoms.iter().enumerate() {
            let c = cell_of(a);
            order[fill[c]] = i;
            fill[c] += 1;
        }
        Grid {
            origin,
            nx,
            ny,
            cell_w,
            cell_h,
            wrap,
            z_max: atoms.iter().map(|a| a.z()).fold(0.0, f64::max),
            start,
            order,
        }
    }

    fn nearest(&self, atoms: &[MarkedAtom], i: usize, metric: &PlanarMetric) -> usize {
        let a = atoms[i];
        let p = a.position();
        let hx = ((((p[0] - self.origin[0]) / self.cell_w) as isize).max(0) as usize).min(self.nx - 1) as isize;
        let hy = ((((p[1] - self.origin[1]) / self.cell_h) as isize).max(0) as usize).min(self.ny - 1) as isize;
        let unit = self.cell_w.min(self.cell_h);
        let max_ring = self.nx.max(self.ny) as isize;
        // on a torus every cell is visited once, through its offset in
        // [lo, lo + n) on each axis
        let lo_x = -((self.nx as isize - 1) / 2);
        let lo_y = -((self.ny as isize - 1) / 2);
        let mut best = (f64::INFINITY, usize::MAX);

        for k in 0..=max_ring {
            for (cx, cy) in ring(hx, hy, k) {
                let (cx, cy) = if self.wrap {
                    let (dx, dy) = (cx - hx, cy - hy);
                    if dx < lo_x || dx >= lo_x + self.nx as isize || dy < lo_y || dy >= lo_y + self.ny as isize {
                        continue;
                    }
                    (cx.rem_euclid(self.nx as isize), cy.rem_euclid(self.ny as isize))
                } else if cx < 0 || cy < 0 || cx >= self.nx as isize || cy >= self.ny as isize {
                    continue;
                } else {
                    (cx, cy)
                };
                let cell = cy as usize * self.nx + cx as usize;
                for &j in &self.order[self.start[cell]..self.start[cell + 1]] {
                    if j == i {
                        continue;
                    }
                    let b = atoms[j];
                    let x = cosh_dist_minus_one(metric.distance_squared(p, b.position()), a.z(), b.z());
                    if x < best.0 || (x == best.0 && j < best.1) {
                        best = (x, j);
                    }
                }
            }
            // anything outside rings 0..=k is at least k cells away in the plane
            let reach = k as f64 * unit;
            if reach * reach / (2.0 * a.z() * self.z_max) > best.0 {
                break;
            }
        }
        best.1
    }
}

/// Cells at Chebyshev distance exactly `k` from `(x, y)`.
fn ring(x: isize, y: isize, k: isize) -> impl Iterator<Item = (isize, isize)> {
    let side = (-k..=k).flat_map(move |d| [(x + d, y - k), (x + d, y + k)]);
    let rest = (-k + 1..k).flat_map(move |d| [(x - k, y + d), (x + k, y + d)]);
    let single = (k == 0).then_some((x, y));
    single.into_iter().chain(side.filter(move |_| k > 0)).chain(rest)
}

/// Pairs and singles of a pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPartition {
    pub pairs: Vec<[usize; 2]>,
    pub singles: Vec<usize>,
    #[serde(rename = "n")]
    pub pattern_size: usize,
}

impl ClusterPartition {
    /// Fraction of atoms that sit in a pair; 0 for an empty pattern.
    pub fn pair_fraction(&self) -> f64 {
        if self.pattern_size == 0 {
            0.0
        } else {
            2.0 * self.pairs.len() as f64 / self.pattern_size as f64
        }
    }

    /// Membership flag per atom.
    pub fn paired_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.pattern_size];
        for &[i, j] in &self.pairs {
            mask[i] = true;
            mask[j] = true;
        }
        mask
    }

    /// Checks that pairs and singles cover `0..n` exactly once with `i < j`.
    pub fn check_cover(&self) -> Result<()> {
        let mut hits = vec![0u8; self.pattern_size];
        let mut mark = |k: usize| -> Result<()> {
            let slot = hits
                .get_mut(k)
                .ok_or_else(|| Error::invalid(format!("index {k} out of range")))?;
            *slot += 1;
            Ok(())
        };
        for &[i, j] in &self.pairs {
            if i >= j {
                return Err(Error::invalid(format!("pair ({i}, {j}) is not ordered")));
            }
            mark(i)?;
            mark(j)?;
        }
        for &k in &self.singles {
            mark(k)?;
        }
        match hits.iter().position(|&h| h != 1) {
            Some(k) => Err(Error::invalid(format!("index {k} covered {} times", hits[k]))),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Partition from precomputed nearest neighbours, so that several control
/// sets can share one neighbour search.
pub fn partition_from_neighbors(atoms: &[MarkedAtom], nn: &[usize], d: &ControlSet) -> ClusterPartition {
    let mut pairs = Vec::new();
    let mut singles = Vec::new();
    for i in 0..atoms.len() {
        let j = nn.get(i).copied().unwrap_or(usize::MAX);
        let mutual = j != usize::MAX && nn[j] == i && d.contains(atoms[i].z(), atoms[j].z());
        if !mutual {
            singles.push(i);
        } else if i < j {
            pairs.push([i, j]);
        }
    }
    ClusterPartition {
        pairs,
        singles,
        pattern_size: atoms.len(),
    }
}

/// MNNR partition with the default neighbour search.
pub fn mnnr_partition(atoms: &[MarkedAtom], d: &ControlSet, metric: &PlanarMetric) -> ClusterPartition {
    mnnr_partition_with(atoms, d, metric, NeighborSearch::default())
}

pub fn mnnr_partition_with(
    atoms: &[MarkedAtom],
    d: &ControlSet,
    metric: &PlanarMetric,
    search: NeighborSearch,
) -> ClusterPartition {
    if atoms.len() < 2 {
        return ClusterPartition {
            pairs: Vec::new(),
            singles: (0..atoms.len()).collect(),
            pattern_size: atoms.len(),
        };
    }
    let nn = all_nearest_neighbors(atoms, metric, search).expect("at least two atoms");
    partition_from_neighbors(atoms, &nn, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marks::MarkModel;
    use crate::pointprocess::{sample_ppp, Boundary, Window};
    use crate::rng::SeededRng;

    fn atoms(v: &[(f64, f64, f64)]) -> Vec<MarkedAtom> {
        v.iter().map(|&(x, y, z)| MarkedAtom::new(x, y, z).unwrap()).collect()
    }

    #[test]
    fn nearest_neighbor_examples() {
        let open = PlanarMetric::open();
        let a = atoms(&[(0.0, 0.0, 1.0), (1.0, 0.0, 1.0), (5.0, 0.0, 1.0)]);
        assert_eq!(nearest_neighbor(&a, 0, &open).unwrap(), 1);
        let b = atoms(&[(0.0, 0.0, 1.0), (0.0, 0.0, 4.0), (0.1, 0.0, 1.0)]);
        assert_eq!(nearest_neighbor(&b, 0, &open).unwrap(), 2);
        assert!(nearest_neighbor(&a[..1], 0, &open).is_err());
    }

    #[test]
    fn ties_go_to_smaller_index() {
        let a = atoms(&[(0.0, 0.0, 1.0), (1.0, 0.0, 1.0), (-1.0, 0.0, 1.0)]);
        assert_eq!(nearest_neighbor(&a, 0, &PlanarMetric::open()).unwrap(), 1);
    }

    #[test]
    fn partition_examples() {
        let open = PlanarMetric::open();
        let two = atoms(&[(0.0, 0.0, 1.0), (1.0, 0.0, 1.0)]);
        assert_eq!(mnnr_partition(&two, &ControlSet::Full, &open).pairs, vec![[0, 1]]);

        let line = atoms(&[(0.0, 0.0, 1.0), (1.0, 0.0, 1.0), (2.5, 0.0, 1.0)]);
        let p = mnnr_partition(&line, &ControlSet::Full, &open);
        assert_eq!(p.pairs, vec![[0, 1]]);
        assert_eq!(p.singles, vec![2]);
        assert!(mnnr_partition(&line, &ControlSet::Empty, &open).pairs.is_empty());

        let one = atoms(&[(0.0, 0.0, 1.0)]);
        let p = mnnr_partition(&one, &ControlSet::Full, &open);
        assert_eq!((p.singles.clone(), p.pattern_size), (vec![0], 1));
        p.check_cover().unwrap();
    }

    #[test]
    fn json_layout() {
        let p = ClusterPartition {
            pairs: vec![[0, 1]],
            singles: vec![2],
            pattern_size: 3,
        };
        assert_eq!(p.to_json().unwrap(), r#"{"pairs":[[0,1]],"singles":[2],"n":3}"#);
        assert!((p.pair_fraction() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn grid_matches_brute_force() {
        let m = MarkModel::beta_from_mean_var(0.5, 0.1).unwrap();
        for (seed, boundary) in [(1, Boundary::Torus), (2, Boundary::Open), (3, Boundary::Torus)] {
            let w = Window::new(20.0, 12.0, boundary).unwrap();
            let p = sample_ppp(1.5, &w, &m, &mut SeededRng::new(seed)).unwrap();
            let metric = w.metric();
            let brute = all_nearest_neighbors(p.atoms(), &metric, NeighborSearch::BruteForce).unwrap();
            let grid = all_nearest_neighbors(p.atoms(), &metric, NeighborSearch::Grid).unwrap();
            assert_eq!(brute, grid, "seed {seed}");
        }
    }

    #[test]
    fn cover_check_catches_errors() {
        let bad = ClusterPartition {
            pairs: vec![[0, 1]],
            singles: vec![1],
            pattern_size: 2,
        };
        assert!(bad.check_cover().is_err());
    }
}
