//! Observation windows, planar metrics and homogeneous marked Poisson
//! patterns, plus the `x,y,z` pattern file format.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypgeom::MarkedAtom;
use crate::marks::MarkModel;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Periodic wrap in both directions.
    #[default]
    Torus,
    Open,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Torus => "torus",
            Boundary::Open => "open",
        })
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "torus" => Ok(Boundary::Torus),
            "open" => Ok(Boundary::Open),
            other => Err(Error::invalid(format!("unknown boundary `{other}` (torus|open)"))),
        }
    }
}

/// Rectangle `[0, width] x [0, height]` in km.
///
/// With an open boundary, atoms closer than `guard` to the border take part as
/// neighbours but are left out of statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    width: f64,
    height: f64,
    boundary: Boundary,
    guard: f64,
}

impl Window {
    pub fn new(width: f64, height: f64, boundary: Boundary) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
            return Err(Error::invalid(format!(
                "window must have positive size, got {width}x{height}"
            )));
        }
        Ok(Self {
            width,
            height,
            boundary,
            guard: 0.0,
        })
    }

    pub fn with_guard(mut self, guard: f64) -> Result<Self> {
        if !(guard >= 0.0) || 2.0 * guard >= self.width.min(self.height) {
            return Err(Error::invalid(format!("guard margin {guard} does not fit the window")));
        }
        self.guard = guard;
        Ok(self)
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn guard(&self) -> f64 {
        self.guard
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * self.width, 0.5 * self.height]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= 0.0 && p[0] <= self.width && p[1] >= 0.0 && p[1] <= self.height
    }

    /// Whether `p` counts towards statistics (always true on a torus).
    pub fn in_core(&self, p: [f64; 2]) -> bool {
        match self.boundary {
            Boundary::Torus => true,
            Boundary::Open => {
                let g = self.guard;
                p[0] >= g && p[0] <= self.width - g && p[1] >= g && p[1] <= self.height - g
            }
        }
    }

    pub fn metric(&self) -> PlanarMetric {
        PlanarMetric {
            width: self.width,
            height: self.height,
            boundary: self.boundary,
        }
    }
}

impl FromStr for Window {
    type Err = Error;

    /// Parses `WxH`, e.g. `30x30`; the boundary defaults to torus.
    fn from_str(s: &str) -> Result<Self> {
        let (w, h) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::invalid(format!("window `{s}` is not of the form WxH")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("window `{s}` is not of the form WxH")))
        };
        Window::new(parse(w)?, parse(h)?, Boundary::Torus)
    }
}

/// Planar distance `d_E`, plain or wrapped on the window's torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarMetric {
    width: f64,
    height: f64,
    boundary: Boundary,
}

impl PlanarMetric {
    /// Euclidean distance on the whole plane.
    pub fn open() -> Self {
        Self {
            width: f64::INFINITY,
            height: f64::INFINITY,
            boundary: Boundary::Open,
        }
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Period lengths on a torus; `None` for the open plane.
    pub fn periods(&self) -> Option<(f64, f64)> {
        match self.boundary {
            Boundary::Torus => Some((self.width, self.height)),
            Boundary::Open => None,
        }
    }

    #[inline]
    pub fn distance_squared(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        let mut dx = (p[0] - q[0]).abs();
        let mut dy = (p[1] - q[1]).abs();
        if self.boundary == Boundary::Torus {
            dx = dx.min(self.width - dx);
            dy = dy.min(self.height - dy);
        }
        dx * dx + dy * dy
    }

    #[inline]
    pub fn distance(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        self.distance_squared(p, q).sqrt()
    }
}

pub fn planar_distance(metric: &PlanarMetric, p: [f64; 2], q: [f64; 2]) -> f64 {
    metric.distance(p, q)
}

/// A realisation of the marked process on a window. Atom indices are the
/// generation order.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedPattern {
    atoms: Vec<MarkedAtom>,
    window: Window,
    intensity: f64,
    seed: u64,
}

impl MarkedPattern {
    pub fn new(atoms: Vec<MarkedAtom>, window: Window, intensity: f64, seed: u64) -> Result<Self> {
        if !(intensity > 0.0) || !intensity.is_finite() {
            return Err(Error::invalid(format!("intensity must be positive, got {intensity}")));
        }
        if let Some((i, a)) = atoms.iter().enumerate().find(|(_, a)| !window.contains(a.position())) {
            return Err(Error::invalid(format!(
                "atom {i} at ({}, {}) lies outside the {}x{} window",
                a.x(),
                a.y(),
                window.width,
                window.height
            )));
        }
        Ok(Self {
            atoms,
            window,
            intensity,
            seed,
        })
    }

    pub fn atoms(&self) -> &[MarkedAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn metric(&self) -> PlanarMetric {
        self.window.metric()
    }
}

/// Homogeneous Poisson process of intensity `lambda` on `w`, marked i.i.d.
/// from `m`.
pub fn sample_ppp(lambda: f64, w: &Window, m: &MarkModel, rng: &mut SeededRng) -> Result<MarkedPattern> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("intensity must be positive, got {lambda}")));
    }
    let count = Poisson::new(lambda * w.area())
        .map_err(|e| Error::invalid(format!("Poisson mean {}: {e}", lambda * w.area())))?
        .sample(rng) as usize;
    let mut atoms = Vec::with_capacity(count);
    for _ in 0..count {
        let x = rng.random_range(0.0..w.width);
        let y = rng.random_range(0.0..w.height);
        let z = m.sample_one(rng);
        atoms.push(MarkedAtom::new(x, y, z)?);
    }
    MarkedPattern::new(atoms, *w, lambda, rng.seed())
}

/// Sidecar metadata stored next to a pattern CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternMeta {
    pub width: f64,
    pub height: f64,
    pub boundary: Boundary,
    pub lambda: f64,
    pub seed: u64,
}

/// `points.csv` -> `points.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the atoms as `x,y,z` rows and the sidecar JSON.
pub fn write_pattern(p: &MarkedPattern, csv_path: &Path) -> Result<()> {
    write_atoms(p.atoms(), csv_path)?;
    let meta = PatternMeta {
        width: p.window.width,
        height: p.window.height,
        boundary: p.window.boundary,
        lambda: p.intensity,
        seed: p.seed,
    };
    let side = sidecar_path(csv_path);
    let mut f = File::create(&side).map_err(io_err(&side))?;
    serde_json::to_writer_pretty(&mut f, &meta)?;
    writeln!(f).map_err(io_err(&side))
}

pub fn write_atoms(atoms: &[MarkedAtom], csv_path: &Path) -> Result<()> {
    let file = File::create(csv_path).map_err(io_err(csv_path))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Parse {
        path: csv_path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    };
    w.write_record(["x", "y", "z"]).map_err(csv_err)?;
    for a in atoms {
        w.write_record([a.x().to_string(), a.y().to_string(), a.z().to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(csv_path))
}

/// Reads `x,y,z` rows. Errors name the offending line (the header is line 1).
pub fn read_atoms(csv_path: &Path) -> Result<Vec<MarkedAtom>> {
    let file = File::open(csv_path).map_err(io_err(csv_path))?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: csv_path.to_path_buf(),
        line,
        message,
    };
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = r.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "y", "z"] {
        return Err(parse_err(
            1,
            format!(
                "expected header `x,y,z`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut atoms = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut vals = [0.0; 3];
        for (k, v) in vals.iter_mut().enumerate() {
            let field = &rec[k];
            *v = field
                .parse()
                .map_err(|_| parse_err(line, format!("`{field}` is not a number")))?;
        }
        let atom = MarkedAtom::new(vals[0], vals[1], vals[2]).map_err(|e| parse_err(line, e.to_string()))?;
        atoms.push(atom);
    }
    Ok(atoms)
}

pub fn read_meta(path: &Path) -> Result<PatternMeta> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

/// Reads a pattern CSV together with its sidecar JSON.
pub fn read_pattern(csv_path: &Path) -> Result<MarkedPattern> {
    let meta = read_meta(&sidecar_path(csv_path))?;
    let window = Window::new(meta.width, meta.height, meta.boundary)?;
    MarkedPattern::new(read_atoms(csv_path)?, window, meta.lambda, meta.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        let torus = Window::new(10.0, 10.0, Boundary::Torus).unwrap().metric();
        let open = Window::new(10.0, 10.0, Boundary::Open).unwrap().metric();
        assert_eq!(torus.distance([1.0, 1.0], [9.0, 1.0]), 2.0);
        assert_eq!(open.distance([1.0, 1.0], [9.0, 1.0]), 8.0);
        assert_eq!(torus.distance([3.0, 4.0], [3.0, 4.0]), 0.0);
        assert_eq!(PlanarMetric::open().distance([0.0, 0.0], [3.0, 4.0]), 5.0);
    }

    #[test]
    fn window_validation() {
        assert!(Window::new(0.0, 10.0, Boundary::Torus).is_err());
        assert!(Window::new(10.0, -1.0, Boundary::Open).is_err());
        let w: Window = "30x20".parse().unwrap();
        assert_eq!((w.width(), w.height()), (30.0, 20.0));
        assert!("30".parse::<Window>().is_err());
        assert!(Window::new(10.0, 10.0, Boundary::Open)
            .unwrap()
            .with_guard(5.0)
            .is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let w = Window::new(30.0, 30.0, Boundary::Torus).unwrap();
        let m = MarkModel::beta_from_mean_var(0.5, 0.05).unwrap();
        let a = sample_ppp(1.0, &w, &m, &mut SeededRng::new(42)).unwrap();
        let b = sample_ppp(1.0, &w, &m, &mut SeededRng::new(42)).unwrap();
        assert_eq!(a, b);
        assert!(a.atoms().iter().all(|x| w.contains(x.position()) && x.z() < 1.0));
    }

    #[test]
    fn mean_count_matches_intensity() {
        let w = Window::new(30.0, 30.0, Boundary::Torus).unwrap();
        let m = MarkModel::degenerate(0.5).unwrap();
        let mut rng = SeededRng::new(5);
        let reps = 1000;
        let total: usize = (0..reps)
            .map(|_| sample_ppp(1.0, &w, &m, &mut rng).unwrap().len())
            .sum();
        let mean = total as f64 / reps as f64;
        assert!(
            (mean - 900.0).abs() <= 3.0 * (900.0f64 / reps as f64).sqrt(),
            "mean {mean}"
        );
    }

    #[test]
    fn pattern_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("points.csv");
        let w = Window::new(5.0, 4.0, Boundary::Open).unwrap();
        let m = MarkModel::uniform(0.2, 0.8).unwrap();
        let p = sample_ppp(2.0, &w, &m, &mut SeededRng::new(8)).unwrap();
        write_pattern(&p, &path).unwrap();
        assert_eq!(read_pattern(&path).unwrap(), p);
    }

    #[test]
    fn bad_rows_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x,y,z\n0,0,1\n1,0,0\n").unwrap();
        match read_atoms(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "x,y,z\n0,0,1\n1,zero,1\n").unwrap();
        assert!(matches!(read_atoms(&path), Err(Error::Parse { line: 3, .. })));
        std::fs::write(&path, "a,b,c\n0,0,1\n").unwrap();
        assert!(matches!(read_atoms(&path), Err(Error::Parse { line: 1, .. })));
    }
}
