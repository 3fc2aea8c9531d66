//! Toy datasets and mode-coverage scoring.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_COMP_STD: f64 = 0.05;
pub const DEFAULT_K_SIGMA: f64 = 3.0;
/// A mode counts as covered with at least `max(1, n / MIN_COUNT_DIVISOR)` hits.
pub const MIN_COUNT_DIVISOR: usize = 2500;

/// Equal-weight isotropic Gaussian mixture in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussGrid {
    pub centers: Vec<[f64; 2]>,
    pub comp_std: f64,
}

impl Default for GaussGrid {
    fn default() -> Self {
        Self::grid25(DEFAULT_COMP_STD).expect("default std is positive")
    }
}

impl GaussGrid {
    /// The 5x5 grid `{-4, -2, 0, 2, 4}^2`.
    pub fn grid25(comp_std: f64) -> Result<Self> {
        let coords = [-4.0, -2.0, 0.0, 2.0, 4.0];
        let centers = coords.iter().flat_map(|&x| coords.iter().map(move |&y| [x, y])).collect();
        Self::new(centers, comp_std)
    }

    pub fn new(centers: Vec<[f64; 2]>, comp_std: f64) -> Result<Self> {
        if !(comp_std >= 0.0 && comp_std.is_finite()) {
            return Err(Error::Param(format!("component std must be >= 0, got {comp_std}")));
        }
        if centers.is_empty() {
            return Err(Error::Param("mixture needs at least one center".into()));
        }
        Ok(Self { centers, comp_std })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Draws `n` points: a uniformly chosen center plus isotropic noise.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let mut out = Array2::zeros((n, 2));
        for mut row in out.rows_mut() {
            let c = self.centers[rng.random_range(0..self.centers.len())];
            let ex: f64 = rng.sample(StandardNormal);
            let ey: f64 = rng.sample(StandardNormal);
            row[0] = c[0] + self.comp_std * ex;
            row[1] = c[1] + self.comp_std * ey;
        }
        out
    }

    /// Index and Euclidean distance of the nearest center.
    pub fn nearest(&self, p: [f64; 2]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centers.iter().enumerate() {
            let d = (p[0] - c[0]).hypot(p[1] - c[1]);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub modes_covered: usize,
    pub num_modes: usize,
    pub counts: Vec<usize>,
    pub high_quality_fraction: f64,
    pub num_samples: usize,
    pub k_sigma: f64,
    pub min_count: usize,
}

/// Scores samples against the grid: a sample is high quality when it lies
/// within `k_sigma * comp_std` of its nearest center; a mode is covered when
/// it collects at least `max(1, n / 2500)` high-quality samples.
pub fn coverage(samples: ArrayView2<f64>, grid: &GaussGrid, k_sigma: f64) -> Result<CoverageReport> {
    if k_sigma.is_nan() || k_sigma <= 0.0 {
        return Err(Error::Param(format!("k_sigma must be positive, got {k_sigma}")));
    }
    if samples.ncols() != 2 && samples.nrows() > 0 {
        return Err(Error::shape("2 columns", samples.ncols()));
    }
    let n = samples.nrows();
    let radius = k_sigma * grid.comp_std;
    let mut counts = vec![0usize; grid.len()];
    for row in samples.rows() {
        let (idx, dist) = grid.nearest([row[0], row[1]]);
        if dist <= radius {
            counts[idx] += 1;
        }
    }
    let min_count = (n / MIN_COUNT_DIVISOR).max(1);
    let high_quality: usize = counts.iter().sum();
    Ok(CoverageReport {
        modes_covered: counts.iter().filter(|&&c| c >= min_count).count(),
        num_modes: grid.len(),
        counts,
        high_quality_fraction: if n == 0 { 0.0 } else { high_quality as f64 / n as f64 },
        num_samples: n,
        k_sigma,
        min_count,
    })
}

/// Shortest text that parses back to exactly `x`: positional notation for
/// moderate magnitudes, exponent notation otherwise.
pub fn fmt_real(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

/// Reads a headerless two-column CSV of reals.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let file = std::fs::File::open(path)?;
    read_csv(file)
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i as u64 + 1;
        let rec = rec.map_err(|e| Error::Parse { line: e.position().map_or(row, |p| p.line()), msg: e.to_string() })?;
        let line = rec.position().map_or(row, |p| p.line());
        if rec.len() != 2 {
            return Err(Error::Parse { line, msg: format!("expected 2 columns, found {}", rec.len()) });
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse { line, msg: format!("not a number: {field:?}") })?;
            values.push(v);
        }
    }
    let n = values.len() / 2;
    Ok(Array2::from_shape_vec((n, 2), values).expect("two values per row"))
}

pub fn save_csv(points: ArrayView2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(points, std::io::BufWriter::new(file))
}

pub fn write_csv<W: std::io::Write>(points: ArrayView2<f64>, mut out: W) -> Result<()> {
    for row in points.rows() {
        let line: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}
