//! Points, datasets, distance, text ingestion and seeded synthetic data.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or loading point data.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dimension mismatch at line {0}")]
    DimensionMismatch(usize),
    #[error("line {line}: cannot parse {field:?} as a number")]
    Parse { line: usize, field: String },
    #[error("line {0}: non-finite coordinate")]
    NonFinite(usize),
    #[error("vectors have dimensions {0} and {1}")]
    DimensionContract(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("input is not valid UTF-8 text: {0}")]
    Io(String),
}

/// A d-dimensional point with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialVector(Vec<f64>);

impl SpatialVector {
    pub fn new(coords: Vec<f64>) -> Result<Self, DataError> {
        if coords.is_empty() {
            return Err(DataError::InvalidParameter("a vector needs at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(DataError::NonFinite(0));
        }
        Ok(Self(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for SpatialVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Euclidean distance between two coordinate slices of equal length.
///
/// This is the single distance routine used by every clustering variant, so
/// equal inputs always give bit-identical outputs across variants.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sq_dist(a, b).sqrt()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Checked Euclidean distance between two vectors.
pub fn euclidean_distance(a: &SpatialVector, b: &SpatialVector) -> Result<f64, DataError> {
    if a.dim() != b.dim() {
        return Err(DataError::DimensionContract(a.dim(), b.dim()));
    }
    Ok(dist(a.coords(), b.coords()))
}

/// Immutable set of `n` points of uniform dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    coords: Vec<f64>,
    n: usize,
    d: usize,
}

impl Dataset {
    /// Builds a dataset from a flat row-major buffer.
    pub fn from_flat(coords: Vec<f64>, d: usize) -> Result<Self, DataError> {
        if d == 0 {
            return Err(DataError::InvalidParameter("dimension must be positive".into()));
        }
        if coords.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        if coords.len() % d != 0 {
            return Err(DataError::DimensionMismatch(coords.len() / d + 1));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(DataError::NonFinite(pos / d + 1));
        }
        let n = coords.len() / d;
        Ok(Self { coords, n, d })
    }

    pub fn from_vectors(points: &[SpatialVector]) -> Result<Self, DataError> {
        let first = points.first().ok_or(DataError::EmptyDataset)?;
        let d = first.dim();
        let mut coords = Vec::with_capacity(points.len() * d);
        for (i, p) in points.iter().enumerate() {
            if p.dim() != d {
                return Err(DataError::DimensionMismatch(i + 1));
            }
            coords.extend_from_slice(p.coords());
        }
        Self::from_flat(coords, d)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.d)
    }

    pub fn vector(&self, i: usize) -> SpatialVector {
        SpatialVector(self.point(i).to_vec())
    }

    /// Dataset made of the selected rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self, DataError> {
        let mut coords = Vec::with_capacity(rows.len() * self.d);
        for &r in rows {
            coords.extend_from_slice(self.point(r));
        }
        Self::from_flat(coords, self.d)
    }
}

/// Text layouts accepted by [`load_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointFormat {
    /// One point per line, comma separated.
    Csv,
    /// One point per line, whitespace separated, exactly three columns.
    Xyz,
}

impl PointFormat {
    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("xyz") => PointFormat::Xyz,
            _ => PointFormat::Csv,
        }
    }
}

/// Parses a point file. Blank lines are ignored; every other row must parse.
pub fn load_dataset<R: BufRead>(source: R, format: PointFormat) -> Result<Dataset, DataError> {
    let mut coords = Vec::new();
    let mut d = None;
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| DataError::Io(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = match format {
            PointFormat::Csv => line.split(',').map(str::trim).collect(),
            PointFormat::Xyz => line.split_whitespace().collect(),
        };
        if format == PointFormat::Xyz && fields.len() != 3 {
            return Err(DataError::DimensionMismatch(lineno));
        }
        match d {
            None => d = Some(fields.len()),
            Some(d) if d != fields.len() => return Err(DataError::DimensionMismatch(lineno)),
            _ => {}
        }
        for field in fields {
            let v: f64 = field.parse().map_err(|_| DataError::Parse {
                line: lineno,
                field: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite(lineno));
            }
            coords.push(v);
        }
    }
    match d {
        None => Err(DataError::EmptyDataset),
        Some(d) => Dataset::from_flat(coords, d),
    }
}

/// Writes points in the given format. `f64` display is shortest-round-trip,
/// so reloading reproduces every coordinate exactly.
pub fn serialize_points<'a, I>(points: I, format: PointFormat) -> String
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let sep = match format {
        PointFormat::Csv => ",",
        PointFormat::Xyz => " ",
    };
    let mut out = String::new();
    for p in points {
        for (i, c) in p.iter().enumerate() {
            if i > 0 {
                out.push_str(sep);
            }
            write!(out, "{c}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    out
}

pub fn serialize_dataset(data: &Dataset, format: PointFormat) -> String {
    serialize_points(data.iter(), format)
}

/// Gaussian blobs together with the centers that generated them.
#[derive(Debug, Clone)]
pub struct SyntheticBlobs {
    pub dataset: Dataset,
    pub centers: Vec<Vec<f64>>,
    /// Generating blob of each point.
    pub labels: Vec<usize>,
}

/// Draws `k_true` isotropic Gaussian blobs of standard deviation `spread`
/// around centers uniform in the unit hypercube.
///
/// The PRNG is ChaCha8 seeded through `seed_from_u64`, so a seed fixes the
/// output on every platform. Blob sizes differ by at most one; points are
/// emitted blob by blob.
pub fn generate_blobs(
    n: usize,
    d: usize,
    k_true: usize,
    seed: u64,
    spread: f64,
) -> Result<SyntheticBlobs, DataError> {
    if n == 0 || d == 0 || k_true == 0 {
        return Err(DataError::InvalidParameter("n, d and k_true must be positive".into()));
    }
    if n < k_true {
        return Err(DataError::InvalidParameter(format!("n = {n} is smaller than k_true = {k_true}")));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(DataError::InvalidParameter(format!("spread {spread} must be finite and non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0, 1.0);
    let centers: Vec<Vec<f64>> = (0..k_true)
        .map(|_| (0..d).map(|_| unit.sample(&mut rng)).collect())
        .collect();

    let base = n / k_true;
    let extra = n % k_true;
    let mut coords = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (b, center) in centers.iter().enumerate() {
        let size = base + usize::from(b < extra);
        for _ in 0..size {
            for c in center {
                let z: f64 = StandardNormal.sample(&mut rng);
                coords.push(c + spread * z);
            }
            labels.push(b);
        }
    }
    Ok(SyntheticBlobs {
        dataset: Dataset::from_flat(coords, d)?,
        centers,
        labels,
    })
}

pub fn generate_synthetic(
    n: usize,
    d: usize,
    k_true: usize,
    seed: u64,
    spread: f64,
) -> Result<Dataset, DataError> {
    generate_blobs(n, d, k_true, seed, spread).map(|b| b.dataset)
}
