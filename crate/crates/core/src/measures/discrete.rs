use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Weights closer than this to summing to one are silently renormalized.
pub const WEIGHT_RENORM_TOL: f64 = 1e-9;

/// A finitely supported probability measure on `R^d`.
///
/// Points are stored row-major in one flat buffer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

/// Barycenter and second moment `E|X|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub barycenter: Vec<f64>,
    pub second_moment: f64,
}

impl DiscreteMeasure {
    /// Checks the invariants and renormalizes weights that are off by less than `1e-9`.
    pub fn validate(points: Vec<f64>, weights: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch("dimension must be positive".into()));
        }
        if weights.is_empty() {
            return Err(Error::DimensionMismatch("measure has no atoms".into()));
        }
        if points.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates for {} atoms in dimension {}",
                points.len(),
                weights.len(),
                dim
            )));
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("coordinate {i} of the atoms")));
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("weight {index}")));
            }
            if value <= 0.0 {
                return Err(Error::NonPositiveWeight { index, value });
            }
        }
        let sum = neumaier_sum(weights.iter().copied());
        if (sum - 1.0).abs() >= WEIGHT_RENORM_TOL {
            return Err(Error::WeightSumMismatch { sum });
        }
        let weights = weights.into_iter().map(|w| w / sum).collect();
        Ok(DiscreteMeasure { dim, points, weights })
    }

    /// Like [`validate`](Self::validate) but rescales arbitrary positive weights.
    pub fn normalized(points: Vec<f64>, weights: Vec<f64>, dim: usize) -> Result<Self> {
        let sum = neumaier_sum(weights.iter().copied());
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::WeightSumMismatch { sum });
        }
        let weights = weights.into_iter().map(|w| w / sum).collect();
        Self::validate(points, weights, dim)
    }

    pub fn from_1d(values: &[f64], weights: &[f64]) -> Result<Self> {
        Self::validate(values.to_vec(), weights.to_vec(), 1)
    }

    /// Equal weights on the given atoms.
    pub fn uniform(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates do not form points of dimension {}",
                points.len(),
                dim
            )));
        }
        let n = points.len() / dim;
        Self::validate(points, vec![1.0 / n as f64; n], dim)
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::validate(point.to_vec(), vec![1.0], point.len())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    pub fn moments(&self) -> Moments {
        let mut barycenter = vec![0.0; self.dim];
        let mut second = 0.0;
        for (p, w) in self.iter() {
            for (b, &x) in barycenter.iter_mut().zip(p) {
                *b += w * x;
            }
            second += w * p.iter().map(|x| x * x).sum::<f64>();
        }
        Moments { barycenter, second_moment: second }
    }

    /// Atoms of a 1-D measure sorted by position (stable in ties).
    pub fn sorted_1d(&self) -> Vec<(f64, f64)> {
        debug_assert_eq!(self.dim, 1);
        let mut atoms: Vec<(f64, f64)> =
            self.points.iter().copied().zip(self.weights.iter().copied()).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        atoms
    }

    /// Smallest and largest coordinate of a 1-D measure.
    pub fn hull_1d(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    }

    /// Applies `f` to every atom, keeping weights.
    pub fn map_points(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut points = Vec::with_capacity(self.points.len());
        let mut dim = self.dim;
        for p in self.points.chunks_exact(self.dim) {
            let q = f(p);
            dim = q.len();
            points.extend(q);
        }
        Self::validate(points, self.weights.clone(), dim)
    }

    /// The same measure translated to barycenter zero.
    pub fn centered(&self) -> Self {
        let bary = self.moments().barycenter;
        let mut points = self.points.clone();
        for p in points.chunks_exact_mut(self.dim) {
            for (x, b) in p.iter_mut().zip(&bary) {
                *x -= b;
            }
        }
        DiscreteMeasure { dim: self.dim, points, weights: self.weights.clone() }
    }

    /// Loads the `x1,...,xd,w` format; weights are renormalized.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path.as_ref())?;
        let headers = reader.headers()?.clone();
        let ncols = headers.len();
        if ncols < 2 || headers.get(ncols - 1) != Some("w") {
            return Err(Error::Parse(format!(
                "{}: expected header x1,...,xd,w",
                path.as_ref().display()
            )));
        }
        for (k, h) in headers.iter().take(ncols - 1).enumerate() {
            if h != format!("x{}", k + 1) {
                return Err(Error::Parse(format!("unexpected column '{h}', expected x{}", k + 1)));
            }
        }
        let dim = ncols - 1;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            for (k, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Parse(format!("row {}: cannot parse '{field}' as a number", row + 2))
                })?;
                if k < dim {
                    points.push(v);
                } else {
                    weights.push(v);
                }
            }
        }
        Self::normalized(points, weights, dim)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        header.push("w".into());
        writer.write_record(&header)?;
        for (p, w) in self.iter() {
            let mut row: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
            row.push(fmt_f64(w));
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Compensated summation.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// 17 significant digits, the round-trip width used by every output file.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        "0.0000000000000000e0".to_string()
    } else {
        format!("{v:.16e}")
    }
}
