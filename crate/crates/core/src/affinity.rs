//! Pairwise matrices consumed by the clustering and propagation algorithms:
//! cosine similarity, Euclidean distances, the Gaussian kernel and its
//! symmetrically normalised form.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// What a matrix holds. Guards against feeding e.g. a distance matrix to an
/// operation expecting a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    CosineSimilarity,
    EuclideanDistance,
    GaussianKernel,
    NormalizedPropagation,
}

impl MatrixKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixKind::CosineSimilarity => "cosine_similarity",
            MatrixKind::EuclideanDistance => "euclidean_distance",
            MatrixKind::GaussianKernel => "gaussian_kernel",
            MatrixKind::NormalizedPropagation => "normalized_propagation",
        }
    }
}

/// A symmetric n×n pairwise matrix with construction metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub values: Array2<f64>,
    pub kind: MatrixKind,
    /// Gaussian kernel standard deviation, when applicable.
    pub sigma: Option<f64>,
}

impl AffinityMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Dump the full matrix as CSV, row-major. Debugging aid.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.n()).map(|j| self.values[[i, j]].to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParam(msg.to_string()))
    }
}

/// Cosine similarity of every sample pair: <xi,xj> / (|xi||xj|).
pub fn cosine_similarity_matrix(x: ArrayView2<'_, f64>) -> Result<AffinityMatrix> {
    let n = x.nrows();
    require(n >= 2, "cosine similarity needs at least two samples")?;
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let norm = x.row(i).dot(&x.row(i)).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNormRow(i));
        }
        norms.push(norm);
    }
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        values[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let s = x.row(i).dot(&x.row(j)) / (norms[i] * norms[j]);
            values[[i, j]] = s;
            values[[j, i]] = s;
        }
    }
    Ok(AffinityMatrix {
        values,
        kind: MatrixKind::CosineSimilarity,
        sigma: None,
    })
}

/// Euclidean distance of every sample pair, zero diagonal.
pub fn pairwise_euclidean(x: ArrayView2<'_, f64>) -> Result<AffinityMatrix> {
    let n = x.nrows();
    require(n >= 2, "pairwise distances need at least two samples")?;
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = &x.row(i) - &x.row(j);
            let d = diff.dot(&diff).sqrt();
            values[[i, j]] = d;
            values[[j, i]] = d;
        }
    }
    Ok(AffinityMatrix {
        values,
        kind: MatrixKind::EuclideanDistance,
        sigma: None,
    })
}

/// Median of the n(n-1)/2 distinct pairwise Euclidean distances. An even
/// count takes the mean of the two middle values.
pub fn median_pairwise_distance(x: ArrayView2<'_, f64>) -> Result<f64> {
    let dist = pairwise_euclidean(x)?;
    let n = dist.n();
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            upper.push(dist.values[[i, j]]);
        }
    }
    upper.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    let m = upper.len();
    Ok(if m % 2 == 1 {
        upper[m / 2]
    } else {
        0.5 * (upper[m / 2 - 1] + upper[m / 2])
    })
}

/// Fully connected Gaussian kernel W[i][j] = exp(-|xi-xj|^2 / (2 sigma^2))
/// with zero diagonal.
pub fn gaussian_affinity(x: ArrayView2<'_, f64>, sigma: f64) -> Result<AffinityMatrix> {
    if sigma <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "gaussian kernel sigma must be > 0, got {sigma}"
        )));
    }
    let n = x.nrows();
    require(n >= 2, "gaussian kernel needs at least two samples")?;
    let denom = 2.0 * sigma * sigma;
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = &x.row(i) - &x.row(j);
            let w = (-diff.dot(&diff) / denom).exp();
            values[[i, j]] = w;
            values[[j, i]] = w;
        }
    }
    Ok(AffinityMatrix {
        values,
        kind: MatrixKind::GaussianKernel,
        sigma: Some(sigma),
    })
}

/// Symmetric normalisation S = D^(-1/2) W D^(-1/2) of a Gaussian kernel,
/// where D is the diagonal degree matrix of W.
pub fn normalize_propagation(w: &AffinityMatrix) -> Result<AffinityMatrix> {
    if w.kind != MatrixKind::GaussianKernel {
        return Err(Error::MatrixKind {
            expected: MatrixKind::GaussianKernel.as_str(),
            found: w.kind.as_str(),
        });
    }
    let n = w.n();
    let mut inv_sqrt_degree = Vec::with_capacity(n);
    for i in 0..n {
        let degree: f64 = w.values.row(i).sum();
        if degree <= 0.0 {
            return Err(Error::ZeroDegreeRow(i));
        }
        inv_sqrt_degree.push(1.0 / degree.sqrt());
    }
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            values[[i, j]] = w.values[[i, j]] * inv_sqrt_degree[i] * inv_sqrt_degree[j];
        }
    }
    Ok(AffinityMatrix {
        values,
        kind: MatrixKind::NormalizedPropagation,
        sigma: w.sigma,
    })
}
