//! Graph-based label propagation over the normalised Gaussian kernel.
//!
//! Confidences diffuse as F <- alpha·S·F + (1-alpha)·Y from F(0) = Y. The
//! locked variant pins every manually labelled row back to its one-hot
//! after each sweep, so a human-given label can never be overwritten.

use ndarray::{Array2, ArrayView2};

use crate::affinity::{gaussian_affinity, normalize_propagation};
use crate::error::{Error, Result};
use crate::labelling::{ExemplarSet, LabelAssignment, Labeller};

#[derive(Debug, Clone, PartialEq)]
pub struct LPParams {
    /// Weight of the propagated term in each update, in (0,1).
    pub alpha: f64,
    /// Gaussian kernel standard deviation.
    pub sigma: f64,
    pub max_iterations: usize,
    /// Max-norm change in F below which iteration stops.
    pub tolerance: f64,
    /// Pin labelled rows to confidence 1 after every iteration.
    pub locked: bool,
}

impl Default for LPParams {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            sigma: 0.16,
            max_iterations: 1000,
            tolerance: 1e-6,
            locked: false,
        }
    }
}

impl LPParams {
    pub fn locked(locked: bool) -> Self {
        Self {
            locked,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParam(format!(
                "clamping factor alpha must lie strictly inside (0,1), got {}",
                self.alpha
            )));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidParam("sigma must be > 0".to_string()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParam("max_iterations must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// Propagate exemplar labels to every sample.
///
/// Builds the Gaussian kernel over `x`, normalises it symmetrically and
/// iterates to the diffusion fixed point. Final labels are row argmaxes of
/// F, ties to the lowest class index.
pub fn propagate_labels(
    x: ArrayView2<'_, f64>,
    exemplars: &ExemplarSet,
    labeller: &Labeller<'_>,
    params: &LPParams,
) -> Result<LabelAssignment> {
    params.validate()?;
    if exemplars.is_empty() {
        return Err(Error::NoExemplars);
    }
    let n = x.nrows();
    let n_classes = labeller.n_classes();

    let kernel = gaussian_affinity(x, params.sigma)?;
    let s = normalize_propagation(&kernel)?;

    let mut seed_rows: Vec<(usize, usize)> = Vec::with_capacity(exemplars.len());
    let mut y = Array2::<f64>::zeros((n, n_classes));
    for &e in &exemplars.indices {
        let label = labeller.label_of(e)?;
        y[[e, label]] = 1.0;
        seed_rows.push((e, label));
    }

    let alpha = params.alpha;
    let mut f = y.clone();
    let mut converged = false;
    for _ in 0..params.max_iterations {
        let mut next = s.values.dot(&f);
        next *= alpha;
        next.scaled_add(1.0 - alpha, &y);
        if params.locked {
            for &(e, label) in &seed_rows {
                for c in 0..n_classes {
                    next[[e, c]] = if c == label { 1.0 } else { 0.0 };
                }
            }
        }
        let mut delta: f64 = 0.0;
        for i in 0..n {
            for c in 0..n_classes {
                delta = delta.max((next[[i, c]] - f[[i, c]]).abs());
            }
        }
        f = next;
        if delta < params.tolerance {
            converged = true;
            break;
        }
    }

    let labels = (0..n)
        .map(|i| {
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for c in 0..n_classes {
                if f[[i, c]] > best_v {
                    best_v = f[[i, c]];
                    best = c;
                }
            }
            best
        })
        .collect();

    let mut labelled_indices = exemplars.indices.clone();
    labelled_indices.sort_unstable();
    Ok(LabelAssignment {
        labels,
        confidence: f,
        labelled_indices,
        converged,
    })
}
