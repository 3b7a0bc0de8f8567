//! Feature relevance scoring and kernel PCA reduction.
//!
//! Pearson correlation filters for linear relevance, boosted-tree split gain
//! ranks model-based importance, and an optional RBF kernel PCA stage reduces
//! the weather/calendar block to a handful of components.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbt::{self, GbtParams};
use crate::series::FeatureMatrix;

/// Pearson correlation coefficient of two equal-length samples.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::validation(format!(
            "Pearson needs two equal vectors of length >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::numeric(
            "correlation undefined: a sample has zero variance",
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Per-column relevance report driving selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub columns: Vec<String>,
    /// Pearson r vs the target; `None` for zero-variance columns.
    pub pearson: Vec<Option<f64>>,
    /// Total boosted-tree split gain per column.
    pub importance: Vec<f64>,
    pub selected: Vec<bool>,
    /// True when no column passed the correlation filter and pure top-k by
    /// importance was used instead.
    pub fallback_used: bool,
    pub r_min: f64,
    pub k_top: usize,
}

/// Split-gain importance from a boosted-tree fit with the given parameters.
pub fn rank_importance_with(features: &FeatureMatrix, params: &GbtParams) -> Result<Vec<f64>> {
    let target = features.target_ref()?;
    if features.n_rows() < 2 {
        return Err(Error::validation(
            "importance ranking needs at least 2 rows",
        ));
    }
    let model = gbt::fit(&features.rows, target, params)?;
    Ok(gbt::importance(&model))
}

pub fn rank_importance(features: &FeatureMatrix) -> Result<Vec<f64>> {
    rank_importance_with(features, &GbtParams::default())
}

/// Keep columns with `|r| >= r_min`, then the `k_top` most important among
/// them; fall back to pure top-k by importance when nothing passes the filter.
pub fn select(
    pearson: &[Option<f64>],
    importance: &[f64],
    r_min: f64,
    k_top: usize,
) -> (Vec<bool>, bool) {
    let n = pearson.len();
    let passes: Vec<usize> = (0..n)
        .filter(|&i| pearson[i].map_or(false, |r| r.abs() >= r_min))
        .collect();
    let (pool, fallback) = if passes.is_empty() {
        ((0..n).collect::<Vec<_>>(), true)
    } else {
        (passes, false)
    };
    let mut ordered = pool.clone();
    ordered.sort_by(|&a, &b| {
        importance[b]
            .partial_cmp(&importance[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut mask = vec![false; n];
    for &i in ordered.iter().take(k_top.max(1)) {
        mask[i] = true;
    }
    (mask, fallback)
}

/// Full report: Pearson per column, importance, and the selection mask.
pub fn feature_report(features: &FeatureMatrix, r_min: f64, k_top: usize) -> Result<FeatureReport> {
    let target = features.target_ref()?.to_vec();
    let mut pearson_cols = Vec::with_capacity(features.n_cols());
    for name in &features.columns {
        let col = features.column(name)?;
        pearson_cols.push(pearson(&col, &target).ok());
    }
    let importance = rank_importance(features)?;
    let (selected, fallback_used) = select(&pearson_cols, &importance, r_min, k_top);
    Ok(FeatureReport {
        columns: features.columns.clone(),
        pearson: pearson_cols,
        importance,
        selected,
        fallback_used,
        r_min,
        k_top,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Rbf { gamma: f64 },
    /// Plain inner product; exists so projections can be checked against
    /// direct PCA.
    Linear,
}

impl Kernel {
    fn apply(&self, u: &[f64], v: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => crate::svr::rbf(u, v, gamma),
            Kernel::Linear => u.iter().zip(v).map(|(a, b)| a * b).sum(),
        }
    }
}

/// Fitted kernel PCA: training rows, spectrum of the centered kernel matrix,
/// and unit eigenvectors for projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KpcaModel {
    pub kernel: Kernel,
    /// Standardized training rows.
    pub rows: Vec<Vec<f64>>,
    /// Eigenvalues of the centered kernel matrix, descending, clamped at 0.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors, one inner vector per retained-or-not component.
    pub eigenvectors: Vec<Vec<f64>>,
    pub retained: usize,
    /// Per-row means of the uncentered training kernel matrix.
    pub row_means: Vec<f64>,
    pub grand_mean: f64,
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
}

const KPCA_NULL_EIGENVALUE: f64 = 1e-12;

pub fn kpca_fit(x: &[Vec<f64>], gamma: f64, variance_fraction: f64) -> Result<KpcaModel> {
    if gamma <= 0.0 {
        return Err(Error::validation("KPCA gamma must be > 0"));
    }
    kpca_fit_kernel(x, Kernel::Rbf { gamma }, variance_fraction)
}

pub fn kpca_fit_kernel(
    x: &[Vec<f64>],
    kernel: Kernel,
    variance_fraction: f64,
) -> Result<KpcaModel> {
    let n = x.len();
    if n < 2 {
        return Err(Error::validation("KPCA needs at least 2 rows"));
    }
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::validation("variance fraction must be in (0, 1]"));
    }
    let cols = x[0].len();
    if x.iter().any(|r| r.len() != cols) {
        return Err(Error::validation("KPCA rows have inconsistent widths"));
    }

    // column standardization with training statistics
    let mut mean = vec![0.0; cols];
    for r in x {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let mut std = vec![0.0; cols];
    for r in x {
        for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    for s in &mut std {
        *s = s.sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    let rows: Vec<Vec<f64>> = x
        .iter()
        .map(|r| {
            r.iter()
                .zip(&mean)
                .zip(&std)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();

    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.apply(&rows[i], &rows[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).sum() / n as f64).collect();
    let grand_mean = row_means.iter().sum::<f64>() / n as f64;
    let mut centered = k.clone();
    for i in 0..n {
        for j in 0..n {
            centered[(i, j)] = k[(i, j)] - row_means[i] - row_means[j] + grand_mean;
        }
    }

    let eigen = SymmetricEigen::new(centered);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap()
    });
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| eigen.eigenvalues[i].max(0.0))
        .collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| eigen.eigenvectors.column(i).iter().copied().collect())
        .collect();

    let positive_total: f64 = eigenvalues.iter().filter(|&&v| v > 0.0).sum();
    let mut retained = 1;
    if positive_total > 0.0 {
        let mut acc = 0.0;
        for (count, &v) in eigenvalues.iter().enumerate() {
            acc += v;
            if acc >= variance_fraction * positive_total {
                retained = count + 1;
                break;
            }
        }
    }

    Ok(KpcaModel {
        kernel,
        rows,
        eigenvalues,
        eigenvectors,
        retained,
        row_means,
        grand_mean,
        x_mean: mean,
        x_std: std,
    })
}

impl KpcaModel {
    /// Projections of the training rows onto the retained components.
    pub fn train_projections(&self) -> Vec<Vec<f64>> {
        let n = self.rows.len();
        (0..n)
            .map(|i| {
                (0..self.retained)
                    .map(|c| {
                        if self.eigenvalues[c] <= KPCA_NULL_EIGENVALUE {
                            0.0
                        } else {
                            self.eigenvalues[c].sqrt() * self.eigenvectors[c][i]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Project new rows using the training kernel statistics; components with a
/// near-null eigenvalue are skipped (scored 0).
pub fn kpca_transform(model: &KpcaModel, x_new: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let cols = model.x_mean.len();
    if x_new.iter().any(|r| r.len() != cols) {
        return Err(Error::validation(format!(
            "KPCA transform expects rows of width {cols}"
        )));
    }
    let n = model.rows.len() as f64;
    let mut out = Vec::with_capacity(x_new.len());
    for raw in x_new {
        let row: Vec<f64> = raw
            .iter()
            .zip(&model.x_mean)
            .zip(&model.x_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        let k_new: Vec<f64> = model.rows.iter().map(|r| model.kernel.apply(&row, r)).collect();
        let k_new_mean = k_new.iter().sum::<f64>() / n;
        let centered: Vec<f64> = k_new
            .iter()
            .zip(&model.row_means)
            .map(|(k, mu)| k - k_new_mean - mu + model.grand_mean)
            .collect();
        let scores: Vec<f64> = (0..model.retained)
            .map(|c| {
                let lambda = model.eigenvalues[c];
                if lambda <= KPCA_NULL_EIGENVALUE {
                    0.0
                } else {
                    centered
                        .iter()
                        .zip(&model.eigenvectors[c])
                        .map(|(k, a)| k * a)
                        .sum::<f64>()
                        / lambda.sqrt()
                }
            })
            .collect();
        out.push(scores);
    }
    Ok(out)
}
