//! Accuracy metrics and nonparametric model-comparison machinery: win/loss
//! counts, Friedman average ranks, the exact Wilcoxon signed-rank test,
//! k-fold cross-validation, and multi-trial aggregation. Also hosts the
//! embedded reference comparison tables used by `paper-check`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Mean absolute percentage error, in percent.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.is_empty() || actual.len() != predicted.len() {
        return Err(Error::validation(format!(
            "MAPE needs equal non-empty vectors, got {} and {}",
            actual.len(),
            predicted.len()
        )));
    }
    let mut acc = 0.0;
    for (i, (&y, &p)) in actual.iter().zip(predicted).enumerate() {
        if y == 0.0 {
            return Err(Error::validation(format!(
                "MAPE undefined: actual value at position {i} is zero"
            )));
        }
        acc += ((y - p) / y).abs();
    }
    Ok(acc / actual.len() as f64 * 100.0)
}

/// Mean absolute error.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.is_empty() || actual.len() != predicted.len() {
        return Err(Error::validation(format!(
            "MAE needs equal non-empty vectors, got {} and {}",
            actual.len(),
            predicted.len()
        )));
    }
    Ok(actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p).abs())
        .sum::<f64>()
        / actual.len() as f64)
}

/// Months-by-models grid of absolute percentage errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    pub row_labels: Vec<String>,
    pub models: Vec<String>,
    /// `cells[row][model]`, all finite and non-negative.
    pub cells: Vec<Vec<f64>>,
}

impl ComparisonMatrix {
    pub fn new(row_labels: Vec<String>, models: Vec<String>, cells: Vec<Vec<f64>>) -> Result<Self> {
        if cells.len() != row_labels.len() {
            return Err(Error::validation("comparison matrix row count mismatch"));
        }
        for (r, row) in cells.iter().enumerate() {
            if row.len() != models.len() {
                return Err(Error::validation(format!(
                    "comparison matrix row {r} has {} cells for {} models",
                    row.len(),
                    models.len()
                )));
            }
            for (c, v) in row.iter().enumerate() {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::validation(format!(
                        "comparison matrix cell ({r}, {c}) must be a finite non-negative error"
                    )));
                }
            }
        }
        Ok(ComparisonMatrix { row_labels, models, cells })
    }

    pub fn model_index(&self, name: &str) -> Result<usize> {
        self.models
            .iter()
            .position(|m| m == name)
            .ok_or_else(|| Error::validation(format!("no model column named '{name}'")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.model_index(name)?;
        Ok(self.cells.iter().map(|r| r[i]).collect())
    }

    /// Parse `month,<model>,...` CSV with one error cell per model per row.
    pub fn from_csv(text: &str) -> Result<ComparisonMatrix> {
        let mut lines = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::validation("empty comparison CSV"))?;
        let mut cols = header.split(',').map(|c| c.trim().to_string());
        let first = cols.next().unwrap_or_default();
        if first != "month" {
            return Err(Error::validation(format!(
                "comparison header must start with 'month', found '{first}'"
            )));
        }
        let models: Vec<String> = cols.collect();
        if models.is_empty() {
            return Err(Error::validation("comparison CSV has no model columns"));
        }
        let mut row_labels = Vec::new();
        let mut cells = Vec::new();
        for (row, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != models.len() + 1 {
                return Err(Error::validation(format!(
                    "comparison row {}: expected {} cells, found {}",
                    row + 1,
                    models.len() + 1,
                    parts.len()
                )));
            }
            row_labels.push(parts[0].trim().to_string());
            let values: Vec<f64> = parts[1..]
                .iter()
                .map(|c| {
                    c.trim().trim_end_matches('%').parse().map_err(|_| {
                        Error::validation(format!(
                            "comparison row {}: unparsable cell '{c}'",
                            row + 1
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            cells.push(values);
        }
        ComparisonMatrix::new(row_labels, models, cells)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("month");
        for m in &self.models {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.cells) {
            out.push_str(label);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Win/loss of the reference against one model; ties count as wins for the
/// reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinLoss {
    pub model: String,
    pub wins: usize,
    pub losses: usize,
}

pub fn win_loss(matrix: &ComparisonMatrix, reference: &str) -> Result<Vec<WinLoss>> {
    let ref_col = matrix.model_index(reference)?;
    let mut out = Vec::new();
    for (m, name) in matrix.models.iter().enumerate() {
        if m == ref_col {
            continue;
        }
        let mut wins = 0;
        let mut losses = 0;
        for row in &matrix.cells {
            if row[ref_col] <= row[m] {
                wins += 1;
            } else {
                losses += 1;
            }
        }
        out.push(WinLoss { model: name.clone(), wins, losses });
    }
    Ok(out)
}

/// Ascending ranks with mean-rank ties.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j + 2) as f64 / 2.0; // 1-based
        for &idx in &order[i..=j] {
            out[idx] = mean_rank;
        }
        i = j + 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    /// Average rank per model, aligned to the matrix's model order.
    pub avg_ranks: Vec<f64>,
    pub chi_square: f64,
    pub p_value: f64,
    pub n_rows: usize,
    pub n_models: usize,
}

/// Friedman test over a comparison matrix: rank models within each row
/// (1 = smallest error), average, and compare against the chi-square
/// approximation with tie correction.
pub fn friedman_ranks(matrix: &ComparisonMatrix) -> Result<FriedmanResult> {
    let n = matrix.cells.len();
    let k = matrix.models.len();
    if n < 2 || k < 2 {
        return Err(Error::validation(format!(
            "Friedman test needs >= 2 rows and >= 2 models, got {n} rows and {k} models"
        )));
    }
    let mut rank_sums = vec![0.0; k];
    let mut tie_term = 0.0;
    for row in &matrix.cells {
        let r = ranks(row);
        for (s, v) in rank_sums.iter_mut().zip(&r) {
            *s += v;
        }
        // accumulate sum of (t^3 - t) over tie groups in this row
        let mut sorted = row.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
    }
    let avg_ranks: Vec<f64> = rank_sums.iter().map(|s| s / n as f64).collect();
    let nf = n as f64;
    let kf = k as f64;
    let sum_sq: f64 = avg_ranks.iter().map(|r| r * r).sum();
    let mut chi = 12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0) * (kf + 1.0) / 4.0);
    let correction = 1.0 - tie_term / (nf * kf * (kf * kf - 1.0));
    if correction > 0.0 {
        chi /= correction;
    }
    let dist = ChiSquared::new(kf - 1.0)
        .map_err(|e| Error::numeric(format!("chi-square distribution: {e}")))?;
    let p_value = 1.0 - dist.cdf(chi.max(0.0));
    Ok(FriedmanResult {
        avg_ranks,
        chi_square: chi,
        p_value,
        n_rows: n,
        n_models: k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WilcoxonSided {
    /// Alternative: `a` has smaller values than `b`.
    OneLess,
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// The reported statistic: rank sum of differences working against the
    /// one-sided alternative, or the smaller signed-rank sum for two-sided.
    pub statistic: f64,
    /// Rank sum over pairs where `a > b`.
    pub rank_sum_against: f64,
    /// Rank sum over pairs where `a < b`.
    pub rank_sum_for: f64,
    pub n_used: usize,
    pub p_value: f64,
    /// True when the exact null distribution was enumerated.
    pub exact: bool,
}

/// Pairs above this count switch to the normal approximation.
pub const WILCOXON_EXACT_LIMIT: usize = 25;

/// Wilcoxon signed-rank test on paired samples. Zero differences are dropped;
/// ties in |d| receive mean ranks. Exact for `n <= 25`, normal approximation
/// with continuity correction above.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], sided: WilcoxonSided) -> Result<WilcoxonResult> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::validation(format!(
            "Wilcoxon needs equal non-empty vectors, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Err(Error::numeric(
            "Wilcoxon degenerate: all paired differences are zero",
        ));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let r = ranks(&abs);
    let rank_sum_against: f64 = diffs
        .iter()
        .zip(&r)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, rank)| rank)
        .sum();
    let rank_sum_for: f64 = diffs
        .iter()
        .zip(&r)
        .filter(|(d, _)| **d < 0.0)
        .map(|(_, rank)| rank)
        .sum();

    let statistic = match sided {
        WilcoxonSided::OneLess => rank_sum_against,
        WilcoxonSided::Two => rank_sum_against.min(rank_sum_for),
    };

    let exact = n <= WILCOXON_EXACT_LIMIT;
    let p_low = if exact {
        exact_cdf(&r, statistic)
    } else {
        normal_cdf_le(&r, statistic)
    };
    let p_value = match sided {
        WilcoxonSided::OneLess => p_low,
        WilcoxonSided::Two => (2.0 * p_low).min(1.0),
    };
    Ok(WilcoxonResult {
        statistic,
        rank_sum_against,
        rank_sum_for,
        n_used: n,
        p_value,
        exact,
    })
}

/// Exact `P(W <= w)` over all 2^n sign assignments, computed by dynamic
/// programming on doubled ranks (mean ranks double to integers).
fn exact_cdf(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &d in &doubled {
        for s in (d..=total).rev() {
            counts[s] += counts[s - d];
        }
    }
    let cutoff = ((2.0 * w) + 1e-9).floor() as usize;
    let cutoff = cutoff.min(total);
    let favorable: f64 = counts[..=cutoff].iter().sum();
    favorable / (2.0f64).powi(ranks.len() as i32)
}

/// Normal approximation of `P(W <= w)` with tie-corrected variance and a
/// continuity correction of one half.
fn normal_cdf_le(ranks: &[f64], w: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    // tie correction: subtract sum(t^3 - t)/48 over tie groups
    let mut sorted = ranks.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let sd = var.max(1e-300).sqrt();
    let z = (w + 0.5 - mean) / sd;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    normal.cdf(z)
}

/// Seeded shuffle then contiguous partition into `k` folds whose sizes differ
/// by at most one (the first `n % k` folds take the extra element).
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::validation(format!(
            "k-fold needs 2 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(indices[at..at + size].to_vec());
        at += size;
    }
    Ok(folds)
}

/// Mean over folds of the held-out RMSE.
pub fn cross_val_rmse<M>(
    x: &[Vec<f64>],
    y: &[f64],
    k: usize,
    seed: u64,
    fit: impl Fn(&[Vec<f64>], &[f64]) -> Result<M>,
    predict: impl Fn(&M, &[f64]) -> f64,
) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::validation("cross-validation rows/targets mismatch"));
    }
    let folds = kfold(x.len(), k, seed)?;
    let mut total = 0.0;
    for fold in &folds {
        let mut mask = vec![false; x.len()];
        for &i in fold {
            mask[i] = true;
        }
        let train_x: Vec<Vec<f64>> = x
            .iter()
            .enumerate()
            .filter(|(i, _)| !mask[*i])
            .map(|(_, r)| r.clone())
            .collect();
        let train_y: Vec<f64> = y
            .iter()
            .enumerate()
            .filter(|(i, _)| !mask[*i])
            .map(|(_, v)| *v)
            .collect();
        let model = fit(&train_x, &train_y)?;
        let sse: f64 = fold
            .iter()
            .map(|&i| {
                let p = predict(&model, &x[i]);
                (p - y[i]) * (p - y[i])
            })
            .sum();
        total += (sse / fold.len() as f64).sqrt();
    }
    Ok(total / folds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub mape: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub base_seed: u64,
    pub mean_mape: f64,
    pub std_mape: f64,
    pub mean_mae: f64,
    pub std_mae: f64,
    pub per_trial: Vec<TrialMetrics>,
}

/// Run `trials` seeded repetitions (`base_seed..base_seed+trials`) and report
/// sample mean and standard deviation of each metric. Any failing trial
/// aborts with its seed attached.
pub fn multi_trial(
    mut runner: impl FnMut(u64) -> Result<TrialMetrics>,
    trials: usize,
    base_seed: u64,
) -> Result<TrialSummary> {
    if trials < 1 {
        return Err(Error::validation("trial count must be >= 1"));
    }
    let mut per_trial = Vec::with_capacity(trials);
    for t in 0..trials {
        let seed = base_seed + t as u64;
        let metrics = runner(seed).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("trial seed {seed}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("trial seed {seed}: {m}")),
            other => other,
        })?;
        per_trial.push(metrics);
    }
    let stats = |get: fn(&TrialMetrics) -> f64| -> (f64, f64) {
        let n = per_trial.len() as f64;
        let mean = per_trial.iter().map(get).sum::<f64>() / n;
        let std = if per_trial.len() < 2 {
            0.0
        } else {
            (per_trial.iter().map(|m| (get(m) - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        (mean, std)
    };
    let (mean_mape, std_mape) = stats(|m| m.mape);
    let (mean_mae, std_mae) = stats(|m| m.mae);
    Ok(TrialSummary {
        trials,
        base_seed,
        mean_mape,
        std_mape,
        mean_mae,
        std_mae,
        per_trial,
    })
}

/// Embedded reference comparison tables (monthly absolute percentage errors
/// for ten models on two datasets) plus the summary rows printed with them.
pub mod fixtures {
    use super::ComparisonMatrix;

    pub const MODELS: [&str; 10] = [
        "X12-ARIMA",
        "ETS",
        "LSTM",
        "NBEATS",
        "MLP",
        "GRNN",
        "SVR",
        "XGBOOST",
        "RD-ETS+LSTM",
        "XASXG",
    ];

    pub const REFERENCE: &str = "XASXG";

    pub const TABLE1: [[f64; 10]; 12] = [
        [6.60, 7.83, 1.00, 3.08, 12.69, 2.23, 14.84, 8.40, 3.59, 0.12],
        [13.48, 11.21, 14.93, 6.15, 10.67, 18.81, 19.53, 0.11, 13.69, 0.01],
        [0.95, 2.61, 1.69, 4.76, 6.41, 3.38, 5.39, 32.80, 1.87, 1.50],
        [1.33, 0.21, 7.07, 9.64, 5.48, 12.40, 7.57, 0.01, 3.11, 0.18],
        [1.24, 1.17, 6.67, 5.37, 5.93, 1.21, 2.53, 19.42, 3.28, 0.03],
        [4.46, 4.44, 0.29, 4.22, 1.39, 5.60, 2.40, 6.45, 2.00, 3.10],
        [1.15, 0.17, 5.54, 2.14, 14.69, 2.26, 18.81, 2.89, 1.07, 0.16],
        [1.75, 2.82, 0.76, 2.69, 16.66, 5.28, 18.70, 0.91, 3.40, 0.06],
        [0.44, 3.30, 13.34, 4.47, 3.48, 14.28, 0.05, 0.01, 2.95, 1.09],
        [0.38, 1.75, 13.36, 4.66, 7.50, 13.75, 5.01, 3.30, 2.97, 0.10],
        [0.67, 2.94, 6.27, 7.06, 2.51, 11.41, 0.96, 0.00, 2.20, 1.38],
        [1.00, 1.50, 2.43, 0.40, 12.07, 4.65, 12.09, 0.21, 1.71, 0.03],
    ];

    pub const TABLE2: [[f64; 10]; 12] = [
        [5.77, 7.15, 1.33, 5.45, 5.19, 3.20, 8.42, 10.32, 3.11, 0.05],
        [18.13, 15.03, 8.00, 13.23, 55.47, 14.75, 65.68, 0.31, 16.92, 0.02],
        [1.49, 3.83, 5.12, 5.35, 4.81, 17.15, 0.25, 33.50, 1.97, 0.05],
        [1.60, 2.77, 1.61, 6.37, 5.53, 7.92, 6.71, 0.00, 2.43, 0.43],
        [1.40, 1.22, 4.19, 4.32, 2.01, 4.04, 3.75, 17.17, 2.50, 0.04],
        [3.19, 3.91, 1.26, 0.34, 1.75, 1.64, 0.12, 4.91, 1.21, 1.64],
        [1.04, 0.55, 0.35, 0.96, 11.66, 5.80, 12.68, 9.95, 0.78, 1.52],
        [0.77, 2.16, 10.08, 7.28, 16.05, 4.82, 14.22, 4.75, 1.33, 1.11],
        [5.40, 8.48, 20.10, 5.72, 6.07, 8.07, 6.14, 0.01, 6.89, 0.16],
        [1.80, 3.77, 11.37, 6.32, 6.08, 7.04, 7.00, 1.50, 3.88, 0.04],
        [0.58, 2.37, 5.30, 3.32, 0.20, 5.21, 0.65, 0.00, 2.77, 0.01],
        [16.99, 12.59, 9.99, 8.19, 24.56, 14.48, 22.65, 14.02, 14.64, 17.21],
    ];

    /// Printed win/loss rows, one entry per non-reference model in `MODELS`
    /// order.
    pub const TABLE1_PRINTED_WIN_LOSS: [(usize, usize); 9] = [
        (11, 1),
        (12, 0),
        (12, 0),
        (12, 0),
        (11, 1),
        (12, 0),
        (9, 3),
        (9, 3),
        (12, 0),
    ];

    pub const TABLE2_PRINTED_WIN_LOSS: [(usize, usize); 9] = [
        (9, 3),
        (10, 2),
        (11, 1),
        (11, 1),
        (12, 0),
        (11, 1),
        (11, 1),
        (9, 3),
        (11, 1),
    ];

    /// Printed Friedman average ranks, aligned to `MODELS`.
    pub const TABLE1_PRINTED_F_RANK: [f64; 10] = [
        4.0, 4.833, 6.083, 6.0, 7.166, 7.666, 7.25, 5.0, 5.0, 2.0,
    ];

    pub const TABLE2_PRINTED_F_RANK: [f64; 10] = [
        4.67, 5.33, 5.75, 5.66, 6.75, 7.17, 7.0, 5.33, 4.75, 2.58,
    ];

    /// Printed one-sided signed-rank p-values, one per non-reference model.
    pub const TABLE1_PRINTED_P_VALUE: [f64; 9] = [
        0.0080, 0.0002, 0.0024, 0.0002, 0.0007, 0.0002, 0.003, 0.0212, 0.0017,
    ];

    pub const TABLE2_PRINTED_P_VALUE: [f64; 9] = [
        0.001, 0.011, 0.013, 0.0261, 0.0002, 0.0007, 0.001, 0.021, 0.008,
    ];

    fn build(cells: &[[f64; 10]; 12]) -> ComparisonMatrix {
        ComparisonMatrix::new(
            (1..=12).map(|m| m.to_string()).collect(),
            MODELS.iter().map(|m| m.to_string()).collect(),
            cells.iter().map(|r| r.to_vec()).collect(),
        )
        .expect("fixture tables are well-formed")
    }

    /// The two verbatim 12x10 comparison tables.
    pub fn table_fixtures() -> (ComparisonMatrix, ComparisonMatrix) {
        (build(&TABLE1), build(&TABLE2))
    }
}
