//! Reference forecasters the hybrid pipeline is measured against: seasonal
//! naive, multiplicative Holt-Winters smoothing, and ridge-stabilized linear
//! regression on exogenous features with month dummies.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::NelderMead;
use crate::series::{ExogTable, MonthKey, MonthlySeries};

/// Forecast each month as the value observed twelve months earlier, tiling
/// the last observed year beyond one cycle.
pub fn seasonal_naive(train: &MonthlySeries, horizon: usize) -> Result<Vec<f64>> {
    if train.len() < 12 {
        return Err(Error::validation(format!(
            "seasonal naive needs >= 12 months of history, got {}",
            train.len()
        )));
    }
    let n = train.len();
    Ok((0..horizon)
        .map(|s| train.values[n - 12 + (s % 12)])
        .collect())
}

/// Multiplicative Holt-Winters state after fitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EtsModel {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub level: f64,
    pub trend: f64,
    /// Latest seasonal factor per position `t mod 12`, renormalized to mean 1.
    pub seasonal: Vec<f64>,
    pub sse: f64,
    pub n_obs: usize,
}

fn ets_pass(values: &[f64], alpha: f64, beta: f64, gamma: f64) -> Option<EtsModel> {
    let n = values.len();
    let year1 = values[..12].iter().sum::<f64>() / 12.0;
    let year2 = values[12..24].iter().sum::<f64>() / 12.0;
    let mut level = year1;
    let mut trend = (year2 - year1) / 12.0;
    let mut seasonal: Vec<f64> = (0..12)
        .map(|m| (values[m] / year1 + values[m + 12] / year2) / 2.0)
        .collect();
    let smean = seasonal.iter().sum::<f64>() / 12.0;
    for s in &mut seasonal {
        *s /= smean;
    }

    let mut sse = 0.0;
    let mut history = seasonal.clone();
    for (t, &y) in values.iter().enumerate() {
        let s_prev = history[t % 12];
        if s_prev <= 0.0 || level <= 0.0 {
            return None;
        }
        let predicted = (level + trend) * s_prev;
        let err = y - predicted;
        sse += err * err;
        let level_prev = level;
        level = alpha * (y / s_prev) + (1.0 - alpha) * (level + trend);
        trend = beta * (level - level_prev) + (1.0 - beta) * trend;
        if level <= 0.0 {
            return None;
        }
        history[t % 12] = gamma * (y / level) + (1.0 - gamma) * s_prev;
    }
    let smean = history.iter().sum::<f64>() / 12.0;
    for s in &mut history {
        *s /= smean;
    }
    Some(EtsModel {
        alpha,
        beta,
        gamma,
        level,
        trend,
        seasonal: history,
        sse,
        n_obs: n,
    })
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Fit multiplicative Holt-Winters by simplex descent on the one-step
/// in-sample squared error over logit-transformed smoothing weights.
pub fn ets_fit(train: &MonthlySeries) -> Result<EtsModel> {
    if train.len() < 24 {
        return Err(Error::validation(format!(
            "Holt-Winters needs >= 24 months of history, got {}",
            train.len()
        )));
    }
    if train.values.iter().any(|&v| v <= 0.0) {
        return Err(Error::validation(
            "multiplicative Holt-Winters requires positive values",
        ));
    }
    let objective = |params: &[f64]| -> f64 {
        let alpha = logistic(params[0]);
        let beta = logistic(params[1]);
        let gamma = logistic(params[2]);
        match ets_pass(&train.values, alpha, beta, gamma) {
            Some(m) => m.sse,
            None => f64::MAX,
        }
    };
    let nm = NelderMead::default();
    let starts = [
        [logit(0.3), logit(0.1), logit(0.1)],
        [logit(0.6), logit(0.05), logit(0.3)],
        [logit(0.1), logit(0.01), logit(0.05)],
    ];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        let (x, v) = nm.minimize(objective, start);
        if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
            best = Some((x, v));
        }
    }
    let (params, _) = best.unwrap();
    ets_pass(
        &train.values,
        logistic(params[0]),
        logistic(params[1]),
        logistic(params[2]),
    )
    .ok_or_else(|| Error::numeric("Holt-Winters recursion left the positive domain"))
}

/// `(level + h*trend) * seasonal` continuation.
pub fn ets_forecast(model: &EtsModel, horizon: usize) -> Vec<f64> {
    (0..horizon)
        .map(|s| {
            let pos = (model.n_obs + s) % 12;
            (model.level + (s + 1) as f64 * model.trend) * model.seasonal[pos]
        })
        .collect()
}

/// Ordinary least squares on exogenous columns, an intercept, and eleven
/// month dummies, stabilized with a tiny ridge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlrModel {
    /// Names of the exogenous columns used, in design order.
    pub feature_columns: Vec<String>,
    /// Coefficients ordered: intercept, features, month dummies for 2..=12.
    pub coefficients: Vec<f64>,
}

const MLR_RIDGE: f64 = 1e-8;

fn mlr_design_row(features: &[f64], month: u8) -> Vec<f64> {
    let mut row = Vec::with_capacity(1 + features.len() + 11);
    row.push(1.0);
    row.extend_from_slice(features);
    for m in 2..=12u8 {
        row.push(if month == m { 1.0 } else { 0.0 });
    }
    row
}

pub fn mlr_fit(train: &MonthlySeries, exog: &ExogTable) -> Result<MlrModel> {
    let feature_columns = exog.columns.clone();
    let mut rows = Vec::with_capacity(train.len());
    for (t, _) in train.values.iter().enumerate() {
        let key = train.month_at(t);
        let mut f = exog.feature_row(key)?;
        f.pop(); // month_index is represented by the dummies
        rows.push(mlr_design_row(&f, key.month));
    }
    let p = rows[0].len();
    if train.len() < p {
        return Err(Error::validation(format!(
            "linear baseline needs at least {p} months for {p} coefficients, got {}",
            train.len()
        )));
    }
    let x = DMatrix::from_fn(rows.len(), p, |r, c| rows[r][c]);
    let y = DVector::from_column_slice(&train.values);
    let mut xtx = x.transpose() * &x;
    for d in 0..p {
        xtx[(d, d)] += MLR_RIDGE;
    }
    let xty = x.transpose() * y;
    let coefficients = xtx
        .lu()
        .solve(&xty)
        .ok_or_else(|| Error::numeric("linear baseline normal equations are singular"))?;
    Ok(MlrModel {
        feature_columns,
        coefficients: coefficients.iter().copied().collect(),
    })
}

pub fn mlr_predict(model: &MlrModel, exog: &ExogTable, month: MonthKey) -> Result<f64> {
    let mut f = exog.feature_row(month)?;
    f.pop();
    if f.len() != model.feature_columns.len() {
        return Err(Error::validation(
            "exogenous columns do not match the fitted linear baseline",
        ));
    }
    let row = mlr_design_row(&f, month.month);
    Ok(row
        .iter()
        .zip(&model.coefficients)
        .map(|(a, b)| a * b)
        .sum())
}
