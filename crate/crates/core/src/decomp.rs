//! Classical multiplicative decomposition of a monthly series.
//!
//! Trend comes from a centered 2x12 moving average (endpoints filled by a
//! local least-squares extension), the seasonal cycle from mean-of-ratios
//! indices normalized to mean 1, and the irregular factor is whatever remains,
//! so `trend * seasonal * irregular` reconstructs the input exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{MonthKey, MonthlySeries};

/// Aligned trend/seasonal/irregular components of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSet {
    pub start: MonthKey,
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub irregular: Vec<f64>,
    /// The twelve distinct seasonal indices, January first.
    pub indices: [f64; 12],
}

impl ComponentSet {
    pub fn len(&self) -> usize {
        self.trend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trend.is_empty()
    }

    /// Largest relative deviation of `trend*seasonal*irregular` from `values`.
    pub fn reconstruction_error(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(t, &y)| {
                let prod = self.trend[t] * self.seasonal[t] * self.irregular[t];
                ((prod - y) / y).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Seasonal index for the t-th position of a series starting at `start`.
    pub fn index_at(&self, offset: i64) -> f64 {
        let month = self.start.plus_months(offset).month;
        self.indices[(month - 1) as usize]
    }
}

/// Centered 2x12 moving average: half weight on the endpoints of a 13-month
/// window. Interior positions are `6..n-7`; endpoints are extrapolated from a
/// least-squares line through the nearest 12 interior values.
pub fn centered_ma_12(values: &[f64]) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 13 {
        return Err(Error::validation(format!(
            "centered 2x12 moving average needs at least 13 values, got {n}"
        )));
    }
    let mut trend = vec![0.0; n];
    for i in 6..n - 6 {
        let mut acc = 0.5 * values[i - 6] + 0.5 * values[i + 6];
        for j in -5i64..=5 {
            acc += values[(i as i64 + j) as usize];
        }
        trend[i] = acc / 12.0;
    }
    let lo = 6;
    let hi = n - 7;
    extend_endpoints(&mut trend, lo, hi);
    Ok(trend)
}

/// Fill `trend[..lo]` and `trend[hi+1..]` by extrapolating an OLS line fitted
/// through the nearest interior values (up to 12 of them).
fn extend_endpoints(trend: &mut [f64], lo: usize, hi: usize) {
    let interior = hi - lo + 1;
    let window = interior.min(12);

    let fit_line = |xs: &mut dyn Iterator<Item = usize>, trend: &[f64]| -> (f64, f64) {
        let pts: Vec<(f64, f64)> = xs.map(|i| (i as f64, trend[i])).collect();
        let n = pts.len() as f64;
        if pts.len() == 1 {
            return (pts[0].1, 0.0);
        }
        let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        (mean_y - slope * mean_x, slope)
    };

    let (b0, b1) = fit_line(&mut (lo..lo + window), trend);
    for (i, t) in trend.iter_mut().enumerate().take(lo) {
        *t = b0 + b1 * i as f64;
    }
    let (b0, b1) = fit_line(&mut (hi + 1 - window..=hi), trend);
    for (i, t) in trend.iter_mut().enumerate().skip(hi + 1) {
        *t = b0 + b1 * i as f64;
    }
}

/// Mean (or median) of the detrended ratios per calendar month, normalized so
/// the twelve indices average exactly 1. `start_month` is the calendar month
/// (1-12) of `values[0]`.
pub fn seasonal_indices(
    values: &[f64],
    trend: &[f64],
    start_month: u8,
    use_median: bool,
) -> Result<[f64; 12]> {
    if values.len() != trend.len() {
        return Err(Error::validation(format!(
            "values ({}) and trend ({}) lengths differ",
            values.len(),
            trend.len()
        )));
    }
    let mut groups: [Vec<f64>; 12] = Default::default();
    for (t, (&y, &tr)) in values.iter().zip(trend).enumerate() {
        if tr <= 0.0 {
            return Err(Error::numeric(format!(
                "non-positive trend estimate at position {t}"
            )));
        }
        let ratio = y / tr;
        if ratio <= 0.0 {
            return Err(Error::numeric(format!(
                "non-positive detrended ratio at position {t}"
            )));
        }
        let month = (start_month as usize - 1 + t) % 12;
        groups[month].push(ratio);
    }
    let mut indices = [0.0; 12];
    for (m, group) in groups.iter_mut().enumerate() {
        if group.is_empty() {
            return Err(Error::validation(format!(
                "calendar month {} has no observations",
                m + 1
            )));
        }
        indices[m] = if use_median {
            group.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let k = group.len();
            if k % 2 == 1 {
                group[k / 2]
            } else {
                0.5 * (group[k / 2 - 1] + group[k / 2])
            }
        } else {
            group.iter().sum::<f64>() / group.len() as f64
        };
    }
    let grand_mean = indices.iter().sum::<f64>() / 12.0;
    for idx in &mut indices {
        *idx /= grand_mean;
    }
    Ok(indices)
}

/// Decomposition options; defaults match the production path.
#[derive(Debug, Clone, Copy, Default)]
pub struct DecomposeOptions {
    /// Use the per-month median of ratios instead of the mean.
    pub median_indices: bool,
}

/// Multiplicative decomposition. Requires three full years of strictly
/// positive values so every calendar month has stable ratio support.
pub fn decompose(series: &MonthlySeries) -> Result<ComponentSet> {
    decompose_with(series, DecomposeOptions::default())
}

pub fn decompose_with(series: &MonthlySeries, opts: DecomposeOptions) -> Result<ComponentSet> {
    let n = series.len();
    if n < 36 {
        return Err(Error::validation(format!(
            "decomposition needs length >= 36 (three full years), got {n}"
        )));
    }
    for (t, &y) in series.values.iter().enumerate() {
        if y <= 0.0 {
            return Err(Error::validation(format!(
                "multiplicative decomposition requires positive values; {} is {y}",
                series.month_at(t)
            )));
        }
    }
    let trend = centered_ma_12(&series.values)?;
    for (t, &tr) in trend.iter().enumerate() {
        if tr <= 0.0 {
            return Err(Error::numeric(format!(
                "trend extension produced a non-positive value at {}",
                series.month_at(t)
            )));
        }
    }
    let indices = seasonal_indices(
        &series.values,
        &trend,
        series.start.month,
        opts.median_indices,
    )?;
    let seasonal: Vec<f64> = (0..n)
        .map(|t| indices[(series.calendar_month(t) - 1) as usize])
        .collect();
    let irregular: Vec<f64> = (0..n)
        .map(|t| series.values[t] / (trend[t] * seasonal[t]))
        .collect();
    Ok(ComponentSet {
        start: series.start,
        trend,
        seasonal,
        irregular,
        indices,
    })
}

/// Divide the seasonal cycle out of the series.
pub fn seasonally_adjust(series: &MonthlySeries, components: &ComponentSet) -> Result<Vec<f64>> {
    if components.len() != series.len() || components.start != series.start {
        return Err(Error::validation(
            "components are not aligned to the series",
        ));
    }
    Ok(series
        .values
        .iter()
        .zip(&components.seasonal)
        .map(|(y, s)| y / s)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{synth_generate, SynthConfig, TrendSpec};
    use proptest::prelude::*;

    fn series(values: Vec<f64>) -> MonthlySeries {
        MonthlySeries::new(MonthKey::new(2013, 1).unwrap(), values).unwrap()
    }

    #[test]
    fn ma_of_constant_is_constant() {
        let trend = centered_ma_12(&vec![5.0; 36]).unwrap();
        for v in trend {
            assert!((v - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ma_preserves_linear_exactly() {
        let values: Vec<f64> = (0..36).map(|t| 2.0 + 3.0 * t as f64).collect();
        let trend = centered_ma_12(&values).unwrap();
        // interior positions are exact; the OLS extension reproduces the same
        // line so endpoints are exact here too
        for (t, v) in trend.iter().enumerate() {
            assert!((v - values[t]).abs() < 1e-9, "t={t}: {v}");
        }
    }

    #[test]
    fn ma_annihilates_period_12_sinusoid() {
        let n = 48;
        let values: Vec<f64> = (0..n)
            .map(|t| 100.0 + 10.0 * (2.0 * std::f64::consts::PI * t as f64 / 12.0).sin())
            .collect();
        let trend = centered_ma_12(&values).unwrap();
        for (t, v) in trend.iter().enumerate().take(n - 6).skip(6) {
            assert!((v - 100.0).abs() <= 1e-9, "t={t}: {v}");
        }
    }

    #[test]
    fn ma_rejects_short_input() {
        assert!(centered_ma_12(&[1.0; 12]).is_err());
        assert!(centered_ma_12(&[1.0; 13]).is_ok());
    }

    #[test]
    fn indices_of_unit_ratios_are_one() {
        let values = vec![3.0; 36];
        let trend = vec![3.0; 36];
        let idx = seasonal_indices(&values, &trend, 1, false).unwrap();
        for v in idx {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn indices_mean_ratio_then_grand_mean() {
        // Two years; January ratios 1.1 and 1.3, everything else ratio 1.
        let mut values = vec![1.0; 24];
        values[0] = 1.1;
        values[12] = 1.3;
        let trend = vec![1.0; 24];
        let idx = seasonal_indices(&values, &trend, 1, false).unwrap();
        let grand = (1.2 + 11.0) / 12.0;
        assert!((idx[0] - 1.2 / grand).abs() < 1e-12);
        assert!((idx[1] - 1.0 / grand).abs() < 1e-12);
        let mean: f64 = idx.iter().sum::<f64>() / 12.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn indices_recovered_from_noiseless_synth() {
        let config = SynthConfig {
            length: 60,
            trend: TrendSpec::Linear { base: 120.0, slope: 0.0 },
            irregular_log_sd: 0.0,
            seed: 5,
            ..SynthConfig::default()
        };
        let (series, _, _) = synth_generate(&config).unwrap();
        let comp = decompose(&series).unwrap();
        for m in 0..12 {
            assert!(
                (comp.indices[m] - config.seasonal_indices[m]).abs() <= 1e-6,
                "month {}: {} vs {}",
                m + 1,
                comp.indices[m],
                config.seasonal_indices[m]
            );
        }
    }

    #[test]
    fn indices_median_option() {
        let mut values = vec![1.0; 36];
        values[0] = 1.0;
        values[12] = 1.0;
        values[24] = 4.0; // outlier January
        let trend = vec![1.0; 36];
        let mean_idx = seasonal_indices(&values, &trend, 1, false).unwrap();
        let med_idx = seasonal_indices(&values, &trend, 1, true).unwrap();
        assert!(med_idx[0] < mean_idx[0]);
    }

    #[test]
    fn decompose_constant_series() {
        let comp = decompose(&series(vec![7.5; 48])).unwrap();
        for t in 0..48 {
            assert!((comp.trend[t] - 7.5).abs() < 1e-12);
            assert!((comp.seasonal[t] - 1.0).abs() < 1e-12);
            assert!((comp.irregular[t] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decompose_recovers_irregular_near_one_on_noiseless_synth() {
        let config = SynthConfig {
            length: 72,
            trend: TrendSpec::Linear { base: 150.0, slope: 0.2 },
            irregular_log_sd: 0.0,
            seed: 9,
            ..SynthConfig::default()
        };
        let (s, _, _) = synth_generate(&config).unwrap();
        let comp = decompose(&s).unwrap();
        for t in 6..66 {
            assert!(
                comp.irregular[t] > 0.99 && comp.irregular[t] < 1.01,
                "t={t}: {}",
                comp.irregular[t]
            );
        }
    }

    #[test]
    fn decompose_reconstruction_is_exact() {
        let config = SynthConfig { seed: 21, ..SynthConfig::default() };
        let (s, _, _) = synth_generate(&config).unwrap();
        let comp = decompose(&s).unwrap();
        assert!(comp.reconstruction_error(&s.values) <= 1e-9);
    }

    #[test]
    fn decompose_rejects_non_positive_naming_month() {
        let mut values = vec![1.0; 36];
        values[14] = 0.0;
        let err = decompose(&series(values)).unwrap_err();
        assert!(err.to_string().contains("2014-03"), "{err}");
    }

    #[test]
    fn decompose_rejects_short_series() {
        let err = decompose(&series(vec![1.0; 35])).unwrap_err();
        assert!(err.to_string().contains("36"), "{err}");
    }

    #[test]
    fn adjust_identities() {
        let config = SynthConfig { seed: 2, ..SynthConfig::default() };
        let (s, _, _) = synth_generate(&config).unwrap();
        let comp = decompose(&s).unwrap();
        let adjusted = seasonally_adjust(&s, &comp).unwrap();
        for t in 0..s.len() {
            assert!((adjusted[t] * comp.seasonal[t] - s.values[t]).abs() <= 1e-12 * s.values[t]);
        }
    }

    #[test]
    fn adjust_equals_trend_when_irregular_is_one() {
        // y = trend * seasonal exactly
        let config = SynthConfig {
            length: 48,
            trend: TrendSpec::Linear { base: 50.0, slope: 0.5 },
            irregular_log_sd: 0.0,
            seed: 1,
            ..SynthConfig::default()
        };
        let (s, _, truth) = synth_generate(&config).unwrap();
        let comp = ComponentSet {
            start: s.start,
            trend: truth.trend.clone(),
            seasonal: truth.seasonal.clone(),
            irregular: vec![1.0; s.len()],
            indices: truth.indices,
        };
        let adjusted = seasonally_adjust(&s, &comp).unwrap();
        for t in 0..s.len() {
            assert!((adjusted[t] - truth.trend[t]).abs() <= 1e-9 * truth.trend[t]);
        }
    }

    proptest! {
        #[test]
        fn reconstruction_identity_holds(seed in 0u64..200) {
            let config = SynthConfig {
                length: 36 + (seed as usize % 72),
                irregular_log_sd: 0.05,
                seed,
                ..SynthConfig::default()
            };
            let (s, _, _) = synth_generate(&config).unwrap();
            let comp = decompose(&s).unwrap();
            prop_assert!(comp.reconstruction_error(&s.values) <= 1e-9);
            let mean: f64 = comp.indices.iter().sum::<f64>() / 12.0;
            prop_assert!((mean - 1.0).abs() <= 1e-9);
            prop_assert!(comp.trend.iter().all(|&v| v > 0.0));
            prop_assert!(comp.irregular.iter().all(|&v| v > 0.0));
        }

        #[test]
        fn scale_equivariance(seed in 0u64..50, k in 0.01f64..100.0) {
            let config = SynthConfig { length: 60, seed, ..SynthConfig::default() };
            let (s, _, _) = synth_generate(&config).unwrap();
            let scaled = MonthlySeries::new(
                s.start,
                s.values.iter().map(|v| v * k).collect(),
            ).unwrap();
            let a = decompose(&s).unwrap();
            let b = decompose(&scaled).unwrap();
            for t in 0..s.len() {
                prop_assert!((b.trend[t] - k * a.trend[t]).abs() <= 1e-9 * k * a.trend[t]);
                prop_assert!((b.seasonal[t] - a.seasonal[t]).abs() <= 1e-9);
                prop_assert!((b.irregular[t] - a.irregular[t]).abs() <= 1e-9);
            }
        }
    }
}
