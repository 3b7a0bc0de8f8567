//! Calendar-anchored monthly series, exogenous tables, feature alignment,
//! train/test splitting, and a seeded synthetic generator.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::decomp::ComponentSet;
use crate::error::{Error, Result};

/// A calendar month, totally ordered by `(year, month)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthKey {
    pub year: i32,
    pub month: u8,
}

impl MonthKey {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::validation(format!(
                "month {month} out of range 1..=12"
            )));
        }
        Ok(MonthKey { year, month })
    }

    /// The month `n` steps later (negative `n` steps back), with year rollover.
    pub fn plus_months(self, n: i64) -> MonthKey {
        let total = (self.year as i64) * 12 + (self.month as i64 - 1) + n;
        MonthKey {
            year: total.div_euclid(12) as i32,
            month: (total.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn next(self) -> MonthKey {
        self.plus_months(1)
    }

    /// Signed number of months from `other` to `self`.
    pub fn months_since(self, other: MonthKey) -> i64 {
        (self.year as i64 * 12 + self.month as i64) - (other.year as i64 * 12 + other.month as i64)
    }
}

impl fmt::Display for MonthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthKey {
    type Err = Error;

    /// Accepts exactly `YYYY-MM`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::validation(format!("month '{s}' is not in YYYY-MM format"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u8 = m.parse().map_err(|_| bad())?;
        MonthKey::new(year, month)
    }
}

impl Serialize for MonthKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for MonthKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Consecutive monthly load values anchored at a start month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySeries {
    pub start: MonthKey,
    pub values: Vec<f64>,
}

impl MonthlySeries {
    pub fn new(start: MonthKey, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::validation("series must contain at least one month"));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::validation(format!(
                    "series value for {} is not finite",
                    start.plus_months(i as i64)
                )));
            }
        }
        Ok(MonthlySeries { start, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn month_at(&self, index: usize) -> MonthKey {
        self.start.plus_months(index as i64)
    }

    pub fn last_month(&self) -> MonthKey {
        self.month_at(self.len() - 1)
    }

    pub fn months(&self) -> impl Iterator<Item = MonthKey> + '_ {
        (0..self.len()).map(|i| self.month_at(i))
    }

    /// Calendar month (1–12) at position `index`.
    pub fn calendar_month(&self, index: usize) -> u8 {
        self.month_at(index).month
    }
}

/// Parse a `month,load` CSV into a series of consecutive months.
pub fn parse_series(csv_text: &str) -> Result<MonthlySeries> {
    let mut lines = nonempty_lines(csv_text);
    let header = lines
        .next()
        .ok_or_else(|| Error::validation("empty series CSV"))?;
    if header.trim() != "month,load" {
        return Err(Error::validation(format!(
            "series header must be 'month,load', found '{header}'"
        )));
    }
    let mut start: Option<MonthKey> = None;
    let mut expected: Option<MonthKey> = None;
    let mut values = Vec::new();
    for (row, line) in lines.enumerate() {
        let row = row + 1;
        let (m, v) = line
            .split_once(',')
            .ok_or_else(|| Error::validation(format!("series row {row}: expected 2 cells")))?;
        let key: MonthKey = m
            .trim()
            .parse()
            .map_err(|e| Error::validation(format!("series row {row}: {e}")))?;
        match expected {
            None => start = Some(key),
            Some(want) if key < want => {
                return Err(Error::validation(format!(
                    "series row {row} ({key}): duplicate or out-of-order month"
                )));
            }
            Some(want) if key > want => {
                return Err(Error::validation(format!(
                    "series row {row} ({key}): gap, expected {want}"
                )));
            }
            _ => {}
        }
        expected = Some(key.next());
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::validation(format!("series row {row}: unparsable number '{v}'")))?;
        if !value.is_finite() {
            return Err(Error::validation(format!(
                "series row {row} ({key}): non-finite value"
            )));
        }
        values.push(value);
    }
    MonthlySeries::new(
        start.ok_or_else(|| Error::validation("series CSV has no data rows"))?,
        values,
    )
}

/// Serialize a series back to the `month,load` CSV schema.
pub fn series_to_csv(series: &MonthlySeries) -> String {
    let mut out = String::from("month,load\n");
    for (i, v) in series.values.iter().enumerate() {
        out.push_str(&format!("{},{}\n", series.month_at(i), v));
    }
    out
}

/// Per-month exogenous rows: temperature, holiday counts, optional extra
/// numeric columns. `month_index` is derived from the key, never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogTable {
    pub start: MonthKey,
    /// Stored column names, `temp_mean_c` and `holiday_days` first.
    pub columns: Vec<String>,
    /// One row per consecutive month, cells aligned to `columns`.
    pub rows: Vec<Vec<f64>>,
}

pub const COL_TEMP: &str = "temp_mean_c";
pub const COL_HOLIDAYS: &str = "holiday_days";
pub const COL_MONTH_INDEX: &str = "month_index";
pub const COL_ECON: &str = "econ_index";
pub const COL_LAG12: &str = "lag12";

impl ExogTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn covers(&self, key: MonthKey) -> bool {
        let i = key.months_since(self.start);
        i >= 0 && (i as usize) < self.rows.len()
    }

    /// Feature column names exposed downstream: stored columns plus the
    /// derived `month_index`.
    pub fn feature_columns(&self) -> Vec<String> {
        let mut cols = self.columns.clone();
        cols.push(COL_MONTH_INDEX.to_string());
        cols
    }

    /// Feature row for `key` in `feature_columns()` order.
    pub fn feature_row(&self, key: MonthKey) -> Result<Vec<f64>> {
        let i = key.months_since(self.start);
        if i < 0 || i as usize >= self.rows.len() {
            return Err(Error::validation(format!(
                "exogenous table does not cover {key}"
            )));
        }
        let mut row = self.rows[i as usize].clone();
        row.push(key.month as f64);
        Ok(row)
    }
}

/// Parse a `month,temp_mean_c,holiday_days[,...]` CSV.
pub fn parse_exog(csv_text: &str) -> Result<ExogTable> {
    let mut lines = nonempty_lines(csv_text);
    let header = lines
        .next()
        .ok_or_else(|| Error::validation("empty exogenous CSV"))?;
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    if cols.len() < 3 || cols[0] != "month" || cols[1] != COL_TEMP || cols[2] != COL_HOLIDAYS {
        return Err(Error::validation(format!(
            "exogenous header must start with 'month,{COL_TEMP},{COL_HOLIDAYS}', found '{header}'"
        )));
    }
    if cols.iter().any(|c| c == COL_MONTH_INDEX || c == COL_LAG12) {
        return Err(Error::validation(format!(
            "'{COL_MONTH_INDEX}' and '{COL_LAG12}' are derived columns and cannot be stored"
        )));
    }
    let columns: Vec<String> = cols[1..].to_vec();
    let mut start: Option<MonthKey> = None;
    let mut expected: Option<MonthKey> = None;
    let mut rows = Vec::new();
    for (row, line) in lines.enumerate() {
        let row = row + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() + 1 {
            let missing = if cells.len() < columns.len() + 1 {
                // cells[0] is the month, so the first absent data column is at
                // offset cells.len()-1 into `columns`.
                format!(" (missing column '{}')", columns[cells.len() - 1])
            } else {
                String::new()
            };
            return Err(Error::validation(format!(
                "exogenous row {row}: expected {} cells, found {}{missing}",
                columns.len() + 1,
                cells.len()
            )));
        }
        let key: MonthKey = cells[0]
            .trim()
            .parse()
            .map_err(|e| Error::validation(format!("exogenous row {row}: {e}")))?;
        match expected {
            None => start = Some(key),
            Some(want) if key != want => {
                let kind = if key < want { "duplicate or out-of-order" } else { "gap," };
                return Err(Error::validation(format!(
                    "exogenous row {row} ({key}): {kind} expected {want}"
                )));
            }
            _ => {}
        }
        expected = Some(key.next());
        let mut parsed = Vec::with_capacity(columns.len());
        for (cell, col) in cells[1..].iter().zip(&columns) {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::validation(format!(
                    "exogenous row {row} ({key}): unparsable '{col}' value '{cell}'"
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::validation(format!(
                    "exogenous row {row} ({key}): non-finite '{col}' value"
                )));
            }
            if col == COL_HOLIDAYS && v < 0.0 {
                return Err(Error::validation(format!(
                    "exogenous row {row} ({key}): {COL_HOLIDAYS} must be >= 0, found {v}"
                )));
            }
            parsed.push(v);
        }
        rows.push(parsed);
    }
    if rows.is_empty() {
        return Err(Error::validation("exogenous CSV has no data rows"));
    }
    Ok(ExogTable {
        start: start.unwrap(),
        columns,
        rows,
    })
}

pub fn exog_to_csv(table: &ExogTable) -> String {
    let mut out = String::from("month");
    for c in &table.columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, row) in table.rows.iter().enumerate() {
        out.push_str(&table.start.plus_months(i as i64).to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Dense per-month feature rows with an optional target vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub keys: Vec<MonthKey>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub target: Option<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .column_index(name)
            .ok_or_else(|| Error::validation(format!("no feature column named '{name}'")))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Restriction to the named columns, keeping keys and target.
    pub fn with_columns(&self, names: &[&str]) -> Result<FeatureMatrix> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::validation(format!("no feature column named '{n}'")))
            })
            .collect::<Result<_>>()?;
        Ok(FeatureMatrix {
            keys: self.keys.clone(),
            columns: names.iter().map(|s| s.to_string()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&i| r[i]).collect())
                .collect(),
            target: self.target.clone(),
        })
    }

    pub fn target_ref(&self) -> Result<&[f64]> {
        self.target
            .as_deref()
            .ok_or_else(|| Error::validation("feature matrix has no target vector"))
    }
}

/// Join a series with its exogenous table, adding a `lag12` column taken from
/// `lag12_source` (a vector aligned to the series, e.g. the series itself or
/// one of its components). Rows exist only for months with lag-12 support.
pub fn align(
    series: &MonthlySeries,
    exog: &ExogTable,
    lag12_source: &[f64],
) -> Result<FeatureMatrix> {
    if lag12_source.len() != series.len() {
        return Err(Error::validation(format!(
            "lag12 source length {} does not match series length {}",
            lag12_source.len(),
            series.len()
        )));
    }
    let missing: Vec<String> = series
        .months()
        .filter(|k| !exog.covers(*k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::validation(format!(
            "exogenous table is missing months: {}",
            missing.join(", ")
        )));
    }
    let mut columns = exog.feature_columns();
    columns.push(COL_LAG12.to_string());
    let mut keys = Vec::new();
    let mut rows = Vec::new();
    let mut target = Vec::new();
    for i in 12..series.len() {
        let key = series.month_at(i);
        let mut row = exog.feature_row(key)?;
        row.push(lag12_source[i - 12]);
        keys.push(key);
        rows.push(row);
        target.push(series.values[i]);
    }
    Ok(FeatureMatrix {
        keys,
        columns,
        rows,
        target: Some(target),
    })
}

/// Split off the final `horizon` months as the test set.
pub fn train_test_split(
    series: &MonthlySeries,
    horizon: usize,
) -> Result<(MonthlySeries, MonthlySeries)> {
    if horizon < 1 {
        return Err(Error::validation("horizon must be >= 1"));
    }
    if series.len() <= horizon {
        return Err(Error::validation(format!(
            "series length {} must exceed horizon {horizon}",
            series.len()
        )));
    }
    let cut = series.len() - horizon;
    let train = MonthlySeries {
        start: series.start,
        values: series.values[..cut].to_vec(),
    };
    let test = MonthlySeries {
        start: series.month_at(cut),
        values: series.values[cut..].to_vec(),
    };
    Ok((train, test))
}

/// Trend shape for the synthetic generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TrendSpec {
    Linear { base: f64, slope: f64 },
    /// S-curve from `base` toward `ceiling`, steepness `rate`, centered on the
    /// middle of the generated span.
    Logistic { base: f64, ceiling: f64, rate: f64 },
}

impl TrendSpec {
    fn value(&self, t: usize, length: usize) -> f64 {
        match *self {
            TrendSpec::Linear { base, slope } => base + slope * t as f64,
            TrendSpec::Logistic { base, ceiling, rate } => {
                let mid = length as f64 / 2.0;
                base + (ceiling - base) / (1.0 + (-rate * (t as f64 - mid)).exp())
            }
        }
    }
}

/// Configuration for `synth_generate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub length: usize,
    pub start: MonthKey,
    pub trend: TrendSpec,
    /// Twelve positive multiplicative indices with arithmetic mean 1.
    pub seasonal_indices: [f64; 12],
    /// Log-scale standard deviation of the lognormal irregular factor.
    pub irregular_log_sd: f64,
    /// Scales how strongly temperature anomalies enter the irregular factor.
    pub temp_irregular_coupling: f64,
    /// Scales how strongly holiday-count anomalies enter the irregular factor.
    pub holiday_irregular_coupling: f64,
    /// When nonzero an `econ_index` column co-trending with the trend is
    /// emitted, raised to this exponent.
    pub econ_coupling: f64,
    /// Standard deviation of the temperature noise around the monthly profile.
    pub temp_noise_sd: f64,
    /// Probability that a month's holiday count deviates by one from the
    /// calendar baseline.
    pub holiday_jitter: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            length: 108,
            start: MonthKey { year: 2013, month: 1 },
            trend: TrendSpec::Logistic {
                base: 80.0,
                ceiling: 160.0,
                rate: 0.06,
            },
            seasonal_indices: [
                1.10, 0.95, 0.98, 0.92, 0.96, 1.02, 1.12, 1.15, 0.99, 0.94, 0.90, 0.97,
            ],
            irregular_log_sd: 0.02,
            temp_irregular_coupling: 0.0,
            holiday_irregular_coupling: 0.0,
            econ_coupling: 0.0,
            temp_noise_sd: 1.5,
            holiday_jitter: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.length < 1 {
            return Err(Error::validation("synthetic length must be >= 1"));
        }
        if self.irregular_log_sd < 0.0 {
            return Err(Error::validation("irregular log-sd must be >= 0"));
        }
        let mean = self.seasonal_indices.iter().sum::<f64>() / 12.0;
        if (mean - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!(
                "seasonal indices must have mean 1, found {mean}"
            )));
        }
        if self.seasonal_indices.iter().any(|&s| s <= 0.0) {
            return Err(Error::validation("seasonal indices must be positive"));
        }
        Ok(())
    }
}

/// Monthly mean-temperature profile (°C), coldest in January.
const TEMP_PROFILE: [f64; 12] = [
    -2.0, 1.0, 7.0, 14.0, 20.0, 24.0, 27.0, 26.0, 21.0, 14.0, 6.0, 0.0,
];

/// Public-holiday day counts per calendar month used as the jitter baseline.
const HOLIDAY_PROFILE: [f64; 12] = [1.0, 3.0, 0.0, 1.0, 2.0, 1.0, 0.0, 0.0, 1.0, 3.0, 0.0, 1.0];

/// Generate `y_t = T_t * S_month(t) * I_t` plus a matching exogenous table and
/// the true components. Deterministic for a given config (including seed).
pub fn synth_generate(config: &SynthConfig) -> Result<(MonthlySeries, ExogTable, ComponentSet)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let temp_noise = Normal::new(0.0, config.temp_noise_sd.max(0.0))
        .map_err(|e| Error::numeric(format!("temperature noise: {e}")))?;
    let irregular_noise = Normal::new(0.0, config.irregular_log_sd)
        .map_err(|e| Error::numeric(format!("irregular noise: {e}")))?;

    let holiday_mean = HOLIDAY_PROFILE.iter().sum::<f64>() / 12.0;
    let mut trend = Vec::with_capacity(config.length);
    let mut seasonal = Vec::with_capacity(config.length);
    let mut irregular = Vec::with_capacity(config.length);
    let mut values = Vec::with_capacity(config.length);
    let mut exog_rows = Vec::with_capacity(config.length);

    let econ_enabled = config.econ_coupling != 0.0;
    let trend0 = config.trend.value(0, config.length).max(f64::MIN_POSITIVE);

    for t in 0..config.length {
        let key = config.start.plus_months(t as i64);
        let m = (key.month - 1) as usize;

        let temp_anomaly = temp_noise.sample(&mut rng);
        let temp = TEMP_PROFILE[m] + temp_anomaly;
        let mut holidays = HOLIDAY_PROFILE[m];
        if rng.random::<f64>() < config.holiday_jitter {
            holidays = if rng.random::<f64>() < 0.5 {
                (holidays - 1.0).max(0.0)
            } else {
                holidays + 1.0
            };
        }

        let t_val = config.trend.value(t, config.length);
        if t_val <= 0.0 {
            return Err(Error::validation(format!(
                "trend specification yields non-positive value at {key}"
            )));
        }
        let shock = irregular_noise.sample(&mut rng);
        let i_val = shock.exp()
            * (1.0 + config.temp_irregular_coupling * temp_anomaly / 10.0)
            * (1.0 + config.holiday_irregular_coupling * (holidays - holiday_mean));
        if i_val <= 0.0 {
            return Err(Error::validation(format!(
                "irregular coupling drives the irregular factor non-positive at {key}"
            )));
        }
        let s_val = config.seasonal_indices[m];

        trend.push(t_val);
        seasonal.push(s_val);
        irregular.push(i_val);
        values.push(t_val * s_val * i_val);

        let mut row = vec![temp, holidays];
        if econ_enabled {
            row.push(100.0 * (t_val / trend0).powf(config.econ_coupling));
        }
        exog_rows.push(row);
    }

    let mut columns = vec![COL_TEMP.to_string(), COL_HOLIDAYS.to_string()];
    if econ_enabled {
        columns.push(COL_ECON.to_string());
    }
    let series = MonthlySeries::new(config.start, values)?;
    let exog = ExogTable {
        start: config.start,
        columns,
        rows: exog_rows,
    };
    let components = ComponentSet {
        start: config.start,
        trend,
        seasonal,
        irregular,
        indices: config.seasonal_indices,
    };
    Ok((series, exog, components))
}

fn nonempty_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.trim().is_empty())
}
