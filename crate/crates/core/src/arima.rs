//! ARIMA(p,d,q) estimated by conditional sum of squares.
//!
//! Differencing is applied up front, the ARMA coefficients and intercept are
//! found by Nelder-Mead descent on the CSS objective from several seeded
//! starts, and forecasts are produced by iterating the recursion with future
//! shocks at zero, then integrating the differences back out.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::NelderMead;

/// Model orders. `p` autoregressive lags, `d` differences, `q` moving-average
/// lags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaSpec {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl Default for ArimaSpec {
    fn default() -> Self {
        ArimaSpec { p: 2, d: 2, q: 1 }
    }
}

impl std::fmt::Display for ArimaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

/// A fitted model. Immutable; forecasting does not mutate state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArimaModel {
    pub spec: ArimaSpec,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub intercept: f64,
    /// One-step residuals on the differenced scale, one per differenced value.
    pub residuals: Vec<f64>,
    pub sigma2: f64,
    /// Final `d` original values, anchors for undifferencing forecasts.
    pub diff_tail: Vec<f64>,
    /// The differenced training series the recursion continues from.
    pub differenced: Vec<f64>,
    pub seed: u64,
}

/// Apply first differences `d` times; output length shrinks by `d`.
pub fn difference(values: &[f64], d: usize) -> Result<Vec<f64>> {
    if values.len() <= d {
        return Err(Error::validation(format!(
            "cannot difference {} values {d} times",
            values.len()
        )));
    }
    let mut out = values.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// Invert `difference`: integrate `forecasts` (living on the d-differenced
/// scale) back to the original scale, anchored at the last `d` original
/// values.
pub fn undifference(tail_of_original: &[f64], d: usize, forecasts: &[f64]) -> Result<Vec<f64>> {
    if d == 0 {
        return Ok(forecasts.to_vec());
    }
    if tail_of_original.len() < d {
        return Err(Error::validation(format!(
            "undifferencing with d={d} needs a tail of at least {d} values, got {}",
            tail_of_original.len()
        )));
    }
    // last[k] = most recent value of the k-times-differenced series
    let mut last = Vec::with_capacity(d);
    let mut cur = tail_of_original[tail_of_original.len() - d..].to_vec();
    for k in 0..d {
        last.push(*cur.last().unwrap());
        if k + 1 < d {
            cur = cur.windows(2).map(|w| w[1] - w[0]).collect();
        }
    }
    let mut out = Vec::with_capacity(forecasts.len());
    for &f in forecasts {
        let mut v = f;
        for k in (0..d).rev() {
            v += last[k];
            last[k] = v;
        }
        out.push(v);
    }
    Ok(out)
}

/// One-step residuals of the ARMA recursion with zero pre-sample values.
pub fn arma_residuals(ar: &[f64], ma: &[f64], intercept: f64, w: &[f64]) -> Vec<f64> {
    let mut e = Vec::with_capacity(w.len());
    for t in 0..w.len() {
        let mut pred = intercept;
        for (i, &phi) in ar.iter().enumerate() {
            if t > i {
                pred += phi * w[t - 1 - i];
            }
        }
        for (j, &theta) in ma.iter().enumerate() {
            if t > j {
                pred += theta * e[t - 1 - j];
            }
        }
        e.push(w[t] - pred);
    }
    e
}

/// Conditional sum of squares: residual energy over `t > max(p,q)` with zero
/// pre-sample initialization.
pub fn css_loss(ar: &[f64], ma: &[f64], intercept: f64, w: &[f64]) -> f64 {
    let skip = ar.len().max(ma.len());
    arma_residuals(ar, ma, intercept, w)
        .iter()
        .skip(skip)
        .map(|e| e * e)
        .sum()
}

/// Modulus of the smallest root of `1 - c_1 z - ... - c_k z^k` (AR) or
/// `1 + c_1 z + ... + c_k z^k` (MA), via the companion matrix of the
/// reversed polynomial. Returns `None` when all coefficients are ~0.
fn min_root_modulus(coeffs: &[f64], ar_sign: bool) -> Option<f64> {
    // polynomial a_0 + a_1 z + ... + a_k z^k with a_0 = 1
    let sign = if ar_sign { -1.0 } else { 1.0 };
    let mut poly = vec![1.0];
    poly.extend(coeffs.iter().map(|c| sign * c));
    while poly.len() > 1 && poly.last().unwrap().abs() < 1e-12 {
        poly.pop();
    }
    let k = poly.len() - 1;
    if k == 0 {
        return None;
    }
    // companion matrix of p(z)/a_k; its eigenvalues are the roots of p
    let lead = poly[k];
    let mut m = DMatrix::<f64>::zeros(k, k);
    for i in 1..k {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..k {
        m[(i, k - 1)] = -poly[i] / lead;
    }
    let eigen = m.complex_eigenvalues();
    Some(eigen.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min))
}

const ROOT_TOL: f64 = 1e-6;

fn check_roots(ar: &[f64], ma: &[f64]) -> Result<()> {
    if let Some(modulus) = min_root_modulus(ar, true) {
        if modulus <= 1.0 + ROOT_TOL {
            return Err(Error::numeric(format!(
                "non-stationary fit: AR root modulus {modulus:.6} <= 1"
            )));
        }
    }
    if let Some(modulus) = min_root_modulus(ma, false) {
        if modulus <= 1.0 + ROOT_TOL {
            return Err(Error::numeric(format!(
                "non-invertible fit: MA root modulus {modulus:.6} <= 1"
            )));
        }
    }
    Ok(())
}

/// Fit by CSS from the zero start plus four seeded jittered starts, keeping
/// the best converged loss. The intercept is always estimated alongside the
/// ARMA coefficients.
pub fn fit(values: &[f64], spec: ArimaSpec, seed: u64) -> Result<ArimaModel> {
    let w = difference(values, spec.d)?;
    let n_params = spec.p + spec.q + 1;
    if w.len() < spec.p + spec.q + 2 {
        return Err(Error::validation(format!(
            "differenced length {} is below the hard minimum {} for ARIMA{spec}",
            w.len(),
            spec.p + spec.q + 2
        )));
    }

    let unpack = |params: &[f64]| -> (Vec<f64>, Vec<f64>, f64) {
        (
            params[..spec.p].to_vec(),
            params[spec.p..spec.p + spec.q].to_vec(),
            params[spec.p + spec.q],
        )
    };
    let objective = |params: &[f64]| -> f64 {
        let (ar, ma, c) = unpack(params);
        let loss = css_loss(&ar, &ma, c, &w);
        if loss.is_finite() {
            loss
        } else {
            f64::MAX
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = w.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
    let mut starts = vec![vec![0.0; n_params]];
    for _ in 0..4 {
        let mut s: Vec<f64> = (0..n_params)
            .map(|_| rng.random_range(-0.1..0.1))
            .collect();
        // intercept jitter on the data scale
        s[n_params - 1] *= scale;
        starts.push(s);
    }

    let nm = NelderMead::default();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        let (x, v) = nm.minimize(objective, start);
        if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
            best = Some((x, v));
        }
    }
    let (params, loss) = best.unwrap();
    let (ar, ma, intercept) = unpack(&params);
    check_roots(&ar, &ma)?;

    let residuals = arma_residuals(&ar, &ma, intercept, &w);
    let n_eff = (w.len() - spec.p.max(spec.q)).max(1);
    Ok(ArimaModel {
        spec,
        ar,
        ma,
        intercept,
        residuals,
        sigma2: loss / n_eff as f64,
        diff_tail: values[values.len() - spec.d..].to_vec(),
        differenced: w,
        seed,
    })
}

/// `h`-step forecast on the original scale.
pub fn forecast(model: &ArimaModel, h: usize) -> Vec<f64> {
    let n = model.differenced.len();
    let mut w_ext = model.differenced.clone();
    let mut e_ext = model.residuals.clone();
    for _ in 0..h {
        let t = w_ext.len();
        let mut v = model.intercept;
        for (i, &phi) in model.ar.iter().enumerate() {
            if t > i {
                v += phi * w_ext[t - 1 - i];
            }
        }
        for (j, &theta) in model.ma.iter().enumerate() {
            if t > j {
                v += theta * e_ext[t - 1 - j];
            }
        }
        w_ext.push(v);
        e_ext.push(0.0);
    }
    undifference(&model.diff_tail, model.spec.d, &w_ext[n..])
        .expect("tail length equals d by construction")
}

/// One-step in-sample fitted values on the original scale: `y_t - e_t` where
/// the residual index is aligned through the differencing offset. The first
/// `d + max(p,q)` positions have no honest one-step prediction and are `None`.
pub fn fitted_original(model: &ArimaModel, values: &[f64]) -> Vec<Option<f64>> {
    let d = model.spec.d;
    let warmup = model.spec.p.max(model.spec.q);
    values
        .iter()
        .enumerate()
        .map(|(t, &y)| {
            if t < d + warmup {
                None
            } else {
                Some(y - model.residuals[t - d])
            }
        })
        .collect()
}
