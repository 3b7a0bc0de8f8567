//! Monthly electricity load forecasting built around multiplicative decomposition.
//!
//! A load series is split into trend, seasonal, and irregular components
//! (`decomp`), each component is forecast by a dedicated model — an ARIMA+SVR
//! hybrid for the trend, gradient-boosted trees for the seasonal and irregular
//! parts (`pipeline`) — and the component forecasts are multiplied back into
//! monthly loads. `evalstat` carries the metrics and nonparametric comparison
//! machinery (win/loss counts, Friedman ranks, exact Wilcoxon signed-rank)
//! together with the embedded reference comparison tables.

pub mod arima;
pub mod baselines;
pub mod cli;
pub mod decomp;
pub mod error;
pub mod evalstat;
pub mod featsel;
pub mod gbt;
pub mod optim;
pub mod pipeline;
pub mod series;
pub mod svr;

pub use error::{Error, Result};
