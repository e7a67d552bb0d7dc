//! ADF-GLS (DF-GLS) unit-root test: GLS quasi-difference detrending followed
//! by a no-deterministics ADF regression with BIC lag selection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ols, ols_vec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DetrendModel {
    Constant,
    #[default]
    ConstantTrend,
}

impl DetrendModel {
    /// Local-to-unity constant used for quasi-differencing.
    pub fn c_bar(self) -> f64 {
        match self {
            DetrendModel::Constant => -7.0,
            DetrendModel::ConstantTrend => -13.5,
        }
    }

    /// Asymptotic critical values at 1%, 5% and 10%.
    pub fn critical_values(self) -> CriticalValues {
        match self {
            DetrendModel::Constant => CriticalValues {
                one: -2.58,
                five: -1.95,
                ten: -1.62,
            },
            DetrendModel::ConstantTrend => CriticalValues {
                one: -3.96,
                five: -3.41,
                ten: -3.12,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalValues {
    pub one: f64,
    pub five: f64,
    pub ten: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfGlsResult {
    /// t-ratio on the lagged level.
    pub statistic: f64,
    pub chosen_lag: usize,
    /// 1 + α̂: persistence of the detrended level.
    pub phi_hat: f64,
    pub detrend_model: DetrendModel,
    /// Observations in the final ADF regression.
    pub n_obs: usize,
    pub critical_values: CriticalValues,
}

impl AdfGlsResult {
    pub fn rejects_at_1pct(&self) -> bool {
        self.statistic < self.critical_values.one
    }

    pub fn rejects_at_5pct(&self) -> bool {
        self.statistic < self.critical_values.five
    }
}

/// Schwert's rule of thumb, floor(12 (T/100)^{1/4}).
pub fn schwert_max_lag(t: usize) -> usize {
    (12.0 * (t as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Removes the GLS-fitted deterministic component from `y`.
pub fn gls_detrend(y: &[f64], model: DetrendModel) -> Result<Vec<f64>> {
    let t_len = y.len();
    if t_len < 10 {
        return Err(Error::InsufficientData {
            what: "GLS detrending",
            needed: 10,
            found: t_len,
        });
    }
    let a = 1.0 + model.c_bar() / t_len as f64;
    let k = match model {
        DetrendModel::Constant => 1,
        DetrendModel::ConstantTrend => 2,
    };
    let z = |t: usize, j: usize| if j == 0 { 1.0 } else { (t + 1) as f64 };
    let zq = DMatrix::from_fn(t_len, k, |t, j| if t == 0 { z(0, j) } else { z(t, j) - a * z(t - 1, j) });
    let yq = DVector::from_fn(t_len, |t, _| if t == 0 { y[0] } else { y[t] - a * y[t - 1] });
    let (beta, _, _) = ols_vec(&zq, &yq, "GLS detrending")?;
    Ok((0..t_len)
        .map(|t| y[t] - (0..k).map(|j| z(t, j) * beta[j]).sum::<f64>())
        .collect())
}

struct AdfFit {
    alpha: f64,
    t_ratio: f64,
    rss: f64,
    n: usize,
}

/// Δỹ_t on ỹ_{t-1}, Δỹ_{t-1}, …, Δỹ_{t-k} for t = start..T-1 (0-based).
fn fit_adf(yd: &[f64], k: usize, start: usize) -> Result<AdfFit> {
    debug_assert!(start > k);
    let n = yd.len() - start;
    let x = DMatrix::from_fn(n, k + 1, |r, j| {
        let t = start + r;
        if j == 0 {
            yd[t - 1]
        } else {
            yd[t - j] - yd[t - j - 1]
        }
    });
    let dy = DMatrix::from_fn(n, 1, |r, _| yd[start + r] - yd[start + r - 1]);
    let fit = ols(&x, &dy, "ADF regression")?;
    let rss = fit.rss(0);
    let dof = n as f64 - (k + 1) as f64;
    let alpha = fit.coef[(0, 0)];
    let se = (rss / dof * fit.xtx_inv[(0, 0)]).sqrt();
    Ok(AdfFit {
        alpha,
        t_ratio: alpha / se,
        rss,
        n,
    })
}

/// ADF-GLS test with the lag order chosen by BIC over `0..=max_lag`.
///
/// All candidate lags are compared on the common sample implied by
/// `max_lag`; the chosen order is then re-estimated on its longest sample.
pub fn adf_gls_test(y: &[f64], max_lag: usize, model: DetrendModel) -> Result<AdfGlsResult> {
    if y.len() <= max_lag + 10 {
        return Err(Error::InsufficientData {
            what: "ADF-GLS test",
            needed: max_lag + 11,
            found: y.len(),
        });
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("series contains non-finite values".into()));
    }
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let yd = gls_detrend(y, model)?;
    let spread = yd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if spread <= 1e-12 * (1.0 + scale) {
        return Err(Error::Degenerate("series has no variation after detrending".into()));
    }

    let common_start = max_lag + 1;
    let mut best = (f64::INFINITY, 0usize);
    for k in 0..=max_lag {
        let fit = fit_adf(&yd, k, common_start).map_err(degenerate)?;
        let n = fit.n as f64;
        let bic = (fit.rss / n).ln() + (k + 1) as f64 * n.ln() / n;
        if bic < best.0 {
            best = (bic, k);
        }
    }
    let chosen_lag = best.1;
    let fit = fit_adf(&yd, chosen_lag, chosen_lag + 1).map_err(degenerate)?;
    if !fit.t_ratio.is_finite() {
        return Err(Error::Degenerate("ADF regression has zero residual variance".into()));
    }
    Ok(AdfGlsResult {
        statistic: fit.t_ratio,
        chosen_lag,
        phi_hat: 1.0 + fit.alpha,
        detrend_model: model,
        n_obs: fit.n,
        critical_values: model.critical_values(),
    })
}

fn degenerate(e: Error) -> Error {
    match e {
        Error::RankDeficient { .. } => Error::Degenerate("collinear ADF regressors".into()),
        e => e,
    }
}
