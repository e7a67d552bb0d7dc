//! Constant-coefficient VAR(p): OLS fit, BIC order selection and the
//! diagnostics run before moving to the time-varying model.

mod granger;
mod hansen;
mod newey_west;

pub use granger::{granger_causality, granger_pairwise, granger_wald_form, GrangerResult};
pub use hansen::{hansen_critical_values, hansen_lc, hansen_lc_from_estimate, HansenLcResult};
pub use newey_west::{newey_west_cov, Bandwidth};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ols;
use crate::market_data::{AlignedPanel, PanelKind};

#[derive(Debug, Clone)]
pub struct VarEstimate {
    pub p: usize,
    pub asset_ids: Vec<String>,
    pub nu: DVector<f64>,
    /// A_1, …, A_p; `coefs[l][(i, j)]` is the effect of x_{j,t-l-1} on x_{i,t}.
    pub coefs: Vec<DMatrix<f64>>,
    /// (T - p) × n
    pub residuals: DMatrix<f64>,
    /// Residual covariance E'E / (T - p).
    pub sigma: DMatrix<f64>,
    /// Newey-West standard errors, laid out like `coef_matrix`.
    pub robust_se: DMatrix<f64>,
    pub bic: f64,
    pub adj_r2: Vec<f64>,
    /// Regressors [1, x_{t-1}', …, x_{t-p}'] per row.
    pub design: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub xtx_inv: DMatrix<f64>,
    /// k × n stacked coefficients, one column per equation.
    pub coef_matrix: DMatrix<f64>,
}

impl VarEstimate {
    pub fn n_assets(&self) -> usize {
        self.nu.len()
    }

    pub fn effective_obs(&self) -> usize {
        self.residuals.nrows()
    }

    /// Regressors per equation, intercept included.
    pub fn k_per_equation(&self) -> usize {
        1 + self.n_assets() * self.p
    }

    pub fn rss(&self, equation: usize) -> f64 {
        self.residuals.column(equation).norm_squared()
    }
}

/// Rows `start..T` of the VAR(p) regression: targets x_t and regressors
/// [1, x_{t-1}', …, x_{t-p}'].
pub(crate) fn var_design(values: &DMatrix<f64>, p: usize, start: usize, with_intercept: bool) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = values.ncols();
    let rows = values.nrows() - start;
    let off = usize::from(with_intercept);
    let x = DMatrix::from_fn(rows, off + n * p, |r, c| {
        if with_intercept && c == 0 {
            return 1.0;
        }
        let c = c - off;
        let (l, j) = (c / n, c % n);
        values[(start + r - l - 1, j)]
    });
    let y = values.rows(start, rows).into_owned();
    (x, y)
}

fn check_returns(panel: &AlignedPanel, p: usize) -> Result<()> {
    panel.expect_kind(PanelKind::Returns)?;
    if p == 0 {
        return Err(Error::Config("VAR lag order must be at least 1".into()));
    }
    let n = panel.n_assets();
    let t = panel.n_periods();
    if t <= p || t - p <= n * p + 1 {
        return Err(Error::InsufficientData {
            what: "VAR estimation",
            needed: p + n * p + 2,
            found: t,
        });
    }
    Ok(())
}

fn fit_on_sample(values: &DMatrix<f64>, asset_ids: &[String], p: usize, start: usize) -> Result<VarEstimate> {
    let n = values.ncols();
    let (x, y) = var_design(values, p, start, true);
    let fit = ols(&x, &y, "VAR regressors")?;
    let t_eff = x.nrows();
    let k = x.ncols();
    let sigma = fit.residuals.transpose() * &fit.residuals / t_eff as f64;
    let det = sigma.determinant();
    let bic = if det > 0.0 {
        det.ln() + (n * k) as f64 * (t_eff as f64).ln() / t_eff as f64
    } else {
        f64::NEG_INFINITY
    };
    let adj_r2 = (0..n)
        .map(|i| {
            let col = y.column(i);
            let mean = col.mean();
            let tss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
            let rss = fit.rss(i);
            1.0 - (rss / (t_eff - k) as f64) / (tss / (t_eff - 1) as f64)
        })
        .collect();
    let nu = fit.coef.row(0).transpose();
    let coefs = (0..p)
        .map(|l| DMatrix::from_fn(n, n, |i, j| fit.coef[(1 + l * n + j, i)]))
        .collect();
    let mut est = VarEstimate {
        p,
        asset_ids: asset_ids.to_vec(),
        nu,
        coefs,
        residuals: fit.residuals,
        sigma,
        robust_se: DMatrix::zeros(k, n),
        bic,
        adj_r2,
        design: x,
        targets: y,
        xtx_inv: fit.xtx_inv,
        coef_matrix: fit.coef,
    };
    let cov = newey_west_cov(&est, Bandwidth::Auto)?;
    for (i, c) in cov.iter().enumerate() {
        for r in 0..k {
            est.robust_se[(r, i)] = c[(r, r)].max(0.0).sqrt();
        }
    }
    Ok(est)
}

/// Equation-by-equation OLS of x_t = ν + A_1 x_{t-1} + … + A_p x_{t-p} + ε_t.
pub fn fit_var_ols(panel: &AlignedPanel, p: usize) -> Result<VarEstimate> {
    check_returns(panel, p)?;
    fit_on_sample(&panel.values, &panel.asset_ids, p, p)
}

/// BIC value for each p in 1..=p_max, all on rows p_max..T.
pub fn bic_profile(panel: &AlignedPanel, p_max: usize) -> Result<Vec<(usize, f64)>> {
    check_returns(panel, p_max)?;
    (1..=p_max)
        .map(|p| fit_on_sample(&panel.values, &panel.asset_ids, p, p_max).map(|e| (p, e.bic)))
        .collect()
}

pub fn select_lag_bic(panel: &AlignedPanel, p_max: usize) -> Result<usize> {
    let profile = bic_profile(panel, p_max)?;
    Ok(profile
        .iter()
        .fold((0, f64::INFINITY), |best, &(p, b)| if b < best.1 { (p, b) } else { best })
        .0
        .max(1))
}

/// BIC value per candidate order and the minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSelection {
    pub selected: usize,
    pub bic: Vec<(usize, f64)>,
}
