use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::{check_returns, var_design};
use crate::error::{Error, Result};
use crate::linalg::ols;
use crate::market_data::AlignedPanel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerResult {
    pub source_asset: String,
    /// Equations under test; all assets other than the source by default.
    pub target_assets: Vec<String>,
    pub f_statistic: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub p_value: f64,
}

fn f_p_value(f: f64, df_num: usize, df_den: usize) -> f64 {
    if !f.is_finite() {
        return 0.0;
    }
    FisherSnedecor::new(df_num as f64, df_den as f64)
        .map(|d| d.sf(f.max(0.0)))
        .unwrap_or(f64::NAN)
        .clamp(0.0, 1.0)
}

/// Column indices in the VAR design that hold lags of `source`.
fn source_columns(n: usize, p: usize, source: usize) -> Vec<usize> {
    (0..p).map(|l| 1 + l * n + source).collect()
}

fn validate(panel: &AlignedPanel, p: usize, source: usize, targets: &[usize]) -> Result<()> {
    check_returns(panel, p)?;
    let n = panel.n_assets();
    if source >= n || targets.iter().any(|&t| t >= n || t == source) || targets.is_empty() {
        return Err(Error::Config(format!(
            "invalid Granger source/targets for a {n}-asset panel"
        )));
    }
    Ok(())
}

fn rss_form(panel: &AlignedPanel, p: usize, source: usize, targets: &[usize]) -> Result<GrangerResult> {
    validate(panel, p, source, targets)?;
    let n = panel.n_assets();
    let (x, y) = var_design(&panel.values, p, p, true);
    let unrestricted = ols(&x, &y, "Granger unrestricted system")?;
    let drop = source_columns(n, p, source);
    let keep: Vec<usize> = (0..x.ncols()).filter(|c| !drop.contains(c)).collect();
    let xr = x.select_columns(keep.iter());
    let yr = y.select_columns(targets.iter());
    let restricted = ols(&xr, &yr, "Granger restricted system").map_err(|_| Error::Singular {
        what: "Granger restricted system",
        pivot: 0.0,
    })?;
    let rss_u: f64 = targets.iter().map(|&i| unrestricted.rss(i)).sum();
    let rss_r: f64 = (0..targets.len()).map(|c| restricted.rss(c)).sum();
    let df_num = p * targets.len();
    let df_den = targets.len() * (x.nrows() - x.ncols());
    let f = ((rss_r - rss_u) / df_num as f64) / (rss_u / df_den as f64);
    Ok(GrangerResult {
        source_asset: panel.asset_ids[source].clone(),
        target_assets: targets.iter().map(|&i| panel.asset_ids[i].clone()).collect(),
        f_statistic: f,
        df_num,
        df_den,
        p_value: f_p_value(f, df_num, df_den),
    })
}

/// F test that lags of `source` carry no information for every other
/// variable: ((RSS_r - RSS_u)/r) / (RSS_u/df) on the stacked equations of
/// the non-source variables.
pub fn granger_causality(panel: &AlignedPanel, p: usize, source: usize) -> Result<GrangerResult> {
    let targets: Vec<usize> = (0..panel.n_assets()).filter(|&i| i != source).collect();
    rss_form(panel, p, source, &targets)
}

/// Single-equation variant: does `source` Granger-cause `target`?
pub fn granger_pairwise(panel: &AlignedPanel, p: usize, source: usize, target: usize) -> Result<GrangerResult> {
    rss_form(panel, p, source, &[target])
}

/// The joint test written as a Wald statistic (Rβ)'[R V R']^{-1}(Rβ)/r on
/// the stacked coefficient vector, with V = s² (I ⊗ (X'X)^{-1}).
pub fn granger_wald_form(panel: &AlignedPanel, p: usize, source: usize) -> Result<GrangerResult> {
    let n = panel.n_assets();
    let targets: Vec<usize> = (0..n).filter(|&i| i != source).collect();
    validate(panel, p, source, &targets)?;
    let (x, y) = var_design(&panel.values, p, p, true);
    let fit = ols(&x, &y, "Granger unrestricted system")?;
    let k = x.ncols();
    let beta = DVector::from_column_slice(fit.coef.as_slice());
    let cols = source_columns(n, p, source);
    let r_rows: Vec<usize> = targets
        .iter()
        .flat_map(|&i| cols.iter().map(move |&c| i * k + c))
        .collect();
    let mut r = DMatrix::zeros(r_rows.len(), n * k);
    for (row, &c) in r_rows.iter().enumerate() {
        r[(row, c)] = 1.0;
    }
    let df_num = r_rows.len();
    let df_den = targets.len() * (x.nrows() - k);
    let s2 = targets.iter().map(|&i| fit.rss(i)).sum::<f64>() / df_den as f64;
    let v = DMatrix::<f64>::identity(n, n).kronecker(&fit.xtx_inv) * s2;
    let rb = &r * &beta;
    let middle = (&r * v * r.transpose())
        .cholesky()
        .ok_or(Error::Singular {
            what: "Wald restriction covariance",
            pivot: 0.0,
        })?;
    let f = rb.dot(&middle.solve(&rb)) / df_num as f64;
    Ok(GrangerResult {
        source_asset: panel.asset_ids[source].clone(),
        target_assets: targets.iter().map(|&i| panel.asset_ids[i].clone()).collect(),
        f_statistic: f,
        df_num,
        df_den,
        p_value: f_p_value(f, df_num, df_den),
    })
}
