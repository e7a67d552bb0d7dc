use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::VarEstimate;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// floor(4 (T/100)^{2/9})
    #[default]
    Auto,
    Fixed(usize),
}

impl Bandwidth {
    pub fn lags(self, t: usize) -> usize {
        match self {
            Bandwidth::Auto => (4.0 * (t as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize,
            Bandwidth::Fixed(l) => l,
        }
    }
}

/// HAC covariance of each equation's coefficients with Bartlett weights
/// w_j = 1 - j/(L+1). Bandwidth 0 gives White's estimator.
pub fn newey_west_cov(estimate: &VarEstimate, bandwidth: Bandwidth) -> Result<Vec<DMatrix<f64>>> {
    let x = &estimate.design;
    let (t_len, k) = x.shape();
    let lags = bandwidth.lags(t_len).min(t_len.saturating_sub(1));
    let bread = &estimate.xtx_inv;
    let cov = (0..estimate.n_assets())
        .map(|i| {
            let u = estimate.residuals.column(i);
            // Rows are the score contributions x_t u_t.
            let mut scores = x.clone();
            for (t, mut row) in scores.row_iter_mut().enumerate() {
                row *= u[t];
            }
            let mut meat = scores.transpose() * &scores;
            for j in 1..=lags {
                let w = 1.0 - j as f64 / (lags as f64 + 1.0);
                let lead = scores.rows(j, t_len - j);
                let lag = scores.rows(0, t_len - j);
                let gamma: DMatrix<f64> = lead.transpose() * lag;
                meat += (&gamma + gamma.transpose()) * w;
            }
            debug_assert_eq!(meat.nrows(), k);
            bread * meat * bread
        })
        .collect();
    Ok(cov)
}
