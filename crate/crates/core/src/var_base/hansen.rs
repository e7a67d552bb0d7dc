use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{fit_var_ols, VarEstimate};
use crate::error::{Error, Result};
use crate::market_data::AlignedPanel;
use crate::unit_root::CriticalValues;

/// Asymptotic critical values of the joint Lc statistic (1%, 5%, 10%),
/// indexed by the number of parameters tested, 1..=20.
const LC_TABLE: [[f64; 3]; 20] = [
    [0.748, 0.470, 0.353],
    [1.07, 0.749, 0.610],
    [1.35, 1.01, 0.846],
    [1.60, 1.24, 1.07],
    [1.88, 1.47, 1.28],
    [2.12, 1.68, 1.49],
    [2.35, 1.90, 1.69],
    [2.59, 2.11, 1.89],
    [2.82, 2.32, 2.10],
    [3.05, 2.54, 2.29],
    [3.27, 2.75, 2.49],
    [3.51, 2.96, 2.69],
    [3.69, 3.15, 2.89],
    [3.90, 3.34, 3.08],
    [4.07, 3.54, 3.26],
    [4.30, 3.75, 3.46],
    [4.51, 3.95, 3.64],
    [4.73, 4.14, 3.83],
    [4.92, 4.33, 4.03],
    [5.13, 4.52, 4.22],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HansenLcResult {
    pub lc_statistic: f64,
    /// Coefficients plus one variance term per equation.
    pub n_params: usize,
    pub critical_values: CriticalValues,
    /// False when `n_params` exceeds the table and its last row was used.
    pub table_exact: bool,
}

impl HansenLcResult {
    pub fn rejects_at(&self, level: f64) -> bool {
        let cv = if level <= 0.01 {
            self.critical_values.one
        } else if level <= 0.05 {
            self.critical_values.five
        } else {
            self.critical_values.ten
        };
        self.lc_statistic > cv
    }
}

/// Returns the table row for `n_params` and whether it was exact.
pub fn hansen_critical_values(n_params: usize) -> (CriticalValues, bool) {
    let exact = (1..=LC_TABLE.len()).contains(&n_params);
    let row = LC_TABLE[n_params.clamp(1, LC_TABLE.len()) - 1];
    (
        CriticalValues {
            one: row[0],
            five: row[1],
            ten: row[2],
        },
        exact,
    )
}

/// Joint parameter-constancy statistic over all coefficients and error
/// variances of the VAR.
pub fn hansen_lc(panel: &AlignedPanel, p: usize) -> Result<HansenLcResult> {
    hansen_lc_from_estimate(&fit_var_ols(panel, p)?)
}

pub fn hansen_lc_from_estimate(est: &VarEstimate) -> Result<HansenLcResult> {
    let x = &est.design;
    let (t_len, k) = x.shape();
    let n = est.n_assets();
    let m = n * (k + 1);
    let mut scores = DMatrix::zeros(t_len, m);
    for i in 0..n {
        let u = est.residuals.column(i);
        let s2 = u.norm_squared() / t_len as f64;
        for t in 0..t_len {
            for c in 0..k {
                scores[(t, i * (k + 1) + c)] = x[(t, c)] * u[t];
            }
            scores[(t, i * (k + 1) + k)] = u[t] * u[t] - s2;
        }
    }
    let v = scores.transpose() * &scores;
    let chol = v.cholesky().ok_or(Error::Singular {
        what: "Hansen score covariance",
        pivot: 0.0,
    })?;
    let mut cum = nalgebra::DVector::zeros(m);
    let mut total = 0.0;
    for t in 0..t_len {
        cum += scores.row(t).transpose();
        total += cum.dot(&chol.solve(&cum));
    }
    let (critical_values, table_exact) = hansen_critical_values(m);
    if !table_exact {
        log::warn!("Lc with {m} parameters exceeds the critical value table; using the 20-parameter row");
    }
    Ok(HansenLcResult {
        lc_statistic: total / t_len as f64,
        n_params: m,
        critical_values,
        table_exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{ChiSquared, Distribution};

    /// Quantiles of Σ_k χ²_m,k / (kπ)², the integrated squared m-dimensional
    /// Brownian bridge, by simulation.
    fn simulated_quantiles(m: usize, draws: usize) -> [f64; 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
        let chi = ChiSquared::new(m as f64).unwrap();
        let terms = 200;
        let pi2 = std::f64::consts::PI.powi(2);
        let tail: f64 = 1.0 / 6.0 - (1..=terms).map(|k| 1.0 / (k as f64 * k as f64 * pi2)).sum::<f64>();
        let mut vals: Vec<f64> = (0..draws)
            .map(|_| {
                (1..=terms).map(|k| chi.sample(&mut rng) / (k as f64 * k as f64 * pi2)).sum::<f64>() + m as f64 * tail
            })
            .collect();
        vals.sort_by(f64::total_cmp);
        let q = |p: f64| vals[((draws as f64) * p) as usize];
        [q(0.99), q(0.95), q(0.90)]
    }

    #[test]
    fn table_matches_limit_distribution() {
        for m in [1, 3, 8, 15, 20] {
            let sim = simulated_quantiles(m, 40_000);
            let row = LC_TABLE[m - 1];
            for (s, t) in sim.iter().zip(row) {
                assert!((s - t).abs() / t < 0.05, "m={m}: simulated {s} vs table {t}");
            }
        }
    }

    #[test]
    fn table_rows_are_monotone() {
        for w in LC_TABLE.windows(2) {
            for j in 0..3 {
                assert!(w[1][j] > w[0][j]);
            }
        }
        for r in LC_TABLE {
            assert!(r[0] > r[1] && r[1] > r[2]);
        }
    }

    #[test]
    fn oversized_parameter_count_uses_last_row() {
        let (cv, exact) = hansen_critical_values(45);
        assert!(!exact);
        assert_eq!(cv.one, 5.13);
        let (cv, exact) = hansen_critical_values(15);
        assert!(exact);
        assert_eq!(cv.five, 3.54);
    }

    #[test]
    fn three_asset_var1_has_fifteen_parameters() {
        let panel = crate::synth::simulate(&crate::synth::DgpSpec::white_noise(3, 600, 3)).unwrap().panel;
        let r = hansen_lc(&panel, 1).unwrap();
        assert_eq!(r.n_params, 15);
        assert!(r.lc_statistic > 0.0);
    }
}
