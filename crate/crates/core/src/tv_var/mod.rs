//! TV-VAR(q) with random-walk coefficients, estimated as one penalized
//! (GLS) regression over all periods.
//!
//! The smoothing ratio λ = σ_ε²/σ_v² weighs coefficient increments against
//! observation errors. The intercept is constant over time. Each equation's
//! normal equations are block tridiagonal with an intercept border, and all
//! equations share the same matrix, so a single O(T) factorization serves
//! every equation.

pub mod banded;
mod system;

pub use system::StackedSystem;

use std::io::Write;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{AlignedPanel, PanelKind, ISO_DATE};
use crate::var_base::var_design;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InterceptMode {
    /// One intercept per equation, fixed over time.
    #[default]
    Constant,
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    BandedCholesky,
    /// Explicit dense normal equations; O(T³), for verification only.
    DenseReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMode {
    #[default]
    Fixed,
    /// Refit once with λ re-estimated from the first pass's residual and
    /// coefficient-increment variances.
    TwoPass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvVarConfig {
    pub q: usize,
    pub lambda: f64,
    pub lambda_mode: LambdaMode,
    pub intercept: InterceptMode,
    pub solver: Solver,
}

impl Default for TvVarConfig {
    fn default() -> Self {
        Self {
            q: 1,
            lambda: 1.0,
            lambda_mode: LambdaMode::Fixed,
            intercept: InterceptMode::Constant,
            solver: Solver::BandedCholesky,
        }
    }
}

impl TvVarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::Config("TV-VAR lag order q must be at least 1".into()));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("smoothing ratio must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TvVarEstimate {
    /// Dates of the N = T - q estimation periods.
    pub dates: Vec<NaiveDate>,
    pub asset_ids: Vec<String>,
    pub nu: DVector<f64>,
    /// `a_path[t][l]` is A_{l+1,t}.
    pub a_path: Vec<Vec<DMatrix<f64>>>,
    /// N × n
    pub residuals: DMatrix<f64>,
    pub config: TvVarConfig,
    /// λ actually used in the final pass.
    pub lambda_used: f64,
    pub effective_obs: usize,
    /// Diagonal ridge applied to the normal equations (0 when none was needed).
    pub ridge: f64,
    pub min_pivot: f64,
}

impl TvVarEstimate {
    pub fn n_assets(&self) -> usize {
        self.nu.len()
    }

    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }

    /// Σ_t ‖β_{t+1} - β_t‖² over all coefficients.
    pub fn roughness(&self) -> f64 {
        self.a_path
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| (a - b).norm_squared()).sum::<f64>())
            .sum()
    }

    /// Long format: date, lag, row, col, value.
    pub fn write_coefficients_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "l", "row", "col", "value"])?;
        for (date, mats) in self.dates.iter().zip(&self.a_path) {
            let d = date.format(ISO_DATE).to_string();
            for (l, a) in mats.iter().enumerate() {
                for i in 0..a.nrows() {
                    for j in 0..a.ncols() {
                        w.write_record([
                            d.clone(),
                            (l + 1).to_string(),
                            self.asset_ids[i].clone(),
                            self.asset_ids[j].clone(),
                            a[(i, j)].to_string(),
                        ])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Sets up the penalized regression for a returns panel.
pub fn build_stacked_system(panel: &AlignedPanel, config: &TvVarConfig) -> Result<StackedSystem> {
    panel.expect_kind(PanelKind::Returns)?;
    config.validate()?;
    let t_len = panel.n_periods();
    if t_len < config.q + 3 {
        return Err(Error::InsufficientData {
            what: "TV-VAR estimation",
            needed: config.q + 3,
            found: t_len,
        });
    }
    if !panel.values.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("panel contains non-finite values".into()));
    }
    let (regressors, targets) = var_design(&panel.values, config.q, config.q, false);
    Ok(StackedSystem {
        n: panel.n_assets(),
        q: config.q,
        lambda: config.lambda,
        intercept: config.intercept,
        targets,
        regressors,
    })
}

/// Solution of a stacked system: intercepts and per-period n × nq
/// coefficient rows (row i holds equation i).
#[derive(Debug, Clone)]
pub struct SystemSolution {
    pub nu: DVector<f64>,
    pub betas: Vec<DMatrix<f64>>,
    pub ridge: f64,
    pub min_pivot: f64,
}

pub fn solve_system(system: &StackedSystem, solver: Solver) -> Result<SystemSolution> {
    match solver {
        Solver::BandedCholesky => solve_banded(system),
        Solver::DenseReference => solve_dense(system),
    }
}

fn solve_banded(system: &StackedSystem) -> Result<SystemSolution> {
    let (bordered, rhs, rhs_border) = system.normal_equations();
    let factor = bordered.factor().map_err(|pivot| Error::Singular {
        what: "TV-VAR normal equations",
        pivot,
    })?;
    let sol = factor.solve(&rhs, &rhs_border);
    let nu = if sol.border.nrows() == 1 {
        sol.border.row(0).transpose()
    } else {
        DVector::zeros(system.n)
    };
    Ok(SystemSolution {
        nu,
        betas: sol.blocks.into_iter().map(|b| b.transpose()).collect(),
        ridge: sol.ridge,
        min_pivot: sol.min_pivot,
    })
}

fn solve_dense(system: &StackedSystem) -> Result<SystemSolution> {
    let (w, y) = system.dense_design();
    let normal = w.transpose() * &w;
    let rhs = w.transpose() * y;
    let scale = normal.diagonal().amax();
    let try_solve = |ridge: f64| {
        let mut m = normal.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        m.cholesky().and_then(|c| {
            let piv = c.l().diagonal().iter().fold(f64::INFINITY, |a, v| a.min(v * v));
            (piv > 1e-15 * scale).then(|| (c.solve(&rhs), piv))
        })
    };
    let (v, ridge, piv) = match try_solve(0.0) {
        Some((v, p)) => (v, 0.0, p),
        None => {
            let ridge = banded::RIDGE.max(1e-13 * scale);
            let (v, p) = try_solve(ridge).ok_or(Error::Singular {
                what: "dense TV-VAR normal equations",
                pivot: 0.0,
            })?;
            (v, ridge, p)
        }
    };
    let (nu, betas) = system.unpack(&v);
    Ok(SystemSolution {
        nu,
        betas,
        ridge,
        min_pivot: piv,
    })
}

fn estimate_from(panel: &AlignedPanel, system: &StackedSystem, sol: SystemSolution, config: TvVarConfig) -> TvVarEstimate {
    let n = system.n;
    let q = system.q;
    let big_n = system.n_periods();
    let a_path = sol
        .betas
        .iter()
        .map(|b| (0..q).map(|l| b.columns(l * n, n).into_owned()).collect())
        .collect();
    let mut residuals = DMatrix::zeros(big_n, n);
    for t in 0..big_n {
        let pred = &sol.betas[t] * system.regressors.row(t).transpose() + &sol.nu;
        for i in 0..n {
            residuals[(t, i)] = system.targets[(t, i)] - pred[i];
        }
    }
    TvVarEstimate {
        dates: panel.dates[q..].to_vec(),
        asset_ids: panel.asset_ids.clone(),
        nu: sol.nu,
        a_path,
        residuals,
        config,
        lambda_used: system.lambda,
        effective_obs: big_n,
        ridge: sol.ridge,
        min_pivot: sol.min_pivot,
    }
}

/// Bounds for the re-estimated smoothing ratio in two-pass mode.
const LAMBDA_RANGE: (f64, f64) = (1e-8, 1e12);

pub fn fit_tv_var(panel: &AlignedPanel, config: &TvVarConfig) -> Result<TvVarEstimate> {
    let mut system = build_stacked_system(panel, config)?;
    let sol = solve_system(&system, config.solver)?;
    if config.lambda_mode == LambdaMode::Fixed {
        return Ok(estimate_from(panel, &system, sol, *config));
    }
    let (rss, rough) = system.fit_and_roughness(&sol.nu, &sol.betas);
    let sigma_e = rss / system.n_observation_rows() as f64;
    let sigma_v = rough / system.n_smoothness_rows().max(1) as f64;
    let lambda = if sigma_v > 0.0 {
        (sigma_e / sigma_v).clamp(LAMBDA_RANGE.0, LAMBDA_RANGE.1)
    } else {
        LAMBDA_RANGE.1
    };
    log::debug!("two-pass smoothing ratio: {} -> {lambda}", config.lambda);
    system.lambda = lambda;
    let sol = solve_system(&system, config.solver)?;
    Ok(estimate_from(panel, &system, sol, *config))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingDiagnostics {
    pub lambda: f64,
    pub rss: f64,
    pub roughness: f64,
    /// Trace of the map from observations to fitted values.
    pub edf: f64,
}

/// Hat-matrix trace tr(W_obs M⁻¹ W_obs'), assembled from the selected
/// blocks of M⁻¹ so that no dense inverse is formed. Summing the data terms
/// directly avoids the cancellation in dim - λ tr(M⁻¹P) at large λ.
fn effective_dof(system: &StackedSystem) -> Result<f64> {
    let (bordered, _, _) = system.normal_equations();
    let factor = bordered.factor().map_err(|pivot| Error::Singular {
        what: "TV-VAR normal equations",
        pivot,
    })?;
    let (diag, _) = factor.selected_inverse();
    let (cross, corner) = factor.border_inverse();
    let mut trace = 0.0;
    for (t, block) in diag.iter().enumerate() {
        let z = system.regressors.row(t).transpose();
        trace += (z.transpose() * block * &z)[(0, 0)];
        if let Some(c) = cross.get(t) {
            trace += 2.0 * (z.transpose() * c).sum();
        }
    }
    if corner.nrows() == 1 {
        trace += diag.len() as f64 * corner[(0, 0)];
    }
    Ok(system.n as f64 * trace)
}

/// Fit quality and path smoothness across a grid of smoothing ratios.
pub fn smoothing_profile(panel: &AlignedPanel, config: &TvVarConfig, lambda_grid: &[f64]) -> Result<Vec<SmoothingDiagnostics>> {
    if lambda_grid.is_empty() {
        return Err(Error::Config("smoothing grid is empty".into()));
    }
    lambda_grid
        .par_iter()
        .map(|&lambda| {
            let cfg = TvVarConfig {
                lambda,
                lambda_mode: LambdaMode::Fixed,
                ..*config
            };
            let system = build_stacked_system(panel, &cfg)?;
            let est = fit_tv_var(panel, &cfg)?;
            Ok(SmoothingDiagnostics {
                lambda,
                rss: est.rss(),
                roughness: est.roughness(),
                edf: effective_dof(&system)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
