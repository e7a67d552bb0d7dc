//! The penalized least-squares problem behind the TV-VAR fit.
//!
//! Unknowns are a time-invariant intercept ν (n values, optional) and, for
//! each of the N = T - q estimation periods, the coefficient vector
//! β_t ∈ R^{n²q}. Inside β_t the coefficients are stored equation-major:
//! entry `i·nq + l·n + j` is A_{l+1,t}[i, j].
//!
//! ```text
//! minimize  Σ_t ‖x_t - ν - (I_n ⊗ z_t') β_t‖² + λ Σ_t ‖β_{t+1} - β_t‖²
//! ```
//!
//! with z_t = [x_{t-1}; …; x_{t-q}]. There is no penalty row ahead of the
//! first period.

use nalgebra::{DMatrix, DVector};

use super::banded::{BlockTridiagonal, BorderedSystem};
use super::InterceptMode;

#[derive(Debug, Clone)]
pub struct StackedSystem {
    pub n: usize,
    pub q: usize,
    pub lambda: f64,
    pub intercept: InterceptMode,
    /// N × n left-hand sides x_t.
    pub targets: DMatrix<f64>,
    /// N × nq regressors z_t'.
    pub regressors: DMatrix<f64>,
}

impl StackedSystem {
    pub fn n_periods(&self) -> usize {
        self.targets.nrows()
    }

    pub fn coefs_per_period(&self) -> usize {
        self.n * self.n * self.q
    }

    /// Size of one diagonal block once the system is split by equation.
    pub fn block_size(&self) -> usize {
        self.n * self.q
    }

    pub fn n_intercepts(&self) -> usize {
        match self.intercept {
            InterceptMode::Constant => self.n,
            InterceptMode::Excluded => 0,
        }
    }

    pub fn n_time_varying_unknowns(&self) -> usize {
        self.coefs_per_period() * self.n_periods()
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_intercepts() + self.n_time_varying_unknowns()
    }

    pub fn n_observation_rows(&self) -> usize {
        self.n * self.n_periods()
    }

    pub fn n_smoothness_rows(&self) -> usize {
        self.coefs_per_period() * self.n_periods().saturating_sub(1)
    }

    /// Normal equations of a single equation. Every equation shares the same
    /// matrix; only the right-hand side differs, so the columns of the
    /// returned right-hand sides correspond to equations.
    pub fn normal_equations(&self) -> (BorderedSystem, Vec<DMatrix<f64>>, DMatrix<f64>) {
        let big_n = self.n_periods();
        let m = self.block_size();
        let lam = self.lambda;
        let eye = DMatrix::<f64>::identity(m, m);
        let mut diag = Vec::with_capacity(big_n);
        let mut rhs = Vec::with_capacity(big_n);
        let mut border = Vec::new();
        for t in 0..big_n {
            let z = self.regressors.row(t).transpose();
            let links = usize::from(t > 0) + usize::from(t + 1 < big_n);
            diag.push(&z * z.transpose() + &eye * (lam * links as f64));
            rhs.push(&z * self.targets.row(t));
            if self.intercept == InterceptMode::Constant {
                border.push(DMatrix::from_column_slice(m, 1, z.as_slice()));
            }
        }
        let sub = (0..big_n.saturating_sub(1)).map(|_| &eye * -lam).collect();
        let b = usize::from(self.intercept == InterceptMode::Constant);
        let corner = DMatrix::from_element(b, b, big_n as f64);
        let rhs_border = if b == 1 {
            DMatrix::from_fn(1, self.n, |_, i| self.targets.column(i).sum())
        } else {
            DMatrix::zeros(0, self.n)
        };
        (
            BorderedSystem {
                tri: BlockTridiagonal { diag, sub },
                border,
                corner,
            },
            rhs,
            rhs_border,
        )
    }

    /// Column index of ν_i in the dense layout.
    fn nu_col(&self, i: usize) -> usize {
        i
    }

    /// Column index of β_t[c] in the dense layout.
    fn beta_col(&self, t: usize, c: usize) -> usize {
        self.n_intercepts() + t * self.coefs_per_period() + c
    }

    /// Explicit dense design W and response y of the stacked regression
    /// (observation rows first, then √λ-scaled smoothness rows), for the
    /// reference solver and for tests.
    pub fn dense_design(&self) -> (DMatrix<f64>, DVector<f64>) {
        let big_n = self.n_periods();
        let (n, nq, m) = (self.n, self.block_size(), self.coefs_per_period());
        let rows = self.n_observation_rows() + self.n_smoothness_rows();
        let mut w = DMatrix::zeros(rows, self.n_unknowns());
        let mut y = DVector::zeros(rows);
        let mut r = 0;
        for t in 0..big_n {
            for i in 0..n {
                if self.intercept == InterceptMode::Constant {
                    w[(r, self.nu_col(i))] = 1.0;
                }
                for c in 0..nq {
                    w[(r, self.beta_col(t, i * nq + c))] = self.regressors[(t, c)];
                }
                y[r] = self.targets[(t, i)];
                r += 1;
            }
        }
        let s = self.lambda.sqrt();
        for t in 0..big_n.saturating_sub(1) {
            for c in 0..m {
                w[(r, self.beta_col(t + 1, c))] = s;
                w[(r, self.beta_col(t, c))] = -s;
                r += 1;
            }
        }
        (w, y)
    }

    /// Packs (ν, per-period n × nq coefficient rows) into the dense layout.
    pub fn pack(&self, nu: &DVector<f64>, betas: &[DMatrix<f64>]) -> DVector<f64> {
        let mut v = DVector::zeros(self.n_unknowns());
        for i in 0..self.n_intercepts() {
            v[self.nu_col(i)] = nu[i];
        }
        let nq = self.block_size();
        for (t, b) in betas.iter().enumerate() {
            for i in 0..self.n {
                for c in 0..nq {
                    v[self.beta_col(t, i * nq + c)] = b[(i, c)];
                }
            }
        }
        v
    }

    pub fn unpack(&self, v: &DVector<f64>) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let nu = DVector::from_fn(self.n, |i, _| if i < self.n_intercepts() { v[self.nu_col(i)] } else { 0.0 });
        let nq = self.block_size();
        let betas = (0..self.n_periods())
            .map(|t| DMatrix::from_fn(self.n, nq, |i, c| v[self.beta_col(t, i * nq + c)]))
            .collect();
        (nu, betas)
    }

    /// Penalized objective at a candidate solution.
    pub fn objective(&self, nu: &DVector<f64>, betas: &[DMatrix<f64>]) -> f64 {
        let (fit, rough) = self.fit_and_roughness(nu, betas);
        fit + self.lambda * rough
    }

    pub(crate) fn fit_and_roughness(&self, nu: &DVector<f64>, betas: &[DMatrix<f64>]) -> (f64, f64) {
        let mut rss = 0.0;
        for (t, b) in betas.iter().enumerate() {
            let pred = b * self.regressors.row(t).transpose() + nu;
            rss += (self.targets.row(t).transpose() - pred).norm_squared();
        }
        let rough = betas.windows(2).map(|w| (&w[1] - &w[0]).norm_squared()).sum();
        (rss, rough)
    }
}
