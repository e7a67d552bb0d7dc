//! Block-tridiagonal Cholesky with an optional dense border.
//!
//! The matrix has the form
//!
//! ```text
//! [ K   G ]     K = tridiag(sub_t, diag_t, sub_t')   (N blocks of size m)
//! [ G'  C ]     G = [border_0; …; border_{N-1}]      (N·m × b)
//! ```
//!
//! K is factored block by block, the border is eliminated through the
//! b × b Schur complement C - G'K⁻¹G. Cost is O(N m³ + N m² (b + c)) for
//! c right-hand sides.

use nalgebra::DMatrix;

/// Pivots below this fraction of the largest diagonal entry count as a
/// failed factorization.
const PIVOT_TOL: f64 = 1e-15;
/// Ridge added to the diagonal when the plain factorization fails.
pub const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    pub diag: Vec<DMatrix<f64>>,
    /// `sub[t]` is the (t+1, t) block.
    pub sub: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct BlockCholesky {
    l: Vec<DMatrix<f64>>,
    /// `c[t]` is the (t+1, t) block of the factor.
    c: Vec<DMatrix<f64>>,
    pub min_pivot: f64,
}

impl BlockTridiagonal {
    pub fn n_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn block_size(&self) -> usize {
        self.diag.first().map_or(0, |d| d.nrows())
    }

    pub fn max_diagonal(&self) -> f64 {
        self.diag
            .iter()
            .flat_map(|d| d.diagonal().iter().copied().collect::<Vec<_>>())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Factors K + ridge·I. On failure returns the smallest pivot reached.
    pub fn factor(&self, ridge: f64) -> Result<BlockCholesky, f64> {
        let tol = PIVOT_TOL * self.max_diagonal().max(f64::MIN_POSITIVE);
        let mut l: Vec<DMatrix<f64>> = Vec::with_capacity(self.n_blocks());
        let mut c: Vec<DMatrix<f64>> = Vec::with_capacity(self.sub.len());
        let mut min_pivot = f64::INFINITY;
        for (t, d) in self.diag.iter().enumerate() {
            let mut block = d.clone();
            if t > 0 {
                // C_t = sub L_{t-1}^{-T}  ⇔  L_{t-1} C_t' = sub'
                let ct = l[t - 1]
                    .solve_lower_triangular(&self.sub[t - 1].transpose())
                    .expect("nonzero pivots")
                    .transpose();
                block -= &ct * ct.transpose();
                c.push(ct);
            }
            for i in 0..block.nrows() {
                block[(i, i)] += ridge;
            }
            let chol = match block.cholesky() {
                Some(ch) => ch,
                None => return Err(min_pivot.min(0.0)),
            };
            let lt = chol.l();
            let piv = lt.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
            min_pivot = min_pivot.min(piv);
            if !(piv > tol) {
                return Err(min_pivot);
            }
            l.push(lt);
        }
        Ok(BlockCholesky { l, c, min_pivot })
    }
}

impl BlockCholesky {
    /// Solves K X = R for per-block right-hand sides (m × c each).
    pub fn solve(&self, rhs: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let n = self.l.len();
        assert_eq!(rhs.len(), n);
        let mut y: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        for t in 0..n {
            let mut r = rhs[t].clone();
            if t > 0 {
                r -= &self.c[t - 1] * &y[t - 1];
            }
            y.push(self.l[t].solve_lower_triangular(&r).expect("nonzero pivots"));
        }
        let mut x = y;
        for t in (0..n).rev() {
            if t + 1 < n {
                let upd = self.c[t].transpose() * &x[t + 1];
                x[t] -= upd;
            }
            x[t] = self.l[t].tr_solve_lower_triangular(&x[t]).expect("nonzero pivots");
        }
        x
    }

    /// Diagonal blocks and (t+1, t) blocks of K⁻¹.
    pub fn selected_inverse(&self) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let n = self.l.len();
        let m = self.l[0].nrows();
        let eye = DMatrix::<f64>::identity(m, m);
        let l_inv: Vec<DMatrix<f64>> = self
            .l
            .iter()
            .map(|l| l.solve_lower_triangular(&eye).expect("nonzero pivots"))
            .collect();
        let mut diag = vec![DMatrix::zeros(m, m); n];
        let mut sub = vec![DMatrix::zeros(m, m); n.saturating_sub(1)];
        diag[n - 1] = l_inv[n - 1].transpose() * &l_inv[n - 1];
        for t in (0..n.saturating_sub(1)).rev() {
            // Σ_{t,t+1} = -L_t^{-T} C_{t+1}' Σ_{t+1,t+1}
            let upper = -(l_inv[t].transpose() * self.c[t].transpose() * &diag[t + 1]);
            // Σ_{t,t} = L_t^{-T} (L_t^{-1} - C_{t+1}' Σ_{t+1,t})
            diag[t] = l_inv[t].transpose() * (&l_inv[t] - self.c[t].transpose() * upper.transpose());
            sub[t] = upper.transpose();
        }
        (diag, sub)
    }
}

#[derive(Debug, Clone)]
pub struct BorderedSystem {
    pub tri: BlockTridiagonal,
    /// m × b coupling of each block with the border unknowns; empty when b = 0.
    pub border: Vec<DMatrix<f64>>,
    pub corner: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct BorderedSolution {
    pub blocks: Vec<DMatrix<f64>>,
    /// b × c
    pub border: DMatrix<f64>,
    pub ridge: f64,
    pub min_pivot: f64,
}

#[derive(Debug, Clone)]
pub struct BorderedFactor {
    chol: BlockCholesky,
    /// K⁻¹G, one m × b block per period.
    kinv_g: Vec<DMatrix<f64>>,
    schur: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    schur_inv: DMatrix<f64>,
    pub ridge: f64,
    pub min_pivot: f64,
}

impl BorderedSystem {
    pub fn border_size(&self) -> usize {
        self.corner.nrows()
    }

    fn try_factor(&self, ridge: f64) -> Result<BorderedFactor, f64> {
        let chol = self.tri.factor(ridge)?;
        let b = self.border_size();
        let kinv_g = if b > 0 { chol.solve(&self.border) } else { Vec::new() };
        let mut schur = self.corner.clone();
        for (g, kg) in self.border.iter().zip(&kinv_g) {
            schur -= g.transpose() * kg;
        }
        for i in 0..b {
            schur[(i, i)] += ridge;
        }
        let scale = self.corner.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let (schur, schur_piv) = if b > 0 {
            let ch = schur.cholesky().ok_or(0.0)?;
            let piv = ch.l().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
            if !(piv > PIVOT_TOL * scale) {
                return Err(piv);
            }
            (Some(ch), piv)
        } else {
            (None, f64::INFINITY)
        };
        let schur_inv = schur.as_ref().map_or_else(|| DMatrix::zeros(0, 0), |s| s.inverse());
        let min_pivot = chol.min_pivot.min(schur_piv);
        Ok(BorderedFactor {
            chol,
            kinv_g,
            schur,
            schur_inv,
            ridge,
            min_pivot,
        })
    }

    /// Factors the system, retrying once with a diagonal ridge when the
    /// plain factorization breaks down. On failure returns the smallest pivot.
    pub fn factor(&self) -> Result<BorderedFactor, f64> {
        match self.try_factor(0.0) {
            Ok(f) => Ok(f),
            Err(_) => {
                let ridge = RIDGE.max(1e-13 * self.tri.max_diagonal());
                self.try_factor(ridge)
            }
        }
    }
}

impl BorderedFactor {
    pub fn solve(&self, rhs: &[DMatrix<f64>], rhs_border: &DMatrix<f64>) -> BorderedSolution {
        let x_r = self.chol.solve(rhs);
        let Some(schur) = &self.schur else {
            return BorderedSolution {
                blocks: x_r,
                border: DMatrix::zeros(0, rhs[0].ncols()),
                ridge: self.ridge,
                min_pivot: self.min_pivot,
            };
        };
        // ν = S⁻¹ (s - G'K⁻¹r), β = K⁻¹r - K⁻¹G ν
        let mut s = rhs_border.clone();
        for (kg, rt) in self.kinv_g.iter().zip(rhs) {
            // G'K⁻¹r = (K⁻¹G)'r by symmetry of K
            s -= kg.transpose() * rt;
        }
        let border = schur.solve(&s);
        let blocks = x_r
            .into_iter()
            .zip(&self.kinv_g)
            .map(|(x, kg)| x - kg * &border)
            .collect();
        BorderedSolution {
            blocks,
            border,
            ridge: self.ridge,
            min_pivot: self.min_pivot,
        }
    }

    /// Diagonal and (t+1, t) blocks of the leading N·m × N·m part of the
    /// full inverse.
    pub fn selected_inverse(&self) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let (mut diag, mut sub) = self.chol.selected_inverse();
        if !self.kinv_g.is_empty() {
            for t in 0..diag.len() {
                diag[t] += &self.kinv_g[t] * &self.schur_inv * self.kinv_g[t].transpose();
            }
            for t in 0..sub.len() {
                sub[t] += &self.kinv_g[t + 1] * &self.schur_inv * self.kinv_g[t].transpose();
            }
        }
        (diag, sub)
    }

    /// Border rows of the full inverse: the N·m × b coupling blocks and the
    /// b × b corner.
    pub fn border_inverse(&self) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
        let cross = self.kinv_g.iter().map(|kg| -(kg * &self.schur_inv)).collect();
        (cross, self.schur_inv.clone())
    }
}
