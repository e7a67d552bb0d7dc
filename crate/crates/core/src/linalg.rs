//! Small dense least-squares helpers shared by the constant-coefficient
//! estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on |R_ii| / max |R_jj| below which a QR factor is
/// treated as rank deficient.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct OlsFit {
    /// k × m coefficients, one column per left-hand-side variable.
    pub coef: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    /// (X'X)^{-1}
    pub xtx_inv: DMatrix<f64>,
}

impl OlsFit {
    pub fn rss(&self, column: usize) -> f64 {
        self.residuals.column(column).norm_squared()
    }
}

/// Multi-response OLS through a Householder QR of the design.
pub fn ols(x: &DMatrix<f64>, y: &DMatrix<f64>, what: &'static str) -> Result<OlsFit> {
    let (rows, k) = x.shape();
    if rows < k || k == 0 {
        return Err(Error::InsufficientData {
            what,
            needed: k.max(1),
            found: rows,
        });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if scale == 0.0 || (0..k).any(|i| r[(i, i)].abs() <= RANK_TOL * scale) {
        return Err(Error::RankDeficient { what });
    }
    let qty = qr.q().transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { what })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(Error::RankDeficient { what })?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let residuals = y - x * &coef;
    Ok(OlsFit {
        coef,
        residuals,
        xtx_inv,
    })
}

pub fn ols_vec(x: &DMatrix<f64>, y: &DVector<f64>, what: &'static str) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
    let fit = ols(x, &DMatrix::from_column_slice(y.len(), 1, y.as_slice()), what)?;
    Ok((
        fit.coef.column(0).into_owned(),
        fit.residuals.column(0).into_owned(),
        fit.xtx_inv,
    ))
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Spectral radius of the VAR companion matrix built from `coefs`.
pub fn companion_spectral_radius(coefs: &[DMatrix<f64>]) -> f64 {
    let q = coefs.len();
    if q == 0 {
        return 0.0;
    }
    let n = coefs[0].nrows();
    let mut comp = DMatrix::zeros(n * q, n * q);
    for (l, a) in coefs.iter().enumerate() {
        comp.view_mut((0, l * n), (n, n)).copy_from(a);
    }
    for i in n..n * q {
        comp[(i, i - n)] = 1.0;
    }
    comp.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_exact_coefficients() {
        let x = DMatrix::from_fn(20, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => ((i * 7) % 5) as f64,
        });
        let beta = DVector::from_vec(vec![1.5, -0.25, 2.0]);
        let y = &x * &beta;
        let (b, e, _) = ols_vec(&x, &y, "test").unwrap();
        assert!((b - beta).amax() < 1e-12);
        assert!(e.amax() < 1e-10);
    }

    #[test]
    fn ols_flags_collinear_columns() {
        let x = DMatrix::from_fn(10, 2, |i, _| i as f64);
        let y = DMatrix::from_fn(10, 1, |i, _| i as f64);
        assert!(matches!(ols(&x, &y, "t"), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn companion_radius_of_scalar_ar() {
        let a = vec![DMatrix::from_element(1, 1, 0.5)];
        assert!((companion_spectral_radius(&a) - 0.5).abs() < 1e-12);
        // x_t = 0.5 x_{t-1} + 0.3 x_{t-2}: roots of z^2 - 0.5 z - 0.3
        let a2 = vec![DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 0.3)];
        let root = (0.5 + (0.25f64 + 1.2).sqrt()) / 2.0;
        assert!((companion_spectral_radius(&a2) - root).abs() < 1e-12);
    }
}
