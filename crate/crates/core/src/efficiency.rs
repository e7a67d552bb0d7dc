//! Cumulative impulse-response multiplier Φ(1) = (I - A_1 - … - A_q)⁻¹ and
//! the joint degree of market efficiency ζ = σ_max(Φ(1) - I).
//!
//! ζ is zero exactly when the coefficient matrices sum to zero, which is the
//! efficient-market case.

use std::io::Write;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bootstrap::BandPath;
use crate::error::{Error, Result};
use crate::market_data::ISO_DATE;
use crate::tv_var::TvVarEstimate;

/// Condition number of I - ΣA above which Φ(1) is treated as undefined.
pub const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeNorm {
    /// Square root of the largest eigenvalue of (Φ-I)'(Φ-I).
    #[default]
    Spectral,
    /// Square root of the largest entry of (Φ-I)'(Φ-I); sensitivity analysis only.
    ElementwiseMax,
}

pub fn cumulative_multiplier(coefs: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let n = coefs.first().map_or(0, |a| a.nrows());
    let mut m = DMatrix::<f64>::identity(n, n);
    for a in coefs {
        m -= a;
    }
    let sv = m.singular_values();
    // Scale against the identity as well, so that a 1×1 system near a unit
    // root is caught even though its condition number is 1.
    let (lo, hi) = (sv.min(), sv.max().max(1.0));
    if !(lo > 0.0) || hi / lo > SINGULAR_CONDITION {
        return Err(Error::Singular {
            what: "cumulative multiplier",
            pivot: if hi > 0.0 { lo / hi } else { 0.0 },
        });
    }
    m.try_inverse().ok_or(Error::Singular {
        what: "cumulative multiplier",
        pivot: 0.0,
    })
}

pub fn joint_degree(phi1: &DMatrix<f64>) -> f64 {
    joint_degree_with(phi1, DegreeNorm::Spectral)
}

pub fn joint_degree_with(phi1: &DMatrix<f64>, norm: DegreeNorm) -> f64 {
    let n = phi1.nrows();
    let dev = phi1 - DMatrix::<f64>::identity(n, n);
    match norm {
        DegreeNorm::Spectral => crate::linalg::spectral_norm(&dev),
        DegreeNorm::ElementwiseMax => (dev.transpose() * &dev).max().max(0.0).sqrt(),
    }
}

/// ζ for one set of coefficient matrices, `None` when Φ(1) is undefined.
pub fn zeta_of(coefs: &[DMatrix<f64>]) -> Option<f64> {
    zeta_with(coefs, DegreeNorm::Spectral)
}

pub fn zeta_with(coefs: &[DMatrix<f64>], norm: DegreeNorm) -> Option<f64> {
    cumulative_multiplier(coefs).ok().map(|phi| joint_degree_with(&phi, norm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPath {
    pub dates: Vec<NaiveDate>,
    pub zeta: Vec<Option<f64>>,
    pub band_low: Option<Vec<Option<f64>>>,
    pub band_high: Option<Vec<Option<f64>>>,
    pub singular: Vec<bool>,
}

pub fn efficiency_path(estimate: &TvVarEstimate) -> EfficiencyPath {
    efficiency_path_with(estimate, DegreeNorm::Spectral)
}

pub fn efficiency_path_with(estimate: &TvVarEstimate, norm: DegreeNorm) -> EfficiencyPath {
    let zeta: Vec<Option<f64>> = estimate.a_path.iter().map(|a| zeta_with(a, norm)).collect();
    let singular = zeta.iter().map(Option::is_none).collect();
    EfficiencyPath {
        dates: estimate.dates.clone(),
        zeta,
        band_low: None,
        band_high: None,
        singular,
    }
}

impl EfficiencyPath {
    pub fn attach_bands(&mut self, bands: &BandPath) -> Result<()> {
        if bands.dates != self.dates {
            return Err(Error::Config("band dates do not match the efficiency path".into()));
        }
        self.band_low = Some(bands.lower.clone());
        self.band_high = Some(bands.upper.clone());
        Ok(())
    }

    /// Columns: date, zeta, low, high, singular. Missing values are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "zeta", "low", "high", "singular"])?;
        for (t, date) in self.dates.iter().enumerate() {
            let low = self.band_low.as_ref().and_then(|b| b[t]);
            let high = self.band_high.as_ref().and_then(|b| b[t]);
            w.write_record([
                date.format(ISO_DATE).to_string(),
                cell(self.zeta[t]),
                cell(low),
                cell(high),
                u8::from(self.singular[t]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
