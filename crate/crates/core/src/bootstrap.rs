//! Residual bootstrap of the ζ path under the efficient-market null.
//!
//! Each replication draws whole residual rows with replacement, adds the
//! estimated intercept (all slope coefficients set to zero), refits the
//! TV-VAR with the original configuration and records ζ*_t. Bands are
//! pointwise empirical quantiles across replications.
//!
//! Replication `b` is seeded with `derive_seed(master_seed, b)`, the SplitMix64
//! output for state `master_seed + (b + 1)·0x9E3779B97F4A7C15`, and drives a
//! ChaCha8 stream. Results are independent of scheduling and thread count.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::efficiency::zeta_of;
use crate::error::{Error, Result};
use crate::market_data::{AlignedPanel, PanelKind};
use crate::tv_var::{fit_tv_var, TvVarConfig, TvVarEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleMode {
    #[default]
    IidRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    /// 0 disables the bootstrap.
    pub replications: usize,
    pub coverage: f64,
    pub master_seed: u64,
    pub resample_mode: ResampleMode,
    /// Worker threads; 0 uses the global pool. Has no effect on results.
    #[serde(skip_serializing)]
    pub workers: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replications: 10_000,
            coverage: 0.95,
            master_seed: 20_200_311,
            resample_mode: ResampleMode::IidRows,
            workers: 0,
        }
    }
}

/// Smallest replication count accepted for band estimation.
pub const MIN_REPLICATIONS: usize = 100;

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.coverage > 0.0 && self.coverage < 1.0) {
            return Err(Error::Config(format!("coverage must lie in (0, 1), got {}", self.coverage)));
        }
        if self.replications > 0 && self.replications < MIN_REPLICATIONS {
            return Err(Error::Config(format!(
                "bootstrap needs at least {MIN_REPLICATIONS} replications, got {}",
                self.replications
            )));
        }
        Ok(())
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master_seed: u64, replication: u64) -> u64 {
    mix64(master_seed.wrapping_add(replication.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// x*_t = ν̂ + ε*_t with ε*_t drawn as whole rows, with replacement, from
/// the column-centered residuals. One row per entry of `dates`.
pub fn resample_null_panel(
    residuals: &DMatrix<f64>,
    nu: &DVector<f64>,
    dates: &[NaiveDate],
    asset_ids: &[String],
    seed: u64,
) -> Result<AlignedPanel> {
    let rows = residuals.nrows();
    if rows < 10 {
        return Err(Error::InsufficientData {
            what: "residual bootstrap",
            needed: 10,
            found: rows,
        });
    }
    let n = residuals.ncols();
    let means: Vec<f64> = (0..n).map(|j| residuals.column(j).mean()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = DMatrix::zeros(dates.len(), n);
    for t in 0..dates.len() {
        let r = rng.random_range(0..rows);
        for j in 0..n {
            values[(t, j)] = nu[j] + residuals[(r, j)] - means[j];
        }
    }
    AlignedPanel::new(dates.to_vec(), values, asset_ids.to_vec(), PanelKind::Returns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPath {
    pub dates: Vec<NaiveDate>,
    pub coverage: f64,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    pub replications: usize,
    /// Replications whose refit failed outright.
    pub failed_replications: usize,
    /// Per date, replications without a defined ζ* (failed or singular).
    pub singular_counts: Vec<usize>,
    /// Replication-level ζ* paths, `replicates[b][t]`, when requested.
    #[serde(skip)]
    pub replicates: Option<Vec<Vec<Option<f64>>>>,
}

/// Linear-interpolation sample quantile (Hyndman-Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// ζ* paths for replications `0..replications`, in replication order.
pub fn null_replicates(
    estimate: &TvVarEstimate,
    panel: &AlignedPanel,
    tv_config: &TvVarConfig,
    boot: &BootstrapConfig,
) -> Result<Vec<Option<Vec<Option<f64>>>>> {
    let job = |b: usize| -> Option<Vec<Option<f64>>> {
        let seed = derive_seed(boot.master_seed, b as u64);
        let star = resample_null_panel(&estimate.residuals, &estimate.nu, &panel.dates, &panel.asset_ids, seed).ok()?;
        match fit_tv_var(&star, tv_config) {
            Ok(fit) => Some(fit.a_path.iter().map(|a| zeta_of(a)).collect()),
            Err(e) => {
                log::debug!("bootstrap replication {b} failed: {e}");
                None
            }
        }
    };
    let run = || (0..boot.replications).into_par_iter().map(job).collect::<Vec<_>>();
    if boot.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(boot.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(run))
    } else {
        Ok(run())
    }
}

/// Pointwise bands from replicate paths.
pub fn bands_from_replicates(
    dates: &[NaiveDate],
    replicates: &[Option<Vec<Option<f64>>>],
    coverage: f64,
) -> BandPath {
    let big_n = dates.len();
    let lo_p = (1.0 - coverage) / 2.0;
    let hi_p = (1.0 + coverage) / 2.0;
    let mut lower = Vec::with_capacity(big_n);
    let mut upper = Vec::with_capacity(big_n);
    let mut singular_counts = Vec::with_capacity(big_n);
    let mut column = Vec::with_capacity(replicates.len());
    for t in 0..big_n {
        column.clear();
        column.extend(replicates.iter().filter_map(|r| r.as_ref().and_then(|p| p[t])));
        singular_counts.push(replicates.len() - column.len());
        if column.is_empty() {
            lower.push(None);
            upper.push(None);
            continue;
        }
        column.sort_by(f64::total_cmp);
        lower.push(Some(quantile_sorted(&column, lo_p)));
        upper.push(Some(quantile_sorted(&column, hi_p)));
    }
    BandPath {
        dates: dates.to_vec(),
        coverage,
        lower,
        upper,
        replications: replicates.len(),
        failed_replications: replicates.iter().filter(|r| r.is_none()).count(),
        singular_counts,
        replicates: None,
    }
}

/// Bands around an existing fit of `panel`.
pub fn bootstrap_bands_for(
    estimate: &TvVarEstimate,
    panel: &AlignedPanel,
    tv_config: &TvVarConfig,
    boot: &BootstrapConfig,
    keep_replicates: bool,
) -> Result<BandPath> {
    boot.validate()?;
    if boot.replications == 0 {
        return Err(Error::Config("bootstrap disabled (0 replications)".into()));
    }
    let reps = null_replicates(estimate, panel, tv_config, boot)?;
    let mut bands = bands_from_replicates(&estimate.dates, &reps, boot.coverage);
    if keep_replicates {
        let n = estimate.dates.len();
        bands.replicates = Some(reps.into_iter().map(|r| r.unwrap_or_else(|| vec![None; n])).collect());
    }
    Ok(bands)
}

/// Fits the TV-VAR on `panel`, then bootstraps ζ bands under the null.
pub fn bootstrap_bands(panel: &AlignedPanel, tv_config: &TvVarConfig, boot: &BootstrapConfig) -> Result<BandPath> {
    let estimate = fit_tv_var(panel, tv_config)?;
    bootstrap_bands_for(&estimate, panel, tv_config, boot, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{simulate, DgpSpec};

    fn dates(n: usize) -> Vec<NaiveDate> {
        AlignedPanel::synthetic_returns(DMatrix::zeros(n, 1), NaiveDate::from_ymd_opt(2001, 1, 1).unwrap()).dates
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("a{i}")).collect()
    }

    #[test]
    fn derived_seeds_are_distinct_and_stable() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|b| derive_seed(42, b)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_eq!(derive_seed(42, 7), derive_seed(42, 7));
        assert_ne!(derive_seed(42, 7), derive_seed(43, 7));
        // SplitMix64 reference: first output for state 0 + γ.
        assert_eq!(derive_seed(0, 0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn resampling_is_deterministic() {
        let res = DMatrix::from_fn(50, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let nu = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let a = resample_null_panel(&res, &nu, &dates(60), &ids(3), 9).unwrap();
        let b = resample_null_panel(&res, &nu, &dates(60), &ids(3), 9).unwrap();
        assert_eq!(a, b);
        let c = resample_null_panel(&res, &nu, &dates(60), &ids(3), 10).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn zero_residuals_give_intercept() {
        let nu = DVector::from_vec(vec![0.5, -0.25]);
        let p = resample_null_panel(&DMatrix::zeros(20, 2), &nu, &dates(30), &ids(2), 1).unwrap();
        for t in 0..30 {
            assert_eq!(p.values[(t, 0)], 0.5);
            assert_eq!(p.values[(t, 1)], -0.25);
        }
    }

    #[test]
    fn rows_are_drawn_jointly() {
        // Column 1 is a fixed function of column 0, so joint draws keep it.
        let res = DMatrix::from_fn(40, 2, |i, j| if j == 0 { i as f64 } else { 2.0 * i as f64 });
        let p = resample_null_panel(&res, &DVector::zeros(2), &dates(100), &ids(2), 3).unwrap();
        let (m0, m1) = (19.5, 39.0);
        for t in 0..100 {
            assert!(((p.values[(t, 1)] + m1) - 2.0 * (p.values[(t, 0)] + m0)).abs() < 1e-12);
        }
    }

    #[test]
    fn resampled_means_near_zero() {
        let sim = simulate(&DgpSpec::white_noise(2, 200, 4)).unwrap();
        let res = sim.panel.values.clone();
        let sd: Vec<f64> = (0..2)
            .map(|j| {
                let c = res.column(j);
                let m = c.mean();
                (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / c.len() as f64).sqrt()
            })
            .collect();
        let p = resample_null_panel(&res, &DVector::zeros(2), &dates(10_000), &ids(2), 77).unwrap();
        for j in 0..2 {
            assert!(p.values.column(j).mean().abs() < 3.0 * sd[j] / 100.0);
        }
    }

    #[test]
    fn too_few_residual_rows() {
        assert!(resample_null_panel(&DMatrix::zeros(9, 1), &DVector::zeros(1), &dates(20), &ids(1), 1).is_err());
    }

    #[test]
    fn quantile_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&v, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(BootstrapConfig { replications: 50, ..Default::default() }.validate().is_err());
        assert!(BootstrapConfig { coverage: 1.0, ..Default::default() }.validate().is_err());
        assert!(BootstrapConfig { replications: 0, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn bands_are_deterministic_and_nested() {
        let panel = simulate(&DgpSpec::white_noise(2, 120, 12)).unwrap().panel;
        let tv = TvVarConfig::default();
        let boot = BootstrapConfig {
            replications: 100,
            master_seed: 5,
            ..Default::default()
        };
        let a = bootstrap_bands(&panel, &tv, &boot).unwrap();
        let b = bootstrap_bands(&panel, &tv, &BootstrapConfig { workers: 1, ..boot }).unwrap();
        assert_eq!(a, b);
        let narrow = bootstrap_bands(&panel, &tv, &BootstrapConfig { coverage: 0.8, ..boot }).unwrap();
        for t in 0..a.dates.len() {
            let (lo, hi) = (a.lower[t].unwrap(), a.upper[t].unwrap());
            let (nlo, nhi) = (narrow.lower[t].unwrap(), narrow.upper[t].unwrap());
            assert!(lo <= nlo && nhi <= hi);
            assert!(lo <= hi);
            assert!(hi.is_finite());
        }
        assert_eq!(a.failed_replications, 0);
    }
}
