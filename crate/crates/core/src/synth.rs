//! Synthetic data-generating processes with known coefficient paths, used
//! to check every estimator against ground truth.

use std::io::Write;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::efficiency::zeta_of;
use crate::error::{Error, Result};
use crate::linalg::companion_spectral_radius;
use crate::market_data::{AlignedPanel, ISO_DATE};

/// Coefficient matrices given as `[lag][row][col]`.
pub type CoefList = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DgpKind {
    WhiteNoise,
    /// Integrated levels x_t = x_{t-1} + ν + ε_t.
    RandomWalk,
    ConstantVar {
        coefs: CoefList,
    },
    /// Coefficients interpolated linearly from `start` (first period) to
    /// `end` (last period).
    TvVarLinearDrift {
        start: CoefList,
        end: CoefList,
    },
    /// A_t = A_{t-1} + V_t with i.i.d. N(0, coef_sd²) entries; increments
    /// that would push the companion spectral radius above `max_radius` are
    /// dropped.
    TvVarRandomWalkCoeffs {
        initial: CoefList,
        coef_sd: f64,
        #[serde(default = "default_max_radius")]
        max_radius: f64,
    },
}

impl DgpKind {
    pub const TAGS: [&'static str; 5] = [
        "white-noise",
        "random-walk",
        "constant-var",
        "tv-var-linear-drift",
        "tv-var-random-walk-coeffs",
    ];
}

fn default_max_radius() -> f64 {
    0.95
}

fn default_sd() -> f64 {
    0.01
}

fn default_burn_in() -> usize {
    200
}

fn default_q() -> usize {
    1
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    #[serde(flatten)]
    pub kind: DgpKind,
    pub n: usize,
    /// Number of simulated periods T.
    pub periods: usize,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default)]
    pub intercept: Option<Vec<f64>>,
    #[serde(default = "default_sd")]
    pub innovation_sd: f64,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
}

impl DgpSpec {
    pub fn white_noise(n: usize, periods: usize, seed: u64) -> Self {
        Self {
            kind: DgpKind::WhiteNoise,
            n,
            periods,
            q: 1,
            intercept: None,
            innovation_sd: default_sd(),
            seed,
            burn_in: default_burn_in(),
            start_date: default_start(),
        }
    }

    /// Parses a TOML spec, reporting an unknown `kind` by name.
    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Value = toml::from_str(text)?;
        match value.get("kind").and_then(|k| k.as_str()) {
            None => return Err(Error::Config("field `kind`: missing DGP kind".into())),
            Some(k) if !DgpKind::TAGS.contains(&k) => {
                return Err(Error::Config(format!(
                    "field `kind`: unknown DGP kind `{k}` (expected one of {})",
                    DgpKind::TAGS.join(", ")
                )))
            }
            Some(_) => {}
        }
        let spec: DgpSpec = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    fn matrices(&self, list: &CoefList, what: &str) -> Result<Vec<DMatrix<f64>>> {
        if list.len() != self.q {
            return Err(Error::Config(format!("{what}: expected {} lag matrices, got {}", self.q, list.len())));
        }
        list.iter()
            .map(|rows| {
                if rows.len() != self.n || rows.iter().any(|r| r.len() != self.n) {
                    return Err(Error::Config(format!("{what}: each matrix must be {0}×{0}", self.n)));
                }
                Ok(DMatrix::from_fn(self.n, self.n, |i, j| rows[i][j]))
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.periods < 2 || self.q == 0 {
            return Err(Error::Config("DGP needs n ≥ 1, periods ≥ 2, q ≥ 1".into()));
        }
        if !(self.innovation_sd >= 0.0) {
            return Err(Error::Config("innovation_sd must be non-negative".into()));
        }
        if let Some(nu) = &self.intercept {
            if nu.len() != self.n {
                return Err(Error::Config(format!("intercept must have {} entries", self.n)));
            }
        }
        Ok(())
    }
}

/// True coefficients for each simulated period, with the implied ζ.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub dates: Vec<NaiveDate>,
    /// `coefs[t][l]` is A_{l+1,t}; empty for the random-walk kind.
    pub coefs: Vec<Vec<DMatrix<f64>>>,
    pub zeta: Vec<Option<f64>>,
}

impl GroundTruth {
    /// One row per period: date, zeta, then every coefficient as
    /// `a{l}_{row}_{col}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string(), "zeta".to_string()];
        if let Some(first) = self.coefs.first() {
            for (l, a) in first.iter().enumerate() {
                for i in 0..a.nrows() {
                    for j in 0..a.ncols() {
                        header.push(format!("a{}_{}_{}", l + 1, i + 1, j + 1));
                    }
                }
            }
        }
        w.write_record(&header)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut row = vec![
                date.format(ISO_DATE).to_string(),
                self.zeta[t].map(|z| z.to_string()).unwrap_or_default(),
            ];
            if let Some(mats) = self.coefs.get(t) {
                for a in mats {
                    for i in 0..a.nrows() {
                        for j in 0..a.ncols() {
                            row.push(a[(i, j)].to_string());
                        }
                    }
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub panel: AlignedPanel,
    pub truth: GroundTruth,
}

fn check_stable(coefs: &[DMatrix<f64>], limit: f64, what: &str) -> Result<()> {
    let radius = companion_spectral_radius(coefs);
    if radius >= limit {
        return Err(Error::Config(format!(
            "{what}: companion spectral radius {radius:.4} is not below {limit}"
        )));
    }
    Ok(())
}

pub fn simulate(spec: &DgpSpec) -> Result<Simulation> {
    spec.validate()?;
    let n = spec.n;
    let big_t = spec.periods;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.innovation_sd).map_err(|e| Error::Config(e.to_string()))?;
    let nu = spec.intercept.clone().map(DVector::from_vec).unwrap_or_else(|| DVector::zeros(n));
    let zero = vec![DMatrix::zeros(n, n); spec.q];

    // Coefficient schedule over the observed periods, plus the matrices
    // used during burn-in.
    let (burn_coefs, schedule): (Vec<DMatrix<f64>>, Vec<Vec<DMatrix<f64>>>) = match &spec.kind {
        DgpKind::WhiteNoise => (zero.clone(), vec![zero.clone(); big_t]),
        DgpKind::RandomWalk => (zero.clone(), Vec::new()),
        DgpKind::ConstantVar { coefs } => {
            let a = spec.matrices(coefs, "coefs")?;
            check_stable(&a, 1.0, "constant-var")?;
            (a.clone(), vec![a; big_t])
        }
        DgpKind::TvVarLinearDrift { start, end } => {
            let a0 = spec.matrices(start, "start")?;
            let a1 = spec.matrices(end, "end")?;
            let sched: Vec<Vec<DMatrix<f64>>> = (0..big_t)
                .map(|t| {
                    let w = t as f64 / (big_t - 1) as f64;
                    a0.iter().zip(&a1).map(|(s, e)| s * (1.0 - w) + e * w).collect()
                })
                .collect();
            for (t, a) in sched.iter().enumerate() {
                check_stable(a, 1.0, &format!("tv-var-linear-drift period {t}"))?;
            }
            (a0, sched)
        }
        DgpKind::TvVarRandomWalkCoeffs {
            initial,
            coef_sd,
            max_radius,
        } => {
            let a0 = spec.matrices(initial, "initial")?;
            check_stable(&a0, *max_radius, "tv-var-random-walk-coeffs initial")?;
            let step = Normal::new(0.0, *coef_sd).map_err(|e| Error::Config(e.to_string()))?;
            let mut sched = Vec::with_capacity(big_t);
            let mut current = a0.clone();
            for _ in 0..big_t {
                let proposal: Vec<DMatrix<f64>> = current
                    .iter()
                    .map(|a| a + DMatrix::from_fn(n, n, |_, _| step.sample(&mut rng)))
                    .collect();
                if companion_spectral_radius(&proposal) < *max_radius {
                    current = proposal;
                }
                sched.push(current.clone());
            }
            (a0, sched)
        }
    };

    let draw = |rng: &mut ChaCha8Rng| DVector::from_fn(n, |_, _| normal.sample(rng));
    let mut values = DMatrix::zeros(big_t, n);
    if matches!(spec.kind, DgpKind::RandomWalk) {
        let mut level = DVector::zeros(n);
        for t in 0..big_t {
            level += &nu + draw(&mut rng);
            values.row_mut(t).copy_from(&level.transpose());
        }
    } else {
        // Lag buffer, most recent first.
        let mut history: Vec<DVector<f64>> = vec![DVector::zeros(n); spec.q];
        let step = |coefs: &[DMatrix<f64>], rng: &mut ChaCha8Rng, history: &mut Vec<DVector<f64>>| {
            let mut x = &nu + draw(rng);
            for (a, past) in coefs.iter().zip(history.iter()) {
                x += a * past;
            }
            history.pop();
            history.insert(0, x.clone());
            x
        };
        for _ in 0..spec.burn_in {
            step(&burn_coefs, &mut rng, &mut history);
        }
        for t in 0..big_t {
            let x = step(&schedule[t], &mut rng, &mut history);
            values.row_mut(t).copy_from(&x.transpose());
        }
    }

    let panel = AlignedPanel::synthetic_returns(values, spec.start_date);
    let zeta = if schedule.is_empty() {
        vec![None; big_t]
    } else {
        schedule.iter().map(|a| zeta_of(a)).collect()
    };
    let truth = GroundTruth {
        dates: panel.dates.clone(),
        coefs: schedule,
        zeta,
    };
    Ok(Simulation { panel, truth })
}
