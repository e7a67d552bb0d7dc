//! Summary tables for the preliminary analysis: descriptive statistics with
//! unit-root tests, and the constant VAR with its diagnostics. Each renders
//! as aligned text and serializes to JSON; a comparison helper checks a run
//! against a set of reference numbers at printed precision.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{describe, AlignedPanel, PanelKind};
use crate::unit_root::{adf_gls_test, schwert_max_lag, AdfGlsResult, DetrendModel};
use crate::var_base::{
    bic_profile, fit_var_ols, granger_causality, hansen_lc_from_estimate, Bandwidth, GrangerResult, HansenLcResult,
    LagSelection,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub asset_id: String,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub adf: AdfGlsResult,
    pub n_obs: usize,
    /// Unit root rejected at 1%.
    pub stationary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub max_lag: usize,
    pub rows: Vec<Table1Row>,
}

impl Table1 {
    pub fn failing_assets(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| !r.stationary).map(|r| r.asset_id.as_str()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = self.rows.iter().map(|r| r.asset_id.len()).max().unwrap_or(0).max(5);
        let _ = writeln!(
            s,
            "{:<w$}  {:>9} {:>9} {:>9} {:>9}  {:>9} {:>4} {:>8}  {:>6}",
            "", "Mean", "SD", "Min", "Max", "ADF-GLS", "Lags", "phi", "N"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<w$}  {:>9.4} {:>9.4} {:>9.4} {:>9.4}  {:>9.4} {:>4} {:>8.4}  {:>6}",
                r.asset_id, r.mean, r.sd, r.min, r.max, r.adf.statistic, r.adf.chosen_lag, r.adf.phi_hat, r.n_obs
            );
        }
        if let Some(r) = self.rows.first() {
            let model = match r.adf.detrend_model {
                DetrendModel::Constant => "constant",
                DetrendModel::ConstantTrend => "constant and trend",
            };
            let _ = writeln!(
                s,
                "\nADF-GLS with {model}; lag by BIC over 0..{}; 1% critical value {:.2}.",
                self.max_lag, r.adf.critical_values.one
            );
        }
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["asset", "mean", "sd", "min", "max", "adf_gls", "lag", "phi_hat", "n_obs", "stationary"])?;
        for r in &self.rows {
            w.write_record([
                r.asset_id.clone(),
                r.mean.to_string(),
                r.sd.to_string(),
                r.min.to_string(),
                r.max.to_string(),
                r.adf.statistic.to_string(),
                r.adf.chosen_lag.to_string(),
                r.adf.phi_hat.to_string(),
                r.n_obs.to_string(),
                r.stationary.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Descriptive statistics and ADF-GLS per return series. `max_lag` defaults
/// to Schwert's rule for the sample length.
pub fn table1(returns: &AlignedPanel, max_lag: Option<usize>, model: DetrendModel) -> Result<Table1> {
    returns.expect_kind(PanelKind::Returns)?;
    let stats = describe(returns)?;
    let max_lag = max_lag.unwrap_or_else(|| schwert_max_lag(returns.n_periods()));
    let rows = stats
        .assets
        .into_iter()
        .enumerate()
        .map(|(i, st)| {
            let adf = adf_gls_test(&returns.column(i), max_lag, model)?;
            Ok(Table1Row {
                stationary: adf.rejects_at_1pct(),
                asset_id: st.asset_id,
                mean: st.mean,
                sd: st.sd,
                min: st.min,
                max: st.max,
                adf,
                n_obs: stats.n_obs,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Table1 { max_lag, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationColumn {
    pub asset_id: String,
    pub intercept: Cell,
    /// `lags[l][j]`: coefficient on asset j at lag l+1.
    pub lags: Vec<Vec<Cell>>,
    pub adj_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2 {
    pub lag_selection: LagSelection,
    pub p: usize,
    pub n_obs: usize,
    pub newey_west_lags: usize,
    pub equations: Vec<EquationColumn>,
    /// One joint test per source variable, in asset order.
    pub granger: Vec<GrangerResult>,
    pub hansen: HansenLcResult,
}

fn stars(p_value: f64) -> &'static str {
    if p_value < 0.01 {
        "***"
    } else if p_value < 0.05 {
        "**"
    } else if p_value < 0.10 {
        "*"
    } else {
        ""
    }
}

fn lc_stars(lc: &HansenLcResult) -> &'static str {
    if lc.rejects_at(0.01) {
        "***"
    } else if lc.rejects_at(0.05) {
        "**"
    } else if lc.rejects_at(0.10) {
        "*"
    } else {
        ""
    }
}

impl Table2 {
    pub fn to_text(&self) -> String {
        let ids: Vec<&str> = self.equations.iter().map(|e| e.asset_id.as_str()).collect();
        let label_w = ids.iter().map(|s| s.len() + 4).max().unwrap_or(0).max(9);
        let col_w = ids.iter().map(|s| s.len()).max().unwrap_or(0).max(12);
        let mut s = String::new();
        let row = |s: &mut String, label: &str, cells: Vec<String>| {
            let _ = write!(s, "{label:<label_w$}");
            for c in cells {
                let _ = write!(s, " {c:>col_w$}");
            }
            s.push('\n');
        };
        row(&mut s, "", ids.iter().map(|i| i.to_string()).collect());
        let pair = |s: &mut String, label: &str, get: &dyn Fn(&EquationColumn) -> &Cell| {
            row(s, label, self.equations.iter().map(|e| format!("{:.4}", get(e).estimate)).collect());
            row(s, "", self.equations.iter().map(|e| format!("[{:.4}]", get(e).se)).collect());
        };
        pair(&mut s, "Constant", &|e| &e.intercept);
        for l in 0..self.p {
            for (j, id) in ids.iter().enumerate() {
                pair(&mut s, &format!("{id}(-{})", l + 1), &|e| &e.lags[l][j]);
            }
        }
        row(&mut s, "Adj. R2", self.equations.iter().map(|e| format!("{:.4}", e.adj_r2)).collect());
        row(
            &mut s,
            "Granger",
            self.granger
                .iter()
                .map(|g| format!("{:.4}{:<3}", g.f_statistic, stars(g.p_value)))
                .collect(),
        );
        let _ = writeln!(
            s,
            "{:<label_w$} {:.4}{} ({} parameters)",
            "Lc",
            self.hansen.lc_statistic,
            lc_stars(&self.hansen),
            self.hansen.n_params
        );
        let _ = writeln!(
            s,
            "\nVAR({}) selected by BIC over 1..{}; N = {}; Newey-West standard errors in brackets, {} lags.",
            self.p,
            self.lag_selection.bic.len(),
            self.n_obs,
            self.newey_west_lags
        );
        let _ = writeln!(s, "*** 1%, ** 5%, * 10%.");
        s
    }
}

/// BIC order selection over 1..=p_max, then the VAR fit, Granger row and
/// Lc statistic at the selected order.
pub fn table2(returns: &AlignedPanel, p_max: usize) -> Result<Table2> {
    if p_max == 0 {
        return Err(Error::Config("VAR p_max must be at least 1".into()));
    }
    let bic = bic_profile(returns, p_max)?;
    let p = bic
        .iter()
        .fold((1, f64::INFINITY), |best, &(p, b)| if b < best.1 { (p, b) } else { best })
        .0;
    let est = fit_var_ols(returns, p)?;
    let n = est.n_assets();
    let se = &est.robust_se;
    let equations = (0..n)
        .map(|i| EquationColumn {
            asset_id: est.asset_ids[i].clone(),
            intercept: Cell {
                estimate: est.nu[i],
                se: se[(0, i)],
            },
            lags: (0..p)
                .map(|l| {
                    (0..n)
                        .map(|j| Cell {
                            estimate: est.coefs[l][(i, j)],
                            se: se[(1 + l * n + j, i)],
                        })
                        .collect()
                })
                .collect(),
            adj_r2: est.adj_r2[i],
        })
        .collect();
    let granger = (0..n).map(|s| granger_causality(returns, p, s)).collect::<Result<_>>()?;
    let hansen = hansen_lc_from_estimate(&est)?;
    Ok(Table2 {
        lag_selection: LagSelection { selected: p, bic },
        p,
        n_obs: est.effective_obs(),
        newey_west_lags: Bandwidth::Auto.lags(est.effective_obs()),
        equations,
        granger,
        hansen,
    })
}

/// Expected values for a known dataset, matched to a run by asset position.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceValues {
    /// Absolute tolerance for real numbers; defaults to half a unit in the
    /// fourth decimal.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub table1: Vec<Table1Reference>,
    #[serde(default)]
    pub table2: Option<Table2Reference>,
}

fn default_tolerance() -> f64 {
    0.5e-4
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Reference {
    pub label: String,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub adf_gls: Option<f64>,
    pub lag: Option<usize>,
    pub phi_hat: Option<f64>,
    pub n_obs: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table2Reference {
    pub p: Option<usize>,
    pub intercepts: Option<Vec<f64>>,
    pub intercept_se: Option<Vec<f64>>,
    /// `lag1[i][j]`: equation i, regressor j at lag 1.
    pub lag1: Option<Vec<Vec<f64>>>,
    pub lag1_se: Option<Vec<Vec<f64>>>,
    pub adj_r2: Option<Vec<f64>>,
    pub granger: Option<Vec<f64>>,
    pub lc: Option<f64>,
}

impl ReferenceValues {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub name: String,
    pub expected: f64,
    pub actual: f64,
    pub pass: bool,
}

struct Checker {
    tol: f64,
    out: Vec<ReferenceCheck>,
}

impl Checker {
    fn real(&mut self, name: String, expected: Option<f64>, actual: f64) {
        if let Some(e) = expected {
            self.out.push(ReferenceCheck {
                pass: (actual - e).abs() <= self.tol + 1e-12,
                name,
                expected: e,
                actual,
            });
        }
    }

    fn count(&mut self, name: String, expected: Option<usize>, actual: usize) {
        if let Some(e) = expected {
            self.out.push(ReferenceCheck {
                pass: e == actual,
                name,
                expected: e as f64,
                actual: actual as f64,
            });
        }
    }

    fn missing(&mut self, name: String, expected: f64) {
        self.out.push(ReferenceCheck {
            name,
            expected,
            actual: f64::NAN,
            pass: false,
        });
    }
}

/// Compares each reference number that is present against the run.
pub fn compare_reference(reference: &ReferenceValues, t1: Option<&Table1>, t2: Option<&Table2>) -> Vec<ReferenceCheck> {
    let mut c = Checker {
        tol: reference.tolerance,
        out: Vec::new(),
    };
    if let Some(t1) = t1 {
        for (i, r) in reference.table1.iter().enumerate() {
            let Some(row) = t1.rows.get(i) else {
                c.missing(format!("{} present", r.label), 1.0);
                continue;
            };
            let l = &r.label;
            c.real(format!("{l} mean"), r.mean, row.mean);
            c.real(format!("{l} sd"), r.sd, row.sd);
            c.real(format!("{l} min"), r.min, row.min);
            c.real(format!("{l} max"), r.max, row.max);
            c.real(format!("{l} adf-gls"), r.adf_gls, row.adf.statistic);
            c.count(format!("{l} lag"), r.lag, row.adf.chosen_lag);
            c.real(format!("{l} phi"), r.phi_hat, row.adf.phi_hat);
            c.count(format!("{l} N"), r.n_obs, row.n_obs);
        }
    }
    if let (Some(t2), Some(r)) = (t2, &reference.table2) {
        c.count("VAR order".into(), r.p, t2.p);
        let eqs = &t2.equations;
        let per_eq = |c: &mut Checker, what: &str, vals: &Option<Vec<f64>>, get: &dyn Fn(usize) -> Option<f64>| {
            for (i, v) in vals.iter().flatten().enumerate() {
                match get(i) {
                    Some(a) => c.real(format!("{what} {i}"), Some(*v), a),
                    None => c.missing(format!("{what} {i}"), *v),
                }
            }
        };
        per_eq(&mut c, "intercept", &r.intercepts, &|i| eqs.get(i).map(|e| e.intercept.estimate));
        per_eq(&mut c, "intercept se", &r.intercept_se, &|i| eqs.get(i).map(|e| e.intercept.se));
        per_eq(&mut c, "adj r2", &r.adj_r2, &|i| eqs.get(i).map(|e| e.adj_r2));
        per_eq(&mut c, "granger", &r.granger, &|i| t2.granger.get(i).map(|g| g.f_statistic));
        let lag1 = |i: usize, j: usize, se: bool| {
            eqs.get(i)
                .and_then(|e| e.lags.first())
                .and_then(|l| l.get(j))
                .map(|cell| if se { cell.se } else { cell.estimate })
        };
        for (name, vals, se) in [("A1", &r.lag1, false), ("A1 se", &r.lag1_se, true)] {
            for (i, rowv) in vals.iter().flatten().enumerate() {
                for (j, v) in rowv.iter().enumerate() {
                    match lag1(i, j, se) {
                        Some(a) => c.real(format!("{name} [{i},{j}]"), Some(*v), a),
                        None => c.missing(format!("{name} [{i},{j}]"), *v),
                    }
                }
            }
        }
        c.real("Lc".into(), r.lc, t2.hansen.lc_statistic);
    }
    c.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{simulate, DgpKind, DgpSpec};

    fn panel(seed: u64) -> AlignedPanel {
        simulate(&DgpSpec {
            kind: DgpKind::ConstantVar {
                coefs: vec![vec![vec![0.3, 0.0, 0.0], vec![0.2, 0.1, 0.0], vec![0.0, 0.0, -0.2]]],
            },
            ..DgpSpec::white_noise(3, 600, seed)
        })
        .unwrap()
        .panel
    }

    #[test]
    fn table1_rows_follow_assets() {
        let p = panel(1);
        let t = table1(&p, Some(4), DetrendModel::ConstantTrend).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.rows[1].asset_id, "x2");
        assert!(t.rows.iter().all(|r| r.n_obs == 600 && r.stationary));
        assert!(t.failing_assets().is_empty());
        let text = t.to_text();
        assert!(text.contains("ADF-GLS") && text.contains("-3.96"), "{text}");
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }

    #[test]
    fn table1_needs_returns() {
        let mut p = panel(1);
        p.kind = PanelKind::Prices;
        assert!(matches!(table1(&p, None, DetrendModel::ConstantTrend), Err(Error::WrongPanelKind { .. })));
    }

    #[test]
    fn table2_layout_and_contents() {
        let p = panel(2);
        let t = table2(&p, 4).unwrap();
        assert_eq!(t.p, 1);
        assert_eq!(t.lag_selection.bic.len(), 4);
        assert_eq!(t.granger.len(), 3);
        assert_eq!(t.hansen.n_params, 15);
        assert!((t.equations[1].lags[0][0].estimate - 0.2).abs() < 0.1);
        // x1 feeds x2, so the x1 row of Granger should be strongly significant.
        assert!(t.granger[0].p_value < 0.01);
        let text = t.to_text();
        assert!(text.contains("x1(-1)") && text.contains("Granger") && text.contains("Lc"));
        assert!(text.lines().nth(1).unwrap().starts_with("Constant"));
        let json = serde_json::to_string(&t).unwrap();
        let back: Table2 = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn zero_p_max_is_config_error() {
        assert!(matches!(table2(&panel(1), 0), Err(Error::Config(_))));
    }

    #[test]
    fn reference_comparison_uses_printed_precision() {
        let p = panel(3);
        let t1 = table1(&p, Some(4), DetrendModel::ConstantTrend).unwrap();
        let t2 = table2(&p, 2).unwrap();
        let round = |v: f64| (v * 1e4).round() / 1e4;
        let text = format!(
            "[[table1]]\nlabel = \"a\"\nmean = {}\nlag = {}\nn_obs = 600\n[table2]\np = 1\nlc = {}\ngranger = [{}, {}, {}]\nlag1 = [[{}, 0.0, 0.0]]\n",
            round(t1.rows[0].mean),
            t1.rows[0].adf.chosen_lag,
            round(t2.hansen.lc_statistic),
            round(t2.granger[0].f_statistic),
            round(t2.granger[1].f_statistic),
            round(t2.granger[2].f_statistic) + 0.001,
            round(t2.equations[0].lags[0][0].estimate),
        );
        let reference = ReferenceValues::from_toml(&text).unwrap();
        let checks = compare_reference(&reference, Some(&t1), Some(&t2));
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        assert_eq!(checks.len(), 11);
        // Off by 1e-3 and two near-zero guesses for nonzero coefficients.
        assert!(failed.contains(&"granger 2"), "{failed:?}");
        assert!(!failed.contains(&"Lc") && !failed.contains(&"a mean") && !failed.contains(&"VAR order"));
        assert!(ReferenceValues::from_toml("bogus = 1").is_err());
    }
}
