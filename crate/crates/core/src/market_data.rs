//! Price ingestion, calendar alignment, log returns and summary statistics.
//!
//! Series from different trading calendars are combined by a strict inner
//! join on dates. No filling is performed: a forward-filled price would show
//! up as a spurious zero return.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Days, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ISO_DATE: &str = "%Y-%m-%d";

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub asset_id: String,
    /// Strictly increasing dates, strictly positive prices.
    pub observations: Vec<(NaiveDate, f64)>,
}

impl PriceSeries {
    pub fn new(asset_id: impl Into<String>, mut observations: Vec<(NaiveDate, f64)>) -> Result<Self> {
        let asset_id = asset_id.into();
        if observations.is_empty() {
            return Err(Error::EmptyInput { asset: asset_id });
        }
        observations.sort_by_key(|(d, _)| *d);
        for w in observations.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateDate {
                    asset: asset_id,
                    date: w[0].0,
                });
            }
        }
        if let Some(&(date, price)) = observations.iter().find(|(_, p)| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::NonPositivePrice {
                asset: asset_id,
                line: 0,
                date,
                price,
            });
        }
        Ok(Self {
            asset_id,
            observations,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Column mapping for delimited price files. A header row is always expected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormatOptions {
    pub delimiter: char,
    pub date_column: usize,
    pub price_column: usize,
    /// chrono format string; ISO-8601 when absent.
    pub date_format: Option<String>,
    /// Skip rows whose price field does not parse (e.g. "null" placeholders)
    /// instead of failing.
    pub skip_invalid: bool,
}

impl Default for FormatOptions {
    fn default() -> Self {
        Self {
            delimiter: ',',
            date_column: 0,
            price_column: 1,
            date_format: None,
            skip_invalid: false,
        }
    }
}

pub fn load_price_series<R: Read>(source: R, asset_id: &str, opts: &FormatOptions) -> Result<PriceSeries> {
    if !opts.delimiter.is_ascii() {
        return Err(Error::Config(format!("delimiter {:?} is not ASCII", opts.delimiter)));
    }
    let fmt = opts.date_format.as_deref().unwrap_or(ISO_DATE);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter as u8)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let malformed = |line: usize, reason: String| Error::MalformedRow {
        asset: asset_id.to_string(),
        line,
        reason,
    };

    let mut observations = Vec::new();
    let mut seen = BTreeSet::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let date_field = record
            .get(opts.date_column)
            .ok_or_else(|| malformed(line, format!("missing date column {}", opts.date_column)))?;
        let date = NaiveDate::parse_from_str(date_field, fmt)
            .map_err(|e| malformed(line, format!("unparseable date {date_field:?}: {e}")))?;
        let price_field = record.get(opts.price_column).unwrap_or("");
        let price: f64 = match price_field.parse() {
            Ok(p) => p,
            Err(_) if opts.skip_invalid => continue,
            Err(_) => return Err(malformed(line, format!("unparseable price {price_field:?}"))),
        };
        if !(price > 0.0) || !price.is_finite() {
            return Err(Error::NonPositivePrice {
                asset: asset_id.to_string(),
                line,
                date,
                price,
            });
        }
        if !seen.insert(date) {
            return Err(Error::DuplicateDate {
                asset: asset_id.to_string(),
                date,
            });
        }
        observations.push((date, price));
    }
    PriceSeries::new(asset_id, observations)
}

pub fn load_price_file(path: impl AsRef<Path>, asset_id: &str, opts: &FormatOptions) -> Result<PriceSeries> {
    load_price_series(File::open(path)?, asset_id, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelKind {
    Prices,
    Returns,
}

impl PanelKind {
    fn name(self) -> &'static str {
        match self {
            PanelKind::Prices => "prices",
            PanelKind::Returns => "returns",
        }
    }
}

/// Date-indexed T × n matrix with no missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPanel {
    pub dates: Vec<NaiveDate>,
    pub values: DMatrix<f64>,
    pub asset_ids: Vec<String>,
    pub kind: PanelKind,
}

impl AlignedPanel {
    pub fn new(dates: Vec<NaiveDate>, values: DMatrix<f64>, asset_ids: Vec<String>, kind: PanelKind) -> Result<Self> {
        if values.nrows() != dates.len() {
            return Err(Error::Config(format!(
                "panel has {} rows but {} dates",
                values.nrows(),
                dates.len()
            )));
        }
        if values.ncols() != asset_ids.len() {
            return Err(Error::Config(format!(
                "panel has {} columns but {} asset labels",
                values.ncols(),
                asset_ids.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("panel dates must be strictly increasing".into()));
        }
        Ok(Self {
            dates,
            values,
            asset_ids,
            kind,
        })
    }

    /// Returns panel on consecutive calendar days starting at `start`, for
    /// simulated data that has no natural calendar.
    pub fn synthetic_returns(values: DMatrix<f64>, start: NaiveDate) -> Self {
        let dates = (0..values.nrows())
            .map(|i| start.checked_add_days(Days::new(i as u64)).expect("date overflow"))
            .collect();
        let asset_ids = (0..values.ncols()).map(|i| format!("x{}", i + 1)).collect();
        Self {
            dates,
            values,
            asset_ids,
            kind: PanelKind::Returns,
        }
    }

    pub fn n_periods(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values.column(i).iter().copied().collect()
    }

    pub fn expect_kind(&self, kind: PanelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::WrongPanelKind {
                expected: kind.name(),
                found: self.kind.name(),
            });
        }
        Ok(())
    }

    /// Keeps rows whose date lies in `[start, end]` (either bound optional).
    pub fn restrict_dates(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> Result<Self> {
        let keep: Vec<usize> = self
            .dates
            .iter()
            .enumerate()
            .filter(|(_, d)| start.is_none_or(|s| **d >= s) && end.is_none_or(|e| **d <= e))
            .map(|(i, _)| i)
            .collect();
        if keep.is_empty() {
            return Err(Error::EmptyIntersection);
        }
        let values = self.values.select_rows(keep.iter());
        let dates = keep.iter().map(|&i| self.dates[i]).collect();
        Ok(Self {
            dates,
            values,
            asset_ids: self.asset_ids.clone(),
            kind: self.kind,
        })
    }

    /// Splits the panel back into one series per asset.
    pub fn to_series(&self) -> Vec<PriceSeries> {
        self.asset_ids
            .iter()
            .enumerate()
            .map(|(j, id)| PriceSeries {
                asset_id: id.clone(),
                observations: self.dates.iter().copied().zip(self.values.column(j).iter().copied()).collect(),
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.asset_ids.iter().cloned());
        w.write_record(&header)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut row = vec![date.format(ISO_DATE).to_string()];
            row.extend(self.values.row(t).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Inner join of the series on their dates.
pub fn align(series: &[PriceSeries]) -> Result<AlignedPanel> {
    if series.len() < 2 {
        return Err(Error::TooFewSeries { found: series.len() });
    }
    if let Some(s) = series.iter().find(|s| s.is_empty()) {
        return Err(Error::EmptyInput {
            asset: s.asset_id.clone(),
        });
    }
    let mut common: BTreeSet<NaiveDate> = series[0].observations.iter().map(|(d, _)| *d).collect();
    for s in &series[1..] {
        let other: BTreeSet<NaiveDate> = s.observations.iter().map(|(d, _)| *d).collect();
        common = common.intersection(&other).copied().collect();
    }
    if common.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let dates: Vec<NaiveDate> = common.into_iter().collect();
    let mut values = DMatrix::zeros(dates.len(), series.len());
    for (j, s) in series.iter().enumerate() {
        let mut obs = s.observations.iter().peekable();
        for (t, date) in dates.iter().enumerate() {
            while obs.peek().is_some_and(|(d, _)| d < date) {
                obs.next();
            }
            let (_, price) = obs.next().expect("date present in every series");
            values[(t, j)] = *price;
        }
    }
    AlignedPanel::new(
        dates,
        values,
        series.iter().map(|s| s.asset_id.clone()).collect(),
        PanelKind::Prices,
    )
}

/// Log first differences. Row `t` of the output is dated at the later of the
/// two prices it differences.
pub fn log_returns(panel: &AlignedPanel) -> Result<AlignedPanel> {
    panel.expect_kind(PanelKind::Prices)?;
    let t_len = panel.n_periods();
    if t_len < 2 {
        return Err(Error::InsufficientData {
            what: "log returns",
            needed: 2,
            found: t_len,
        });
    }
    let values = DMatrix::from_fn(t_len - 1, panel.n_assets(), |t, i| {
        panel.values[(t + 1, i)].ln() - panel.values[(t, i)].ln()
    });
    Ok(AlignedPanel {
        dates: panel.dates[1..].to_vec(),
        values,
        asset_ids: panel.asset_ids.clone(),
        kind: PanelKind::Returns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetStats {
    pub asset_id: String,
    pub mean: f64,
    /// Sample standard deviation, denominator N - 1.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n_obs: usize,
    pub assets: Vec<AssetStats>,
}

impl DescriptiveStats {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["asset", "mean", "sd", "min", "max", "n"])?;
        for a in &self.assets {
            w.write_record([
                a.asset_id.clone(),
                a.mean.to_string(),
                a.sd.to_string(),
                a.min.to_string(),
                a.max.to_string(),
                self.n_obs.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn describe(panel: &AlignedPanel) -> Result<DescriptiveStats> {
    panel.expect_kind(PanelKind::Returns)?;
    let n = panel.n_periods();
    if n < 2 {
        return Err(Error::InsufficientData {
            what: "descriptive statistics",
            needed: 2,
            found: n,
        });
    }
    let assets = panel
        .asset_ids
        .iter()
        .enumerate()
        .map(|(j, id)| {
            let col = panel.values.column(j);
            let mean = col.mean();
            let ss: f64 = col.iter().map(|x| (x - mean).powi(2)).sum();
            AssetStats {
                asset_id: id.clone(),
                mean,
                sd: (ss / (n as f64 - 1.0)).sqrt(),
                min: col.min(),
                max: col.max(),
            }
        })
        .collect();
    Ok(DescriptiveStats { n_obs: n, assets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, ISO_DATE).unwrap()
    }

    fn series(id: &str, dates: &[&str]) -> PriceSeries {
        PriceSeries::new(id, dates.iter().enumerate().map(|(i, s)| (d(s), 100.0 + i as f64)).collect()).unwrap()
    }

    fn load(text: &str) -> Result<PriceSeries> {
        load_price_series(text.as_bytes(), "BTC", &FormatOptions::default())
    }

    #[test]
    fn parses_two_rows() {
        let s = load("date,price\n2014-09-17,457.33\n2014-09-18,424.44\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.observations[0], (d("2014-09-17"), 457.33));
        assert_eq!(s.observations[1], (d("2014-09-18"), 424.44));
    }

    #[test]
    fn duplicate_date_is_named() {
        let err = load("date,price\n2014-09-17,1\n2014-09-17,2\n").unwrap_err();
        match err {
            Error::DuplicateDate { date, .. } => assert_eq!(date, d("2014-09-17")),
            e => panic!("unexpected {e}"),
        }
        assert!(err_text("date,price\n2014-09-17,1\n2014-09-17,2\n").contains("2014-09-17"));
    }

    fn err_text(text: &str) -> String {
        load(text).unwrap_err().to_string()
    }

    #[test]
    fn zero_price_rejected() {
        assert!(matches!(
            load("date,price\n2014-09-17,0.0\n"),
            Err(Error::NonPositivePrice { line: 2, .. })
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        match load("date,price\n2014-09-17,1\n2014-09-18,abc\n") {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let opts = FormatOptions {
            skip_invalid: true,
            ..Default::default()
        };
        let s = load_price_series("date,price\n2014-09-17,1\n2014-09-18,null\n".as_bytes(), "x", &opts).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(load("date,price\n"), Err(Error::EmptyInput { .. })));
    }

    #[test]
    fn custom_columns_and_format() {
        let opts = FormatOptions {
            delimiter: ';',
            date_column: 1,
            price_column: 3,
            date_format: Some("%d/%m/%Y".into()),
            skip_invalid: false,
        };
        let text = "x;Date;Open;Close\na;17/09/2014;1;457.33\nb;18/09/2014;1;424.44\n";
        let s = load_price_series(text.as_bytes(), "BTC", &opts).unwrap();
        assert_eq!(s.observations[1], (d("2014-09-18"), 424.44));
    }

    #[test]
    fn align_intersects_calendars() {
        let a = series("a", &["2021-03-01", "2021-03-02", "2021-03-03"]);
        let b = series("b", &["2021-03-02", "2021-03-03", "2021-03-04"]);
        let p = align(&[a.clone(), b]).unwrap();
        assert_eq!(p.dates, vec![d("2021-03-02"), d("2021-03-03")]);
        assert_eq!(p.values[(0, 0)], 101.0);
        assert_eq!(p.values[(0, 1)], 100.0);
        assert_eq!(p.kind, PanelKind::Prices);

        let same = align(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(same.n_periods(), 3);

        let c = series("c", &["2021-04-01"]);
        assert!(matches!(align(&[a.clone(), c]), Err(Error::EmptyIntersection)));
        assert!(matches!(align(&[a]), Err(Error::TooFewSeries { found: 1 })));
    }

    #[test]
    fn log_returns_exact_cases() {
        let e = std::f64::consts::E;
        let p = AlignedPanel::new(
            vec![d("2021-01-01"), d("2021-01-02"), d("2021-01-03")],
            DMatrix::from_column_slice(3, 2, &[1.0, e, e * e, 5.0, 5.0, 5.0]),
            vec!["a".into(), "b".into()],
            PanelKind::Prices,
        )
        .unwrap();
        let r = log_returns(&p).unwrap();
        assert_eq!(r.n_periods(), 2);
        assert_eq!(r.dates[0], d("2021-01-02"));
        assert!((r.values[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((r.values[(1, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(r.values[(0, 1)], 0.0);
        assert_eq!(r.values[(1, 1)], 0.0);

        let p2 = AlignedPanel::new(
            vec![d("2021-01-01"), d("2021-01-02")],
            DMatrix::from_column_slice(2, 1, &[100.0, 110.0]),
            vec!["a".into()],
            PanelKind::Prices,
        )
        .unwrap();
        // ln(1.1)
        assert!((log_returns(&p2).unwrap().values[(0, 0)] - 0.09531017980432493).abs() < 1e-15);
        assert!(log_returns(&r).is_err());
    }

    #[test]
    fn describe_hand_cases() {
        let mk = |v: &[f64]| AlignedPanel::synthetic_returns(DMatrix::from_column_slice(v.len(), 1, v), d("2021-01-01"));
        let s = describe(&mk(&[0.0, 0.0, 0.0])).unwrap();
        let a = &s.assets[0];
        assert_eq!((a.mean, a.sd, a.min, a.max), (0.0, 0.0, 0.0, 0.0));
        let s = describe(&mk(&[-1.0, 1.0])).unwrap();
        let a = &s.assets[0];
        assert_eq!(a.mean, 0.0);
        assert!((a.sd - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((a.min, a.max), (-1.0, 1.0));
        assert_eq!(s.n_obs, 2);
    }

    fn arb_prices() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..4, 3usize..30).prop_flat_map(|(n, t)| prop::collection::vec(prop::collection::vec(0.01f64..1e4, t), n))
    }

    proptest! {
        #[test]
        fn log_returns_scale_invariant(cols in arb_prices(), c in 1e-3f64..1e3) {
            let t = cols[0].len();
            let n = cols.len();
            let flat: Vec<f64> = cols.concat();
            let dates: Vec<NaiveDate> = (0..t).map(|i| d("2020-01-01") + Days::new(i as u64)).collect();
            let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
            let p = AlignedPanel::new(dates.clone(), DMatrix::from_column_slice(t, n, &flat), ids.clone(), PanelKind::Prices).unwrap();
            let ps = AlignedPanel::new(dates, DMatrix::from_column_slice(t, n, &flat) * c, ids, PanelKind::Prices).unwrap();
            let diff = log_returns(&p).unwrap().values - log_returns(&ps).unwrap().values;
            prop_assert!(diff.amax() < 1e-9);
        }

        #[test]
        fn align_is_idempotent(mask_a in prop::collection::vec(any::<bool>(), 40), mask_b in prop::collection::vec(any::<bool>(), 40)) {
            let mk = |id: &str, mask: &[bool]| {
                let obs: Vec<(NaiveDate, f64)> = mask.iter().enumerate().filter(|(_, m)| **m)
                    .map(|(i, _)| (d("2020-01-01") + Days::new(i as u64), 1.0 + i as f64)).collect();
                PriceSeries::new(id, obs)
            };
            let (Ok(a), Ok(b)) = (mk("a", &mask_a), mk("b", &mask_b)) else { return Ok(()); };
            if let Ok(p) = align(&[a, b]) {
                let again = align(&p.to_series()).unwrap();
                prop_assert_eq!(again, p);
            }
        }

        #[test]
        fn centered_returns_have_zero_mean(v in prop::collection::vec(-0.5f64..0.5, 2..200)) {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let centered: Vec<f64> = v.iter().map(|x| x - m).collect();
            let p = AlignedPanel::synthetic_returns(DMatrix::from_column_slice(v.len(), 1, &centered), d("2020-01-01"));
            let s = describe(&p).unwrap();
            prop_assert!(s.assets[0].mean.abs() < 1e-12);
            prop_assert!(s.assets[0].min <= s.assets[0].mean && s.assets[0].mean <= s.assets[0].max);
        }
    }
}
