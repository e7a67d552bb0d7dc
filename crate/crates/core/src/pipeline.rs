//! File-level orchestration: configuration, the describe / var / efficiency
//! / simulate commands, run manifests and output bookkeeping.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_bands_for, BandPath, BootstrapConfig};
use crate::efficiency::{efficiency_path_with, DegreeNorm, EfficiencyPath};
use crate::error::{Error, Result};
use crate::market_data::{align, load_price_file, log_returns, AlignedPanel, FormatOptions, ISO_DATE};
use crate::plot::{render_svg, PlotOptions};
use crate::report::{table1, table2, Table1, Table2};
use crate::synth::{simulate, DgpSpec};
use crate::tv_var::{fit_tv_var, Solver, TvVarConfig};
use crate::unit_root::DetrendModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFile {
    pub path: PathBuf,
    pub asset: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitRootSection {
    /// Schwert's rule when absent.
    pub max_lag: Option<usize>,
    pub model: DetrendModel,
    /// Fail `describe` (and `all`) when a series keeps its unit root at 1%.
    pub enforce_gate: bool,
}

impl Default for UnitRootSection {
    fn default() -> Self {
        Self {
            max_lag: None,
            model: DetrendModel::ConstantTrend,
            enforce_gate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarSection {
    pub p_max: usize,
}

impl Default for VarSection {
    fn default() -> Self {
        Self { p_max: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencySection {
    pub event_date: Option<NaiveDate>,
    pub event_label: Option<String>,
    pub degree_norm: DegreeNorm,
    /// Also write every bootstrap ζ* path.
    pub dump_replicates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Vec<InputFile>,
    pub format: FormatOptions,
    pub start_date: Option<NaiveDate>,
    pub end_date: Option<NaiveDate>,
    pub unit_root: UnitRootSection,
    pub var: VarSection,
    pub tv_var: TvVarConfig,
    pub bootstrap: BootstrapConfig,
    pub efficiency: EfficiencySection,
    pub output_dir: PathBuf,
    pub report_formats: Vec<ReportFormat>,
    /// Relative input paths resolve against this directory.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            format: FormatOptions::default(),
            start_date: None,
            end_date: None,
            unit_root: UnitRootSection::default(),
            var: VarSection::default(),
            tv_var: TvVarConfig::default(),
            bootstrap: BootstrapConfig::default(),
            efficiency: EfficiencySection::default(),
            output_dir: PathBuf::from("output"),
            report_formats: vec![ReportFormat::Text, ReportFormat::Csv, ReportFormat::Json],
            base_dir: PathBuf::new(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Config("no input files configured".into()));
        }
        if let (Some(s), Some(e)) = (self.start_date, self.end_date) {
            if s > e {
                return Err(Error::Config(format!("start_date {s} is after end_date {e}")));
            }
        }
        if self.var.p_max == 0 {
            return Err(Error::Config("var.p_max must be at least 1".into()));
        }
        if self.report_formats.is_empty() {
            return Err(Error::Config("report_formats is empty".into()));
        }
        self.tv_var.validate()?;
        self.bootstrap.validate()?;
        for input in &self.inputs {
            let p = self.resolve(&input.path);
            if !p.is_file() {
                return Err(Error::Config(format!("input file for `{}` not found: {}", input.asset, p.display())));
            }
        }
        Ok(())
    }

    fn wants(&self, f: ReportFormat) -> bool {
        self.report_formats.contains(&f)
    }
}

/// Loads, aligns, filters and differences the configured price files.
pub fn load_returns(cfg: &PipelineConfig) -> Result<AlignedPanel> {
    let series = cfg
        .inputs
        .iter()
        .map(|i| load_price_file(cfg.resolve(&i.path), &i.asset, &cfg.format))
        .collect::<Result<Vec<_>>>()?;
    let prices = align(&series)?;
    let prices = if cfg.start_date.is_some() || cfg.end_date.is_some() {
        prices.restrict_dates(cfg.start_date, cfg.end_date)?
    } else {
        prices
    };
    log_returns(&prices)
}

/// Files written by one command; removed again if the command fails.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
    created_dir: bool,
}

impl Outputs {
    fn open(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            created_dir,
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn discard(self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }

    fn names(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }
}

/// Runs `body`; on error every file it wrote is deleted.
fn transactional<T>(dir: &Path, body: impl FnOnce(&mut Outputs) -> Result<T>) -> Result<(T, Vec<PathBuf>)> {
    let mut out = Outputs::open(dir)?;
    match body(&mut out) {
        Ok(v) => Ok((v, out.written)),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

/// Everything needed to reproduce a run. Contains no timestamps so that
/// identical runs produce identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<&'a PipelineConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<&'a DgpSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_used: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<Solver>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications_used: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_replications: Option<usize>,
    pub outputs: Vec<String>,
}

impl<'a> Manifest<'a> {
    fn new(command: &'a str) -> Self {
        Self {
            tool: "tveff",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: None,
            simulation: None,
            master_seed: None,
            lambda_used: None,
            solver: None,
            ridge: None,
            replications_used: None,
            failed_replications: None,
            outputs: Vec::new(),
        }
    }
}

fn write_manifest(out: &mut Outputs, mut manifest: Manifest) -> Result<()> {
    manifest.outputs = out.names();
    manifest.outputs.push("manifest.json".into());
    out.write("manifest.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        writeln!(w)?;
        Ok(())
    })
}

#[derive(Debug)]
pub struct DescribeOutcome {
    pub table: Table1,
    pub files: Vec<PathBuf>,
}

/// Descriptive statistics and unit-root tests. Reports are written before
/// the stationarity gate is applied, so a failing run still leaves them.
pub fn run_describe(cfg: &PipelineConfig) -> Result<DescribeOutcome> {
    cfg.validate()?;
    let returns = load_returns(cfg)?;
    let table = table1(&returns, cfg.unit_root.max_lag, cfg.unit_root.model)?;
    let (_, files) = transactional(&cfg.output_dir, |out| {
        if cfg.wants(ReportFormat::Text) {
            out.write("table1.txt", |w| Ok(w.write_all(table.to_text().as_bytes())?))?;
        }
        if cfg.wants(ReportFormat::Csv) {
            out.write("table1.csv", |w| table.write_csv(w))?;
        }
        if cfg.wants(ReportFormat::Json) {
            out.write("table1.json", |w| json_to(w, &table))?;
        }
        write_manifest(
            out,
            Manifest {
                config: Some(cfg),
                ..Manifest::new("describe")
            },
        )
    })?;
    if cfg.unit_root.enforce_gate {
        if let Some(row) = table.rows.iter().find(|r| !r.stationary) {
            return Err(Error::StationarityGate {
                asset: row.asset_id.clone(),
                statistic: row.adf.statistic,
                critical: row.adf.critical_values.one,
            });
        }
    }
    Ok(DescribeOutcome { table, files })
}

fn json_to<T: Serialize>(w: &mut BufWriter<File>, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

#[derive(Debug)]
pub struct VarOutcome {
    pub table: Table2,
    pub files: Vec<PathBuf>,
}

pub fn run_var(cfg: &PipelineConfig) -> Result<VarOutcome> {
    cfg.validate()?;
    let returns = load_returns(cfg)?;
    let table = table2(&returns, cfg.var.p_max)?;
    let (_, files) = transactional(&cfg.output_dir, |out| {
        if cfg.wants(ReportFormat::Text) {
            out.write("table2.txt", |w| Ok(w.write_all(table.to_text().as_bytes())?))?;
        }
        if cfg.wants(ReportFormat::Json) || cfg.wants(ReportFormat::Csv) {
            out.write("table2.json", |w| json_to(w, &table))?;
        }
        write_manifest(
            out,
            Manifest {
                config: Some(cfg),
                ..Manifest::new("var")
            },
        )
    })?;
    Ok(VarOutcome { table, files })
}

#[derive(Debug)]
pub struct EfficiencyOutcome {
    pub path: EfficiencyPath,
    pub bands: Option<BandPath>,
    pub lambda_used: f64,
    pub files: Vec<PathBuf>,
}

/// Serializable band summary without the replicate paths.
#[derive(Serialize)]
struct BandSummary<'a> {
    coverage: f64,
    replications: usize,
    failed_replications: usize,
    /// Per date: replications whose ζ* was undefined there.
    singular_counts: &'a [usize],
}

pub fn run_efficiency(cfg: &PipelineConfig) -> Result<EfficiencyOutcome> {
    cfg.validate()?;
    let returns = load_returns(cfg)?;
    let estimate = fit_tv_var(&returns, &cfg.tv_var)?;
    let mut path = efficiency_path_with(&estimate, cfg.efficiency.degree_norm);
    let keep = cfg.efficiency.dump_replicates;
    let bands = if cfg.bootstrap.replications > 0 {
        let b = bootstrap_bands_for(&estimate, &returns, &cfg.tv_var, &cfg.bootstrap, keep)?;
        path.attach_bands(&b)?;
        Some(b)
    } else {
        None
    };
    let singular = path.singular.iter().filter(|s| **s).count();
    if singular > 0 {
        log::warn!("{singular} dates have a near-singular I - ΣA; ζ left undefined there");
    }
    let (_, files) = transactional(&cfg.output_dir, |out| {
        out.write("efficiency.csv", |w| path.write_csv(w))?;
        out.write("coefficients.csv", |w| estimate.write_coefficients_csv(w))?;
        let opts = PlotOptions {
            event_date: cfg.efficiency.event_date,
            event_label: cfg.efficiency.event_label.clone(),
            ..PlotOptions::default()
        };
        out.write("efficiency.svg", |w| Ok(w.write_all(render_svg(&path, &opts).as_bytes())?))?;
        if let Some(b) = &bands {
            out.write("bands.json", |w| {
                json_to(
                    w,
                    &BandSummary {
                        coverage: b.coverage,
                        replications: b.replications,
                        failed_replications: b.failed_replications,
                        singular_counts: &b.singular_counts,
                    },
                )
            })?;
            if let Some(reps) = &b.replicates {
                out.write("replicates.csv", |w| write_replicates(w, &b.dates, reps))?;
            }
        }
        write_manifest(
            out,
            Manifest {
                config: Some(cfg),
                master_seed: bands.as_ref().map(|_| cfg.bootstrap.master_seed),
                lambda_used: Some(estimate.lambda_used),
                solver: Some(cfg.tv_var.solver),
                ridge: Some(estimate.ridge),
                replications_used: bands.as_ref().map(|b| b.replications - b.failed_replications),
                failed_replications: bands.as_ref().map(|b| b.failed_replications),
                ..Manifest::new("efficiency")
            },
        )
    })?;
    Ok(EfficiencyOutcome {
        path,
        bands,
        lambda_used: estimate.lambda_used,
        files,
    })
}

/// One row per replication: replication index then ζ* for every date.
fn write_replicates<W: Write>(w: W, dates: &[NaiveDate], reps: &[Vec<Option<f64>>]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["replication".to_string()];
    header.extend(dates.iter().map(|d| d.format(ISO_DATE).to_string()));
    csv.write_record(&header)?;
    for (b, path) in reps.iter().enumerate() {
        let mut row = vec![b.to_string()];
        row.extend(path.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug)]
pub struct SimulateOutcome {
    pub files: Vec<PathBuf>,
}

/// Writes the simulated return panel and its ground truth. With
/// `price_files`, also one price file per asset (cumulated from 100) that
/// the other commands accept as input.
pub fn run_simulate(spec: &DgpSpec, output_dir: &Path, price_files: bool) -> Result<SimulateOutcome> {
    let sim = simulate(spec)?;
    let (_, files) = transactional(output_dir, |out| {
        out.write("panel.csv", |w| sim.panel.write_csv(w))?;
        out.write("truth.csv", |w| sim.truth.write_csv(w))?;
        if price_files {
            for (j, id) in sim.panel.asset_ids.iter().enumerate() {
                out.write(&format!("prices_{id}.csv"), |w| write_prices(w, &sim.panel, j))?;
            }
        }
        write_manifest(
            out,
            Manifest {
                simulation: Some(spec),
                master_seed: Some(spec.seed),
                ..Manifest::new("simulate")
            },
        )
    })?;
    Ok(SimulateOutcome { files })
}

/// Price levels whose log differences reproduce column `j` of the returns.
/// The base price is dated one day before the first return.
fn write_prices<W: Write>(w: W, returns: &AlignedPanel, j: usize) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["date", "price"])?;
    let first = returns.dates.first().copied().ok_or(Error::EmptyInput {
        asset: returns.asset_ids[j].clone(),
    })?;
    let base = first.pred_opt().unwrap_or(first);
    let mut log_p = 100f64.ln();
    csv.write_record([base.format(ISO_DATE).to_string(), log_p.exp().to_string()])?;
    for (t, d) in returns.dates.iter().enumerate() {
        log_p += returns.values[(t, j)];
        csv.write_record([d.format(ISO_DATE).to_string(), log_p.exp().to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug)]
pub struct AllOutcome {
    pub describe: DescribeOutcome,
    pub var: VarOutcome,
    pub efficiency: EfficiencyOutcome,
}

/// describe, var and efficiency in sequence. The stationarity gate, when
/// enforced, stops the run after `describe`. Manifests of the three stages
/// share one file name, so only the last survives; it echoes the same
/// config.
pub fn run_all(cfg: &PipelineConfig) -> Result<AllOutcome> {
    let describe = run_describe(cfg)?;
    let var = run_var(cfg)?;
    let efficiency = run_efficiency(cfg)?;
    Ok(AllOutcome {
        describe,
        var,
        efficiency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::DgpKind;

    fn sim_inputs(dir: &Path, kind: DgpKind, periods: usize, seed: u64) -> PipelineConfig {
        let spec = DgpSpec {
            kind,
            ..DgpSpec::white_noise(3, periods, seed)
        };
        run_simulate(&spec, &dir.join("sim"), true).unwrap();
        PipelineConfig {
            inputs: (1..=3)
                .map(|i| InputFile {
                    path: PathBuf::from(format!("sim/prices_x{i}.csv")),
                    asset: format!("a{i}"),
                })
                .collect(),
            output_dir: dir.join("out"),
            base_dir: dir.to_path_buf(),
            unit_root: UnitRootSection {
                max_lag: Some(4),
                ..Default::default()
            },
            bootstrap: BootstrapConfig {
                replications: 0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn price_files_round_trip_to_returns() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = sim_inputs(dir.path(), DgpKind::WhiteNoise, 120, 4);
        let returns = load_returns(&cfg).unwrap();
        let sim = simulate(&DgpSpec::white_noise(3, 120, 4)).unwrap();
        assert_eq!(returns.dates, sim.panel.dates);
        assert!((&returns.values - &sim.panel.values).amax() < 1e-12);
        assert_eq!(returns.asset_ids, ["a1", "a2", "a3"]);
    }

    #[test]
    fn describe_writes_reports_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = sim_inputs(dir.path(), DgpKind::WhiteNoise, 300, 5);
        cfg.unit_root.enforce_gate = false;
        let out = run_describe(&cfg).unwrap();
        assert_eq!(out.table.rows.len(), 3);
        for f in ["table1.txt", "table1.csv", "table1.json", "manifest.json"] {
            assert!(cfg.output_dir.join(f).is_file(), "{f}");
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(cfg.output_dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["command"], "describe");
        assert_eq!(manifest["config"]["var"]["p_max"], 10);
    }

    #[test]
    fn gate_failure_is_reported_after_writing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = sim_inputs(dir.path(), DgpKind::RandomWalk, 300, 6);
        // Random-walk "returns" make prices I(2); their returns keep a unit root.
        let err = run_describe(&cfg).unwrap_err();
        assert!(matches!(err, Error::StationarityGate { .. }), "{err}");
        assert!(cfg.output_dir.join("table1.txt").is_file());
        cfg.unit_root.enforce_gate = false;
        assert!(run_describe(&cfg).is_ok());
    }

    #[test]
    fn empty_date_range_and_missing_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = sim_inputs(dir.path(), DgpKind::WhiteNoise, 50, 7);
        cfg.start_date = NaiveDate::from_ymd_opt(2030, 1, 1);
        assert!(matches!(run_describe(&cfg), Err(Error::EmptyIntersection)));
        cfg.start_date = None;
        cfg.inputs.truncate(1);
        assert!(matches!(run_describe(&cfg), Err(Error::TooFewSeries { found: 1 })));
        cfg.inputs[0].path = PathBuf::from("nope.csv");
        assert!(matches!(run_describe(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn efficiency_without_bootstrap_omits_bands() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = sim_inputs(dir.path(), DgpKind::WhiteNoise, 200, 8);
        cfg.efficiency.event_date = NaiveDate::from_ymd_opt(2000, 4, 1);
        let out = run_efficiency(&cfg).unwrap();
        assert!(out.bands.is_none() && out.path.band_low.is_none());
        assert_eq!(out.path.dates.len(), 199);
        let csv = fs::read_to_string(cfg.output_dir.join("efficiency.csv")).unwrap();
        assert_eq!(csv.lines().count(), 200);
        assert!(csv.lines().nth(1).unwrap().ends_with(",,,0"));
        assert!(!cfg.output_dir.join("bands.json").exists());
        assert!(fs::read_to_string(cfg.output_dir.join("efficiency.svg")).unwrap().contains("2,3"));
    }

    #[test]
    fn failed_run_removes_its_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out_dir = dir.path().join("fresh");
        let res: Result<((), Vec<PathBuf>)> = transactional(&out_dir, |out| {
            out.write("a.txt", |w| Ok(w.write_all(b"x")?))?;
            Err(Error::Degenerate("boom".into()))
        });
        assert!(res.is_err());
        assert!(!out_dir.exists());
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = PipelineConfig::from_toml(
            r#"
output_dir = "o"
report_formats = ["text"]
[[inputs]]
path = "a.csv"
asset = "A"
[tv_var]
lambda = 2.5
solver = "dense-reference"
[bootstrap]
replications = 0
[efficiency]
event_date = "2020-03-11"
"#,
        )
        .unwrap();
        assert_eq!(cfg.tv_var.lambda, 2.5);
        assert_eq!(cfg.tv_var.solver, Solver::DenseReference);
        assert_eq!(cfg.efficiency.event_date, NaiveDate::from_ymd_opt(2020, 3, 11));
        assert!(PipelineConfig::from_toml("[var]\np_max = 1\nbogus = 2\n").is_err());
        let bad = PipelineConfig {
            var: VarSection { p_max: 0 },
            ..cfg
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
