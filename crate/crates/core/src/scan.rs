//! μ scans: configuration, dispatch over a worker pool, and serialization.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checks::{validate, OracleCheck};
use crate::dynamics::MAX_ORDER;
use crate::error::{Error, Result};
use crate::integrate::IntegratorSettings;
use crate::orbit::OrbitSettings;
use crate::par;
use crate::pipeline::{analyze_point, PointAnalysis, PointSummary};
use crate::susceptibility::{fit_power_laws, Eigencycle, Eigenprediction, PowerLaw, FIT_WINDOW, UNIFORM_OUTPUT_POINTS};

/// Output artifacts a scan can write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Emit {
    Eigenvalues,
    Eigenvectors,
    Predictions,
    Cycles,
    Summary,
    OracleChecks,
}

impl Emit {
    pub const ALL: [Emit; 6] =
        [Emit::Eigenvalues, Emit::Eigenvectors, Emit::Predictions, Emit::Cycles, Emit::Summary, Emit::OracleChecks];

    pub fn name(self) -> &'static str {
        match self {
            Emit::Eigenvalues => "eigenvalues",
            Emit::Eigenvectors => "eigenvectors",
            Emit::Predictions => "predictions",
            Emit::Cycles => "cycles",
            Emit::Summary => "summary",
            Emit::OracleChecks => "oracle-checks",
        }
    }
}

impl fmt::Display for Emit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Emit::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| invalid("emit", format!("unknown artifact `{}`", s.trim())))
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig { field: field.into(), reason: reason.into() }
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    _ if i == n - 1 => hi,
                    _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub mu_values: Vec<f64>,
    pub order: u32,
    pub rtol: f64,
    pub atol: f64,
    pub output_dir: PathBuf,
    /// Worker count; `None` uses one per available processor.
    pub jobs: Option<usize>,
    pub emit: BTreeSet<Emit>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        let s = IntegratorSettings::default();
        Self {
            mu_values: log_space(1.0, 100.0, 13),
            order: 4,
            rtol: s.rtol,
            atol: s.atol,
            output_dir: PathBuf::from("out"),
            jobs: None,
            emit: [Emit::Eigenvalues, Emit::Eigenvectors, Emit::Predictions, Emit::Cycles, Emit::Summary]
                .into_iter()
                .collect(),
        }
    }
}

/// Values that override a configuration file; `None` keeps the file's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub mu_values: Option<Vec<f64>>,
    pub order: Option<u32>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub emit: Option<BTreeSet<Emit>>,
}

fn parse_num<T: FromStr>(field: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| invalid(field, format!("cannot parse `{}`", s.trim())))
}

pub fn parse_mu_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(|t| parse_num("mu", t)).collect()
}

pub fn parse_emit_list(s: &str) -> Result<BTreeSet<Emit>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(Emit::from_str).collect()
}

impl ScanConfig {
    /// Parses `key = value` lines (`#` starts a comment) on top of the defaults.
    ///
    /// Keys: `mu`, `order`, `rtol`, `atol`, `out`, `jobs`, `emit`. Lists are
    /// comma separated; `jobs = auto` means one worker per processor.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid("config", format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(invalid(key, "given more than once"));
            }
            match key {
                "mu" => cfg.mu_values = parse_mu_list(value)?,
                "order" => cfg.order = parse_num("order", value)?,
                "rtol" => cfg.rtol = parse_num("rtol", value)?,
                "atol" => cfg.atol = parse_num("atol", value)?,
                "out" => cfg.output_dir = PathBuf::from(value),
                "jobs" => cfg.jobs = if value == "auto" { None } else { Some(parse_num("jobs", value)?) },
                "emit" => cfg.emit = parse_emit_list(value)?,
                other => return Err(invalid(other, "unknown key")),
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The configuration as a key-value file that [`ScanConfig::parse`] accepts.
    pub fn to_kv(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        format!(
            "mu = {}\norder = {}\nrtol = {:e}\natol = {:e}\nout = {}\njobs = {}\nemit = {}\n",
            join(self.mu_values.iter().map(|m| format!("{m:e}")).collect()),
            self.order,
            self.rtol,
            self.atol,
            self.output_dir.display(),
            self.jobs.map_or("auto".to_string(), |j| j.to_string()),
            join(self.emit.iter().map(|e| e.to_string()).collect()),
        )
    }

    pub fn apply(mut self, o: ConfigOverrides) -> Self {
        if let Some(v) = o.mu_values {
            self.mu_values = v;
        }
        if let Some(v) = o.order {
            self.order = v;
        }
        if let Some(v) = o.rtol {
            self.rtol = v;
        }
        if let Some(v) = o.atol {
            self.atol = v;
        }
        if let Some(v) = o.output_dir {
            self.output_dir = v;
        }
        if let Some(v) = o.jobs {
            self.jobs = Some(v);
        }
        if let Some(v) = o.emit {
            self.emit = v;
        }
        self
    }

    pub fn settings(&self) -> IntegratorSettings {
        IntegratorSettings::with_tolerances(self.rtol, self.atol)
    }

    pub fn workers(&self) -> usize {
        self.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_values.is_empty() {
            return Err(invalid("mu", "no values given"));
        }
        if let Some(m) = self.mu_values.iter().find(|m| !m.is_finite() || **m <= 0.0) {
            return Err(invalid("mu", format!("{m} is not a positive finite number")));
        }
        if self.mu_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("mu", "values must be strictly increasing"));
        }
        if self.order == 0 || self.order > MAX_ORDER {
            return Err(invalid("order", format!("{} outside [1, {MAX_ORDER}]", self.order)));
        }
        if self.jobs == Some(0) {
            return Err(invalid("jobs", "must be at least 1"));
        }
        self.settings().validate()
    }

    fn prepare_output_dir(&self) -> Result<()> {
        let dir = &self.output_dir;
        let probe = dir.join(".write-probe");
        fs::create_dir_all(dir)
            .and_then(|_| File::create(&probe))
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| invalid("out", format!("{} is not writable: {e}", dir.display())))
    }
}

/// Result of one μ point: the summary, or why it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum PointOutcome {
    Ok(Box<PointSummary>),
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuRecord {
    pub mu: f64,
    #[serde(flatten)]
    pub outcome: PointOutcome,
}

impl MuRecord {
    pub fn summary(&self) -> Option<&PointSummary> {
        match &self.outcome {
            PointOutcome::Ok(s) => Some(s),
            PointOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadGrowth {
    pub from_mu: f64,
    pub to_mu: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: ScanConfig,
    pub tolerances: OrbitTolerances,
    pub wall_time_s: f64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitTolerances {
    pub rtol: f64,
    pub atol: f64,
    pub settle: f64,
    pub max_periods: usize,
    pub noise_floor_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub records: Vec<MuRecord>,
    /// Keyed by rank (1 = stiffest).
    pub slopes: Vec<PowerLaw>,
    pub spread_growth: Option<SpreadGrowth>,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub oracle_checks: Option<Vec<OracleCheck>>,
}

impl ScanReport {
    pub fn all_succeeded(&self) -> bool {
        self.records.iter().all(|r| r.summary().is_some())
            && self.oracle_checks.as_ref().is_none_or(|c| c.iter().all(|c| c.passed))
    }

    /// summary.json layout: slopes become an object keyed by rank.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report is serializable");
        let slopes: serde_json::Map<String, serde_json::Value> = self
            .slopes
            .iter()
            .map(|s| (s.rank.to_string(), serde_json::json!({ "slope": s.slope, "points": s.points })))
            .collect();
        v["slopes"] = serde_json::Value::Object(slopes);
        v
    }
}

/// Everything computed for one μ, before serialization.
#[derive(Debug, Clone)]
pub struct PointOutput {
    pub mu: f64,
    pub result: std::result::Result<PointDetail, Error>,
}

#[derive(Debug, Clone)]
pub struct PointDetail {
    pub summary: PointSummary,
    pub basis: Vec<crate::dynamics::PerturbationIndex>,
    pub eigenvectors: nalgebra::DMatrix<f64>,
    pub predictions: Vec<Eigenprediction>,
    pub cycles: Vec<Eigencycle>,
}

fn run_point(mu: f64, cfg: &ScanConfig) -> PointOutput {
    let settings = cfg.settings();
    let result = analyze_point(mu, cfg.order, &settings, &OrbitSettings::default()).and_then(|pa: PointAnalysis| {
        let want_pred = cfg.emit.contains(&Emit::Predictions) || cfg.emit.contains(&Emit::Cycles);
        let predictions = if want_pred { pa.predictions(UNIFORM_OUTPUT_POINTS) } else { vec![] };
        let cycles = if cfg.emit.contains(&Emit::Cycles) { pa.cycles(&predictions) } else { vec![] };
        Ok(PointDetail {
            summary: pa.summary()?,
            basis: pa.basis().to_vec(),
            eigenvectors: pa.susceptibility.eigen.eigenvectors.clone(),
            predictions,
            cycles,
        })
    });
    PointOutput { mu, result }
}

/// Computes every μ point on `cfg.workers()` workers; output is ordered by μ.
pub fn compute_points(cfg: &ScanConfig) -> Result<Vec<PointOutput>> {
    par::map_ordered(&cfg.mu_values, cfg.workers(), |&mu| run_point(mu, cfg))
}

/// Validates the configuration, runs the scan and writes the requested files.
pub fn run_scan(cfg: &ScanConfig) -> Result<ScanReport> {
    cfg.validate()?;
    cfg.prepare_output_dir()?;
    let start = Instant::now();
    let points = compute_points(cfg)?;
    let oracle_checks = if cfg.emit.contains(&Emit::OracleChecks) { Some(validate(cfg)?) } else { None };
    let report = build_report(cfg, &points, oracle_checks, start.elapsed().as_secs_f64());
    write_outputs(cfg, &points, &report)?;
    Ok(report)
}

pub fn build_report(
    cfg: &ScanConfig,
    points: &[PointOutput],
    oracle_checks: Option<Vec<OracleCheck>>,
    wall_time_s: f64,
) -> ScanReport {
    let records: Vec<MuRecord> = points
        .iter()
        .map(|p| MuRecord {
            mu: p.mu,
            outcome: match &p.result {
                Ok(d) => PointOutcome::Ok(Box::new(d.summary.clone())),
                Err(e) => PointOutcome::Failed { reason: e.to_string() },
            },
        })
        .collect();
    let systems: Vec<(f64, crate::susceptibility::EigenSystem)> = points
        .iter()
        .filter_map(|p| p.result.as_ref().ok().map(|d| (p.mu, d.eigen_system())))
        .collect();
    let spectra: Vec<(f64, &crate::susceptibility::EigenSystem)> = systems.iter().map(|(m, e)| (*m, e)).collect();
    let slopes = fit_power_laws(&spectra, FIT_WINDOW);
    let ok: Vec<&MuRecord> = records.iter().filter(|r| r.summary().is_some()).collect();
    let spread_growth = match (ok.first(), ok.last()) {
        (Some(a), Some(b)) if ok.len() > 1 => Some(SpreadGrowth {
            from_mu: a.mu,
            to_mu: b.mu,
            factor: b.summary().unwrap().spread / a.summary().unwrap().spread,
        }),
        _ => None,
    };
    let orbit = OrbitSettings::default();
    ScanReport {
        records,
        slopes,
        spread_growth,
        provenance: Provenance {
            config: cfg.clone(),
            tolerances: OrbitTolerances {
                rtol: cfg.rtol,
                atol: cfg.atol,
                settle: orbit.tolerance,
                max_periods: orbit.max_periods,
                noise_floor_ratio: crate::susceptibility::NOISE_FLOOR_RATIO,
            },
            wall_time_s,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        oracle_checks,
    }
}

impl PointDetail {
    fn eigen_system(&self) -> crate::susceptibility::EigenSystem {
        crate::susceptibility::EigenSystem {
            eigenvalues: self.summary.eigenvalues.clone(),
            eigenvectors: self.eigenvectors.clone(),
            noise_floor: self.summary.noise_floor,
        }
    }
}

/// 17 significant digits, scientific notation.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn write_outputs(cfg: &ScanConfig, points: &[PointOutput], report: &ScanReport) -> Result<()> {
    let dir = &cfg.output_dir;
    let ok = || points.iter().filter_map(|p| p.result.as_ref().ok().map(|d| (p.mu, d)));
    if cfg.emit.contains(&Emit::Eigenvalues) {
        let mut w = create(dir, "eigenvalues.csv")?;
        writeln!(w, "mu,rank,lambda,flagged")?;
        for (mu, d) in ok() {
            for (k, (l, f)) in d.summary.eigenvalues.iter().zip(&d.summary.flagged).enumerate() {
                writeln!(w, "{},{},{},{}", fmt_num(mu), k + 1, fmt_num(*l), f)?;
            }
        }
        w.flush()?;
    }
    if cfg.emit.contains(&Emit::Eigenvectors) {
        let mut w = create(dir, "eigenvectors.csv")?;
        writeln!(w, "mu,rank,m,n,component")?;
        for (mu, d) in ok() {
            for k in 0..d.eigenvectors.ncols() {
                for (alpha, ix) in d.basis.iter().enumerate() {
                    writeln!(w, "{},{},{},{},{}", fmt_num(mu), k + 1, ix.m, ix.n, fmt_num(d.eigenvectors[(alpha, k)]))?;
                }
            }
        }
        w.flush()?;
    }
    if cfg.emit.contains(&Emit::Predictions) {
        let mut w = create(dir, "predictions.csv")?;
        writeln!(w, "mu,rank,tau,delta_y")?;
        for (mu, d) in ok() {
            for p in &d.predictions {
                for (t, v) in p.taus.iter().zip(&p.values) {
                    writeln!(w, "{},{},{},{}", fmt_num(mu), p.rank, fmt_num(*t), fmt_num(*v))?;
                }
            }
        }
        w.flush()?;
    }
    if cfg.emit.contains(&Emit::Cycles) {
        let mut w = create(dir, "cycles.csv")?;
        writeln!(w, "mu,rank,tau,x,y_perturbed,y_unperturbed,eta")?;
        for (mu, d) in ok() {
            for c in &d.cycles {
                for i in 0..c.taus.len() {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{}",
                        fmt_num(mu),
                        c.rank,
                        fmt_num(c.taus[i]),
                        fmt_num(c.x[i]),
                        fmt_num(c.y_perturbed[i]),
                        fmt_num(c.y_unperturbed[i]),
                        fmt_num(c.eta)
                    )?;
                }
            }
        }
        w.flush()?;
    }
    if let Some(checks) = &report.oracle_checks {
        let mut w = create(dir, "oracle_checks.csv")?;
        writeln!(w, "check,measured,reference,error,tolerance,passed")?;
        for c in checks {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                c.name,
                fmt_num(c.measured),
                fmt_num(c.reference),
                fmt_num(c.error),
                fmt_num(c.tolerance),
                c.passed
            )?;
        }
        w.flush()?;
    }
    if cfg.emit.contains(&Emit::Summary) {
        let mut w = create(dir, "summary.json")?;
        serde_json::to_writer_pretty(&mut w, &report.to_json()).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

/// Recovers the configuration echoed in a summary.json document.
pub fn config_from_summary(json: &str) -> Result<ScanConfig> {
    let v: serde_json::Value = serde_json::from_str(json).map_err(|e| invalid("summary", e.to_string()))?;
    serde_json::from_value(v["provenance"]["config"].clone()).map_err(|e| invalid("summary", e.to_string()))
}
