//! Monte-Carlo experiment plans, sweeps, summaries and table emission.
//!
//! A plan fixes a base configuration, a scheme list and exactly one sweep
//! axis. Every trial draws its channels from a seed derived from the base
//! seed and the trial index, and all schemes and sweep values of a trial
//! share that draw.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{evaluate_scheme, EvalOptions, SchemeId, SchemeSpec, SchemeStatus};
use crate::channel::{generate_channels, ChannelMode};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::streams::OrderLabel;

pub const CSV_HEADER: [&str; 9] = [
    "sweep_axis",
    "sweep_value",
    "scheme",
    "seed",
    "sum_rate",
    "delta",
    "iterations",
    "feasible",
    "wall_ms",
];

/// Normal quantile used for the 95% confidence half-width.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    PvMax,
    PuMax,
    RthV,
    DecodingOrder,
    SchemeSet,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::PvMax => "p_v_max",
            Self::PuMax => "p_u_max",
            Self::RthV => "r_th_v",
            Self::DecodingOrder => "decoding-order",
            Self::SchemeSet => "scheme-set",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "p_v_max" => Ok(Self::PvMax),
            "p_u_max" => Ok(Self::PuMax),
            "r_th_v" => Ok(Self::RthV),
            "decoding-order" => Ok(Self::DecodingOrder),
            "scheme-set" => Ok(Self::SchemeSet),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep axis `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepPoint {
    Number(f64),
    Order(OrderLabel),
    Schemes(Vec<SchemeId>),
}

impl fmt::Display for SweepPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Number(v) => write!(f, "{v:.6}"),
            Self::Order(o) => write!(f, "{o}"),
            Self::Schemes(ids) => {
                let names: Vec<&str> = ids.iter().map(|id| id.name()).collect();
                f.write_str(&names.join("+"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<SweepPoint>,
}

impl Sweep {
    pub fn singleton(axis: SweepAxis, value: SweepPoint) -> Self {
        Self {
            axis,
            values: vec![value],
        }
    }

    /// Parse `axis=lo:step:hi` (inclusive range) or `axis=v1,v2,...`.
    /// Scheme-set values are `+`-joined scheme names.
    pub fn parse(spec: &str) -> Result<Self> {
        let (axis, rest) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("sweep `{spec}` lacks `axis=`")))?;
        let axis: SweepAxis = axis.parse()?;
        let rest = rest.trim();
        let values = match axis {
            SweepAxis::SchemeSet => rest
                .split(',')
                .map(|set| {
                    set.split('+')
                        .map(str::parse)
                        .collect::<Result<Vec<SchemeId>>>()
                        .map(SweepPoint::Schemes)
                })
                .collect::<Result<Vec<_>>>()?,
            SweepAxis::DecodingOrder => numbers(rest)?
                .into_iter()
                .map(|v| {
                    let label = format!("{v}");
                    label
                        .parse::<OrderLabel>()
                        .map(SweepPoint::Order)
                        .map_err(Error::InvalidConfig)
                })
                .collect::<Result<Vec<_>>>()?,
            _ => numbers(rest)?.into_iter().map(SweepPoint::Number).collect(),
        };
        let sweep = Self { axis, values };
        sweep.validate()?;
        Ok(sweep)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("sweep has no values".into()));
        }
        for v in &self.values {
            let ok = match (self.axis, v) {
                (SweepAxis::PvMax | SweepAxis::PuMax, SweepPoint::Number(x)) => {
                    !x.is_nan() && *x != f64::INFINITY
                }
                (SweepAxis::RthV, SweepPoint::Number(x)) => x.is_finite() && *x >= 0.0,
                (SweepAxis::DecodingOrder, SweepPoint::Order(_)) => true,
                (SweepAxis::SchemeSet, SweepPoint::Schemes(ids)) => !ids.is_empty(),
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidConfig(format!(
                    "value `{v}` does not fit sweep axis {}",
                    self.axis
                )));
            }
        }
        Ok(())
    }
}

fn numbers(s: &str) -> Result<Vec<f64>> {
    let parse = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidConfig(format!("`{t}` is not a number")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [lo, step, hi] => {
            let (lo, step, hi) = (parse(lo)?, parse(step)?, parse(hi)?);
            if !(step > 0.0 && lo.is_finite() && hi.is_finite() && hi >= lo) {
                return Err(Error::InvalidConfig(format!(
                    "range `{s}` needs finite lo <= hi and step > 0"
                )));
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            // round away accumulated binary noise so 0.1-steps print cleanly
            Ok((0..n)
                .map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9)
                .collect())
        }
        [_] => s.split(',').map(parse).collect(),
        _ => Err(Error::InvalidConfig(format!(
            "malformed sweep values `{s}`"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidConfig(format!(
                "unknown output format `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub base: SystemConfig,
    pub channel_mode: ChannelMode,
    pub schemes: Vec<SchemeId>,
    pub eval: EvalOptions,
    pub sweep: Sweep,
    pub trials: usize,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    /// When false every `wall_ms` is reported as 0 so reruns are byte-identical.
    pub record_wall_time: bool,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        let base = SystemConfig::default();
        let sweep = Sweep::singleton(SweepAxis::PvMax, SweepPoint::Number(base.p_v_max_dbm));
        Self {
            base,
            channel_mode: ChannelMode::ExponentialMean,
            schemes: vec![SchemeId::CrsmaSusmg],
            eval: EvalOptions::default(),
            sweep,
            trials: 1,
            output: None,
            format: OutputFormat::Csv,
            record_wall_time: true,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.sweep.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.schemes.is_empty() && self.sweep.axis != SweepAxis::SchemeSet {
            return Err(Error::InvalidConfig("no schemes selected".into()));
        }
        for v in &self.sweep.values {
            self.configure(v)?.0.validate()?;
        }
        Ok(())
    }

    /// Configuration, evaluation options and schemes at one sweep value.
    fn configure(&self, value: &SweepPoint) -> Result<(SystemConfig, EvalOptions, Vec<SchemeId>)> {
        let mut cfg = self.base.clone();
        let mut eval = self.eval;
        let mut schemes = self.schemes.clone();
        match (self.sweep.axis, value) {
            (SweepAxis::PvMax, SweepPoint::Number(x)) => cfg.p_v_max_dbm = *x,
            (SweepAxis::PuMax, SweepPoint::Number(x)) => cfg.p_u_max_dbm = *x,
            (SweepAxis::RthV, SweepPoint::Number(x)) => cfg.r_th_v = *x,
            (SweepAxis::DecodingOrder, SweepPoint::Order(o)) => eval.order = *o,
            (SweepAxis::SchemeSet, SweepPoint::Schemes(ids)) => schemes = ids.clone(),
            (axis, v) => {
                return Err(Error::InvalidConfig(format!(
                    "value `{v}` does not fit sweep axis {axis}"
                )))
            }
        }
        Ok((cfg, eval, schemes))
    }

    /// Parse a manifest, then validate.
    pub fn from_manifest(text: &str) -> Result<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| manifest_error(text, &e))?;
        let plan = m.into_plan()?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_manifest(&fs::read_to_string(path)?)
    }
}

fn manifest_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map_or(0, |s| {
        text[..s.start.min(text.len())].lines().count().max(1)
    });
    Error::Manifest {
        line,
        msg: e.message().to_string(),
    }
}

/// Manifest file: TOML with dotted keys, e.g. `system.K = 6`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default)]
    system: SystemSection,
    #[serde(default)]
    channel: ChannelSection,
    #[serde(default)]
    experiment: ExperimentSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    #[serde(rename = "K")]
    k: Option<usize>,
    #[serde(rename = "N")]
    n: Option<usize>,
    sigma2: Option<f64>,
    p_u_max: Option<f64>,
    p_v_max: Option<f64>,
    r_th_u: Option<f64>,
    r_th_v: Option<f64>,
    theta: Option<f64>,
    delta_grid: Option<Vec<f64>>,
    eps: Option<f64>,
    max_iterations: Option<usize>,
    seed: Option<u64>,
    lambda_u: Option<f64>,
    lambda_v: Option<f64>,
    lambda_vu: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSection {
    mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    schemes: Option<Vec<String>>,
    order: Option<String>,
    interference: Option<String>,
    sweep: Option<String>,
    trials: Option<usize>,
    output: Option<PathBuf>,
    format: Option<String>,
    wall_time: Option<bool>,
}

impl Manifest {
    fn into_plan(self) -> Result<ExperimentPlan> {
        let mut plan = ExperimentPlan::default();
        let s = self.system;
        let b = &mut plan.base;
        macro_rules! set {
            ($($src:ident => $dst:ident),*) => {
                $(if let Some(v) = s.$src { b.$dst = v; })*
            };
        }
        set!(k => users, n => antennas, sigma2 => sigma2, p_u_max => p_u_max_dbm,
            p_v_max => p_v_max_dbm, r_th_u => r_th_u, r_th_v => r_th_v, theta => theta,
            delta_grid => delta_grid, eps => eps, max_iterations => max_iterations,
            seed => seed, lambda_u => lambda_u_db, lambda_v => lambda_v_db,
            lambda_vu => lambda_vu_db);
        if let Some(mode) = self.channel.mode {
            plan.channel_mode = mode.parse().map_err(Error::InvalidConfig)?;
        }
        let e = self.experiment;
        if let Some(ids) = e.schemes {
            plan.schemes = ids.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        if let Some(o) = e.order {
            plan.eval.order = o.parse().map_err(Error::InvalidConfig)?;
        }
        if let Some(m) = e.interference {
            plan.eval.mode = m.parse().map_err(Error::InvalidConfig)?;
        }
        plan.sweep = match e.sweep {
            Some(s) => Sweep::parse(&s)?,
            None => Sweep::singleton(SweepAxis::PvMax, SweepPoint::Number(plan.base.p_v_max_dbm)),
        };
        if let Some(t) = e.trials {
            plan.trials = t;
        }
        plan.output = e.output;
        if let Some(f) = e.format {
            plan.format = f.parse()?;
        }
        if let Some(w) = e.wall_time {
            plan.record_wall_time = w;
        }
        Ok(plan)
    }
}

/// SplitMix64 finalizer; a bijection on `u64`.
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Channel seed of trial `t`. Distinct trials always get distinct seeds.
pub fn trial_seed(base: u64, t: usize) -> u64 {
    splitmix64(base.wrapping_add((t as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub sweep_axis: SweepAxis,
    pub sweep_value: SweepPoint,
    pub scheme: SchemeId,
    pub trial: usize,
    pub seed: u64,
    pub status: SchemeStatus,
    pub sum_rate: Option<f64>,
    pub delta: Option<f64>,
    pub iterations: usize,
    pub r_u: Vec<f64>,
    pub r_v: Vec<f64>,
    /// Objective after each SCA solve at the chosen slot split.
    pub history: Vec<f64>,
    pub wall_ms: f64,
}

impl TrialRow {
    pub fn feasible(&self) -> bool {
        self.status == SchemeStatus::Feasible
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub sweep_value: SweepPoint,
    pub scheme: SchemeId,
    pub trials: usize,
    pub feasible: usize,
    /// Mean sum rate over feasible trials; `None` when there are none.
    pub mean_sum_rate: Option<f64>,
    /// 95% confidence half-width of the mean; `None` below two samples.
    pub ci95: Option<f64>,
    pub mean_iterations: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResultTable {
    pub rows: Vec<TrialRow>,
    pub summaries: Vec<SummaryRow>,
}

impl ResultTable {
    pub fn summary(&self, value: &SweepPoint, scheme: SchemeId) -> Option<&SummaryRow> {
        self.summaries
            .iter()
            .find(|s| &s.sweep_value == value && s.scheme == scheme)
    }

    pub fn all_infeasible(&self) -> bool {
        self.rows.iter().all(|r| !r.feasible())
    }

    pub fn records(&self) -> Vec<Record> {
        self.rows.iter().map(Record::from).collect()
    }
}

/// Mean and 95% half-width of a sample; half-width needs two or more points.
pub fn mean_ci(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(Z95 * (var / n).sqrt()))
}

fn run_trial(plan: &ExperimentPlan, value: &SweepPoint, t: usize) -> Result<Vec<TrialRow>> {
    let (mut cfg, eval, schemes) = plan.configure(value)?;
    cfg.seed = trial_seed(plan.base.seed, t);
    let ch = generate_channels(&cfg, plan.channel_mode)?;
    let mut rows = Vec::with_capacity(schemes.len());
    for id in schemes {
        let start = Instant::now();
        let outcome = evaluate_scheme(&SchemeSpec::of(id), &ch, &cfg, eval);
        let wall_ms = if plan.record_wall_time {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        let row = match outcome {
            Ok(o) => {
                let history = o
                    .solve
                    .as_ref()
                    .map(|s| s.history.clone())
                    .unwrap_or_default();
                log::debug!(
                    "{} {value} trial {t} {id}: {:?} history {history:?}",
                    plan.sweep.axis,
                    o.status
                );
                let feasible = o.feasible();
                TrialRow {
                    sweep_axis: plan.sweep.axis,
                    sweep_value: value.clone(),
                    scheme: id,
                    trial: t,
                    seed: cfg.seed,
                    status: o.status,
                    sum_rate: o.sum_rate().filter(|_| feasible),
                    delta: o.delta.filter(|_| feasible),
                    iterations: o.iterations(),
                    r_u: o.report.as_ref().map(|r| r.r_u.clone()).unwrap_or_default(),
                    r_v: o.report.as_ref().map(|r| r.r_v.clone()).unwrap_or_default(),
                    history,
                    wall_ms,
                }
            }
            Err(e) => {
                log::warn!("{} {value} trial {t} {id} failed: {e}", plan.sweep.axis);
                TrialRow {
                    sweep_axis: plan.sweep.axis,
                    sweep_value: value.clone(),
                    scheme: id,
                    trial: t,
                    seed: cfg.seed,
                    status: SchemeStatus::SolverFailure,
                    sum_rate: None,
                    delta: None,
                    iterations: 0,
                    r_u: Vec::new(),
                    r_v: Vec::new(),
                    history: Vec::new(),
                    wall_ms,
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Run every (sweep value, trial, scheme) cell. Rows come back ordered by
/// sweep value, then trial, then scheme, whatever the execution order.
pub fn run_plan(plan: &ExperimentPlan) -> Result<ResultTable> {
    plan.validate()?;
    let cells: Vec<(&SweepPoint, usize)> = plan
        .sweep
        .values
        .iter()
        .flat_map(|v| (0..plan.trials).map(move |t| (v, t)))
        .collect();
    let rows: Vec<TrialRow> = cells
        .par_iter()
        .map(|&(v, t)| run_trial(plan, v, t))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let summaries = summarize(&rows);
    Ok(ResultTable { rows, summaries })
}

/// Per (sweep value, scheme) statistics over feasible trials.
pub fn summarize(rows: &[TrialRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&SweepPoint, SchemeId)> = Vec::new();
    for r in rows {
        if !keys
            .iter()
            .any(|(v, s)| *v == &r.sweep_value && *s == r.scheme)
        {
            keys.push((&r.sweep_value, r.scheme));
        }
    }
    keys.into_iter()
        .map(|(value, scheme)| {
            let group: Vec<&TrialRow> = rows
                .iter()
                .filter(|r| &r.sweep_value == value && r.scheme == scheme)
                .collect();
            let rates: Vec<f64> = group.iter().filter_map(|r| r.sum_rate).collect();
            let its: Vec<f64> = group
                .iter()
                .filter(|r| r.feasible())
                .map(|r| r.iterations as f64)
                .collect();
            let (mean_sum_rate, ci95) = mean_ci(&rates);
            SummaryRow {
                sweep_value: value.clone(),
                scheme,
                trials: group.len(),
                feasible: rates.len(),
                mean_sum_rate,
                ci95,
                mean_iterations: mean_ci(&its).0,
            }
        })
        .collect()
}

/// One emitted row; the CSV and JSON encodings carry the same fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub sweep_axis: String,
    pub sweep_value: String,
    pub scheme: String,
    pub seed: u64,
    pub sum_rate: Option<f64>,
    pub delta: Option<f64>,
    pub iterations: usize,
    pub feasible: bool,
    pub wall_ms: f64,
}

impl From<&TrialRow> for Record {
    fn from(r: &TrialRow) -> Self {
        Self {
            sweep_axis: r.sweep_axis.to_string(),
            sweep_value: r.sweep_value.to_string(),
            scheme: r.scheme.to_string(),
            seed: r.seed,
            sum_rate: r.sum_rate,
            delta: r.delta,
            iterations: r.iterations,
            feasible: r.feasible(),
            wall_ms: r.wall_ms,
        }
    }
}

fn fixed(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// CSV text of `records`; unavailable values are empty fields.
pub fn to_csv(records: &[Record]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for r in records {
        w.write_record([
            r.sweep_axis.clone(),
            r.sweep_value.clone(),
            r.scheme.clone(),
            r.seed.to_string(),
            fixed(r.sum_rate),
            fixed(r.delta),
            r.iterations.to_string(),
            r.feasible.to_string(),
            format!("{:.6}", r.wall_ms),
        ])
        .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn to_json(records: &[Record]) -> Result<String> {
    Ok(serde_json::to_string_pretty(records)?)
}

pub fn from_json(text: &str) -> Result<Vec<Record>> {
    Ok(serde_json::from_str(text)?)
}

/// Write the table's rows to `path`. An empty table is rejected before
/// anything touches the filesystem.
pub fn emit(table: &ResultTable, format: OutputFormat, path: &Path) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let records = table.records();
    let text = match format {
        OutputFormat::Csv => to_csv(&records)?,
        OutputFormat::Json => to_json(&records)?,
    };
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_ranges_and_lists() {
        let s = Sweep::parse("p_v_max=10:2:20").unwrap();
        assert_eq!(s.axis, SweepAxis::PvMax);
        let vals: Vec<String> = s.values.iter().map(|v| v.to_string()).collect();
        assert_eq!(vals.len(), 6);
        assert_eq!(vals[0], "10.000000");
        assert_eq!(vals[5], "20.000000");
        let s = Sweep::parse("r_th_v=0.1:0.1:0.6").unwrap();
        assert_eq!(s.values.len(), 6);
        assert_eq!(s.values[2], SweepPoint::Number(0.3));
        let s = Sweep::parse("decoding-order=1:1:3").unwrap();
        assert_eq!(s.values[1], SweepPoint::Order(OrderLabel::Order2));
        let s = Sweep::parse("scheme-set=crsma-susmg+noma-susmg,rsma-susmg").unwrap();
        assert_eq!(
            s.values[0],
            SweepPoint::Schemes(vec![SchemeId::CrsmaSusmg, SchemeId::NomaSusmg])
        );
        assert_eq!(s.values[0].to_string(), "crsma-susmg+noma-susmg");
        assert!(Sweep::parse("p_v_max=20:2:10").is_err());
        assert!(Sweep::parse("p_v_max=1:0:3").is_err());
        assert!(Sweep::parse("bogus=1").is_err());
        assert!(Sweep::parse("decoding-order=4").is_err());
        assert!(Sweep::parse("r_th_v=-1").is_err());
        assert!(Sweep::parse("p_v_max").is_err());
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|t| trial_seed(7, t)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_eq!(trial_seed(7, 3), trial_seed(7, 3));
        assert_ne!(trial_seed(7, 3), trial_seed(8, 3));
    }

    #[test]
    fn manifest_parsing() {
        let text = "\
# reference drop
system.K = 4
system.N = 16
system.p_v_max = 12.5
system.delta_grid = [0.25, 0.5]
channel.mode = \"disparity-ladder\"
experiment.schemes = [\"crsma-susmg\", \"noma-susmg\"]
experiment.sweep = \"p_u_max=20:1:22\"
experiment.trials = 3
experiment.format = \"json\"
";
        let plan = ExperimentPlan::from_manifest(text).unwrap();
        assert_eq!(plan.base.users, 4);
        assert_eq!(plan.base.antennas, 16);
        assert_eq!(plan.base.p_v_max_dbm, 12.5);
        assert_eq!(plan.base.delta_grid, vec![0.25, 0.5]);
        assert_eq!(plan.channel_mode, ChannelMode::DisparityLadder);
        assert_eq!(
            plan.schemes,
            vec![SchemeId::CrsmaSusmg, SchemeId::NomaSusmg]
        );
        assert_eq!(plan.sweep.axis, SweepAxis::PuMax);
        assert_eq!(plan.sweep.values.len(), 3);
        assert_eq!(plan.trials, 3);
        assert_eq!(plan.format, OutputFormat::Json);
    }

    #[test]
    fn manifest_errors_carry_line_numbers() {
        match ExperimentPlan::from_manifest("system.K = 6\nsystem.bogus = 1\n") {
            Err(Error::Manifest { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            ExperimentPlan::from_manifest("system.K = 5\n"),
            Err(Error::OddUserCount(5))
        ));
        assert!(ExperimentPlan::from_manifest("experiment.trials = 0\n").is_err());
        assert!(ExperimentPlan::from_manifest("experiment.schemes = [\"nope\"]\n").is_err());
    }

    #[test]
    fn mean_ci_matches_hand_values() {
        let (m, h) = mean_ci(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, Some(2.5));
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((h.unwrap() - Z95 * sd / 2.0).abs() < 1e-12);
        assert_eq!(mean_ci(&[3.0]), (Some(3.0), None));
        assert_eq!(mean_ci(&[]), (None, None));
    }

    fn record(feasible: bool) -> Record {
        Record {
            sweep_axis: "p_v_max".into(),
            sweep_value: "15.000000".into(),
            scheme: "crsma-susmg".into(),
            seed: 42,
            sum_rate: feasible.then_some(7.25),
            delta: feasible.then_some(0.3),
            iterations: 5,
            feasible,
            wall_ms: 1.5,
        }
    }

    #[test]
    fn csv_layout() {
        let text = to_csv(&[record(true)]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(
            lines[1],
            "p_v_max,15.000000,crsma-susmg,42,7.250000,0.300000,5,true,1.500000"
        );
        let text = to_csv(&[record(false)]).unwrap();
        assert!(text.lines().nth(1).unwrap().contains("42,,,5,false"));
    }

    #[test]
    fn json_round_trip_reproduces_csv() {
        let recs = vec![record(true), record(false)];
        let back = from_json(&to_json(&recs).unwrap()).unwrap();
        assert_eq!(to_csv(&back).unwrap(), to_csv(&recs).unwrap());
    }

    #[test]
    fn empty_table_creates_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let err = emit(&ResultTable::default(), OutputFormat::Csv, &path);
        assert!(matches!(err, Err(Error::EmptyTable)));
        assert!(!path.exists());
    }
}
