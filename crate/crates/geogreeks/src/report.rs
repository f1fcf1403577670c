//! Report files: per-step tables as CSV, a TOML summary with statistics,
//! config echo and seed, and histogram bin counts. Floats are written in
//! shortest round-trip form, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use geogreeks_core::backtest::{CostReport, Date, PredictorReport};

use crate::error::{Error, Result};

/// Run metadata written into every summary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMeta {
    pub command: String,
    pub seed: Option<u64>,
    /// Effective configuration as TOML.
    pub config: String,
    pub histogram_bins: usize,
}

/// Equal-width bins over `[min, max]`; the last bin is closed. A constant
/// sample gets one bin.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return vec![(lo, hi, finite.len())];
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in finite {
        let b = (((v - lo) / w) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let a = lo + i as f64 * w;
            let b = if i + 1 == bins { hi } else { lo + (i + 1) as f64 * w };
            (a, b, c)
        })
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    Ok(p)
}

fn summary_text(meta: &RunMeta, results: toml::Table) -> Result<String> {
    let mut run = toml::Table::new();
    run.insert("command".into(), meta.command.clone().into());
    if let Some(s) = meta.seed {
        let s = i64::try_from(s).map_err(|_| Error::config("seed does not fit a TOML integer"))?;
        run.insert("seed".into(), s.into());
    }
    let mut doc = toml::Table::new();
    doc.insert("run".into(), run.into());
    doc.insert("results".into(), results.into());
    let config: toml::Table = toml::from_str(&meta.config).map_err(|e| Error::config(e.to_string()))?;
    doc.insert("config".into(), config.into());
    toml::to_string(&doc).map_err(|e| Error::config(e.to_string()))
}

const CONNECTION_COLUMNS: [&str; 6] = [
    "C^S_S_S",
    "C^S_S_sigma",
    "C^S_sigma_sigma",
    "C^sigma_S_S",
    "C^sigma_S_sigma",
    "C^sigma_sigma_sigma",
];

/// Writes `increments.csv`, `connections.csv`, `histogram.csv` (errors
/// against the benchmark) and `summary.toml`. Returns the written paths.
pub fn emit_pnl_report(report: &PredictorReport, dir: &Path, meta: &RunMeta) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();

    let mut inc = String::from("start_date,end_date,knocked,benchmark");
    for p in &report.predictors {
        inc.push(',');
        inc.push_str(p.name);
    }
    inc.push('\n');
    for n in 0..report.len() {
        write!(
            inc,
            "{},{},{},{}",
            report.start_dates[n], report.end_dates[n], report.knocked[n], report.benchmark[n]
        )
        .unwrap();
        for p in &report.predictors {
            write!(inc, ",{}", p.increments[n]).unwrap();
        }
        inc.push('\n');
    }
    out.push(write(dir, "increments.csv", &inc)?);

    let mut conn = format!("start_date,{}\n", CONNECTION_COLUMNS.join(","));
    for (date, c) in report.start_dates.iter().zip(&report.connections) {
        write!(conn, "{date}").unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in i..2 {
                    write!(conn, ",{}", c.get(k, i, j)).unwrap();
                }
            }
        }
        conn.push('\n');
    }
    out.push(write(dir, "connections.csv", &conn)?);

    let mut hist = String::from("predictor,bin,lower,upper,count\n");
    for p in &report.predictors {
        let errors: Vec<f64> = p.increments.iter().zip(&report.benchmark).map(|(a, b)| a - b).collect();
        for (i, (a, b, c)) in histogram(&errors, meta.histogram_bins).into_iter().enumerate() {
            writeln!(hist, "{},{i},{a},{b},{c}", p.name).unwrap();
        }
    }
    out.push(write(dir, "histogram.csv", &hist)?);

    let mut results = toml::Table::new();
    results.insert("frequency".into(), report.frequency.label().into());
    results.insert("steps".into(), (report.len() as i64).into());
    results.insert(
        "knocked_steps".into(),
        (report.knocked.iter().filter(|k| **k).count() as i64).into(),
    );
    for p in &report.predictors {
        let mut t = toml::Table::new();
        t.insert("mae".into(), p.mae.into());
        t.insert("rmse".into(), p.rmse.into());
        if let Some(r) = p.pearson {
            t.insert("pearson".into(), r.into());
        }
        results.insert(p.name.into(), t.into());
    }
    out.push(write(dir, "summary.toml", &summary_text(meta, results)?)?);
    Ok(out)
}

const TRADE_COLUMNS: [&str; 3] = ["spot", "straddle", "call25"];

/// Writes `costs.csv`, `histogram.csv` (per-rebalance costs) and
/// `summary.toml`. Returns the written paths.
pub fn emit_cost_report(report: &CostReport, dir: &Path, meta: &RunMeta) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();

    let mut t = String::from("date,rebalanced");
    for c in TRADE_COLUMNS {
        write!(t, ",trade_{c}").unwrap();
    }
    for c in TRADE_COLUMNS {
        write!(t, ",lambda_{c}").unwrap();
    }
    t.push_str(",cost,cumulative\n");
    for n in 0..report.dates.len() {
        write!(t, "{},{}", report.dates[n], report.rebalanced[n]).unwrap();
        for v in report.trades[n].iter().chain(&report.lambdas[n]) {
            write!(t, ",{v}").unwrap();
        }
        writeln!(t, ",{},{}", report.costs[n], report.cumulative[n]).unwrap();
    }
    out.push(write(dir, "costs.csv", &t)?);

    let costs: Vec<f64> = report
        .costs
        .iter()
        .zip(&report.rebalanced)
        .filter(|(_, r)| **r)
        .map(|(c, _)| *c)
        .collect();
    let mut hist = String::from("bin,lower,upper,count\n");
    for (i, (a, b, c)) in histogram(&costs, meta.histogram_bins).into_iter().enumerate() {
        writeln!(hist, "{i},{a},{b},{c}").unwrap();
    }
    out.push(write(dir, "histogram.csv", &hist)?);

    let mut results = toml::Table::new();
    results.insert("dates".into(), (report.dates.len() as i64).into());
    results.insert(
        "rebalances".into(),
        (report.rebalanced.iter().filter(|r| **r).count() as i64).into(),
    );
    results.insert("total_cost".into(), report.total().into());
    results.insert("initial_premium".into(), report.initial_premium.into());
    if let Some(f) = report.premium_fraction() {
        results.insert("premium_fraction".into(), f.into());
    }
    if let Some(d) = report.halted_at {
        results.insert("halted_at".into(), d.to_string().into());
    }
    out.push(write(dir, "summary.toml", &summary_text(meta, results)?)?);
    Ok(out)
}

/// Contents of an `increments.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementsTable {
    pub start_dates: Vec<Date>,
    pub end_dates: Vec<Date>,
    pub knocked: Vec<bool>,
    pub benchmark: Vec<f64>,
    pub predictors: Vec<(String, Vec<f64>)>,
}

fn records(path: &Path) -> Result<(Vec<String>, Vec<(u64, csv::StringRecord)>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::file(path, e.to_string()))?;
    let header = r
        .headers()
        .map_err(|e| Error::file(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        rows.push((rec.position().map_or(0, |p| p.line()), rec));
    }
    Ok((header, rows))
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, i: usize) -> Result<T> {
    let s = rec.get(i).unwrap_or("");
    s.parse()
        .map_err(|_| Error::parse(path, line, format!("cannot parse column {} value `{s}`", i + 1)))
}

pub fn read_increments(path: &Path) -> Result<IncrementsTable> {
    let (header, rows) = records(path)?;
    if header.len() < 4 || header[..4] != ["start_date", "end_date", "knocked", "benchmark"] {
        return Err(Error::parse(path, 1, "not an increments table"));
    }
    let mut t = IncrementsTable {
        start_dates: Vec::new(),
        end_dates: Vec::new(),
        knocked: Vec::new(),
        benchmark: Vec::new(),
        predictors: header[4..].iter().map(|h| (h.clone(), Vec::new())).collect(),
    };
    for (line, rec) in &rows {
        t.start_dates.push(field::<Date>(path, *line, rec, 0)?);
        t.end_dates.push(field::<Date>(path, *line, rec, 1)?);
        t.knocked.push(field(path, *line, rec, 2)?);
        t.benchmark.push(field(path, *line, rec, 3)?);
        for (k, (_, v)) in t.predictors.iter_mut().enumerate() {
            v.push(field(path, *line, rec, 4 + k)?);
        }
    }
    Ok(t)
}

/// Contents of a `costs.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostsTable {
    pub dates: Vec<Date>,
    pub rebalanced: Vec<bool>,
    pub trades: Vec<[f64; 3]>,
    pub lambdas: Vec<[f64; 3]>,
    pub costs: Vec<f64>,
    pub cumulative: Vec<f64>,
}

pub fn read_costs(path: &Path) -> Result<CostsTable> {
    let (header, rows) = records(path)?;
    if header.len() != 10 || header[0] != "date" {
        return Err(Error::parse(path, 1, "not a costs table"));
    }
    let mut t = CostsTable {
        dates: Vec::new(),
        rebalanced: Vec::new(),
        trades: Vec::new(),
        lambdas: Vec::new(),
        costs: Vec::new(),
        cumulative: Vec::new(),
    };
    for (line, rec) in &rows {
        let f = |i| field::<f64>(path, *line, rec, i);
        t.dates.push(field(path, *line, rec, 0)?);
        t.rebalanced.push(field(path, *line, rec, 1)?);
        t.trades.push([f(2)?, f(3)?, f(4)?]);
        t.lambdas.push([f(5)?, f(6)?, f(7)?]);
        t.costs.push(f(8)?);
        t.cumulative.push(f(9)?);
    }
    Ok(t)
}
