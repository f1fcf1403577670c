//! Delimited formats for stress scenarios, deal books and fields on grids.
//!
//! Grid files hold one node per row: the chart coordinates followed by
//! coefficient columns. Connections use `C^k_i_j` headers (`i ≤ j`), metrics
//! use `g_i_j` (`i ≤ j`), with coordinate labels as indices.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use geogreeks_core::book::DealHedge;
use geogreeks_core::geometry::{Chart, Connection, TangentMove};
use geogreeks_core::linalg::Matrix;
use geogreeks_core::penalties::StressMove;
use geogreeks_core::reconstruction::{GridField, GridSpec};

use crate::error::{Error, Result};

struct Table {
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_table(file, path)
}

fn parse_table(input: impl Read, path: &Path) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::file(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() {
        return Err(Error::file(path, "empty file"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(Error::file(path, "no data rows"));
    }
    Ok(Table { header, rows })
}

fn number(path: &Path, line: u64, s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::parse(path, line, format!("cannot parse {what} `{s}`")))
}

fn expect_header(path: &Path, header: &[String], expected: &[String]) -> Result<()> {
    if header != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), header.join(",")),
        ));
    }
    Ok(())
}

/// Stress file: `label,weight,normalize,<one column per chart coordinate>`.
pub fn load_stress_moves(path: &Path, chart: &Chart) -> Result<Vec<StressMove>> {
    let t = read_table(path)?;
    let mut expected: Vec<String> = ["label", "weight", "normalize"].map(String::from).to_vec();
    expected.extend(chart.coords().iter().cloned());
    expect_header(path, &t.header, &expected)?;
    t.rows
        .iter()
        .map(|(line, r)| {
            let weight = number(path, *line, &r[1], "weight")?;
            let normalize = r[2]
                .parse::<bool>()
                .map_err(|_| Error::parse(path, *line, format!("normalize must be true or false, got `{}`", r[2])))?;
            let dir = r[3..]
                .iter()
                .map(|s| number(path, *line, s, "direction"))
                .collect::<Result<Vec<f64>>>()?;
            let mv = TangentMove::new(chart, &dir).map_err(|e| Error::parse(path, *line, e.to_string()))?;
            StressMove::new(&r[0], mv, weight, normalize).map_err(|e| Error::parse(path, *line, e.to_string()))
        })
        .collect()
}

/// Book file: `id,weight,<one column per hedge instrument>`.
pub fn load_book(path: &Path, instruments: &[&str]) -> Result<Vec<DealHedge>> {
    let t = read_table(path)?;
    let mut expected: Vec<String> = ["id", "weight"].map(String::from).to_vec();
    expected.extend(instruments.iter().map(|s| s.to_string()));
    expect_header(path, &t.header, &expected)?;
    let mut deals = Vec::with_capacity(t.rows.len());
    for (line, r) in &t.rows {
        if deals.iter().any(|d: &DealHedge| d.id == r[0]) {
            return Err(Error::parse(path, *line, format!("duplicate deal id `{}`", r[0])));
        }
        let weight = number(path, *line, &r[1], "weight")?;
        let trade = r[2..]
            .iter()
            .map(|s| number(path, *line, s, "trade"))
            .collect::<Result<Vec<f64>>>()?;
        deals.push(DealHedge::new(&r[0], weight, &trade).map_err(|e| Error::parse(path, *line, e.to_string()))?);
    }
    Ok(deals)
}

fn connection_columns(chart: &Chart) -> Vec<String> {
    let c = chart.coords();
    let d = c.len();
    let mut out = Vec::new();
    for k in 0..d {
        for i in 0..d {
            for j in i..d {
                out.push(format!("C^{}_{}_{}", c[k], c[i], c[j]));
            }
        }
    }
    out
}

fn metric_columns(chart: &Chart) -> Vec<String> {
    let c = chart.coords();
    let d = c.len();
    let mut out = Vec::new();
    for i in 0..d {
        for j in i..d {
            out.push(format!("g_{}_{}", c[i], c[j]));
        }
    }
    out
}

fn check_grid_chart(grid: &GridSpec, chart: &Chart) -> Result<()> {
    if grid.chart() != chart.id() || grid.dim() != chart.dim() {
        return Err(Error::config(format!(
            "grid is on chart `{}`, not `{}`",
            grid.chart(),
            chart.id()
        )));
    }
    Ok(())
}

fn write_grid_rows(
    path: &Path,
    chart: &Chart,
    grid: &GridSpec,
    columns: &[String],
    row: impl Fn(usize) -> Vec<f64>,
) -> Result<()> {
    let mut out = Vec::new();
    let mut header: Vec<String> = chart.coords().to_vec();
    header.extend(columns.iter().cloned());
    writeln!(out, "{}", header.join(",")).expect("write to memory");
    for n in 0..grid.len() {
        let vals: Vec<String> = grid.coords(n).into_iter().chain(row(n)).map(|v| v.to_string()).collect();
        writeln!(out, "{}", vals.join(",")).expect("write to memory");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_connection_field(path: &Path, chart: &Chart, field: &GridField<Connection>) -> Result<()> {
    check_grid_chart(field.grid(), chart)?;
    let d = chart.dim();
    write_grid_rows(path, chart, field.grid(), &connection_columns(chart), |n| {
        let c = field.at(n);
        let mut v = Vec::new();
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    v.push(c.get(k, i, j));
                }
            }
        }
        v
    })
}

pub fn write_metric_field(path: &Path, chart: &Chart, field: &GridField<Matrix>) -> Result<()> {
    check_grid_chart(field.grid(), chart)?;
    let d = chart.dim();
    write_grid_rows(path, chart, field.grid(), &metric_columns(chart), |n| {
        let g = field.at(n);
        let mut v = Vec::new();
        for i in 0..d {
            for j in i..d {
                v.push(g[(i, j)]);
            }
        }
        v
    })
}

/// Reads the coordinate block of a grid file and infers the grid. Every
/// node must appear exactly once; row order is free.
fn read_grid(path: &Path, id: &str, width: impl Fn(usize) -> usize) -> Result<(Chart, GridSpec, Vec<Vec<f64>>, Vec<String>)> {
    let t = read_table(path)?;
    let head = &t.header;
    let d = (1..=head.len())
        .find(|&d| d + width(d) == head.len())
        .ok_or_else(|| Error::parse(path, 1, "header does not match any dimension"))?;
    let labels: Vec<&str> = head[..d].iter().map(String::as_str).collect();
    let chart = Chart::new(id, &labels, &vec![""; d])?;

    let mut coords = Vec::with_capacity(t.rows.len());
    let mut values = Vec::with_capacity(t.rows.len());
    for (line, r) in &t.rows {
        let v = r
            .iter()
            .map(|s| number(path, *line, s, "value"))
            .collect::<Result<Vec<f64>>>()?;
        coords.push((*line, v[..d].to_vec()));
        values.push(v[d..].to_vec());
    }
    let mut origin = vec![0.0; d];
    let mut spacing = vec![0.0; d];
    let mut counts = vec![0usize; d];
    for k in 0..d {
        let mut axis: Vec<f64> = coords.iter().map(|(_, c)| c[k]).collect();
        axis.sort_by(f64::total_cmp);
        axis.dedup();
        let n = axis.len();
        if n < 2 {
            return Err(Error::file(path, format!("axis `{}` needs at least two values", labels[k])));
        }
        let h = (axis[n - 1] - axis[0]) / (n - 1) as f64;
        if axis.iter().enumerate().any(|(i, x)| (x - (axis[0] + i as f64 * h)).abs() > 1e-9 * h) {
            return Err(Error::file(path, format!("axis `{}` is not uniformly spaced", labels[k])));
        }
        origin[k] = axis[0];
        spacing[k] = h;
        counts[k] = n;
    }
    let grid = GridSpec::new(&chart, &origin, &spacing, &counts)?;
    if grid.len() != coords.len() {
        return Err(Error::file(
            path,
            format!("{} rows for a grid of {} nodes", coords.len(), grid.len()),
        ));
    }
    let mut ordered: Vec<Option<Vec<f64>>> = vec![None; grid.len()];
    for ((line, c), v) in coords.into_iter().zip(values) {
        let node = grid.nearest_node(&c)?;
        if ordered[node].replace(v).is_some() {
            return Err(Error::parse(path, line, "duplicate grid node"));
        }
    }
    let ordered = ordered.into_iter().map(|v| v.expect("all nodes filled")).collect();
    Ok((chart, grid, ordered, t.header))
}

/// Loads a connection field; the chart takes its labels from the header.
pub fn load_connection_field(path: &Path) -> Result<(Chart, GridField<Connection>)> {
    let (chart, grid, rows, header) = read_grid(path, "grid", |d| d * d * (d + 1) / 2)?;
    expect_header(path, &header[chart.dim()..], &connection_columns(&chart))?;
    let d = chart.dim();
    let values = rows
        .into_iter()
        .map(|v| {
            let mut it = v.into_iter();
            let mut c = Connection::zeros(&chart);
            for k in 0..d {
                for i in 0..d {
                    for j in i..d {
                        c.set(k, i, j, it.next().expect("column count checked"));
                    }
                }
            }
            c
        })
        .collect();
    Ok((chart, GridField::new(grid, values)?))
}

/// Loads a metric field written by [`write_metric_field`].
pub fn load_metric_field(path: &Path) -> Result<(Chart, GridField<Matrix>)> {
    let (chart, grid, rows, header) = read_grid(path, "grid", |d| d * (d + 1) / 2)?;
    expect_header(path, &header[chart.dim()..], &metric_columns(&chart))?;
    let d = chart.dim();
    let values = rows
        .into_iter()
        .map(|v| {
            let mut g = Matrix::zeros(d, d);
            let mut it = v.into_iter();
            for i in 0..d {
                for j in i..d {
                    let x = it.next().expect("column count checked");
                    g[(i, j)] = x;
                    g[(j, i)] = x;
                }
            }
            g
        })
        .collect();
    Ok((chart, GridField::new(grid, values)?))
}
