//! Plain-text tables. Every number carries its chart label and unit and is
//! printed in shortest round-trip exponent form.

use std::io::Write;

use geogreeks_core::geometry::{Chart, Connection};
use geogreeks_core::linalg::{Matrix, Vector};

use crate::error::{Error, Result};

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

fn io(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn product(units: &[&str]) -> String {
    let units: Vec<&str> = units.iter().copied().filter(|u| !u.is_empty() && *u != "dimensionless").collect();
    match units.as_slice() {
        [] => "1".into(),
        [a] => (*a).into(),
        [a, b] if a == b => format!("{a}^2"),
        _ => units.join("*"),
    }
}

fn ratio(top: &str, bottom: &[&str]) -> String {
    let b = product(bottom);
    match (top, b.as_str()) {
        (t, "1") => t.into(),
        (t, b) if b.contains('*') => format!("{t}/({b})"),
        (t, b) => format!("{t}/{b}"),
    }
}

pub fn line(out: &mut dyn Write, label: &str, value: f64, unit: &str) -> Result<()> {
    writeln!(out, "{label:<30} {:>24}  {unit}", num(value)).map_err(io)
}

pub fn text(out: &mut dyn Write, s: &str) -> Result<()> {
    writeln!(out, "{s}").map_err(io)
}

pub fn chart(out: &mut dyn Write, c: &Chart) -> Result<()> {
    let coords: Vec<String> = c
        .coords()
        .iter()
        .zip(c.units())
        .map(|(l, u)| format!("{l} [{u}]"))
        .collect();
    text(out, &format!("chart {}: {}", c.id(), coords.join(", ")))
}

/// `V_i` with unit `value/[i]`.
pub fn gradient(out: &mut dyn Write, c: &Chart, name: &str, v: &Vector, value_unit: &str) -> Result<()> {
    for (i, l) in c.coords().iter().enumerate() {
        line(out, &format!("{name}_{l}"), v[i], &ratio(value_unit, &[&c.units()[i]]))?;
    }
    Ok(())
}

/// Upper triangle of a symmetric form with unit `value/([i][j])`.
pub fn form(out: &mut dyn Write, c: &Chart, name: &str, m: &Matrix, value_unit: &str) -> Result<()> {
    let l = c.coords();
    let u = c.units();
    for i in 0..c.dim() {
        for j in i..c.dim() {
            line(out, &format!("{name}_{}_{}", l[i], l[j]), m[(i, j)], &ratio(value_unit, &[&u[i], &u[j]]))?;
        }
    }
    Ok(())
}

/// A general matrix with row and column labels.
pub fn matrix(out: &mut dyn Write, name: &str, rows: &[&str], cols: &[&str], m: &Matrix, unit: &str) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            line(out, &format!("{name}[{r},{c}]"), m[(i, j)], unit)?;
        }
    }
    Ok(())
}

/// `C^k_ij` for `i ≤ j` with unit `[k]/([i][j])`.
pub fn connection(out: &mut dyn Write, c: &Chart, conn: &Connection) -> Result<()> {
    let l = c.coords();
    let u = c.units();
    for k in 0..c.dim() {
        for i in 0..c.dim() {
            for j in i..c.dim() {
                line(
                    out,
                    &format!("C^{}_{}_{}", l[k], l[i], l[j]),
                    conn.get(k, i, j),
                    &ratio(&product(&[&u[k]]), &[&u[i], &u[j]]),
                )?;
            }
        }
    }
    Ok(())
}
