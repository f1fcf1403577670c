//! Delimited market-series files: `date,S,sigma_atm,r_d,r_f[,rr25,bf25]`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use geogreeks_core::backtest::{Date, MarketRow, MarketSeries};
use geogreeks_core::pricing::VolUnit;

use crate::error::{Error, Result};

/// How a series file encodes its columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSchema {
    /// Unit of `sigma_atm`, `rr25` and `bf25` in the file.
    pub vol_unit: VolUnit,
    pub delimiter: u8,
}

impl Default for SeriesSchema {
    fn default() -> Self {
        Self {
            vol_unit: VolUnit::Decimal,
            delimiter: b',',
        }
    }
}

#[derive(Default)]
struct Columns {
    date: Option<usize>,
    spot: Option<usize>,
    vol: Option<usize>,
    r_d: Option<usize>,
    r_f: Option<usize>,
    rr25: Option<usize>,
    bf25: Option<usize>,
}

impl Columns {
    fn from_header(header: &csv::StringRecord, path: &Path) -> Result<Self> {
        let mut c = Columns::default();
        for (i, name) in header.iter().enumerate() {
            let slot = match name.trim().to_ascii_lowercase().as_str() {
                "date" => &mut c.date,
                "s" | "spot" => &mut c.spot,
                "sigma_atm" | "atm_vol" => &mut c.vol,
                "r_d" => &mut c.r_d,
                "r_f" => &mut c.r_f,
                "rr25" => &mut c.rr25,
                "bf25" => &mut c.bf25,
                other => return Err(Error::parse(path, 1, format!("unknown column `{other}`"))),
            };
            if slot.replace(i).is_some() {
                return Err(Error::parse(path, 1, format!("duplicate column `{}`", name.trim())));
            }
        }
        for (name, col) in [
            ("date", c.date),
            ("S", c.spot),
            ("sigma_atm", c.vol),
            ("r_d", c.r_d),
            ("r_f", c.r_f),
        ] {
            if col.is_none() {
                return Err(Error::parse(path, 1, format!("missing required column `{name}`")));
            }
        }
        Ok(c)
    }
}

/// Reads and validates a series file. Any row that fails to parse or
/// violates the series invariants is reported with its line number.
pub fn load_market_series(path: &Path, schema: &SeriesSchema) -> Result<MarketSeries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_market_series(file, path, schema)
}

/// [`load_market_series`] on any reader; `origin` labels error messages.
pub fn parse_market_series(input: impl Read, origin: &Path, schema: &SeriesSchema) -> Result<MarketSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| Error::file(origin, e.to_string()))?
        .clone();
    if header.is_empty() {
        return Err(Error::file(origin, "empty file"));
    }
    let cols = Columns::from_header(&header, origin)?;
    let unit = schema.vol_unit;

    let mut rows: Vec<MarketRow> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(origin, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let number = |i: usize, name: &str| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|_| Error::parse(origin, line, format!("cannot parse {name} `{}`", field(i))))
        };
        let optional = |c: Option<usize>, name: &str| -> Result<Option<f64>> {
            match c {
                Some(i) if !field(i).is_empty() => Ok(Some(unit.to_decimal(number(i, name)?))),
                _ => Ok(None),
            }
        };
        let date: Date = field(cols.date.unwrap())
            .parse()
            .map_err(|e: geogreeks_core::Error| Error::parse(origin, line, e.to_string()))?;
        let row = MarketRow {
            date,
            spot: number(cols.spot.unwrap(), "S")?,
            atm_vol: unit.to_decimal(number(cols.vol.unwrap(), "sigma_atm")?),
            r_d: number(cols.r_d.unwrap(), "r_d")?,
            r_f: number(cols.r_f.unwrap(), "r_f")?,
            rr25: optional(cols.rr25, "rr25")?,
            bf25: optional(cols.bf25, "bf25")?,
        };
        row.validate().map_err(|e| Error::parse(origin, line, e.to_string()))?;
        if let Some(prev) = rows.last() {
            if prev.date >= row.date {
                return Err(Error::parse(
                    origin,
                    line,
                    format!("date {} does not follow {}", row.date, prev.date),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::file(origin, "no data rows"));
    }
    Ok(MarketSeries::new(rows)?)
}

/// Writes a series in the file schema. Smile columns are included when any
/// row carries a quote.
pub fn write_market_series(series: &MarketSeries, path: &Path, schema: &SeriesSchema) -> Result<()> {
    let mut out = Vec::new();
    write_market_series_to(series, &mut out, schema).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_market_series_to(series: &MarketSeries, out: &mut impl Write, schema: &SeriesSchema) -> std::io::Result<()> {
    let d = schema.delimiter as char;
    let unit = schema.vol_unit;
    let smile = series.rows().iter().any(|r| r.rr25.is_some() || r.bf25.is_some());
    write!(out, "date{d}S{d}sigma_atm{d}r_d{d}r_f")?;
    if smile {
        write!(out, "{d}rr25{d}bf25")?;
    }
    writeln!(out)?;
    let opt = |v: Option<f64>| v.map(|x| unit.from_decimal(x).to_string()).unwrap_or_default();
    for r in series.rows() {
        write!(
            out,
            "{}{d}{}{d}{}{d}{}{d}{}",
            r.date,
            r.spot,
            unit.from_decimal(r.atm_vol),
            r.r_d,
            r.r_f
        )?;
        if smile {
            write!(out, "{d}{}{d}{}", opt(r.rr25), opt(r.bf25))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<MarketSeries> {
        parse_market_series(text.as_bytes(), Path::new("test.csv"), &SeriesSchema::default())
    }

    fn line_of(e: Error) -> u64 {
        match e {
            Error::Parse { line, .. } => line,
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(parse("").is_err());
        assert!(parse("date,S,sigma_atm,r_d,r_f\n").is_err());
    }

    #[test]
    fn two_valid_rows() {
        let s = parse("date,S,sigma_atm,r_d,r_f\n2022-05-16,1.04,0.09,0.01,0.0\n2022-05-17,1.05,0.091,0.01,0.0\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.rows()[1].spot, 1.05);
        assert_eq!(s.rows()[0].rr25, None);
    }

    #[test]
    fn nonpositive_spot_reports_line() {
        let e = parse("date,S,sigma_atm,r_d,r_f\n2022-05-16,1.04,0.09,0.01,0.0\n2022-05-17,0,0.09,0.01,0.0\n").unwrap_err();
        assert_eq!(line_of(e), 3);
    }

    #[test]
    fn bad_rows_report_line() {
        let head = "date,S,sigma_atm,r_d,r_f\n2022-05-16,1.04,0.09,0.01,0.0\n";
        assert_eq!(line_of(parse(&format!("{head}2022-05-16,1.04,0.09,0.01,0.0\n")).unwrap_err()), 3);
        assert_eq!(line_of(parse(&format!("{head}2022-05-17,abc,0.09,0.01,0.0\n")).unwrap_err()), 3);
        assert_eq!(line_of(parse(&format!("{head}2022-13-01,1.0,0.09,0.01,0.0\n")).unwrap_err()), 3);
        assert_eq!(line_of(parse(&format!("{head}2022-05-17,1.0,-0.09,0.01,0.0\n")).unwrap_err()), 3);
        assert_eq!(line_of(parse("date,S,sigma,r_d,r_f\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("date,S,r_d,r_f\n2022-05-16,1,0,0\n").unwrap_err()), 1);
    }

    #[test]
    fn vol_points_and_optional_smile() {
        let schema = SeriesSchema {
            vol_unit: VolUnit::Points,
            ..Default::default()
        };
        let text = "Date;S;sigma_atm;r_d;r_f;rr25;bf25\n2022-05-16;1.04;9;0.01;0;0.5;\n";
        let s = parse_market_series(text.as_bytes(), Path::new("x"), &SeriesSchema { delimiter: b';', ..schema }).unwrap();
        let r = s.rows()[0];
        assert!((r.atm_vol - 0.09).abs() < 1e-17);
        assert_eq!(r.rr25, Some(0.005));
        assert_eq!(r.bf25, None);
    }

    #[test]
    fn write_then_read_is_identity() {
        let text = "date,S,sigma_atm,r_d,r_f,rr25,bf25\n2022-05-16,1.0412345678901234,0.0912,0.011,-0.002,0.004,0.001\n2022-05-18,1.05,0.1,0.01,0,,\n";
        let s = parse(text).unwrap();
        let mut buf = Vec::new();
        write_market_series_to(&s, &mut buf, &SeriesSchema::default()).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(s, back);
    }

    proptest::proptest! {
        #[test]
        fn decimal_round_trip_is_exact(
            rows in proptest::collection::vec(
                (1usize..5, 1e-3f64..1e3, 1e-3f64..2.0, -0.1f64..0.1, -0.1f64..0.1,
                 proptest::option::of(-0.05f64..0.05), proptest::option::of(0.0f64..0.05)),
                1..20,
            ),
        ) {
            let mut day = 19_000;
            let rows: Vec<MarketRow> = rows
                .into_iter()
                .map(|(gap, spot, atm_vol, r_d, r_f, rr25, bf25)| {
                    day += gap as i32;
                    MarketRow { date: Date::from_days(day), spot, atm_vol, r_d, r_f, rr25, bf25 }
                })
                .collect();
            let s = MarketSeries::new(rows).unwrap();
            let mut buf = Vec::new();
            write_market_series_to(&s, &mut buf, &SeriesSchema::default()).unwrap();
            let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
            proptest::prop_assert_eq!(s, back);
        }
    }
}
