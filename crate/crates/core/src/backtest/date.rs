use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// A calendar date stored as days since 1970-01-01 (proleptic Gregorian).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date(i32);

impl Date {
    pub fn from_days(days: i32) -> Self {
        Date(days)
    }

    pub fn days(self) -> i32 {
        self.0
    }

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Result<Self> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return Err(Error::invalid(alloc::format!("invalid date {year:04}-{month:02}-{day:02}")));
        }
        // days_from_civil
        let y = if month <= 2 { year - 1 } else { year } as i64;
        let era = if y >= 0 { y } else { y - 399 } / 400;
        let yoe = y - era * 400;
        let m = month as i64;
        let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + day as i64 - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        Ok(Date((era * 146_097 + doe - 719_468) as i32))
    }

    pub fn ymd(self) -> (i32, u32, u32) {
        let z = self.0 as i64 + 719_468;
        let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
        let doe = z - era * 146_097;
        let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
        let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        let mp = (5 * doy + 2) / 153;
        let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
        let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
        let y = (yoe + era * 400) as i32 + i32::from(m <= 2);
        (y, m, d)
    }

    /// 0 = Monday ... 6 = Sunday.
    pub fn weekday(self) -> u32 {
        // 1970-01-01 was a Thursday.
        (self.0 as i64 + 3).rem_euclid(7) as u32
    }

    pub fn add_days(self, n: i32) -> Self {
        Date(self.0 + n)
    }

    pub fn days_until(self, later: Date) -> i32 {
        later.0 - self.0
    }
}

fn is_leap(y: i32) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

fn days_in_month(y: i32, m: u32) -> u32 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(y) => 29,
        2 => 28,
        _ => 0,
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (y, m, d) = self.ymd();
        write!(f, "{y:04}-{m:02}-{d:02}")
    }
}

impl FromStr for Date {
    type Err = Error;

    /// Parses `YYYY-MM-DD`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(alloc::format!("cannot parse date `{s}` (expected YYYY-MM-DD)"));
        let mut parts = s.trim().split('-');
        let y = parts.next().and_then(|p| p.parse::<i32>().ok()).ok_or_else(bad)?;
        let m = parts.next().and_then(|p| p.parse::<u32>().ok()).ok_or_else(bad)?;
        let d = parts.next().and_then(|p| p.parse::<u32>().ok()).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        Date::from_ymd(y, m, d)
    }
}

/// Year fraction as calendar days over a fixed denominator (ACT/365 by default).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayCount {
    pub denominator: f64,
}

impl Default for DayCount {
    fn default() -> Self {
        Self { denominator: 365.0 }
    }
}

impl DayCount {
    pub fn year_fraction(&self, from: Date, to: Date) -> f64 {
        from.days_until(to) as f64 / self.denominator
    }
}
