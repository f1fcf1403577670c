//! TOML run configuration. Every section is optional; each subcommand
//! checks for the sections it needs. Relative paths resolve against the
//! config file's directory.

use std::path::{Path, PathBuf};

use geogreeks_core::backtest::{Date, DayCount, Frequency};
use geogreeks_core::linalg::Matrix;
use geogreeks_core::pricing::{BarrierSpec, FdBumps, Instrument, MarketSnapshot, OptionKind, SmilePillars, VanillaSpec, VolUnit};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::{Calendar, SynthModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VolUnits {
    #[default]
    Points,
    Decimal,
}

impl From<VolUnits> for VolUnit {
    fn from(v: VolUnits) -> Self {
        match v {
            VolUnits::Points => VolUnit::Points,
            VolUnits::Decimal => VolUnit::Decimal,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: Option<u64>,
    /// Unit of the vol coordinate in all charts and outputs.
    pub vol_units: VolUnits,
    pub bumps: BumpsConfig,
    pub tolerances: TolerancesConfig,
    pub market: Option<MarketConfig>,
    pub instrument: Option<InstrumentConfig>,
    pub calibration: CalibrationConfig,
    pub connection: Option<ConnectionConfig>,
    pub liquidity: Option<LiquidityConfig>,
    pub transform: Option<TransformConfig>,
    pub series: Option<SeriesConfig>,
    pub pnl: PnlConfigSection,
    pub cost: CostConfigSection,
    pub reconstruct: Option<ReconstructConfig>,
    pub report: ReportConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Config = toml::from_str(&text).map_err(|e| Error::file(path, e.to_string()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn vol_unit(&self) -> VolUnit {
        self.vol_units.into()
    }

    pub fn fd_bumps(&self) -> Result<FdBumps> {
        let b = FdBumps {
            spot_rel: self.bumps.spot_rel,
            vol_points: self.bumps.vol_points,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn market(&self) -> Result<&MarketConfig> {
        self.market.as_ref().ok_or_else(|| Error::config("missing [market] section"))
    }

    pub fn instrument(&self) -> Result<&InstrumentConfig> {
        self.instrument.as_ref().ok_or_else(|| Error::config("missing [instrument] section"))
    }

    pub fn liquidity(&self) -> Result<&LiquidityConfig> {
        self.liquidity.as_ref().ok_or_else(|| Error::config("missing [liquidity] section"))
    }

    /// Serialized form, as echoed in report summaries.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BumpsConfig {
    /// Spot bump relative to spot.
    pub spot_rel: f64,
    /// Vol bump in vol points.
    pub vol_points: f64,
}

impl Default for BumpsConfig {
    fn default() -> Self {
        let b = FdBumps::default();
        Self {
            spot_rel: b.spot_rel,
            vol_points: b.vol_points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TolerancesConfig {
    /// Weight of the baseline added to a singular liquidity metric.
    pub regularize: f64,
    /// Relative eigenvalue floor for reconstructed metrics.
    pub spd_floor: f64,
    /// Round-trip tolerance reported by `transform`.
    pub round_trip: f64,
}

impl Default for TolerancesConfig {
    fn default() -> Self {
        Self {
            regularize: 0.0,
            spd_floor: 1e-10,
            round_trip: 1e-12,
        }
    }
}

/// Flat-vol market state. Vols and smile quotes are decimals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub spot: f64,
    pub vol: f64,
    #[serde(default)]
    pub r_d: f64,
    #[serde(default)]
    pub r_f: f64,
    pub rr25: Option<f64>,
    pub bf25: Option<f64>,
}

impl MarketConfig {
    pub fn snapshot(&self) -> Result<MarketSnapshot> {
        Ok(MarketSnapshot::new(self.spot, self.vol, self.r_d, self.r_f)?)
    }

    pub fn pillars(&self) -> Result<SmilePillars> {
        Ok(match (self.rr25, self.bf25) {
            (None, None) => SmilePillars::flat(self.vol)?,
            (rr, bf) => SmilePillars::from_rr_bf(self.vol, rr.unwrap_or(0.0), bf.unwrap_or(0.0))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstrumentKind {
    Call,
    Put,
    Straddle,
    UpInCall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentConfig {
    pub kind: InstrumentKind,
    pub strike: f64,
    pub barrier: Option<f64>,
    /// Time to expiry in years, for single-date subcommands.
    pub expiry: Option<f64>,
    /// Expiry date (`YYYY-MM-DD`), for backtests.
    pub expiry_date: Option<String>,
}

impl InstrumentConfig {
    pub fn expiry_years(&self) -> Result<f64> {
        self.expiry
            .ok_or_else(|| Error::config("[instrument] needs `expiry` (years)"))
    }

    pub fn expiry_date(&self) -> Result<Date> {
        let s = self
            .expiry_date
            .as_deref()
            .ok_or_else(|| Error::config("[instrument] needs `expiry_date`"))?;
        Ok(s.parse::<Date>()?)
    }

    pub fn barrier(&self) -> Result<f64> {
        self.barrier
            .ok_or_else(|| Error::config("an up-and-in call needs `barrier`"))
    }

    pub fn build(&self, expiry: f64) -> Result<Instrument> {
        Ok(match self.kind {
            InstrumentKind::Call => Instrument::Vanilla(VanillaSpec::new(OptionKind::Call, self.strike, expiry)?),
            InstrumentKind::Put => Instrument::Vanilla(VanillaSpec::new(OptionKind::Put, self.strike, expiry)?),
            InstrumentKind::Straddle => Instrument::Straddle {
                strike: self.strike,
                expiry,
            },
            InstrumentKind::UpInCall => Instrument::UpInCall(BarrierSpec::new(self.strike, self.barrier()?, expiry)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HedgeKind {
    Call,
    Put,
    Straddle,
}

/// A calibration instrument. Without a strike it sits at its pillar: ATM for
/// the straddle, 25-delta for the call and put.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationInstrumentConfig {
    pub kind: HedgeKind,
    pub strike: Option<f64>,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// Calibration inputs given directly as matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitCalibrationConfig {
    pub gradient: Vec<f64>,
    pub baseline: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// Ridge parameter; 0 selects minimum-norm.
    pub eta: f64,
    /// Priced instruments; empty means ATM straddle and 25-delta call.
    pub instruments: Vec<CalibrationInstrumentConfig>,
    /// Explicit inputs; when present they replace `instruments`.
    pub explicit: Vec<ExplicitCalibrationConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConnectionSource {
    Zero,
    Explicit,
    #[default]
    Calibrated,
    Liquidity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConnectionConfig {
    pub source: ConnectionSource,
    /// `coefficients[k][i][j] = C^k_ij` for `source = "explicit"`.
    pub coefficients: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierConfig {
    #[serde(default = "infinity")]
    pub breakpoint: f64,
    pub clip: f64,
    pub width: f64,
    pub smoothing: f64,
}

fn infinity() -> f64 {
    f64::INFINITY
}

/// One hedge instrument. Give either `half_spread` (premium per unit) or
/// `half_width` (vol points, converted with `quote_vega` per vol point, or
/// with the model vega when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HedgeConfig {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    pub half_spread: Option<f64>,
    pub half_width: Option<f64>,
    pub quote_vega: Option<f64>,
    pub clip: f64,
    #[serde(default)]
    pub tiers: Vec<TierConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiquidityConfig {
    /// Spot, ATM straddle and 25-delta call, in that order, when `b` is absent.
    pub hedges: Vec<HedgeConfig>,
    /// Option notional whose exposures are controlled.
    pub notional: Option<f64>,
    /// Explicit exposure matrix (p×m); requires `j_e`.
    pub b: Option<Vec<Vec<f64>>>,
    /// Explicit exposure drift (p×d).
    pub j_e: Option<Vec<Vec<f64>>>,
    pub bucket: Option<String>,
    /// Stress scenarios for a gap penalty.
    pub stress: Option<PathBuf>,
    /// Deal trades for book netting.
    pub book: Option<PathBuf>,
}

/// Charts understood by `transform`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartName {
    SpotVol,
    ForwardVol,
    LogforwardVol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    pub from: ChartName,
    pub to: ChartName,
    /// Carry horizon in years; defaults to the instrument expiry.
    pub expiry: Option<f64>,
    /// Defaults to the instrument's Greeks when `from = "spot-vol"`.
    pub gradient: Option<Vec<f64>>,
    pub hessian: Option<Vec<Vec<f64>>>,
    pub connection: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(rename = "move")]
    pub tangent: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub start: String,
    pub count: usize,
    #[serde(default)]
    pub calendar: Calendar,
    #[serde(default)]
    pub model: SynthModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    pub path: Option<PathBuf>,
    /// Vol unit inside the series file.
    #[serde(default = "decimal")]
    pub vol_units: VolUnits,
    #[serde(default = "comma")]
    pub delimiter: char,
    pub synthetic: Option<SyntheticConfig>,
}

fn decimal() -> VolUnits {
    VolUnits::Decimal
}

fn comma() -> char {
    ','
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrequencyName {
    #[default]
    Daily,
    Weekly,
}

impl From<FrequencyName> for Frequency {
    fn from(f: FrequencyName) -> Self {
        match f {
            FrequencyName::Daily => Frequency::Daily,
            FrequencyName::Weekly => Frequency::Weekly,
        }
    }
}

fn year_days() -> f64 {
    DayCount::default().denominator
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PnlConfigSection {
    pub frequency: FrequencyName,
    pub day_count: f64,
}

impl Default for PnlConfigSection {
    fn default() -> Self {
        Self {
            frequency: FrequencyName::Daily,
            day_count: year_days(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostModeName {
    #[default]
    Flat,
    Tiered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfigSection {
    pub notional: f64,
    pub frequency: FrequencyName,
    pub day_count: f64,
    pub mode: CostModeName,
    pub trigger: Option<f64>,
    pub stop_delta: Option<f64>,
    pub stop_vega: Option<f64>,
}

impl Default for CostConfigSection {
    fn default() -> Self {
        Self {
            notional: 1.0,
            frequency: FrequencyName::Weekly,
            day_count: year_days(),
            mode: CostModeName::Flat,
            trigger: None,
            stop_delta: None,
            stop_vega: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructConfig {
    /// Connection field on a uniform grid.
    pub connections: PathBuf,
    /// The same connection on the once-refined grid, for the convergence verdict.
    pub refined: Option<PathBuf>,
    /// Coordinates of the anchor node.
    pub anchor: Vec<f64>,
    pub anchor_metric: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub histogram_bins: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { histogram_bins: 20 }
    }
}

/// Row-major nested list to a matrix, checking the shape.
pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(Error::config(format!("`{what}` must be a non-empty rectangular matrix")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Matrix::from_row_slice(n, m, &flat))
}
