//! Replay of one-step P&L predictors and hedge-cost accumulation over a
//! market series.

mod cost;
mod date;
mod pnl;
mod series;
mod stats;

pub use cost::{run_cost_backtest, CostConfig, CostMode, CostReport, HedgeUniverse, StopFloors};
pub use date::{Date, DayCount};
pub use pnl::{run_pnl_backtest, CalibrationChoice, PnlConfig, PredictorReport, PredictorSeries, PREDICTORS};
pub use series::{Frequency, MarketRow, MarketSeries};
pub use stats::{error_stats, mae_rmse, pearson, ErrorStats};
