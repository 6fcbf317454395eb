//! Two-agent optimal-execution game in an Almgren-Chriss market.
//!
//! - [`market`]: discrete-time price dynamics and implementation shortfall.
//! - [`analytics`]: Nash and Pareto references, expected-cost model, front.
//! - [`neural`]: small MLP with Adam used as a Q-function.
//! - [`ddql`]: Double Deep Q-Learning agents.
//! - [`experiment`]: training/testing runs and scenario reports.
//! - [`io`]: configuration, CSV/JSON bundles and SVG figures.

pub mod analytics;
pub mod ddql;
pub mod error;
pub mod experiment;
pub mod io;
pub mod market;
pub mod neural;
pub mod rng;
pub mod schedule;

pub use error::{Error, Result};
pub use market::{IntraStepMode, MarketParams, MarketState, Order};
pub use schedule::{Schedule, SchedulePair};
