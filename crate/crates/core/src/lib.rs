//! Multi-level herding agent-based market model.
//!
//! The crate is split along the pipeline:
//!
//! * [`data`]: price/sector CSV ingestion, log returns and normalization.
//! * [`calibration`]: horizon weights, co-movement degrees and trading
//!   probabilities, assembled into [`ModelParams`].
//! * [`engine`]: the daily stock/sector/market herding simulation.
//! * [`spectral`]: volatility autocorrelation, the equal-time correlation
//!   matrix, its eigen-decomposition and the derived reports.
//! * [`fixtures`]: synthetic price panels with tunable co-movement.
//! * [`cli`]: the `herdlab` command-line front end.
//!
//! A narrative guide with runnable snippets lives in the `book/` directory
//! of the repository.

pub mod calibration;
pub mod cli;
pub mod data;
pub mod engine;
mod error;
pub mod fixtures;
pub mod manifest;
pub mod spectral;

pub use calibration::{CoMovement, HorizonWeights, ModelParams};
pub use data::{NormalizedPanel, PricePanel, ReturnKind, ReturnPanel, SectorMap};
pub use engine::{run_simulation, PopulationMode, SimOutput, Simulator};
pub use error::{Error, Result};
pub use spectral::{CorrelationMatrix, Spectrum, SpectralReport};

/// Tool version recorded in every manifest.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
