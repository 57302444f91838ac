//! Pole-zero identification from frequency-domain data.
//!
//! Fit rational models to sampled responses, decide stability from the
//! fitted poles, and sweep circuit parameters to watch poles move.

pub mod error;
pub mod fixtures;
pub mod freqresp;
pub mod linalg;
pub mod netsim;
pub mod poles;
pub mod ratfit;
pub mod render;
pub mod staban;
pub mod sweeps;

pub use error::{Error, Result};
pub use freqresp::{FrequencyGrid, FrequencyResponseSet, PortLabel, PortResponse, ResponseKind};
pub use netsim::{Netlist, ProbeSpec};
pub use ratfit::{FitConfig, FitMethod, FitReport, PartialFractionModel, PolynomialRatioModel, RationalModel};
