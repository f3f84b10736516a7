//! Debt-Solvency Rank: joint credit and funding shock propagation on
//! reconstructed interbank networks.
//!
//! Balance sheets come in through [`market`], are turned into ensembles of
//! exposure networks by [`reconstruction`], and are stressed by the
//! dynamics in [`contagion`]. [`metrics`] and [`sweep`] turn runs into
//! risk measures; [`report`] and [`plot`] persist them.
//!
//! The engine is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the common `f64` and `f32` instantiations.

pub mod contagion;
pub mod error;
pub mod market;
pub mod metrics;
pub mod plot;
pub mod reconstruction;
pub mod report;
pub mod scalar;
pub mod sweep;

pub use error::{Error, Result};
pub use market::{
    load_market, save_market, synth_market, validate, AdmissionPolicy, BalanceSheet, MarketSnapshot,
    SynthSpec, ValidationReport,
};
pub use metrics::{ds_rank, BankRiskProfile};
pub use reconstruction::{
    sample_ensemble, sample_network, ExposureMatrix, NetworkSampler, ReconstructionParams,
};
pub use scalar::{CompensatedSum, Scalar};
pub use sweep::{Ensemble, Runner, ScenarioResult};

pub use contagion::Termination;

pub type Trajectory = contagion::Trajectory<f64>;
pub type ShockParams = contagion::ShockParams<f64>;
pub type LeverageMatrices = contagion::LeverageMatrices<f64>;
pub type Damping = contagion::Damping<f64>;
pub type Lgd = contagion::Lgd<f64>;
pub type Contagion = contagion::Contagion<f64>;

pub type TrajectoryF32 = contagion::Trajectory<f32>;
pub type ShockParamsF32 = contagion::ShockParams<f32>;
pub type LeverageMatricesF32 = contagion::LeverageMatrices<f32>;
pub type DampingF32 = contagion::Damping<f32>;
pub type LgdF32 = contagion::Lgd<f32>;
pub type ContagionF32 = contagion::Contagion<f32>;
