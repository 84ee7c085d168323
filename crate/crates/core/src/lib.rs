//! Stationarity and extremal behaviour of GARCH(p,q) processes through their
//! stochastic-recurrence representation and particle approximations of the
//! spectral measure.

pub mod clusters;
pub mod config;
pub mod empirical;
pub mod error;
pub mod innovations;
pub mod linalg;
pub mod pipeline;
pub mod quad;
pub mod rng;
pub mod spectral;
pub mod sre;
pub mod stationarity;
pub mod stats;
pub mod tailchain;

pub use clusters::{ClusterReport, DeltaMethod, Estimate};
pub use config::{Expected, ModelFile};
pub use empirical::{RunsEstimate, TailQq};
pub use error::{Error, ErrorClass, Result};
pub use innovations::{Innovation, InnovationConfig, InnovationKind};
pub use linalg::Matrix;
pub use pipeline::{report, ContourConfig, ContourPoint, Report, ReportConfig, ReportRow};
pub use rng::{Domain, SeedStream};
pub use spectral::{KappaConfig, ParticleEnsemble, RhoCurve, SpectralConfig};
pub use sre::{simulate, GarchSpec, MatrixSample, ProcessPath};
pub use stationarity::{GammaReport, StableConfig, Verdict};
pub use tailchain::{ChainConfig, ChainSummary, Condition};
