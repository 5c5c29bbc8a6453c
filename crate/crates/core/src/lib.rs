//! Gap decomposition toolkit: Oaxaca-Blinder and inverse-probability
//! weighted mediation analysis, treatment-effect estimators, bootstrap
//! inference, balance diagnostics and a synthetic data generator.

pub mod balance;
pub mod bootstrap;
pub mod data;
pub mod error;
pub mod ipw;
pub mod lasso;
pub mod numkit;
pub mod oaxaca;
pub mod ols;
pub mod pipeline;
pub mod probit;
pub mod synth;

pub use balance::{balance_table, common_support, expectation_gap_pct, categories_to_chf, BalanceTable, SupportHistogram};
pub use bootstrap::{bootstrap, BootstrapOptions, BootstrapResult};
pub use data::{complete_cases, load_csv, parse_csv, AnalysisSample, Column, Dataset, LoadReport, MediatorSet, RoleMap};
pub use error::{Error, Result};
pub use ipw::{ipw_mediation, trim, PropensityPair, TrimmingPolicy};
pub use numkit::{Matrix, RngState};
pub use oaxaca::{oaxaca_decompose, DecompositionMethod, DecompositionResult, COMPONENT_NAMES};
pub use ols::{EffectEstimate, EstimatorKind};
pub use pipeline::{run, Analysis, OutputFormat, ReferenceGroup, Report, RunConfig};
pub use synth::{generate, monte_carlo, true_effects, McEstimator, SyntheticDgp, TrueEffects};
