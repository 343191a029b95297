//! Partial-identification bounds and moment-inequality inference for
//! transformation (duration) models whose censoring may depend on the
//! unobserved heterogeneity.
//!
//! The crate is `no_std` + `alloc`. The `std` feature (default) turns on the
//! std paths of the numeric dependencies; `parallel` adds rayon-backed grid
//! evaluation.
//!
//! Layout:
//! - [`data`]: observations, samples, covariate transform, parameter normalisation.
//! - [`kernel`], [`instruments`], [`ustat`], [`engine`]: moment kernels,
//!   hypercube instrument classes, and U-statistic evaluation.
//! - [`inference`]: test statistics, moment selection and simulated critical values.
//! - [`confset`]: grid inversion of the test into confidence sets.
//! - [`population`]: simulation designs and population-level bound computation.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod confset;
pub mod data;
pub mod engine;
pub mod error;
pub mod inference;
pub mod instruments;
pub mod kernel;
pub mod linalg;
pub mod math;
mod par;
pub mod population;
pub mod rng;
pub mod ustat;

pub use confset::{
    beta_confidence_set, joint_confidence_set, joint_lower_envelope, project, Axis, ConfidenceSet,
    EvaluatedPoint, Interval, MarginalBound, ParamGrid, Projection,
};
pub use data::{
    transform_continuous, validate_beta, Beta, ContinuousTransform, DiscreteTuple,
    NormalizationSpec, Observation, Sample, TransformedSample,
};
pub use error::{Error, Result};
pub use inference::{
    default_tuning, gms_shift, joint_point_test, joint_test_statistic, point_test,
    simulate_critical_value, test_statistic, DrawMode, MiTest, TestOutcome, TuningParams,
    TuningRule,
};
pub use instruments::{
    enumerate_instruments, instrument_indicator, InstrumentFamily, InstrumentIndex, InstrumentMode,
};
pub use kernel::{m_kernel, mdagger_kernel};
pub use population::{
    compute_bi, compute_tbi, default_tolerance, population_table, simulate_dgp, BoundResult,
    DgpSpec, EnvelopePoint, ModelId, PopulationTable, X1Law,
};
pub use ustat::{h2hat, mbar, sigma_bar2, AllPairs, NoPairs, PairIndicator};
