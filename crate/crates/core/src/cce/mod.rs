//! Counterfactual-imputation ATT estimator with common-correlated-effects
//! factor proxies.
//!
//! 1. [`estimate_factors`]: cross-sectional averages of `(y, x')` over the
//!    never-treated units, for every period, plus observed factors.
//! 2. [`fit_pretreatment`]: pooled slope `β̂` and loadings `â_i` from the
//!    pre-treatment window `t < g_min`, using all units.
//! 3. [`impute_covariates`]: `x̂_{i,t}(∞) = λ̂_i' f̂_t`, where `λ̂_i` regresses
//!    the pre-window covariates on `f̂`.
//! 4. [`impute_outcomes`]: `ŷ_{i,t}(∞) = β̂' x̂_{i,t}(∞) + â_i' f̂_t`.
//!
//! [`att_table`] averages the per-unit differences into group-time cells.
//! [`estimate`] chains all of it.

mod att;
mod factors;
mod fit;
mod impute;

use alloc::vec::Vec;

pub use att::{att_table, AttCell, AttOptions, AttSummary, AttTable, CellInference, Interval, SummaryInference, Window};
pub use factors::{estimate_factors, FactorColumn, FactorEstimate, ObservedFactor};
pub use fit::{fit_pretreatment, required_pre_window, CceFit, FitDiagnostics};
pub use impute::{impute_covariates, impute_outcomes, CovariateImputation, OutcomeImputation};

use crate::panel::{GroupIndex, PanelDataset};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimatorOptions {
    pub observed: Vec<ObservedFactor>,
    pub groupwise_beta: bool,
    pub att: AttOptions,
}

/// Everything produced by one estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimation {
    pub factors: FactorEstimate,
    pub fit: CceFit,
    pub covariates: CovariateImputation,
    pub outcomes: OutcomeImputation,
    pub table: AttTable,
}

pub fn estimate(data: &PanelDataset, index: &GroupIndex, options: &EstimatorOptions) -> Result<Estimation> {
    let factors = estimate_factors(data, index, &options.observed)?;
    let fit = fit_pretreatment(data, index, &factors, options.groupwise_beta)?;
    let covariates = impute_covariates(&fit, &factors, index);
    let outcomes = impute_outcomes(data, &fit, &factors, &covariates, index);
    let table = att_table(data, index, &fit, &covariates, &outcomes, options.att)?;
    Ok(Estimation { factors, fit, covariates, outcomes, table })
}
