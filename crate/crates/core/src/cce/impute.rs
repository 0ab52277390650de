use alloc::vec::Vec;

use crate::cce::{CceFit, FactorEstimate};
use crate::numerics::Matrix;
use crate::panel::{GroupIndex, PanelDataset};

/// Untreated-potential covariates for the treated units.
///
/// Rows cover every period `1..=T`; rows `t >= g_i` are the imputations
/// proper, earlier rows serve the placebo cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateImputation {
    units: Vec<usize>,
    values: Vec<Matrix>,
}

impl CovariateImputation {
    /// The observed covariates in place of `x̂_{i,t}(∞)`. Feeding this into
    /// [`impute_outcomes`] targets the direct effect only.
    pub fn observed(data: &PanelDataset, index: &GroupIndex) -> Self {
        let units = index.treated_units();
        let values = units.iter().map(|&i| data.covariate_block(i, 1, data.n_periods())).collect();
        Self { units, values }
    }

    pub fn units(&self) -> &[usize] {
        &self.units
    }

    /// T×m block for the `slot`-th treated unit.
    pub fn values(&self, slot: usize) -> &Matrix {
        &self.values[slot]
    }

    pub fn for_unit(&self, unit: usize) -> Option<&Matrix> {
        self.units.iter().position(|&u| u == unit).map(|s| &self.values[s])
    }
}

/// `x̂_{i,t}(∞) = λ̂_i' f̂_t`.
pub fn impute_covariates(fit: &CceFit, factors: &FactorEstimate, index: &GroupIndex) -> CovariateImputation {
    let units = index.treated_units();
    let values = units.iter().map(|&i| factors.values() * fit.loadings_lambda(i)).collect();
    CovariateImputation { units, values }
}

/// Untreated-potential outcomes for the treated units, one length-T series each.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeImputation {
    units: Vec<usize>,
    values: Vec<Vec<f64>>,
}

impl OutcomeImputation {
    pub fn units(&self) -> &[usize] {
        &self.units
    }

    pub fn values(&self, slot: usize) -> &[f64] {
        &self.values[slot]
    }

    pub fn for_unit(&self, unit: usize) -> Option<&[f64]> {
        self.units.iter().position(|&u| u == unit).map(|s| self.values[s].as_slice())
    }
}

/// `ŷ_{i,t}(∞) = β̂' x̂_{i,t}(∞) + â_i' f̂_t`, with the group's own slope when
/// the fit carries group-wise slopes.
pub fn impute_outcomes(
    data: &PanelDataset,
    fit: &CceFit,
    factors: &FactorEstimate,
    covariates: &CovariateImputation,
    index: &GroupIndex,
) -> OutcomeImputation {
    let units = index.treated_units();
    let t = factors.n_periods();
    let f = factors.values();
    let values = units
        .iter()
        .map(|&i| {
            let x_hat = covariates.for_unit(i).expect("covariate imputation covers every treated unit");
            let beta = fit.beta_for(data.groups()[i]);
            let a = fit.loadings_a().row(i);
            (0..t)
                .map(|p| {
                    let mut v = 0.0;
                    for (c, ac) in a.iter().enumerate() {
                        v += ac * f[(p, c)];
                    }
                    for (j, bj) in beta.iter().enumerate() {
                        v += bj * x_hat[(p, j)];
                    }
                    v
                })
                .collect()
        })
        .collect();
    OutcomeImputation { units, values }
}
