use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::numerics::Matrix;
use crate::panel::{GroupIndex, PanelDataset};
use crate::{Error, Result};

/// A known common factor appended after the cross-sectional averages.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ObservedFactor {
    Constant,
    /// `1..=T`.
    Trend,
    Custom { name: String, values: Vec<f64> },
}

impl ObservedFactor {
    pub fn name(&self) -> String {
        match self {
            ObservedFactor::Constant => "constant".to_string(),
            ObservedFactor::Trend => "trend".to_string(),
            ObservedFactor::Custom { name, .. } => name.clone(),
        }
    }
}

/// Where a factor-proxy column comes from.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FactorColumn {
    OutcomeAverage,
    CovariateAverage(usize),
    Observed(String),
}

/// T×k factor proxies: never-treated averages of `(y, x')` followed by
/// observed factors. Rows cover every period.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorEstimate {
    values: Matrix,
    columns: Vec<FactorColumn>,
}

impl FactorEstimate {
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn columns(&self) -> &[FactorColumn] {
        &self.columns
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_periods(&self) -> usize {
        self.values.nrows()
    }

    pub fn k_observed(&self) -> usize {
        self.columns.iter().filter(|c| matches!(c, FactorColumn::Observed(_))).count()
    }

    /// Rows for periods `1..=len`.
    pub fn leading_rows(&self, len: usize) -> Matrix {
        self.values.rows(0, len).into_owned()
    }

    /// `f̂_t` for 1-based period `t`.
    pub fn row(&self, period: usize) -> Vec<f64> {
        self.values.row(period - 1).iter().copied().collect()
    }
}

pub fn estimate_factors(
    data: &PanelDataset,
    index: &GroupIndex,
    observed: &[ObservedFactor],
) -> Result<FactorEstimate> {
    let controls = index.never_treated();
    if controls.is_empty() {
        return Err(Error::EmptyControlSet);
    }
    let t = data.n_periods();
    let m = data.n_covariates();
    let k = m + 1 + observed.len();
    let n_ctrl = controls.len() as f64;

    let mut values = Matrix::zeros(t, k);
    let mut columns = Vec::with_capacity(k);
    let sources = core::iter::once(data.outcomes()).chain(data.covariates().iter());
    for (col, source) in sources.enumerate() {
        for p in 0..t {
            let mut sum = 0.0;
            for &i in controls {
                sum += source[(i, p)];
            }
            values[(p, col)] = sum / n_ctrl;
        }
        columns.push(if col == 0 { FactorColumn::OutcomeAverage } else { FactorColumn::CovariateAverage(col - 1) });
    }
    for (offset, factor) in observed.iter().enumerate() {
        let col = m + 1 + offset;
        match factor {
            ObservedFactor::Constant => values.column_mut(col).fill(1.0),
            ObservedFactor::Trend => {
                for p in 0..t {
                    values[(p, col)] = (p + 1) as f64;
                }
            }
            ObservedFactor::Custom { name, values: series } => {
                if series.len() != t {
                    return Err(Error::ObservedFactorLength { name: name.clone(), expected: t, got: series.len() });
                }
                for (p, v) in series.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::Config(alloc::format!("observed factor `{name}` has a non-finite entry")));
                    }
                    values[(p, col)] = *v;
                }
            }
        }
        columns.push(FactorColumn::Observed(factor.name()));
    }
    Ok(FactorEstimate { values, columns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{build_group_index, GroupLabel::*};
    use alloc::vec;

    #[test]
    fn outcome_average_over_controls() {
        let y = Matrix::from_row_slice(3, 2, &[1.0, 3.0, 3.0, 5.0, 100.0, 100.0]);
        let d = PanelDataset::new(y, vec![], vec![NeverTreated, NeverTreated, TreatedAt(2)]).unwrap();
        let idx = build_group_index(&d).unwrap();
        let f = estimate_factors(&d, &idx, &[]).unwrap();
        assert_eq!(f.values(), &Matrix::from_column_slice(2, 1, &[2.0, 4.0]));
        assert_eq!(f.columns(), &[FactorColumn::OutcomeAverage]);
    }

    #[test]
    fn constant_appended_after_averages() {
        let y = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = Matrix::from_row_slice(2, 3, &[0.5, 0.5, 0.5, 9.0, 9.0, 9.0]);
        let d = PanelDataset::new(y, vec![x], vec![NeverTreated, TreatedAt(3)]).unwrap();
        let idx = build_group_index(&d).unwrap();
        let f = estimate_factors(&d, &idx, &[ObservedFactor::Constant, ObservedFactor::Trend]).unwrap();
        assert_eq!(f.k(), 4);
        assert_eq!(f.k_observed(), 2);
        assert_eq!(f.row(2), vec![2.0, 0.5, 1.0, 2.0]);
        assert_eq!(
            f.columns(),
            &[
                FactorColumn::OutcomeAverage,
                FactorColumn::CovariateAverage(0),
                FactorColumn::Observed("constant".into()),
                FactorColumn::Observed("trend".into())
            ]
        );
    }

    #[test]
    fn custom_factor_length_checked() {
        let d = PanelDataset::new(Matrix::zeros(2, 3), vec![], vec![NeverTreated, TreatedAt(2)]).unwrap();
        let idx = build_group_index(&d).unwrap();
        let bad = ObservedFactor::Custom { name: "oil".into(), values: vec![1.0, 2.0] };
        assert_eq!(
            estimate_factors(&d, &idx, &[bad]),
            Err(Error::ObservedFactorLength { name: "oil".into(), expected: 3, got: 2 })
        );
    }
}
