//! Balanced fixed-T panels with absorbing-state treatment groups.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::numerics::Matrix;
use crate::{Error, Result};

/// Group membership. Periods are numbered `1..=T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum GroupLabel {
    NeverTreated,
    /// First treated period; the unit stays treated afterwards.
    TreatedAt(usize),
}

impl GroupLabel {
    pub fn is_treated_at(self, period: usize) -> bool {
        matches!(self, GroupLabel::TreatedAt(g) if period >= g)
    }

    pub fn treated_from(self) -> Option<usize> {
        match self {
            GroupLabel::NeverTreated => None,
            GroupLabel::TreatedAt(g) => Some(g),
        }
    }
}

/// Balanced N×T panel with `m` covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    unit_ids: Vec<String>,
    period_labels: Vec<f64>,
    covariate_names: Vec<String>,
    outcomes: Matrix,
    covariates: Vec<Matrix>,
    groups: Vec<GroupLabel>,
}

impl PanelDataset {
    /// `outcomes` is N×T, each entry of `covariates` is N×T.
    ///
    /// Unit ids default to `1..=N`, period labels to `1..=T` and covariate
    /// names to `x1..xm`.
    pub fn new(outcomes: Matrix, covariates: Vec<Matrix>, groups: Vec<GroupLabel>) -> Result<Self> {
        let (n, t) = outcomes.shape();
        if groups.len() != n {
            return Err(Error::Shape(format!("{} group labels for {n} units", groups.len())));
        }
        for (j, x) in covariates.iter().enumerate() {
            if x.shape() != (n, t) {
                return Err(Error::Shape(format!(
                    "covariate {j} is {}x{}, outcomes are {n}x{t}",
                    x.nrows(),
                    x.ncols()
                )));
            }
        }
        for i in 0..n {
            for p in 0..t {
                if !outcomes[(i, p)].is_finite() || covariates.iter().any(|x| !x[(i, p)].is_finite()) {
                    return Err(Error::NonFinite { unit: i + 1, period: p + 1 });
                }
            }
        }
        for (i, g) in groups.iter().enumerate() {
            if let GroupLabel::TreatedAt(label) = *g {
                if label < 2 || label > t {
                    return Err(Error::TreatedLabelOutOfRange { unit: i + 1, label, n_periods: t });
                }
            }
        }
        let m = covariates.len();
        Ok(Self {
            unit_ids: (1..=n).map(|i| i.to_string()).collect(),
            period_labels: (1..=t).map(|p| p as f64).collect(),
            covariate_names: (1..=m).map(|j| format!("x{j}")).collect(),
            outcomes,
            covariates,
            groups,
        })
    }

    pub fn with_unit_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n_units() {
            return Err(Error::Shape(format!("{} unit ids for {} units", ids.len(), self.n_units())));
        }
        self.unit_ids = ids;
        Ok(self)
    }

    /// Original (sorted) period labels, e.g. calendar years.
    pub fn with_period_labels(mut self, labels: Vec<f64>) -> Result<Self> {
        if labels.len() != self.n_periods() {
            return Err(Error::Shape(format!("{} period labels for {} periods", labels.len(), self.n_periods())));
        }
        if labels.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(core::cmp::Ordering::Less)) {
            return Err(Error::Shape("period labels must be strictly increasing".to_string()));
        }
        self.period_labels = labels;
        Ok(self)
    }

    pub fn with_covariate_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_covariates() {
            return Err(Error::Shape(format!("{} names for {} covariates", names.len(), self.n_covariates())));
        }
        self.covariate_names = names;
        Ok(self)
    }

    pub fn n_units(&self) -> usize {
        self.outcomes.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.outcomes.ncols()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn period_labels(&self) -> &[f64] {
        &self.period_labels
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn groups(&self) -> &[GroupLabel] {
        &self.groups
    }

    /// N×T outcome matrix.
    pub fn outcomes(&self) -> &Matrix {
        &self.outcomes
    }

    /// Covariate `j` as an N×T matrix.
    pub fn covariate(&self, j: usize) -> &Matrix {
        &self.covariates[j]
    }

    pub fn covariates(&self) -> &[Matrix] {
        &self.covariates
    }

    /// `y_{i,t}` with 1-based period `t`.
    pub fn outcome(&self, unit: usize, period: usize) -> f64 {
        self.outcomes[(unit, period - 1)]
    }

    /// `x_{i,t}` as a length-m vector, 1-based period.
    pub fn covariate_row(&self, unit: usize, period: usize) -> Vec<f64> {
        self.covariates.iter().map(|x| x[(unit, period - 1)]).collect()
    }

    /// Rows `first..=last` (1-based) of unit `i`'s outcome as a column vector.
    pub fn outcome_block(&self, unit: usize, first: usize, last: usize) -> Matrix {
        let len = last + 1 - first;
        Matrix::from_fn(len, 1, |r, _| self.outcomes[(unit, first - 1 + r)])
    }

    /// Rows `first..=last` (1-based) of unit `i`'s covariates, len×m.
    pub fn covariate_block(&self, unit: usize, first: usize, last: usize) -> Matrix {
        let len = last + 1 - first;
        Matrix::from_fn(len, self.n_covariates(), |r, j| self.covariates[j][(unit, first - 1 + r)])
    }

    /// Same units and groups with replaced values.
    pub fn with_values(&self, outcomes: Matrix, covariates: Vec<Matrix>) -> Result<Self> {
        let fresh = PanelDataset::new(outcomes, covariates, self.groups.clone())?;
        Ok(Self {
            unit_ids: self.unit_ids.clone(),
            period_labels: self.period_labels.clone(),
            covariate_names: self.covariate_names.clone(),
            ..fresh
        })
    }
}

/// Partition of units by treatment timing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupIndex {
    /// Treated groups in ascending `g` with their member units (0-based, ascending).
    treated: Vec<(usize, Vec<usize>)>,
    never_treated: Vec<usize>,
    g_min: usize,
    n_units: usize,
}

impl GroupIndex {
    pub fn treated_groups(&self) -> &[(usize, Vec<usize>)] {
        &self.treated
    }

    pub fn group_labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.treated.iter().map(|(g, _)| *g)
    }

    pub fn members(&self, group: usize) -> Option<&[usize]> {
        self.treated.iter().find(|(g, _)| *g == group).map(|(_, m)| m.as_slice())
    }

    pub fn never_treated(&self) -> &[usize] {
        &self.never_treated
    }

    /// All treated units in ascending order.
    pub fn treated_units(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.treated.iter().flat_map(|(_, m)| m.iter().copied()).collect();
        all.sort_unstable();
        all
    }

    pub fn g_min(&self) -> usize {
        self.g_min
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }
}

pub fn build_group_index(data: &PanelDataset) -> Result<GroupIndex> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut never_treated = Vec::new();
    for (i, label) in data.groups().iter().enumerate() {
        match *label {
            GroupLabel::NeverTreated => never_treated.push(i),
            GroupLabel::TreatedAt(g) => groups.entry(g).or_default().push(i),
        }
    }
    if groups.is_empty() {
        return Err(Error::NothingToEstimate);
    }
    if never_treated.is_empty() {
        return Err(Error::EmptyControlSet);
    }
    let g_min = *groups.keys().next().expect("nonempty");
    Ok(GroupIndex { treated: groups.into_iter().collect(), never_treated, g_min, n_units: data.n_units() })
}

/// Groups below this size trigger a small-sample warning.
pub const SMALL_GROUP: usize = 30;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PreWindowCheck {
    pub available: usize,
    pub required: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupSizeCheck {
    pub group: usize,
    pub size: usize,
}

/// Outcome of the pre-estimation sample checks plus (after fitting) the
/// conditioning diagnostics of the step-2 regressions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValidationReport {
    pub n_covariates: usize,
    pub k_observed: usize,
    pub g_min: usize,
    pub pre_window: PreWindowCheck,
    pub group_sizes: Vec<GroupSizeCheck>,
    pub never_treated: usize,
    /// Condition number of the pre-window factor proxies, set after fitting.
    pub factor_condition: Option<f64>,
    /// Condition number of the stacked defactored covariates, set after fitting.
    pub covariate_condition: Option<f64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.pre_window.passed
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.pre_window.passed {
            out.push(format!(
                "pre-treatment window too short: g_min - 1 = {} periods, need {} (m = {}, observed factors = {})",
                self.pre_window.available, self.pre_window.required, self.n_covariates, self.k_observed
            ));
        }
        out
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for g in &self.group_sizes {
            if g.size < 2 {
                out.push(format!("group {}: {} unit, variances unavailable", g.group, g.size));
            } else if g.size < SMALL_GROUP {
                out.push(format!("group {}: only {} units, normal approximation may be poor", g.group, g.size));
            }
        }
        out
    }
}

/// Sample-size checks. The pre-window must hold the step-2 regressors
/// (`m + 1` averages plus `k_observed` observed factors) and leave one
/// residual degree of freedom when covariates are present.
pub fn validate_assumptions(data: &PanelDataset, index: &GroupIndex, k_observed: usize) -> ValidationReport {
    let m = data.n_covariates();
    let k = m + 1 + k_observed;
    let required = if m == 0 { k } else { k + 1 };
    let available = index.g_min() - 1;
    ValidationReport {
        n_covariates: m,
        k_observed,
        g_min: index.g_min(),
        pre_window: PreWindowCheck { available, required, passed: available >= required },
        group_sizes: index
            .treated_groups()
            .iter()
            .map(|(g, members)| GroupSizeCheck { group: *g, size: members.len() })
            .collect(),
        never_treated: index.never_treated().len(),
        factor_condition: None,
        covariate_condition: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use GroupLabel::*;

    fn panel(groups: Vec<GroupLabel>, t: usize, m: usize) -> PanelDataset {
        let n = groups.len();
        let y = Matrix::from_fn(n, t, |i, p| (i * t + p) as f64);
        let xs = (0..m).map(|j| Matrix::from_fn(n, t, |i, p| ((i + j) * p) as f64)).collect();
        PanelDataset::new(y, xs, groups).unwrap()
    }

    #[test]
    fn partitions_groups() {
        let d = panel(vec![NeverTreated, NeverTreated, TreatedAt(4), TreatedAt(4), TreatedAt(8)], 9, 0);
        let idx = build_group_index(&d).unwrap();
        assert_eq!(idx.never_treated(), &[0, 1]);
        assert_eq!(idx.members(4).unwrap(), &[2, 3]);
        assert_eq!(idx.members(8).unwrap(), &[4]);
        assert_eq!(idx.g_min(), 4);
        assert_eq!(idx.group_labels().collect::<Vec<_>>(), vec![4, 8]);
    }

    #[test]
    fn all_never_treated_is_nothing_to_estimate() {
        let d = panel(vec![NeverTreated; 3], 4, 0);
        assert_eq!(build_group_index(&d), Err(Error::NothingToEstimate));
    }

    #[test]
    fn no_controls_is_empty_control_set() {
        let d = panel(vec![TreatedAt(2); 3], 4, 0);
        assert_eq!(build_group_index(&d), Err(Error::EmptyControlSet));
    }

    #[test]
    fn design_sized_partition() {
        let mut groups = vec![NeverTreated; 82];
        groups.extend(vec![TreatedAt(7); 82]);
        let d = panel(groups, 9, 2);
        let idx = build_group_index(&d).unwrap();
        assert_eq!(idx.members(7).unwrap().len(), 82);
        assert_eq!(idx.g_min(), 7);
    }

    #[test]
    fn label_outside_range_rejected() {
        let y = Matrix::zeros(2, 3);
        assert!(matches!(
            PanelDataset::new(y.clone(), vec![], vec![NeverTreated, TreatedAt(1)]),
            Err(Error::TreatedLabelOutOfRange { unit: 2, label: 1, .. })
        ));
        assert!(matches!(
            PanelDataset::new(y, vec![], vec![NeverTreated, TreatedAt(4)]),
            Err(Error::TreatedLabelOutOfRange { label: 4, .. })
        ));
    }

    #[test]
    fn non_finite_cell_rejected() {
        let mut y = Matrix::zeros(2, 3);
        y[(1, 2)] = f64::NAN;
        assert_eq!(
            PanelDataset::new(y, vec![], vec![NeverTreated, TreatedAt(2)]),
            Err(Error::NonFinite { unit: 2, period: 3 })
        );
    }

    fn report(m: usize, k_observed: usize, g: usize) -> ValidationReport {
        let d = panel(vec![NeverTreated, NeverTreated, TreatedAt(g), TreatedAt(g)], 9, m);
        let idx = build_group_index(&d).unwrap();
        validate_assumptions(&d, &idx, k_observed)
    }

    #[test]
    fn pre_window_checks() {
        assert!(report(2, 0, 7).passed());
        assert!(!report(2, 0, 4).passed());
        let boundary = report(1, 1, 5);
        assert_eq!(boundary.pre_window, PreWindowCheck { available: 4, required: 4, passed: true });
        assert!(!report(1, 1, 4).passed());
        assert_eq!(report(1, 1, 4).failures().len(), 1);
    }

    #[test]
    fn small_group_warning() {
        let r = report(1, 0, 7);
        assert_eq!(r.warnings().len(), 1);
    }
}
