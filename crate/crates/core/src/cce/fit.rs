use alloc::vec::Vec;

use crate::cce::FactorEstimate;
use crate::numerics::{default_rank_tolerance, rank_report, rank_report_default, Annihilator, Matrix, QrFactor};
use crate::panel::{GroupIndex, GroupLabel, PanelDataset};
use crate::{Error, Result};

/// Conditioning of the two step-2 regressions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitDiagnostics {
    pub factor_rank: usize,
    /// Condition number of the pre-window factor proxies (square root of
    /// that of `f̂'f̂`).
    pub factor_condition: f64,
    /// Condition number of the stacked `M_f̂ x_i`; `None` without covariates.
    pub covariate_condition: Option<f64>,
}

/// Pre-treatment slopes and loadings.
#[derive(Debug, Clone, PartialEq)]
pub struct CceFit {
    beta: Vec<f64>,
    beta_by_group: Option<Vec<(usize, Vec<f64>)>>,
    loadings_a: Matrix,
    loadings_lambda: Vec<Matrix>,
    pre_window: usize,
    diagnostics: FitDiagnostics,
}

impl CceFit {
    /// Pooled slope over all units.
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn beta_by_group(&self) -> Option<&[(usize, Vec<f64>)]> {
        self.beta_by_group.as_deref()
    }

    /// Slope used when imputing for members of `group`: the group's own
    /// estimate when group-wise slopes were fitted, otherwise the pooled one.
    pub fn beta_for(&self, group: GroupLabel) -> &[f64] {
        match (group, &self.beta_by_group) {
            (GroupLabel::TreatedAt(g), Some(by_group)) => {
                by_group.iter().find(|(h, _)| *h == g).map(|(_, b)| b.as_slice()).unwrap_or(&self.beta)
            }
            _ => &self.beta,
        }
    }

    /// N×k matrix with `â_i'` in row `i`.
    pub fn loadings_a(&self) -> &Matrix {
        &self.loadings_a
    }

    /// `λ̂_i` (k×m) for unit `i`.
    pub fn loadings_lambda(&self, unit: usize) -> &Matrix {
        &self.loadings_lambda[unit]
    }

    /// Length of the fitting window `1..=g_min-1`.
    pub fn pre_window(&self) -> usize {
        self.pre_window
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }
}

/// Minimum pre-window length for `k` proxies and `m` covariates.
pub fn required_pre_window(k: usize, m: usize) -> usize {
    if m == 0 {
        k
    } else {
        k + 1
    }
}

fn pooled_beta(
    data: &PanelDataset,
    units: &[usize],
    annihilator: &Annihilator,
    window: usize,
) -> Result<(Vec<f64>, f64)> {
    let m = data.n_covariates();
    let rows = units.len() * window;
    let mut stacked_x = Matrix::zeros(rows, m);
    let mut stacked_y = Matrix::zeros(rows, 1);
    let mut raw_norm_sq = 0.0;
    for (slot, &i) in units.iter().enumerate() {
        raw_norm_sq += data.covariate_block(i, 1, window).norm_squared();
        let mx = annihilator.apply(&data.covariate_block(i, 1, window));
        let my = annihilator.apply(&data.outcome_block(i, 1, window));
        stacked_x.view_mut((slot * window, 0), (window, m)).copy_from(&mx);
        stacked_y.view_mut((slot * window, 0), (window, 1)).copy_from(&my);
    }
    // Rank relative to the raw covariates: defactoring can leave pure rounding noise.
    let report = rank_report(&stacked_x, default_rank_tolerance(rows, m) * libm::sqrt(raw_norm_sq) / stacked_x.norm().max(f64::MIN_POSITIVE));
    if report.rank < m {
        return Err(Error::SingularCovariateGram { rank: report.rank, columns: m, condition: report.condition });
    }
    let qr = QrFactor::new(&stacked_x).map_err(|e| match e {
        Error::RankDeficient { rank, columns, condition } => Error::SingularCovariateGram { rank, columns, condition },
        other => other,
    })?;
    let condition = qr.rank_report().condition;
    let beta = qr.solve(&stacked_y)?;
    Ok((beta.iter().copied().collect(), condition))
}

/// Step 2 (and the loadings of step 3) over the common window `t < g_min`.
///
/// `β̂` pools all N units; `â_i` and `λ̂_i` are per-unit regressions on the
/// factor proxies. With `groupwise_beta`, each treated group also gets its
/// own slope from its members, and those members' `â_i` use it.
pub fn fit_pretreatment(
    data: &PanelDataset,
    index: &GroupIndex,
    factors: &FactorEstimate,
    groupwise_beta: bool,
) -> Result<CceFit> {
    let n = data.n_units();
    let m = data.n_covariates();
    let k = factors.k();
    let window = index.g_min() - 1;
    if factors.n_periods() != data.n_periods() {
        return Err(Error::Shape(alloc::format!(
            "factor proxies cover {} periods, panel has {}",
            factors.n_periods(),
            data.n_periods()
        )));
    }
    let required = required_pre_window(k, m);
    if window < required {
        return Err(Error::InsufficientPreWindow { available: window, required });
    }

    let f_pre = factors.leading_rows(window);
    let f_rank = rank_report_default(&f_pre);
    if f_rank.rank < k {
        return Err(Error::SingularFactorGram { rank: f_rank.rank, columns: k, condition: f_rank.condition });
    }
    let f_qr = QrFactor::new(&f_pre)
        .map_err(|_| Error::SingularFactorGram { rank: f_rank.rank, columns: k, condition: f_rank.condition })?;

    let (beta, covariate_condition, beta_by_group) = if m == 0 {
        (Vec::new(), None, None)
    } else {
        let annihilator = Annihilator::new(&f_pre);
        let all: Vec<usize> = (0..n).collect();
        let (beta, cond) = pooled_beta(data, &all, &annihilator, window)?;
        let by_group = if groupwise_beta {
            let mut out = Vec::new();
            for (g, members) in index.treated_groups() {
                let (b, _) = pooled_beta(data, members, &annihilator, window)?;
                out.push((*g, b));
            }
            Some(out)
        } else {
            None
        };
        (beta, Some(cond), by_group)
    };

    let mut fit = CceFit {
        beta,
        beta_by_group,
        loadings_a: Matrix::zeros(n, k),
        loadings_lambda: Vec::new(),
        pre_window: window,
        diagnostics: FitDiagnostics { factor_rank: f_rank.rank, factor_condition: f_rank.condition, covariate_condition },
    };

    // â_i: one multi-response solve, column i holds y_i - x_i β̂.
    let mut resid = Matrix::zeros(window, n);
    for i in 0..n {
        let b = fit.beta_for(data.groups()[i]);
        for p in 0..window {
            let mut v = data.outcomes()[(i, p)];
            for (j, bj) in b.iter().enumerate() {
                v -= data.covariate(j)[(i, p)] * bj;
            }
            resid[(p, i)] = v;
        }
    }
    fit.loadings_a = f_qr.solve(&resid)?.transpose();

    // λ̂_i: columns i*m..(i+1)*m hold x_i.
    let mut xs = Matrix::zeros(window, n * m);
    for i in 0..n {
        for j in 0..m {
            for p in 0..window {
                xs[(p, i * m + j)] = data.covariate(j)[(i, p)];
            }
        }
    }
    let lambdas = f_qr.solve(&xs)?;
    fit.loadings_lambda = (0..n).map(|i| lambdas.columns(i * m, m).into_owned()).collect();
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cce::estimate_factors;
    use crate::panel::{build_group_index, GroupLabel::*};
    use alloc::vec;
    use approx::assert_relative_eq;

    #[test]
    fn no_covariates_reduces_to_per_unit_ols() {
        let y = Matrix::from_row_slice(
            4,
            4,
            &[1.0, 2.0, 4.0, 8.0, 3.0, 2.0, 2.0, 1.0, 2.0, 5.0, 5.0, 9.0, 0.0, 1.0, 1.0, 7.0],
        );
        let d = PanelDataset::new(y, vec![], vec![NeverTreated, NeverTreated, TreatedAt(4), TreatedAt(4)]).unwrap();
        let idx = build_group_index(&d).unwrap();
        let f = estimate_factors(&d, &idx, &[crate::cce::ObservedFactor::Constant]).unwrap();
        let fit = fit_pretreatment(&d, &idx, &f, false).unwrap();
        assert!(fit.beta().is_empty());
        let fp = f.leading_rows(3);
        for i in 0..4 {
            let direct = crate::numerics::least_squares(&fp, &d.outcome_block(i, 1, 3)).unwrap();
            for c in 0..2 {
                assert_relative_eq!(fit.loadings_a()[(i, c)], direct[(c, 0)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn short_window_rejected() {
        let d = PanelDataset::new(
            Matrix::from_fn(3, 4, |i, p| (i + p * p) as f64),
            vec![Matrix::from_fn(3, 4, |i, p| (i * p) as f64)],
            vec![NeverTreated, NeverTreated, TreatedAt(3)],
        )
        .unwrap();
        let idx = build_group_index(&d).unwrap();
        let f = estimate_factors(&d, &idx, &[]).unwrap();
        assert_eq!(
            fit_pretreatment(&d, &idx, &f, false),
            Err(Error::InsufficientPreWindow { available: 2, required: 3 })
        );
    }

    #[test]
    fn collinear_proxies_rejected() {
        // Constant outcome average duplicates the constant observed factor.
        let d = PanelDataset::new(
            Matrix::from_element(3, 5, 2.0),
            vec![],
            vec![NeverTreated, NeverTreated, TreatedAt(5)],
        )
        .unwrap();
        let idx = build_group_index(&d).unwrap();
        let f = estimate_factors(&d, &idx, &[crate::cce::ObservedFactor::Constant]).unwrap();
        assert!(matches!(fit_pretreatment(&d, &idx, &f, false), Err(Error::SingularFactorGram { rank: 1, .. })));
    }

    #[test]
    fn common_covariate_is_absorbed_by_its_average() {
        // x_{i,t} = h_t for every unit, so x_i lies in the span of x̄ and M_f̂ x_i = 0.
        let n = 4;
        let t = 6;
        let y = Matrix::from_fn(n, t, |i, p| ((i + 1) * (p + 1) * (p + 1)) as f64 + (i * p % 3) as f64);
        let x = Matrix::from_fn(n, t, |_, p| [0.3, -1.0, 2.5, 0.7, 1.1, -0.4][p]);
        let d = PanelDataset::new(y, vec![x], vec![NeverTreated, NeverTreated, TreatedAt(6), TreatedAt(6)]).unwrap();
        let idx = build_group_index(&d).unwrap();
        let f = estimate_factors(&d, &idx, &[]).unwrap();
        assert!(matches!(fit_pretreatment(&d, &idx, &f, false), Err(Error::SingularCovariateGram { .. })));
    }
}
