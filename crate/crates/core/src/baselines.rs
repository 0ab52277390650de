//! Two-way fixed-effects event-study regressions.
//!
//! `y_{i,t} = μ_i + γ_t + Σ_s δ_s D^s_{i,t} (+ β' x_{i,t}) + e_{i,t}` with one
//! dummy per calendar period `s >= g_min`, switched on for units already
//! treated at `s`. For a single treated group this is one dummy per
//! post-treatment period.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::cce::Interval;
use crate::numerics::{rank_report_default, Matrix, QrFactor};
use crate::panel::{GroupIndex, PanelDataset};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TwfeSpec {
    pub include_covariates: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwfeEstimate {
    /// 1-based periods carrying an event dummy.
    pub periods: Vec<usize>,
    pub delta: Vec<f64>,
    /// Conventional homoskedastic standard errors.
    pub se: Vec<f64>,
    /// Covariate slopes; empty without covariates.
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub dof: usize,
}

impl TwfeEstimate {
    pub fn interval(&self, slot: usize) -> Interval {
        Interval::normal(self.delta[slot], self.se[slot])
    }
}

struct Regressors {
    names: Vec<String>,
    /// Each column is N×T.
    columns: Vec<Matrix>,
    n_events: usize,
    periods: Vec<usize>,
}

fn regressors(data: &PanelDataset, index: &GroupIndex, spec: TwfeSpec) -> Regressors {
    let (n, t) = (data.n_units(), data.n_periods());
    let periods: Vec<usize> = (index.g_min()..=t).collect();
    let mut names = Vec::new();
    let mut columns = Vec::new();
    for &s in &periods {
        names.push(format!("event[{}]", data.period_labels()[s - 1]));
        columns.push(Matrix::from_fn(n, t, |i, p| {
            if p + 1 == s && data.groups()[i].is_treated_at(s) {
                1.0
            } else {
                0.0
            }
        }));
    }
    if spec.include_covariates {
        for j in 0..data.n_covariates() {
            names.push(data.covariate_names()[j].clone());
            columns.push(data.covariate(j).clone());
        }
    }
    Regressors { names, n_events: periods.len(), columns, periods }
}

fn two_way_demean(z: &Matrix) -> Matrix {
    let (n, t) = z.shape();
    let unit_means: Vec<f64> = (0..n).map(|i| z.row(i).sum() / t as f64).collect();
    let time_means: Vec<f64> = (0..t).map(|p| z.column(p).sum() / n as f64).collect();
    let grand = z.sum() / (n * t) as f64;
    Matrix::from_fn(n, t, |i, p| z[(i, p)] - unit_means[i] - time_means[p] + grand)
}

/// Stacks an N×T matrix unit-major into a column.
fn stack(z: &Matrix, out: &mut Matrix, col: usize) {
    let (n, t) = z.shape();
    for i in 0..n {
        for p in 0..t {
            out[(i * t + p, col)] = z[(i, p)];
        }
    }
}

fn offending_columns(design: &Matrix, names: &[String], skip: usize) -> Vec<String> {
    let mut kept: Vec<usize> = (0..skip).collect();
    let mut bad = Vec::new();
    for c in skip..design.ncols() {
        let mut trial = kept.clone();
        trial.push(c);
        let sub = design.select_columns(trial.iter());
        if rank_report_default(&sub).rank == trial.len() {
            kept = trial;
        } else {
            bad.push(names[c - skip].clone());
        }
    }
    bad
}

fn solve(design: &Matrix, response: &Matrix, names: &[String], skip: usize) -> Result<(QrFactor, Matrix)> {
    let qr = QrFactor::new(design).map_err(|e| match e {
        Error::RankDeficient { .. } => Error::Collinear { columns: offending_columns(design, names, skip) },
        other => other,
    })?;
    let coef = qr.solve(response)?;
    Ok((qr, coef))
}

fn finish(
    design: &Matrix,
    response: &Matrix,
    qr: &QrFactor,
    coef: &Matrix,
    offset: usize,
    regs: &Regressors,
    dof: usize,
) -> Result<TwfeEstimate> {
    let resid = response - design * coef;
    let rss = resid.norm_squared();
    let sigma2 = if dof > 0 { rss / dof as f64 } else { f64::NAN };
    let inv = qr.inverse_gram()?;
    let k = regs.n_events;
    Ok(TwfeEstimate {
        periods: regs.periods.clone(),
        delta: (0..k).map(|s| coef[(offset + s, 0)]).collect(),
        se: (0..k).map(|s| libm::sqrt(sigma2 * inv[(offset + s, offset + s)])).collect(),
        beta: (k..regs.columns.len()).map(|c| coef[(offset + c, 0)]).collect(),
        sigma2,
        dof,
    })
}

/// Within-transformation route: two-way demeaning then OLS.
pub fn twfe_event_study(data: &PanelDataset, index: &GroupIndex, spec: TwfeSpec) -> Result<TwfeEstimate> {
    let (n, t) = (data.n_units(), data.n_periods());
    let regs = regressors(data, index, spec);
    let p = regs.columns.len();
    let mut design = Matrix::zeros(n * t, p);
    for (c, col) in regs.columns.iter().enumerate() {
        stack(&two_way_demean(col), &mut design, c);
    }
    let mut response = Matrix::zeros(n * t, 1);
    stack(&two_way_demean(data.outcomes()), &mut response, 0);
    let (qr, coef) = solve(&design, &response, &regs.names, 0)?;
    let dof = (n * t).saturating_sub(n + t - 1 + p);
    finish(&design, &response, &qr, &coef, 0, &regs, dof)
}

/// Explicit unit and period dummies. O((N+T)^3); meant for checking the
/// within route on small panels.
pub fn twfe_full_dummy(data: &PanelDataset, index: &GroupIndex, spec: TwfeSpec) -> Result<TwfeEstimate> {
    let (n, t) = (data.n_units(), data.n_periods());
    let regs = regressors(data, index, spec);
    let fe = n + t - 1;
    let cols = fe + regs.columns.len();
    let mut design = Matrix::zeros(n * t, cols);
    for i in 0..n {
        for p in 0..t {
            let row = i * t + p;
            design[(row, i)] = 1.0;
            if p > 0 {
                design[(row, n + p - 1)] = 1.0;
            }
        }
    }
    for (c, col) in regs.columns.iter().enumerate() {
        stack(col, &mut design, fe + c);
    }
    let mut response = Matrix::zeros(n * t, 1);
    stack(data.outcomes(), &mut response, 0);
    let (qr, coef) = solve(&design, &response, &regs.names, fe)?;
    let dof = (n * t).saturating_sub(cols);
    finish(&design, &response, &qr, &coef, fe, &regs, dof)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{build_group_index, GroupLabel, GroupLabel::*};
    use alloc::vec;
    use approx::assert_relative_eq;

    fn groups(n: usize, g: usize) -> Vec<GroupLabel> {
        (0..n).map(|i| if i % 2 == 0 { NeverTreated } else { TreatedAt(g) }).collect()
    }

    fn noise(i: usize, p: usize) -> f64 {
        let s = ((i * 131 + p * 71) % 97) as f64;
        s / 97.0 - 0.5
    }

    #[test]
    fn pure_two_way_structure_gives_zero() {
        let g = groups(8, 4);
        let y = Matrix::from_fn(8, 6, |i, p| i as f64 * 1.5 - (p * p) as f64);
        let d = PanelDataset::new(y, vec![], g).unwrap();
        let idx = build_group_index(&d).unwrap();
        let est = twfe_event_study(&d, &idx, TwfeSpec::default()).unwrap();
        assert_eq!(est.periods, vec![4, 5, 6]);
        for v in est.delta {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn textbook_shift_recovered() {
        let g = groups(8, 4);
        let y = Matrix::from_fn(8, 6, |i, p| {
            let base = i as f64 + 0.3 * p as f64;
            if i % 2 == 1 && p + 1 >= 4 {
                base + 1.0
            } else {
                base
            }
        });
        let d = PanelDataset::new(y, vec![], g).unwrap();
        let idx = build_group_index(&d).unwrap();
        let est = twfe_event_study(&d, &idx, TwfeSpec::default()).unwrap();
        for v in est.delta {
            assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn within_matches_full_dummy() {
        let g: Vec<GroupLabel> =
            (0..10).map(|i| match i % 3 { 0 => NeverTreated, 1 => TreatedAt(4), _ => TreatedAt(5) }).collect();
        let y = Matrix::from_fn(10, 6, |i, p| noise(i, p) * 3.0 + i as f64 + p as f64);
        let x = Matrix::from_fn(10, 6, |i, p| noise(p, i) + 0.2 * (i * p) as f64);
        let d = PanelDataset::new(y, vec![x], g).unwrap();
        let idx = build_group_index(&d).unwrap();
        for include_covariates in [false, true] {
            let spec = TwfeSpec { include_covariates };
            let a = twfe_event_study(&d, &idx, spec).unwrap();
            let b = twfe_full_dummy(&d, &idx, spec).unwrap();
            assert_eq!(a.dof, b.dof);
            for s in 0..a.delta.len() {
                assert_relative_eq!(a.delta[s], b.delta[s], epsilon = 1e-8);
                assert_relative_eq!(a.se[s], b.se[s], epsilon = 1e-8);
            }
            assert_eq!(a.beta.len(), b.beta.len());
        }
    }

    #[test]
    fn collinear_covariate_named() {
        let g = groups(6, 4);
        let y = Matrix::from_fn(6, 5, noise);
        // Unit-constant covariate vanishes under the unit effects.
        let x = Matrix::from_fn(6, 5, |i, _| i as f64);
        let d = PanelDataset::new(y, vec![x], g).unwrap();
        let idx = build_group_index(&d).unwrap();
        let err = twfe_event_study(&d, &idx, TwfeSpec { include_covariates: true }).unwrap_err();
        assert_eq!(err, Error::Collinear { columns: vec!["x1".into()] });
        let err = twfe_full_dummy(&d, &idx, TwfeSpec { include_covariates: true }).unwrap_err();
        assert_eq!(err, Error::Collinear { columns: vec!["x1".into()] });
    }
}
