use alloc::vec;
use alloc::vec::Vec;

use crate::cce::{CceFit, CovariateImputation, OutcomeImputation};
use crate::panel::{GroupIndex, GroupLabel, PanelDataset};
use crate::{Error, Result, Z_975};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn normal(estimate: f64, se: f64) -> Self {
        Self { lower: estimate - Z_975 * se, upper: estimate + Z_975 * se }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Non-parametric variances (per-unit dispersion) with standard errors of
/// the group mean, `sqrt(var / |I_g|)`, and normal 95% intervals.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CellInference {
    pub var_delta: f64,
    /// m×m covariance of the per-unit covariate effects, row-major.
    pub var_tau: Vec<f64>,
    pub var_indirect: f64,
    pub var_eta: f64,
    pub se_delta: f64,
    pub se_indirect: f64,
    pub se_eta: f64,
    pub ci_delta: Interval,
    pub ci_indirect: Interval,
    pub ci_eta: Interval,
}

/// One group-time cell.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttCell {
    pub group: usize,
    /// 1-based period index.
    pub period: usize,
    /// Original period label from the input.
    pub period_label: f64,
    pub event_time: i64,
    /// `t < g`: a pre-treatment placebo.
    pub placebo: bool,
    /// Period lies inside the fitting window `t < g_min`.
    pub in_sample: bool,
    pub group_size: usize,
    pub delta: f64,
    pub tau: Vec<f64>,
    pub indirect: f64,
    pub eta: f64,
    pub inference: Option<CellInference>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Window {
    Pre,
    Post,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SummaryInference {
    pub var_delta: f64,
    pub var_indirect: f64,
    pub var_eta: f64,
    pub se_delta: f64,
    pub se_indirect: f64,
    pub se_eta: f64,
    pub ci_delta: Interval,
    pub ci_indirect: Interval,
    pub ci_eta: Interval,
}

/// Unweighted mean of a group's cells over a window. Variances are the
/// per-unit dispersion of each unit's time-averaged effect.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttSummary {
    pub group: usize,
    pub window: Window,
    pub n_periods: usize,
    pub group_size: usize,
    pub delta: f64,
    pub indirect: f64,
    pub eta: f64,
    pub inference: Option<SummaryInference>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttTable {
    pub cells: Vec<AttCell>,
    pub averages: Vec<AttSummary>,
}

impl AttTable {
    pub fn cell(&self, group: usize, period: usize) -> Option<&AttCell> {
        self.cells.iter().find(|c| c.group == group && c.period == period)
    }

    pub fn post_cells(&self) -> impl Iterator<Item = &AttCell> {
        self.cells.iter().filter(|c| !c.placebo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttOptions {
    /// Also report cells `t < g`.
    pub placebo: bool,
    pub variances: bool,
}

impl Default for AttOptions {
    fn default() -> Self {
        Self { placebo: false, variances: true }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_variance(values: &[f64], center: f64) -> f64 {
    let ss: f64 = values.iter().map(|v| (v - center) * (v - center)).sum();
    ss / (values.len() - 1) as f64
}

fn se(var: f64, n: usize) -> f64 {
    libm::sqrt(var / n as f64)
}

/// Per-unit effects of one group at one period.
struct UnitEffects {
    delta: Vec<f64>,
    tau: Vec<Vec<f64>>,
    indirect: Vec<f64>,
    eta: Vec<f64>,
}

fn unit_effects(
    data: &PanelDataset,
    members: &[usize],
    beta: &[f64],
    covariates: &CovariateImputation,
    outcomes: &OutcomeImputation,
    period: usize,
) -> UnitEffects {
    let m = data.n_covariates();
    let p = period - 1;
    let mut fx = UnitEffects {
        delta: Vec::with_capacity(members.len()),
        tau: Vec::with_capacity(members.len()),
        indirect: Vec::with_capacity(members.len()),
        eta: Vec::with_capacity(members.len()),
    };
    for &i in members {
        let y_hat = outcomes.for_unit(i).expect("outcome imputation covers every treated unit");
        let x_hat = covariates.for_unit(i).expect("covariate imputation covers every treated unit");
        let d = data.outcomes()[(i, p)] - y_hat[p];
        let tau: Vec<f64> = (0..m).map(|j| data.covariate(j)[(i, p)] - x_hat[(p, j)]).collect();
        let ind: f64 = tau.iter().zip(beta).map(|(a, b)| a * b).sum();
        fx.delta.push(d);
        fx.indirect.push(ind);
        fx.eta.push(d - ind);
        fx.tau.push(tau);
    }
    fx
}

fn cell_from_effects(
    data: &PanelDataset,
    index: &GroupIndex,
    group: usize,
    period: usize,
    beta: &[f64],
    fx: &UnitEffects,
    variances: bool,
) -> AttCell {
    let n = fx.delta.len();
    let m = data.n_covariates();
    let delta = mean(&fx.delta);
    let tau: Vec<f64> = (0..m).map(|j| fx.tau.iter().map(|t| t[j]).sum::<f64>() / n as f64).collect();
    let indirect: f64 = tau.iter().zip(beta).map(|(a, b)| a * b).sum();
    let eta = delta - indirect;

    let inference = variances.then(|| {
        let var_delta = sample_variance(&fx.delta, delta);
        let mut var_tau = vec![0.0; m * m];
        for t in &fx.tau {
            for a in 0..m {
                for b in 0..m {
                    var_tau[a * m + b] += (t[a] - tau[a]) * (t[b] - tau[b]);
                }
            }
        }
        for v in var_tau.iter_mut() {
            *v /= (n - 1) as f64;
        }
        let mut var_indirect = 0.0;
        for a in 0..m {
            for b in 0..m {
                var_indirect += beta[a] * var_tau[a * m + b] * beta[b];
            }
        }
        let var_indirect = var_indirect.max(0.0);
        let var_eta = sample_variance(&fx.eta, eta);
        let (se_delta, se_indirect, se_eta) = (se(var_delta, n), se(var_indirect, n), se(var_eta, n));
        CellInference {
            var_delta,
            var_tau,
            var_indirect,
            var_eta,
            se_delta,
            se_indirect,
            se_eta,
            ci_delta: Interval::normal(delta, se_delta),
            ci_indirect: Interval::normal(indirect, se_indirect),
            ci_eta: Interval::normal(eta, se_eta),
        }
    });

    AttCell {
        group,
        period,
        period_label: data.period_labels()[period - 1],
        event_time: period as i64 - group as i64,
        placebo: period < group,
        in_sample: period < index.g_min(),
        group_size: n,
        delta,
        tau,
        indirect,
        eta,
        inference,
    }
}

fn summarize_window(group: usize, window: Window, effects: &[UnitEffects], variances: bool) -> AttSummary {
    let n = effects[0].delta.len();
    let periods = effects.len() as f64;
    let unit_avg = |pick: fn(&UnitEffects) -> &Vec<f64>| -> Vec<f64> {
        (0..n).map(|i| effects.iter().map(|e| pick(e)[i]).sum::<f64>() / periods).collect()
    };
    let d = unit_avg(|e| &e.delta);
    let ind = unit_avg(|e| &e.indirect);
    let eta_units = unit_avg(|e| &e.eta);
    let delta = mean(&d);
    let indirect = mean(&ind);
    let eta = delta - indirect;
    let inference = variances.then(|| {
        let var_delta = sample_variance(&d, delta);
        let var_indirect = sample_variance(&ind, indirect);
        let var_eta = sample_variance(&eta_units, eta);
        let (se_delta, se_indirect, se_eta) = (se(var_delta, n), se(var_indirect, n), se(var_eta, n));
        SummaryInference {
            var_delta,
            var_indirect,
            var_eta,
            se_delta,
            se_indirect,
            se_eta,
            ci_delta: Interval::normal(delta, se_delta),
            ci_indirect: Interval::normal(indirect, se_indirect),
            ci_eta: Interval::normal(eta, se_eta),
        }
    });
    AttSummary { group, window, n_periods: effects.len(), group_size: n, delta, indirect, eta, inference }
}

/// Group-time ATTs with the direct/indirect split.
///
/// For each treated group `g` and period `t >= g` (and `t < g` when placebos
/// are requested) the per-unit effects `y_{i,t} - ŷ_{i,t}(∞)` and
/// `x_{i,t} - x̂_{i,t}(∞)` are averaged over `I_g`. The indirect part is
/// `τ̂' β̂` and the direct part is the remainder, so the two add up to the
/// total by construction.
pub fn att_table(
    data: &PanelDataset,
    index: &GroupIndex,
    fit: &CceFit,
    covariates: &CovariateImputation,
    outcomes: &OutcomeImputation,
    options: AttOptions,
) -> Result<AttTable> {
    let t_max = data.n_periods();
    let mut cells = Vec::new();
    let mut averages = Vec::new();
    for (g, members) in index.treated_groups() {
        if options.variances && members.len() < 2 {
            return Err(Error::DegenerateGroup { group: *g, size: members.len() });
        }
        let beta = fit.beta_for(GroupLabel::TreatedAt(*g));
        let first = if options.placebo { 1 } else { *g };
        let mut pre = Vec::new();
        let mut post = Vec::new();
        for period in first..=t_max {
            let fx = unit_effects(data, members, beta, covariates, outcomes, period);
            cells.push(cell_from_effects(data, index, *g, period, beta, &fx, options.variances));
            if period < *g {
                pre.push(fx);
            } else {
                post.push(fx);
            }
        }
        if !pre.is_empty() {
            averages.push(summarize_window(*g, Window::Pre, &pre, options.variances));
        }
        averages.push(summarize_window(*g, Window::Post, &post, options.variances));
    }
    Ok(AttTable { cells, averages })
}
