//! Simulation design, replication runner and bias/MSE/coverage summaries.

mod analytic;
mod dgp;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

pub use analytic::twfe_bias_limit;
pub use dgp::{generate, replication_rng, SimulatedPanel, Truth};

use crate::baselines::{twfe_event_study, TwfeSpec};
use crate::cce::{self, EstimatorOptions};
use crate::panel::build_group_index;
use crate::{Error, Result};

/// Simulation design with two covariates and factors `f_t = (1, t)'`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DgpConfig {
    pub n_units: usize,
    pub n_periods: usize,
    pub g_treat: usize,
    pub treated_fraction: f64,
    pub rho: f64,
    pub theta: [f64; 2],
    pub delta_g: f64,
    pub tau_g: [f64; 2],
    pub beta: [f64; 2],
    /// Multiplies every standard normal draw. `0` leaves the deterministic
    /// skeleton; small values give near-exact fixtures.
    pub noise_scale: f64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n_units: 164,
            n_periods: 9,
            g_treat: 7,
            treated_fraction: 0.5,
            rho: 0.75,
            theta: [0.0, 0.0],
            delta_g: 1.0,
            tau_g: [0.0, 0.0],
            beta: [1.0, 1.0],
            noise_scale: 1.0,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.g_treat < 2 || self.g_treat > self.n_periods {
            return Err(Error::Config(format!("g_treat = {} outside 2..={}", self.g_treat, self.n_periods)));
        }
        if !(self.treated_fraction > 0.0 && self.treated_fraction < 1.0) {
            return Err(Error::Config(format!("treated_fraction = {} outside (0, 1)", self.treated_fraction)));
        }
        if self.rho.is_nan() || self.rho.abs() >= 1.0 {
            return Err(Error::Config(format!("|rho| = {} must be below 1", self.rho.abs())));
        }
        let treated = self.n_treated();
        if treated == 0 || treated == self.n_units {
            return Err(Error::Config(format!("{} treated of {} units leaves an empty group", treated, self.n_units)));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!("noise_scale = {} must be finite and non-negative", self.noise_scale)));
        }
        let finite = [self.delta_g, self.theta[0], self.theta[1], self.tau_g[0], self.tau_g[1], self.beta[0], self.beta[1]];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite design parameter".to_string()));
        }
        Ok(())
    }

    /// `⌊N · fraction⌋`.
    pub fn n_treated(&self) -> usize {
        libm::floor(self.n_units as f64 * self.treated_fraction) as usize
    }

    pub fn truth(&self) -> Truth {
        let indirect = self.tau_g[0] * self.beta[0] + self.tau_g[1] * self.beta[1];
        Truth { total: self.delta_g, indirect, direct: self.delta_g - indirect }
    }

    pub fn with_scenario(self, scenario: Scenario) -> Self {
        let (delta_g, tau_g) = scenario.effects();
        Self { delta_g, tau_g, ..self }
    }
}

/// The two effect configurations of the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Scenario {
    /// `Δ_g = 1`, `τ_g = 0`.
    DirectOnly,
    /// `Δ_g = 2`, `τ_g = (0, 1)'`: direct 1 plus indirect 1.
    DirectAndIndirect,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::DirectOnly, Scenario::DirectAndIndirect];

    pub fn effects(self) -> (f64, [f64; 2]) {
        match self {
            Scenario::DirectOnly => (1.0, [0.0, 0.0]),
            Scenario::DirectAndIndirect => (2.0, [0.0, 1.0]),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::DirectOnly => "Direct effect only",
            Scenario::DirectAndIndirect => "Direct and indirect effects",
        }
    }
}

/// Trend configurations: parallel (`θ = 0`) and diverging (`θ = (0,1)'`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Preset {
    ParallelTrends,
    NonParallelTrends,
}

impl Preset {
    pub fn theta(self) -> [f64; 2] {
        match self {
            Preset::ParallelTrends => [0.0, 0.0],
            Preset::NonParallelTrends => [0.0, 1.0],
        }
    }

    pub fn config(self, scenario: Scenario) -> DgpConfig {
        DgpConfig { theta: self.theta(), ..DgpConfig::default() }.with_scenario(scenario)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Estimator {
    Twfe,
    TwfeCovariates,
    C2ed2,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Twfe, Estimator::TwfeCovariates, Estimator::C2ed2];

    pub fn label(self) -> &'static str {
        match self {
            Estimator::Twfe => "OLS",
            Estimator::TwfeCovariates => "OLS with covariates",
            Estimator::C2ed2 => "C2ED2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Target {
    Total,
    Direct,
    Indirect,
}

impl Target {
    pub fn label(self) -> &'static str {
        match self {
            Target::Total => "total",
            Target::Direct => "direct",
            Target::Indirect => "indirect",
        }
    }

    pub fn truth(self, truth: &Truth) -> f64 {
        match self {
            Target::Total => truth.total,
            Target::Direct => truth.direct,
            Target::Indirect => truth.indirect,
        }
    }
}

/// One estimate from one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub estimator: Estimator,
    pub target: Target,
    pub period: usize,
    pub estimate: f64,
    pub truth: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub rep: u64,
    pub observations: Vec<Observation>,
    /// Estimators whose preconditions failed in this replication.
    pub failures: Vec<(Estimator, String)>,
}

fn c2ed2_observations(sim: &SimulatedPanel, out: &mut Vec<Observation>) -> Result<()> {
    let index = build_group_index(&sim.data)?;
    let est = cce::estimate(&sim.data, &index, &EstimatorOptions::default())?;
    let mut obs = Vec::new();
    for cell in est.table.post_cells() {
        let inf = cell.inference.as_ref().expect("variances requested");
        for (target, estimate, ci) in [
            (Target::Total, cell.delta, inf.ci_delta),
            (Target::Direct, cell.eta, inf.ci_eta),
            (Target::Indirect, cell.indirect, inf.ci_indirect),
        ] {
            let truth = target.truth(&sim.truth);
            obs.push(Observation {
                estimator: Estimator::C2ed2,
                target,
                period: cell.period,
                estimate,
                truth,
                covered: ci.contains(truth),
            });
        }
    }
    out.extend(obs);
    Ok(())
}

fn twfe_observations(sim: &SimulatedPanel, estimator: Estimator, out: &mut Vec<Observation>) -> Result<()> {
    let index = build_group_index(&sim.data)?;
    let spec = TwfeSpec { include_covariates: estimator == Estimator::TwfeCovariates };
    let est = twfe_event_study(&sim.data, &index, spec)?;
    for (slot, &period) in est.periods.iter().enumerate() {
        let truth = sim.truth.total;
        out.push(Observation {
            estimator,
            target: Target::Total,
            period,
            estimate: est.delta[slot],
            truth,
            covered: est.interval(slot).contains(truth),
        });
    }
    Ok(())
}

/// Generates replication `rep` and runs each estimator on it.
pub fn run_replication(config: &DgpConfig, estimators: &[Estimator], seed: u64, rep: u64) -> Result<ReplicationRecord> {
    let mut rng = replication_rng(seed, rep);
    let sim = generate(config, &mut rng)?;
    let mut record = ReplicationRecord { rep, observations: Vec::new(), failures: Vec::new() };
    for &estimator in estimators {
        let outcome = match estimator {
            Estimator::C2ed2 => c2ed2_observations(&sim, &mut record.observations),
            other => twfe_observations(&sim, other, &mut record.observations),
        };
        if let Err(e) = outcome {
            record.failures.push((estimator, e.to_string()));
        }
    }
    Ok(record)
}

/// Monte Carlo summary of one estimator/target/period.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McCell {
    pub estimator: Estimator,
    pub target: Target,
    pub period: usize,
    pub n: usize,
    pub truth: f64,
    /// Mean of `estimate - truth`.
    pub bias: f64,
    /// Mean of `(estimate - truth)^2`.
    pub mse: f64,
    /// Monte Carlo standard error of `bias`.
    pub bias_se: f64,
    /// Share of replications whose 95% interval contains the truth.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FailureCount {
    pub estimator: Estimator,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McReport {
    pub label: String,
    pub config: DgpConfig,
    pub seed: u64,
    pub n_replications: usize,
    pub failures: Vec<FailureCount>,
    pub cells: Vec<McCell>,
}

impl McReport {
    pub fn cell(&self, estimator: Estimator, target: Target, period: usize) -> Option<&McCell> {
        self.cells.iter().find(|c| c.estimator == estimator && c.target == target && c.period == period)
    }

    pub fn periods(&self) -> Vec<usize> {
        let mut p: Vec<usize> = self.cells.iter().map(|c| c.period).collect();
        p.sort_unstable();
        p.dedup();
        p
    }
}

#[derive(Default)]
struct Sums {
    n: usize,
    truth: f64,
    err: f64,
    sq: f64,
    covered: usize,
}

/// Folds replication records into a report. Records are consumed in the
/// order given; callers pass them sorted by replication index so the sums
/// are bitwise reproducible.
pub fn aggregate(label: &str, config: &DgpConfig, seed: u64, records: &[ReplicationRecord]) -> McReport {
    let mut sums: BTreeMap<(Estimator, Target, usize), Sums> = BTreeMap::new();
    let mut failures: BTreeMap<Estimator, usize> = BTreeMap::new();
    for record in records {
        for o in &record.observations {
            let s = sums.entry((o.estimator, o.target, o.period)).or_default();
            let e = o.estimate - o.truth;
            s.n += 1;
            s.truth = o.truth;
            s.err += e;
            s.sq += e * e;
            s.covered += o.covered as usize;
        }
        for (est, _) in &record.failures {
            *failures.entry(*est).or_default() += 1;
        }
    }
    let cells = sums
        .into_iter()
        .map(|((estimator, target, period), s)| {
            let n = s.n as f64;
            let bias = s.err / n;
            let mse = s.sq / n;
            let var = if s.n > 1 { ((mse - bias * bias) * n / (n - 1.0)).max(0.0) } else { 0.0 };
            McCell {
                estimator,
                target,
                period,
                n: s.n,
                truth: s.truth,
                bias,
                mse,
                bias_se: libm::sqrt(var / n),
                coverage: s.covered as f64 / n,
            }
        })
        .collect();
    McReport {
        label: label.to_string(),
        config: config.clone(),
        seed,
        n_replications: records.len(),
        failures: failures.into_iter().map(|(estimator, count)| FailureCount { estimator, count }).collect(),
        cells,
    }
}

/// Sequential study. The `c2ed2` crate offers a thread-pool runner that
/// produces the identical report.
pub fn run_study(
    label: &str,
    config: &DgpConfig,
    estimators: &[Estimator],
    n_reps: usize,
    seed: u64,
) -> Result<McReport> {
    if n_reps == 0 {
        return Err(Error::Config("n_reps must be at least 1".to_string()));
    }
    config.validate()?;
    let records = (0..n_reps as u64)
        .map(|rep| run_replication(config, estimators, seed, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(label, config, seed, &records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Text,
}

/// Rows per report × estimator × target; BIAS and MSE per post period,
/// followed by coverage columns.
pub fn summarize(reports: &[McReport], format: TableFormat) -> String {
    let periods: Vec<usize> = {
        let mut p: Vec<usize> = reports.iter().flat_map(|r| r.periods()).collect();
        p.sort_unstable();
        p.dedup();
        p
    };
    let mut header: Vec<String> = ["scenario", "estimator", "target"].iter().map(|s| s.to_string()).collect();
    for p in &periods {
        header.push(format!("BIAS({p})"));
        header.push(format!("MSE({p})"));
    }
    for p in &periods {
        header.push(format!("COVERAGE({p})"));
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    for report in reports {
        for estimator in Estimator::ALL {
            for target in [Target::Total, Target::Direct, Target::Indirect] {
                if !report.cells.iter().any(|c| c.estimator == estimator && c.target == target) {
                    continue;
                }
                let mut row = alloc::vec![report.label.clone(), estimator.label().to_string(), target.label().to_string()];
                let cell = |p: usize| report.cell(estimator, target, p);
                let num = |v: Option<f64>| match (v, format) {
                    (None, _) => String::new(),
                    (Some(v), TableFormat::Csv) => format!("{v}"),
                    (Some(v), TableFormat::Text) => format!("{v:.4}"),
                };
                for &p in &periods {
                    row.push(num(cell(p).map(|c| c.bias)));
                    row.push(num(cell(p).map(|c| c.mse)));
                }
                for &p in &periods {
                    row.push(num(cell(p).map(|c| c.coverage)));
                }
                rows.push(row);
            }
        }
    }
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            let _ = writeln!(out, "{}", header.join(","));
            for row in rows {
                let escaped: Vec<String> = row
                    .into_iter()
                    .map(|f| if f.contains(',') || f.contains('"') { format!("\"{}\"", f.replace('"', "\"\"")) } else { f })
                    .collect();
                let _ = writeln!(out, "{}", escaped.join(","));
            }
        }
        TableFormat::Text => {
            let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
            for row in &rows {
                for (w, f) in widths.iter_mut().zip(row) {
                    *w = (*w).max(f.chars().count());
                }
            }
            let line = |fields: &[String], out: &mut String| {
                let cells: Vec<String> = fields
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(c, (f, w))| if c < 3 { format!("{f:<w$}") } else { format!("{f:>w$}") })
                    .collect();
                let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            };
            line(&header, &mut out);
            for row in &rows {
                line(row, &mut out);
            }
            let _ = writeln!(out, "COVERAGE columns: share of 95% intervals containing the truth (not part of the bias/MSE layout).");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn scenario_truths() {
        let t = DgpConfig::default().with_scenario(Scenario::DirectOnly).truth();
        assert_eq!(t, Truth { total: 1.0, indirect: 0.0, direct: 1.0 });
        let t = DgpConfig::default().with_scenario(Scenario::DirectAndIndirect).truth();
        assert_eq!(t, Truth { total: 2.0, indirect: 1.0, direct: 1.0 });
    }

    #[test]
    fn config_validation() {
        assert!(DgpConfig::default().validate().is_ok());
        assert!(DgpConfig { rho: 1.0, ..Default::default() }.validate().is_err());
        assert!(DgpConfig { g_treat: 1, ..Default::default() }.validate().is_err());
        assert!(DgpConfig { g_treat: 10, ..Default::default() }.validate().is_err());
        assert!(DgpConfig { treated_fraction: 1.0, ..Default::default() }.validate().is_err());
        assert!(DgpConfig { n_units: 1, ..Default::default() }.validate().is_err());
    }

    fn cell(estimator: Estimator, period: usize, bias: f64, mse: f64) -> McCell {
        McCell { estimator, target: Target::Total, period, n: 10, truth: 1.0, bias, mse, bias_se: 0.1, coverage: 0.9 }
    }

    fn report(cells: Vec<McCell>) -> McReport {
        McReport { label: "s".into(), config: DgpConfig::default(), seed: 1, n_replications: 10, failures: vec![], cells }
    }

    #[test]
    fn single_cell_summary() {
        let out = summarize(&[report(vec![cell(Estimator::C2ed2, 7, 0.5, 1.25)])], TableFormat::Csv);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "scenario,estimator,target,BIAS(7),MSE(7),COVERAGE(7)");
        assert_eq!(lines[1], "s,C2ED2,total,0.5,1.25,0.9");
        assert_eq!(lines.len(), 2);
    }

    #[test]
    fn aggregate_is_mean_of_errors() {
        let obs = |rep: u64, e: f64| ReplicationRecord {
            rep,
            observations: vec![Observation {
                estimator: Estimator::Twfe,
                target: Target::Total,
                period: 7,
                estimate: 1.0 + e,
                truth: 1.0,
                covered: e.abs() < 1.5,
            }],
            failures: vec![],
        };
        let r = aggregate("x", &DgpConfig::default(), 0, &[obs(0, 1.0), obs(1, -2.0), obs(2, 4.0)]);
        let c = r.cell(Estimator::Twfe, Target::Total, 7).unwrap();
        assert!((c.bias - 1.0).abs() < 1e-15);
        assert!((c.mse - 7.0).abs() < 1e-15);
        assert!((c.coverage - 1.0 / 3.0).abs() < 1e-15);
        assert!(c.mse >= c.bias * c.bias);
    }
}
