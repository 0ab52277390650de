//! Simulation study definitions and the thread-pool replication runner.

use std::path::Path;

use c2ed2_core::montecarlo::{aggregate, run_replication, DgpConfig, Estimator, McReport, Preset, Scenario};
use rayon::prelude::*;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: String, source: toml::de::Error },
    #[error("unknown preset `{0}` (expected table1 or table2)")]
    UnknownPreset(String),
    #[error("{0}")]
    Invalid(String),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error(transparent)]
    Core(#[from] c2ed2_core::Error),
}

pub fn parse_preset(name: &str) -> Result<Preset, StudyError> {
    match name {
        "table1" => Ok(Preset::ParallelTrends),
        "table2" => Ok(Preset::NonParallelTrends),
        other => Err(StudyError::UnknownPreset(other.to_string())),
    }
}

/// Design overrides. Every key is optional and falls back to the preset or
/// to the default design.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignOverrides {
    pub n_units: Option<usize>,
    pub n_periods: Option<usize>,
    pub g_treat: Option<usize>,
    pub treated_fraction: Option<f64>,
    pub rho: Option<f64>,
    pub theta: Option<[f64; 2]>,
    pub delta_g: Option<f64>,
    pub tau_g: Option<[f64; 2]>,
    pub beta: Option<[f64; 2]>,
    pub noise_scale: Option<f64>,
}

impl DesignOverrides {
    /// Keys that pick the effect scenario or trends, which a preset fixes.
    pub fn sets_scenario(&self) -> bool {
        self.theta.is_some() || self.delta_g.is_some() || self.tau_g.is_some()
    }

    /// `other` wins where both are set.
    pub fn merged(&self, other: &DesignOverrides) -> DesignOverrides {
        DesignOverrides {
            n_units: other.n_units.or(self.n_units),
            n_periods: other.n_periods.or(self.n_periods),
            g_treat: other.g_treat.or(self.g_treat),
            treated_fraction: other.treated_fraction.or(self.treated_fraction),
            rho: other.rho.or(self.rho),
            theta: other.theta.or(self.theta),
            delta_g: other.delta_g.or(self.delta_g),
            tau_g: other.tau_g.or(self.tau_g),
            beta: other.beta.or(self.beta),
            noise_scale: other.noise_scale.or(self.noise_scale),
        }
    }

    pub fn apply(&self, mut c: DgpConfig) -> DgpConfig {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(n_units, n_periods, g_treat, treated_fraction, rho, theta, delta_g, tau_g, beta, noise_scale);
        c
    }
}

/// Study file (TOML):
///
/// ```toml
/// preset = "table2"   # optional; table1 | table2
/// reps = 1000
/// seed = 20240101
///
/// [design]            # optional; keys of the simulation design
/// n_units = 164
/// rho = 0.75
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyFile {
    pub preset: Option<String>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub design: DesignOverrides,
}

impl StudyFile {
    pub fn read(path: &Path) -> Result<Self, StudyError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| StudyError::Io { path: path.display().to_string(), source })?;
        toml::from_str(&text).map_err(|source| StudyError::Toml { path: path.display().to_string(), source })
    }
}

/// One labelled design of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyArm {
    pub label: String,
    pub config: DgpConfig,
}

/// Both effect scenarios of a preset, or a single custom design.
pub fn study_arms(preset: Option<Preset>, overrides: &DesignOverrides) -> Result<Vec<StudyArm>, StudyError> {
    let arms = match preset {
        Some(p) => {
            if overrides.sets_scenario() {
                return Err(StudyError::Invalid("a preset fixes theta, delta and tau; drop them or the preset".into()));
            }
            [Scenario::DirectOnly, Scenario::DirectAndIndirect]
                .into_iter()
                .map(|s| StudyArm { label: s.label().to_string(), config: overrides.apply(p.config(s)) })
                .collect()
        }
        None => {
            if !overrides.sets_scenario() {
                return Err(StudyError::Invalid("give a preset or at least one of theta, delta, tau".into()));
            }
            vec![StudyArm { label: "custom".into(), config: overrides.apply(DgpConfig::default()) }]
        }
    };
    for arm in &arms {
        arm.config.validate()?;
    }
    Ok(arms)
}

/// Runs `n_reps` replications on `threads` workers (rayon's default when
/// `None`). Records are collected in replication order before reduction,
/// so the report equals the sequential
/// [`run_study`](c2ed2_core::montecarlo::run_study) bit for bit.
pub fn run_parallel(
    label: &str,
    config: &DgpConfig,
    estimators: &[Estimator],
    n_reps: usize,
    seed: u64,
    threads: Option<usize>,
) -> Result<McReport, StudyError> {
    if n_reps == 0 {
        return Err(StudyError::Invalid("reps must be at least 1".into()));
    }
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build()?;
    let records = pool.install(|| {
        (0..n_reps as u64)
            .into_par_iter()
            .map(|rep| run_replication(config, estimators, seed, rep))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(aggregate(label, config, seed, &records))
}
