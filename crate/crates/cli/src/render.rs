//! Output documents and their text, CSV and JSON renderings.
//!
//! Every format is rendered from the same [`EstimateReport`] or
//! [`McReport`] values; only the number formatting differs.

use std::fmt::Write as _;

use c2ed2_core::cce::{AttCell, AttSummary, Estimation, FactorColumn, Interval, Window};
use c2ed2_core::montecarlo::{summarize, McReport, TableFormat};
use c2ed2_core::panel::{PanelDataset, ValidationReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSize {
    pub group: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSlope {
    pub group: f64,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_units: usize,
    pub n_periods: usize,
    pub period_labels: Vec<f64>,
    pub covariate_names: Vec<String>,
    pub factor_columns: Vec<String>,
    pub pre_window: usize,
    pub beta: Vec<f64>,
    pub beta_by_group: Option<Vec<GroupSlope>>,
    pub factor_rank: usize,
    pub factor_condition: f64,
    pub covariate_condition: Option<f64>,
    pub never_treated: usize,
    pub group_sizes: Vec<GroupSize>,
    pub validation: ValidationReport,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
    /// Validation failures were overridden.
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub cells: Vec<AttCell>,
    pub averages: Vec<AttSummary>,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    pub fn new(
        data: &PanelDataset,
        est: Estimation,
        mut validation: ValidationReport,
        failures: Vec<String>,
        warnings: Vec<String>,
        forced: bool,
    ) -> Self {
        let labels = data.period_labels().to_vec();
        let label = |g: usize| labels[g - 1];
        let fit_diag = est.fit.diagnostics().clone();
        validation.factor_condition = Some(fit_diag.factor_condition);
        validation.covariate_condition = fit_diag.covariate_condition;
        let factor_columns = est
            .factors
            .columns()
            .iter()
            .map(|c| match c {
                FactorColumn::OutcomeAverage => "mean(y)".to_string(),
                FactorColumn::CovariateAverage(j) => format!("mean({})", data.covariate_names()[*j]),
                FactorColumn::Observed(name) => name.clone(),
            })
            .collect();
        let diagnostics = Diagnostics {
            n_units: data.n_units(),
            n_periods: data.n_periods(),
            covariate_names: data.covariate_names().to_vec(),
            factor_columns,
            pre_window: est.fit.pre_window(),
            beta: est.fit.beta().to_vec(),
            beta_by_group: est
                .fit
                .beta_by_group()
                .map(|b| b.iter().map(|(g, beta)| GroupSlope { group: label(*g), beta: beta.clone() }).collect()),
            factor_rank: fit_diag.factor_rank,
            factor_condition: fit_diag.factor_condition,
            covariate_condition: fit_diag.covariate_condition,
            never_treated: validation.never_treated,
            group_sizes: validation.group_sizes.iter().map(|g| GroupSize { group: label(g.group), size: g.size }).collect(),
            failures,
            warnings,
            validation,
            forced,
            period_labels: labels.clone(),
        };
        EstimateReport { cells: est.table.cells, averages: est.table.averages, diagnostics }
    }

    fn group_label(&self, g: usize) -> f64 {
        self.diagnostics.period_labels[g - 1]
    }
}

fn cell_kind(c: &AttCell) -> &'static str {
    match (c.placebo, c.in_sample) {
        (false, _) => "post",
        (true, true) => "pre",
        (true, false) => "pre-oos",
    }
}

fn window_name(w: Window) -> &'static str {
    match w {
        Window::Pre => "pre",
        Window::Post => "post",
    }
}

/// Estimate, standard error and interval of one quantity.
type Stat = (f64, Option<(f64, Interval)>);

fn cell_stats(c: &AttCell) -> [Stat; 3] {
    let inf = c.inference.as_ref();
    [
        (c.delta, inf.map(|i| (i.se_delta, i.ci_delta))),
        (c.indirect, inf.map(|i| (i.se_indirect, i.ci_indirect))),
        (c.eta, inf.map(|i| (i.se_eta, i.ci_eta))),
    ]
}

fn summary_stats(s: &AttSummary) -> [Stat; 3] {
    let inf = s.inference.as_ref();
    [
        (s.delta, inf.map(|i| (i.se_delta, i.ci_delta))),
        (s.indirect, inf.map(|i| (i.se_indirect, i.ci_indirect))),
        (s.eta, inf.map(|i| (i.se_eta, i.ci_eta))),
    ]
}

fn aligned(rows: &[Vec<String>], left: usize) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0; cols];
    for row in rows {
        for (w, f) in widths.iter_mut().zip(row) {
            *w = (*w).max(f.chars().count());
        }
    }
    let mut out = String::new();
    for row in rows {
        let fields: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (f, w))| if c < left { format!("{f:<w$}") } else { format!("{f:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", fields.join("  ").trim_end());
    }
    out
}

const STAT_HEADER: [&str; 12] = [
    "ATT", "se", "lower", "upper", "indirect", "se", "lower", "upper", "direct", "se", "lower", "upper",
];

fn text_stats(stats: &[Stat; 3], row: &mut Vec<String>) {
    for (est, inf) in stats {
        row.push(format!("{est:.6}"));
        match inf {
            Some((se, ci)) => {
                row.push(format!("{se:.6}"));
                row.push(format!("{:.6}", ci.lower));
                row.push(format!("{:.6}", ci.upper));
            }
            None => row.extend(["-", "-", "-"].map(String::from)),
        }
    }
}

fn join_f64(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", ")
}

pub fn estimate_text(report: &EstimateReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Group-time ATT with 95% normal intervals (ATT = indirect + direct)");
    let mut rows = vec![["group", "period", "event", "kind", "n"].iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    rows[0].extend(STAT_HEADER.iter().map(|s| s.to_string()));
    for c in &report.cells {
        let mut row = vec![
            report.group_label(c.group).to_string(),
            c.period_label.to_string(),
            c.event_time.to_string(),
            cell_kind(c).to_string(),
            c.group_size.to_string(),
        ];
        text_stats(&cell_stats(c), &mut row);
        rows.push(row);
    }
    out.push_str(&aligned(&rows, 0));

    if !report.averages.is_empty() {
        let _ = writeln!(out, "\nWindow averages (unweighted over periods)");
        let mut rows =
            vec![["group", "window", "periods", "n"].iter().map(|s| s.to_string()).collect::<Vec<_>>()];
        rows[0].extend(STAT_HEADER.iter().map(|s| s.to_string()));
        for s in &report.averages {
            let mut row = vec![
                report.group_label(s.group).to_string(),
                window_name(s.window).to_string(),
                s.n_periods.to_string(),
                s.group_size.to_string(),
            ];
            text_stats(&summary_stats(s), &mut row);
            rows.push(row);
        }
        out.push_str(&aligned(&rows, 0));
    }

    let d = &report.diagnostics;
    let _ = writeln!(out, "\nDiagnostics");
    let _ = writeln!(out, "  units: {}, periods: {}, covariates: [{}]", d.n_units, d.n_periods, d.covariate_names.join(", "));
    let _ = writeln!(out, "  factor proxies: [{}]", d.factor_columns.join(", "));
    let _ = writeln!(
        out,
        "  pre-treatment window: {} periods (need {})",
        d.pre_window, d.validation.pre_window.required
    );
    let _ = writeln!(out, "  factor rank: {}, condition: {:.6e}", d.factor_rank, d.factor_condition);
    match d.covariate_condition {
        Some(c) => {
            let _ = writeln!(out, "  defactored covariate condition: {c:.6e}");
        }
        None => {
            let _ = writeln!(out, "  defactored covariate condition: -");
        }
    }
    let _ = writeln!(out, "  beta: [{}]", join_f64(&d.beta));
    if let Some(by_group) = &d.beta_by_group {
        for g in by_group {
            let _ = writeln!(out, "  beta[group {}]: [{}]", g.group, join_f64(&g.beta));
        }
    }
    let sizes: Vec<String> = d.group_sizes.iter().map(|g| format!("{}: {}", g.group, g.size)).collect();
    let _ = writeln!(out, "  group sizes: never treated: {}; {}", d.never_treated, sizes.join("; "));
    if d.failures.is_empty() {
        let _ = writeln!(out, "  validation: passed");
    } else {
        for f in &d.failures {
            let _ = writeln!(out, "  validation failure{}: {f}", if d.forced { " (forced)" } else { "" });
        }
    }
    for w in &d.warnings {
        let _ = writeln!(out, "  warning: {w}");
    }
    out
}

/// Plot data: one row per cell and per window average.
pub fn estimate_csv(report: &EstimateReport) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> =
        ["row", "group", "period", "event_time", "kind", "n"].iter().map(|s| s.to_string()).collect();
    for name in ["att", "indirect", "direct"] {
        header.extend([name.to_string(), format!("se_{name}"), format!("lower_{name}"), format!("upper_{name}")]);
    }
    wtr.write_record(&header).expect("in-memory write");
    let push_stats = |stats: &[Stat; 3], row: &mut Vec<String>| {
        for (est, inf) in stats {
            row.push(est.to_string());
            match inf {
                Some((se, ci)) => row.extend([se.to_string(), ci.lower.to_string(), ci.upper.to_string()]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
    };
    for c in &report.cells {
        let mut row = vec![
            "cell".to_string(),
            report.group_label(c.group).to_string(),
            c.period_label.to_string(),
            c.event_time.to_string(),
            cell_kind(c).to_string(),
            c.group_size.to_string(),
        ];
        push_stats(&cell_stats(c), &mut row);
        wtr.write_record(&row).expect("in-memory write");
    }
    for s in &report.averages {
        let mut row = vec![
            "average".to_string(),
            report.group_label(s.group).to_string(),
            String::new(),
            String::new(),
            window_name(s.window).to_string(),
            s.group_size.to_string(),
        ];
        push_stats(&summary_stats(s), &mut row);
        wtr.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

pub fn render_estimate(report: &EstimateReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Text => estimate_text(report),
        OutputFormat::Csv => estimate_csv(report),
        OutputFormat::Json => to_json(report),
    }
}

pub fn render_study(reports: &[McReport], format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => summarize(reports, TableFormat::Csv),
        OutputFormat::Json => to_json(&reports),
        OutputFormat::Text => {
            let mut out = String::new();
            if let Some(first) = reports.first() {
                let _ = writeln!(out, "replications: {}, seed: {}", first.n_replications, first.seed);
            }
            out.push_str(&summarize(reports, TableFormat::Text));
            for r in reports {
                for f in &r.failures {
                    let _ = writeln!(out, "{}: {} failed in {} replications", r.label, f.estimator.label(), f.count);
                }
            }
            out
        }
    }
}
