//! Long-format panel CSV: one row per (unit, period).
//!
//! Columns are located by header name. Units keep their first-appearance
//! order, periods are sorted and re-indexed `1..=T`, and the group column
//! holds the period label at which a unit is first treated, with `0` or an
//! empty cell for never-treated units.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use c2ed2_core::cce::ObservedFactor;
use c2ed2_core::numerics::Matrix;
use c2ed2_core::panel::{GroupLabel, PanelDataset};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: column `{column}`: cannot parse `{value}` as a number")]
    Parse { row: u64, column: String, value: String },
    #[error("unbalanced panel: no row for unit `{unit}` at period {period}")]
    MissingCell { unit: String, period: String },
    #[error("row {row}: duplicate row for unit `{unit}` at period {period}")]
    Duplicate { row: u64, unit: String, period: String },
    #[error("row {row}: unit `{unit}` has conflicting group labels")]
    InconsistentGroup { row: u64, unit: String },
    #[error("input has no data rows")]
    Empty,
    #[error("unit `{unit}`: treated label {label} is not an observed period")]
    GroupNotObserved { unit: String, label: String },
    #[error(transparent)]
    Panel(#[from] c2ed2_core::Error),
}

impl IngestError {
    /// Failures of the treatment-timing rules rather than of the file layout.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            IngestError::GroupNotObserved { .. } | IngestError::Panel(c2ed2_core::Error::TreatedLabelOutOfRange { .. })
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, IngestError::Io { .. })
    }
}

/// Column names of a long-format panel file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub unit: String,
    pub time: String,
    pub group: String,
    pub outcome: String,
    pub covariates: Vec<String>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self { unit: "unit".into(), time: "time".into(), group: "group".into(), outcome: "y".into(), covariates: vec![] }
    }
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

pub fn read_panel(path: &Path, schema: &ColumnSchema) -> Result<PanelDataset, IngestError> {
    read_panel_from(open(path)?, schema)
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers.iter().position(|h| h.trim() == name).ok_or_else(|| IngestError::MissingColumn(name.to_string()))
}

fn number(record: &csv::StringRecord, col: usize, name: &str) -> Result<f64, IngestError> {
    let raw = record.get(col).unwrap_or("").trim();
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(IngestError::Parse {
            row: record.position().map_or(0, |p| p.line()),
            column: name.to_string(),
            value: raw.to_string(),
        }),
    }
}

fn never_treated(raw: &str) -> bool {
    raw.is_empty() || raw.parse::<f64>().is_ok_and(|v| v == 0.0)
}

fn period_slot(periods: &[f64], label: f64) -> Option<usize> {
    periods.binary_search_by(|p| p.total_cmp(&label)).ok()
}

struct Row {
    unit: usize,
    period: f64,
    line: u64,
    values: Vec<f64>,
}

pub fn read_panel_from<R: Read>(reader: R, schema: &ColumnSchema) -> Result<PanelDataset, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let unit_col = column(&headers, &schema.unit)?;
    let time_col = column(&headers, &schema.time)?;
    let group_col = column(&headers, &schema.group)?;
    let mut value_cols = vec![(column(&headers, &schema.outcome)?, schema.outcome.as_str())];
    for name in &schema.covariates {
        value_cols.push((column(&headers, name)?, name.as_str()));
    }

    let mut unit_ids: Vec<String> = Vec::new();
    let mut unit_slot: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<Option<f64>> = Vec::new();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record.get(unit_col).unwrap_or("").to_string();
        let unit = *unit_slot.entry(id.clone()).or_insert_with(|| {
            unit_ids.push(id.clone());
            groups.push(None);
            unit_ids.len() - 1
        });
        let period = number(&record, time_col, &schema.time)?;
        let raw_group = record.get(group_col).unwrap_or("");
        let group = if never_treated(raw_group) { f64::INFINITY } else { number(&record, group_col, &schema.group)? };
        match groups[unit] {
            None => groups[unit] = Some(group),
            Some(g) if g == group => {}
            Some(_) => return Err(IngestError::InconsistentGroup { row: line, unit: id }),
        }
        let values = value_cols.iter().map(|&(c, name)| number(&record, c, name)).collect::<Result<Vec<_>, _>>()?;
        rows.push(Row { unit, period, line, values });
    }
    if rows.is_empty() {
        return Err(IngestError::Empty);
    }

    let mut periods: Vec<f64> = rows.iter().map(|r| r.period).collect();
    periods.sort_by(f64::total_cmp);
    periods.dedup();
    let (n, t, m) = (unit_ids.len(), periods.len(), schema.covariates.len());

    let mut filled = vec![false; n * t];
    let mut outcomes = Matrix::zeros(n, t);
    let mut covariates = vec![Matrix::zeros(n, t); m];
    for row in &rows {
        let p = period_slot(&periods, row.period).expect("period collected above");
        let seen = &mut filled[row.unit * t + p];
        if *seen {
            return Err(IngestError::Duplicate {
                row: row.line,
                unit: unit_ids[row.unit].clone(),
                period: row.period.to_string(),
            });
        }
        *seen = true;
        outcomes[(row.unit, p)] = row.values[0];
        for j in 0..m {
            covariates[j][(row.unit, p)] = row.values[j + 1];
        }
    }
    for i in 0..n {
        for p in 0..t {
            if !filled[i * t + p] {
                return Err(IngestError::MissingCell { unit: unit_ids[i].clone(), period: periods[p].to_string() });
            }
        }
    }

    let labels = groups
        .iter()
        .zip(&unit_ids)
        .map(|(g, id)| match g.expect("every unit has a row") {
            g if g.is_infinite() => Ok(GroupLabel::NeverTreated),
            g => period_slot(&periods, g)
                .map(|slot| GroupLabel::TreatedAt(slot + 1))
                .ok_or_else(|| IngestError::GroupNotObserved { unit: id.clone(), label: g.to_string() }),
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(PanelDataset::new(outcomes, covariates, labels)?
        .with_unit_ids(unit_ids)?
        .with_period_labels(periods)?
        .with_covariate_names(schema.covariates.clone())?)
}

/// Writes `data` in the layout [`read_panel_from`] reads. Numbers use the
/// shortest representation that parses back to the same value.
pub fn write_panel<W: Write>(data: &PanelDataset, schema: &ColumnSchema, writer: W) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![schema.unit.clone(), schema.time.clone(), schema.group.clone(), schema.outcome.clone()];
    header.extend(schema.covariates.iter().cloned());
    wtr.write_record(&header)?;
    let labels = data.period_labels();
    for i in 0..data.n_units() {
        let group = match data.groups()[i] {
            GroupLabel::NeverTreated => "0".to_string(),
            GroupLabel::TreatedAt(g) => labels[g - 1].to_string(),
        };
        for p in 0..data.n_periods() {
            let mut record = vec![data.unit_ids()[i].clone(), labels[p].to_string(), group.clone()];
            record.push(data.outcomes()[(i, p)].to_string());
            for j in 0..data.n_covariates() {
                record.push(data.covariate(j)[(i, p)].to_string());
            }
            wtr.write_record(&record)?;
        }
    }
    wtr.flush().map_err(|source| IngestError::Io { path: "<output>".into(), source })?;
    Ok(())
}

/// Observed factor series from a CSV whose first column holds period labels
/// and whose remaining columns are one factor each, named by their header.
pub fn read_observed_factors(path: &Path, periods: &[f64]) -> Result<Vec<ObservedFactor>, IngestError> {
    read_observed_factors_from(open(path)?, periods)
}

pub fn read_observed_factors_from<R: Read>(reader: R, periods: &[f64]) -> Result<Vec<ObservedFactor>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(IngestError::MissingColumn("<factor value column>".into()));
    }
    let time_name = headers[0].to_string();
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut values = vec![vec![f64::NAN; periods.len()]; names.len()];
    let mut seen = vec![false; periods.len()];
    for record in rdr.records() {
        let record = record?;
        let label = number(&record, 0, &time_name)?;
        let Some(p) = period_slot(periods, label) else { continue };
        if seen[p] {
            return Err(IngestError::Duplicate {
                row: record.position().map_or(0, |q| q.line()),
                unit: "<observed factors>".into(),
                period: label.to_string(),
            });
        }
        seen[p] = true;
        for (j, name) in names.iter().enumerate() {
            values[j][p] = number(&record, j + 1, name)?;
        }
    }
    if let Some(p) = seen.iter().position(|s| !s) {
        return Err(IngestError::MissingCell { unit: "<observed factors>".into(), period: periods[p].to_string() });
    }
    Ok(names.into_iter().zip(values).map(|(name, values)| ObservedFactor::Custom { name, values }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "unit,time,group,y\na,1,0,1.0\na,2,0,2.0\nb,1,,3.0\nb,2,,4.0\nc,1,2,5.0\nc,2,2,6.5\n";

    #[test]
    fn minimal_file() {
        let d = read_panel_from(MINIMAL.as_bytes(), &ColumnSchema::default()).unwrap();
        assert_eq!((d.n_units(), d.n_periods(), d.n_covariates()), (3, 2, 0));
        assert_eq!(d.groups(), &[GroupLabel::NeverTreated, GroupLabel::NeverTreated, GroupLabel::TreatedAt(2)]);
        assert_eq!(d.outcomes()[(2, 1)], 6.5);
        assert_eq!(d.unit_ids(), &["a", "b", "c"]);
    }

    #[test]
    fn missing_row_names_the_cell() {
        let text = MINIMAL.replace("b,2,,4.0\n", "");
        let err = read_panel_from(text.as_bytes(), &ColumnSchema::default()).unwrap_err();
        assert_eq!(err.to_string(), "unbalanced panel: no row for unit `b` at period 2");
    }

    #[test]
    fn parse_error_reports_row() {
        let text = MINIMAL.replace("3.0", "three");
        match read_panel_from(text.as_bytes(), &ColumnSchema::default()).unwrap_err() {
            IngestError::Parse { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (4, "y", "three"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn duplicate_and_label_errors() {
        let dup = format!("{MINIMAL}a,2,0,9\n");
        assert!(matches!(
            read_panel_from(dup.as_bytes(), &ColumnSchema::default()),
            Err(IngestError::Duplicate { row: 8, .. })
        ));
        let first = MINIMAL.replace("c,1,2", "c,1,1").replace("c,2,2", "c,2,1");
        let err = read_panel_from(first.as_bytes(), &ColumnSchema::default()).unwrap_err();
        assert!(err.is_validation(), "{err}");
        let unseen = MINIMAL.replace("c,1,2", "c,1,7").replace("c,2,2", "c,2,7");
        let err = read_panel_from(unseen.as_bytes(), &ColumnSchema::default()).unwrap_err();
        assert!(matches!(err, IngestError::GroupNotObserved { .. }));
    }

    #[test]
    fn missing_covariate_column_is_named() {
        let schema = ColumnSchema { covariates: vec!["x1".into()], ..ColumnSchema::default() };
        let err = read_panel_from(MINIMAL.as_bytes(), &schema).unwrap_err();
        assert_eq!(err.to_string(), "missing column `x1`");
    }

    #[test]
    fn years_are_reindexed() {
        let text = "unit,time,group,y\na,2001,0,1\na,2000,0,1\nb,2000,2001,1\nb,2001,2001,2\n";
        let d = read_panel_from(text.as_bytes(), &ColumnSchema::default()).unwrap();
        assert_eq!(d.period_labels(), &[2000.0, 2001.0]);
        assert_eq!(d.groups()[1], GroupLabel::TreatedAt(2));
    }

    #[test]
    fn factor_file_aligns_by_label() {
        let text = "year,oil\n2002,3\n2000,1\n2001,2\n1999,0\n";
        let f = read_observed_factors_from(text.as_bytes(), &[2000.0, 2001.0, 2002.0]).unwrap();
        assert_eq!(f, vec![ObservedFactor::Custom { name: "oil".into(), values: vec![1.0, 2.0, 3.0] }]);
        let short = "year,oil\n2000,1\n";
        assert!(read_observed_factors_from(short.as_bytes(), &[2000.0, 2001.0]).is_err());
    }
}
