//! Dataset container, variable roles and listwise deletion.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// One numeric column with per-cell missingness flags.
///
/// Missing cells hold `0.0` as a placeholder; readers must consult `missing`.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl Column {
    pub fn new(values: Vec<f64>, missing: Vec<bool>) -> Result<Self> {
        if values.len() != missing.len() {
            return Err(Error::Dimension("values and missing flags differ in length".into()));
        }
        let mut values = values;
        for (v, &m) in values.iter_mut().zip(&missing) {
            if m {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::NonFinite("column value".into()));
            }
        }
        Ok(Self { values, missing })
    }

    pub fn complete(values: Vec<f64>) -> Result<Self> {
        let missing = vec![false; values.len()];
        Self::new(values, missing)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, row: usize) -> Option<f64> {
        (!self.missing[row]).then(|| self.values[row])
    }

    pub fn is_missing(&self, row: usize) -> bool {
        self.missing[row]
    }

    pub fn n_missing(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }
}

/// Rectangular table of role-tagged numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    column_names: Vec<String>,
    columns: Vec<Column>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(column_names: Vec<String>, columns: Vec<Column>) -> Result<Self> {
        if column_names.len() != columns.len() {
            return Err(Error::Dimension("one name per column required".into()));
        }
        let n_rows = columns.first().map_or(0, Column::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::Dimension("columns of unequal length".into()));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{name}`")));
            }
        }
        Ok(Self { column_names, columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(format!("unknown column `{name}`")))
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        Ok(&self.columns[self.column_index(name)?])
    }

    /// Values of `name` at `rows`; fails if any requested cell is missing.
    pub fn values(&self, name: &str, rows: &[usize]) -> Result<Vec<f64>> {
        let col = self.column(name)?;
        rows.iter()
            .map(|&r| {
                col.value(r).ok_or_else(|| {
                    Error::Schema(format!("column `{name}` is missing at row {r}"))
                })
            })
            .collect()
    }

    /// Matrix of the named columns at `rows` (no intercept).
    pub fn matrix(&self, names: &[String], rows: &[usize]) -> Result<Matrix> {
        let cols = names
            .iter()
            .map(|n| self.values(n, rows))
            .collect::<Result<Vec<_>>>()?;
        if cols.is_empty() {
            return Ok(Matrix::zeros(rows.len(), 0));
        }
        Matrix::from_columns(&cols)
    }

    /// New dataset holding `rows` in the given order (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                values: rows.iter().map(|&r| c.values[r]).collect(),
                missing: rows.iter().map(|&r| c.missing[r]).collect(),
            })
            .collect();
        Dataset { column_names: self.column_names.clone(), columns, n_rows: rows.len() }
    }

    /// Writes the table as CSV; missing cells become `missing_token`.
    pub fn write_csv<W: Write>(&self, writer: W, missing_token: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.column_names)?;
        for r in 0..self.n_rows {
            let record: Vec<String> = self
                .columns
                .iter()
                .map(|c| match c.value(r) {
                    Some(v) => format!("{v}"),
                    None => missing_token.to_string(),
                })
                .collect();
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, missing_token: &str) -> Result<()> {
        let file = fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file), missing_token)
    }
}

/// Which mediator columns enter an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediatorSet {
    /// First block only.
    M1,
    /// Both blocks.
    #[serde(rename = "m1_plus_m2")]
    M1PlusM2,
}

impl MediatorSet {
    pub fn label(self) -> &'static str {
        match self {
            MediatorSet::M1 => "M1",
            MediatorSet::M1PlusM2 => "M1+M2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SingleColumn {
    column: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ColumnList {
    #[serde(default)]
    columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputOptions {
    #[serde(default)]
    missing_token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoleFile {
    group: SingleColumn,
    outcome: SingleColumn,
    #[serde(default)]
    controls: ColumnList,
    #[serde(default)]
    mediators_m1: ColumnList,
    #[serde(default)]
    mediators_m2: ColumnList,
    treatment: Option<SingleColumn>,
    input: Option<InputOptions>,
}

/// Assignment of dataset columns to analysis roles.
///
/// The group column is coded 1 for the group whose mean is the minuend of
/// the reported gap ("male") and 0 for the other ("female").
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleMap {
    pub group: String,
    pub outcome: String,
    pub controls: Vec<String>,
    pub mediators_m1: Vec<String>,
    pub mediators_m2: Vec<String>,
    /// Randomized intervention indicator for the treatment-effect analysis.
    pub treatment: Option<String>,
    pub missing_token: String,
}

impl RoleMap {
    pub fn new(group: &str, outcome: &str) -> Self {
        Self {
            group: group.into(),
            outcome: outcome.into(),
            controls: Vec::new(),
            mediators_m1: Vec::new(),
            mediators_m2: Vec::new(),
            treatment: None,
            missing_token: String::new(),
        }
    }

    pub fn with_controls(mut self, cols: &[&str]) -> Self {
        self.controls = cols.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_mediators(mut self, m1: &[&str], m2: &[&str]) -> Self {
        self.mediators_m1 = m1.iter().map(|s| s.to_string()).collect();
        self.mediators_m2 = m2.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_treatment(mut self, col: &str) -> Self {
        self.treatment = Some(col.into());
        self
    }

    /// Parses the sectioned plain-text (TOML) role file.
    ///
    /// ```toml
    /// [group]
    /// column = "male"
    /// [outcome]
    /// column = "wage_category"
    /// [controls]
    /// columns = ["age", "siblings"]
    /// [mediators_m1]
    /// columns = ["program"]
    /// [mediators_m2]
    /// columns = ["family_plans"]
    /// [input]
    /// missing_token = "NA"
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: RoleFile = toml::from_str(text)?;
        let roles = RoleMap {
            group: file.group.column,
            outcome: file.outcome.column,
            controls: file.controls.columns,
            mediators_m1: file.mediators_m1.columns,
            mediators_m2: file.mediators_m2.columns,
            treatment: file.treatment.map(|t| t.column),
            missing_token: file.input.map(|i| i.missing_token).unwrap_or_default(),
        };
        roles.validate()?;
        Ok(roles)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        let file = RoleFile {
            group: SingleColumn { column: self.group.clone() },
            outcome: SingleColumn { column: self.outcome.clone() },
            controls: ColumnList { columns: self.controls.clone() },
            mediators_m1: ColumnList { columns: self.mediators_m1.clone() },
            mediators_m2: ColumnList { columns: self.mediators_m2.clone() },
            treatment: self.treatment.clone().map(|column| SingleColumn { column }),
            input: Some(InputOptions { missing_token: self.missing_token.clone() }),
        };
        toml::to_string(&file).expect("role map serializes")
    }

    /// Role sets must be pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        let mut seen: HashSet<&str> = HashSet::new();
        let singles = [Some(&self.group), Some(&self.outcome), self.treatment.as_ref()];
        let all = singles
            .into_iter()
            .flatten()
            .chain(&self.controls)
            .chain(&self.mediators_m1)
            .chain(&self.mediators_m2);
        for name in all {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("column `{name}` assigned to more than one role")));
            }
        }
        Ok(())
    }

    pub fn mediators(&self, set: MediatorSet) -> Vec<String> {
        match set {
            MediatorSet::M1 => self.mediators_m1.clone(),
            MediatorSet::M1PlusM2 => {
                self.mediators_m1.iter().chain(&self.mediators_m2).cloned().collect()
            }
        }
    }

    /// Every role-mapped column name.
    pub fn all_columns(&self) -> Vec<String> {
        let mut out = vec![self.group.clone(), self.outcome.clone()];
        out.extend(self.treatment.iter().cloned());
        out.extend(self.controls.iter().cloned());
        out.extend(self.mediators(MediatorSet::M1PlusM2));
        out
    }

    fn binary_columns(&self) -> Vec<&str> {
        let mut out = vec![self.group.as_str()];
        out.extend(self.treatment.as_deref());
        out
    }
}

/// Summary of what `load_csv` read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadReport {
    pub n_rows: usize,
    pub missing_per_column: Vec<(String, usize)>,
}

/// Reads the role-mapped columns of a CSV file.
pub fn load_csv(path: impl AsRef<Path>, roles: &RoleMap) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_csv(text.as_bytes(), roles).map(|(d, _)| d)
}

/// Parses CSV from any reader. Columns not named in `roles` are ignored.
pub fn parse_csv<R: std::io::Read>(reader: R, roles: &RoleMap) -> Result<(Dataset, LoadReport)> {
    roles.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let wanted = roles.all_columns();
    let positions = wanted
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("header lacks role column `{name}`")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut values: Vec<Vec<f64>> = vec![Vec::new(); wanted.len()];
    let mut missing: Vec<Vec<bool>> = vec![Vec::new(); wanted.len()];
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        for (k, &pos) in positions.iter().enumerate() {
            let cell = record.get(pos).unwrap_or("");
            if cell == roles.missing_token {
                values[k].push(0.0);
                missing[k].push(true);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                column: wanted[k].clone(),
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: wanted[k].clone(),
                    message: format!("`{cell}` is not finite"),
                });
            }
            values[k].push(v);
            missing[k].push(false);
        }
    }

    for bin in roles.binary_columns() {
        let k = wanted.iter().position(|w| w == bin).expect("binary role is wanted");
        for (r, (&v, &m)) in values[k].iter().zip(&missing[k]).enumerate() {
            if !m && v != 0.0 && v != 1.0 {
                return Err(Error::Schema(format!(
                    "binary column `{bin}` has value {v} at line {}",
                    r + 2
                )));
            }
        }
    }

    let columns = values
        .into_iter()
        .zip(missing)
        .map(|(v, m)| Column::new(v, m))
        .collect::<Result<Vec<_>>>()?;
    let data = Dataset::new(wanted.clone(), columns)?;
    let report = LoadReport {
        n_rows: data.n_rows(),
        missing_per_column: wanted
            .iter()
            .zip(&data.columns)
            .map(|(n, c)| (n.clone(), c.n_missing()))
            .collect(),
    };
    Ok((data, report))
}

/// Rows kept for one analysis after listwise deletion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisSample {
    pub kept_row_indices: Vec<usize>,
    pub n_dropped_missing: usize,
}

impl AnalysisSample {
    pub fn n_kept(&self) -> usize {
        self.kept_row_indices.len()
    }
}

/// Keeps rows with no missing cell among `used_columns`, in original order.
pub fn complete_cases(data: &Dataset, used_columns: &[String]) -> Result<AnalysisSample> {
    let cols = used_columns
        .iter()
        .map(|n| data.column(n))
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<usize> = (0..data.n_rows())
        .filter(|&r| cols.iter().all(|c| !c.is_missing(r)))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptySample("no complete cases among the used columns".into()));
    }
    Ok(AnalysisSample { n_dropped_missing: data.n_rows() - kept.len(), kept_row_indices: kept })
}

/// Splits `rows` by the binary group column into (group 0, group 1).
pub(crate) fn split_by_group(data: &Dataset, group: &str, rows: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let g = data.column(group)?;
    let mut zero = Vec::new();
    let mut one = Vec::new();
    for &r in rows {
        match g.value(r) {
            Some(v) if v == 1.0 => one.push(r),
            Some(v) if v == 0.0 => zero.push(r),
            Some(v) => {
                return Err(Error::Schema(format!("group column `{group}` has non-binary value {v}")))
            }
            None => return Err(Error::Schema(format!("group column `{group}` missing at row {r}"))),
        }
    }
    Ok((zero, one))
}
