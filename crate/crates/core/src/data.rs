//! Role-annotated columnar datasets and fold assignment.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Role of a column in the temporally ordered data structure.
///
/// `TimeVarying(t)` covariates are measured before treatment `Treatment(t)`;
/// baseline covariates precede everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ColumnRole {
    Baseline,
    TimeVarying(usize),
    Treatment(usize),
    Mediator,
    Outcome,
    SamplingIndicator,
}

impl ColumnRole {
    /// Parses `baseline`, `time_varying:<t>`, `treatment:<t>`, `treatment`
    /// (time 1), `mediator`, `outcome` or `sampling`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, t) = match s.split_once(':') {
            Some((k, t)) => {
                let t: usize = t
                    .trim()
                    .parse()
                    .map_err(|_| Error::schema(format!("bad time index in role `{s}`")))?;
                (k.trim(), Some(t))
            }
            None => (s.trim(), None),
        };
        let role = match (kind, t) {
            ("baseline", None) => ColumnRole::Baseline,
            ("time_varying", Some(t)) => ColumnRole::TimeVarying(t),
            ("treatment", None) => ColumnRole::Treatment(1),
            ("treatment", Some(t)) if t >= 1 => ColumnRole::Treatment(t),
            ("mediator", None) => ColumnRole::Mediator,
            ("outcome", None) => ColumnRole::Outcome,
            ("sampling", None) | ("sampling_indicator", None) => ColumnRole::SamplingIndicator,
            _ => return Err(Error::schema(format!("unknown column role `{s}`"))),
        };
        Ok(role)
    }

    pub fn label(&self) -> String {
        match self {
            ColumnRole::Baseline => "baseline".into(),
            ColumnRole::TimeVarying(t) => format!("time_varying:{t}"),
            ColumnRole::Treatment(t) => format!("treatment:{t}"),
            ColumnRole::Mediator => "mediator".into(),
            ColumnRole::Outcome => "outcome".into(),
            ColumnRole::SamplingIndicator => "sampling".into(),
        }
    }
}

/// Ordered `name → role` schema.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schema {
    entries: Vec<(String, ColumnRole)>,
}

impl Schema {
    pub fn new() -> Self {
        Schema::default()
    }

    pub fn with(mut self, name: &str, role: ColumnRole) -> Self {
        self.entries.push((name.to_string(), role));
        self
    }

    pub fn push(&mut self, name: &str, role: ColumnRole) {
        self.entries.push((name.to_string(), role));
    }

    pub fn entries(&self) -> &[(String, ColumnRole)] {
        &self.entries
    }

    pub fn role(&self, name: &str) -> Option<ColumnRole> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, r)| *r)
    }

    pub fn names_with(&self, pred: impl Fn(ColumnRole) -> bool) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(_, r)| pred(*r))
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn outcome(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, r)| *r == ColumnRole::Outcome)
            .map(|(n, _)| n.as_str())
    }

    pub fn treatment(&self, t: usize) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, r)| *r == ColumnRole::Treatment(t))
            .map(|(n, _)| n.as_str())
    }

    pub fn mediator(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, r)| *r == ColumnRole::Mediator)
            .map(|(n, _)| n.as_str())
    }

    pub fn sampling_indicator(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, r)| *r == ColumnRole::SamplingIndicator)
            .map(|(n, _)| n.as_str())
    }

    /// Number of treatment time points.
    pub fn horizon(&self) -> usize {
        self.entries
            .iter()
            .filter(|(_, r)| matches!(r, ColumnRole::Treatment(_)))
            .count()
    }

    /// Columns observed before treatment `t` is assigned: baseline covariates,
    /// time-varying covariates up to `t` and earlier treatments.
    pub fn history_before_treatment(&self, t: usize) -> Vec<String> {
        self.names_with(|r| match r {
            ColumnRole::Baseline => true,
            ColumnRole::TimeVarying(k) => k <= t,
            ColumnRole::Treatment(k) => k < t,
            _ => false,
        })
    }

    /// History through treatment `t` inclusive.
    pub fn history_through_treatment(&self, t: usize) -> Vec<String> {
        self.names_with(|r| match r {
            ColumnRole::Baseline => true,
            ColumnRole::TimeVarying(k) => k <= t,
            ColumnRole::Treatment(k) => k <= t,
            _ => false,
        })
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (name, _) in &self.entries {
            if !seen.insert(name.as_str()) {
                return Err(Error::schema(format!("duplicate column `{name}`")));
            }
        }
        let outcomes = self
            .entries
            .iter()
            .filter(|(_, r)| *r == ColumnRole::Outcome)
            .count();
        if outcomes != 1 {
            return Err(Error::schema(format!(
                "exactly one outcome column required, found {outcomes}"
            )));
        }
        let sampling = self
            .entries
            .iter()
            .filter(|(_, r)| *r == ColumnRole::SamplingIndicator)
            .count();
        if sampling > 1 {
            return Err(Error::schema("at most one sampling-indicator column allowed"));
        }
        let mut times: Vec<usize> = self
            .entries
            .iter()
            .filter_map(|(_, r)| match r {
                ColumnRole::Treatment(t) => Some(*t),
                _ => None,
            })
            .collect();
        times.sort_unstable();
        for (i, t) in times.iter().enumerate() {
            if *t != i + 1 {
                return Err(Error::schema(
                    "treatment time indices must form the contiguous range 1..T",
                ));
            }
        }
        Ok(())
    }
}

/// A single named column with an optional validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub role: ColumnRole,
    pub values: Vec<f64>,
    /// `Some(mask)` for phase-two columns with missing cells (`false` = missing).
    pub valid: Option<Vec<bool>>,
}

impl Column {
    pub fn new(name: &str, role: ColumnRole, values: Vec<f64>) -> Self {
        Column {
            name: name.to_string(),
            role,
            values,
            valid: None,
        }
    }

    /// Column whose `None` cells are missing; missing values are stored as 0
    /// and must never be read without the mask.
    pub fn with_missing(name: &str, role: ColumnRole, cells: Vec<Option<f64>>) -> Self {
        let valid: Vec<bool> = cells.iter().map(|c| c.is_some()).collect();
        let values = cells.into_iter().map(|c| c.unwrap_or(0.0)).collect();
        let valid = if valid.iter().all(|v| *v) {
            None
        } else {
            Some(valid)
        };
        Column {
            name: name.to_string(),
            role,
            values,
            valid,
        }
    }

    pub fn is_valid(&self, row: usize) -> bool {
        self.valid.as_ref().map_or(true, |m| m[row])
    }

    /// True when some cells are missing (phase-two column).
    pub fn is_phase_two(&self) -> bool {
        self.valid.is_some()
    }
}

/// Immutable validated table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    schema: Schema,
    columns: Vec<Column>,
}

impl Dataset {
    /// Validates the columns against the role invariants.
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.values.len());
        if n == 0 {
            return Err(Error::schema("dataset must have at least one row"));
        }
        let mut schema = Schema::new();
        for c in &columns {
            if c.values.len() != n || c.valid.as_ref().is_some_and(|m| m.len() != n) {
                return Err(Error::schema(format!(
                    "column `{}` has length {} but expected {n}",
                    c.name,
                    c.values.len()
                )));
            }
            schema.push(&c.name, c.role);
        }
        schema.validate()?;
        let sampling = columns
            .iter()
            .find(|c| c.role == ColumnRole::SamplingIndicator);
        if let Some(s) = sampling {
            if s.is_phase_two() {
                return Err(Error::schema("sampling indicator may not have missing values"));
            }
            if let Some(i) = s.values.iter().position(|v| *v != 0.0 && *v != 1.0) {
                return Err(Error::Parse {
                    row: i,
                    column: s.name.clone(),
                    message: "sampling indicator must be 0 or 1".into(),
                });
            }
        }
        for c in &columns {
            if let Some(mask) = &c.valid {
                if c.role == ColumnRole::SamplingIndicator {
                    continue;
                }
                for (i, ok) in mask.iter().enumerate() {
                    let gated = sampling.is_some_and(|s| s.values[i] == 0.0);
                    if !ok && !gated {
                        return Err(Error::Parse {
                            row: i,
                            column: c.name.clone(),
                            message: "missing value outside of a sampling-gated row".into(),
                        });
                    }
                }
            }
            for (i, v) in c.values.iter().enumerate() {
                if c.is_valid(i) && !v.is_finite() {
                    return Err(Error::Parse {
                        row: i,
                        column: c.name.clone(),
                        message: "non-finite value".into(),
                    });
                }
            }
        }
        Ok(Dataset { n, schema, columns })
    }

    /// Builds a dataset from complete columns in the given order.
    pub fn from_columns(cols: Vec<(&str, ColumnRole, Vec<f64>)>) -> Result<Self> {
        Dataset::new(
            cols.into_iter()
                .map(|(n, r, v)| Column::new(n, r, v))
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::schema(format!("missing column `{name}`")))
    }

    /// Raw values of a column. Missing cells of phase-two columns read as 0,
    /// callers restricted to complete rows should use [`Dataset::complete_rows`].
    pub fn values(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.column(name)?.values)
    }

    pub fn outcome(&self) -> &[f64] {
        let name = self.schema.outcome().expect("validated schema has an outcome");
        &self.column(name).expect("outcome column").values
    }

    pub fn outcome_name(&self) -> &str {
        self.schema.outcome().expect("validated schema has an outcome")
    }

    /// Sampling indicator values if the dataset is two-phase.
    pub fn sampling(&self) -> Option<&[f64]> {
        let name = self.schema.sampling_indicator()?;
        Some(&self.column(name).ok()?.values)
    }

    /// Rows where every listed column is observed.
    pub fn complete_rows(&self, names: &[String]) -> Result<Vec<usize>> {
        let cols: Vec<&Column> = names
            .iter()
            .map(|n| self.column(n))
            .collect::<Result<_>>()?;
        Ok((0..self.n)
            .filter(|&i| cols.iter().all(|c| c.is_valid(i)))
            .collect())
    }

    /// Design of raw covariate values (no intercept) for the named columns.
    /// Fails if any requested cell is missing.
    pub fn design(&self, names: &[String]) -> Result<Matrix> {
        let cols: Vec<&Column> = names
            .iter()
            .map(|n| self.column(n))
            .collect::<Result<_>>()?;
        for c in &cols {
            if let Some(mask) = &c.valid {
                if let Some(i) = mask.iter().position(|v| !v) {
                    return Err(Error::Parse {
                        row: i,
                        column: c.name.clone(),
                        message: "missing value in a column required for fitting".into(),
                    });
                }
            }
        }
        let slices: Vec<&[f64]> = cols.iter().map(|c| c.values.as_slice()).collect();
        if slices.is_empty() {
            return Matrix::from_row_major(self.n, 0, Vec::new());
        }
        Matrix::from_columns(&slices)
    }

    /// Copy with the listed columns set to constants (a counterfactual view).
    pub fn with_overrides(&self, overrides: &[(String, f64)]) -> Result<Dataset> {
        let mut out = self.clone();
        for (name, v) in overrides {
            let col = out
                .columns
                .iter_mut()
                .find(|c| &c.name == name)
                .ok_or_else(|| Error::schema(format!("missing column `{name}`")))?;
            col.values.iter_mut().for_each(|x| *x = *v);
            col.valid = None;
        }
        Ok(out)
    }

    /// Copy with one column's values replaced.
    pub fn with_column_values(&self, name: &str, values: Vec<f64>) -> Result<Dataset> {
        if values.len() != self.n {
            return Err(Error::argument("replacement column has wrong length"));
        }
        let mut out = self.clone();
        let col = out
            .columns
            .iter_mut()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::schema(format!("missing column `{name}`")))?;
        col.values = values;
        col.valid = None;
        Ok(out)
    }

    /// Row subset, preserving the schema. Masks collapse when the subset is complete.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let columns = self
            .columns
            .iter()
            .map(|c| {
                let values = rows.iter().map(|&i| c.values[i]).collect();
                let valid = c.valid.as_ref().and_then(|m| {
                    let sub: Vec<bool> = rows.iter().map(|&i| m[i]).collect();
                    if sub.iter().all(|v| *v) {
                        None
                    } else {
                        Some(sub)
                    }
                });
                Column {
                    name: c.name.clone(),
                    role: c.role,
                    values,
                    valid,
                }
            })
            .collect();
        Dataset::new(columns)
    }

    /// Reorders columns to follow `order`; every column must be listed.
    pub fn reorder(mut self, order: &[String]) -> Result<Dataset> {
        if order.len() != self.columns.len() {
            return Err(Error::schema("column order must list every column"));
        }
        let mut cols = Vec::with_capacity(order.len());
        for name in order {
            let pos = self
                .columns
                .iter()
                .position(|c| &c.name == name)
                .ok_or_else(|| Error::schema(format!("missing column `{name}`")))?;
            cols.push(self.columns.swap_remove(pos));
        }
        Dataset::new(cols)
    }
}

/// Balanced random partition of rows into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    folds: Vec<usize>,
    k: usize,
    seed: u64,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_of(&self, row: usize) -> usize {
        self.folds[row]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.folds
    }

    pub fn n(&self) -> usize {
        self.folds.len()
    }

    /// `(training rows, validation rows)` for fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut valid = Vec::new();
        for (i, &g) in self.folds.iter().enumerate() {
            if g == f {
                valid.push(i);
            } else {
                train.push(i);
            }
        }
        (train, valid)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.folds {
            s[f] += 1;
        }
        s
    }
}

/// Assigns `n` rows to `k` balanced folds, deterministically in `(n, k, seed)`.
pub fn assign_folds_n(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::argument("fold count must be at least 2"));
    }
    if k > n {
        return Err(Error::argument(format!("fold count {k} exceeds row count {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let mut folds = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        folds[row] = pos % k;
    }
    Ok(FoldAssignment { folds, k, seed })
}

pub fn assign_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    assign_folds_n(dataset.n(), k, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        Dataset::from_columns(vec![
            ("L1", ColumnRole::Baseline, vec![0.1, 0.2, 0.3]),
            ("A", ColumnRole::Treatment(1), vec![1.0, 0.0, 1.0]),
            ("Y", ColumnRole::Outcome, vec![0.0, 1.0, 1.0]),
        ])
        .unwrap()
    }

    #[test]
    fn folds_are_balanced_and_deterministic() {
        let f = assign_folds_n(10, 5, 7).unwrap();
        assert_eq!(f.sizes(), vec![2; 5]);
        let mut s = assign_folds_n(10, 3, 7).unwrap().sizes();
        s.sort_unstable();
        assert_eq!(s, vec![3, 3, 4]);
        assert_eq!(assign_folds_n(10, 3, 99).unwrap(), assign_folds_n(10, 3, 99).unwrap());
        assert!(assign_folds_n(3, 4, 0).is_err());
    }

    #[test]
    fn schema_invariants() {
        assert_eq!(small().n(), 3);
        let two_outcomes = Dataset::from_columns(vec![
            ("Y1", ColumnRole::Outcome, vec![0.0]),
            ("Y2", ColumnRole::Outcome, vec![0.0]),
        ]);
        assert!(matches!(two_outcomes, Err(Error::Schema(_))));
        let gap = Dataset::from_columns(vec![
            ("A2", ColumnRole::Treatment(2), vec![0.0]),
            ("Y", ColumnRole::Outcome, vec![0.0]),
        ]);
        assert!(gap.is_err());
        let bad_sampling = Dataset::from_columns(vec![
            ("D", ColumnRole::SamplingIndicator, vec![0.5]),
            ("Y", ColumnRole::Outcome, vec![0.0]),
        ]);
        assert!(bad_sampling.is_err());
    }

    #[test]
    fn missingness_only_on_gated_rows() {
        let ok = Dataset::new(vec![
            Column::new("D", ColumnRole::SamplingIndicator, vec![1.0, 0.0]),
            Column::with_missing("S", ColumnRole::Baseline, vec![Some(1.0), None]),
            Column::new("Y", ColumnRole::Outcome, vec![1.0, 0.0]),
        ]);
        assert!(ok.is_ok());
        let bad = Dataset::new(vec![
            Column::new("D", ColumnRole::SamplingIndicator, vec![0.0, 1.0]),
            Column::with_missing("S", ColumnRole::Baseline, vec![Some(1.0), None]),
            Column::new("Y", ColumnRole::Outcome, vec![1.0, 0.0]),
        ]);
        assert!(matches!(bad, Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn overrides_and_histories() {
        let d = small().with_overrides(&[("A".into(), 0.0)]).unwrap();
        assert_eq!(d.values("A").unwrap(), &[0.0, 0.0, 0.0]);
        let s = Schema::new()
            .with("L0", ColumnRole::Baseline)
            .with("A1", ColumnRole::Treatment(1))
            .with("L1", ColumnRole::TimeVarying(2))
            .with("A2", ColumnRole::Treatment(2))
            .with("Y", ColumnRole::Outcome);
        assert_eq!(s.history_before_treatment(1), vec!["L0".to_string()]);
        assert_eq!(s.history_before_treatment(2), vec!["L0", "A1", "L1"]);
        assert_eq!(s.history_through_treatment(2), vec!["L0", "A1", "L1", "A2"]);
        assert_eq!(ColumnRole::parse("time_varying:2").unwrap(), ColumnRole::TimeVarying(2));
        assert!(ColumnRole::parse("nonsense").is_err());
    }
}
