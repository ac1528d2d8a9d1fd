//! Datasets, descriptor conditions and the subgroups they select.

mod load;
mod mask;
mod synthetic;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use load::{load_csv, read_csv, write_csv, SchemaConfig};
pub use mask::RowMask;
pub use synthetic::{flip_noise, generate_synthetic, SYNTHETIC_ANGLES_DEG};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("column `{column}` row {row}: `{value}` is not a number")]
    NotNumeric { column: String, row: usize, value: String },
    #[error("column `{column}` row {row}: `{value}` is not a binary value")]
    NotBinary { column: String, row: usize, value: String },
    #[error("target column `{column}` has a missing value at row {row}")]
    MissingTarget { column: String, row: usize },
    #[error("target column `{0}` must be numeric")]
    NonNumericTarget(String),
    #[error("no target columns configured")]
    NoTargets,
    #[error("the file has no data rows")]
    EmptyFile,
    #[error("column `{column}` has {got} values, expected {expected}")]
    ColumnLength { column: String, got: usize, expected: usize },
    #[error("invalid intention: {0}")]
    InvalidIntention(String),
    #[error("condition on `{attribute}` does not match its kind {kind:?}")]
    KindMismatch { attribute: String, kind: AttributeKind },
    #[error("attribute index {0} is out of range")]
    AttributeOutOfRange(usize),
    #[error("attribute `{0}` is not a descriptor")]
    NotDescriptor(String),
    #[error("row index {index} out of range for {n} rows")]
    RowOutOfRange { index: usize, n: usize },
    #[error("extension indices must be strictly increasing")]
    UnsortedExtension,
    #[error("subgroup needs at least {needed} rows, has {got}")]
    TooSmall { needed: usize, got: usize },
    #[error("direction must be a unit vector (norm {0})")]
    NotUnit(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("schema config: {0}")]
    Config(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Numeric,
    Categorical,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeRole {
    Descriptor,
    Target,
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub kind: AttributeKind,
    pub role: AttributeRole,
}

/// Storage for one non-target column. Binary columns are categorical with
/// the fixed levels `["0", "1"]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Categorical { levels: Vec<String>, codes: Vec<Option<u32>> },
    /// Target columns live in the target matrix; this records which column.
    Target(usize),
}

impl Column {
    fn len(&self) -> Option<usize> {
        match self {
            Column::Numeric(v) => Some(v.len()),
            Column::Categorical { codes, .. } => Some(codes.len()),
            Column::Target(_) => None,
        }
    }
}

pub(crate) const BINARY_LEVELS: [&str; 2] = ["0", "1"];

/// Descriptor columns plus an `n × d_y` matrix of real-valued targets.
/// Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct Dataset {
    schema: Vec<AttributeSchema>,
    columns: Vec<Column>,
    #[serde(with = "crate::serde_la::rows")]
    targets: DMatrix<f64>,
}

#[derive(Deserialize)]
struct RawDataset {
    schema: Vec<AttributeSchema>,
    columns: Vec<Column>,
    #[serde(with = "crate::serde_la::rows")]
    targets: DMatrix<f64>,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = DataError;

    fn try_from(raw: RawDataset) -> Result<Self, DataError> {
        Dataset::new(raw.schema, raw.columns, raw.targets)
    }
}

impl Dataset {
    /// Assembles a dataset, checking the schema/column invariants.
    pub fn new(
        schema: Vec<AttributeSchema>,
        columns: Vec<Column>,
        targets: DMatrix<f64>,
    ) -> Result<Self, DataError> {
        let n = targets.nrows();
        if schema.len() != columns.len() {
            return Err(DataError::Dimension { expected: schema.len(), got: columns.len() });
        }
        let mut names = std::collections::BTreeSet::new();
        let mut target_cols = 0;
        for (attr, col) in schema.iter().zip(&columns) {
            if !names.insert(attr.name.as_str()) {
                return Err(DataError::DuplicateColumn(attr.name.clone()));
            }
            match (attr.role, col) {
                (AttributeRole::Target, Column::Target(j)) => {
                    if attr.kind != AttributeKind::Numeric {
                        return Err(DataError::NonNumericTarget(attr.name.clone()));
                    }
                    if *j != target_cols {
                        return Err(DataError::Dimension { expected: target_cols, got: *j });
                    }
                    target_cols += 1;
                }
                (AttributeRole::Target, _) | (_, Column::Target(_)) => {
                    return Err(DataError::NonNumericTarget(attr.name.clone()));
                }
                (_, Column::Numeric(_)) if attr.kind != AttributeKind::Numeric => {
                    return Err(DataError::KindMismatch { attribute: attr.name.clone(), kind: attr.kind });
                }
                (_, Column::Categorical { .. }) if attr.kind == AttributeKind::Numeric => {
                    return Err(DataError::KindMismatch { attribute: attr.name.clone(), kind: attr.kind });
                }
                _ => {}
            }
            if let Some(len) = col.len() {
                if len != n {
                    return Err(DataError::ColumnLength { column: attr.name.clone(), got: len, expected: n });
                }
            }
            if let Column::Categorical { levels, codes } = col {
                if codes.iter().flatten().any(|&c| c as usize >= levels.len()) {
                    return Err(DataError::KindMismatch { attribute: attr.name.clone(), kind: attr.kind });
                }
            }
        }
        if target_cols == 0 {
            return Err(DataError::NoTargets);
        }
        if target_cols != targets.ncols() {
            return Err(DataError::Dimension { expected: targets.ncols(), got: target_cols });
        }
        if n == 0 {
            return Err(DataError::EmptyFile);
        }
        if let Some(pos) = targets.iter().position(|x| !x.is_finite()) {
            let (row, col) = (pos % n, pos / n);
            let name = schema
                .iter()
                .zip(&columns)
                .find(|(_, c)| matches!(c, Column::Target(j) if *j == col))
                .map(|(a, _)| a.name.clone())
                .unwrap_or_default();
            return Err(DataError::MissingTarget { column: name, row });
        }
        Ok(Self { schema, columns, targets })
    }

    pub fn n(&self) -> usize {
        self.targets.nrows()
    }

    pub fn target_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn schema(&self) -> &[AttributeSchema] {
        &self.schema
    }

    pub fn column(&self, attribute: usize) -> &Column {
        &self.columns[attribute]
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn target_row(&self, i: usize) -> DVector<f64> {
        self.targets.row(i).transpose()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|a| a.name == name)
    }

    pub fn descriptor_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.schema
            .iter()
            .enumerate()
            .filter(|(_, a)| a.role == AttributeRole::Descriptor)
            .map(|(j, _)| j)
    }

    pub fn target_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.target_dim()];
        for (attr, col) in self.schema.iter().zip(&self.columns) {
            if let Column::Target(j) = col {
                names[*j] = attr.name.clone();
            }
        }
        names
    }

    /// Number of descriptor attributes (`d_x`).
    pub fn descriptor_dim(&self) -> usize {
        self.descriptor_indices().count()
    }

    /// Checks that every condition refers to a descriptor of matching kind.
    pub fn validate_intention(&self, intention: &Intention) -> Result<(), DataError> {
        for c in intention.conditions() {
            let attr = self
                .schema
                .get(c.attribute)
                .ok_or(DataError::AttributeOutOfRange(c.attribute))?;
            if attr.role != AttributeRole::Descriptor {
                return Err(DataError::NotDescriptor(attr.name.clone()));
            }
            let ok = matches!(
                (&c.predicate, attr.kind),
                (Predicate::Le(_) | Predicate::Ge(_), AttributeKind::Numeric)
                    | (Predicate::Eq(_), AttributeKind::Categorical | AttributeKind::Binary)
            );
            if !ok {
                return Err(DataError::KindMismatch { attribute: attr.name.clone(), kind: attr.kind });
            }
        }
        Ok(())
    }

    /// Rows satisfying a single condition. Missing values never satisfy it.
    pub fn condition_mask(&self, condition: &Condition) -> RowMask {
        let n = self.n();
        let mut mask = RowMask::empty(n);
        match (&self.columns[condition.attribute], &condition.predicate) {
            (Column::Numeric(values), Predicate::Le(v)) => {
                for (i, x) in values.iter().enumerate() {
                    if matches!(x, Some(x) if x <= v) {
                        mask.insert(i);
                    }
                }
            }
            (Column::Numeric(values), Predicate::Ge(v)) => {
                for (i, x) in values.iter().enumerate() {
                    if matches!(x, Some(x) if x >= v) {
                        mask.insert(i);
                    }
                }
            }
            (Column::Categorical { levels, codes }, Predicate::Eq(label)) => {
                if let Some(code) = levels.iter().position(|l| l == label) {
                    for (i, c) in codes.iter().enumerate() {
                        if *c == Some(code as u32) {
                            mask.insert(i);
                        }
                    }
                }
            }
            _ => {}
        }
        mask
    }

    pub fn intention_mask(&self, intention: &Intention) -> Result<RowMask, DataError> {
        self.validate_intention(intention)?;
        let mut mask = RowMask::full(self.n());
        for c in intention.conditions() {
            mask.intersect_with(&self.condition_mask(c));
        }
        Ok(mask)
    }

    /// The extension of an intention: rows satisfying every condition.
    pub fn evaluate_intention(&self, intention: &Intention) -> Result<Extension, DataError> {
        Ok(self.intention_mask(intention)?.to_extension())
    }

    /// Arithmetic mean of the target rows in `ext`.
    pub fn subgroup_mean(&self, ext: &Extension) -> Result<DVector<f64>, DataError> {
        self.check_extension(ext, 1)?;
        let mut sum = DVector::zeros(self.target_dim());
        for &i in ext.indices() {
            for j in 0..self.target_dim() {
                sum[j] += self.targets[(i, j)];
            }
        }
        Ok(sum / ext.len() as f64)
    }

    /// Population scatter matrix `Σ (y - ȳ)(y - ȳ)' / |I|` of the subgroup
    /// together with its mean.
    pub fn subgroup_scatter(&self, ext: &Extension) -> Result<(DVector<f64>, DMatrix<f64>), DataError> {
        let mean = self.subgroup_mean(ext)?;
        let d = self.target_dim();
        let mut scatter = DMatrix::zeros(d, d);
        for &i in ext.indices() {
            let centered = self.target_row(i) - &mean;
            scatter.ger(1.0, &centered, &centered, 1.0);
        }
        scatter /= ext.len() as f64;
        Ok((mean, scatter))
    }

    /// Mean squared projection of the centred subgroup rows onto `w`.
    pub fn subgroup_spread(&self, ext: &Extension, w: &DVector<f64>) -> Result<f64, DataError> {
        self.check_extension(ext, 2)?;
        if w.len() != self.target_dim() {
            return Err(DataError::Dimension { expected: self.target_dim(), got: w.len() });
        }
        if !crate::linalg::is_unit(w, 1e-12) {
            return Err(DataError::NotUnit(w.norm()));
        }
        let mean = self.subgroup_mean(ext)?;
        let centre = mean.dot(w);
        let sum: f64 = ext
            .indices()
            .iter()
            .map(|&i| {
                let p = self.targets.row(i).transpose().dot(w) - centre;
                p * p
            })
            .sum();
        Ok(sum / ext.len() as f64)
    }

    /// Empirical mean and population covariance of all target rows.
    pub fn target_moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let all = Extension::all(self.n());
        self.subgroup_scatter(&all).expect("dataset has at least one row")
    }

    fn check_extension(&self, ext: &Extension, min: usize) -> Result<(), DataError> {
        if ext.len() < min {
            return Err(DataError::TooSmall { needed: min, got: ext.len() });
        }
        if let Some(&last) = ext.indices().last() {
            if last >= self.n() {
                return Err(DataError::RowOutOfRange { index: last, n: self.n() });
            }
        }
        Ok(())
    }

    /// Human-readable form of a condition, e.g. `PctIlleg >= 0.39`.
    pub fn describe_condition(&self, c: &Condition) -> String {
        let name = self.schema.get(c.attribute).map_or("?", |a| a.name.as_str());
        match &c.predicate {
            Predicate::Le(v) => format!("{name} <= {}", fmt_threshold(*v)),
            Predicate::Ge(v) => format!("{name} >= {}", fmt_threshold(*v)),
            Predicate::Eq(l) => format!("{name} = '{l}'"),
        }
    }

    pub fn describe(&self, intention: &Intention) -> String {
        if intention.is_empty() {
            return "(all rows)".to_owned();
        }
        intention
            .conditions()
            .iter()
            .map(|c| self.describe_condition(c))
            .collect::<Vec<_>>()
            .join(" AND ")
    }
}

fn fmt_threshold(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_owned()
    } else {
        s.to_owned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "value", rename_all = "lowercase")]
pub enum Predicate {
    Le(f64),
    Ge(f64),
    Eq(String),
}

impl Predicate {
    fn rank(&self) -> u8 {
        match self {
            Predicate::Ge(_) => 0,
            Predicate::Le(_) => 1,
            Predicate::Eq(_) => 2,
        }
    }
}

/// A single condition on one descriptor attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub attribute: usize,
    pub predicate: Predicate,
}

impl Condition {
    pub fn le(attribute: usize, v: f64) -> Self {
        Self { attribute, predicate: Predicate::Le(v) }
    }

    pub fn ge(attribute: usize, v: f64) -> Self {
        Self { attribute, predicate: Predicate::Ge(v) }
    }

    pub fn eq(attribute: usize, label: impl Into<String>) -> Self {
        Self { attribute, predicate: Predicate::Eq(label.into()) }
    }

    /// Stable textual key, independent of attribute names.
    pub fn encode(&self) -> String {
        match &self.predicate {
            Predicate::Le(v) => format!("{:04}<={v:?}", self.attribute),
            Predicate::Ge(v) => format!("{:04}>={v:?}", self.attribute),
            Predicate::Eq(l) => format!("{:04}=={l}", self.attribute),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.predicate {
            Predicate::Le(v) => write!(f, "#{} <= {v}", self.attribute),
            Predicate::Ge(v) => write!(f, "#{} >= {v}", self.attribute),
            Predicate::Eq(l) => write!(f, "#{} = '{l}'", self.attribute),
        }
    }
}

/// A conjunction of conditions. Conditions are kept sorted by attribute so
/// that equal conjunctions compare equal regardless of construction order.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct Intention {
    conditions: Vec<Condition>,
}

impl<'de> Deserialize<'de> for Intention {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let conditions = Vec::<Condition>::deserialize(d)?;
        Intention::new(conditions).map_err(serde::de::Error::custom)
    }
}

impl Intention {
    pub fn new(mut conditions: Vec<Condition>) -> Result<Self, DataError> {
        conditions.sort_by(|a, b| {
            a.attribute
                .cmp(&b.attribute)
                .then(a.predicate.rank().cmp(&b.predicate.rank()))
        });
        for group in conditions.chunk_by(|a, b| a.attribute == b.attribute) {
            let mut le = None;
            let mut ge = None;
            let mut eq = 0;
            for c in group {
                match &c.predicate {
                    Predicate::Le(v) => {
                        if le.replace(*v).is_some() {
                            return Err(invalid(c, "more than one <= condition"));
                        }
                    }
                    Predicate::Ge(v) => {
                        if ge.replace(*v).is_some() {
                            return Err(invalid(c, "more than one >= condition"));
                        }
                    }
                    Predicate::Eq(_) => eq += 1,
                }
                if let Predicate::Le(v) | Predicate::Ge(v) = c.predicate {
                    if !v.is_finite() {
                        return Err(invalid(c, "non-finite threshold"));
                    }
                }
            }
            if eq > 1 {
                return Err(invalid(&group[0], "more than one equality condition"));
            }
            if eq == 1 && group.len() > 1 {
                return Err(invalid(&group[0], "equality mixed with inequalities"));
            }
            if let (Some(lo), Some(hi)) = (ge, le) {
                if lo > hi {
                    return Err(invalid(&group[0], "empty interval"));
                }
            }
        }
        Ok(Self { conditions })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    /// This conjunction extended by one more condition.
    pub fn with(&self, c: Condition) -> Result<Self, DataError> {
        let mut conditions = self.conditions.clone();
        conditions.push(c);
        Self::new(conditions)
    }

    pub fn binds_attribute(&self, attribute: usize) -> bool {
        self.conditions.iter().any(|c| c.attribute == attribute)
    }

    pub fn encode(&self) -> String {
        self.conditions
            .iter()
            .map(Condition::encode)
            .collect::<Vec<_>>()
            .join("&")
    }
}

fn invalid(c: &Condition, why: &str) -> DataError {
    DataError::InvalidIntention(format!("{why} on attribute #{}", c.attribute))
}

impl fmt::Display for Intention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.conditions.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join(" AND "))
    }
}

/// Strictly increasing row indices selected by an intention.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
#[serde(transparent)]
pub struct Extension {
    indices: Vec<usize>,
}

impl<'de> Deserialize<'de> for Extension {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let indices = Vec::<usize>::deserialize(d)?;
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(serde::de::Error::custom(DataError::UnsortedExtension));
        }
        Ok(Self { indices })
    }
}

impl Extension {
    /// Validates that `indices` is strictly increasing and below `n`.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self, DataError> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::UnsortedExtension);
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(DataError::RowOutOfRange { index: last, n });
            }
        }
        Ok(Self { indices })
    }

    /// Sorts and deduplicates arbitrary row indices.
    pub fn from_unsorted(mut indices: Vec<usize>, n: usize) -> Result<Self, DataError> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices, n)
    }

    pub fn all(n: usize) -> Self {
        Self { indices: (0..n).collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn is_disjoint(&self, other: &Extension) -> bool {
        let (mut a, mut b) = (self.indices.iter().peekable(), other.indices.iter().peekable());
        while let (Some(&&x), Some(&&y)) = (a.peek(), b.peek()) {
            match x.cmp(&y) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    pub fn to_mask(&self, n: usize) -> RowMask {
        let mut m = RowMask::empty(n);
        for &i in &self.indices {
            m.insert(i);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> Dataset {
        let schema = vec![
            AttributeSchema { name: "x".into(), kind: AttributeKind::Numeric, role: AttributeRole::Descriptor },
            AttributeSchema { name: "c".into(), kind: AttributeKind::Categorical, role: AttributeRole::Descriptor },
            AttributeSchema { name: "y1".into(), kind: AttributeKind::Numeric, role: AttributeRole::Target },
            AttributeSchema { name: "y2".into(), kind: AttributeKind::Numeric, role: AttributeRole::Target },
        ];
        let columns = vec![
            Column::Numeric(vec![Some(1.0), Some(5.0), None, Some(3.0)]),
            Column::Categorical {
                levels: vec!["a".into(), "b".into()],
                codes: vec![Some(0), Some(1), Some(0), None],
            },
            Column::Target(0),
            Column::Target(1),
        ];
        let targets = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 2.0, 4.0, 1.0, 1.0, -1.0, 3.0]);
        Dataset::new(schema, columns, targets).unwrap()
    }

    #[test]
    fn empty_intention_selects_everything() {
        let ds = small();
        let ext = ds.evaluate_intention(&Intention::empty()).unwrap();
        assert_eq!(ext.indices(), &[0, 1, 2, 3]);
    }

    #[test]
    fn missing_values_fail_every_condition() {
        let ds = small();
        let ge = Intention::new(vec![Condition::ge(0, -100.0)]).unwrap();
        assert_eq!(ds.evaluate_intention(&ge).unwrap().indices(), &[0, 1, 3]);
        let eq = Intention::new(vec![Condition::eq(1, "a")]).unwrap();
        assert_eq!(ds.evaluate_intention(&eq).unwrap().indices(), &[0, 2]);
        let unknown = Intention::new(vec![Condition::eq(1, "zzz")]).unwrap();
        assert!(ds.evaluate_intention(&unknown).unwrap().is_empty());
    }

    #[test]
    fn empty_interval_is_rejected() {
        let err = Intention::new(vec![Condition::ge(0, 5.0), Condition::le(0, 3.0)]);
        assert!(matches!(err, Err(DataError::InvalidIntention(_))));
        assert!(Intention::new(vec![Condition::le(0, 5.0), Condition::le(0, 3.0)]).is_err());
        assert!(Intention::new(vec![Condition::eq(1, "a"), Condition::eq(1, "b")]).is_err());
        assert!(Intention::new(vec![Condition::ge(0, 3.0), Condition::le(0, 3.0)]).is_ok());
    }

    #[test]
    fn kind_mismatch_and_targets_are_rejected() {
        let ds = small();
        let bad = Intention::new(vec![Condition::eq(0, "a")]).unwrap();
        assert!(matches!(ds.evaluate_intention(&bad), Err(DataError::KindMismatch { .. })));
        let on_target = Intention::new(vec![Condition::le(2, 0.0)]).unwrap();
        assert!(matches!(ds.evaluate_intention(&on_target), Err(DataError::NotDescriptor(_))));
    }

    #[test]
    fn mean_of_two_rows() {
        let ds = small();
        let ext = Extension::new(vec![0, 1], 4).unwrap();
        let m = ds.subgroup_mean(&ext).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 2.0]);
        let single = Extension::new(vec![3], 4).unwrap();
        assert_eq!(ds.subgroup_mean(&single).unwrap().as_slice(), &[-1.0, 3.0]);
        assert!(matches!(ds.subgroup_mean(&Extension::default()), Err(DataError::TooSmall { .. })));
    }

    #[test]
    fn spread_hand_cases() {
        let ds = small();
        // rows 0 and 1 along y1: values 0 and 2, population variance 1
        let ext = Extension::new(vec![0, 1], 4).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        assert!((ds.subgroup_spread(&ext, &e1).unwrap() - 1.0).abs() < 1e-15);
        let not_unit = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(ds.subgroup_spread(&ext, &not_unit), Err(DataError::NotUnit(_))));
        let single = Extension::new(vec![0], 4).unwrap();
        assert!(ds.subgroup_spread(&single, &e1).is_err());
    }

    #[test]
    fn identical_rows_have_zero_spread() {
        let schema = vec![AttributeSchema { name: "y".into(), kind: AttributeKind::Numeric, role: AttributeRole::Target }];
        let targets = DMatrix::from_row_slice(3, 1, &[2.5, 2.5, 2.5]);
        let ds = Dataset::new(schema, vec![Column::Target(0)], targets).unwrap();
        let w = DVector::from_vec(vec![1.0]);
        assert_eq!(ds.subgroup_spread(&Extension::all(3), &w).unwrap(), 0.0);
    }

    #[test]
    fn extension_validation() {
        assert!(Extension::new(vec![1, 1], 3).is_err());
        assert!(Extension::new(vec![0, 3], 3).is_err());
        let e = Extension::from_unsorted(vec![2, 0, 2], 3).unwrap();
        assert_eq!(e.indices(), &[0, 2]);
        assert!(e.is_disjoint(&Extension::new(vec![1], 3).unwrap()));
        assert!(!e.is_disjoint(&Extension::new(vec![2], 3).unwrap()));
    }

    fn random_dataset(rows: &[(f64, f64, f64)]) -> Dataset {
        let schema = vec![
            AttributeSchema { name: "x".into(), kind: AttributeKind::Numeric, role: AttributeRole::Descriptor },
            AttributeSchema { name: "y1".into(), kind: AttributeKind::Numeric, role: AttributeRole::Target },
            AttributeSchema { name: "y2".into(), kind: AttributeKind::Numeric, role: AttributeRole::Target },
        ];
        let x = rows.iter().map(|r| Some(r.0)).collect();
        let mut t = Vec::new();
        for r in rows {
            t.push(r.1);
            t.push(r.2);
        }
        let targets = DMatrix::from_row_slice(rows.len(), 2, &t);
        Dataset::new(schema, vec![Column::Numeric(x), Column::Target(0), Column::Target(1)], targets).unwrap()
    }

    proptest! {
        #[test]
        fn adding_a_condition_never_enlarges(
            rows in prop::collection::vec((-5.0f64..5.0, -3.0f64..3.0, -3.0f64..3.0), 3..40),
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let ds = random_dataset(&rows);
            let one = Intention::new(vec![Condition::ge(0, a.min(b))]).unwrap();
            let two = one.with(Condition::le(0, a.max(b))).unwrap();
            let e1 = ds.evaluate_intention(&one).unwrap();
            let e2 = ds.evaluate_intention(&two).unwrap();
            prop_assert!(e2.indices().iter().all(|i| e1.contains(*i)));
        }

        #[test]
        fn spread_is_even_in_direction_and_matches_summation(
            rows in prop::collection::vec((0.0f64..1.0, -3.0f64..3.0, -3.0f64..3.0), 2..30),
            angle in 0.0f64..std::f64::consts::TAU,
        ) {
            let ds = random_dataset(&rows);
            let ext = Extension::all(rows.len());
            let w = DVector::from_vec(vec![angle.cos(), angle.sin()]);
            let v = ds.subgroup_spread(&ext, &w).unwrap();
            let v_neg = ds.subgroup_spread(&ext, &(-&w)).unwrap();
            prop_assert!((v - v_neg).abs() <= 1e-12 * (1.0 + v));
            // brute-force oracle
            let k = rows.len() as f64;
            let mean = (rows.iter().map(|r| r.1).sum::<f64>() / k, rows.iter().map(|r| r.2).sum::<f64>() / k);
            let brute = rows.iter().map(|r| {
                let p = (r.1 - mean.0) * w[0] + (r.2 - mean.1) * w[1];
                p * p
            }).sum::<f64>() / k;
            prop_assert!((v - brute).abs() <= 1e-10 * (1.0 + brute));
        }

        #[test]
        fn statistics_ignore_row_order(
            rows in prop::collection::vec((0.0f64..1.0, -3.0f64..3.0, -3.0f64..3.0), 2..30),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let ds = random_dataset(&rows);
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let other = random_dataset(&shuffled);
            let all = Extension::all(rows.len());
            let (m1, m2) = (ds.subgroup_mean(&all).unwrap(), other.subgroup_mean(&all).unwrap());
            prop_assert!((m1 - m2).amax() < 1e-12);
            let w = DVector::from_vec(vec![0.6, 0.8]);
            let (v1, v2) = (ds.subgroup_spread(&all, &w).unwrap(), other.subgroup_spread(&all, &w).unwrap());
            prop_assert!((v1 - v2).abs() < 1e-12 * (1.0 + v1));
        }
    }
}
