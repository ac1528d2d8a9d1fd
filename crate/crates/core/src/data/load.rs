//! CSV ingestion driven by a JSON schema config.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{AttributeKind, AttributeRole, AttributeSchema, Column, DataError, Dataset, BINARY_LEVELS};

/// Role and kind assignment for the columns of a CSV file.
///
/// Columns not named in `targets` or `auxiliary` become descriptors when
/// `descriptors` is empty; otherwise only the listed descriptors are kept.
/// Kinds not given in `kinds` are inferred: numeric when every present value
/// parses, binary when those numbers are all 0/1, categorical otherwise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    pub targets: Vec<String>,
    pub descriptors: Vec<String>,
    pub auxiliary: Vec<String>,
    pub kinds: BTreeMap<String, AttributeKind>,
}

impl SchemaConfig {
    pub fn with_targets<S: AsRef<str>>(targets: &[S]) -> Self {
        Self {
            targets: targets.iter().map(|s| s.as_ref().to_owned()).collect(),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(text)?)
    }
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "?" | "NA" | "N/A" | "NaN" | "nan" | "null")
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_binary(s: &str) -> Option<u32> {
    match s.trim() {
        "0" | "0.0" | "false" | "FALSE" | "False" => Some(0),
        "1" | "1.0" | "true" | "TRUE" | "True" => Some(1),
        _ => None,
    }
}

pub fn load_csv(path: impl AsRef<Path>, config: &SchemaConfig) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, config)
}

pub fn read_csv<R: Read>(reader: R, config: &SchemaConfig) -> Result<Dataset, DataError> {
    if config.targets.is_empty() {
        return Err(DataError::NoTargets);
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    let mut seen = BTreeSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(DataError::DuplicateColumn(h.clone()));
        }
    }
    let named = config
        .targets
        .iter()
        .chain(&config.descriptors)
        .chain(&config.auxiliary)
        .chain(config.kinds.keys());
    for name in named {
        if !seen.contains(name.as_str()) {
            return Err(DataError::UnknownColumn(name.clone()));
        }
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for record in rdr.records() {
        let record = record?;
        for (j, field) in record.iter().enumerate() {
            raw[j].push(field.to_owned());
        }
    }
    let n = raw.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(DataError::EmptyFile);
    }

    let role_of = |name: &String| -> Option<AttributeRole> {
        if config.targets.contains(name) {
            Some(AttributeRole::Target)
        } else if config.auxiliary.contains(name) {
            Some(AttributeRole::Auxiliary)
        } else if config.descriptors.is_empty() || config.descriptors.contains(name) {
            Some(AttributeRole::Descriptor)
        } else {
            None
        }
    };

    let mut schema = Vec::new();
    let mut columns = Vec::new();
    let mut target_values: Vec<Option<Vec<f64>>> = vec![None; config.targets.len()];
    let mut pending_targets = Vec::new();

    for (name, values) in header.iter().zip(raw) {
        let Some(role) = role_of(name) else { continue };
        let kind = match (config.kinds.get(name), role) {
            (Some(k), _) => *k,
            (None, AttributeRole::Target) => AttributeKind::Numeric,
            (None, _) => infer_kind(&values),
        };
        if role == AttributeRole::Target {
            if kind != AttributeKind::Numeric {
                return Err(DataError::NonNumericTarget(name.clone()));
            }
            let mut col = Vec::with_capacity(n);
            for (row, v) in values.iter().enumerate() {
                if is_missing(v) {
                    return Err(DataError::MissingTarget { column: name.clone(), row });
                }
                col.push(parse_number(v).ok_or_else(|| DataError::NotNumeric {
                    column: name.clone(),
                    row,
                    value: v.clone(),
                })?);
            }
            let slot = config.targets.iter().position(|t| t == name).expect("target is configured");
            target_values[slot] = Some(col);
            pending_targets.push((schema.len(), slot));
            schema.push(AttributeSchema { name: name.clone(), kind, role });
            columns.push(Column::Target(slot));
            continue;
        }
        let column = match kind {
            AttributeKind::Numeric => Column::Numeric(
                values
                    .iter()
                    .enumerate()
                    .map(|(row, v)| {
                        if is_missing(v) {
                            Ok(None)
                        } else {
                            parse_number(v).map(Some).ok_or_else(|| DataError::NotNumeric {
                                column: name.clone(),
                                row,
                                value: v.clone(),
                            })
                        }
                    })
                    .collect::<Result<_, _>>()?,
            ),
            AttributeKind::Binary => Column::Categorical {
                levels: BINARY_LEVELS.iter().map(|s| (*s).to_owned()).collect(),
                codes: values
                    .iter()
                    .enumerate()
                    .map(|(row, v)| {
                        if is_missing(v) {
                            Ok(None)
                        } else {
                            parse_binary(v).map(Some).ok_or_else(|| DataError::NotBinary {
                                column: name.clone(),
                                row,
                                value: v.clone(),
                            })
                        }
                    })
                    .collect::<Result<_, _>>()?,
            },
            AttributeKind::Categorical => {
                let levels: Vec<String> = values
                    .iter()
                    .filter(|v| !is_missing(v))
                    .map(|v| v.trim().to_owned())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let codes = values
                    .iter()
                    .map(|v| {
                        if is_missing(v) {
                            None
                        } else {
                            levels.iter().position(|l| l == v.trim()).map(|c| c as u32)
                        }
                    })
                    .collect();
                Column::Categorical { levels, codes }
            }
        };
        schema.push(AttributeSchema { name: name.clone(), kind, role });
        columns.push(column);
    }

    // target matrix columns follow file order
    let d = config.targets.len();
    let mut order: Vec<usize> = pending_targets.iter().map(|&(_, slot)| slot).collect();
    order.sort_unstable();
    debug_assert_eq!(order, (0..d).collect::<Vec<_>>());
    let mut targets = DMatrix::zeros(n, d);
    for (new_j, &(schema_pos, slot)) in pending_targets.iter().enumerate() {
        columns[schema_pos] = Column::Target(new_j);
        let col = target_values[slot].as_ref().expect("every target was read");
        for (i, v) in col.iter().enumerate() {
            targets[(i, new_j)] = *v;
        }
    }
    Dataset::new(schema, columns, targets)
}

fn infer_kind(values: &[String]) -> AttributeKind {
    let present: Vec<&String> = values.iter().filter(|v| !is_missing(v)).collect();
    if present.is_empty() {
        return AttributeKind::Numeric;
    }
    let numbers: Option<Vec<f64>> = present.iter().map(|v| parse_number(v)).collect();
    match numbers {
        Some(nums) if nums.iter().all(|&x| x == 0.0 || x == 1.0) => AttributeKind::Binary,
        Some(_) => AttributeKind::Numeric,
        None => AttributeKind::Categorical,
    }
}

/// Writes the dataset as CSV in schema order. Missing descriptor values are
/// left empty; numbers use the shortest round-tripping form.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(dataset.schema().iter().map(|a| a.name.as_str()))?;
    for i in 0..dataset.n() {
        let row = (0..dataset.schema().len()).map(|j| match dataset.column(j) {
            Column::Numeric(v) => v[i].map(|x| format!("{x:?}")).unwrap_or_default(),
            Column::Categorical { levels, codes } => codes[i].map(|c| levels[c as usize].clone()).unwrap_or_default(),
            Column::Target(t) => format!("{:?}", dataset.targets()[(i, *t)]),
        });
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
