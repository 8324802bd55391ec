use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;

use super::HarnessError;
use crate::fusion::{diff_operand_tags, parse_local_datetime, FeatureTag};

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub tag: FeatureTag,
}

/// Numeric design matrix with labels, respondent groups and trip times.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<Column>,
    /// Row-major feature values.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub classes: Vec<String>,
    pub groups: Vec<String>,
    pub ordinals: Vec<u32>,
    pub departure: Vec<i64>,
    pub day: Vec<NaiveDate>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Rows in the given order.
    pub fn rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.clone(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes.clone(),
            groups: idx.iter().map(|&i| self.groups[i].clone()).collect(),
            ordinals: idx.iter().map(|&i| self.ordinals[i]).collect(),
            departure: idx.iter().map(|&i| self.departure[i]).collect(),
            day: idx.iter().map(|&i| self.day[i]).collect(),
        }
    }

    /// Columns in the given order.
    pub fn columns_subset(&self, cols: &[usize]) -> Dataset {
        Dataset {
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
            x: self.x.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect(),
            ..self.clone()
        }
    }

    /// Stable chronological order, ties by respondent and trip ordinal.
    pub fn sorted_by_time(&self) -> Dataset {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.departure[a].cmp(&self.departure[b]).then_with(|| self.groups[a].cmp(&self.groups[b])).then_with(|| self.ordinals[a].cmp(&self.ordinals[b]))
        });
        self.rows(&idx)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

const ID_COLUMNS: [&str; 5] = ["respondent_id", "trip_ordinal", "departure_epoch", "departure_local", "label"];

/// Reads an instance file. Survey columns whose non-empty values are all
/// numeric stay numeric (empty becomes `missing`); other survey columns are
/// one-hot encoded as `<name>_SURVEY<value>`.
pub fn read_instances(path: impl AsRef<Path>, missing: f64) -> Result<Dataset, HarnessError> {
    let path = path.as_ref();
    let err = |m: String| HarnessError::Instances { path: path.to_path_buf(), message: m };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let header = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    for (i, id) in ID_COLUMNS.iter().enumerate() {
        if header.get(i) != Some(*id) {
            return Err(err(format!("column {} must be {id}", i + 1)));
        }
    }
    let mut raw_cols = Vec::new();
    for h in header.iter().skip(ID_COLUMNS.len()) {
        let (name, tag) = h.rsplit_once('@').ok_or_else(|| err(format!("column {h} lacks a @TAG suffix")))?;
        let tag = FeatureTag::parse(tag).ok_or_else(|| HarnessError::Config(format!("unknown feature tag {tag} in column {h}")))?;
        if tag == FeatureTag::Diff && diff_operand_tags(h.trim_end_matches("@DIFF")).is_none() {
            return Err(HarnessError::Config(format!("cannot resolve operands of {h}")));
        }
        raw_cols.push((name.to_string(), tag));
    }
    let records: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>().map_err(|e| err(e.to_string()))?;

    let mut classes: BTreeSet<String> = BTreeSet::new();
    for r in &records {
        classes.insert(r.get(4).unwrap_or_default().to_string());
    }
    let classes: Vec<String> = classes.into_iter().collect();
    let class_index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    enum Enc {
        Numeric,
        OneHot(Vec<String>),
    }
    let mut encodings = Vec::with_capacity(raw_cols.len());
    let mut columns = Vec::new();
    for (j, (name, tag)) in raw_cols.iter().enumerate() {
        let field = j + ID_COLUMNS.len();
        if *tag == FeatureTag::Survey {
            let values: BTreeSet<&str> = records.iter().map(|r| r.get(field).unwrap_or_default()).filter(|v| !v.is_empty()).collect();
            if values.iter().all(|v| v.parse::<f64>().is_ok()) {
                columns.push(Column { name: format!("{name}_SURVEY"), tag: *tag });
                encodings.push(Enc::Numeric);
            } else {
                let levels: Vec<String> = values.into_iter().map(String::from).collect();
                columns.extend(levels.iter().map(|v| Column { name: format!("{name}_SURVEY{v}"), tag: *tag }));
                encodings.push(Enc::OneHot(levels));
            }
        } else {
            columns.push(Column { name: name.clone(), tag: *tag });
            encodings.push(Enc::Numeric);
        }
    }

    let mut ds = Dataset {
        columns,
        x: Vec::with_capacity(records.len()),
        y: Vec::new(),
        classes: classes.clone(),
        groups: Vec::new(),
        ordinals: Vec::new(),
        departure: Vec::new(),
        day: Vec::new(),
    };
    for (line, r) in records.iter().enumerate() {
        let bad = |what: &str| err(format!("row {}: invalid {what}", line + 2));
        ds.groups.push(r.get(0).unwrap_or_default().to_string());
        ds.ordinals.push(r.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| bad("trip_ordinal"))?);
        ds.departure.push(r.get(2).and_then(|v| v.parse().ok()).ok_or_else(|| bad("departure_epoch"))?);
        ds.day.push(r.get(3).and_then(parse_local_datetime).ok_or_else(|| bad("departure_local"))?.date());
        ds.y.push(class_index[r.get(4).unwrap_or_default()]);
        let mut row = Vec::with_capacity(ds.columns.len());
        for (j, enc) in encodings.iter().enumerate() {
            let v = r.get(j + ID_COLUMNS.len()).unwrap_or_default();
            match enc {
                Enc::Numeric if v.is_empty() => row.push(missing),
                Enc::Numeric => row.push(v.parse().map_err(|_| bad(&raw_cols[j].0))?),
                Enc::OneHot(levels) => row.extend(levels.iter().map(|l| if l == v { 1.0 } else { 0.0 })),
            }
        }
        ds.x.push(row);
    }
    Ok(ds)
}
