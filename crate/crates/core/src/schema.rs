//! Data-item schemas and the items that flow through a stream.
//!
//! A schema fixes the record layout of one stream: an ordered list of named
//! fields, each real, integer, boolean, or an enumeration over a fixed label
//! set. Every predicate, regular expression, and expression tree is built
//! against one schema, and items are validated against it before evaluation.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Kind of a single record field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldKind {
    Real,
    Int,
    Bool,
    /// Enumeration over a closed label set; values are label indices.
    Enum(Arc<[String]>),
}

impl FieldKind {
    pub fn enum_labels(labels: &[&str]) -> FieldKind {
        FieldKind::Enum(labels.iter().map(|s| s.to_string()).collect())
    }
}

/// Ordered list of named fields describing one data item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataItemSchema {
    fields: Vec<(String, FieldKind)>,
}

impl DataItemSchema {
    /// Builds a schema, rejecting empty field lists and duplicate names.
    pub fn new(fields: Vec<(String, FieldKind)>) -> Result<Arc<DataItemSchema>> {
        if fields.is_empty() {
            return Err(Error::Schema("schema must have at least one field".into()));
        }
        for (i, (name, _)) in fields.iter().enumerate() {
            if fields[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::Schema(format!("duplicate field name `{name}`")));
            }
        }
        Ok(Arc::new(DataItemSchema { fields }))
    }

    /// Convenience constructor: every named field is real-valued.
    pub fn reals(names: &[&str]) -> Arc<DataItemSchema> {
        DataItemSchema::new(
            names
                .iter()
                .map(|n| (n.to_string(), FieldKind::Real))
                .collect(),
        )
        .expect("real-field schema")
    }

    /// Schema of a single field, used for streams of derived scalars.
    pub fn single(name: &str, kind: FieldKind) -> Arc<DataItemSchema> {
        DataItemSchema::new(vec![(name.to_string(), kind)]).expect("single-field schema")
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn fields(&self) -> &[(String, FieldKind)] {
        &self.fields
    }

    pub fn kind(&self, idx: usize) -> &FieldKind {
        &self.fields[idx].1
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.fields[idx].0
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.fields
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Schema(format!("no field named `{name}`")))
    }

    /// Checks that an item conforms to this schema.
    pub fn check_item(&self, item: &DataItem) -> Result<()> {
        if item.values.len() != self.fields.len() {
            return Err(Error::Schema(format!(
                "item has {} fields, schema expects {}",
                item.values.len(),
                self.fields.len()
            )));
        }
        for (i, v) in item.values.iter().enumerate() {
            let ok = match (v, self.kind(i)) {
                (FieldValue::Real(x), FieldKind::Real) => x.is_finite(),
                (FieldValue::Int(_), FieldKind::Int) => true,
                (FieldValue::Bool(_), FieldKind::Bool) => true,
                (FieldValue::Label(l), FieldKind::Enum(labels)) => *l < labels.len(),
                _ => false,
            };
            if !ok {
                return Err(Error::Schema(format!(
                    "field `{}` does not match its declared kind",
                    self.name(i)
                )));
            }
        }
        Ok(())
    }
}

/// One field value inside a data item.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Real(f64),
    Int(i64),
    Bool(bool),
    /// Index into the field's enum label set.
    Label(usize),
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Real(x) => write!(f, "{x}"),
            FieldValue::Int(n) => write!(f, "{n}"),
            FieldValue::Bool(b) => write!(f, "{b}"),
            FieldValue::Label(l) => write!(f, "#{l}"),
        }
    }
}

/// A single stream element: one value per schema field, in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct DataItem {
    pub values: Vec<FieldValue>,
}

impl DataItem {
    pub fn new(values: Vec<FieldValue>) -> DataItem {
        DataItem { values }
    }

    /// Single real-field item, the common case for derived streams.
    pub fn real(x: f64) -> DataItem {
        DataItem::new(vec![FieldValue::Real(x)])
    }

    pub fn reals(xs: &[f64]) -> DataItem {
        DataItem::new(xs.iter().map(|&x| FieldValue::Real(x)).collect())
    }

    pub fn get(&self, idx: usize) -> &FieldValue {
        &self.values[idx]
    }
}
