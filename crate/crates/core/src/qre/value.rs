//! Cost values and their types.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::schema::{DataItem, DataItemSchema, FieldKind, FieldValue};

/// Type of a cost value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CostType {
    Real,
    Int,
    Bool,
    /// Multiset of reals, keyed by bit pattern for a total order.
    MultisetReal,
    /// Set of integers (peak-time sets and sliding-window indices).
    IntSet,
    Tuple(Vec<CostType>),
    Unit,
}

impl fmt::Display for CostType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostType::Real => write!(f, "real"),
            CostType::Int => write!(f, "int"),
            CostType::Bool => write!(f, "bool"),
            CostType::MultisetReal => write!(f, "multiset"),
            CostType::IntSet => write!(f, "intset"),
            CostType::Tuple(ts) => {
                write!(f, "(")?;
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
            CostType::Unit => write!(f, "unit"),
        }
    }
}

/// A runtime cost value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(f64),
    Int(i64),
    Bool(bool),
    /// Sorted multiset of f64 bit patterns (finite reals only).
    Multiset(Vec<u64>),
    IntSet(BTreeSet<i64>),
    Tuple(Vec<Value>),
    Unit,
}

impl Value {
    pub fn cost_type(&self) -> CostType {
        match self {
            Value::Real(_) => CostType::Real,
            Value::Int(_) => CostType::Int,
            Value::Bool(_) => CostType::Bool,
            Value::Multiset(_) => CostType::MultisetReal,
            Value::IntSet(_) => CostType::IntSet,
            Value::Tuple(vs) => CostType::Tuple(vs.iter().map(Value::cost_type).collect()),
            Value::Unit => CostType::Unit,
        }
    }

    pub fn as_real(&self) -> Result<f64> {
        match self {
            Value::Real(x) => Ok(*x),
            _ => Err(Error::Type(format!("expected real, got {self}"))),
        }
    }

    pub fn as_int(&self) -> Result<i64> {
        match self {
            Value::Int(n) => Ok(*n),
            _ => Err(Error::Type(format!("expected int, got {self}"))),
        }
    }

    pub fn as_bool(&self) -> Result<bool> {
        match self {
            Value::Bool(b) => Ok(*b),
            _ => Err(Error::Type(format!("expected bool, got {self}"))),
        }
    }

    pub fn as_int_set(&self) -> Result<&BTreeSet<i64>> {
        match self {
            Value::IntSet(s) => Ok(s),
            _ => Err(Error::Type(format!("expected intset, got {self}"))),
        }
    }

    pub fn as_tuple(&self) -> Result<&[Value]> {
        match self {
            Value::Tuple(vs) => Ok(vs),
            _ => Err(Error::Type(format!("expected tuple, got {self}"))),
        }
    }

    pub fn int_set<I: IntoIterator<Item = i64>>(items: I) -> Value {
        Value::IntSet(items.into_iter().collect())
    }

    /// Converts a field value to a cost value (enum labels become ints).
    pub fn from_field(fv: &FieldValue) -> Value {
        match fv {
            FieldValue::Real(x) => Value::Real(*x),
            FieldValue::Int(n) => Value::Int(*n),
            FieldValue::Bool(b) => Value::Bool(*b),
            FieldValue::Label(l) => Value::Int(*l as i64),
        }
    }

    /// Converts a scalar cost value into a single-field data item for the
    /// given derived-stream schema.
    pub fn to_item(&self, schema: &DataItemSchema) -> Result<DataItem> {
        if schema.len() != 1 {
            return Err(Error::Type(
                "derived streams carry single-field items".into(),
            ));
        }
        let fv = match (self, schema.kind(0)) {
            (Value::Real(x), FieldKind::Real) => FieldValue::Real(*x),
            (Value::Int(n), FieldKind::Int) => FieldValue::Int(*n),
            (Value::Int(n), FieldKind::Real) => FieldValue::Real(*n as f64),
            (Value::Bool(b), FieldKind::Bool) => FieldValue::Bool(*b),
            _ => {
                return Err(Error::Type(format!(
                    "cannot feed value {self} into a {:?} stream",
                    schema.kind(0)
                )))
            }
        };
        Ok(DataItem::new(vec![fv]))
    }

    /// Field kind able to carry values of the given scalar cost type.
    pub fn stream_kind(ty: &CostType) -> Result<FieldKind> {
        match ty {
            CostType::Real => Ok(FieldKind::Real),
            CostType::Int => Ok(FieldKind::Int),
            CostType::Bool => Ok(FieldKind::Bool),
            other => Err(Error::Type(format!(
                "cost type {other} cannot form a derived stream"
            ))),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(x) => write!(f, "{x}"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Multiset(bits) => {
                write!(f, "{{|")?;
                for (i, b) in bits.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", f64::from_bits(*b))?;
                }
                write!(f, "|}}")
            }
            Value::IntSet(s) => {
                write!(f, "{{")?;
                for (i, n) in s.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{n}")?;
                }
                write!(f, "}}")
            }
            Value::Tuple(vs) => {
                write!(f, "(")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ")")
            }
            Value::Unit => write!(f, "()"),
        }
    }
}
