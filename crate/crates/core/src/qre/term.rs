//! Cost terms: the per-item value computations of basic expressions.
//!
//! A term is built from item fields, named parameters, constants, and
//! operation applications. Parameters are what let an iteration body see the
//! value accumulated so far.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::schema::{DataItem, DataItemSchema};

use super::op::Op;
use super::value::{CostType, Value};

/// A declared parameter: name plus cost type.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub ty: CostType,
}

impl Parameter {
    pub fn new(name: &str, ty: CostType) -> Parameter {
        Parameter {
            name: name.to_string(),
            ty,
        }
    }

    pub fn real(name: &str) -> Parameter {
        Parameter::new(name, CostType::Real)
    }

    pub fn int(name: &str) -> Parameter {
        Parameter::new(name, CostType::Int)
    }
}

/// Map from parameter names to values, with functional update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterValuation {
    entries: Vec<(Arc<str>, Value)>,
}

impl ParameterValuation {
    pub fn empty() -> ParameterValuation {
        ParameterValuation::default()
    }

    pub fn of(pairs: &[(&str, Value)]) -> ParameterValuation {
        let mut v = ParameterValuation::empty();
        for (n, val) in pairs {
            v.set(n, val.clone());
        }
        v
    }

    pub fn set(&mut self, name: &str, value: Value) {
        if let Some(e) = self.entries.iter_mut().find(|(n, _)| &**n == name) {
            e.1 = value;
        } else {
            self.entries.push((Arc::from(name), value));
        }
    }

    /// Returns a copy with `name` bound to `value`, leaving `self` intact.
    pub fn with(&self, name: &str, value: Value) -> ParameterValuation {
        let mut out = self.clone();
        out.set(name, value);
        out
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.entries
            .iter()
            .find(|(n, _)| &**n == name)
            .map(|(_, v)| v)
    }

    pub fn require(&self, name: &str) -> Result<&Value> {
        self.get(name)
            .ok_or_else(|| Error::Param(format!("no value bound for parameter `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| &**n)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.entries.iter().map(|(n, v)| (&**n, v))
    }
}

/// Term syntax.
#[derive(Debug, Clone)]
pub enum CostTerm {
    Param(String),
    /// Field of the current item, stored by resolved index.
    Field(usize),
    Const(Value),
    Apply(Op, Vec<CostTerm>),
}

impl CostTerm {
    pub fn param(name: &str) -> CostTerm {
        CostTerm::Param(name.to_string())
    }

    pub fn field(schema: &DataItemSchema, name: &str) -> Result<CostTerm> {
        Ok(CostTerm::Field(schema.index_of(name)?))
    }

    pub fn real(x: f64) -> CostTerm {
        CostTerm::Const(Value::Real(x))
    }

    pub fn int(n: i64) -> CostTerm {
        CostTerm::Const(Value::Int(n))
    }

    pub fn apply(op: Op, args: Vec<CostTerm>) -> CostTerm {
        CostTerm::Apply(op, args)
    }

    /// Infers the term's type against a schema and parameter declarations,
    /// rejecting unknown parameters and operation type mismatches.
    pub fn infer_type(
        &self,
        schema: &DataItemSchema,
        params: &[Parameter],
    ) -> Result<CostType> {
        match self {
            CostTerm::Param(name) => params
                .iter()
                .find(|p| &p.name == name)
                .map(|p| p.ty.clone())
                .ok_or_else(|| Error::Param(format!("undeclared parameter `{name}`"))),
            CostTerm::Field(idx) => {
                if *idx >= schema.len() {
                    return Err(Error::Schema("field index outside schema".into()));
                }
                Ok(match schema.kind(*idx) {
                    crate::schema::FieldKind::Real => CostType::Real,
                    crate::schema::FieldKind::Int => CostType::Int,
                    crate::schema::FieldKind::Bool => CostType::Bool,
                    crate::schema::FieldKind::Enum(_) => CostType::Int,
                })
            }
            CostTerm::Const(v) => Ok(v.cost_type()),
            CostTerm::Apply(op, args) => {
                let tys = args
                    .iter()
                    .map(|a| a.infer_type(schema, params))
                    .collect::<Result<Vec<_>>>()?;
                op.result_type(&tys)
            }
        }
    }

    /// Names of the parameters the term actually references.
    pub fn referenced_params(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_params(&self, out: &mut Vec<String>) {
        match self {
            CostTerm::Param(n) => out.push(n.clone()),
            CostTerm::Field(_) | CostTerm::Const(_) => {}
            CostTerm::Apply(_, args) => {
                for a in args {
                    a.collect_params(out);
                }
            }
        }
    }

    /// Evaluates the term on an item under a complete valuation.
    pub fn eval(&self, item: &DataItem, v: &ParameterValuation) -> Result<Value> {
        match self {
            CostTerm::Param(name) => v.require(name).cloned(),
            CostTerm::Field(idx) => Ok(Value::from_field(item.get(*idx))),
            CostTerm::Const(c) => Ok(c.clone()),
            CostTerm::Apply(op, args) => {
                let vals = args
                    .iter()
                    .map(|a| a.eval(item, v))
                    .collect::<Result<Vec<_>>>()?;
                Ok(op.apply(&vals))
            }
        }
    }
}

impl fmt::Display for CostTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostTerm::Param(n) => write!(f, "{n}"),
            CostTerm::Field(i) => write!(f, "field{i}"),
            CostTerm::Const(v) => write!(f, "{v}"),
            CostTerm::Apply(op, args) => {
                write!(f, "{}(", op.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}
