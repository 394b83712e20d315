//! Operations on cost values.
//!
//! An operation is a named, total, pure function with a structural type
//! check. The registry holds the standard set by name so the expression
//! parser can resolve them; parameterized families (`inrange`, connectivity
//! steps, detector transitions) are produced by constructor functions and can
//! be registered under derived names. Every operation is expected to run in
//! time bounded by its operand sizes, never by stream length, which is what
//! preserves the per-item evaluation guarantee.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::value::{CostType, Value};

type TypeFn = dyn Fn(&[CostType]) -> Result<CostType> + Send + Sync;
type EvalFn = dyn Fn(&[Value]) -> Value + Send + Sync;

/// A named pure operation with declared arity.
#[derive(Clone)]
pub struct Op {
    inner: Arc<OpInner>,
}

struct OpInner {
    name: String,
    arity: usize,
    typecheck: Box<TypeFn>,
    eval: Box<EvalFn>,
}

impl Op {
    pub fn new(
        name: &str,
        arity: usize,
        typecheck: impl Fn(&[CostType]) -> Result<CostType> + Send + Sync + 'static,
        eval: impl Fn(&[Value]) -> Value + Send + Sync + 'static,
    ) -> Op {
        Op {
            inner: Arc::new(OpInner {
                name: name.to_string(),
                arity,
                typecheck: Box::new(typecheck),
                eval: Box::new(eval),
            }),
        }
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }

    pub fn arity(&self) -> usize {
        self.inner.arity
    }

    pub fn result_type(&self, args: &[CostType]) -> Result<CostType> {
        if args.len() != self.arity() {
            return Err(Error::Type(format!(
                "operation `{}` expects {} arguments, got {}",
                self.name(),
                self.arity(),
                args.len()
            )));
        }
        (self.inner.typecheck)(args)
    }

    pub fn apply(&self, args: &[Value]) -> Value {
        debug_assert_eq!(args.len(), self.arity());
        (self.inner.eval)(args)
    }
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Op({}/{})", self.name(), self.arity())
    }
}

fn numeric_pair(name: &'static str, args: &[CostType]) -> Result<CostType> {
    match (&args[0], &args[1]) {
        (CostType::Real, CostType::Real) => Ok(CostType::Real),
        (CostType::Int, CostType::Int) => Ok(CostType::Int),
        (a, b) => Err(Error::Type(format!(
            "`{name}` needs two reals or two ints, got {a} and {b}"
        ))),
    }
}

fn real_binop(a: &Value, b: &Value, f: impl Fn(f64, f64) -> f64, g: impl Fn(i64, i64) -> i64) -> Value {
    match (a, b) {
        (Value::Real(x), Value::Real(y)) => Value::Real(f(*x, *y)),
        (Value::Int(x), Value::Int(y)) => Value::Int(g(*x, *y)),
        _ => unreachable!("typechecked numeric operands"),
    }
}

/// Standard operation set.
pub fn op_add() -> Op {
    Op::new(
        "add",
        2,
        |t| numeric_pair("add", t),
        |v| real_binop(&v[0], &v[1], |x, y| x + y, |x, y| x + y),
    )
}

pub fn op_diff() -> Op {
    Op::new(
        "diff",
        2,
        |t| numeric_pair("diff", t),
        |v| real_binop(&v[0], &v[1], |x, y| x - y, |x, y| x - y),
    )
}

pub fn op_mult() -> Op {
    Op::new(
        "mult",
        2,
        |t| numeric_pair("mult", t),
        |v| real_binop(&v[0], &v[1], |x, y| x * y, |x, y| x * y),
    )
}

pub fn op_max() -> Op {
    Op::new(
        "max",
        2,
        |t| numeric_pair("max", t),
        |v| real_binop(&v[0], &v[1], f64::max, i64::max),
    )
}

pub fn op_min() -> Op {
    Op::new(
        "min",
        2,
        |t| numeric_pair("min", t),
        |v| real_binop(&v[0], &v[1], f64::min, i64::min),
    )
}

/// Alias of `add` kept for readability in summing folds.
pub fn op_sum() -> Op {
    Op::new(
        "sum",
        2,
        |t| numeric_pair("sum", t),
        |v| real_binop(&v[0], &v[1], |x, y| x + y, |x, y| x + y),
    )
}

/// Binary mean of two reals.
pub fn op_avg() -> Op {
    Op::new(
        "avg",
        2,
        |t| match (&t[0], &t[1]) {
            (CostType::Real, CostType::Real) => Ok(CostType::Real),
            _ => Err(Error::Type("`avg` needs two reals".into())),
        },
        |v| Value::Real((v[0].as_real().unwrap() + v[1].as_real().unwrap()) / 2.0),
    )
}

/// Non-strict comparison x >= y.
pub fn op_gt() -> Op {
    Op::new(
        "gt",
        2,
        |t| match (&t[0], &t[1]) {
            (CostType::Real, CostType::Real) | (CostType::Int, CostType::Int) => {
                Ok(CostType::Bool)
            }
            _ => Err(Error::Type("`gt` needs matching numeric operands".into())),
        },
        |v| match (&v[0], &v[1]) {
            (Value::Real(x), Value::Real(y)) => Value::Bool(x >= y),
            (Value::Int(x), Value::Int(y)) => Value::Bool(x >= y),
            _ => unreachable!(),
        },
    )
}

/// Onset test: true when 0.8x >= y.
pub fn op_inc() -> Op {
    Op::new(
        "inc",
        2,
        |t| match (&t[0], &t[1]) {
            (CostType::Real, CostType::Real) => Ok(CostType::Bool),
            _ => Err(Error::Type("`inc` needs two reals".into())),
        },
        |v| Value::Bool(0.8 * v[0].as_real().unwrap() >= v[1].as_real().unwrap()),
    )
}

pub fn op_left() -> Op {
    Op::new("left", 2, |t| Ok(t[0].clone()), |v| v[0].clone())
}

pub fn op_right() -> Op {
    Op::new("right", 2, |t| Ok(t[1].clone()), |v| v[1].clone())
}

pub fn op_pair() -> Op {
    Op::new(
        "pair",
        2,
        |t| Ok(CostType::Tuple(vec![t[0].clone(), t[1].clone()])),
        |v| Value::Tuple(vec![v[0].clone(), v[1].clone()]),
    )
}

pub fn op_fst() -> Op {
    Op::new(
        "fst",
        1,
        |t| match &t[0] {
            CostType::Tuple(ts) if !ts.is_empty() => Ok(ts[0].clone()),
            _ => Err(Error::Type("`fst` needs a nonempty tuple".into())),
        },
        |v| v[0].as_tuple().unwrap()[0].clone(),
    )
}

pub fn op_snd() -> Op {
    Op::new(
        "snd",
        1,
        |t| match &t[0] {
            CostType::Tuple(ts) if ts.len() >= 2 => Ok(ts[1].clone()),
            _ => Err(Error::Type("`snd` needs a pair".into())),
        },
        |v| v[0].as_tuple().unwrap()[1].clone(),
    )
}

/// Ratio of a (sum, count) accumulator pair; IEEE semantics on count zero.
pub fn op_div_pair() -> Op {
    Op::new(
        "div-pair",
        1,
        |t| match &t[0] {
            CostType::Tuple(ts) if ts.as_slice() == [CostType::Real, CostType::Real] => {
                Ok(CostType::Real)
            }
            _ => Err(Error::Type("`div-pair` needs a (real, real) tuple".into())),
        },
        |v| {
            let parts = v[0].as_tuple().unwrap();
            Value::Real(parts[0].as_real().unwrap() / parts[1].as_real().unwrap())
        },
    )
}

pub fn op_and() -> Op {
    Op::new(
        "and",
        2,
        |t| match (&t[0], &t[1]) {
            (CostType::Bool, CostType::Bool) => Ok(CostType::Bool),
            _ => Err(Error::Type("`and` needs two booleans".into())),
        },
        |v| Value::Bool(v[0].as_bool().unwrap() && v[1].as_bool().unwrap()),
    )
}

pub fn op_or() -> Op {
    Op::new(
        "or",
        2,
        |t| match (&t[0], &t[1]) {
            (CostType::Bool, CostType::Bool) => Ok(CostType::Bool),
            _ => Err(Error::Type("`or` needs two booleans".into())),
        },
        |v| Value::Bool(v[0].as_bool().unwrap() || v[1].as_bool().unwrap()),
    )
}

/// Membership of an integer count in [lo, hi].
pub fn op_inrange(lo: i64, hi: i64) -> Op {
    Op::new(
        &format!("inrange:{lo}:{hi}"),
        1,
        |t| match &t[0] {
            CostType::Int => Ok(CostType::Bool),
            _ => Err(Error::Type("`inrange` needs an int".into())),
        },
        move |v| {
            let n = v[0].as_int().unwrap();
            Value::Bool(lo <= n && n <= hi)
        },
    )
}

/// Multiset insertion.
pub fn op_union_insert() -> Op {
    Op::new(
        "union-insert",
        2,
        |t| match (&t[0], &t[1]) {
            (CostType::MultisetReal, CostType::Real) => Ok(CostType::MultisetReal),
            _ => Err(Error::Type("`union-insert` needs (multiset, real)".into())),
        },
        |v| match (&v[0], &v[1]) {
            (Value::Multiset(bits), Value::Real(x)) => {
                let mut out = bits.clone();
                let b = x.to_bits();
                let pos = out.partition_point(|&e| e <= b);
                out.insert(pos, b);
                Value::Multiset(out)
            }
            _ => unreachable!(),
        },
    )
}

/// One step of the scale-connectivity filter: keeps the members of the
/// second set that lie within `delta` of some member of the first.
pub fn op_conn_step(delta: i64) -> Op {
    Op::new(
        &format!("conn:{delta}"),
        2,
        |t| match (&t[0], &t[1]) {
            (CostType::IntSet, CostType::IntSet) => Ok(CostType::IntSet),
            _ => Err(Error::Type("connectivity step needs two intsets".into())),
        },
        move |v| {
            let xs = v[0].as_int_set().unwrap();
            let ys = v[1].as_int_set().unwrap();
            let kept = ys
                .iter()
                .copied()
                .filter(|y| {
                    xs.range(y - delta..=y + delta).next().is_some()
                })
                .collect();
            Value::IntSet(kept)
        },
    )
}

/// Name-indexed operation set.
#[derive(Clone)]
pub struct OperationRegistry {
    ops: HashMap<String, Op>,
}

impl OperationRegistry {
    pub fn empty() -> OperationRegistry {
        OperationRegistry {
            ops: HashMap::new(),
        }
    }

    /// Registry holding the standard operations.
    pub fn standard() -> OperationRegistry {
        let mut r = OperationRegistry::empty();
        for op in [
            op_add(),
            op_diff(),
            op_mult(),
            op_avg(),
            op_max(),
            op_min(),
            op_sum(),
            op_gt(),
            op_inc(),
            op_left(),
            op_right(),
            op_pair(),
            op_fst(),
            op_snd(),
            op_div_pair(),
            op_and(),
            op_or(),
            op_union_insert(),
        ] {
            r.register(op);
        }
        r
    }

    pub fn register(&mut self, op: Op) {
        self.ops.insert(op.name().to_string(), op);
    }

    pub fn get(&self, name: &str) -> Result<Op> {
        self.ops
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Type(format!("unknown operation `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gt_is_non_strict() {
        let gt = op_gt();
        assert_eq!(
            gt.apply(&[Value::Real(1.0), Value::Real(1.0)]),
            Value::Bool(true)
        );
        assert_eq!(
            gt.apply(&[Value::Real(0.9), Value::Real(1.0)]),
            Value::Bool(false)
        );
    }

    #[test]
    fn inc_is_exact_ieee() {
        let inc = op_inc();
        // 0.8 * 10 = 8 exactly in doubles
        assert_eq!(
            inc.apply(&[Value::Real(10.0), Value::Real(8.0)]),
            Value::Bool(true)
        );
        assert_eq!(
            inc.apply(&[Value::Real(10.0), Value::Real(8.1)]),
            Value::Bool(false)
        );
    }

    #[test]
    fn conn_step_filters_by_distance() {
        let conn = op_conn_step(2);
        let out = conn.apply(&[Value::int_set([10]), Value::int_set([11, 30])]);
        assert_eq!(out, Value::int_set([11]));
    }

    #[test]
    fn typecheck_rejects_mismatch() {
        assert!(op_add()
            .result_type(&[CostType::Real, CostType::Bool])
            .is_err());
        assert!(op_add()
            .result_type(&[CostType::Real, CostType::Real])
            .is_ok());
    }
}
