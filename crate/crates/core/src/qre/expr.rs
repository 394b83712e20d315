//! The quantitative expression tree and its construction rules.
//!
//! Each constructor enforces the side conditions that keep evaluation
//! single-valued: equal domains for cost operations and substitution,
//! disjoint domains for conditional choice, unambiguous concatenability for
//! splits, unambiguous iterability for iteration, and a parameter-free
//! producer for stream composition. A constructed expression therefore
//! carries its domain language, parameter list, and cost type as trusted
//! metadata.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::predicate::Predicate;
use crate::regex::{self, SymbolicRegex};
use crate::schema::{DataItemSchema, FieldKind};

use super::op::Op;
use super::term::{CostTerm, Parameter};
use super::value::{CostType, Value};

/// Domain of an expression: a symbolic regex when statically known.
///
/// Stream composition with a consumer that is not total over its derived
/// stream yields a domain that is still well defined semantically but not
/// carried as a regex; such expressions evaluate fine but cannot be nested
/// under combinators that must reason about domains.
#[derive(Debug, Clone)]
pub enum Domain {
    Known(SymbolicRegex),
    Opaque,
}

impl Domain {
    pub fn known(&self) -> Result<&SymbolicRegex> {
        match self {
            Domain::Known(r) => Ok(r),
            Domain::Opaque => Err(Error::Expr(
                "operation requires a statically known domain".into(),
            )),
        }
    }
}

/// Node forms of the expression tree.
#[derive(Debug)]
pub enum QreNode {
    Basic {
        pred: Predicate,
        term: CostTerm,
    },
    CostOp {
        op: Op,
        children: Vec<QreExpr>,
    },
    Subst {
        outer: QreExpr,
        param: String,
        inner: QreExpr,
    },
    Else {
        primary: QreExpr,
        fallback: QreExpr,
    },
    Split {
        op: Op,
        left: QreExpr,
        right: QreExpr,
    },
    Iter {
        param: String,
        body: QreExpr,
    },
    Compose {
        producer: QreExpr,
        consumer: QreExpr,
    },
    /// Partial application: one parameter bound to a constant. Plumbing that
    /// lets builders close their seed parameters, e.g. so an iteration can
    /// serve as a parameter-free composition producer.
    Bind {
        inner: QreExpr,
        param: String,
        value: Value,
    },
}

#[derive(Debug)]
struct QreInner {
    node: QreNode,
    schema: Arc<DataItemSchema>,
    domain: Domain,
    params: Vec<Parameter>,
    cost: CostType,
}

/// A quantitative expression over streams of one schema.
#[derive(Debug, Clone)]
pub struct QreExpr {
    inner: Arc<QreInner>,
}

impl QreExpr {
    fn wrap(
        node: QreNode,
        schema: Arc<DataItemSchema>,
        domain: Domain,
        params: Vec<Parameter>,
        cost: CostType,
    ) -> QreExpr {
        QreExpr {
            inner: Arc::new(QreInner {
                node,
                schema,
                domain,
                params,
                cost,
            }),
        }
    }

    pub fn node(&self) -> &QreNode {
        &self.inner.node
    }

    pub fn schema(&self) -> &Arc<DataItemSchema> {
        &self.inner.schema
    }

    pub fn domain(&self) -> &Domain {
        &self.inner.domain
    }

    pub fn params(&self) -> &[Parameter] {
        &self.inner.params
    }

    pub fn cost_type(&self) -> &CostType {
        &self.inner.cost
    }

    pub fn param(&self, name: &str) -> Option<&Parameter> {
        self.params().iter().find(|p| p.name == name)
    }

    /// Matches one item satisfying the predicate and evaluates the term on
    /// it. The term may reference declared parameters.
    pub fn basic(
        schema: Arc<DataItemSchema>,
        pred: Predicate,
        term: CostTerm,
        decls: &[Parameter],
    ) -> Result<QreExpr> {
        let cost = term.infer_type(&schema, decls)?;
        let mut params = Vec::new();
        for name in term.referenced_params() {
            let decl = decls
                .iter()
                .find(|p| p.name == name)
                .expect("inference resolved every referenced parameter");
            params.push(decl.clone());
        }
        let domain = Domain::Known(SymbolicRegex::atom(schema.clone(), pred.clone()));
        Ok(QreExpr::wrap(
            QreNode::Basic { pred, term },
            schema,
            domain,
            params,
            cost,
        ))
    }

    /// Parameter-free basic expression with a constant value.
    pub fn basic_const(
        schema: Arc<DataItemSchema>,
        pred: Predicate,
        value: Value,
    ) -> Result<QreExpr> {
        QreExpr::basic(schema, pred, CostTerm::Const(value), &[])
    }

    /// Combines expressions over one shared domain with an operation.
    pub fn cost_op(op: Op, children: Vec<QreExpr>) -> Result<QreExpr> {
        if children.is_empty() {
            return Err(Error::Expr("cost operation needs children".into()));
        }
        if children.len() != op.arity() {
            return Err(Error::Expr(format!(
                "operation `{}` has arity {}, got {} children",
                op.name(),
                op.arity(),
                children.len()
            )));
        }
        let schema = children[0].schema().clone();
        let first_domain = children[0].domain().known()?.clone();
        for c in &children[1..] {
            if c.schema() != &schema {
                return Err(Error::Expr("children built over different schemas".into()));
            }
            if !regex::languages_equal(&first_domain, c.domain().known()?)? {
                return Err(Error::Expr(
                    "cost operation requires children with equal domains".into(),
                ));
            }
        }
        let params = merge_disjoint_params(&children)?;
        let tys: Vec<CostType> = children.iter().map(|c| c.cost_type().clone()).collect();
        let cost = op.result_type(&tys)?;
        Ok(QreExpr::wrap(
            QreNode::CostOp { op, children },
            schema,
            Domain::Known(first_domain),
            params,
            cost,
        ))
    }

    /// Substitutes the inner expression's result for parameter `x` of the
    /// outer expression; both run over the same streams.
    pub fn subst(outer: QreExpr, x: &str, inner: QreExpr) -> Result<QreExpr> {
        if outer.schema() != inner.schema() {
            return Err(Error::Expr("children built over different schemas".into()));
        }
        let dom_outer = outer.domain().known()?.clone();
        if !regex::languages_equal(&dom_outer, inner.domain().known()?)? {
            return Err(Error::Expr(
                "substitution requires equal domains".into(),
            ));
        }
        let xp = outer
            .param(x)
            .ok_or_else(|| Error::Expr(format!("`{x}` is not a parameter of the outer expression")))?
            .clone();
        if &xp.ty != inner.cost_type() {
            return Err(Error::Expr(format!(
                "parameter `{x}` has type {}, inner expression produces {}",
                xp.ty,
                inner.cost_type()
            )));
        }
        for p in outer.params() {
            if p.name != x && inner.param(&p.name).is_some() {
                return Err(Error::Expr(format!(
                    "`{x}` must be the only shared parameter, `{}` is shared too",
                    p.name
                )));
            }
        }
        if let Some(pi) = inner.param(x) {
            if pi.ty != xp.ty {
                return Err(Error::Expr(format!(
                    "shared parameter `{x}` declared with two different types"
                )));
            }
        }
        let mut params: Vec<Parameter> = outer
            .params()
            .iter()
            .filter(|p| p.name != x)
            .cloned()
            .collect();
        for p in inner.params() {
            if !params.iter().any(|q| q.name == p.name) {
                params.push(p.clone());
            }
        }
        let cost = outer.cost_type().clone();
        let schema = outer.schema().clone();
        Ok(QreExpr::wrap(
            QreNode::Subst {
                outer,
                param: x.to_string(),
                inner,
            },
            schema,
            Domain::Known(dom_outer),
            params,
            cost,
        ))
    }

    /// Conditional choice over disjoint domains: the primary's value where it
    /// is defined, the fallback's elsewhere.
    pub fn else_(primary: QreExpr, fallback: QreExpr) -> Result<QreExpr> {
        if primary.schema() != fallback.schema() {
            return Err(Error::Expr("children built over different schemas".into()));
        }
        if primary.cost_type() != fallback.cost_type() {
            return Err(Error::Expr(format!(
                "conditional branches must share one cost type, got {} and {}",
                primary.cost_type(),
                fallback.cost_type()
            )));
        }
        let dp = primary.domain().known()?.clone();
        let df = fallback.domain().known()?.clone();
        if !regex::check_disjoint(&dp, &df)? {
            return Err(Error::Expr(
                "conditional choice requires disjoint domains".into(),
            ));
        }
        let params = merge_shared_params(&[primary.clone(), fallback.clone()])?;
        let cost = primary.cost_type().clone();
        let schema = primary.schema().clone();
        let domain = Domain::Known(SymbolicRegex::unchecked_union(dp, df));
        Ok(QreExpr::wrap(
            QreNode::Else { primary, fallback },
            schema,
            domain,
            params,
            cost,
        ))
    }

    /// Splits each stream into the unique left/right decomposition and
    /// combines the two values with a binary operation.
    pub fn split(op: Op, left: QreExpr, right: QreExpr) -> Result<QreExpr> {
        if left.schema() != right.schema() {
            return Err(Error::Expr("children built over different schemas".into()));
        }
        if op.arity() != 2 {
            return Err(Error::Expr("split needs a binary operation".into()));
        }
        let dl = left.domain().known()?.clone();
        let dr = right.domain().known()?.clone();
        if !regex::check_unamb_concat(&dl, &dr)? {
            return Err(Error::Expr(
                "split requires unambiguously concatenable domains".into(),
            ));
        }
        for p in left.params() {
            if right.param(&p.name).is_some() {
                return Err(Error::Expr(format!(
                    "split children must not share parameters (`{}`)",
                    p.name
                )));
            }
        }
        let mut params = left.params().to_vec();
        params.extend(right.params().iter().cloned());
        let cost = op.result_type(&[left.cost_type().clone(), right.cost_type().clone()])?;
        let schema = left.schema().clone();
        let domain = Domain::Known(SymbolicRegex::unchecked_concat(dl, dr));
        Ok(QreExpr::wrap(
            QreNode::Split { op, left, right },
            schema,
            domain,
            params,
            cost,
        ))
    }

    /// Iterates the body over the unique block factorization, threading the
    /// accumulated value through parameter `p`. On the empty stream the
    /// result is the seed `v(p)`. A body that does not read `p` is legal:
    /// the result is then the last block's value (or the seed).
    pub fn iter(p: &str, body: QreExpr) -> Result<QreExpr> {
        let pd = match body.param(p) {
            Some(d) => {
                if &d.ty != body.cost_type() {
                    return Err(Error::Expr(format!(
                        "iteration parameter `{p}` has type {}, body produces {}",
                        d.ty,
                        body.cost_type()
                    )));
                }
                d.clone()
            }
            None => Parameter::new(p, body.cost_type().clone()),
        };
        let db = body.domain().known()?.clone();
        if !regex::check_unamb_iter(&db)? {
            return Err(Error::Expr(
                "iteration requires a nonempty, unambiguously iterable domain".into(),
            ));
        }
        let cost = body.cost_type().clone();
        let schema = body.schema().clone();
        let domain = Domain::Known(SymbolicRegex::unchecked_star(db));
        // the accumulator stays in the list (it seeds the fold); any other
        // body parameters remain free and resolve against the valuation
        let mut params = body.params().to_vec();
        if !params.iter().any(|q| q.name == pd.name) {
            params.push(pd);
        }
        Ok(QreExpr::wrap(
            QreNode::Iter {
                param: p.to_string(),
                body,
            },
            schema,
            domain,
            params,
            cost,
        ))
    }

    /// Star of an arbitrary body with the accumulator bound to a seed:
    /// matches the body's language iterated, evaluating to the last block's
    /// value (the seed on the empty stream).
    pub fn star_value(body: QreExpr, seed: Value) -> Result<QreExpr> {
        let mut name = String::from("_acc");
        let mut k = 0;
        while body.param(&name).is_some() {
            k += 1;
            name = format!("_acc{k}");
        }
        QreExpr::bind(QreExpr::iter(&name, body)?, &name, seed)
    }

    /// Feeds the producer's per-prefix outputs, where defined, as the input
    /// stream of the consumer.
    pub fn compose(producer: QreExpr, consumer: QreExpr) -> Result<QreExpr> {
        if !producer.params().is_empty() {
            return Err(Error::Expr(
                "composition producer must be parameter-free".into(),
            ));
        }
        let kind = Value::stream_kind(producer.cost_type())?;
        if consumer.schema().len() != 1 || consumer.schema().kind(0) != &kind {
            return Err(Error::Expr(format!(
                "consumer schema must be a single {kind:?} field matching the producer's cost type"
            )));
        }
        // A consumer total over its derived stream makes the composition
        // total over raw streams; otherwise the domain is not carried.
        let domain = match consumer.domain() {
            Domain::Known(r) if r.dfa().is_total() => {
                Domain::Known(SymbolicRegex::universal(producer.schema().clone()))
            }
            _ => Domain::Opaque,
        };
        let params = consumer.params().to_vec();
        let cost = consumer.cost_type().clone();
        let schema = producer.schema().clone();
        Ok(QreExpr::wrap(
            QreNode::Compose { producer, consumer },
            schema,
            domain,
            params,
            cost,
        ))
    }

    /// Binds one parameter to a constant, removing it from the parameter
    /// list.
    pub fn bind(inner: QreExpr, param: &str, value: Value) -> Result<QreExpr> {
        let pd = inner
            .param(param)
            .ok_or_else(|| Error::Expr(format!("`{param}` is not a parameter")))?;
        if pd.ty != value.cost_type() {
            return Err(Error::Expr(format!(
                "parameter `{param}` has type {}, bound value has {}",
                pd.ty,
                value.cost_type()
            )));
        }
        let params: Vec<Parameter> = inner
            .params()
            .iter()
            .filter(|p| p.name != param)
            .cloned()
            .collect();
        let schema = inner.schema().clone();
        let domain = inner.domain().clone();
        let cost = inner.cost_type().clone();
        Ok(QreExpr::wrap(
            QreNode::Bind {
                inner,
                param: param.to_string(),
                value,
            },
            schema,
            domain,
            params,
            cost,
        ))
    }

    /// Star with a constant value: matches `pred*` and always evaluates to
    /// `value`. The internal seed parameter is bound away.
    pub fn const_star(
        schema: Arc<DataItemSchema>,
        pred: Predicate,
        value: Value,
    ) -> Result<QreExpr> {
        QreExpr::star_value(QreExpr::basic_const(schema, pred, value.clone())?, value)
    }

    /// Expression over all streams whose value is the named parameter.
    pub fn param_carrier(schema: Arc<DataItemSchema>, param: Parameter) -> Result<QreExpr> {
        let body = QreExpr::basic(
            schema,
            Predicate::True,
            CostTerm::param(&param.name),
            std::slice::from_ref(&param),
        )?;
        QreExpr::iter(&param.name, body)
    }

    /// Schema for the derived stream this expression emits under
    /// composition.
    pub fn emission_schema(&self) -> Result<Arc<DataItemSchema>> {
        let kind = Value::stream_kind(self.cost_type())?;
        Ok(DataItemSchema::single("value", kind))
    }
}

/// Single-field schemas for derived streams.
pub fn derived_schema(kind: FieldKind) -> Arc<DataItemSchema> {
    DataItemSchema::single("value", kind)
}

fn merge_disjoint_params(children: &[QreExpr]) -> Result<Vec<Parameter>> {
    let mut out: Vec<Parameter> = Vec::new();
    for c in children {
        for p in c.params() {
            if out.iter().any(|q| q.name == p.name) {
                return Err(Error::Expr(format!(
                    "children must have pairwise disjoint parameters (`{}`)",
                    p.name
                )));
            }
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn merge_shared_params(children: &[QreExpr]) -> Result<Vec<Parameter>> {
    let mut out: Vec<Parameter> = Vec::new();
    for c in children {
        for p in c.params() {
            match out.iter().find(|q| q.name == p.name) {
                None => out.push(p.clone()),
                Some(q) if q.ty == p.ty => {}
                Some(q) => {
                    return Err(Error::Expr(format!(
                        "parameter `{}` declared with two types ({} and {})",
                        p.name, q.ty, p.ty
                    )))
                }
            }
        }
    }
    Ok(out)
}
