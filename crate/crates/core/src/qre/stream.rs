//! Compiled streaming evaluator.
//!
//! An expression compiles to a plan tree; the evaluator instantiates mutable
//! state per node and advances it one item at a time. Combinators that
//! multiply match attempts — iteration (one attempt per live block boundary)
//! and split (one right-side attempt per completed prefix) — keep a shadow
//! run of their domain automaton per attempt and prune two attempts that
//! land in the same automaton state: the construction-time unambiguity
//! checks guarantee such attempts can never both produce output, and a state
//! that would let either finish would let both finish. This caps the number
//! of live attempts by the automaton size, which is what makes the per-item
//! step cost independent of how many items have been consumed.
//!
//! Substitution is the one combinator whose value can depend on a parameter
//! that is only known when the stream ends; values under a pending parameter
//! are carried as thunks and forced at the join.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::automaton::Dfa;
use crate::error::{Error, Result};
use crate::schema::{DataItem, DataItemSchema};

use super::expr::{Domain, QreExpr, QreNode};
use super::op::Op;
use super::term::{CostTerm, ParameterValuation};
use super::value::Value;

// ---------------------------------------------------------------------------
// lazy values

type ThunkFn = dyn Fn(&ParameterValuation) -> Value + Send + Sync;

/// A value that may still depend on pending substitution parameters.
#[derive(Clone)]
enum Lazy {
    Ready(Value),
    Thunk(Arc<ThunkFn>),
}

impl Lazy {
    fn force(&self, v: &ParameterValuation) -> Value {
        match self {
            Lazy::Ready(val) => val.clone(),
            Lazy::Thunk(f) => f(v),
        }
    }

    fn ready(&self) -> Value {
        match self {
            Lazy::Ready(val) => val.clone(),
            Lazy::Thunk(_) => panic!("value forced outside any pending-parameter scope"),
        }
    }
}

fn apply_op_lazy(op: &Op, args: Vec<Lazy>) -> Lazy {
    if args.iter().all(|a| matches!(a, Lazy::Ready(_))) {
        let vals: Vec<Value> = args.iter().map(|a| a.ready()).collect();
        Lazy::Ready(op.apply(&vals))
    } else {
        let op = op.clone();
        Lazy::Thunk(Arc::new(move |v| {
            let vals: Vec<Value> = args.iter().map(|a| a.force(v)).collect();
            op.apply(&vals)
        }))
    }
}

fn term_eval_lazy(term: &CostTerm, item: &DataItem, env: &Env) -> Lazy {
    match term {
        CostTerm::Param(name) => env
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter `{name}` in compiled evaluator"))
            .clone(),
        CostTerm::Field(idx) => Lazy::Ready(Value::from_field(item.get(*idx))),
        CostTerm::Const(c) => Lazy::Ready(c.clone()),
        CostTerm::Apply(op, args) => {
            let lazies: Vec<Lazy> = args.iter().map(|a| term_eval_lazy(a, item, env)).collect();
            apply_op_lazy(op, lazies)
        }
    }
}

// ---------------------------------------------------------------------------
// attempt environments and tags

/// Immutable per-attempt parameter environment.
#[derive(Clone)]
struct Env(Arc<Vec<(Arc<str>, Lazy)>>);

impl Env {
    fn empty() -> Env {
        Env(Arc::new(Vec::new()))
    }

    fn from_valuation(v: &ParameterValuation) -> Env {
        Env(Arc::new(
            v.iter()
                .map(|(n, val)| (Arc::from(n), Lazy::Ready(val.clone())))
                .collect(),
        ))
    }

    fn get(&self, name: &str) -> Option<&Lazy> {
        self.0.iter().find(|(n, _)| &**n == name).map(|(_, l)| l)
    }

    fn with(&self, name: &str, lazy: Lazy) -> Env {
        let mut entries: Vec<(Arc<str>, Lazy)> = (*self.0).clone();
        if let Some(e) = entries.iter_mut().find(|(n, _)| &**n == name) {
            e.1 = lazy;
        } else {
            entries.push((Arc::from(name), lazy));
        }
        Env(Arc::new(entries))
    }
}

struct JoinCell {
    parent: Tag,
}

struct SubstCell {
    parent: Tag,
}

struct SplitChain {
    env: Env,
    parent: Tag,
}

struct RightAttempt {
    left_val: Lazy,
    chain: Arc<SplitChain>,
    alive: AtomicBool,
}

struct IterChain {
    env: Env,
    parent: Tag,
}

struct BlockAttempt {
    chain: Arc<IterChain>,
    alive: AtomicBool,
}

/// Provenance of a match attempt; walking the chain answers liveness.
#[derive(Clone)]
enum Tag {
    Root,
    CostJoin(Arc<JoinCell>),
    SubstOut(Arc<SubstCell>),
    SubstIn(Arc<SubstCell>),
    SplitLeft(Arc<SplitChain>),
    SplitRight(Arc<RightAttempt>),
    IterBlock(Arc<BlockAttempt>),
}

impl Tag {
    fn alive(&self) -> bool {
        match self {
            Tag::Root => true,
            Tag::CostJoin(c) => c.parent.alive(),
            Tag::SubstOut(c) | Tag::SubstIn(c) => c.parent.alive(),
            Tag::SplitLeft(c) => c.parent.alive(),
            Tag::SplitRight(a) => a.alive.load(Ordering::Relaxed) && a.chain.parent.alive(),
            Tag::IterBlock(b) => b.alive.load(Ordering::Relaxed) && b.chain.parent.alive(),
        }
    }
}

struct Attempt {
    env: Env,
    tag: Tag,
}

struct Output {
    value: Lazy,
    tag: Tag,
}

/// Step-wide instrumentation.
#[derive(Default)]
pub struct StepStats {
    /// Node activations: one per start or step of any plan node.
    pub activations: u64,
}

// ---------------------------------------------------------------------------
// shadow tracking of attempt automaton states

trait Prunable {
    fn kill(&self);
    fn is_alive(&self) -> bool;
}

impl Prunable for Arc<RightAttempt> {
    fn kill(&self) {
        self.alive.store(false, Ordering::Relaxed);
    }
    fn is_alive(&self) -> bool {
        self.alive.load(Ordering::Relaxed)
    }
}

impl Prunable for Arc<BlockAttempt> {
    fn kill(&self) {
        self.alive.store(false, Ordering::Relaxed);
    }
    fn is_alive(&self) -> bool {
        self.alive.load(Ordering::Relaxed)
    }
}

enum Slot<T> {
    Live(T),
    Dead,
}

/// One shadow automaton run per live attempt. Two attempts in one state are
/// both pruned; attempts in states that cannot reach acceptance are pruned.
struct Shadow<T: Prunable> {
    dfa: Arc<Dfa>,
    slots: HashMap<usize, Slot<T>>,
}

impl<T: Prunable> Shadow<T> {
    fn new(dfa: Arc<Dfa>) -> Shadow<T> {
        Shadow {
            dfa,
            slots: HashMap::new(),
        }
    }

    /// Registers a fresh attempt at the initial state. Returns false when the
    /// attempt was pruned immediately.
    fn register(&mut self, attempt: T) -> bool {
        let q = self.dfa.init();
        if !self.dfa.is_live(q) {
            attempt.kill();
            return false;
        }
        self.insert(q, attempt)
    }

    fn insert(&mut self, q: usize, attempt: T) -> bool {
        match self.slots.get_mut(&q) {
            None => {
                self.slots.insert(q, Slot::Live(attempt));
                true
            }
            Some(slot) => {
                if let Slot::Live(prev) = slot {
                    prev.kill();
                }
                attempt.kill();
                *slot = Slot::Dead;
                false
            }
        }
    }

    /// Advances every tracked attempt by one item.
    fn advance(&mut self, item: &DataItem) {
        let cell = self.dfa.minterms().classify(item);
        let old = std::mem::take(&mut self.slots);
        for (q, slot) in old {
            let att = match slot {
                Slot::Live(a) => a,
                Slot::Dead => continue,
            };
            if !att.is_alive() {
                continue;
            }
            let nq = self.dfa.step(q, cell);
            if !self.dfa.is_live(nq) {
                att.kill();
                continue;
            }
            self.insert(nq, att);
        }
    }
}

// ---------------------------------------------------------------------------
// compiled plan

enum Plan {
    Basic {
        pred: crate::predicate::Predicate,
        term: CostTerm,
    },
    CostOp {
        op: Op,
        children: Vec<Arc<Plan>>,
    },
    Subst {
        outer: Arc<Plan>,
        inner: Arc<Plan>,
        param: String,
        /// Whether pending parameters from enclosing substitutions may still
        /// appear in this node's joined values.
        outer_pending: bool,
    },
    Else {
        primary: Arc<Plan>,
        fallback: Arc<Plan>,
    },
    Split {
        op: Op,
        left: Arc<Plan>,
        right: Arc<Plan>,
        right_dfa: Arc<Dfa>,
    },
    Iter {
        param: String,
        body: Arc<Plan>,
        body_dfa: Arc<Dfa>,
    },
    Compose {
        producer: Arc<Plan>,
        consumer: Arc<Plan>,
        consumer_schema: Arc<DataItemSchema>,
    },
    Bind {
        inner: Arc<Plan>,
        param: String,
        value: Value,
    },
}

fn compile_plan(expr: &QreExpr, pending: bool) -> Result<Arc<Plan>> {
    let plan = match expr.node() {
        QreNode::Basic { pred, term } => Plan::Basic {
            pred: pred.clone(),
            term: term.clone(),
        },
        QreNode::CostOp { op, children } => Plan::CostOp {
            op: op.clone(),
            children: children
                .iter()
                .map(|c| compile_plan(c, pending))
                .collect::<Result<_>>()?,
        },
        QreNode::Subst {
            outer,
            param,
            inner,
        } => Plan::Subst {
            outer: compile_plan(outer, true)?,
            inner: compile_plan(inner, pending)?,
            param: param.clone(),
            outer_pending: pending,
        },
        QreNode::Else { primary, fallback } => Plan::Else {
            primary: compile_plan(primary, pending)?,
            fallback: compile_plan(fallback, pending)?,
        },
        QreNode::Split { op, left, right } => {
            let rd = match right.domain() {
                Domain::Known(r) => r.dfa(),
                Domain::Opaque => {
                    return Err(Error::Expr("split right side must have a known domain".into()))
                }
            };
            Plan::Split {
                op: op.clone(),
                left: compile_plan(left, pending)?,
                right: compile_plan(right, pending)?,
                right_dfa: rd,
            }
        }
        QreNode::Iter { param, body } => {
            let bd = match body.domain() {
                Domain::Known(r) => r.dfa(),
                Domain::Opaque => {
                    return Err(Error::Expr("iteration body must have a known domain".into()))
                }
            };
            Plan::Iter {
                param: param.clone(),
                body: compile_plan(body, pending)?,
                body_dfa: bd,
            }
        }
        QreNode::Compose { producer, consumer } => Plan::Compose {
            producer: compile_plan(producer, false)?,
            consumer: compile_plan(consumer, pending)?,
            consumer_schema: consumer.schema().clone(),
        },
        QreNode::Bind {
            inner,
            param,
            value,
        } => Plan::Bind {
            inner: compile_plan(inner, pending)?,
            param: param.clone(),
            value: value.clone(),
        },
    };
    Ok(Arc::new(plan))
}

// ---------------------------------------------------------------------------
// runtime state

enum NodeState {
    Basic {
        plan: Arc<Plan>,
        fresh: Vec<Attempt>,
    },
    CostOp {
        plan: Arc<Plan>,
        children: Vec<NodeState>,
    },
    Subst {
        plan: Arc<Plan>,
        outer: Box<NodeState>,
        inner: Box<NodeState>,
    },
    Else {
        primary: Box<NodeState>,
        fallback: Box<NodeState>,
    },
    Split {
        plan: Arc<Plan>,
        left: Box<NodeState>,
        right: Box<NodeState>,
        shadow: Shadow<Arc<RightAttempt>>,
    },
    Iter {
        plan: Arc<Plan>,
        body: Box<NodeState>,
        shadow: Shadow<Arc<BlockAttempt>>,
    },
    Compose {
        plan: Arc<Plan>,
        attempts: Vec<ComposeAttempt>,
    },
    Bind {
        plan: Arc<Plan>,
        inner: Box<NodeState>,
    },
}

struct ComposeAttempt {
    parent_tag: Tag,
    producer: Box<NodeState>,
    consumer: Box<NodeState>,
    last: Option<Lazy>,
}

fn new_state(plan: &Arc<Plan>) -> NodeState {
    match &**plan {
        Plan::Basic { .. } => NodeState::Basic {
            plan: plan.clone(),
            fresh: Vec::new(),
        },
        Plan::CostOp { children, .. } => NodeState::CostOp {
            plan: plan.clone(),
            children: children.iter().map(new_state).collect(),
        },
        Plan::Subst { outer, inner, .. } => NodeState::Subst {
            plan: plan.clone(),
            outer: Box::new(new_state(outer)),
            inner: Box::new(new_state(inner)),
        },
        Plan::Else { primary, fallback } => NodeState::Else {
            primary: Box::new(new_state(primary)),
            fallback: Box::new(new_state(fallback)),
        },
        Plan::Split {
            left,
            right,
            right_dfa,
            ..
        } => NodeState::Split {
            plan: plan.clone(),
            left: Box::new(new_state(left)),
            right: Box::new(new_state(right)),
            shadow: Shadow::new(right_dfa.clone()),
        },
        Plan::Iter { body, body_dfa, .. } => NodeState::Iter {
            plan: plan.clone(),
            body: Box::new(new_state(body)),
            shadow: Shadow::new(body_dfa.clone()),
        },
        Plan::Compose { .. } => NodeState::Compose {
            plan: plan.clone(),
            attempts: Vec::new(),
        },
        Plan::Bind { inner, .. } => NodeState::Bind {
            plan: plan.clone(),
            inner: Box::new(new_state(inner)),
        },
    }
}

impl NodeState {
    fn start(&mut self, att: Attempt, stats: &mut StepStats, out: &mut Vec<Output>) {
        stats.activations += 1;
        match self {
            NodeState::Basic { fresh, .. } => {
                fresh.push(att);
            }
            NodeState::CostOp { plan, children } => {
                let cell = Arc::new(JoinCell { parent: att.tag });
                let mut per_child: Vec<Vec<Output>> = Vec::with_capacity(children.len());
                for child in children.iter_mut() {
                    let mut tmp = Vec::new();
                    child.start(
                        Attempt {
                            env: att.env.clone(),
                            tag: Tag::CostJoin(cell.clone()),
                        },
                        stats,
                        &mut tmp,
                    );
                    per_child.push(tmp);
                }
                join_cost_op(plan, &per_child, out);
            }
            NodeState::Subst { plan, outer, inner } => {
                let (param, _) = subst_parts(plan);
                let cell = Arc::new(SubstCell { parent: att.tag });
                let pname: Arc<str> = Arc::from(param);
                let marker = Lazy::Thunk(Arc::new(move |v: &ParameterValuation| {
                    v.require(&pname)
                        .expect("pending parameter bound at join")
                        .clone()
                }));
                let mut out_tmp = Vec::new();
                let mut in_tmp = Vec::new();
                outer.start(
                    Attempt {
                        env: att.env.with(param, marker),
                        tag: Tag::SubstOut(cell.clone()),
                    },
                    stats,
                    &mut out_tmp,
                );
                inner.start(
                    Attempt {
                        env: att.env,
                        tag: Tag::SubstIn(cell),
                    },
                    stats,
                    &mut in_tmp,
                );
                join_subst(plan, &out_tmp, &in_tmp, out);
            }
            NodeState::Else { primary, fallback } => {
                primary.start(
                    Attempt {
                        env: att.env.clone(),
                        tag: att.tag.clone(),
                    },
                    stats,
                    out,
                );
                fallback.start(att, stats, out);
            }
            NodeState::Split {
                plan,
                left,
                right,
                shadow,
            } => {
                let chain = Arc::new(SplitChain {
                    env: att.env.clone(),
                    parent: att.tag,
                });
                let mut louts = Vec::new();
                left.start(
                    Attempt {
                        env: att.env,
                        tag: Tag::SplitLeft(chain.clone()),
                    },
                    stats,
                    &mut louts,
                );
                spawn_right_attempts(plan, right, shadow, &louts, stats, out);
            }
            NodeState::Iter { plan, body, shadow } => {
                let (param, _) = iter_parts(plan);
                let chain = Arc::new(IterChain {
                    env: att.env.clone(),
                    parent: att.tag.clone(),
                });
                // the empty factorization: seed value at the start position
                let seed = att
                    .env
                    .get(param)
                    .unwrap_or_else(|| panic!("iteration parameter `{param}` unbound"))
                    .clone();
                out.push(Output {
                    value: seed,
                    tag: att.tag,
                });
                spawn_block(plan, body, shadow, &chain, chain.env.clone(), stats, out);
            }
            NodeState::Compose { plan, attempts } => {
                let (producer, consumer, _) = compose_parts(plan);
                let mut producer_state = Box::new(new_state(producer));
                let mut consumer_state = Box::new(new_state(consumer));
                // producer runs with no parameters; its start-time output (a
                // match of the empty prefix) is not an emission
                let mut ignored = Vec::new();
                producer_state.start(
                    Attempt {
                        env: Env::empty(),
                        tag: att.tag.clone(),
                    },
                    stats,
                    &mut ignored,
                );
                let mut couts = Vec::new();
                consumer_state.start(
                    Attempt {
                        env: att.env,
                        tag: att.tag.clone(),
                    },
                    stats,
                    &mut couts,
                );
                let last = latest_alive(couts);
                if let Some(v) = &last {
                    out.push(Output {
                        value: v.clone(),
                        tag: att.tag.clone(),
                    });
                }
                attempts.push(ComposeAttempt {
                    parent_tag: att.tag,
                    producer: producer_state,
                    consumer: consumer_state,
                    last,
                });
            }
            NodeState::Bind { plan, inner } => {
                let (param, value) = bind_parts(plan);
                inner.start(
                    Attempt {
                        env: att.env.with(param, Lazy::Ready(value.clone())),
                        tag: att.tag,
                    },
                    stats,
                    out,
                );
            }
        }
    }

    fn step(&mut self, item: &DataItem, stats: &mut StepStats, out: &mut Vec<Output>) {
        stats.activations += 1;
        match self {
            NodeState::Basic { plan, fresh } => {
                let (pred, term) = basic_parts(plan);
                for att in fresh.drain(..) {
                    if att.tag.alive() && pred.eval(item) {
                        out.push(Output {
                            value: term_eval_lazy(term, item, &att.env),
                            tag: att.tag,
                        });
                    }
                }
            }
            NodeState::CostOp { plan, children } => {
                let mut per_child: Vec<Vec<Output>> = Vec::with_capacity(children.len());
                for child in children.iter_mut() {
                    let mut tmp = Vec::new();
                    child.step(item, stats, &mut tmp);
                    per_child.push(tmp);
                }
                join_cost_op(plan, &per_child, out);
            }
            NodeState::Subst { plan, outer, inner } => {
                let mut out_tmp = Vec::new();
                let mut in_tmp = Vec::new();
                outer.step(item, stats, &mut out_tmp);
                inner.step(item, stats, &mut in_tmp);
                join_subst(plan, &out_tmp, &in_tmp, out);
            }
            NodeState::Else { primary, fallback } => {
                primary.step(item, stats, out);
                fallback.step(item, stats, out);
            }
            NodeState::Split {
                plan,
                left,
                right,
                shadow,
            } => {
                shadow.advance(item);
                let mut louts = Vec::new();
                let mut routs = Vec::new();
                left.step(item, stats, &mut louts);
                right.step(item, stats, &mut routs);
                emit_split_outputs(plan, &routs, out);
                spawn_right_attempts(plan, right, shadow, &louts, stats, out);
            }
            NodeState::Iter { plan, body, shadow } => {
                shadow.advance(item);
                let mut bouts = Vec::new();
                body.step(item, stats, &mut bouts);
                for b in bouts {
                    let block = match &b.tag {
                        Tag::IterBlock(block) => block.clone(),
                        _ => unreachable!("iteration body outputs carry block tags"),
                    };
                    if !b.tag.alive() {
                        continue;
                    }
                    // a block ends here: the prefix factorizes, so the
                    // iteration matches and a new block attempt begins
                    out.push(Output {
                        value: b.value.clone(),
                        tag: block.chain.parent.clone(),
                    });
                    let (param, _) = iter_parts(plan);
                    let env = block.chain.env.with(param, b.value);
                    let chain = block.chain.clone();
                    spawn_block(plan, body, shadow, &chain, env, stats, out);
                }
            }
            NodeState::Compose { plan, attempts } => {
                let (_, _, schema) = compose_parts(plan);
                attempts.retain(|a| a.parent_tag.alive());
                for a in attempts.iter_mut() {
                    let mut pouts = Vec::new();
                    a.producer.step(item, stats, &mut pouts);
                    if let Some(v) = latest_alive(pouts) {
                        let emission = v
                            .ready()
                            .to_item(schema)
                            .expect("producer emissions typecheck at construction");
                        let mut couts = Vec::new();
                        a.consumer.step(&emission, stats, &mut couts);
                        a.last = latest_alive(couts);
                    }
                    if let Some(v) = &a.last {
                        out.push(Output {
                            value: v.clone(),
                            tag: a.parent_tag.clone(),
                        });
                    }
                }
            }
            NodeState::Bind { inner, .. } => {
                inner.step(item, stats, out);
            }
        }
    }
}

fn basic_parts(plan: &Plan) -> (&crate::predicate::Predicate, &CostTerm) {
    match plan {
        Plan::Basic { pred, term } => (pred, term),
        _ => unreachable!(),
    }
}

fn subst_parts(plan: &Plan) -> (&str, bool) {
    match plan {
        Plan::Subst {
            param,
            outer_pending,
            ..
        } => (param, *outer_pending),
        _ => unreachable!(),
    }
}

fn iter_parts(plan: &Plan) -> (&str, &Arc<Dfa>) {
    match plan {
        Plan::Iter {
            param, body_dfa, ..
        } => (param, body_dfa),
        _ => unreachable!(),
    }
}

fn compose_parts(plan: &Plan) -> (&Arc<Plan>, &Arc<Plan>, &Arc<DataItemSchema>) {
    match plan {
        Plan::Compose {
            producer,
            consumer,
            consumer_schema,
        } => (producer, consumer, consumer_schema),
        _ => unreachable!(),
    }
}

fn bind_parts(plan: &Plan) -> (&str, &Value) {
    match plan {
        Plan::Bind { param, value, .. } => (param, value),
        _ => unreachable!(),
    }
}

/// Joins per-child outputs of a cost operation by join cell.
fn join_cost_op(plan: &Plan, per_child: &[Vec<Output>], out: &mut Vec<Output>) {
    let op = match plan {
        Plan::CostOp { op, .. } => op,
        _ => unreachable!(),
    };
    let k = per_child.len();
    let mut groups: HashMap<*const JoinCell, (Arc<JoinCell>, Vec<Option<Lazy>>)> = HashMap::new();
    for (i, outs) in per_child.iter().enumerate() {
        for o in outs {
            if let Tag::CostJoin(cell) = &o.tag {
                let entry = groups
                    .entry(Arc::as_ptr(cell))
                    .or_insert_with(|| (cell.clone(), vec![None; k]));
                entry.1[i] = Some(o.value.clone());
            }
        }
    }
    for (_, (cell, vals)) in groups {
        if !cell.parent.alive() {
            continue;
        }
        if vals.iter().all(Option::is_some) {
            let args: Vec<Lazy> = vals.into_iter().map(Option::unwrap).collect();
            out.push(Output {
                value: apply_op_lazy(op, args),
                tag: cell.parent.clone(),
            });
        } else {
            // children share one domain, so either all match or none do
            debug_assert!(
                vals.iter().all(Option::is_none),
                "cost-op children disagree on a match position"
            );
        }
    }
}

/// Joins outer/inner outputs of a substitution and resolves the pending
/// parameter.
fn join_subst(plan: &Plan, out_tmp: &[Output], in_tmp: &[Output], out: &mut Vec<Output>) {
    let (param, outer_pending) = subst_parts(plan);
    let mut groups: HashMap<*const SubstCell, (Arc<SubstCell>, Option<Lazy>, Option<Lazy>)> =
        HashMap::new();
    for o in out_tmp {
        if let Tag::SubstOut(cell) = &o.tag {
            groups
                .entry(Arc::as_ptr(cell))
                .or_insert_with(|| (cell.clone(), None, None))
                .1 = Some(o.value.clone());
        }
    }
    for o in in_tmp {
        if let Tag::SubstIn(cell) = &o.tag {
            groups
                .entry(Arc::as_ptr(cell))
                .or_insert_with(|| (cell.clone(), None, None))
                .2 = Some(o.value.clone());
        }
    }
    for (_, (cell, outer_v, inner_v)) in groups {
        if !cell.parent.alive() {
            continue;
        }
        match (outer_v, inner_v) {
            (Some(ov), Some(iv)) => {
                let resolved = resolve_subst(param, outer_pending, ov, iv);
                out.push(Output {
                    value: resolved,
                    tag: cell.parent.clone(),
                });
            }
            (None, None) => {}
            _ => debug_assert!(false, "substitution sides disagree on a match position"),
        }
    }
}

fn resolve_subst(param: &str, outer_pending: bool, outer_v: Lazy, inner_v: Lazy) -> Lazy {
    match outer_v {
        // the outer value never touched the pending parameter
        Lazy::Ready(v) => Lazy::Ready(v),
        Lazy::Thunk(f) => {
            if outer_pending {
                let pname = param.to_string();
                Lazy::Thunk(Arc::new(move |v: &ParameterValuation| {
                    let bound = v.with(&pname, inner_v.force(v));
                    f(&bound)
                }))
            } else {
                let empty = ParameterValuation::empty();
                let bound = empty.with(param, inner_v.force(&empty));
                Lazy::Ready(f(&bound))
            }
        }
    }
}

/// Spawns one right-side attempt per left match, guarded by the shadow run.
fn spawn_right_attempts(
    plan: &Plan,
    right: &mut NodeState,
    shadow: &mut Shadow<Arc<RightAttempt>>,
    louts: &[Output],
    stats: &mut StepStats,
    out: &mut Vec<Output>,
) {
    for lo in louts {
        let chain = match &lo.tag {
            Tag::SplitLeft(chain) => chain.clone(),
            _ => unreachable!("split left outputs carry chain tags"),
        };
        if !lo.tag.alive() {
            continue;
        }
        let ratt = Arc::new(RightAttempt {
            left_val: lo.value.clone(),
            chain,
            alive: AtomicBool::new(true),
        });
        if !shadow.register(ratt.clone()) {
            continue;
        }
        let mut routs = Vec::new();
        right.start(
            Attempt {
                env: ratt.chain.env.clone(),
                tag: Tag::SplitRight(ratt),
            },
            stats,
            &mut routs,
        );
        emit_split_outputs(plan, &routs, out);
    }
}

fn emit_split_outputs(plan: &Plan, routs: &[Output], out: &mut Vec<Output>) {
    let op = match plan {
        Plan::Split { op, .. } => op,
        _ => unreachable!(),
    };
    for ro in routs {
        let ratt = match &ro.tag {
            Tag::SplitRight(r) => r.clone(),
            _ => unreachable!("split right outputs carry attempt tags"),
        };
        if !ro.tag.alive() {
            continue;
        }
        out.push(Output {
            value: apply_op_lazy(op, vec![ratt.left_val.clone(), ro.value.clone()]),
            tag: ratt.chain.parent.clone(),
        });
    }
}

/// Starts a fresh block attempt for an iteration chain.
fn spawn_block(
    plan: &Plan,
    body: &mut NodeState,
    shadow: &mut Shadow<Arc<BlockAttempt>>,
    chain: &Arc<IterChain>,
    env: Env,
    stats: &mut StepStats,
    out: &mut Vec<Output>,
) {
    let _ = plan;
    let batt = Arc::new(BlockAttempt {
        chain: chain.clone(),
        alive: AtomicBool::new(true),
    });
    if !shadow.register(batt.clone()) {
        return;
    }
    let mut bouts = Vec::new();
    body.start(
        Attempt {
            env,
            tag: Tag::IterBlock(batt),
        },
        stats,
        &mut bouts,
    );
    // iteration bodies never match the empty stream
    debug_assert!(bouts.is_empty(), "iteration body matched the empty stream");
    let _ = out;
}

// ---------------------------------------------------------------------------
// public evaluator

/// Single-consumer stepping evaluator for one compiled expression and one
/// initial valuation.
pub struct StreamEvaluator {
    schema: Arc<DataItemSchema>,
    root: NodeState,
    current: Option<Value>,
    stats: StepStats,
}

/// Compiles the expression for the given (complete) valuation.
pub fn compile_streaming(expr: &QreExpr, v: &ParameterValuation) -> Result<StreamEvaluator> {
    for p in expr.params() {
        let bound = v.require(&p.name)?;
        if bound.cost_type() != p.ty {
            return Err(Error::Param(format!(
                "parameter `{}` expects {}, valuation holds {}",
                p.name,
                p.ty,
                bound.cost_type()
            )));
        }
    }
    let plan = compile_plan(expr, false)?;
    let mut root = new_state(&plan);
    let mut stats = StepStats::default();
    let mut outs = Vec::new();
    root.start(
        Attempt {
            env: Env::from_valuation(v),
            tag: Tag::Root,
        },
        &mut stats,
        &mut outs,
    );
    let current = top_output(outs);
    Ok(StreamEvaluator {
        schema: expr.schema().clone(),
        root,
        current,
        stats,
    })
}

fn latest_alive(outs: Vec<Output>) -> Option<Lazy> {
    let mut live: Vec<Lazy> = outs
        .into_iter()
        .filter(|o| o.tag.alive())
        .map(|o| o.value)
        .collect();
    debug_assert!(live.len() <= 1, "ambiguous output at one position");
    live.pop()
}

fn top_output(outs: Vec<Output>) -> Option<Value> {
    latest_alive(outs).map(|l| l.ready())
}

impl StreamEvaluator {
    /// Consumes one item, advancing every live attempt.
    pub fn step(&mut self, item: &DataItem) -> Result<()> {
        self.schema.check_item(item)?;
        let mut outs = Vec::new();
        self.root.step(item, &mut self.stats, &mut outs);
        self.current = top_output(outs);
        Ok(())
    }

    /// Value of the expression on the prefix consumed so far; None when the
    /// prefix is outside the domain.
    pub fn output(&self) -> Option<&Value> {
        self.current.as_ref()
    }

    /// Total node activations so far (starts plus steps).
    pub fn activations(&self) -> u64 {
        self.stats.activations
    }
}

// evaluators hold only Arc/atomic shared state, so they can move across
// threads between steps
const _: () = {
    fn assert_send<T: Send>() {}
    fn check() {
        assert_send::<StreamEvaluator>();
    }
    let _ = check;
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicate::{Cmp, Predicate};
    use crate::qre::eval::eval_reference;
    use crate::qre::op::{op_add, op_gt, op_right};
    use crate::qre::term::Parameter;
    use crate::schema::DataItemSchema;

    fn schema() -> Arc<DataItemSchema> {
        DataItemSchema::reals(&["v"])
    }

    fn items(vals: &[f64]) -> Vec<DataItem> {
        vals.iter().map(|&v| DataItem::real(v)).collect()
    }

    fn run_both(
        expr: &QreExpr,
        w: &[DataItem],
        v: &ParameterValuation,
    ) -> (Option<Value>, Option<Value>) {
        let reference = eval_reference(expr, w, v).unwrap();
        let mut ev = compile_streaming(expr, v).unwrap();
        for item in w {
            ev.step(item).unwrap();
        }
        (reference, ev.output().cloned())
    }

    fn assert_agree(expr: &QreExpr, w: &[DataItem], v: &ParameterValuation) {
        let (r, s) = run_both(expr, w, v);
        assert_eq!(r, s, "reference vs streaming on {w:?}");
    }

    #[test]
    fn basic_single_item_lifecycle() {
        let s = schema();
        let b = QreExpr::basic(
            s.clone(),
            Predicate::real_cmp(&s, "v", Cmp::Lt, 1.0).unwrap(),
            CostTerm::field(&s, "v").unwrap(),
            &[],
        )
        .unwrap();
        let v = ParameterValuation::empty();
        let mut ev = compile_streaming(&b, &v).unwrap();
        assert_eq!(ev.output(), None);
        ev.step(&DataItem::real(0.5)).unwrap();
        assert_eq!(ev.output(), Some(&Value::Real(0.5)));
        ev.step(&DataItem::real(0.5)).unwrap();
        assert_eq!(ev.output(), None);
    }

    #[test]
    fn iter_add_streams_the_count() {
        let s = schema();
        let body = QreExpr::basic(
            s.clone(),
            Predicate::True,
            CostTerm::apply(op_add(), vec![CostTerm::param("p"), CostTerm::real(1.0)]),
            &[Parameter::real("p")],
        )
        .unwrap();
        let counter = QreExpr::iter("p", body).unwrap();
        let v = ParameterValuation::of(&[("p", Value::Real(0.0))]);
        let mut ev = compile_streaming(&counter, &v).unwrap();
        assert_eq!(ev.output(), Some(&Value::Real(0.0)));
        for k in 1..=5 {
            ev.step(&DataItem::real(9.0)).unwrap();
            assert_eq!(ev.output(), Some(&Value::Real(k as f64)));
        }
    }

    #[test]
    fn split_gt_streaming_matches_reference() {
        let s = schema();
        let pick = || {
            QreExpr::basic(
                s.clone(),
                Predicate::True,
                CostTerm::field(&s, "v").unwrap(),
                &[],
            )
            .unwrap()
        };
        let cmp = QreExpr::split(op_gt(), pick(), pick()).unwrap();
        let v = ParameterValuation::empty();
        for w in [items(&[5.0, 3.0]), items(&[3.0, 5.0]), items(&[1.0]), items(&[1.0, 2.0, 3.0])] {
            assert_agree(&cmp, &w, &v);
        }
    }

    #[test]
    fn variable_length_blocks_factor_online() {
        // blocks (v>=1)(v<1)* : boundaries are not known until the next
        // block begins, exercising concurrent block attempts
        let s = schema();
        let head = QreExpr::basic(
            s.clone(),
            Predicate::real_cmp(&s, "v", Cmp::Ge, 1.0).unwrap(),
            CostTerm::apply(op_add(), vec![CostTerm::param("q"), CostTerm::real(1.0)]),
            &[Parameter::real("q")],
        )
        .unwrap();
        let tail = QreExpr::const_star(
            s.clone(),
            Predicate::real_cmp(&s, "v", Cmp::Lt, 1.0).unwrap(),
            Value::Real(0.0),
        )
        .unwrap();
        let block = QreExpr::split(crate::qre::op::op_left(), head, tail).unwrap();
        let counter = QreExpr::iter("q", block).unwrap();
        let v = ParameterValuation::of(&[("q", Value::Real(0.0))]);
        for w in [
            items(&[]),
            items(&[1.0]),
            items(&[1.0, 0.0, 0.0]),
            items(&[1.0, 0.0, 2.0, 3.0, 0.5, 0.25, 9.0]),
            items(&[0.5]), // outside the starred language
            items(&[1.0, 0.0, 0.0, 5.0]),
        ] {
            assert_agree(&counter, &w, &v);
        }
    }

    #[test]
    fn compose_streaming_matches_reference() {
        let s = schema();
        let above = Predicate::real_cmp(&s, "v", Cmp::Gt, 5.0).unwrap();
        let below = Predicate::not(above.clone());
        let marker = QreExpr::else_(
            QreExpr::basic_const(s.clone(), above, Value::Real(1.0)).unwrap(),
            QreExpr::basic_const(s.clone(), below, Value::Real(0.0)).unwrap(),
        )
        .unwrap();
        let skip = QreExpr::const_star(s.clone(), Predicate::True, Value::Real(0.0)).unwrap();
        let latest = QreExpr::split(op_right(), skip, marker).unwrap();
        let ds = latest.emission_schema().unwrap();
        let sum_body = QreExpr::basic(
            ds.clone(),
            Predicate::True,
            CostTerm::apply(
                op_add(),
                vec![CostTerm::param("a"), CostTerm::field(&ds, "value").unwrap()],
            ),
            &[Parameter::real("a")],
        )
        .unwrap();
        let summer =
            QreExpr::bind(QreExpr::iter("a", sum_body).unwrap(), "a", Value::Real(0.0)).unwrap();
        let composed = QreExpr::compose(latest, summer).unwrap();
        let v = ParameterValuation::empty();
        for w in [
            items(&[]),
            items(&[6.0]),
            items(&[6.0, 1.0, -7.0, 9.0]),
            items(&[0.0, 0.0, 0.0]),
        ] {
            assert_agree(&composed, &w, &v);
        }
    }

    #[test]
    fn subst_resolves_pending_parameter_at_join() {
        let s = schema();
        let count_body = QreExpr::basic(
            s.clone(),
            Predicate::True,
            CostTerm::apply(op_add(), vec![CostTerm::param("n"), CostTerm::real(1.0)]),
            &[Parameter::real("n")],
        )
        .unwrap();
        let count = QreExpr::bind(
            QreExpr::iter("n", count_body).unwrap(),
            "n",
            Value::Real(0.0),
        )
        .unwrap();
        let x_carrier = QreExpr::param_carrier(s.clone(), Parameter::real("x")).unwrap();
        let doubler = QreExpr::cost_op(
            crate::qre::op::op_mult(),
            vec![
                x_carrier,
                QreExpr::const_star(s.clone(), Predicate::True, Value::Real(2.0)).unwrap(),
            ],
        )
        .unwrap();
        let sub = QreExpr::subst(doubler, "x", count).unwrap();
        let v = ParameterValuation::empty();
        for w in [items(&[]), items(&[9.0]), items(&[9.0, 9.0, 9.0])] {
            assert_agree(&sub, &w, &v);
        }
    }

    #[test]
    fn evaluator_reports_activations() {
        let s = schema();
        let b = QreExpr::basic_const(s, Predicate::True, Value::Real(1.0)).unwrap();
        let v = ParameterValuation::empty();
        let mut ev = compile_streaming(&b, &v).unwrap();
        let before = ev.activations();
        ev.step(&DataItem::real(0.0)).unwrap();
        assert!(ev.activations() > before);
    }
}
