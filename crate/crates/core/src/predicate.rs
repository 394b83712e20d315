//! Predicates over data items: boolean combinations of per-field interval
//! constraints.
//!
//! Atoms compare one field against a constant (`<`, `<=`, `=`, `>=`, `>` for
//! numeric fields, equality for booleans and enum labels). Satisfiability is
//! decided by rewriting to disjunctive normal form and intersecting per-field
//! intervals, so the cost is a function of formula size only. Satisfiable
//! conjunctions also yield a deterministic witness item, which is what makes
//! minterm construction reproducible.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::schema::{DataItem, DataItemSchema, FieldKind, FieldValue};

/// Comparison operator of a numeric atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cmp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Cmp {
    fn holds_f64(self, x: f64, c: f64) -> bool {
        match self {
            Cmp::Lt => x < c,
            Cmp::Le => x <= c,
            Cmp::Eq => x == c,
            Cmp::Ge => x >= c,
            Cmp::Gt => x > c,
        }
    }

    fn holds_i64(self, x: i64, c: i64) -> bool {
        match self {
            Cmp::Lt => x < c,
            Cmp::Le => x <= c,
            Cmp::Eq => x == c,
            Cmp::Ge => x >= c,
            Cmp::Gt => x > c,
        }
    }
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Eq => "=",
            Cmp::Ge => ">=",
            Cmp::Gt => ">",
        };
        f.write_str(s)
    }
}

/// Test applied by an atom to its field.
#[derive(Debug, Clone, PartialEq)]
pub enum AtomTest {
    Real(Cmp, f64),
    Int(Cmp, i64),
    Bool(bool),
    /// Field equals the enum label with this index.
    Label(usize),
}

/// One atomic constraint: a test on a single field.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub field: usize,
    pub test: AtomTest,
}

impl Atom {
    pub fn eval(&self, item: &DataItem) -> bool {
        match (&self.test, item.get(self.field)) {
            (AtomTest::Real(cmp, c), FieldValue::Real(x)) => cmp.holds_f64(*x, *c),
            (AtomTest::Int(cmp, c), FieldValue::Int(x)) => cmp.holds_i64(*x, *c),
            (AtomTest::Bool(b), FieldValue::Bool(x)) => x == b,
            (AtomTest::Label(l), FieldValue::Label(x)) => x == l,
            _ => false,
        }
    }

    /// Total order used to canonicalize atom sets (f64 compared by bits).
    pub fn canonical_key(&self) -> (usize, u8, i64) {
        match &self.test {
            AtomTest::Real(cmp, c) => (self.field, *cmp as u8, c.to_bits() as i64),
            AtomTest::Int(cmp, c) => (self.field, 16 + *cmp as u8, *c),
            AtomTest::Bool(b) => (self.field, 32, *b as i64),
            AtomTest::Label(l) => (self.field, 33, *l as i64),
        }
    }
}

impl Eq for Atom {}

impl PartialOrd for Atom {
    fn partial_cmp(&self, other: &Atom) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Atom {
    fn cmp(&self, other: &Atom) -> Ordering {
        self.canonical_key().cmp(&other.canonical_key())
    }
}

/// Boolean formula over atoms, with explicit `True` / `False` constants.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    True,
    False,
    Atom(Arc<Atom>),
    Not(Arc<Predicate>),
    And(Arc<Predicate>, Arc<Predicate>),
    Or(Arc<Predicate>, Arc<Predicate>),
}

impl Predicate {
    /// Atom constructor for real fields; rejects kind mismatches and
    /// non-finite constants.
    pub fn real_cmp(
        schema: &DataItemSchema,
        field: &str,
        cmp: Cmp,
        c: f64,
    ) -> Result<Predicate> {
        let idx = schema.index_of(field)?;
        if *schema.kind(idx) != FieldKind::Real {
            return Err(Error::Predicate(format!("field `{field}` is not real")));
        }
        if !c.is_finite() {
            return Err(Error::Predicate("comparison constant must be finite".into()));
        }
        Ok(Predicate::Atom(Arc::new(Atom {
            field: idx,
            test: AtomTest::Real(cmp, c),
        })))
    }

    pub fn int_cmp(schema: &DataItemSchema, field: &str, cmp: Cmp, c: i64) -> Result<Predicate> {
        let idx = schema.index_of(field)?;
        if *schema.kind(idx) != FieldKind::Int {
            return Err(Error::Predicate(format!("field `{field}` is not integer")));
        }
        Ok(Predicate::Atom(Arc::new(Atom {
            field: idx,
            test: AtomTest::Int(cmp, c),
        })))
    }

    pub fn bool_is(schema: &DataItemSchema, field: &str, b: bool) -> Result<Predicate> {
        let idx = schema.index_of(field)?;
        if *schema.kind(idx) != FieldKind::Bool {
            return Err(Error::Predicate(format!("field `{field}` is not boolean")));
        }
        Ok(Predicate::Atom(Arc::new(Atom {
            field: idx,
            test: AtomTest::Bool(b),
        })))
    }

    pub fn label_is(schema: &DataItemSchema, field: &str, label: &str) -> Result<Predicate> {
        let idx = schema.index_of(field)?;
        let labels = match schema.kind(idx) {
            FieldKind::Enum(l) => l.clone(),
            _ => {
                return Err(Error::Predicate(format!(
                    "field `{field}` is not an enumeration"
                )))
            }
        };
        let li = labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Predicate(format!("unknown label `{label}`")))?;
        Ok(Predicate::Atom(Arc::new(Atom {
            field: idx,
            test: AtomTest::Label(li),
        })))
    }

    pub fn not(p: Predicate) -> Predicate {
        Predicate::Not(Arc::new(p))
    }

    pub fn and(a: Predicate, b: Predicate) -> Predicate {
        Predicate::And(Arc::new(a), Arc::new(b))
    }

    pub fn or(a: Predicate, b: Predicate) -> Predicate {
        Predicate::Or(Arc::new(a), Arc::new(b))
    }

    /// Truth of the predicate on a conforming item.
    pub fn eval(&self, item: &DataItem) -> bool {
        match self {
            Predicate::True => true,
            Predicate::False => false,
            Predicate::Atom(a) => a.eval(item),
            Predicate::Not(p) => !p.eval(item),
            Predicate::And(a, b) => a.eval(item) && b.eval(item),
            Predicate::Or(a, b) => a.eval(item) || b.eval(item),
        }
    }

    /// Truth of the predicate on an item validated against `schema`.
    pub fn eval_checked(&self, schema: &DataItemSchema, item: &DataItem) -> Result<bool> {
        schema.check_item(item)?;
        Ok(self.eval(item))
    }

    /// Collects the distinct atoms appearing in the formula, in canonical
    /// order.
    pub fn atoms(&self) -> Vec<Arc<Atom>> {
        let mut out: Vec<Arc<Atom>> = Vec::new();
        self.collect_atoms(&mut out);
        out.sort_by(|a, b| a.cmp(b));
        out.dedup_by(|a, b| a == b);
        out
    }

    fn collect_atoms(&self, out: &mut Vec<Arc<Atom>>) {
        match self {
            Predicate::True | Predicate::False => {}
            Predicate::Atom(a) => out.push(a.clone()),
            Predicate::Not(p) => p.collect_atoms(out),
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    /// Decides satisfiability by DNF expansion over per-field intervals;
    /// returns a witness item for satisfiable predicates.
    pub fn satisfiable(&self, schema: &DataItemSchema) -> Option<DataItem> {
        for conjunct in self.dnf(false) {
            if let Some(witness) = conjunct_witness(schema, &conjunct) {
                return Some(witness);
            }
        }
        None
    }

    /// DNF as a list of conjuncts, each a list of signed atoms.
    /// `negated` pushes an enclosing negation inward.
    fn dnf(&self, negated: bool) -> Vec<Vec<(Arc<Atom>, bool)>> {
        match (self, negated) {
            (Predicate::True, false) | (Predicate::False, true) => vec![vec![]],
            (Predicate::True, true) | (Predicate::False, false) => vec![],
            (Predicate::Atom(a), sign) => vec![vec![(a.clone(), !sign)]],
            (Predicate::Not(p), sign) => p.dnf(!sign),
            (Predicate::And(a, b), false) | (Predicate::Or(a, b), true) => {
                let left = a.dnf(negated);
                let right = b.dnf(negated);
                let mut out = Vec::with_capacity(left.len() * right.len());
                for l in &left {
                    for r in &right {
                        let mut c = l.clone();
                        c.extend(r.iter().cloned());
                        out.push(c);
                    }
                }
                out
            }
            (Predicate::Or(a, b), false) | (Predicate::And(a, b), true) => {
                let mut out = a.dnf(negated);
                out.extend(b.dnf(negated));
                out
            }
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::True => write!(f, "true"),
            Predicate::False => write!(f, "false"),
            Predicate::Atom(a) => match &a.test {
                AtomTest::Real(cmp, c) => write!(f, "f{} {cmp} {c}", a.field),
                AtomTest::Int(cmp, c) => write!(f, "f{} {cmp} {c}", a.field),
                AtomTest::Bool(b) => write!(f, "f{} = {b}", a.field),
                AtomTest::Label(l) => write!(f, "f{} = #{l}", a.field),
            },
            Predicate::Not(p) => write!(f, "!({p})"),
            Predicate::And(a, b) => write!(f, "({a} & {b})"),
            Predicate::Or(a, b) => write!(f, "({a} | {b})"),
        }
    }
}

/// One endpoint of a numeric interval.
#[derive(Debug, Clone, Copy)]
enum Bound {
    Open(f64),
    Closed(f64),
    Unbounded,
}

/// Accumulated constraint on one field inside a DNF conjunct.
#[derive(Debug, Clone)]
enum FieldConstraint {
    Real {
        lo: Bound,
        hi: Bound,
        excluded: Vec<f64>,
    },
    Int {
        lo: Option<i64>,
        hi: Option<i64>,
        excluded: Vec<i64>,
    },
    Bool {
        allowed: [bool; 2],
    },
    Enum {
        allowed: Vec<bool>,
    },
}

impl FieldConstraint {
    fn fresh(kind: &FieldKind) -> FieldConstraint {
        match kind {
            FieldKind::Real => FieldConstraint::Real {
                lo: Bound::Unbounded,
                hi: Bound::Unbounded,
                excluded: Vec::new(),
            },
            FieldKind::Int => FieldConstraint::Int {
                lo: None,
                hi: None,
                excluded: Vec::new(),
            },
            FieldKind::Bool => FieldConstraint::Bool {
                allowed: [true, true],
            },
            FieldKind::Enum(labels) => FieldConstraint::Enum {
                allowed: vec![true; labels.len()],
            },
        }
    }

    /// Narrows the constraint by one signed atom; returns false when the
    /// constraint is already known to be empty.
    fn add(&mut self, test: &AtomTest, positive: bool) -> bool {
        match (self, test) {
            (FieldConstraint::Real { lo, hi, excluded }, AtomTest::Real(cmp, c)) => {
                let (cmp, c) = (*cmp, *c);
                match (cmp, positive) {
                    (Cmp::Lt, true) | (Cmp::Ge, false) => tighten_hi(hi, Bound::Open(c)),
                    (Cmp::Le, true) | (Cmp::Gt, false) => tighten_hi(hi, Bound::Closed(c)),
                    (Cmp::Gt, true) | (Cmp::Le, false) => tighten_lo(lo, Bound::Open(c)),
                    (Cmp::Ge, true) | (Cmp::Lt, false) => tighten_lo(lo, Bound::Closed(c)),
                    (Cmp::Eq, true) => {
                        tighten_lo(lo, Bound::Closed(c));
                        tighten_hi(hi, Bound::Closed(c));
                    }
                    (Cmp::Eq, false) => excluded.push(c),
                }
                true
            }
            (FieldConstraint::Int { lo, hi, excluded }, AtomTest::Int(cmp, c)) => {
                let (cmp, c) = (*cmp, *c);
                match (cmp, positive) {
                    (Cmp::Lt, true) | (Cmp::Ge, false) => tighten_int_hi(hi, c - 1),
                    (Cmp::Le, true) | (Cmp::Gt, false) => tighten_int_hi(hi, c),
                    (Cmp::Gt, true) | (Cmp::Le, false) => tighten_int_lo(lo, c + 1),
                    (Cmp::Ge, true) | (Cmp::Lt, false) => tighten_int_lo(lo, c),
                    (Cmp::Eq, true) => {
                        tighten_int_lo(lo, c);
                        tighten_int_hi(hi, c);
                    }
                    (Cmp::Eq, false) => excluded.push(c),
                }
                true
            }
            (FieldConstraint::Bool { allowed }, AtomTest::Bool(b)) => {
                // allowed[0] <-> true, allowed[1] <-> false
                allowed[(*b == positive) as usize] = false;
                allowed[0] || allowed[1]
            }
            (FieldConstraint::Enum { allowed }, AtomTest::Label(l)) => {
                if positive {
                    for (i, a) in allowed.iter_mut().enumerate() {
                        if i != *l {
                            *a = false;
                        }
                    }
                } else {
                    allowed[*l] = false;
                }
                allowed.iter().any(|a| *a)
            }
            _ => unreachable!("atom kind checked at construction"),
        }
    }

    /// Picks the deterministic witness value, or None if empty.
    fn witness(&self) -> Option<FieldValue> {
        match self {
            FieldConstraint::Real { lo, hi, excluded } => {
                real_witness(*lo, *hi, excluded).map(FieldValue::Real)
            }
            FieldConstraint::Int { lo, hi, excluded } => {
                int_witness(*lo, *hi, excluded).map(FieldValue::Int)
            }
            FieldConstraint::Bool { allowed } => {
                if allowed[1] {
                    Some(FieldValue::Bool(false))
                } else if allowed[0] {
                    Some(FieldValue::Bool(true))
                } else {
                    None
                }
            }
            FieldConstraint::Enum { allowed } => allowed
                .iter()
                .position(|a| *a)
                .map(FieldValue::Label),
        }
    }
}

fn tighten_lo(lo: &mut Bound, nb: Bound) {
    let replace = match (*lo, nb) {
        (Bound::Unbounded, _) => true,
        (Bound::Closed(a), Bound::Closed(b)) | (Bound::Open(a), Bound::Open(b)) => b > a,
        (Bound::Closed(a), Bound::Open(b)) => b >= a,
        (Bound::Open(a), Bound::Closed(b)) => b > a,
        (_, Bound::Unbounded) => false,
    };
    if replace {
        *lo = nb;
    }
}

fn tighten_hi(hi: &mut Bound, nb: Bound) {
    let replace = match (*hi, nb) {
        (Bound::Unbounded, _) => true,
        (Bound::Closed(a), Bound::Closed(b)) | (Bound::Open(a), Bound::Open(b)) => b < a,
        (Bound::Closed(a), Bound::Open(b)) => b <= a,
        (Bound::Open(a), Bound::Closed(b)) => b < a,
        (_, Bound::Unbounded) => false,
    };
    if replace {
        *hi = nb;
    }
}

fn tighten_int_lo(lo: &mut Option<i64>, c: i64) {
    *lo = Some(lo.map_or(c, |a| a.max(c)));
}

fn tighten_int_hi(hi: &mut Option<i64>, c: i64) {
    *hi = Some(hi.map_or(c, |a| a.min(c)));
}

/// Deterministic representative of a real interval minus finitely many
/// excluded points: closed endpoints first, then evenly spaced interior
/// candidates (one more candidate than there are exclusions, so one is free).
fn real_witness(lo: Bound, hi: Bound, excluded: &[f64]) -> Option<f64> {
    let nonempty = match (lo, hi) {
        (Bound::Unbounded, _) | (_, Bound::Unbounded) => true,
        (Bound::Closed(a), Bound::Closed(b)) => a <= b,
        (Bound::Closed(a), Bound::Open(b))
        | (Bound::Open(a), Bound::Closed(b))
        | (Bound::Open(a), Bound::Open(b)) => a < b,
    };
    if !nonempty {
        return None;
    }
    let inside = |x: f64| -> bool {
        let lo_ok = match lo {
            Bound::Unbounded => true,
            Bound::Closed(a) => x >= a,
            Bound::Open(a) => x > a,
        };
        let hi_ok = match hi {
            Bound::Unbounded => true,
            Bound::Closed(b) => x <= b,
            Bound::Open(b) => x < b,
        };
        lo_ok && hi_ok && !excluded.contains(&x)
    };
    let n = excluded.len() as i64;
    let mut candidates: Vec<f64> = Vec::new();
    match (lo, hi) {
        (Bound::Unbounded, Bound::Unbounded) => {
            candidates.extend((0..=n).map(|k| k as f64));
        }
        (Bound::Closed(a), Bound::Unbounded) | (Bound::Open(a), Bound::Unbounded) => {
            candidates.push(a);
            candidates.extend((1..=n + 1).map(|k| a + k as f64));
        }
        (Bound::Unbounded, Bound::Closed(b)) | (Bound::Unbounded, Bound::Open(b)) => {
            candidates.push(b);
            candidates.extend((1..=n + 1).map(|k| b - k as f64));
        }
        (Bound::Closed(a), _) | (Bound::Open(a), _) => {
            let b = match hi {
                Bound::Closed(b) | Bound::Open(b) => b,
                Bound::Unbounded => unreachable!(),
            };
            candidates.push(a);
            candidates.push(b);
            // interior points a + (b-a) * k / (n + 2)
            for k in 1..=n + 1 {
                candidates.push(a + (b - a) * k as f64 / (n + 2) as f64);
            }
        }
    }
    candidates.into_iter().find(|&x| inside(x))
}

fn int_witness(lo: Option<i64>, hi: Option<i64>, excluded: &[i64]) -> Option<i64> {
    let base = match (lo, hi) {
        (Some(a), Some(b)) if a > b => return None,
        (Some(a), _) => a,
        (None, Some(b)) => b - excluded.len() as i64,
        (None, None) => 0,
    };
    for k in 0..=excluded.len() as i64 {
        let x = base + k;
        let hi_ok = hi.map_or(true, |b| x <= b);
        if hi_ok && !excluded.contains(&x) {
            return Some(x);
        }
    }
    None
}

/// Witness of a conjunction of signed atoms, or None if unsatisfiable.
pub(crate) fn conjunct_witness(
    schema: &DataItemSchema,
    literals: &[(Arc<Atom>, bool)],
) -> Option<DataItem> {
    let mut constraints: Vec<FieldConstraint> = schema
        .fields()
        .iter()
        .map(|(_, k)| FieldConstraint::fresh(k))
        .collect();
    for (atom, positive) in literals {
        if !constraints[atom.field].add(&atom.test, *positive) {
            return None;
        }
    }
    let mut values = Vec::with_capacity(constraints.len());
    for c in &constraints {
        values.push(c.witness()?);
    }
    Some(DataItem::new(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minterm::Minterms;

    fn schema_v() -> Arc<DataItemSchema> {
        DataItemSchema::reals(&["v"])
    }

    fn lt(schema: &DataItemSchema, c: f64) -> Predicate {
        Predicate::real_cmp(schema, "v", Cmp::Lt, c).unwrap()
    }

    #[test]
    fn eval_atoms_and_constants() {
        let s = schema_v();
        let p = lt(&s, 1.0);
        assert!(p.eval(&DataItem::real(0.5)));
        assert!(!p.eval(&DataItem::real(1.0)));
        assert!(Predicate::True.eval(&DataItem::real(42.0)));
        // (v <= 1) | (v >= 1) holds at the shared endpoint
        let le = Predicate::real_cmp(&s, "v", Cmp::Le, 1.0).unwrap();
        let ge = Predicate::real_cmp(&s, "v", Cmp::Ge, 1.0).unwrap();
        assert!(Predicate::or(le, ge).eval(&DataItem::real(1.0)));
    }

    #[test]
    fn eval_checked_rejects_mismatched_item() {
        let s = schema_v();
        let p = lt(&s, 1.0);
        let wrong = DataItem::new(vec![FieldValue::Int(0)]);
        assert!(p.eval_checked(&s, &wrong).is_err());
    }

    #[test]
    fn sat_empty_interval() {
        let s = schema_v();
        let p = Predicate::and(
            lt(&s, 1.0),
            Predicate::real_cmp(&s, "v", Cmp::Gt, 2.0).unwrap(),
        );
        assert!(p.satisfiable(&s).is_none());
        assert!(lt(&s, 1.0).satisfiable(&s).is_some());
    }

    #[test]
    fn sat_negated_tautology_is_empty() {
        // !((v <= 1) | (v > 1)) is unsatisfiable; cross-check against every
        // minterm witness of the formula's own atoms.
        let s = schema_v();
        let le = Predicate::real_cmp(&s, "v", Cmp::Le, 1.0).unwrap();
        let gt = Predicate::real_cmp(&s, "v", Cmp::Gt, 1.0).unwrap();
        let p = Predicate::not(Predicate::or(le, gt));
        assert!(p.satisfiable(&s).is_none());
        let mt = Minterms::from_atoms(s.clone(), p.atoms()).unwrap();
        assert!(mt.cells().iter().all(|c| !p.eval(&c.witness)));
    }

    #[test]
    fn witnesses_satisfy_their_predicates() {
        let s = schema_v();
        let cases = vec![
            lt(&s, 1.0),
            Predicate::real_cmp(&s, "v", Cmp::Ge, 3.0).unwrap(),
            Predicate::and(
                Predicate::real_cmp(&s, "v", Cmp::Gt, 0.0).unwrap(),
                lt(&s, 1e-9),
            ),
            Predicate::and(
                Predicate::not(Predicate::real_cmp(&s, "v", Cmp::Eq, 0.0).unwrap()),
                Predicate::and(
                    Predicate::real_cmp(&s, "v", Cmp::Ge, 0.0).unwrap(),
                    Predicate::real_cmp(&s, "v", Cmp::Le, 0.5).unwrap(),
                ),
            ),
        ];
        for p in cases {
            let w = p.satisfiable(&s).expect("satisfiable");
            assert!(p.eval(&w), "witness fails {p}");
        }
    }

    #[test]
    fn enum_and_bool_constraints() {
        let s = DataItemSchema::new(vec![
            ("c".into(), FieldKind::enum_labels(&["0", "A", "V"])),
            ("b".into(), FieldKind::Bool),
        ])
        .unwrap();
        let pa = Predicate::label_is(&s, "c", "A").unwrap();
        let pv = Predicate::label_is(&s, "c", "V").unwrap();
        assert!(Predicate::and(pa.clone(), pv).satisfiable(&s).is_none());
        let w = Predicate::and(
            pa,
            Predicate::bool_is(&s, "b", true).unwrap(),
        )
        .satisfiable(&s)
        .unwrap();
        assert_eq!(w.values[0], FieldValue::Label(1));
        assert_eq!(w.values[1], FieldValue::Bool(true));
    }
}
