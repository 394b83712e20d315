//! Symbolic unambiguous regular expressions over data-item predicates.
//!
//! Construction enforces the side conditions that make matching unambiguous:
//! unions require disjoint languages, concatenations require a unique split
//! of every word, and stars require a nonempty language with unique block
//! factorization. A value of [`SymbolicRegex`] is therefore well formed by
//! construction; the successful check is the proof token.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::automaton::{self, Dfa};
use crate::error::{Error, Result};
use crate::minterm::Minterms;
use crate::predicate::Predicate;
use crate::schema::{DataItem, DataItemSchema};

/// Structure of a symbolic regular expression.
#[derive(Debug, Clone)]
pub enum ReNode {
    Epsilon,
    Atom(Predicate),
    Union(SymbolicRegex, SymbolicRegex),
    Concat(SymbolicRegex, SymbolicRegex),
    Star(SymbolicRegex),
}

#[derive(Debug)]
struct ReInner {
    node: ReNode,
    schema: Arc<DataItemSchema>,
    dfa: OnceLock<Arc<Dfa>>,
}

/// A symbolic regular expression tied to one schema.
#[derive(Debug, Clone)]
pub struct SymbolicRegex {
    inner: Arc<ReInner>,
}

impl SymbolicRegex {
    fn wrap(node: ReNode, schema: Arc<DataItemSchema>) -> SymbolicRegex {
        SymbolicRegex {
            inner: Arc::new(ReInner {
                node,
                schema,
                dfa: OnceLock::new(),
            }),
        }
    }

    /// The empty-string language {ε}.
    pub fn epsilon(schema: Arc<DataItemSchema>) -> SymbolicRegex {
        SymbolicRegex::wrap(ReNode::Epsilon, schema)
    }

    /// Single-item language of a predicate.
    pub fn atom(schema: Arc<DataItemSchema>, pred: Predicate) -> SymbolicRegex {
        SymbolicRegex::wrap(ReNode::Atom(pred), schema)
    }

    /// Language of all single items.
    pub fn any_item(schema: Arc<DataItemSchema>) -> SymbolicRegex {
        SymbolicRegex::atom(schema, Predicate::True)
    }

    /// All streams over the schema.
    pub fn universal(schema: Arc<DataItemSchema>) -> SymbolicRegex {
        SymbolicRegex::star(SymbolicRegex::any_item(schema)).expect("any-item star is iterable")
    }

    /// Union, requiring disjoint languages.
    pub fn union(a: SymbolicRegex, b: SymbolicRegex) -> Result<SymbolicRegex> {
        check_same_schema(&a, &b)?;
        if !check_disjoint(&a, &b)? {
            return Err(Error::Regex(
                "union requires disjoint languages".into(),
            ));
        }
        let schema = a.schema().clone();
        Ok(SymbolicRegex::wrap(ReNode::Union(a, b), schema))
    }

    /// Concatenation, requiring unambiguous concatenability.
    pub fn concat(a: SymbolicRegex, b: SymbolicRegex) -> Result<SymbolicRegex> {
        check_same_schema(&a, &b)?;
        if !check_unamb_concat(&a, &b)? {
            return Err(Error::Regex(
                "concatenation is ambiguous: some word admits two splits".into(),
            ));
        }
        let schema = a.schema().clone();
        Ok(SymbolicRegex::wrap(ReNode::Concat(a, b), schema))
    }

    /// Iteration, requiring a nonempty, unambiguously iterable language.
    pub fn star(a: SymbolicRegex) -> Result<SymbolicRegex> {
        if !check_unamb_iter(&a)? {
            return Err(Error::Regex(
                "star requires a nonempty, unambiguously iterable language".into(),
            ));
        }
        let schema = a.schema().clone();
        Ok(SymbolicRegex::wrap(ReNode::Star(a), schema))
    }

    /// Concatenation chain `r₁ r₂ … rₖ` built left-to-right.
    pub fn concat_all(parts: Vec<SymbolicRegex>) -> Result<SymbolicRegex> {
        let mut it = parts.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::Regex("empty concatenation".into()))?;
        it.try_fold(first, SymbolicRegex::concat)
    }

    /// Union chain of pairwise disjoint parts.
    pub fn union_all(parts: Vec<SymbolicRegex>) -> Result<SymbolicRegex> {
        let mut it = parts.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::Regex("empty union".into()))?;
        it.try_fold(first, SymbolicRegex::union)
    }

    /// k-fold repetition of `r` (k >= 1), balanced to keep check sizes small.
    pub fn power(r: &SymbolicRegex, k: usize) -> Result<SymbolicRegex> {
        match k {
            0 => Err(Error::Regex("power requires k >= 1".into())),
            1 => Ok(r.clone()),
            _ => {
                let left = SymbolicRegex::power(r, k / 2)?;
                let right = SymbolicRegex::power(r, k - k / 2)?;
                SymbolicRegex::concat(left, right)
            }
        }
    }

    pub(crate) fn unchecked_concat(a: SymbolicRegex, b: SymbolicRegex) -> SymbolicRegex {
        let schema = a.schema().clone();
        SymbolicRegex::wrap(ReNode::Concat(a, b), schema)
    }

    pub(crate) fn unchecked_union(a: SymbolicRegex, b: SymbolicRegex) -> SymbolicRegex {
        let schema = a.schema().clone();
        SymbolicRegex::wrap(ReNode::Union(a, b), schema)
    }

    pub(crate) fn unchecked_star(a: SymbolicRegex) -> SymbolicRegex {
        let schema = a.schema().clone();
        SymbolicRegex::wrap(ReNode::Star(a), schema)
    }

    pub fn node(&self) -> &ReNode {
        &self.inner.node
    }

    pub fn schema(&self) -> &Arc<DataItemSchema> {
        &self.inner.schema
    }

    /// Distinct atoms of the whole expression, canonically ordered.
    pub fn atoms(&self) -> Vec<Arc<crate::predicate::Atom>> {
        let mut preds = Vec::new();
        self.collect_preds(&mut preds);
        let mut atoms = Vec::new();
        for p in preds {
            atoms.extend(p.atoms());
        }
        atoms.sort();
        atoms.dedup_by(|a, b| a == b);
        atoms
    }

    fn collect_preds(&self, out: &mut Vec<Predicate>) {
        match self.node() {
            ReNode::Epsilon => {}
            ReNode::Atom(p) => out.push(p.clone()),
            ReNode::Union(a, b) | ReNode::Concat(a, b) => {
                a.collect_preds(out);
                b.collect_preds(out);
            }
            ReNode::Star(a) => a.collect_preds(out),
        }
    }

    /// Deterministic automaton over this expression's own minterm alphabet,
    /// built once and cached.
    pub fn dfa(&self) -> Arc<Dfa> {
        self.inner
            .dfa
            .get_or_init(|| {
                let mt = Minterms::from_atoms(self.schema().clone(), self.atoms())
                    .expect("well-formed regex has buildable minterms");
                Arc::new(Dfa::from_regex(self, mt))
            })
            .clone()
    }

    /// Membership of a stream in the language, via the compiled automaton.
    pub fn matches(&self, w: &[DataItem]) -> bool {
        self.dfa().matches_items(w)
    }

    /// Membership with schema validation of every item.
    pub fn matches_checked(&self, w: &[DataItem]) -> Result<bool> {
        for item in w {
            self.schema().check_item(item)?;
        }
        Ok(self.matches(w))
    }
}

impl fmt::Display for SymbolicRegex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            ReNode::Epsilon => write!(f, "eps"),
            ReNode::Atom(p) => write!(f, "[{p}]"),
            ReNode::Union(a, b) => write!(f, "({a} | {b})"),
            ReNode::Concat(a, b) => write!(f, "({a} {b})"),
            ReNode::Star(a) => write!(f, "{a}*"),
        }
    }
}

fn check_same_schema(a: &SymbolicRegex, b: &SymbolicRegex) -> Result<()> {
    if a.schema() != b.schema() {
        return Err(Error::Regex("expressions built over different schemas".into()));
    }
    Ok(())
}

/// Minterms over the union of two expressions' atoms.
fn joint_minterms(a: &SymbolicRegex, b: &SymbolicRegex) -> Result<Arc<Minterms>> {
    let mut atoms = a.atoms();
    atoms.extend(b.atoms());
    Minterms::from_atoms(a.schema().clone(), atoms)
}

/// True iff the two languages share no word (product-automaton emptiness).
pub fn check_disjoint(a: &SymbolicRegex, b: &SymbolicRegex) -> Result<bool> {
    check_same_schema(a, b)?;
    let mt = joint_minterms(a, b)?;
    let da = Dfa::from_regex(a, mt.clone());
    let db = Dfa::from_regex(b, mt);
    Ok(automaton::languages_disjoint(&da, &db))
}

/// True iff every word of `⟦a⟧⟦b⟧` splits uniquely into an `a`-part and a
/// `b`-part.
pub fn check_unamb_concat(a: &SymbolicRegex, b: &SymbolicRegex) -> Result<bool> {
    check_same_schema(a, b)?;
    let mt = joint_minterms(a, b)?;
    let da = Dfa::from_regex(a, mt.clone());
    let db = Dfa::from_regex(b, mt);
    Ok(!automaton::concat_has_two_splits(&da, &db))
}

/// True iff `⟦a⟧` is nonempty, ε-free, and `⟦a⟧*` factors every word
/// uniquely (decided as unambiguity of `⟦a⟧·⟦a⟧*`).
pub fn check_unamb_iter(a: &SymbolicRegex) -> Result<bool> {
    let mt = Minterms::from_atoms(a.schema().clone(), a.atoms())?;
    let da = Dfa::from_regex(a, mt.clone());
    if !da.is_nonempty() || da.accepts_epsilon() {
        return Ok(false);
    }
    let star = SymbolicRegex::unchecked_star(a.clone());
    let dstar = Dfa::from_regex(&star, mt);
    Ok(!automaton::concat_has_two_splits(&da, &dstar))
}

/// Index `k` such that `w[..k] ∈ ⟦a⟧` and `w[k..] ∈ ⟦b⟧`, or None when the
/// word is outside the concatenation. Errors if the pair is ambiguous.
pub fn unique_split(a: &SymbolicRegex, b: &SymbolicRegex, w: &[DataItem]) -> Result<Option<usize>> {
    if !check_unamb_concat(a, b)? {
        return Err(Error::Regex(
            "unique_split requires unambiguously concatenable operands".into(),
        ));
    }
    Ok(split_unchecked(a, b, w))
}

/// Split search without re-deciding the side condition; used internally once
/// construction has already proven unambiguity.
pub(crate) fn split_unchecked(
    a: &SymbolicRegex,
    b: &SymbolicRegex,
    w: &[DataItem],
) -> Option<usize> {
    let da = a.dfa();
    let db = b.dfa();
    let cells_a: Vec<usize> = w.iter().map(|d| da.minterms().classify(d)).collect();
    let cells_b: Vec<usize> = w.iter().map(|d| db.minterms().classify(d)).collect();
    let points = automaton::split_points(&da, &cells_a, &db, &cells_b);
    debug_assert!(points.len() <= 1, "unambiguity violated");
    points.into_iter().next()
}

/// Block ranges of the unique `⟦a⟧`-factorization of `w`, or None when
/// `w ∉ ⟦a⟧*`. The empty stream factors into zero blocks.
pub fn unique_factorization(
    a: &SymbolicRegex,
    w: &[DataItem],
) -> Result<Option<Vec<std::ops::Range<usize>>>> {
    if !check_unamb_iter(a)? {
        return Err(Error::Regex(
            "unique_factorization requires an unambiguously iterable operand".into(),
        ));
    }
    Ok(factorize_unchecked(a, w))
}

pub(crate) fn factorize_unchecked(
    a: &SymbolicRegex,
    w: &[DataItem],
) -> Option<Vec<std::ops::Range<usize>>> {
    let da = a.dfa();
    let cells: Vec<usize> = w.iter().map(|d| da.minterms().classify(d)).collect();
    automaton::factorize(&da, &cells)
}

/// Language equality decided over the joint minterm alphabet.
pub fn languages_equal(a: &SymbolicRegex, b: &SymbolicRegex) -> Result<bool> {
    check_same_schema(a, b)?;
    let mt = joint_minterms(a, b)?;
    let da = Dfa::from_regex(a, mt.clone());
    let db = Dfa::from_regex(b, mt);
    Ok(automaton::languages_equal(&da, &db))
}
