//! Deterministic symbolic automata over minterm alphabets.
//!
//! Expressions compile through a Thompson construction and subset
//! determinization to a total transition table over the satisfiable minterm
//! cells. All the language questions the regex layer needs — emptiness,
//! disjointness, equivalence, totality, and the two-split ambiguity test
//! behind the unambiguity side conditions — are decided by reachability over
//! small product constructions.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use crate::minterm::Minterms;
use crate::regex::{ReNode, SymbolicRegex};
use crate::schema::DataItem;

/// Thompson-style NFA fragment with a single accept state.
struct Nfa {
    n: usize,
    init: usize,
    accept: usize,
    eps: Vec<Vec<usize>>,
    /// state -> list of (cells on which the edge fires, target)
    sym: Vec<Vec<(Vec<bool>, usize)>>,
}

impl Nfa {
    fn new() -> Nfa {
        Nfa {
            n: 0,
            init: 0,
            accept: 0,
            eps: Vec::new(),
            sym: Vec::new(),
        }
    }

    fn add_state(&mut self) -> usize {
        self.n += 1;
        self.eps.push(Vec::new());
        self.sym.push(Vec::new());
        self.n - 1
    }

    fn build(&mut self, re: &SymbolicRegex, mt: &Minterms) -> (usize, usize) {
        match re.node() {
            ReNode::Epsilon => {
                let i = self.add_state();
                let a = self.add_state();
                self.eps[i].push(a);
                (i, a)
            }
            ReNode::Atom(p) => {
                let i = self.add_state();
                let a = self.add_state();
                let mask = mt.cells_where(p);
                self.sym[i].push((mask, a));
                (i, a)
            }
            ReNode::Union(x, y) => {
                let (ix, ax) = self.build(x, mt);
                let (iy, ay) = self.build(y, mt);
                let i = self.add_state();
                let a = self.add_state();
                self.eps[i].push(ix);
                self.eps[i].push(iy);
                self.eps[ax].push(a);
                self.eps[ay].push(a);
                (i, a)
            }
            ReNode::Concat(x, y) => {
                let (ix, ax) = self.build(x, mt);
                let (iy, ay) = self.build(y, mt);
                self.eps[ax].push(iy);
                (ix, ay)
            }
            ReNode::Star(x) => {
                let (ix, ax) = self.build(x, mt);
                let i = self.add_state();
                let a = self.add_state();
                self.eps[i].push(ix);
                self.eps[i].push(a);
                self.eps[ax].push(ix);
                self.eps[ax].push(a);
                (i, a)
            }
        }
    }

    fn eps_closure(&self, set: &mut Vec<usize>) {
        let mut seen = vec![false; self.n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &s in set.iter() {
            seen[s] = true;
            queue.push_back(s);
        }
        while let Some(s) = queue.pop_front() {
            for &t in &self.eps[s] {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        set.clear();
        set.extend((0..self.n).filter(|&s| seen[s]));
    }
}

/// Deterministic automaton: total transition table over minterm cells.
#[derive(Debug)]
pub struct Dfa {
    minterms: Arc<Minterms>,
    num_states: usize,
    init: usize,
    accepting: Vec<bool>,
    /// trans[state * num_cells + cell]
    trans: Vec<usize>,
    /// states from which an accepting state is reachable
    coreach: Vec<bool>,
}

impl Dfa {
    /// Compiles a regex into a deterministic automaton over `mt`'s cells.
    /// `mt` must cover every atom of the expression.
    pub fn from_regex(re: &SymbolicRegex, mt: Arc<Minterms>) -> Dfa {
        let mut nfa = Nfa::new();
        let (init, accept) = nfa.build(re, &mt);
        nfa.init = init;
        nfa.accept = accept;
        determinize(&nfa, mt)
    }

    pub fn minterms(&self) -> &Arc<Minterms> {
        &self.minterms
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_cells(&self) -> usize {
        self.minterms.num_cells()
    }

    pub fn init(&self) -> usize {
        self.init
    }

    pub fn is_accepting(&self, q: usize) -> bool {
        self.accepting[q]
    }

    /// True when `q` can still reach an accepting state.
    pub fn is_live(&self, q: usize) -> bool {
        self.coreach[q]
    }

    pub fn step(&self, q: usize, cell: usize) -> usize {
        self.trans[q * self.num_cells() + cell]
    }

    pub fn run_cells(&self, cells: &[usize]) -> usize {
        let mut q = self.init;
        for &c in cells {
            q = self.step(q, c);
        }
        q
    }

    pub fn accepts_cells(&self, cells: &[usize]) -> bool {
        self.accepting[self.run_cells(cells)]
    }

    pub fn matches_items(&self, w: &[DataItem]) -> bool {
        let mut q = self.init;
        for item in w {
            q = self.step(q, self.minterms.classify(item));
        }
        self.accepting[q]
    }

    /// Subset construction only creates reachable states, so nonemptiness is
    /// just "some state accepts".
    pub fn is_nonempty(&self) -> bool {
        self.accepting.iter().any(|&a| a)
    }

    pub fn accepts_epsilon(&self) -> bool {
        self.accepting[self.init]
    }

    /// Language equals all streams: every reachable state accepts.
    pub fn is_total(&self) -> bool {
        self.accepting.iter().all(|&a| a)
    }
}

fn determinize(nfa: &Nfa, mt: Arc<Minterms>) -> Dfa {
    let ncells = mt.num_cells();
    let mut start = vec![nfa.init];
    nfa.eps_closure(&mut start);

    let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    let mut trans: Vec<usize> = Vec::new();
    ids.insert(start.clone(), 0);
    subsets.push(start);
    let mut queue = VecDeque::from([0usize]);

    while let Some(qid) = queue.pop_front() {
        let subset = subsets[qid].clone();
        let mut row = vec![usize::MAX; ncells];
        for cell in 0..ncells {
            let mut next: Vec<usize> = Vec::new();
            for &s in &subset {
                for (mask, t) in &nfa.sym[s] {
                    if mask[cell] && !next.contains(t) {
                        next.push(*t);
                    }
                }
            }
            next.sort_unstable();
            nfa.eps_closure(&mut next);
            let tid = *ids.entry(next.clone()).or_insert_with(|| {
                subsets.push(next);
                queue.push_back(subsets.len() - 1);
                subsets.len() - 1
            });
            row[cell] = tid;
        }
        if trans.len() < (qid + 1) * ncells {
            trans.resize((qid + 1) * ncells, usize::MAX);
        }
        trans[qid * ncells..(qid + 1) * ncells].copy_from_slice(&row);
    }

    let num_states = subsets.len();
    trans.resize(num_states * ncells, usize::MAX);
    let accepting: Vec<bool> = subsets
        .iter()
        .map(|s| s.contains(&nfa.accept))
        .collect();

    // reverse reachability from accepting states
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); num_states];
    for q in 0..num_states {
        for c in 0..ncells {
            rev[trans[q * ncells + c]].push(q);
        }
    }
    let mut coreach = accepting.clone();
    let mut queue: VecDeque<usize> = (0..num_states).filter(|&q| accepting[q]).collect();
    while let Some(q) = queue.pop_front() {
        for &p in &rev[q] {
            if !coreach[p] {
                coreach[p] = true;
                queue.push_back(p);
            }
        }
    }

    Dfa {
        minterms: mt,
        num_states,
        init: 0,
        accepting,
        trans,
        coreach,
    }
}

/// Emptiness of the language intersection (both automata over the same cells).
pub fn languages_disjoint(a: &Dfa, b: &Dfa) -> bool {
    debug_assert_eq!(a.num_cells(), b.num_cells());
    let ncells = a.num_cells();
    let mut seen = vec![false; a.num_states() * b.num_states()];
    let idx = |x: usize, y: usize| x * b.num_states() + y;
    let mut queue = VecDeque::from([(a.init(), b.init())]);
    seen[idx(a.init(), b.init())] = true;
    while let Some((x, y)) = queue.pop_front() {
        if a.is_accepting(x) && b.is_accepting(y) {
            return false;
        }
        for c in 0..ncells {
            let n = (a.step(x, c), b.step(y, c));
            if !seen[idx(n.0, n.1)] {
                seen[idx(n.0, n.1)] = true;
                queue.push_back(n);
            }
        }
    }
    true
}

/// Language equality via product search for a distinguishing state pair.
pub fn languages_equal(a: &Dfa, b: &Dfa) -> bool {
    debug_assert_eq!(a.num_cells(), b.num_cells());
    let ncells = a.num_cells();
    let mut seen = vec![false; a.num_states() * b.num_states()];
    let idx = |x: usize, y: usize| x * b.num_states() + y;
    let mut queue = VecDeque::from([(a.init(), b.init())]);
    seen[idx(a.init(), b.init())] = true;
    while let Some((x, y)) = queue.pop_front() {
        if a.is_accepting(x) != b.is_accepting(y) {
            return false;
        }
        for c in 0..ncells {
            let n = (a.step(x, c), b.step(y, c));
            if !seen[idx(n.0, n.1)] {
                seen[idx(n.0, n.1)] = true;
                queue.push_back(n);
            }
        }
    }
    true
}

/// Search state for the two-split construction: a pair of marked
/// concatenation runs whose marks sit at different positions.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum TwoSplit {
    /// Both runs still inside the left language.
    Prefix(usize),
    /// First run has jumped to the right automaton; `fresh` until at least
    /// one symbol separates the two marks.
    Mid { q1: usize, q2: usize, fresh: bool },
    /// Both runs inside the right automaton.
    Suffix(usize, usize),
}

/// True iff some word of `⟦a⟧⟦b⟧` admits two distinct splits.
pub fn concat_has_two_splits(a: &Dfa, b: &Dfa) -> bool {
    debug_assert_eq!(a.num_cells(), b.num_cells());
    let ncells = a.num_cells();
    let mut seen: HashMap<TwoSplit, ()> = HashMap::new();
    let mut queue: VecDeque<TwoSplit> = VecDeque::new();

    let push = |s: TwoSplit, queue: &mut VecDeque<TwoSplit>, seen: &mut HashMap<TwoSplit, ()>| {
        if seen.insert(s, ()).is_none() {
            queue.push_back(s);
        }
    };

    push(TwoSplit::Prefix(a.init()), &mut queue, &mut seen);
    while let Some(s) = queue.pop_front() {
        match s {
            TwoSplit::Prefix(q) => {
                if a.is_accepting(q) {
                    push(
                        TwoSplit::Mid {
                            q1: q,
                            q2: b.init(),
                            fresh: true,
                        },
                        &mut queue,
                        &mut seen,
                    );
                }
                for c in 0..ncells {
                    push(TwoSplit::Prefix(a.step(q, c)), &mut queue, &mut seen);
                }
            }
            TwoSplit::Mid { q1, q2, fresh } => {
                if !fresh && a.is_accepting(q1) {
                    push(TwoSplit::Suffix(q2, b.init()), &mut queue, &mut seen);
                }
                for c in 0..ncells {
                    push(
                        TwoSplit::Mid {
                            q1: a.step(q1, c),
                            q2: b.step(q2, c),
                            fresh: false,
                        },
                        &mut queue,
                        &mut seen,
                    );
                }
            }
            TwoSplit::Suffix(x, y) => {
                if b.is_accepting(x) && b.is_accepting(y) {
                    return true;
                }
                for c in 0..ncells {
                    push(
                        TwoSplit::Suffix(b.step(x, c), b.step(y, c)),
                        &mut queue,
                        &mut seen,
                    );
                }
            }
        }
    }
    false
}

/// All positions `k` with `w[..k] ∈ L(a)` and `w[k..] ∈ L(b)`. The word is
/// given twice, classified against each automaton's own alphabet.
pub fn split_points(a: &Dfa, cells_a: &[usize], b: &Dfa, cells_b: &[usize]) -> Vec<usize> {
    debug_assert_eq!(cells_a.len(), cells_b.len());
    let n = cells_a.len();
    // prefix acceptance of a
    let mut pref = Vec::with_capacity(n + 1);
    let mut q = a.init();
    pref.push(a.is_accepting(q));
    for &c in cells_a {
        q = a.step(q, c);
        pref.push(a.is_accepting(q));
    }
    // backward DP: states of b from which the remaining suffix accepts
    let mut good = vec![vec![false; b.num_states()]; n + 1];
    for s in 0..b.num_states() {
        good[n][s] = b.is_accepting(s);
    }
    for k in (0..n).rev() {
        for s in 0..b.num_states() {
            good[k][s] = good[k + 1][b.step(s, cells_b[k])];
        }
    }
    (0..=n)
        .filter(|&k| pref[k] && good[k][b.init()])
        .collect()
}

/// The unique block factorization of `cells` under `L(a)*`, as index ranges,
/// or None when the word is not in the starred language. Assumes the
/// iterability side condition already holds.
pub fn factorize(a: &Dfa, cells: &[usize]) -> Option<Vec<std::ops::Range<usize>>> {
    let n = cells.len();
    let mut can = vec![false; n + 1];
    let mut prev = vec![usize::MAX; n + 1];
    can[0] = true;
    for j in 0..n {
        if !can[j] {
            continue;
        }
        let mut q = a.init();
        for (i, &c) in cells.iter().enumerate().skip(j) {
            q = a.step(q, c);
            if a.is_accepting(q) && !can[i + 1] {
                can[i + 1] = true;
                prev[i + 1] = j;
            }
            if !a.is_live(q) {
                break;
            }
        }
    }
    if !can[n] {
        return None;
    }
    let mut bounds = Vec::new();
    let mut k = n;
    while k > 0 {
        let j = prev[k];
        bounds.push(j..k);
        k = j;
    }
    bounds.reverse();
    Some(bounds)
}
