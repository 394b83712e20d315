//! Symbolic unambiguous regular expressions with quantitative combinators,
//! streaming evaluation with per-item cost independent of stream length, and
//! wavelet-domain cardiac peak detectors built on top of them.
//!
//! The crate is organized bottom-up:
//!
//! - [`schema`], [`predicate`], [`minterm`]: data items, interval predicates,
//!   and the finite partition of the data domain they induce.
//! - [`regex`], [`automaton`]: symbolic regular expressions whose union,
//!   concatenation, and star constructors enforce disjointness and
//!   unambiguity, decided over minterm automata.
//! - [`qre`]: the expression combinators, a reference (denotational)
//!   evaluator, and the compiled streaming evaluator.
//! - [`wavelet`]: discretized continuous wavelet transform with
//!   Gaussian-derivative mother wavelets, producing spectrogram item streams.
//! - [`detect`]: the three peak detectors (maxima-line tracing, blanking,
//!   and the adaptive-threshold automaton) as expression pipelines.
//! - [`discriminate`]: beat-stream discriminators (rate range, sudden onset,
//!   pattern match, sliding rate/stability, chamber rate comparison).
//! - [`synthetic`]: seeded synthetic signal generation with ground truth.

pub mod automaton;
pub mod detect;
pub mod discriminate;
pub mod qre;
pub mod error;
pub mod minterm;
pub mod predicate;
pub mod regex;
pub mod schema;
pub mod synthetic;
pub mod wavelet;

pub use error::{Error, Result};
pub use minterm::{Cell, Minterms};
pub use predicate::{Atom, AtomTest, Cmp, Predicate};
pub use regex::{
    check_disjoint, check_unamb_concat, check_unamb_iter, unique_factorization, unique_split,
    ReNode, SymbolicRegex,
};
pub use schema::{DataItem, DataItemSchema, FieldKind, FieldValue};
