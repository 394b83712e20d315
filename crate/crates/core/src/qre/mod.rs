//! Quantitative expressions: combinators, reference evaluation, and the
//! compiled streaming evaluator.

pub mod eval;
pub mod stream;
pub mod expr;
pub mod op;
pub mod term;
pub mod value;

pub use eval::eval_reference;
pub use stream::{compile_streaming, StreamEvaluator};
pub use expr::{derived_schema, Domain, QreExpr, QreNode};
pub use op::{Op, OperationRegistry};
pub use term::{CostTerm, Parameter, ParameterValuation};
pub use value::{CostType, Value};
