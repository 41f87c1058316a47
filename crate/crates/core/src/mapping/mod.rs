//! The expression language and the mapping rules built on it.

mod check;
mod eval;
mod expr;
mod parser;
mod rules;

pub use check::{type_of, ExprType, Scope};
pub use eval::{eval, EvalContext, EvalError};
pub use expr::{BinaryOp, Expr, Func, Precedence, UnaryOp};
pub use parser::{parse_expr, SyntaxError};
pub use rules::{parse_rules, validate, AttrMap, Direction, MappingRule, RuleSet, Writeback};
