use std::cmp::Ordering;

use thiserror::Error;

use super::expr::{BinaryOp, Expr, Func, UnaryOp};
use crate::metamodel::{ModelElement, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("`{0}` is not bound to an element")]
    NullNavigation(String),
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("`{root}` has no attribute `{attr}`")]
    UnknownAttribute { root: String, attr: String },
    #[error("type error: {0}")]
    Type(String),
}

/// Elements visible to an expression under their root names.
#[derive(Debug, Clone, Default)]
pub struct EvalContext<'a> {
    bindings: Vec<(&'a str, Option<&'a ModelElement>)>,
}

impl<'a> EvalContext<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `root`. A `None` element makes navigation through it a
    /// [`EvalError::NullNavigation`].
    pub fn bind(mut self, root: &'a str, element: Option<&'a ModelElement>) -> Self {
        self.bindings.push((root, element));
        self
    }

    fn lookup(&self, root: &str, attr: &str) -> Result<Value, EvalError> {
        let (_, element) = self
            .bindings
            .iter()
            .find(|(r, _)| *r == root)
            .ok_or_else(|| EvalError::UnknownIdentifier(root.to_owned()))?;
        let element = element.ok_or_else(|| EvalError::NullNavigation(root.to_owned()))?;
        element
            .attrs
            .get(attr)
            .cloned()
            .ok_or_else(|| EvalError::UnknownAttribute { root: root.to_owned(), attr: attr.to_owned() })
    }
}

enum Num {
    I(i64),
    F(f64),
}

fn num(v: &Value, what: &str) -> Result<Num, EvalError> {
    match v {
        Value::Int(i) => Ok(Num::I(*i)),
        Value::Float(x) => Ok(Num::F(*x)),
        other => Err(EvalError::Type(format!("{what} expects a number, got {}", other.kind()))),
    }
}

fn as_f64(n: &Num) -> f64 {
    match n {
        Num::I(i) => *i as f64,
        Num::F(x) => *x,
    }
}

fn arith(op: BinaryOp, l: Num, r: Num) -> Result<Value, EvalError> {
    if op == BinaryOp::Div {
        let d = as_f64(&r);
        if d == 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        return Ok(Value::Float(as_f64(&l) / d));
    }
    match (l, r) {
        (Num::I(a), Num::I(b)) => {
            let v = match op {
                BinaryOp::Add => a.checked_add(b),
                BinaryOp::Sub => a.checked_sub(b),
                BinaryOp::Mul => a.checked_mul(b),
                _ => unreachable!("arith called with {op:?}"),
            };
            v.map(Value::Int).ok_or(EvalError::Overflow)
        }
        (l, r) => {
            let (a, b) = (as_f64(&l), as_f64(&r));
            Ok(Value::Float(match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                _ => unreachable!("arith called with {op:?}"),
            }))
        }
    }
}

fn compare(l: &Value, r: &Value) -> Result<Option<Ordering>, EvalError> {
    match (l, r) {
        (Value::Int(a), Value::Int(b)) => Ok(Some(a.cmp(b))),
        (Value::Str(a), Value::Str(b)) => Ok(Some(a.cmp(b))),
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => {
            Ok(l.as_f64().unwrap().partial_cmp(&r.as_f64().unwrap()))
        }
        _ => Err(EvalError::Type(format!("cannot order {} and {}", l.kind(), r.kind()))),
    }
}

fn equals(l: &Value, r: &Value) -> Result<bool, EvalError> {
    match (l, r) {
        (Value::Bool(a), Value::Bool(b)) => Ok(a == b),
        (Value::Str(a), Value::Str(b)) => Ok(a == b),
        (Value::Int(a), Value::Int(b)) => Ok(a == b),
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => {
            Ok(l.as_f64().unwrap() == r.as_f64().unwrap())
        }
        _ => Err(EvalError::Type(format!("cannot compare {} and {}", l.kind(), r.kind()))),
    }
}

fn boolean(v: Value, what: &str) -> Result<bool, EvalError> {
    v.as_bool().ok_or_else(|| EvalError::Type(format!("{what} expects Bool, got {}", v.kind())))
}

/// Evaluates `expr`. Pure: the context is only read.
///
/// `and`/`or` short-circuit; `/` always yields a Float; mixed Int/Float
/// arithmetic promotes to Float; strings order lexicographically.
pub fn eval(expr: &Expr, ctx: &EvalContext<'_>) -> Result<Value, EvalError> {
    match expr {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Var(name) => Err(EvalError::UnknownIdentifier(name.clone())),
        Expr::Nav { root, attr } => ctx.lookup(root, attr),
        Expr::Unary { op: UnaryOp::Not, operand } => Ok(Value::Bool(!boolean(eval(operand, ctx)?, "`not`")?)),
        Expr::Unary { op: UnaryOp::Neg, operand } => match num(&eval(operand, ctx)?, "`-`")? {
            Num::I(i) => i.checked_neg().map(Value::Int).ok_or(EvalError::Overflow),
            Num::F(x) => Ok(Value::Float(-x)),
        },
        Expr::Binary { op: BinaryOp::And, lhs, rhs } => {
            if !boolean(eval(lhs, ctx)?, "`and`")? {
                return Ok(Value::Bool(false));
            }
            Ok(Value::Bool(boolean(eval(rhs, ctx)?, "`and`")?))
        }
        Expr::Binary { op: BinaryOp::Or, lhs, rhs } => {
            if boolean(eval(lhs, ctx)?, "`or`")? {
                return Ok(Value::Bool(true));
            }
            Ok(Value::Bool(boolean(eval(rhs, ctx)?, "`or`")?))
        }
        Expr::Binary { op, lhs, rhs } => {
            let (l, r) = (eval(lhs, ctx)?, eval(rhs, ctx)?);
            match op {
                BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div => {
                    arith(*op, num(&l, op.symbol())?, num(&r, op.symbol())?)
                }
                BinaryOp::Eq => equals(&l, &r).map(Value::Bool),
                BinaryOp::Ne => equals(&l, &r).map(|b| Value::Bool(!b)),
                BinaryOp::Lt => compare(&l, &r).map(|o| Value::Bool(o == Some(Ordering::Less))),
                BinaryOp::Le => compare(&l, &r).map(|o| Value::Bool(matches!(o, Some(Ordering::Less | Ordering::Equal)))),
                BinaryOp::Gt => compare(&l, &r).map(|o| Value::Bool(o == Some(Ordering::Greater))),
                BinaryOp::Ge => {
                    compare(&l, &r).map(|o| Value::Bool(matches!(o, Some(Ordering::Greater | Ordering::Equal))))
                }
                BinaryOp::And | BinaryOp::Or => unreachable!("handled above"),
            }
        }
        Expr::Call { func, args } => {
            let values = args.iter().map(|a| eval(a, ctx)).collect::<Result<Vec<_>, _>>()?;
            let nums = values.iter().map(|v| num(v, func.name())).collect::<Result<Vec<_>, _>>()?;
            match func {
                Func::Abs => match nums.as_slice() {
                    [Num::I(i)] => i.checked_abs().map(Value::Int).ok_or(EvalError::Overflow),
                    [Num::F(x)] => Ok(Value::Float(x.abs())),
                    _ => Err(EvalError::Type("`abs` takes exactly one argument".into())),
                },
                Func::Min | Func::Max => {
                    if nums.len() < 2 {
                        return Err(EvalError::Type(format!("`{}` takes at least two arguments", func.name())));
                    }
                    let better = |cand: Ordering| if *func == Func::Min { cand == Ordering::Less } else { cand == Ordering::Greater };
                    if nums.iter().all(|n| matches!(n, Num::I(_))) {
                        let ints = nums.iter().map(|n| if let Num::I(i) = n { *i } else { 0 });
                        let best = ints.reduce(|best, x| if better(x.cmp(&best)) { x } else { best });
                        Ok(Value::Int(best.expect("at least two")))
                    } else {
                        let best = nums
                            .iter()
                            .map(as_f64)
                            .reduce(|best, x| if x.partial_cmp(&best).is_some_and(better) { x } else { best });
                        Ok(Value::Float(best.expect("at least two")))
                    }
                }
            }
        }
    }
}
