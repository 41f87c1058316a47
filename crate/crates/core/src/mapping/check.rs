//! Static typing of expressions against metamodel classes.

use std::fmt;

use super::expr::{BinaryOp, Expr, Func, UnaryOp};
use crate::metamodel::{AttrType, MetaClass, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExprType {
    Int,
    Float,
    Bool,
    String,
}

impl ExprType {
    pub fn of_attr(ty: &AttrType) -> Self {
        match ty {
            AttrType::Int => ExprType::Int,
            AttrType::Float => ExprType::Float,
            AttrType::Bool => ExprType::Bool,
            AttrType::String | AttrType::Enum(_) => ExprType::String,
        }
    }

    pub fn of_value(value: &Value) -> Self {
        match value {
            Value::Int(_) => ExprType::Int,
            Value::Float(_) => ExprType::Float,
            Value::Bool(_) => ExprType::Bool,
            Value::Str(_) => ExprType::String,
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, ExprType::Int | ExprType::Float)
    }

    /// Whether a value of this type can be stored in an attribute of `target`.
    /// Int widens to Float; Strings are accepted for enums and checked at runtime.
    pub fn assignable_to(self, target: &AttrType) -> bool {
        matches!(
            (self, target),
            (ExprType::Int, AttrType::Int | AttrType::Float)
                | (ExprType::Float, AttrType::Float)
                | (ExprType::Bool, AttrType::Bool)
                | (ExprType::String, AttrType::String | AttrType::Enum(_))
        )
    }
}

impl fmt::Display for ExprType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExprType::Int => "Int",
            ExprType::Float => "Float",
            ExprType::Bool => "Bool",
            ExprType::String => "String",
        })
    }
}

/// Navigation roots visible to an expression and the class each one denotes.
#[derive(Debug, Clone, Default)]
pub struct Scope<'a> {
    roots: Vec<(&'a str, &'a MetaClass)>,
}

impl<'a> Scope<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, root: &'a str, class: &'a MetaClass) -> Self {
        self.roots.push((root, class));
        self
    }

    fn class(&self, root: &str) -> Option<&'a MetaClass> {
        self.roots.iter().find(|(r, _)| *r == root).map(|(_, c)| *c)
    }
}

fn numeric_result(a: ExprType, b: ExprType) -> ExprType {
    if a == ExprType::Int && b == ExprType::Int {
        ExprType::Int
    } else {
        ExprType::Float
    }
}

/// Infers the type of `expr`, or describes the first problem found.
pub fn type_of(expr: &Expr, scope: &Scope<'_>) -> Result<ExprType, String> {
    match expr {
        Expr::Lit(v) => Ok(ExprType::of_value(v)),
        Expr::Var(name) => Err(format!("unknown identifier `{name}`")),
        Expr::Nav { root, attr } => {
            let class = scope.class(root).ok_or_else(|| format!("unknown identifier `{root}`"))?;
            let def = class
                .attribute(attr)
                .ok_or_else(|| format!("class `{}` has no attribute `{attr}`", class.name))?;
            Ok(ExprType::of_attr(&def.ty))
        }
        Expr::Unary { op, operand } => {
            let t = type_of(operand, scope)?;
            match op {
                UnaryOp::Not if t == ExprType::Bool => Ok(t),
                UnaryOp::Neg if t.is_numeric() => Ok(t),
                UnaryOp::Not => Err(format!("`not` expects Bool, found {t} in `{expr}`")),
                UnaryOp::Neg => Err(format!("`-` expects a number, found {t} in `{expr}`")),
            }
        }
        Expr::Binary { op, lhs, rhs } => {
            let (l, r) = (type_of(lhs, scope)?, type_of(rhs, scope)?);
            let mismatch = || format!("`{}` cannot combine {l} and {r} in `{expr}`", op.symbol());
            match op {
                BinaryOp::And | BinaryOp::Or => {
                    if l == ExprType::Bool && r == ExprType::Bool {
                        Ok(ExprType::Bool)
                    } else {
                        Err(mismatch())
                    }
                }
                BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul => {
                    if l.is_numeric() && r.is_numeric() {
                        Ok(numeric_result(l, r))
                    } else {
                        Err(mismatch())
                    }
                }
                BinaryOp::Div => {
                    if l.is_numeric() && r.is_numeric() {
                        Ok(ExprType::Float)
                    } else {
                        Err(mismatch())
                    }
                }
                BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
                    if (l.is_numeric() && r.is_numeric()) || (l == ExprType::String && r == ExprType::String) {
                        Ok(ExprType::Bool)
                    } else {
                        Err(mismatch())
                    }
                }
                BinaryOp::Eq | BinaryOp::Ne => {
                    if (l.is_numeric() && r.is_numeric()) || l == r {
                        Ok(ExprType::Bool)
                    } else {
                        Err(mismatch())
                    }
                }
            }
        }
        Expr::Call { func, args } => {
            let types = args.iter().map(|a| type_of(a, scope)).collect::<Result<Vec<_>, _>>()?;
            if let Some(t) = types.iter().find(|t| !t.is_numeric()) {
                return Err(format!("`{}` expects numbers, found {t}", func.name()));
            }
            match func {
                Func::Abs if types.len() == 1 => Ok(types[0]),
                Func::Abs => Err("`abs` takes exactly one argument".into()),
                Func::Min | Func::Max if types.len() >= 2 => {
                    Ok(types.iter().copied().reduce(numeric_result).expect("non-empty"))
                }
                Func::Min | Func::Max => Err(format!("`{}` takes at least two arguments", func.name())),
            }
        }
    }
}
