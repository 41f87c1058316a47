use std::fmt;

use crate::metamodel::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "or",
            BinaryOp::And => "and",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }

    pub fn precedence(self) -> Precedence {
        match self {
            BinaryOp::Or => Precedence::Or,
            BinaryOp::And => Precedence::And,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
                Precedence::Comparison
            }
            BinaryOp::Add | BinaryOp::Sub => Precedence::Additive,
            BinaryOp::Mul | BinaryOp::Div => Precedence::Multiplicative,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == Precedence::Comparison
    }
}

/// Binding strength, loosest first. Comparison is non-associative; the other
/// binary levels associate to the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Precedence {
    Or,
    And,
    Not,
    Comparison,
    Additive,
    Multiplicative,
    Unary,
    Atom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Abs,
    Min,
    Max,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "abs" => Some(Func::Abs),
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            _ => None,
        }
    }
}

/// Expression AST of the rule language.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    /// A bare identifier. The language has no variables, so validation rejects it.
    Var(String),
    /// `root.attr`, where root is `source`, `target` or `self`.
    Nav { root: String, attr: String },
    Unary { op: UnaryOp, operand: Box<Expr> },
    Binary { op: BinaryOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Call { func: Func, args: Vec<Expr> },
}

impl Expr {
    pub fn nav(root: &str, attr: &str) -> Self {
        Expr::Nav { root: root.to_owned(), attr: attr.to_owned() }
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn unary(op: UnaryOp, operand: Expr) -> Self {
        Expr::Unary { op, operand: Box::new(operand) }
    }

    pub fn precedence(&self) -> Precedence {
        match self {
            Expr::Lit(Value::Int(i)) if *i < 0 => Precedence::Unary,
            Expr::Lit(Value::Float(x)) if x.is_sign_negative() => Precedence::Unary,
            Expr::Lit(_) | Expr::Var(_) | Expr::Nav { .. } | Expr::Call { .. } => Precedence::Atom,
            Expr::Unary { op: UnaryOp::Not, .. } => Precedence::Not,
            Expr::Unary { op: UnaryOp::Neg, .. } => Precedence::Unary,
            Expr::Binary { op, .. } => op.precedence(),
        }
    }

    /// Every `(root, attr)` navigation in the expression.
    pub fn navigations(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Nav { root, attr } = e {
                out.push((root.as_str(), attr.as_str()));
            }
        });
        out
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Unary { operand, .. } => operand.walk(f),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            Expr::Call { args, .. } => args.iter().for_each(|a| a.walk(f)),
            Expr::Lit(_) | Expr::Var(_) | Expr::Nav { .. } => {}
        }
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, value: &Value) -> fmt::Result {
    match value {
        Value::Bool(b) => write!(f, "{b}"),
        Value::Int(i) => write!(f, "{i}"),
        // Debug keeps a `.0` or an exponent, so the literal lexes back as a Float
        Value::Float(x) => write!(f, "{x:?}"),
        Value::Str(s) => {
            f.write_str("'")?;
            for c in s.chars() {
                match c {
                    '\'' => f.write_str("\\'")?,
                    '\\' => f.write_str("\\\\")?,
                    c => write!(f, "{c}")?,
                }
            }
            f.write_str("'")
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, min: Precedence, strictly_above: bool) -> fmt::Result {
    let p = child.precedence();
    let bare = if strictly_above { p > min } else { p >= min };
    if bare {
        write!(f, "{child}")
    } else {
        write!(f, "({child})")
    }
}

/// Prints with the minimum parentheses needed to parse back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write_literal(f, v),
            Expr::Var(name) => f.write_str(name),
            Expr::Nav { root, attr } => write!(f, "{root}.{attr}"),
            Expr::Unary { op: UnaryOp::Not, operand } => {
                f.write_str("not ")?;
                write_child(f, operand, Precedence::Not, false)
            }
            Expr::Unary { op: UnaryOp::Neg, operand } => {
                f.write_str("-")?;
                // `--x` would still lex, but a space keeps negative literals readable
                if matches!(**operand, Expr::Unary { op: UnaryOp::Neg, .. }) {
                    f.write_str(" ")?;
                }
                write_child(f, operand, Precedence::Unary, false)
            }
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                let comparison = op.is_comparison();
                write_child(f, lhs, p, comparison)?;
                write!(f, " {} ", op.symbol())?;
                write_child(f, rhs, p, true)
            }
            Expr::Call { func, args } => {
                write!(f, "{}(", func.name())?;
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{arg}")?;
                }
                f.write_str(")")
            }
        }
    }
}
