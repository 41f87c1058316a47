//! Recursive-descent parser for the expression language.
//!
//! ```text
//! expr    := or
//! or      := and ('or' and)*
//! and     := not ('and' not)*
//! not     := 'not' not | cmp
//! cmp     := add (('<' | '<=' | '>' | '>=' | '=' | '<>') add)?
//! add     := mul (('+' | '-') mul)*
//! mul     := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := INT | FLOAT | STRING | 'true' | 'false'
//!          | IDENT ('.' IDENT)? | FUNC '(' expr (',' expr)* ')' | '(' expr ')'
//! ```

use thiserror::Error;

use super::expr::{BinaryOp, Expr, Func, UnaryOp};
use crate::metamodel::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {position}: {message}")]
pub struct SyntaxError {
    /// Character offset into the expression text.
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Float(f64),
    Str(String),
    Ident(String),
    Sym(&'static str),
    End,
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
}

const SYMBOLS: [&str; 13] = ["<=", ">=", "<>", "<", ">", "=", "+", "-", "*", "/", "(", ")", ","];

impl Lexer {
    fn new(src: &str) -> Self {
        Self { chars: src.chars().collect(), pos: 0 }
    }

    fn error(&self, position: usize, message: impl Into<String>) -> SyntaxError {
        SyntaxError { position, message: message.into() }
    }

    fn peek_char(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>, SyntaxError> {
        let mut out = Vec::new();
        loop {
            while self.peek_char(0).is_some_and(char::is_whitespace) {
                self.pos += 1;
            }
            let start = self.pos;
            let Some(c) = self.peek_char(0) else {
                out.push((start, Tok::End));
                return Ok(out);
            };
            let tok = if c.is_ascii_digit() {
                self.number()?
            } else if c.is_ascii_alphabetic() || c == '_' {
                let mut ident = String::new();
                while let Some(c) = self.peek_char(0).filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
                    ident.push(c);
                    self.pos += 1;
                }
                Tok::Ident(ident)
            } else if c == '\'' {
                self.string()?
            } else if c == '.' {
                self.pos += 1;
                Tok::Sym(".")
            } else {
                let sym = SYMBOLS
                    .iter()
                    .find(|s| s.chars().enumerate().all(|(i, sc)| self.peek_char(i) == Some(sc)))
                    .ok_or_else(|| self.error(start, format!("unexpected character `{c}`")))?;
                self.pos += sym.chars().count();
                Tok::Sym(sym)
            };
            out.push((start, tok));
        }
    }

    fn number(&mut self) -> Result<Tok, SyntaxError> {
        let start = self.pos;
        let mut text = String::new();
        let mut is_float = false;
        let digits = |lx: &mut Self, text: &mut String| {
            let before = text.len();
            while let Some(c) = lx.peek_char(0).filter(char::is_ascii_digit) {
                text.push(c);
                lx.pos += 1;
            }
            text.len() > before
        };
        digits(self, &mut text);
        if self.peek_char(0) == Some('.') && self.peek_char(1).is_some_and(|c| c.is_ascii_digit()) {
            is_float = true;
            text.push('.');
            self.pos += 1;
            digits(self, &mut text);
        }
        if matches!(self.peek_char(0), Some('e' | 'E')) {
            let save = (self.pos, text.len());
            text.push('e');
            self.pos += 1;
            if let Some(sign) = self.peek_char(0).filter(|c| *c == '+' || *c == '-') {
                text.push(sign);
                self.pos += 1;
            }
            if digits(self, &mut text) {
                is_float = true;
            } else {
                return Err(self.error(save.0, "malformed exponent"));
            }
        }
        if self.peek_char(0).is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
            return Err(self.error(self.pos, "identifier directly after number"));
        }
        if is_float {
            text.parse::<f64>().map(Tok::Float).map_err(|_| self.error(start, "invalid float literal"))
        } else {
            text.parse::<i64>().map(Tok::Int).map_err(|_| self.error(start, "integer literal out of range"))
        }
    }

    fn string(&mut self) -> Result<Tok, SyntaxError> {
        let start = self.pos;
        self.pos += 1;
        let mut s = String::new();
        loop {
            match self.peek_char(0) {
                None => return Err(self.error(start, "unterminated string literal")),
                Some('\'') => {
                    self.pos += 1;
                    return Ok(Tok::Str(s));
                }
                Some('\\') => {
                    match self.peek_char(1) {
                        Some(c @ ('\'' | '\\')) => s.push(c),
                        _ => return Err(self.error(self.pos, "invalid escape (use \\' or \\\\)")),
                    }
                    self.pos += 2;
                }
                Some(c) => {
                    s.push(c);
                    self.pos += 1;
                }
            }
        }
    }
}

const KEYWORDS: [&str; 5] = ["and", "or", "not", "true", "false"];

struct Parser {
    tokens: Vec<(usize, Tok)>,
    idx: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.idx].1
    }

    fn position(&self) -> usize {
        self.tokens[self.idx].0
    }

    fn bump(&mut self) -> Tok {
        let tok = self.tokens[self.idx].1.clone();
        if self.idx + 1 < self.tokens.len() {
            self.idx += 1;
        }
        tok
    }

    fn error(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError { position: self.position(), message: message.into() }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn is_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Tok::Sym(s) if *s == sym)
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), SyntaxError> {
        if self.is_sym(sym) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected `{sym}`")))
        }
    }

    fn or(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.and()?;
        while self.is_keyword("or") {
            self.bump();
            lhs = Expr::binary(BinaryOp::Or, lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.not()?;
        while self.is_keyword("and") {
            self.bump();
            lhs = Expr::binary(BinaryOp::And, lhs, self.not()?);
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr, SyntaxError> {
        if self.is_keyword("not") {
            self.bump();
            return Ok(Expr::unary(UnaryOp::Not, self.not()?));
        }
        self.comparison()
    }

    fn comparison_op(&self) -> Option<BinaryOp> {
        match self.peek() {
            Tok::Sym("<") => Some(BinaryOp::Lt),
            Tok::Sym("<=") => Some(BinaryOp::Le),
            Tok::Sym(">") => Some(BinaryOp::Gt),
            Tok::Sym(">=") => Some(BinaryOp::Ge),
            Tok::Sym("=") => Some(BinaryOp::Eq),
            Tok::Sym("<>") => Some(BinaryOp::Ne),
            _ => None,
        }
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.additive()?;
        let Some(op) = self.comparison_op() else { return Ok(lhs) };
        self.bump();
        let rhs = self.additive()?;
        if self.comparison_op().is_some() {
            return Err(self.error("comparisons do not chain; add parentheses"));
        }
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn additive(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinaryOp::Add,
                Tok::Sym("-") => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.multiplicative()?);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => BinaryOp::Mul,
                Tok::Sym("/") => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.is_sym("-") {
            self.bump();
            return Ok(Expr::unary(UnaryOp::Neg, self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let at = self.position();
        match self.bump() {
            Tok::Int(i) => Ok(Expr::Lit(Value::Int(i))),
            Tok::Float(x) => Ok(Expr::Lit(Value::Float(x))),
            Tok::Str(s) => Ok(Expr::Lit(Value::Str(s))),
            Tok::Sym("(") => {
                let inner = self.or()?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            Tok::Ident(name) => match name.as_str() {
                "true" => Ok(Expr::Lit(Value::Bool(true))),
                "false" => Ok(Expr::Lit(Value::Bool(false))),
                kw if KEYWORDS.contains(&kw) => {
                    Err(SyntaxError { position: at, message: format!("unexpected keyword `{kw}`") })
                }
                _ if self.is_sym("(") => {
                    let func = Func::from_name(&name).ok_or_else(|| SyntaxError {
                        position: at,
                        message: format!("unknown function `{name}` (expected abs, min or max)"),
                    })?;
                    self.bump();
                    let mut args = vec![self.or()?];
                    while self.is_sym(",") {
                        self.bump();
                        args.push(self.or()?);
                    }
                    self.expect_sym(")")?;
                    Ok(Expr::Call { func, args })
                }
                _ if self.is_sym(".") => {
                    self.bump();
                    match self.bump() {
                        Tok::Ident(attr) if !KEYWORDS.contains(&attr.as_str()) => Ok(Expr::Nav { root: name, attr }),
                        _ => Err(SyntaxError {
                            position: self.tokens[self.idx.saturating_sub(1)].0,
                            message: "expected attribute name after `.`".into(),
                        }),
                    }
                }
                _ => Ok(Expr::Var(name)),
            },
            Tok::End => Err(SyntaxError { position: at, message: "unexpected end of expression".into() }),
            Tok::Sym(s) => Err(SyntaxError { position: at, message: format!("unexpected `{s}`") }),
        }
    }
}

/// Parses one expression. Identifiers are resolved later, during validation.
pub fn parse_expr(text: &str) -> Result<Expr, SyntaxError> {
    let tokens = Lexer::new(text).tokens()?;
    let mut parser = Parser { tokens, idx: 0 };
    let expr = parser.or()?;
    if *parser.peek() != Tok::End {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::expr::Precedence;
    use proptest::prelude::*;

    fn lit(i: i64) -> Expr {
        Expr::Lit(Value::Int(i))
    }

    #[test]
    fn dev_id_comparison() {
        let e = parse_expr("source.dev_id = 'mi-plug-01'").unwrap();
        assert_eq!(e, Expr::binary(BinaryOp::Eq, Expr::nav("source", "dev_id"), Expr::Lit("mi-plug-01".into())));
    }

    #[test]
    fn multiplication_binds_tighter() {
        let e = parse_expr("1 + 2 * 3").unwrap();
        assert_eq!(e, Expr::binary(BinaryOp::Add, lit(1), Expr::binary(BinaryOp::Mul, lit(2), lit(3))));
    }

    #[test]
    fn subtraction_is_left_associative() {
        let e = parse_expr("1 - 2 - 3").unwrap();
        assert_eq!(e, Expr::binary(BinaryOp::Sub, Expr::binary(BinaryOp::Sub, lit(1), lit(2)), lit(3)));
        assert_eq!(e.to_string(), "1 - 2 - 3");
        let r = Expr::binary(BinaryOp::Sub, lit(1), Expr::binary(BinaryOp::Sub, lit(2), lit(3)));
        assert_eq!(r.to_string(), "1 - (2 - 3)");
    }

    #[test]
    fn not_binds_looser_than_comparison() {
        let e = parse_expr("not (a < b or c)").unwrap();
        let inner = Expr::binary(
            BinaryOp::Or,
            Expr::binary(BinaryOp::Lt, Expr::Var("a".into()), Expr::Var("b".into())),
            Expr::Var("c".into()),
        );
        assert_eq!(e, Expr::unary(UnaryOp::Not, inner));
        assert_eq!(parse_expr(&e.to_string()).unwrap(), e);
        let e = parse_expr("not a < b").unwrap();
        assert!(matches!(e, Expr::Unary { op: UnaryOp::Not, .. }));
    }

    #[test]
    fn literals() {
        assert_eq!(parse_expr("23.5").unwrap(), Expr::Lit(Value::Float(23.5)));
        assert_eq!(parse_expr("1e3").unwrap(), Expr::Lit(Value::Float(1000.0)));
        assert_eq!(parse_expr("true").unwrap(), Expr::Lit(Value::Bool(true)));
        assert_eq!(parse_expr(r"'it\'s'").unwrap(), Expr::Lit("it's".into()));
        assert_eq!(parse_expr("-3").unwrap(), Expr::unary(UnaryOp::Neg, lit(3)));
    }

    #[test]
    fn calls() {
        let e = parse_expr("max(source.a, 0, abs(-1.5))").unwrap();
        assert!(matches!(e, Expr::Call { func: Func::Max, ref args } if args.len() == 3));
    }

    #[test]
    fn syntax_errors_carry_position() {
        assert_eq!(parse_expr("1 +").unwrap_err().position, 3);
        assert_eq!(parse_expr("a < b < c").unwrap_err().position, 6);
        assert_eq!(parse_expr("'open").unwrap_err().position, 0);
        assert_eq!(parse_expr("foo(1)").unwrap_err().position, 0);
        assert_eq!(parse_expr("(1").unwrap_err().position, 2);
        assert_eq!(parse_expr("1 # 2").unwrap_err().position, 2);
        assert_eq!(parse_expr("99999999999999999999").unwrap_err().position, 0);
        assert!(parse_expr("source.").is_err());
        assert!(parse_expr("").is_err());
    }

    /// Parser that only understands fully parenthesized binary forms. Used to
    /// check the precedence table of the real parser.
    fn parse_parenthesized(text: &str) -> Expr {
        fn go(toks: &[String], i: &mut usize) -> Expr {
            let t = toks[*i].clone();
            *i += 1;
            if t == "(" {
                if toks[*i] == "not" {
                    *i += 1;
                    let e = go(toks, i);
                    *i += 1;
                    return Expr::unary(UnaryOp::Not, e);
                }
                if toks[*i] == "-" {
                    *i += 1;
                    let e = go(toks, i);
                    *i += 1;
                    return Expr::unary(UnaryOp::Neg, e);
                }
                let lhs = go(toks, i);
                let op = match toks[*i].as_str() {
                    "or" => BinaryOp::Or,
                    "and" => BinaryOp::And,
                    "=" => BinaryOp::Eq,
                    "<>" => BinaryOp::Ne,
                    "<" => BinaryOp::Lt,
                    "<=" => BinaryOp::Le,
                    ">" => BinaryOp::Gt,
                    ">=" => BinaryOp::Ge,
                    "+" => BinaryOp::Add,
                    "-" => BinaryOp::Sub,
                    "*" => BinaryOp::Mul,
                    "/" => BinaryOp::Div,
                    other => panic!("unexpected {other}"),
                };
                *i += 1;
                let rhs = go(toks, i);
                *i += 1;
                return Expr::binary(op, lhs, rhs);
            }
            Expr::Lit(Value::Int(t.parse().unwrap()))
        }
        let spaced = text.replace('(', " ( ").replace(')', " ) ");
        let toks: Vec<String> = spaced.split_whitespace().map(str::to_owned).collect();
        go(&toks, &mut 0)
    }

    fn fully_parenthesized(e: &Expr) -> String {
        match e {
            Expr::Lit(v) => v.to_string(),
            Expr::Unary { op: UnaryOp::Not, operand } => format!("(not {})", fully_parenthesized(operand)),
            Expr::Unary { op: UnaryOp::Neg, operand } => format!("(- {})", fully_parenthesized(operand)),
            Expr::Binary { op, lhs, rhs } => {
                format!("({} {} {})", fully_parenthesized(lhs), op.symbol(), fully_parenthesized(rhs))
            }
            _ => unreachable!(),
        }
    }

    fn tree() -> impl Strategy<Value = Expr> {
        let leaf = (0i64..10).prop_map(lit);
        leaf.prop_recursive(5, 40, 2, |inner| {
            let ops = vec![
                BinaryOp::Or, BinaryOp::And, BinaryOp::Eq, BinaryOp::Ne, BinaryOp::Lt, BinaryOp::Le,
                BinaryOp::Gt, BinaryOp::Ge, BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div,
            ];
            prop_oneof![
                inner.clone().prop_map(|e| Expr::unary(UnaryOp::Not, e)),
                inner.clone().prop_map(|e| Expr::unary(UnaryOp::Neg, e)),
                (prop::sample::select(ops), inner.clone(), inner).prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            ]
        })
    }

    proptest! {
        /// Both parsers agree on the fully parenthesized form, and the real
        /// parser reads the minimally parenthesized form back to the same tree.
        #[test]
        fn precedence_matches_parenthesized_parser(t in tree()) {
            let full = fully_parenthesized(&t);
            prop_assert_eq!(&parse_parenthesized(&full), &t);
            prop_assert_eq!(&parse_expr(&full).unwrap(), &t);
            prop_assert_eq!(&parse_expr(&t.to_string()).unwrap(), &t);
        }

        #[test]
        fn precedence_levels_are_totally_ordered(a in 0usize..8, b in 0usize..8) {
            let levels = [
                Precedence::Or, Precedence::And, Precedence::Not, Precedence::Comparison,
                Precedence::Additive, Precedence::Multiplicative, Precedence::Unary, Precedence::Atom,
            ];
            prop_assert_eq!(levels[a].cmp(&levels[b]), a.cmp(&b));
        }
    }
}
