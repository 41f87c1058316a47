//! Random expressions, printed fully parenthesized, evaluated both by the
//! library and by a direct reference interpreter over the generating tree.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use homesync_core::mapping::{eval, parse_expr, EvalContext, EvalError};
use homesync_core::metamodel::{ModelElement, Value};

use crate::Outcome;

const CASES: usize = 20_000;

#[derive(Debug, Clone)]
enum T {
    Int(i64),
    Float(f64, bool),
    Str(String),
    Bool(bool),
    Nav(&'static str, &'static str),
    Var(&'static str),
    Not(Box<T>),
    Neg(Box<T>),
    Bin(&'static str, Box<T>, Box<T>),
    Call(&'static str, Vec<T>),
}

const BINARY: [&str; 12] = ["or", "and", "=", "<>", "<", "<=", ">", ">=", "+", "-", "*", "/"];
const FUNCS: [&str; 3] = ["abs", "min", "max"];
const NAVS: [(&str, &str); 7] = [
    ("source", "n"),
    ("source", "x"),
    ("source", "flag"),
    ("source", "label"),
    ("source", "absent"),
    ("target", "on"),
    ("elsewhere", "n"),
];
const WORDS: [&str; 6] = ["", "a", "b", "ab", "it's", "back\\slash"];

fn leaf(rng: &mut ChaCha8Rng) -> T {
    match rng.gen_range(0..100) {
        0..=19 => T::Int(*[0, 1, 2, 3, 7, 10, 100, i64::MAX, 4_611_686_018_427_387_904].choose(rng).unwrap()),
        20..=39 => T::Float(*[0.0, 0.5, 1.0, 2.25, 3.0, 1e-3, 7.5e10].choose(rng).unwrap(), rng.gen_bool(0.5)),
        40..=49 => T::Str(WORDS.choose(rng).unwrap().to_string()),
        50..=59 => T::Bool(rng.gen_bool(0.5)),
        60..=97 => {
            let (root, attr) = if rng.gen_bool(0.85) { NAVS[rng.gen_range(0..4)] } else { *NAVS.choose(rng).unwrap() };
            T::Nav(root, attr)
        }
        _ => T::Var("level"),
    }
}

fn gen(rng: &mut ChaCha8Rng, depth: u32) -> T {
    if depth == 0 || rng.gen_bool(0.25) {
        return leaf(rng);
    }
    let sub = |rng: &mut ChaCha8Rng| Box::new(gen(rng, depth - 1));
    match rng.gen_range(0..100) {
        0..=7 => T::Not(sub(rng)),
        8..=15 => T::Neg(sub(rng)),
        16..=89 => {
            let op = BINARY.choose(rng).unwrap();
            T::Bin(op, sub(rng), sub(rng))
        }
        _ => {
            let f = FUNCS.choose(rng).unwrap();
            let n = if *f == "abs" && rng.gen_bool(0.9) { 1 } else { rng.gen_range(1..=4) };
            T::Call(f, (0..n).map(|_| gen(rng, depth - 1)).collect())
        }
    }
}

fn print(t: &T) -> String {
    match t {
        T::Int(i) => i.to_string(),
        T::Float(x, exponent) => {
            if *exponent {
                format!("{x:e}")
            } else {
                format!("{x:?}")
            }
        }
        T::Str(s) => format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
        T::Bool(b) => b.to_string(),
        T::Nav(root, attr) => format!("{root}.{attr}"),
        T::Var(v) => v.to_string(),
        T::Not(e) => format!("(not {})", print(e)),
        T::Neg(e) => format!("(-{})", print(e)),
        T::Bin(op, l, r) => format!("({} {op} {})", print(l), print(r)),
        T::Call(f, args) => format!("{f}({})", args.iter().map(print).collect::<Vec<_>>().join(", ")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fault {
    DivisionByZero,
    Overflow,
    Null,
    UnknownRoot,
    UnknownAttribute,
    Type,
}

fn fault(e: &EvalError) -> Fault {
    match e {
        EvalError::DivisionByZero => Fault::DivisionByZero,
        EvalError::Overflow => Fault::Overflow,
        EvalError::NullNavigation(_) => Fault::Null,
        EvalError::UnknownIdentifier(_) => Fault::UnknownRoot,
        EvalError::UnknownAttribute { .. } => Fault::UnknownAttribute,
        EvalError::Type(_) => Fault::Type,
    }
}

struct Env<'a> {
    source: &'a BTreeMap<String, Value>,
}

fn number(v: &Value) -> Result<Value, Fault> {
    match v {
        Value::Int(_) | Value::Float(_) => Ok(v.clone()),
        _ => Err(Fault::Type),
    }
}

fn float(v: &Value) -> f64 {
    match v {
        Value::Int(i) => *i as f64,
        Value::Float(x) => *x,
        _ => unreachable!(),
    }
}

fn truth(v: Value) -> Result<bool, Fault> {
    match v {
        Value::Bool(b) => Ok(b),
        _ => Err(Fault::Type),
    }
}

fn order(l: &Value, r: &Value) -> Result<Option<Ordering>, Fault> {
    match (l, r) {
        (Value::Int(a), Value::Int(b)) => Ok(Some(a.cmp(b))),
        (Value::Str(a), Value::Str(b)) => Ok(Some(a.chars().cmp(b.chars()))),
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => Ok(float(l).partial_cmp(&float(r))),
        _ => Err(Fault::Type),
    }
}

fn equal(l: &Value, r: &Value) -> Result<bool, Fault> {
    match (l, r) {
        (Value::Bool(a), Value::Bool(b)) => Ok(a == b),
        (Value::Str(a), Value::Str(b)) => Ok(a == b),
        (Value::Int(a), Value::Int(b)) => Ok(a == b),
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => Ok(float(l) == float(r)),
        _ => Err(Fault::Type),
    }
}

/// Reference semantics: operands left to right, `and`/`or` short-circuit,
/// `/` is real division, Int arithmetic is checked, mixing promotes to Float.
fn reference(t: &T, env: &Env<'_>) -> Result<Value, Fault> {
    Ok(match t {
        T::Int(i) => Value::Int(*i),
        T::Float(x, _) => Value::Float(*x),
        T::Str(s) => Value::Str(s.clone()),
        T::Bool(b) => Value::Bool(*b),
        T::Var(_) => return Err(Fault::UnknownRoot),
        T::Nav(root, attr) => match *root {
            "source" => env.source.get(*attr).cloned().ok_or(Fault::UnknownAttribute)?,
            "target" => return Err(Fault::Null),
            _ => return Err(Fault::UnknownRoot),
        },
        T::Not(e) => Value::Bool(!truth(reference(e, env)?)?),
        T::Neg(e) => match number(&reference(e, env)?)? {
            Value::Int(i) => Value::Int(i.checked_neg().ok_or(Fault::Overflow)?),
            v => Value::Float(-float(&v)),
        },
        T::Bin("and", l, r) => Value::Bool(truth(reference(l, env)?)? && truth(reference(r, env)?)?),
        T::Bin("or", l, r) => Value::Bool(truth(reference(l, env)?)? || truth(reference(r, env)?)?),
        T::Bin(op, l, r) => {
            let (l, r) = (reference(l, env)?, reference(r, env)?);
            match *op {
                "=" => Value::Bool(equal(&l, &r)?),
                "<>" => Value::Bool(!equal(&l, &r)?),
                "<" => Value::Bool(order(&l, &r)? == Some(Ordering::Less)),
                "<=" => Value::Bool(matches!(order(&l, &r)?, Some(Ordering::Less | Ordering::Equal))),
                ">" => Value::Bool(order(&l, &r)? == Some(Ordering::Greater)),
                ">=" => Value::Bool(matches!(order(&l, &r)?, Some(Ordering::Greater | Ordering::Equal))),
                _ => {
                    let (l, r) = (number(&l)?, number(&r)?);
                    match (*op, &l, &r) {
                        ("/", _, _) if float(&r) == 0.0 => return Err(Fault::DivisionByZero),
                        ("/", _, _) => Value::Float(float(&l) / float(&r)),
                        ("+", Value::Int(a), Value::Int(b)) => Value::Int(a.checked_add(*b).ok_or(Fault::Overflow)?),
                        ("-", Value::Int(a), Value::Int(b)) => Value::Int(a.checked_sub(*b).ok_or(Fault::Overflow)?),
                        ("*", Value::Int(a), Value::Int(b)) => Value::Int(a.checked_mul(*b).ok_or(Fault::Overflow)?),
                        ("+", _, _) => Value::Float(float(&l) + float(&r)),
                        ("-", _, _) => Value::Float(float(&l) - float(&r)),
                        ("*", _, _) => Value::Float(float(&l) * float(&r)),
                        _ => unreachable!("operator {op}"),
                    }
                }
            }
        }
        T::Call(f, args) => {
            let mut values = Vec::new();
            for a in args {
                values.push(reference(a, env)?);
            }
            for v in &values {
                number(v)?;
            }
            match (*f, values.as_slice()) {
                ("abs", [Value::Int(i)]) => Value::Int(i.checked_abs().ok_or(Fault::Overflow)?),
                ("abs", [Value::Float(x)]) => Value::Float(x.abs()),
                ("abs", _) => return Err(Fault::Type),
                (_, v) if v.len() < 2 => return Err(Fault::Type),
                (f, v) if v.iter().all(|x| matches!(x, Value::Int(_))) => {
                    let ints = v.iter().map(|x| if let Value::Int(i) = x { *i } else { 0 });
                    Value::Int(if f == "min" { ints.min().unwrap() } else { ints.max().unwrap() })
                }
                (f, v) => {
                    let mut best = float(&v[0]);
                    for x in v[1..].iter().map(float) {
                        if (f == "min" && x < best) || (f == "max" && x > best) {
                            best = x;
                        }
                    }
                    Value::Float(best)
                }
            }
        }
    })
}

fn same(a: &Result<Value, Fault>, b: &Result<Value, Fault>) -> bool {
    match (a, b) {
        (Ok(Value::Float(x)), Ok(Value::Float(y))) => x == y || (x.is_nan() && y.is_nan()),
        _ => a == b,
    }
}

fn context(rng: &mut ChaCha8Rng) -> ModelElement {
    let attrs = BTreeMap::from([
        ("n".to_owned(), Value::Int(rng.gen_range(-5..=5))),
        ("x".to_owned(), Value::Float(*[0.0, -0.0, 0.5, -2.5, 3.0, 1e9].choose(rng).unwrap())),
        ("flag".to_owned(), Value::Bool(rng.gen_bool(0.5))),
        ("label".to_owned(), Value::Str(WORDS.choose(rng).unwrap().to_string())),
    ]);
    ModelElement { id: "s".into(), class: "Thing".into(), attrs, refs: BTreeMap::new() }
}

pub fn evaluator() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut ok, mut faults) = (0, 0);
    for case in 0..CASES {
        let depth = rng.gen_range(1..=6);
        let tree = gen(&mut rng, depth);
        let element = context(&mut rng);
        let text = print(&tree);
        let parsed = parse_expr(&text).map_err(|e| format!("case {case}: `{text}` did not parse: {e}"))?;
        let printed = parsed.to_string();
        let reparsed = parse_expr(&printed).map_err(|e| format!("case {case}: reprint `{printed}` did not parse: {e}"))?;
        if reparsed != parsed {
            return Err(format!("case {case}: `{text}` printed as `{printed}` reparsed differently"));
        }
        let ctx = EvalContext::new().bind("source", Some(&element)).bind("target", None);
        let actual = eval(&parsed, &ctx).map_err(|e| fault(&e));
        let expected = reference(&tree, &Env { source: &element.attrs });
        if !same(&actual, &expected) {
            return Err(format!("case {case}: `{text}` on {:?} gave {actual:?}, reference {expected:?}", element.attrs));
        }
        match expected {
            Ok(_) => ok += 1,
            Err(_) => faults += 1,
        }
    }
    if ok < CASES / 5 || faults < CASES / 20 {
        return Err(format!("corpus too lopsided: {ok} values, {faults} faults"));
    }
    Ok(format!("{CASES} expressions agree ({ok} values, {faults} faults); print/parse fixpoint holds"))
}
