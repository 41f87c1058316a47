//! Random runtime edits and rule sets against a naive projection: after every
//! incremental sync the scenario must be exactly what evaluating every rule
//! against every runtime element from scratch would give.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use homesync_core::mapping::parse_rules;
use homesync_core::metamodel::{parse_metamodel, Metamodel, Model, ModelElement, ModelTag, Origin, Value};
use homesync_core::runtime_model::{runtime_metamodel, ROOT_CLASS, ROOT_ID};
use homesync_core::sync::Synchronizer;

use crate::Outcome;

const CASES: u64 = 120;
const ROUNDS: usize = 25;

const SCENARIO_CLASSES: &str = "
class Alpha {
  attr a0: Float
  attr a1: Float
  attr a2: Float
  attr flag: Bool
  attr label: String
}
class Beta {
  attr a0: Float
  attr flag: Bool
  attr label: String
}
";

const DEVICE_FLOATS: [&str; 6] = ["temperature", "soil_moisture", "soil_fertility", "accumulated_light", "light_min", "moisture_max"];
const DEVICE_STRINGS: [&str; 4] = ["dev_id", "device_type", "plant_name", "species"];
const WORDS: [&str; 4] = ["a", "b", "PlantMonitor", "it's <x> & \"y\""];
const NUMBERS: [f64; 6] = [-3.5, 0.0, 1.25, 40.0, 350.0, 1.0e3];

#[derive(Debug, Clone)]
enum F {
    Lit(f64),
    Nav(&'static str),
    Bin(char, Box<F>, Box<F>),
    Abs(Box<F>),
    Extreme(bool, Vec<F>),
}

#[derive(Debug, Clone)]
enum B {
    Lit(bool),
    Nav(&'static str),
    Cmp(&'static str, F, F),
    StrEq(&'static str, &'static str),
    Not(Box<B>),
    Both(bool, Box<B>, Box<B>),
}

#[derive(Debug, Clone)]
enum Mapped {
    Float(F),
    Bool(B),
    Str(&'static str),
}

#[derive(Debug, Clone)]
struct Rule {
    id: String,
    device: bool,
    predicate: Option<B>,
    target: &'static str,
    attrs: Vec<(&'static str, Mapped)>,
}

fn floats(device: bool) -> &'static [&'static str] {
    if device {
        &DEVICE_FLOATS
    } else {
        &[]
    }
}

fn strings(device: bool) -> &'static [&'static str] {
    if device {
        &DEVICE_STRINGS
    } else {
        &DEVICE_STRINGS[..2]
    }
}

fn bools(device: bool) -> &'static [&'static str] {
    if device {
        &["online"]
    } else {
        &["online", "power"]
    }
}

fn gen_f(rng: &mut ChaCha8Rng, device: bool, depth: u32) -> F {
    if depth == 0 || rng.gen_bool(0.35) {
        return match floats(device).choose(rng) {
            Some(attr) if rng.gen_bool(0.7) => F::Nav(attr),
            _ => F::Lit(*NUMBERS.choose(rng).unwrap()),
        };
    }
    match rng.gen_range(0..10) {
        0..=5 => F::Bin(*['+', '-', '*'].choose(rng).unwrap(), Box::new(gen_f(rng, device, depth - 1)), Box::new(gen_f(rng, device, depth - 1))),
        6 => F::Abs(Box::new(gen_f(rng, device, depth - 1))),
        _ => F::Extreme(rng.gen_bool(0.5), (0..rng.gen_range(2..=3)).map(|_| gen_f(rng, device, depth - 1)).collect()),
    }
}

fn gen_b(rng: &mut ChaCha8Rng, device: bool, depth: u32) -> B {
    match rng.gen_range(0..10) {
        _ if depth == 0 => B::Lit(rng.gen_bool(0.7)),
        0 => B::Lit(rng.gen_bool(0.7)),
        1 => B::Nav(bools(device).choose(rng).unwrap()),
        2..=4 => B::Cmp(["<", ">", "=", "<>"].choose(rng).unwrap(), gen_f(rng, device, 2), gen_f(rng, device, 2)),
        5..=6 => B::StrEq(strings(device).choose(rng).unwrap(), WORDS.choose(rng).unwrap()),
        7 => B::Not(Box::new(gen_b(rng, device, depth - 1))),
        _ => B::Both(rng.gen_bool(0.5), Box::new(gen_b(rng, device, depth - 1)), Box::new(gen_b(rng, device, depth - 1))),
    }
}

fn gen_rules(rng: &mut ChaCha8Rng) -> Vec<Rule> {
    (0..rng.gen_range(1..=4))
        .map(|i| {
            let device = rng.gen_bool(0.7);
            let target = if rng.gen_bool(0.6) { "Alpha" } else { "Beta" };
            let slots: &[&str] = if target == "Alpha" { &["a0", "a1", "a2", "flag", "label"] } else { &["a0", "flag", "label"] };
            let attrs = slots
                .iter()
                .filter_map(|slot| {
                    if !rng.gen_bool(0.7) {
                        return None;
                    }
                    let mapped = match *slot {
                        "flag" => Mapped::Bool(gen_b(rng, device, 2)),
                        "label" => Mapped::Str(strings(device).choose(rng).unwrap()),
                        _ => Mapped::Float(gen_f(rng, device, 3)),
                    };
                    Some((*slot, mapped))
                })
                .collect();
            let predicate = rng.gen_bool(0.85).then(|| gen_b(rng, device, 2));
            Rule { id: format!("r{i}"), device, predicate, target, attrs }
        })
        .collect()
}

fn show_f(f: &F) -> String {
    match f {
        F::Lit(x) => format!("{x:?}"),
        F::Nav(a) => format!("source.{a}"),
        F::Bin(op, l, r) => format!("({} {op} {})", show_f(l), show_f(r)),
        F::Abs(e) => format!("abs({})", show_f(e)),
        F::Extreme(min, args) => {
            format!("{}({})", if *min { "min" } else { "max" }, args.iter().map(show_f).collect::<Vec<_>>().join(", "))
        }
    }
}

fn show_b(b: &B) -> String {
    match b {
        B::Lit(v) => v.to_string(),
        B::Nav(a) => format!("source.{a}"),
        B::Cmp(op, l, r) => format!("({} {op} {})", show_f(l), show_f(r)),
        B::StrEq(a, w) => format!("(source.{a} = '{}')", w.replace('\\', "\\\\").replace('\'', "\\'")),
        B::Not(e) => format!("(not {})", show_b(e)),
        B::Both(and, l, r) => format!("({} {} {})", show_b(l), if *and { "and" } else { "or" }, show_b(r)),
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn to_xml(rules: &[Rule]) -> String {
    let mut out = String::from("<mappings>\n");
    for r in rules {
        let source = if r.device { "Device" } else { "Socket" };
        out += &format!("  <map id=\"{}\" source=\"{source}\" target=\"{}\" direction=\"toScenario\"", r.id, r.target);
        if let Some(p) = &r.predicate {
            out += &format!(" where=\"{}\"", escape(&show_b(p)));
        }
        out += ">\n";
        for (slot, mapped) in &r.attrs {
            let expr = match mapped {
                Mapped::Float(f) => show_f(f),
                Mapped::Bool(b) => show_b(b),
                Mapped::Str(a) => format!("source.{a}"),
            };
            out += &format!("    <attr target=\"{slot}\" expr=\"{}\"/>\n", escape(&expr));
        }
        out += "  </map>\n";
    }
    out + "</mappings>\n"
}

fn float_of(e: &ModelElement, attr: &str) -> f64 {
    match e.attrs.get(attr) {
        Some(Value::Float(x)) => *x,
        other => panic!("{}.{attr} is {other:?}", e.id),
    }
}

fn eval_f(f: &F, e: &ModelElement) -> f64 {
    match f {
        F::Lit(x) => *x,
        F::Nav(a) => float_of(e, a),
        F::Bin(op, l, r) => {
            let (l, r) = (eval_f(l, e), eval_f(r, e));
            match op {
                '+' => l + r,
                '-' => l - r,
                _ => l * r,
            }
        }
        F::Abs(x) => eval_f(x, e).abs(),
        F::Extreme(min, args) => {
            let mut values = args.iter().map(|a| eval_f(a, e));
            let first = values.next().unwrap();
            values.fold(first, |best, x| if (*min && x < best) || (!*min && x > best) { x } else { best })
        }
    }
}

fn eval_b(b: &B, e: &ModelElement) -> bool {
    match b {
        B::Lit(v) => *v,
        B::Nav(a) => e.attrs.get(*a) == Some(&Value::Bool(true)),
        B::Cmp(op, l, r) => {
            let (l, r) = (eval_f(l, e), eval_f(r, e));
            match *op {
                "<" => l < r,
                ">" => l > r,
                "=" => l == r,
                _ => l != r,
            }
        }
        B::StrEq(a, w) => e.attrs.get(*a) == Some(&Value::Str(w.to_string())),
        B::Not(x) => !eval_b(x, e),
        B::Both(true, l, r) => eval_b(l, e) && eval_b(r, e),
        B::Both(false, l, r) => eval_b(l, e) || eval_b(r, e),
    }
}

/// Target class and mapped attributes of one projected element.
type Projected = (&'static str, Vec<(&'static str, Value)>);

/// The scenario elements the rules should produce, by id.
fn projection(rules: &[Rule], runtime: &Model) -> BTreeMap<String, Projected> {
    let mut out = BTreeMap::new();
    for rule in rules {
        let class = if rule.device { "Device" } else { "Socket" };
        for e in runtime.elements().filter(|e| e.class == class) {
            if !rule.predicate.as_ref().is_none_or(|p| eval_b(p, e)) {
                continue;
            }
            let attrs = rule
                .attrs
                .iter()
                .map(|(slot, m)| {
                    let v = match m {
                        Mapped::Float(f) => Value::Float(eval_f(f, e)),
                        Mapped::Bool(b) => Value::Bool(eval_b(b, e)),
                        Mapped::Str(a) => e.attrs[*a].clone(),
                    };
                    (*slot, v)
                })
                .collect();
            out.insert(format!("{}@{}", rule.id, e.id), (rule.target, attrs));
        }
    }
    out
}

fn close(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0),
        _ => a == b,
    }
}

fn agree(rules: &[Rule], runtime: &Model, scenario: &Model) -> Result<usize, String> {
    let expected = projection(rules, runtime);
    let actual: Vec<&str> = scenario.elements().map(|e| e.id.as_str()).collect();
    let wanted: Vec<&str> = expected.keys().map(String::as_str).collect();
    if actual != wanted {
        return Err(format!("scenario has {actual:?}, oracle wants {wanted:?}"));
    }
    for (id, (class, attrs)) in &expected {
        let e = scenario.get(id).unwrap();
        if e.class != *class {
            return Err(format!("{id} is a {}, oracle wants {class}", e.class));
        }
        for (slot, v) in attrs {
            match e.attrs.get(*slot) {
                Some(got) if close(got, v) => {}
                got => return Err(format!("{id}.{slot} = {got:?}, oracle wants {v:?}")),
            }
        }
    }
    Ok(expected.len())
}

fn random_value(rng: &mut ChaCha8Rng, attr: &str) -> Value {
    if DEVICE_FLOATS.contains(&attr) {
        Value::Float(*NUMBERS.choose(rng).unwrap())
    } else if attr == "online" || attr == "power" {
        Value::Bool(rng.gen_bool(0.5))
    } else {
        Value::Str(WORDS.choose(rng).unwrap().to_string())
    }
}

fn settable(class: &str) -> Vec<&'static str> {
    let mut attrs: Vec<&str> = vec!["online"];
    if class == "Device" {
        attrs.extend(DEVICE_FLOATS);
        attrs.extend(DEVICE_STRINGS);
    } else {
        attrs.push("power");
        attrs.extend(&DEVICE_STRINGS[..2]);
    }
    attrs
}

fn spawn(rng: &mut ChaCha8Rng, runtime: &mut Model, next: &mut u32) -> homesync_core::metamodel::ChangeEvent {
    let class = if rng.gen_bool(0.6) { "Device" } else { "Socket" };
    let id = format!("dev{next}");
    *next += 1;
    let mut initial = Vec::new();
    for attr in settable(class) {
        if rng.gen_bool(0.6) {
            initial.push((attr.to_owned(), random_value(rng, attr)));
        }
    }
    runtime.instantiate(class, &id, initial, Origin::External).expect("fresh id")
}

fn run_case(seed: u64, runtime_mm: &Arc<Metamodel>, scenario_mm: &Arc<Metamodel>) -> Result<(usize, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runtime = Model::new(ModelTag::Runtime, Arc::clone(runtime_mm));
    runtime.instantiate(ROOT_CLASS, ROOT_ID, [], Origin::External).unwrap();
    runtime.set_root(ROOT_ID).unwrap();
    let mut scenario = Model::new(ModelTag::Scenario, Arc::clone(scenario_mm));

    let mut rules = gen_rules(&mut rng);
    let parsed = parse_rules(&to_xml(&rules)).map_err(|e| format!("seed {seed}: generated rules rejected: {e}"))?;
    let mut sync = Synchronizer::new(parsed, Arc::clone(runtime_mm), Arc::clone(scenario_mm))
        .map_err(|d| format!("seed {seed}: generated rules invalid: {d:?}\n{}", to_xml(&rules)))?;

    let (mut next, mut peak, mut events_total) = (0, 0, 0);
    for round in 0..ROUNDS {
        let mut events = Vec::new();
        for _ in 0..rng.gen_range(1..=6) {
            let ids: Vec<String> = runtime.elements().filter(|e| e.id != ROOT_ID).map(|e| e.id.clone()).collect();
            match rng.gen_range(0..10) {
                0..=2 => events.push(spawn(&mut rng, &mut runtime, &mut next)),
                3 if !ids.is_empty() => {
                    let id = ids.choose(&mut rng).unwrap();
                    events.push(runtime.delete(id, Origin::External).unwrap());
                }
                _ if !ids.is_empty() => {
                    let id = ids.choose(&mut rng).unwrap().clone();
                    let class = runtime.get(&id).unwrap().class.clone();
                    let attr = *settable(&class).choose(&mut rng).unwrap();
                    let value = random_value(&mut rng, attr);
                    events.extend(runtime.set_attribute(&id, attr, value, Origin::External).unwrap());
                }
                _ => {}
            }
        }
        events_total += events.len();
        sync.sync_runtime_to_scenario(&events, &runtime, &mut scenario);
        if round % 8 == 7 {
            rules = gen_rules(&mut rng);
            let parsed = parse_rules(&to_xml(&rules)).map_err(|e| format!("seed {seed}: generated rules rejected: {e}"))?;
            sync.reload_rules(parsed, &runtime, &mut scenario).map_err(|d| format!("seed {seed}: reload rejected: {d:?}"))?;
        }
        if let Some(d) = sync.diagnostics().next() {
            return Err(format!("seed {seed} round {round}: synchronizer fault: {d}"));
        }
        let live = agree(&rules, &runtime, &scenario).map_err(|e| format!("seed {seed} round {round}: {e}\n{}", to_xml(&rules)))?;
        peak = peak.max(live);
    }
    let residue = sync.full_resync(&runtime, &mut scenario);
    if !residue.is_empty() {
        return Err(format!("seed {seed}: full resync still changed {} element(s): {:?}", residue.len(), residue[0]));
    }
    Ok((peak, events_total))
}

pub fn convergence() -> Outcome {
    let runtime_mm = Arc::new(runtime_metamodel());
    let scenario_mm = Arc::new(parse_metamodel(SCENARIO_CLASSES).map_err(|e| e.to_string())?);
    let (mut peak, mut events, mut nonempty) = (0, 0, 0);
    for seed in 0..CASES {
        let (p, e) = run_case(seed, &runtime_mm, &scenario_mm)?;
        peak = peak.max(p);
        events += e;
        nonempty += usize::from(p > 0);
    }
    if nonempty < CASES as usize / 2 {
        return Err(format!("only {nonempty} of {CASES} cases ever projected anything"));
    }
    Ok(format!(
        "{CASES} seeded cases × {ROUNDS} rounds, {events} runtime events, {nonempty} cases with live bindings (peak {peak}); matches naive projection, resync idle"
    ))
}
