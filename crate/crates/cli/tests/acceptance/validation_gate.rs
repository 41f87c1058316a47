//! Runs the real `homesync validate` on the bundled documents and on seeded
//! single-fault mutants of them. Clean documents must pass; every mutant must
//! be rejected with exit code 2 and a diagnostic that names the file and a
//! line:column.

use std::path::{Path, PathBuf};
use std::process::Command;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

/// Random occurrences tried per site.
const DRAWS_PER_SITE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Doc {
    Roster,
    Rules,
    Scenario,
    StateMachines,
}

impl Doc {
    fn file(self) -> &'static str {
        match self {
            Doc::Roster => "roster.toml",
            Doc::Rules => "planting.mapping.xml",
            Doc::Scenario => "planting.scenario.xml",
            Doc::StateMachines => "planting_sm.scenario.xml",
        }
    }
}

/// One way of breaking a document: replace an occurrence of `from` with `to`.
struct Site {
    doc: Doc,
    from: &'static str,
    to: &'static str,
}

struct Operator {
    name: &'static str,
    sites: Vec<Site>,
    /// Whether the diagnostic must point within a few lines above the edit.
    /// Structural faults are only noticed later in the document.
    near_edit: bool,
}

fn site(doc: Doc, from: &'static str, to: &'static str) -> Site {
    Site { doc, from, to }
}

fn operators() -> Vec<Operator> {
    use Doc::*;
    let op = |name, near_edit, sites| Operator { name, sites, near_edit };
    vec![
        op("drop a closing tag", false, vec![site(Rules, "</map>", ""), site(Scenario, "</then>", ""), site(StateMachines, "</transition>", "")]),
        op(
            "unknown target attribute",
            true,
            vec![site(Rules, "<attr target=\"", "<attr target=\"zz"), site(Scenario, "target=\"Lamp.on\"", "target=\"Lamp.brightness\"")],
        ),
        op(
            "expression syntax error",
            true,
            vec![
                site(Rules, "expr=\"source.", "expr=\"source.."),
                site(Scenario, "off=\"self.", "off=\"(self."),
                site(StateMachines, "expr=\"true\"", "expr=\"true +\""),
            ],
        ),
        op(
            "unknown source class",
            true,
            vec![site(Rules, "source=\"Socket\"", "source=\"Sockett\""), site(Rules, "source=\"Device\"", "source=\"Devise\"")],
        ),
        op(
            "unknown navigated attribute",
            true,
            vec![
                site(Rules, "source.plant_name", "source.plantname"),
                site(Scenario, "self.soilMoisture", "self.soilMoistur"),
                site(StateMachines, "self.accumulatedLight", "self.accumulatedLite"),
            ],
        ),
        op("class type typo", true, vec![site(Scenario, ": Float", ": Flaot"), site(StateMachines, ": Float", ": Flaot")]),
        op(
            "ill-typed metric or guard",
            true,
            vec![
                site(Scenario, "metric=\"self.accumulatedLight\"", "metric=\"self.name\""),
                site(Scenario, "metric=\"self.soilMoisture\"", "metric=\"self.online\""),
                site(StateMachines, "guard=\"self.soilMoisture &lt;", "guard=\"self.soilMoisture +"),
            ],
        ),
        op(
            "duplicate rule id",
            false,
            vec![
                site(Rules, "<map id=\"pump\"", "<map id=\"lamp\""),
                site(Scenario, "<rule id=\"watering\"", "<rule id=\"lighting\""),
                site(StateMachines, "<stateMachine id=\"lighting\"", "<stateMachine id=\"watering\""),
            ],
        ),
        op(
            "bad assign target",
            true,
            vec![
                site(Scenario, "target=\"WaterPump.on\"", "target=\"Pump.on\""),
                site(StateMachines, "target=\"Lamp.on\"", "target=\"Lamp\""),
            ],
        ),
        op(
            "unknown device type",
            true,
            vec![site(Roster, "\"SmartPlug\"", "\"Toaster\""), site(Roster, "\"PlantMonitor\"", "\"Toaster\"")],
        ),
    ]
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn validate(roster: &Path, rules: &Path, scenario: &Path) -> Result<(i32, String), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_homesync"))
        .arg("validate")
        .args([roster, rules, scenario])
        .output()
        .map_err(|e| format!("running homesync: {e}"))?;
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    Ok((out.status.code().unwrap_or(-1), text))
}

/// Lines of the form `path:line:col: message` for the given path.
fn located(output: &str, path: &Path) -> Vec<(usize, usize)> {
    let prefix = format!("{}:", path.display());
    output
        .lines()
        .filter_map(|l| {
            let rest = l.strip_prefix(&prefix)?;
            let mut parts = rest.splitn(3, ':');
            let line = parts.next()?.parse().ok()?;
            let col = parts.next()?.parse().ok()?;
            parts.next()?.starts_with(' ').then_some((line, col))
        })
        .collect()
}

pub fn gate() -> Outcome {
    let dir = fixtures();
    let paths = |scenario: Doc| [Doc::Roster, Doc::Rules, scenario].map(|d| dir.join(d.file()));
    for scenario in [Doc::Scenario, Doc::StateMachines] {
        let [r, m, s] = paths(scenario);
        let (code, out) = validate(&r, &m, &s)?;
        if code != 0 {
            return Err(format!("bundled {} rejected (exit {code}): {out}", scenario.file()));
        }
    }

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mutants = 0;
    for operator in operators() {
        for site in operator.sites.iter().flat_map(|s| std::iter::repeat_n(s, DRAWS_PER_SITE)) {
            let original = std::fs::read_to_string(dir.join(site.doc.file())).map_err(|e| e.to_string())?;
            let offsets: Vec<usize> = original.match_indices(site.from).map(|(i, _)| i).collect();
            let at = *offsets.choose(&mut rng).ok_or_else(|| format!("{}: `{}` not found in {}", operator.name, site.from, site.doc.file()))?;
            let mutated = format!("{}{}{}", &original[..at], site.to, &original[at + site.from.len()..]);
            let edit_line = original[..at].matches('\n').count() + 1;

            let scenario = if matches!(site.doc, Doc::StateMachines) { Doc::StateMachines } else { Doc::Scenario };
            let mut files = paths(scenario);
            let slot = match site.doc {
                Doc::Roster => 0,
                Doc::Rules => 1,
                _ => 2,
            };
            let path = tmp.path().join(format!("m{mutants}-{}", site.doc.file()));
            std::fs::write(&path, mutated).map_err(|e| e.to_string())?;
            files[slot] = path.clone();

            let (code, out) = validate(&files[0], &files[1], &files[2])?;
            let what = format!("{} ({} line {edit_line})", operator.name, site.doc.file());
            if code != 2 {
                return Err(format!("{what}: exit {code}, wanted 2: {out}"));
            }
            let spots = located(&out, &path);
            if spots.is_empty() {
                return Err(format!("{what}: no located diagnostic for the mutated file: {out}"));
            }
            if operator.near_edit && !spots.iter().any(|(line, _)| (edit_line.saturating_sub(3)..=edit_line).contains(line)) {
                return Err(format!("{what}: diagnostics at {spots:?} are not near the edit: {out}"));
            }
            mutants += 1;
        }
    }
    Ok(format!("bundled documents pass; {mutants} mutants from 10 operators all rejected with exit 2 and located diagnostics"))
}
