//! Closed-loop runs of the bundled planting scenario on the embedded fleet.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use homesync_core::device_sim::{lookup, Appliance, DeviceState, Fleet, Roster};
use homesync_core::fixtures;
use homesync_core::host::{Host, TickReport};
use homesync_core::mapping::parse_rules;
use homesync_core::metamodel::{Origin, Value};
use homesync_core::runtime_model::{DeviceTransport, EmbeddedTransport, TransportError};
use homesync_core::scenario::{load_scenario, Severity};
use homesync_core::sync::WriteRequest;

use crate::Outcome;

const MONITOR: &str = "flora-01";
const LAMP_PLUG: &str = "mi-plug-01";
const PUMP_PLUG: &str = "haier-plug-01";
const PLANT: &str = "plant@flora-01";

fn block_on<F: std::future::Future>(f: F) -> F::Output {
    tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap().block_on(f)
}

fn roster_with_moisture(moisture: f64) -> Roster {
    let mut roster = Roster::demo();
    let monitor = roster.devices.iter_mut().find(|d| d.dev_id == MONITOR).unwrap();
    monitor.initial.insert("soil_moisture".into(), serde_json::json!(moisture));
    roster
}

fn plant_attr(host: &Host, attr: &str) -> f64 {
    host.scenario().model().get(PLANT).expect("plant is mapped").attr(attr).and_then(Value::as_f64).unwrap()
}

fn fleet(host: &Host) -> Arc<Mutex<Fleet>> {
    Arc::clone(host.fleet().expect("embedded fleet"))
}

fn device_f64(host: &Host, dev_id: &str, attr: &str) -> f64 {
    fleet(host).lock().unwrap().get_state(dev_id).unwrap().f64(attr)
}

fn appliance_on(host: &Host, appliance: Appliance) -> bool {
    fleet(host).lock().unwrap().appliance_on(appliance)
}

/// Ticks once, names the plant, and ticks again so the ranges have arrived.
async fn named(host: &mut Host, name: &str) {
    host.tick().await;
    let action = host.set_plant_name(name).await.unwrap();
    assert!(action.failed_writes.is_empty(), "{:?}", action.failed_writes);
    host.tick().await;
}

fn power_writes<'a>(report: &'a TickReport, dev_id: &'a str) -> impl Iterator<Item = bool> + 'a {
    report.writes.iter().filter(move |w| w.dev_id == dev_id && w.attr == "power").map(|w| w.value.as_bool().unwrap())
}

pub fn watering() -> Outcome {
    let started = Instant::now();
    let profile = lookup("monstera");
    let on = profile.moisture.min;
    let off = on + 0.1 * (profile.moisture.max - profile.moisture.min);
    let mut host = Host::embedded(&roster_with_moisture(on - 10.0), fixtures::MAPPING, fixtures::SCENARIO).unwrap();
    block_on(async {
        let (mut switched_on, mut rose_past_off, mut switched_off) = (None, false, None);
        let mut chatter = Vec::new();
        for tick in 1..=200 {
            let report = host.tick().await;
            if tick == 1 {
                host.set_plant_name("Monstera").await.unwrap();
            }
            // the moisture and band the behavior step just saw
            let seen = plant_attr(&host, "soilMoisture");
            let (lo, hi) = (plant_attr(&host, "moistureMin"), plant_attr(&host, "moistureMax"));
            if switched_on.is_some() && seen > off {
                rose_past_off = true;
            }
            for power in power_writes(&report, PUMP_PLUG) {
                let justified = if power { seen < lo } else { seen > lo + 0.1 * (hi - lo) };
                if !justified {
                    chatter.push((tick, power, seen));
                }
                match power {
                    true if switched_on.is_none() => switched_on = Some(tick),
                    false if switched_on.is_some() && switched_off.is_none() && rose_past_off => switched_off = Some(tick),
                    _ => {}
                }
            }
            let pump_element = host.scenario().model().get("pump@haier-plug-01").unwrap();
            assert_eq!(appliance_on(&host, Appliance::Pump), pump_element.attr("on") == Some(&Value::Bool(true)));
        }
        let on_tick = switched_on.ok_or("pump never turned on")?;
        let off_tick = switched_off.ok_or("pump never turned off after moisture passed the off threshold")?;
        if !chatter.is_empty() {
            return Err(format!("switches inside the hysteresis band: {chatter:?}"));
        }
        let elapsed = started.elapsed();
        if elapsed > Duration::from_secs(5) {
            return Err(format!("took {elapsed:?}"));
        }
        Ok(format!("start {:.1}%, band [{on}, {off}], pump on at tick {on_tick}, off at tick {off_tick}, 0 chattering switches", on - 10.0))
    })
}

/// Accumulated light at the end of each completed simulated day.
fn end_of_day_light(host: &mut Host, days: usize) -> Vec<f64> {
    block_on(async {
        named(host, "Monstera").await;
        let mut ends = Vec::new();
        let mut last = device_f64(host, MONITOR, "accumulated_light");
        while ends.len() < days {
            host.tick().await;
            let light = device_f64(host, MONITOR, "accumulated_light");
            if light < last {
                ends.push(last);
            }
            last = light;
        }
        ends
    })
}

pub fn lighting() -> Outcome {
    let started = Instant::now();
    let roster = Roster::demo();
    let sim = &roster.sim;
    let profile = lookup("monstera");
    let ambient_total = sim.ambient_light_rate * (sim.daylight_end - sim.daylight_start);
    if ambient_total >= profile.light.min {
        return Err(format!("ambient light alone reaches {ambient_total}, not below {}", profile.light.min));
    }
    let tolerance = (sim.ambient_light_rate + sim.lamp_light_rate) * sim.sim_hours_per_tick;

    let mut dark = Host::embedded(&roster, fixtures::MAPPING, fixtures::SCENARIO).unwrap();
    fleet(&dark).lock().unwrap().rewire(LAMP_PLUG, None).unwrap();
    let unlit = end_of_day_light(&mut dark, 2);
    if unlit.iter().any(|l| *l >= profile.light.min) {
        return Err(format!("without a lamp the day ended at {unlit:?}"));
    }

    let mut host = Host::embedded(&roster, fixtures::MAPPING, fixtures::SCENARIO).unwrap();
    let ends = end_of_day_light(&mut host, 2);
    for light in &ends {
        if *light < profile.light.min - tolerance || *light > profile.light.max + tolerance {
            return Err(format!("day ended at {light}, outside [{}, {}] ± {tolerance}", profile.light.min, profile.light.max));
        }
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(5) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!(
        "ambient only {unlit:?} < {}; with lamp {ends:?} in [{}, {}] ± {tolerance}",
        profile.light.min, profile.light.min, profile.light.max
    ))
}

fn swapped_rules() -> String {
    fixtures::MAPPING
        .replace("'mi-plug-01'", "'SWAP'")
        .replace("'haier-plug-01'", "'mi-plug-01'")
        .replace("'SWAP'", "'haier-plug-01'")
}

pub fn hot_swap() -> Outcome {
    let roster = Roster::demo();
    let profile = lookup("monstera");
    let tolerance = (roster.sim.ambient_light_rate + roster.sim.lamp_light_rate) * roster.sim.sim_hours_per_tick;
    let mut host = Host::embedded(&roster, fixtures::MAPPING, fixtures::SCENARIO).unwrap();
    block_on(async {
        named(&mut host, "Monstera").await;
        while host.time_hours() < 5.0 {
            host.tick().await;
        }
        if !appliance_on(&host, Appliance::Lamp) {
            return Err("lamp was not on before the swap".into());
        }
        let ticks_before = host.tick_count();

        // the plugs trade places, then the rules follow them
        {
            let fleet = fleet(&host);
            let mut fleet = fleet.lock().unwrap();
            fleet.rewire(LAMP_PLUG, Some(Appliance::Pump)).unwrap();
            fleet.rewire(PUMP_PLUG, Some(Appliance::Lamp)).unwrap();
        }
        let reload = host.reload_rules(&swapped_rules()).map_err(|d| format!("{d:?}"))?;
        if !reload.changed || reload.version != 2 {
            return Err(format!("unexpected reload {reload:?}"));
        }

        let mut live_after = None;
        for k in 1..=2 {
            host.tick().await;
            let bindings: Vec<_> = host.synchronizer().bindings().filter(|b| b.rule_id == "lamp").collect();
            let old_gone = !bindings.iter().any(|b| b.runtime_id == LAMP_PLUG) && !host.scenario().model().contains("lamp@mi-plug-01");
            let new_live = bindings.iter().any(|b| b.runtime_id == PUMP_PLUG)
                && host.scenario().model().get("lamp@haier-plug-01").and_then(|e| e.attr("on")) == Some(&Value::Bool(true))
                && appliance_on(&host, Appliance::Lamp);
            if old_gone && new_live {
                live_after = Some(k);
                break;
            }
        }
        let live_after = live_after.ok_or("lamp binding did not move to haier-plug-01 within 2 ticks")?;

        let mut last = device_f64(&host, MONITOR, "accumulated_light");
        let end = loop {
            host.tick().await;
            let light = device_f64(&host, MONITOR, "accumulated_light");
            if light < last {
                break last;
            }
            last = light;
        };
        if end < profile.light.min - tolerance || end > profile.light.max + tolerance {
            return Err(format!("after the swap the day ended at {end}"));
        }
        if host.tick_count() <= ticks_before {
            return Err("tick counter restarted".into());
        }
        Ok(format!("new binding live after {live_after} tick(s), rules v{}, day ended at {end:.1}", reload.version))
    })
}

/// Passes calls through to the fleet and records every write.
#[derive(Clone)]
struct Recording {
    inner: EmbeddedTransport,
    puts: Arc<Mutex<Vec<(String, String, Value)>>>,
}

#[async_trait]
impl DeviceTransport for Recording {
    async fn get_state(&self, dev_id: &str) -> Result<DeviceState, TransportError> {
        self.inner.get_state(dev_id).await
    }

    async fn put_state(&self, dev_id: &str, attrs: BTreeMap<String, Value>) -> Result<DeviceState, TransportError> {
        self.puts.lock().unwrap().extend(attrs.iter().map(|(a, v)| (dev_id.to_owned(), a.clone(), v.clone())));
        self.inner.put_state(dev_id, attrs).await
    }
}

pub fn echo_suppression() -> Outcome {
    let roster = roster_with_moisture(20.0);
    let fleet = Arc::new(Mutex::new(Fleet::from_roster(&roster).unwrap()));
    let recording = Recording { inner: EmbeddedTransport::new(Arc::clone(&fleet)), puts: Arc::default() };
    let transport: Arc<dyn DeviceTransport> = Arc::new(recording.clone());
    let rules = parse_rules(fixtures::MAPPING).unwrap();
    let bidirectional = rules.rules.iter().filter(|r| !r.writebacks.is_empty()).count();
    let scenario = load_scenario(fixtures::SCENARIO).unwrap();
    let mut host = Host::new(&roster, rules, scenario, Some(fleet), roster.sim.sim_hours_per_tick, |_| Arc::clone(&transport)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let mut reported: Vec<WriteRequest> = Vec::new();
    block_on(async {
        for tick in 1..=1000u32 {
            let report = host.tick().await;
            reported.extend(report.writes);
            let action = match tick {
                1 => Some(host.set_plant_name("Monstera").await.unwrap()),
                500 => Some(host.set_plant_name("basil").await.unwrap()),
                _ if rng.gen_bool(0.05) => {
                    let id = if rng.gen_bool(0.5) { "lamp@mi-plug-01" } else { "pump@haier-plug-01" };
                    Some(host.set_actuator(id, rng.gen_bool(0.5)).await.unwrap())
                }
                _ => None,
            };
            if let Some(action) = action {
                reported.extend(action.writes);
            }
        }
    });

    let puts = recording.puts.lock().unwrap().clone();
    let stats = host.synchronizer().stats().clone();
    let caused_by_sync = reported.iter().filter(|w| w.cause == Origin::Synchronizer).count();
    let by_origin_total: u64 = stats.writes_by_origin.values().sum();
    let recorded: Vec<_> = reported.iter().map(|w| (w.dev_id.clone(), w.attr.clone(), w.value.clone())).collect();
    if caused_by_sync != 0 || stats.writes_by_origin.contains_key(&Origin::Synchronizer) {
        return Err(format!("{caused_by_sync} writes caused by synchronizer events"));
    }
    if puts != recorded {
        return Err(format!("{} device writes observed, {} requested", puts.len(), recorded.len()));
    }
    if by_origin_total != puts.len() as u64 {
        return Err(format!("statistics count {by_origin_total} writes, devices saw {}", puts.len()));
    }
    if stats.suppressed == 0 || puts.is_empty() {
        return Err("the run never exercised a write or an echo".into());
    }
    Ok(format!(
        "1000 ticks, {bidirectional} bidirectional rules, {} device writes ({:?}), {} echoes suppressed, 0 synchronizer-caused",
        puts.len(),
        stats.writes_by_origin,
        stats.suppressed
    ))
}

pub fn fertility() -> Outcome {
    let profile = lookup("monstera");
    let threshold = profile.fertility.min;
    let mut script: Vec<f64> = Vec::new();
    for _ in 0..3 {
        script.extend((0..=20).map(|i| threshold + 150.0 - 15.0 * i as f64));
        script.extend((0..=20).map(|i| threshold - 150.0 + 15.0 * i as f64));
    }
    // dithering around the threshold
    script.extend([threshold + 2.0, threshold - 2.0, threshold + 3.0, threshold - 1.0, threshold + 50.0]);

    let mut host = Host::embedded(&Roster::demo(), fixtures::MAPPING, fixtures::SCENARIO).unwrap();
    block_on(async {
        named(&mut host, "Monstera").await;
        let mut previous = plant_attr(&host, "soilFertility");
        let (mut crossings, mut warnings) = (Vec::new(), Vec::new());
        for (i, level) in script.iter().enumerate() {
            fleet(&host).lock().unwrap().inject(MONITOR, "soil_fertility", Value::Float(*level)).unwrap();
            let report = host.tick().await;
            let seen = plant_attr(&host, "soilFertility");
            if previous >= threshold && seen < threshold {
                crossings.push(i);
            }
            previous = seen;
            let n = report.notifications.iter().filter(|n| n.rule_id == "fertility" && n.severity == Severity::Warning).count();
            warnings.extend(std::iter::repeat_n(i, n));
        }
        if plant_attr(&host, "fertilityMin") != threshold {
            return Err("fertility range did not follow the species".into());
        }
        if crossings != warnings {
            return Err(format!("downward crossings at {crossings:?}, warnings at {warnings:?}"));
        }
        Ok(format!("{} downward crossings of {threshold}, {} warnings, one per crossing", crossings.len(), warnings.len()))
    })
}
