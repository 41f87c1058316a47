use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use homesync_client::{ClientError, HostClient};
use homesync_core::config::{parse_roster, read, validate_documents, DocumentNames, HostConfig, HostError, EXIT_INVALID, EXIT_IO, EXIT_OK};
use homesync_core::device_sim::Fleet;

#[derive(Parser)]
#[command(name = "homesync", about = "Scenario-driven control of a simulated smart home")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the host service.
    Serve(ServeArgs),
    /// Check a roster, a mapping document and a scenario document.
    Validate { roster: PathBuf, rules: PathBuf, scenario: PathBuf },
    /// Print the version.
    Version,
    /// Serve a roster's devices over the device protocol.
    Sim {
        #[arg(long)]
        roster: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8090")]
        listen: String,
        /// Advance simulated time every this many milliseconds; without it, only `POST /sim/step` does.
        #[arg(long)]
        tick_ms: Option<u64>,
    },
    /// Print the status of a running host.
    Status(Remote),
    /// Print the scenario model of a running host.
    Scenario(Remote),
    /// Print the runtime model of a running host.
    Runtime(Remote),
    /// Print the notifications raised so far.
    Notifications(Remote),
    /// Print the host's diagnostics.
    Diagnostics(Remote),
    /// Name the plant.
    SetName {
        name: String,
        #[command(flatten)]
        remote: Remote,
    },
    /// Switch a scenario actuator.
    Actuator {
        element_id: String,
        #[arg(value_parser = parse_switch, action = clap::ArgAction::Set)]
        state: bool,
        #[command(flatten)]
        remote: Remote,
    },
    /// Replace the active mapping rules.
    UploadRules {
        file: PathBuf,
        #[command(flatten)]
        remote: Remote,
    },
    /// Run one tick on a host started in test mode.
    Tick(Remote),
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    sim_listen: Option<String>,
    #[arg(long)]
    tick_ms: Option<u64>,
    #[arg(long)]
    sim_hours_per_tick: Option<f64>,
    /// Reach devices at their roster `base_url` instead of simulating them in-process.
    #[arg(long)]
    external_devices: bool,
    /// Disable the ticker and accept `POST /api/tick`.
    #[arg(long)]
    test_mode: bool,
}

#[derive(clap::Args)]
struct Remote {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    url: String,
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(format!("expected on or off, got `{s}`")),
    }
}

fn report(e: &HostError) -> ExitCode {
    match e {
        HostError::Invalid(ds) => ds.iter().for_each(|d| eprintln!("{d}")),
        io => eprintln!("{io}"),
    }
    code(e.exit_code())
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn validate(roster: &Path, rules: &Path, scenario: &Path) -> ExitCode {
    let texts = [roster, rules, scenario].map(read);
    if let Some(Err(e)) = texts.iter().find(|t| t.is_err()) {
        return report(e);
    }
    let [roster_text, rules_text, scenario_text] = texts.map(Result::unwrap);
    let (rn, mn, sn) = (roster.display().to_string(), rules.display().to_string(), scenario.display().to_string());
    let names = DocumentNames { roster: &rn, rules: &mn, scenario: &sn };
    let diagnostics = validate_documents(&roster_text, &rules_text, &scenario_text, &names);
    if diagnostics.is_empty() {
        println!("ok");
        return code(EXIT_OK);
    }
    report(&HostError::Invalid(diagnostics))
}

fn serve_config(args: &ServeArgs) -> Result<HostConfig, HostError> {
    let mut config = HostConfig::load(&args.config)?;
    if let Some(l) = &args.listen {
        config.listen = l.clone();
    }
    if let Some(l) = &args.sim_listen {
        config.sim_listen = Some(l.clone());
    }
    if let Some(t) = args.tick_ms {
        config.tick_ms = t;
    }
    if let Some(h) = args.sim_hours_per_tick {
        config.sim_hours_per_tick = Some(h);
    }
    if args.external_devices {
        config.embed_simulator = false;
    }
    if args.test_mode {
        config.test_mode = true;
    }
    config.check()?;
    Ok(config)
}

async fn serve(args: ServeArgs) -> ExitCode {
    let config = match serve_config(&args) {
        Ok(c) => c,
        Err(e) => return report(&e),
    };
    let running = match homesync_service::start(&config).await {
        Ok(r) => r,
        Err(homesync_service::ServiceError::Host(e)) => return report(&e),
        Err(e) => {
            eprintln!("{e}");
            return code(e.exit_code());
        }
    };
    println!("listening on http://{}", running.api_addr);
    if let Some(addr) = running.sim_addr {
        println!("devices on http://{addr}");
    }
    let _ = tokio::signal::ctrl_c().await;
    running.shutdown().await;
    code(EXIT_OK)
}

async fn sim(roster: &Path, listen: &str, tick_ms: Option<u64>) -> ExitCode {
    let text = match read(roster) {
        Ok(t) => t,
        Err(e) => return report(&e),
    };
    let roster = match parse_roster(&text) {
        Ok(r) => r,
        Err(ds) => return report(&HostError::Invalid(ds.into_iter().map(|d| d.in_document(roster.display().to_string())).collect())),
    };
    let fleet = Fleet::from_roster(&roster).expect("roster checked");
    let running = match homesync_service::serve_simulator(fleet, listen, tick_ms).await {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return code(e.exit_code());
        }
    };
    println!("devices on http://{}", running.addr);
    let _ = tokio::signal::ctrl_c().await;
    running.shutdown().await;
    code(EXIT_OK)
}

fn print(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("responses serialize"));
}

fn client_failure(e: ClientError) -> ExitCode {
    eprintln!("{e}");
    for d in e.diagnostics() {
        eprintln!("{d}");
    }
    match e.status() {
        Some(400 | 409 | 422) => code(EXIT_INVALID),
        _ => code(EXIT_IO),
    }
}

async fn remote<T: Serialize>(call: impl std::future::Future<Output = Result<T, ClientError>>) -> ExitCode {
    match call.await {
        Ok(v) => {
            print(&v);
            code(EXIT_OK)
        }
        Err(e) => client_failure(e),
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Serve(args) => serve(args).await,
        Command::Validate { roster, rules, scenario } => validate(&roster, &rules, &scenario),
        Command::Version => {
            println!("homesync {}", env!("CARGO_PKG_VERSION"));
            code(EXIT_OK)
        }
        Command::Sim { roster, listen, tick_ms } => sim(&roster, &listen, tick_ms).await,
        Command::Status(r) => remote(HostClient::new(&r.url).status()).await,
        Command::Scenario(r) => remote(HostClient::new(&r.url).scenario()).await,
        Command::Runtime(r) => remote(HostClient::new(&r.url).runtime()).await,
        Command::Notifications(r) => remote(HostClient::new(&r.url).notifications()).await,
        Command::Diagnostics(r) => remote(HostClient::new(&r.url).diagnostics()).await,
        Command::SetName { name, remote: r } => remote(HostClient::new(&r.url).set_plant_name(&name)).await,
        Command::Actuator { element_id, state, remote: r } => {
            remote(HostClient::new(&r.url).set_actuator(&element_id, state)).await
        }
        Command::UploadRules { file, remote: r } => match read(&file) {
            Ok(xml) => remote(HostClient::new(&r.url).upload_rules(&xml)).await,
            Err(e) => report(&e),
        },
        Command::Tick(r) => remote(HostClient::new(&r.url).tick()).await,
    }
}
