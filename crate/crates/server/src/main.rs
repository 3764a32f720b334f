use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use medsync_core::domain::{Affiliation, Contact, Doctor, Group, GroupKind, Hospital, HospitalTier, Seniority};
use medsync_core::fixture::Fixture;
use medsync_core::{CountryCode, Specialty};
use medsync_server::{admin, system_clock, Config};
use medsync_sim::outage::{OutageParams, HOUR_MS};
use medsync_sim::scenario::{random_scenario, RandomShape, Scenario};
use medsync_sim::{audit_notifications, check_convergence, generate_outage_trace, run_scenario, scripted, sweep};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "medsync", version, about = "Offline-first case consultation server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API and peer sync.
    Serve(ConfigArg),
    /// Write accounts and directory records into a stopped server's log.
    #[command(subcommand)]
    Admin(AdminCommand),
    /// Thread category table and colleague graph for a fixture directory.
    Report(ReportArgs),
    /// Deterministic network simulation.
    #[command(subcommand)]
    Sim(SimCommand),
}

#[derive(Args)]
struct ConfigArg {
    /// Config file; MEDSYNC_CONFIG is used when the flag is absent.
    #[arg(long, env = "MEDSYNC_CONFIG", default_value = "medsync.toml")]
    config: PathBuf,
}

/// Parses a snake_case enum value through its serde name.
fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum AdminCommand {
    /// Create a doctor account. The secret is read from the first line of stdin.
    CreateUser {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        id: String,
        #[arg(long)]
        name: String,
        #[arg(long)]
        hospital: String,
        #[arg(long)]
        country: String,
        #[arg(long = "specialty")]
        specialties: Vec<String>,
        #[arg(long, default_value = "senior", value_parser = serde_enum::<Seniority>)]
        seniority: Seniority,
        #[arg(long)]
        email: Option<String>,
        #[arg(long)]
        phone: Option<String>,
        #[arg(long)]
        admin: bool,
    },
    CreateHospital {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        id: String,
        #[arg(long)]
        name: String,
        #[arg(long, value_parser = serde_enum::<HospitalTier>)]
        tier: HospitalTier,
        #[arg(long)]
        region: String,
        #[arg(long)]
        parent: Option<String>,
        #[arg(long = "department")]
        departments: Vec<String>,
        /// Only for hospitals outside the deployment country.
        #[arg(long)]
        country: Option<String>,
    },
    CreateGroup {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        id: String,
        #[arg(long)]
        name: String,
        #[arg(long, value_parser = serde_enum::<GroupKind>)]
        kind: GroupKind,
        /// Specialty, hospital id or country code, matching the kind.
        #[arg(long)]
        affiliation: Option<String>,
    },
    /// Load a fixture directory (hospitals, doctors, groups, edges, threads).
    SeedFixture {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        fixture: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphFormat {
    Dot,
    Json,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    fixture: PathBuf,
    /// Country counted as local.
    #[arg(long, default_value = "GH")]
    country: String,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Print the colleague graph instead of the table.
    #[arg(long, value_enum)]
    graph: Option<GraphFormat>,
}

#[derive(Subcommand)]
enum SimCommand {
    /// Run one scenario: a JSON file, `cape-coast`, `stub-visibility` or `random`.
    Run {
        #[arg(long)]
        scenario: String,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Print the whole result rather than a summary.
        #[arg(long)]
        full: bool,
    },
    /// Random scenarios for seeds FROM..=TO.
    Sweep {
        #[arg(long, default_value_t = 1)]
        from: u64,
        #[arg(long, default_value_t = 1000)]
        to: u64,
    },
    /// Print a generated outage trace.
    Outage {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 168)]
        horizon_hours: u64,
    },
}

fn print_json(value: &impl Serialize) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_config(arg: &ConfigArg) -> anyhow::Result<Config> {
    Config::load(&arg.config).with_context(|| format!("loading config {}", arg.config.display()))
}

fn read_secret() -> anyhow::Result<String> {
    let mut line = String::new();
    std::io::stdin().lock().read_line(&mut line)?;
    Ok(line.trim_end_matches(['\r', '\n']).to_owned())
}

fn run_admin(cmd: AdminCommand) -> anyhow::Result<()> {
    let now = system_clock()();
    let event = match cmd {
        AdminCommand::CreateUser {
            config,
            id,
            name,
            hospital,
            country,
            specialties,
            seniority,
            email,
            phone,
            admin: is_admin,
        } => {
            let config = load_config(&config)?;
            let doctor = Doctor {
                id: id.into(),
                display_name: name,
                hospital: hospital.into(),
                specialties: specialties.into_iter().map(Specialty::from).collect(),
                country: country.into(),
                seniority,
                contact: Contact { email, phone },
                is_admin,
            };
            admin::create_user(&config, doctor, &read_secret()?, now)?
        }
        AdminCommand::CreateHospital {
            config,
            id,
            name,
            tier,
            region,
            parent,
            departments,
            country,
        } => {
            let config = load_config(&config)?;
            let hospital = Hospital {
                id: id.into(),
                name,
                tier,
                region,
                referral_parent: parent.map(Into::into),
                departments: departments.into_iter().map(Specialty::from).collect(),
                country: country.map(CountryCode::from),
            };
            admin::create_hospital(&config, hospital, now)?
        }
        AdminCommand::CreateGroup {
            config,
            id,
            name,
            kind,
            affiliation,
        } => {
            let config = load_config(&config)?;
            let affiliation = match (kind, affiliation) {
                (GroupKind::ProfessionalOrg, None) => None,
                (GroupKind::Specialty, Some(a)) => Some(Affiliation::Specialty(a.into())),
                (GroupKind::Institution, Some(a)) => Some(Affiliation::Hospital(a.into())),
                (GroupKind::Country, Some(a)) => Some(Affiliation::Country(a.into())),
                (GroupKind::ProfessionalOrg, Some(_)) => bail!("professional_org groups take no affiliation"),
                (_, None) => bail!("--affiliation is required for this kind"),
            };
            let group = Group {
                id: id.into(),
                name,
                kind,
                affiliation,
                members: Default::default(),
            };
            admin::create_group(&config, group, now)?
        }
        AdminCommand::SeedFixture { config, fixture } => {
            let config = load_config(&config)?;
            let n = admin::seed_fixture(&config, &fixture, now)?;
            println!("committed {n} events");
            return Ok(());
        }
    };
    println!("committed {}", event.id());
    Ok(())
}

fn run_report(args: &ReportArgs) -> anyhow::Result<()> {
    let fixture = Fixture::load(&args.fixture)?;
    if let Some(graph) = args.graph {
        let g = fixture.colleague_graph()?;
        match graph {
            GraphFormat::Dot => print!("{}", g.to_dot()),
            GraphFormat::Json => println!("{}", g.to_json()),
        }
        return Ok(());
    }
    let report = fixture.category_report(&CountryCode::from(args.country.as_str()))?;
    match args.format {
        Format::Table => print!("{}", report.to_table()),
        Format::Json => print_json(&report)?,
    }
    Ok(())
}

fn load_scenario(name: &str, seed: Option<u64>) -> anyhow::Result<Scenario> {
    let mut scenario = match name {
        "cape-coast" => scripted::cape_coast(),
        "stub-visibility" => scripted::stub_visibility(),
        "random" => random_scenario(seed.unwrap_or(1), RandomShape::default()),
        path => {
            let text = std::fs::read_to_string(Path::new(path)).with_context(|| format!("reading {path}"))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?
        }
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    seed: u64,
    converged: bool,
    consistent: bool,
    divergence: Option<String>,
    convergence_time_ms: Option<u64>,
    end_ms: u64,
    commits: &'a medsync_sim::run::CommitStats,
    sync: &'a medsync_sim::run::SyncStats,
    stubs: &'a medsync_sim::run::StubStats,
    notifications_exactly_once: bool,
    rejected_ops: usize,
    final_hashes: &'a std::collections::BTreeMap<medsync_core::ServerId, String>,
}

fn run_sim(cmd: SimCommand) -> anyhow::Result<bool> {
    match cmd {
        SimCommand::Run { scenario, seed, full } => {
            let scenario = load_scenario(&scenario, seed)?;
            let result = run_scenario(&scenario)?;
            let check = check_convergence(&result);
            let ok = result.converged && check.is_ok();
            if full {
                print_json(&result)?;
            } else {
                print_json(&RunSummary {
                    seed: result.seed,
                    converged: result.converged,
                    consistent: check.is_ok(),
                    divergence: check.err().map(|d| d.to_string()),
                    convergence_time_ms: result.convergence_time_ms,
                    end_ms: result.end_ms,
                    commits: &result.commits,
                    sync: &result.sync,
                    stubs: &result.stubs,
                    notifications_exactly_once: audit_notifications(&result).exactly_once(),
                    rejected_ops: result.rejected.len(),
                    final_hashes: &result.final_hashes,
                })?;
            }
            Ok(ok)
        }
        SimCommand::Sweep { from, to } => {
            let report = sweep(from..=to, &RandomShape::default());
            print_json(&report)?;
            Ok(report.all_passed())
        }
        SimCommand::Outage { seed, horizon_hours } => {
            let params = OutageParams {
                horizon_ms: horizon_hours * HOUR_MS,
                ..OutageParams::default()
            };
            print_json(&generate_outage_trace(seed, &params)?)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let outcome = match cli.command {
        Command::Serve(arg) => load_config(&arg).and_then(|config| {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(medsync_server::serve(config))?;
            Ok(true)
        }),
        Command::Admin(cmd) => run_admin(cmd).map(|()| true),
        Command::Report(args) => run_report(&args).map(|()| true),
        Command::Sim(cmd) => run_sim(cmd),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
