use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use bulwark_core::deploy::{
    search_deployment, DeployedMonitor, ExternalVerifier, MonitorKind, MonitoredSpec, Rejection, ThreatModel,
    VerifierHook,
};
use bulwark_core::runtime::{run_proxy, ProtocolConfig, ProxyOptions, TableStore};
use bulwark_core::swgen::{check_syntax, emit_registration_snippet, emit_service_worker, SyntaxError};
use bulwark_core::testbed::{run_blocking, Scenario, TestbedOracle, Vuln};
use bulwark_core::transform::Monitor;
use bulwark_core::{parse_spec, pretty, SystemSpec};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "bulwark", version, about = "Synthesize and run security monitors for multi-party web protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Threat {
    ClientTrusted,
    ClientUntrusted,
}

impl Threat {
    fn model(self) -> ThreatModel {
        match self {
            Threat::ClientTrusted => ThreatModel::TRUSTED,
            Threat::ClientUntrusted => ThreatModel::UNTRUSTED,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a specification.
    Check {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Search a deployment and write the monitors, manifest and artifacts.
    Synthesize {
        #[arg(long)]
        spec: PathBuf,
        /// Participant names or roles, comma separated.
        #[arg(long, value_delimiter = ',')]
        inattentive: Vec<String>,
        #[arg(long, value_enum)]
        threat: Option<Threat>,
        /// `testbed` (needs --scenario), `external:<path>`, or `none`.
        #[arg(long, default_value = "testbed")]
        verifier: String,
        /// Testbed case the spec is realized by, e.g. cs2.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "build")]
        out: PathBuf,
    },
    /// Serve a proxy monitor in front of its upstream.
    RunProxy {
        #[arg(long)]
        monitor: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        upstream: Option<String>,
        /// Append-only file that keeps session tables across restarts.
        #[arg(long)]
        tables_file: Option<PathBuf>,
    },
    /// Run a testbed scenario and print its report.
    Testbed {
        #[arg(long)]
        scenario: String,
        /// Attack name, flag name or number; all enabled attacks if absent.
        #[arg(long)]
        attack: Option<String>,
        #[arg(long, value_delimiter = ',')]
        inattentive: Vec<String>,
        /// Deploy the placement the search selects.
        #[arg(long)]
        with_monitors: bool,
    },
    /// Compile a service-worker monitor to `bulwark-sw.js` and its registration snippet.
    Emit {
        #[arg(long)]
        monitor: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "build")]
        out: PathBuf,
        #[arg(long)]
        no_syntax_check: bool,
    },
}

fn main() -> ExitCode {
    let filter = tracing_subscriber::EnvFilter::try_from_env("BULWARK_LOG").unwrap_or_else(|_| "warn".into());
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("bulwark: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Check { spec } => check(&spec),
        Command::Synthesize { spec, inattentive, threat, verifier, scenario, config, out } => {
            synthesize(&spec, &inattentive, threat, &verifier, scenario.as_deref(), config.as_deref(), &out)
        }
        Command::RunProxy { monitor, config, listen, upstream, tables_file } => {
            serve(&monitor, &config, listen, upstream, tables_file)
        }
        Command::Testbed { scenario, attack, inattentive, with_monitors } => {
            testbed(&scenario, attack.as_deref(), &inattentive, with_monitors)
        }
        Command::Emit { monitor, config, out, no_syntax_check } => emit(&monitor, &config, &out, !no_syntax_check),
    }
}

fn load_spec(path: &Path) -> Result<SystemSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_spec(&text).map_err(|e| anyhow!("{}: {}", path.display(), e.problems().join("\n  ")))
}

fn load_config(path: &Path) -> Result<ProtocolConfig> {
    ProtocolConfig::load(path).with_context(|| path.display().to_string())
}

fn load_monitor(path: &Path) -> Result<Monitor> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a monitor dump", path.display()))
}

fn check(path: &Path) -> Result<ExitCode> {
    let spec = load_spec(path)?;
    for p in &spec.participants {
        let role = spec.role_of(&p.name).map(|r| format!(" (role {r})")).unwrap_or_default();
        println!("participant {}{role}", p.name);
    }
    for q in &spec.queries {
        println!("{}", pretty::query(q));
    }
    Ok(ExitCode::SUCCESS)
}

/// Resolves names given as participants or roles.
fn participants(spec: &SystemSpec, names: &[String]) -> Result<BTreeSet<String>> {
    names
        .iter()
        .filter(|n| !n.is_empty())
        .map(|n| match spec.participant(n).or_else(|| spec.participant_for_role(n)) {
            Some(p) => Ok(p.name.clone()),
            None => bail!("no participant or role `{n}`"),
        })
        .collect()
}

fn file_stem(spec: &SystemSpec, m: &DeployedMonitor) -> String {
    let base = spec.role_of(&m.participant).unwrap_or(&m.participant).to_lowercase();
    let kind = match m.kind {
        MonitorKind::Proxy => "proxy",
        MonitorKind::ServiceWorker => "sw",
    };
    format!("{base}-{kind}")
}

#[derive(Serialize)]
struct Manifest<'a> {
    inattentive: &'a BTreeSet<String>,
    threat: ThreatModel,
    verifier: &'a str,
    selected: String,
    score: u32,
    placements: BTreeMap<String, &'static str>,
    monitors: Vec<ManifestMonitor>,
    relays: &'a BTreeMap<String, BTreeMap<String, (String, String)>>,
    rejected: &'a [Rejection],
}

#[derive(Serialize)]
struct ManifestMonitor {
    participant: String,
    kind: MonitorKind,
    process: String,
    tree: String,
    artifacts: Vec<String>,
}

struct AcceptAll;

impl VerifierHook for AcceptAll {
    fn verify(&self, _: &SystemSpec, _: &bulwark_core::deploy::Candidate) -> Result<(), String> {
        Ok(())
    }
}

fn write(out: &Path, name: &str, text: &str) -> Result<String> {
    std::fs::write(out.join(name), text).with_context(|| format!("cannot write {}", out.join(name).display()))?;
    Ok(name.to_string())
}

fn synthesize(
    spec_path: &Path,
    inattentive: &[String],
    threat: Option<Threat>,
    verifier: &str,
    scenario: Option<&str>,
    config: Option<&Path>,
    out: &Path,
) -> Result<ExitCode> {
    let spec = load_spec(spec_path)?;
    let inatt = participants(&spec, inattentive)?;
    let scenario = scenario.map(Scenario::case).transpose()?;
    let threat = match (threat, &scenario) {
        (Some(t), _) => t.model(),
        (None, Some(sc)) => sc.threat,
        (None, None) => ThreatModel::TRUSTED,
    };
    let cfg = match (config, &scenario) {
        (Some(p), _) => Some(load_config(p)?),
        (None, Some(sc)) => Some(sc.config.clone()),
        (None, None) => None,
    };
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let hook: Box<dyn VerifierHook> = if let Some(program) = verifier.strip_prefix("external:") {
        Box::new(ExternalVerifier { program: program.into(), workdir: out.to_path_buf() })
    } else if verifier == "none" {
        Box::new(AcceptAll)
    } else if verifier == "testbed" {
        let Some(sc) = &scenario else { bail!("the testbed verifier needs --scenario") };
        Box::new(TestbedOracle { scenario: Scenario { spec: spec.clone(), ..sc.clone() } })
    } else {
        bail!("unknown verifier `{verifier}`");
    };
    let found = search_deployment(&spec, &inatt, threat, hook.as_ref());
    let m: MonitoredSpec = match found {
        Ok(m) => m,
        Err(bulwark_core::deploy::DeployError::NoSecurePlacement(rejected)) => {
            let manifest = serde_json::json!({ "inattentive": inatt, "selected": null, "rejected": rejected });
            write(out, "placement.json", &serde_json::to_string_pretty(&manifest)?)?;
            for r in &rejected {
                eprintln!("rejected {}: {}", r.option.describe(), r.witness);
            }
            bail!("no placement passes verification");
        }
        Err(e) => return Err(e.into()),
    };
    let mut monitors = Vec::new();
    for dm in &m.monitors {
        let stem = file_stem(&spec, dm);
        let process = write(out, &format!("{stem}.bw.pv"), &format!("{}\n", pretty::participant(&dm.monitor.process)))?;
        let tree = write(out, &format!("{stem}.mon"), &serde_json::to_string_pretty(&dm.monitor)?)?;
        let mut artifacts = Vec::new();
        if let (MonitorKind::ServiceWorker, Some(cfg)) = (dm.kind, &cfg) {
            let js = emit_service_worker(&dm.monitor, cfg)?;
            artifacts.push(write(out, "bulwark-sw.js", &js)?);
            artifacts.push(write(out, "register-snippet.html", &emit_registration_snippet(cfg))?);
        }
        if let (MonitorKind::Proxy, Some(cfg)) = (dm.kind, &cfg) {
            artifacts.push(write(out, &format!("{stem}.config.json"), &cfg.to_json())?);
        }
        monitors.push(ManifestMonitor { participant: dm.participant.clone(), kind: dm.kind, process, tree, artifacts });
    }
    let manifest = Manifest {
        inattentive: &m.inattentive,
        threat,
        verifier,
        selected: m.option.describe(),
        score: m.option.score(),
        placements: m.option.placements.iter().map(|(p, pl)| (p.clone(), pl.name())).collect(),
        monitors,
        relays: &m.mch,
        rejected: &m.rejected,
    };
    write(out, "placement.json", &serde_json::to_string_pretty(&manifest)?)?;
    println!("{}", m.option.describe());
    Ok(ExitCode::SUCCESS)
}

fn serve(
    monitor: &Path,
    config: &Path,
    listen: Option<String>,
    upstream: Option<String>,
    tables_file: Option<PathBuf>,
) -> Result<ExitCode> {
    let monitor = load_monitor(monitor)?;
    let mut cfg = load_config(config)?;
    if let Some(l) = listen {
        cfg.listen = l;
    }
    if let Some(u) = upstream {
        cfg.upstream = u;
    }
    const TTL: Duration = Duration::from_secs(3600);
    let tables = match tables_file {
        Some(path) => TableStore::persistent(path.clone(), TTL).with_context(|| path.display().to_string())?,
        None => TableStore::new(TTL),
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let opts = ProxyOptions { tables: Arc::new(tables), ..Default::default() };
        let handle = run_proxy(&monitor, cfg, opts).await?;
        match handle.forward {
            Some(f) => println!("serving on {} (outgoing requests on {f})", handle.listen),
            None => println!("serving on {}", handle.listen),
        }
        tokio::signal::ctrl_c().await?;
        drop(handle);
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(ExitCode::SUCCESS)
}

fn testbed(case: &str, attack: Option<&str>, inattentive: &[String], with_monitors: bool) -> Result<ExitCode> {
    let sc = Scenario::case(case)?;
    let attack = attack.map(|a| Vuln::parse(a).ok_or_else(|| anyhow!("unknown attack `{a}`"))).transpose()?;
    if let Some(v) = attack {
        if !sc.flags.contains(&v) {
            bail!("{case} is not vulnerable to {} (#{})", v.attack_name(), v.number());
        }
    }
    let inatt = if inattentive.is_empty() {
        let flags: Vec<Vuln> = attack.map_or_else(|| sc.flags.iter().copied().collect(), |v| vec![v]);
        flags.iter().filter_map(|v| sc.participant_for(v.role())).collect()
    } else {
        participants(&sc.spec, inattentive)?
    };
    let monitors = if with_monitors {
        let m = search_deployment(&sc.spec, &inatt, sc.threat, &TestbedOracle { scenario: sc.clone() })?;
        eprintln!("placement: {}", m.option.describe());
        m.monitors
    } else {
        Vec::new()
    };
    let mut report = run_blocking(&sc, &inatt, &monitors)?;
    if let Some(v) = attack {
        report.attacks.retain(|a| a.vuln == v);
    }
    println!("{}", report.to_json());
    let ok = report.honest_completed && report.attacks.iter().all(|a| !a.succeeded);
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn emit(monitor: &Path, config: &Path, out: &Path, syntax_check: bool) -> Result<ExitCode> {
    let monitor = load_monitor(monitor)?;
    let cfg = load_config(config)?;
    let js = emit_service_worker(&monitor, &cfg)?;
    if syntax_check {
        match check_syntax(&js) {
            Ok(()) => {}
            Err(SyntaxError::Unavailable) => tracing::warn!("node not found, emitted worker not syntax checked"),
            Err(e) => bail!("emitted worker does not parse: {e}"),
        }
    }
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write(out, "bulwark-sw.js", &js)?;
    write(out, "register-snippet.html", &emit_registration_snippet(&cfg))?;
    println!("{}", out.join("bulwark-sw.js").display());
    Ok(ExitCode::SUCCESS)
}
