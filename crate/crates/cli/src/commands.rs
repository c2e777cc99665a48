use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use gridcuts_core::feasibility::{ft_edge, ft_sweep, FtResult};
use gridcuts_core::fixtures;
use gridcuts_core::flowgraph::FlowState;
use gridcuts_core::io::{self, CaseFormat, ReportFormat, ScenarioFile};
use gridcuts_core::model::{BranchId, BusId, PowerNetwork};
use gridcuts_core::netflow::{build_flow, cut_transfer, Ordering};
use gridcuts_core::oracles::{self, OracleError, DEFAULT_MAX_BUSES};
use gridcuts_core::session::{Options, Session};
use gridcuts_core::topology::Topology;

use crate::{CaseArgs, Command, OrderingArgs, OutArgs};

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Validate { case } => validate(&case),
        Command::Flow {
            case,
            ordering,
            cut,
            out,
        } => flow(&case, &ordering, &cut, &out),
        Command::Ft {
            case,
            ordering,
            branch,
            all: _,
            flows,
            oracle,
            fail_on_special,
            report,
            out,
        } => ft(
            &case,
            &ordering,
            branch.as_deref(),
            flows.as_deref(),
            oracle,
            fail_on_special,
            &report,
            &out,
        ),
        Command::Scenario {
            scenario,
            no_shortlist,
            report,
            timings,
            seed,
            fail_on_special,
            out,
        } => run_scenario(&scenario, no_shortlist, &report, timings, seed, fail_on_special, &out),
        Command::Serve {
            case,
            port,
            host,
            ordering,
        } => serve(&case, &host, port, &ordering),
    }
}

fn ordering(args: &OrderingArgs) -> Ordering {
    match (args.deterministic, args.seed) {
        (false, Some(s)) => Ordering::Seeded(s),
        _ => Ordering::Deterministic,
    }
}

fn emit(bytes: &[u8], out: &OutArgs) -> Result<()> {
    use std::io::Write;
    std::io::stdout().write_all(bytes)?;
    if let Some(path) = &out.out {
        std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Parses a case from disk or the bundled set, without validating it.
fn read_case(args: &CaseArgs) -> Result<(PowerNetwork, Vec<String>)> {
    let path = Path::new(&args.case);
    if path.is_file() {
        let format = match &args.format {
            Some(f) => f.parse::<CaseFormat>().map_err(anyhow::Error::msg)?,
            None => CaseFormat::from_path(path),
        };
        let text = io::read_text(path)?;
        let parsed = io::parse_case(&text, format, &io::default_name(path))?;
        return Ok((parsed.network, parsed.warnings));
    }
    if fixtures::case_spec(&args.case).is_some() {
        return Ok((fixtures::case(&args.case)?, Vec::new()));
    }
    bail!(
        "no case file `{}` and no bundled case of that name (bundled: {})",
        args.case,
        fixtures::CASE_NAMES.join(", ")
    )
}

fn load_case(args: &CaseArgs) -> Result<PowerNetwork> {
    let (network, warnings) = read_case(args)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let report = network.validate();
    for w in report.warnings() {
        eprintln!("warning: {w}");
    }
    if report.has_errors() {
        bail!("invalid case:\n{report}");
    }
    Ok(network)
}

fn validate(args: &CaseArgs) -> Result<ExitCode> {
    let (network, warnings) = read_case(args)?;
    let report = network.validate();
    let mut text = String::new();
    for w in &warnings {
        writeln!(text, "warning: {w}")?;
    }
    for i in report.warnings() {
        writeln!(text, "warning: {i}")?;
    }
    for i in report.errors() {
        writeln!(text, "error: {i}")?;
    }
    writeln!(
        text,
        "{}: {} buses, {} branches, generation {:.2} MW, load {:.2} MW",
        network.name(),
        network.buses().len(),
        network.branches().len(),
        network.total_gen(),
        network.total_load()
    )?;
    print!("{text}");
    Ok(if report.has_errors() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn clean(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

fn join_ids<'a>(ids: impl IntoIterator<Item = &'a BranchId>) -> String {
    ids.into_iter().map(BranchId::as_str).collect::<Vec<_>>().join(", ")
}

fn join_buses<'a>(ids: impl IntoIterator<Item = &'a BusId>) -> String {
    ids.into_iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", ")
}

fn flow(args: &CaseArgs, ord: &OrderingArgs, cut: &[String], out: &OutArgs) -> Result<ExitCode> {
    let network = load_case(args)?;
    let ordering = ordering(ord);
    let state = build_flow(&network, ordering)?;
    let mut text = String::new();
    writeln!(text, "# {} ({ordering})", network.name())?;
    writeln!(
        text,
        "{:<12} {:>6} {:>6} {:>12} {:>10}",
        "branch", "from", "to", "flow_mw", "rating_mw"
    )?;
    let topo = state.topology();
    for b in state.live_branches() {
        let (f, t) = topo.ends(b);
        writeln!(
            text,
            "{:<12} {:>6} {:>6} {:>12.4} {:>10.2}",
            topo.branch_id(b).as_str(),
            topo.bus_id(f).to_string(),
            topo.bus_id(t).to_string(),
            clean(state.flow(b)),
            topo.rating(b)
        )?;
    }
    if !cut.is_empty() {
        let cut: BTreeSet<BranchId> = cut.iter().map(|s| BranchId::new(s.trim())).collect();
        let (export, import) = sides(&network, &cut)?;
        let mw = cut_transfer(&state, &cut, &import)?;
        writeln!(
            text,
            "transfer across {{{}}}: {:.2} MW from {{{}}} to {{{}}}",
            join_ids(&cut),
            clean(mw),
            join_buses(&export),
            join_buses(&import)
        )?;
    }
    emit(text.as_bytes(), out)?;
    Ok(ExitCode::SUCCESS)
}

/// Exporting and importing sides of a cut that splits the network in two.
fn sides(network: &PowerNetwork, cut: &BTreeSet<BranchId>) -> Result<(BTreeSet<BusId>, BTreeSet<BusId>)> {
    let mut opened = network.clone();
    for id in cut {
        opened = opened.with_outage(id)?;
    }
    let comps = opened.components();
    if comps.len() != 2 {
        bail!("{{{}}} does not split the network in two", join_ids(cut));
    }
    let a: BTreeSet<BusId> = comps[0].iter().copied().collect();
    let b: BTreeSet<BusId> = comps[1].iter().copied().collect();
    if network.cut_between(&a)? != *cut {
        bail!("{{{}}} is not exactly the cut between its two sides", join_ids(cut));
    }
    Ok(if network.cluster_injection(&a) >= 0.0 {
        (a, b)
    } else {
        (b, a)
    })
}

#[derive(Debug, Serialize)]
struct OracleRow {
    branch: BranchId,
    ft_margin_mw: f64,
    enumerated_margin_mw: Option<f64>,
    enumeration_agrees: Option<bool>,
    dc_overloads: Vec<(BranchId, f64)>,
    verdict: String,
}

#[derive(Debug, Serialize)]
struct FtOutput {
    case: String,
    ordering: Ordering,
    results: Vec<FtResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<Vec<OracleRow>>,
}

fn oracle_rows(network: &PowerNetwork, state: &FlowState, results: &[FtResult]) -> Result<Vec<OracleRow>> {
    let small = state.topology().bus_count() <= DEFAULT_MAX_BUSES;
    let slack = oracles::default_slack(network).context("case has no generation")?;
    let mut rows = Vec::new();
    for r in results {
        let enumerated = if small {
            Some(oracles::enumerate_cuts(state, &r.branch, DEFAULT_MAX_BUSES)?.min_margin())
        } else {
            None
        };
        let special = r.special && !r.radial;
        let (dc, verdict) = match oracles::dc_post_contingency_overloads(network, slack, &r.branch) {
            Ok(over) => {
                let v = match (special, over.is_empty()) {
                    (true, false) => "both flag",
                    (true, true) => "DC clear",
                    (false, false) => "FT miss",
                    (false, true) => "both clear",
                };
                (over, v.to_owned())
            }
            Err(OracleError::Islanding { .. }) => (Vec::new(), "islanding".to_owned()),
            Err(OracleError::MissingReactance(_)) => (Vec::new(), "no reactance".to_owned()),
            Err(e) => return Err(e.into()),
        };
        rows.push(OracleRow {
            branch: r.branch.clone(),
            ft_margin_mw: r.margin_mw,
            enumerated_margin_mw: enumerated,
            enumeration_agrees: enumerated.map(|m| (m - r.margin_mw).abs() <= 1e-9),
            dc_overloads: dc,
            verdict,
        });
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn ft(
    args: &CaseArgs,
    ord: &OrderingArgs,
    branch: Option<&str>,
    flows: Option<&str>,
    oracle: bool,
    fail_on_special: bool,
    report: &str,
    out: &OutArgs,
) -> Result<ExitCode> {
    let network = load_case(args)?;
    let ordering = ordering(ord);
    let state = match flows {
        Some(src) => {
            let text = if Path::new(src).is_file() {
                io::read_text(Path::new(src))?
            } else {
                fixtures::bundled(&format!("{src}.flows"))
                    .with_context(|| format!("no flows file `{src}` and no bundled flows of that name"))?
                    .to_owned()
            };
            FlowState::from_flows(Arc::new(Topology::new(&network)), &io::parse_flows(&text)?)?
        }
        None => build_flow(&network, ordering)?,
    };
    if flows.is_some() && state.conservation_error() > 1e-6 {
        bail!(
            "preset flows do not balance the injections (error {} MW)",
            state.conservation_error()
        );
    }
    let results = match branch {
        Some(id) => vec![ft_edge(&state, &BranchId::new(id))?],
        None => {
            let sweep = ft_sweep(&state, None);
            if let Some((b, e)) = sweep.errors.first() {
                bail!("feasibility test of {b} failed: {e}");
            }
            sweep.results
        }
    };
    let oracle = if oracle {
        Some(oracle_rows(&network, &state, &results)?)
    } else {
        None
    };
    let bytes = if report == "json" {
        let mut v = serde_json::to_vec_pretty(&FtOutput {
            case: network.name().to_owned(),
            ordering,
            results: results.clone(),
            oracle,
        })?;
        v.push(b'\n');
        v
    } else {
        ft_table(&network, ordering, &results, oracle.as_deref())?.into_bytes()
    };
    emit(&bytes, out)?;
    let found = results.iter().any(|r| r.special && !r.radial);
    Ok(if fail_on_special && found {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn ft_table(
    network: &PowerNetwork,
    ordering: Ordering,
    results: &[FtResult],
    oracle: Option<&[OracleRow]>,
) -> Result<String> {
    let mut t = String::new();
    writeln!(t, "# {} ({ordering})", network.name())?;
    writeln!(
        t,
        "{:<10} {:>9} {:>10} {:>10} {:>10} {:<8} kcrit",
        "branch", "direction", "flow_mw", "tc_mw", "margin_mw", "special"
    )?;
    for r in results {
        let special = match (r.special, r.radial) {
            (_, true) => "radial",
            (true, false) => "yes",
            (false, false) => "no",
        };
        writeln!(
            t,
            "{:<10} {:>9} {:>10.2} {:>10.2} {:>10.2} {:<8} {}{}",
            r.branch.as_str(),
            format!("{}>{}", r.from_bus, r.to_bus),
            clean(r.flow_mw),
            clean(r.tc_mw),
            clean(r.margin_mw),
            special,
            join_ids(&r.kcrit),
            if r.tie { " (tie)" } else { "" }
        )?;
    }
    if let Some(rows) = oracle {
        writeln!(t)?;
        writeln!(
            t,
            "{:<10} {:>10} {:>12} {:<12} dc overloads",
            "branch", "margin_mw", "enumerated", "verdict"
        )?;
        for o in rows {
            let enumerated = match (o.enumerated_margin_mw, o.enumeration_agrees) {
                (Some(m), Some(true)) => format!("{:.2}", clean(m)),
                (Some(m), _) => format!("{:.2} MISMATCH", clean(m)),
                (None, _) => "-".to_owned(),
            };
            let over = o
                .dc_overloads
                .iter()
                .map(|(b, mw)| format!("{b} +{mw:.2}"))
                .collect::<Vec<_>>()
                .join(", ");
            writeln!(
                t,
                "{:<10} {:>10.2} {:>12} {:<12} {}",
                o.branch.as_str(),
                clean(o.ft_margin_mw),
                enumerated,
                o.verdict,
                if over.is_empty() { "-" } else { &over }
            )?;
        }
    }
    Ok(t)
}

fn load_scenario(reference: &str) -> Result<(ScenarioFile, Option<std::path::PathBuf>)> {
    let path = Path::new(reference);
    if path.is_file() {
        let spec = io::parse_scenario(&io::read_text(path)?)
            .with_context(|| format!("reading scenario {}", path.display()))?;
        return Ok((spec, path.parent().map(Path::to_path_buf)));
    }
    match fixtures::scenario(reference) {
        Some(spec) => Ok((spec, None)),
        None => bail!(
            "no scenario file `{reference}` and no bundled scenario of that name (bundled: {})",
            fixtures::SCENARIO_NAMES.join(", ")
        ),
    }
}

fn run_scenario(
    reference: &str,
    no_shortlist: bool,
    report: &str,
    timings: bool,
    seed: Option<u64>,
    fail_on_special: bool,
    out: &OutArgs,
) -> Result<ExitCode> {
    let (spec, dir) = load_scenario(reference)?;
    let format: ReportFormat = report.parse().map_err(anyhow::Error::msg)?;
    let options = Options {
        shortlist: !no_shortlist,
    };
    let session = Session::run_scenario(&spec, dir.as_deref(), seed.map(Ordering::Seeded), options)?;
    let mut rep = session.report(timings);
    if let Some(name) = &spec.name {
        rep.case = name.clone();
    }
    emit(&io::write_report(&rep, format)?, out)?;
    let found = rep.rows.iter().any(|r| !r.new_specials.is_empty());
    Ok(if fail_on_special && found {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn serve(args: &CaseArgs, host: &str, port: u16, ord: &OrderingArgs) -> Result<ExitCode> {
    let network = load_case(args)?;
    let session = Session::start(network, ordering(ord))?;
    let state = gridcuts_service::AppState::new();
    let id = state.insert(session);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        eprintln!("listening on http://{} (session {id})", listener.local_addr()?);
        gridcuts_service::serve(listener, state).await?;
        anyhow::Ok(())
    })?;
    Ok(ExitCode::SUCCESS)
}
