//! Case, scenario, overlay and report formats.
//!
//! The native case format is line oriented. Blank lines and text after `#`
//! are ignored; every other line is one record:
//!
//! ```text
//! case <name>
//! base_mva <mva>
//! bus <id> <gen_mw> <load_mw>
//! branch <id> <from> <to> <rating_mw> <reactance_pu|-> <in|out>
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Branch, BranchId, Bus, BusId, ModelError, PowerNetwork, DEFAULT_BASE_MVA};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("scenario: {0}")]
    Scenario(#[from] toml::de::Error),
    #[error("ratings overlay: {0}")]
    Overlay(String),
    #[error("report: {0}")]
    Json(#[from] serde_json::Error),
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        column,
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseFormat {
    #[default]
    Native,
    Matpower,
}

impl CaseFormat {
    /// `.m` files are MATPOWER, everything else native.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("m") => CaseFormat::Matpower,
            _ => CaseFormat::Native,
        }
    }
}

impl FromStr for CaseFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "native" => Ok(CaseFormat::Native),
            "matpower" => Ok(CaseFormat::Matpower),
            other => Err(format!("unknown case format `{other}`")),
        }
    }
}

/// A parsed but not yet validated case with any parser warnings.
#[derive(Clone, Debug)]
pub struct ParsedCase {
    pub network: PowerNetwork,
    pub warnings: Vec<String>,
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })
}

/// Reads and validates a case file.
pub fn load_case(path: &Path, format: CaseFormat) -> Result<PowerNetwork, IoError> {
    let text = read_text(path)?;
    let parsed = parse_case(&text, format, &default_name(path))?;
    let report = parsed.network.validate();
    if report.has_errors() {
        return Err(ModelError::Invalid(report).into());
    }
    Ok(parsed.network)
}

pub fn default_name(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("case").to_owned()
}

pub fn parse_case(text: &str, format: CaseFormat, name: &str) -> Result<ParsedCase, IoError> {
    match format {
        CaseFormat::Native => parse_native(text, name).map(|network| ParsedCase {
            network,
            warnings: Vec::new(),
        }),
        CaseFormat::Matpower => parse_matpower(text, name),
    }
}

struct Tokens<'a> {
    line: usize,
    items: Vec<(usize, &'a str)>,
    at: usize,
}

impl<'a> Tokens<'a> {
    fn new(line: usize, text: &'a str) -> Self {
        let mut items = Vec::new();
        let mut start = None;
        for (i, ch) in text.char_indices() {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    items.push((s + 1, &text[s..i]));
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            items.push((s + 1, &text[s..]));
        }
        Tokens { line, items, at: 0 }
    }

    fn end_column(&self) -> usize {
        self.items.last().map(|(c, t)| c + t.len()).unwrap_or(1)
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), IoError> {
        let item = self
            .items
            .get(self.at)
            .copied()
            .ok_or_else(|| parse_err(self.line, self.end_column(), format!("missing {what}")))?;
        self.at += 1;
        Ok(item)
    }

    fn parse<T: FromStr>(&mut self, what: &str) -> Result<T, IoError> {
        let (col, tok) = self.next(what)?;
        tok.parse()
            .map_err(|_| parse_err(self.line, col, format!("invalid {what} `{tok}`")))
    }

    fn finish(&self) -> Result<(), IoError> {
        match self.items.get(self.at) {
            Some((col, tok)) => Err(parse_err(self.line, *col, format!("unexpected `{tok}`"))),
            None => Ok(()),
        }
    }
}

/// Drops a `#` comment. Only a `#` that starts a token opens one, so
/// parallel-circuit ids such as `42-49#2` survive.
fn strip_comment(line: &str) -> &str {
    let mut prev = ' ';
    for (i, ch) in line.char_indices() {
        if ch == '#' && prev.is_whitespace() {
            return &line[..i];
        }
        prev = ch;
    }
    line
}

pub fn parse_native(text: &str, default: &str) -> Result<PowerNetwork, IoError> {
    let mut name = default.to_owned();
    let mut base = DEFAULT_BASE_MVA;
    let mut buses = Vec::new();
    let mut branches = Vec::new();
    let mut bus_seen = HashMap::new();
    let mut branch_seen = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = strip_comment(raw);
        let mut t = Tokens::new(line, body);
        let Ok((col, kw)) = t.next("record") else {
            continue;
        };
        match kw {
            "case" => name = t.next("case name")?.1.to_owned(),
            "base_mva" => base = t.parse("base_mva")?,
            "bus" => {
                let (id_col, tok) = t.next("bus id")?;
                let id: u32 = tok
                    .parse()
                    .map_err(|_| parse_err(line, id_col, format!("invalid bus id `{tok}`")))?;
                if let Some(prev) = bus_seen.insert(id, line) {
                    return Err(parse_err(
                        line,
                        id_col,
                        format!("duplicate bus {id} (first on line {prev})"),
                    ));
                }
                buses.push(Bus::new(id, t.parse("gen_mw")?, t.parse("load_mw")?));
            }
            "branch" => {
                let (id_col, id) = t.next("branch id")?;
                if let Some(prev) = branch_seen.insert(id.to_owned(), line) {
                    return Err(parse_err(
                        line,
                        id_col,
                        format!("duplicate branch {id} (first on line {prev})"),
                    ));
                }
                let from: u32 = t.parse("from bus")?;
                let to: u32 = t.parse("to bus")?;
                let rating: f64 = t.parse("rating_mw")?;
                let (xcol, xtok) = t.next("reactance")?;
                let reactance = match xtok {
                    "-" => None,
                    s => Some(
                        s.parse::<f64>()
                            .map_err(|_| parse_err(line, xcol, format!("invalid reactance `{s}`")))?,
                    ),
                };
                let (scol, stok) = t.next("status")?;
                let in_service = match stok {
                    "in" => true,
                    "out" => false,
                    s => {
                        return Err(parse_err(
                            line,
                            scol,
                            format!("status must be `in` or `out`, got `{s}`"),
                        ))
                    }
                };
                branches.push(Branch {
                    id: BranchId::new(id),
                    from_bus: BusId(from),
                    to_bus: BusId(to),
                    rating_mw: rating,
                    reactance_pu: reactance,
                    in_service,
                });
            }
            other => return Err(parse_err(line, col, format!("unknown record `{other}`"))),
        }
        t.finish()?;
    }
    Ok(PowerNetwork::from_parts(name, base, buses, branches))
}

pub fn write_native(network: &PowerNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "case {}", network.name());
    let _ = writeln!(out, "base_mva {}", network.base_mva());
    for b in network.buses() {
        let _ = writeln!(out, "bus {} {} {}", b.id, b.gen_mw, b.load_mw);
    }
    for br in network.branches() {
        let x = br.reactance_pu.map(|x| x.to_string()).unwrap_or_else(|| "-".to_owned());
        let status = if br.in_service { "in" } else { "out" };
        let _ = writeln!(
            out,
            "branch {} {} {} {} {} {}",
            br.id, br.from_bus, br.to_bus, br.rating_mw, x, status
        );
    }
    out
}

/// Parses the `bus`, `gen` and `branch` matrices of a MATPOWER case function.
/// Anything else in the file is reported as a warning.
pub fn parse_matpower(text: &str, default: &str) -> Result<ParsedCase, IoError> {
    let mut warnings = Vec::new();
    let mut name = default.to_owned();
    let mut base = DEFAULT_BASE_MVA;
    let mut matrices: BTreeMap<String, Vec<(usize, Vec<f64>)>> = BTreeMap::new();

    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let line_no = i + 1;
        let body = lines[i].split('%').next().unwrap_or("").trim();
        i += 1;
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix("function") {
            if let Some((_, fname)) = rest.split_once('=') {
                name = fname.trim().trim_end_matches(';').trim().to_owned();
            }
            continue;
        }
        let Some(rest) = body.strip_prefix("mpc.") else {
            warnings.push(format!("line {line_no}: ignored statement `{body}`"));
            continue;
        };
        let Some((field, value)) = rest.split_once('=') else {
            warnings.push(format!("line {line_no}: ignored statement `{body}`"));
            continue;
        };
        let field = field.trim();
        let value = value.trim();
        if !value.starts_with('[') {
            match field {
                "baseMVA" => {
                    let v = value.trim_end_matches(';').trim();
                    base = v
                        .parse()
                        .map_err(|_| parse_err(line_no, 1, format!("invalid baseMVA `{v}`")))?;
                }
                "version" => {}
                other => warnings.push(format!("line {line_no}: unsupported field mpc.{other}")),
            }
            continue;
        }
        // Matrix literal: collect until the closing bracket.
        let mut rows = Vec::new();
        let mut chunk = value[1..].to_owned();
        let mut row_line = line_no;
        loop {
            let (content, closed) = match chunk.find(']') {
                Some(pos) => (chunk[..pos].to_owned(), true),
                None => (chunk.clone(), false),
            };
            for row in content.split(';') {
                let cells: Result<Vec<f64>, _> = row
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<f64>().map_err(|_| s.to_owned()))
                    .collect();
                match cells {
                    Ok(c) if c.is_empty() => {}
                    Ok(c) => rows.push((row_line, c)),
                    Err(tok) => return Err(parse_err(row_line, 1, format!("invalid number `{tok}` in mpc.{field}"))),
                }
            }
            if closed {
                break;
            }
            if i >= lines.len() {
                return Err(parse_err(row_line, 1, format!("unterminated matrix mpc.{field}")));
            }
            row_line = i + 1;
            chunk = lines[i].split('%').next().unwrap_or("").to_owned();
            i += 1;
        }
        match field {
            "bus" | "gen" | "branch" => {
                matrices.insert(field.to_owned(), rows);
            }
            other => warnings.push(format!("line {line_no}: unsupported matrix mpc.{other} ignored")),
        }
    }

    let need = |m: &str| {
        matrices
            .get(m)
            .cloned()
            .ok_or_else(|| parse_err(lines.len().max(1), 1, format!("missing mpc.{m}")))
    };
    let bus_rows = need("bus")?;
    let gen_rows = need("gen")?;
    let branch_rows = need("branch")?;

    let col = |row: &(usize, Vec<f64>), k: usize, what: &str| -> Result<f64, IoError> {
        row.1
            .get(k)
            .copied()
            .ok_or_else(|| parse_err(row.0, 1, format!("{what} row has no column {}", k + 1)))
    };

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut seen = BTreeSet::new();
    for row in &bus_rows {
        let id = col(row, 0, "bus")? as u32;
        if !seen.insert(id) {
            return Err(parse_err(row.0, 1, format!("duplicate bus {id}")));
        }
        let pd = col(row, 2, "bus")?;
        buses.push(Bus::new(id, 0.0, pd));
    }
    let pos: HashMap<u32, usize> = buses.iter().enumerate().map(|(i, b)| (b.id.0, i)).collect();
    for row in &gen_rows {
        let bus = col(row, 0, "gen")? as u32;
        let pg = col(row, 1, "gen")?;
        let status = row.1.get(7).copied().unwrap_or(1.0);
        if status <= 0.0 {
            continue;
        }
        match pos.get(&bus) {
            Some(&p) => buses[p].gen_mw += pg,
            None => return Err(parse_err(row.0, 1, format!("generator at unknown bus {bus}"))),
        }
    }
    let mut branches = Vec::with_capacity(branch_rows.len());
    let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
    for row in &branch_rows {
        let f = col(row, 0, "branch")? as u32;
        let t = col(row, 1, "branch")? as u32;
        let x = col(row, 3, "branch")?;
        let rate = col(row, 5, "branch")?;
        let status = row.1.get(10).copied().unwrap_or(1.0);
        let n = counts.entry((f, t)).or_insert(0);
        *n += 1;
        let id = if *n == 1 {
            format!("{f}-{t}")
        } else {
            format!("{f}-{t}#{n}")
        };
        if rate <= 0.0 {
            warnings.push(format!(
                "line {}: branch {id} has RATE_A {rate} (unlimited); supply a ratings overlay",
                row.0
            ));
        }
        branches.push(Branch {
            id: BranchId(id),
            from_bus: BusId(f),
            to_bus: BusId(t),
            rating_mw: rate,
            reactance_pu: if x > 0.0 { Some(x) } else { None },
            in_service: status > 0.0,
        });
    }
    Ok(ParsedCase {
        network: PowerNetwork::from_parts(name, base, buses, branches),
        warnings,
    })
}

/// Reads a `branch,rating_mw` CSV overlay (header required).
pub fn parse_ratings(text: &str) -> Result<BTreeMap<BranchId, f64>, IoError> {
    parse_branch_column(text, "rating_mw")
}

/// Reads a `branch,flow_mw` CSV of preset branch flows.
pub fn parse_flows(text: &str) -> Result<BTreeMap<BranchId, f64>, IoError> {
    parse_branch_column(text, "flow_mw")
}

fn parse_branch_column(text: &str, column: &str) -> Result<BTreeMap<BranchId, f64>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| IoError::Overlay(e.to_string()))?.clone();
    let pos = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::Overlay(format!("missing column `{name}`")))
    };
    let (bcol, vcol) = (pos("branch")?, pos(column)?);
    let mut out = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| IoError::Overlay(e.to_string()))?;
        let id = rec.get(bcol).unwrap_or_default().to_owned();
        let raw = rec.get(vcol).unwrap_or_default();
        let value: f64 = raw
            .parse()
            .map_err(|_| IoError::Overlay(format!("record {}: invalid {column} `{raw}`", i + 1)))?;
        if out.insert(BranchId(id.clone()), value).is_some() {
            return Err(IoError::Overlay(format!("duplicate branch {id}")));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScenarioEvent {
    Outage { branch: BranchId },
    ScaleInjections { factor: f64 },
    Remedial { cut: Vec<BranchId>, reduce_by_mw: f64 },
}

impl fmt::Display for ScenarioEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioEvent::Outage { branch } => write!(f, "outage {branch}"),
            ScenarioEvent::ScaleInjections { factor } => write!(f, "scale {factor}"),
            ScenarioEvent::Remedial { cut, reduce_by_mw } => {
                let ids: Vec<&str> = cut.iter().map(BranchId::as_str).collect();
                write!(f, "remedial {reduce_by_mw} MW on {}", ids.join(","))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    /// Case path, relative to the scenario file, or a bundled fixture name.
    pub case: String,
    #[serde(default)]
    pub format: Option<CaseFormat>,
    #[serde(default)]
    pub ratings: Option<String>,
    #[serde(default)]
    pub merge_parallel: bool,
    #[serde(default)]
    pub auto_slack: Option<u32>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
}

pub fn parse_scenario(text: &str) -> Result<ScenarioFile, IoError> {
    Ok(toml::from_str(text)?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub ups_s: f64,
    pub sa_s: f64,
    pub ft_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecialEntry {
    pub branch: BranchId,
    pub kcrit: Vec<BranchId>,
    pub margin_mw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub index: usize,
    pub event: String,
    pub status: String,
    pub deficit_mw: f64,
    pub retested: usize,
    pub new_specials: Vec<SpecialEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub case: String,
    pub rows: Vec<ReportRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Table,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "table" => Ok(ReportFormat::Table),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

fn join_ids(ids: &[BranchId], sep: &str) -> String {
    ids.iter().map(BranchId::as_str).collect::<Vec<_>>().join(sep)
}

pub fn write_report(report: &Report, format: ReportFormat) -> Result<Vec<u8>, IoError> {
    let timed = report.rows.iter().any(|r| r.timings.is_some());
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report)?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec![
                "index",
                "event",
                "status",
                "deficit_mw",
                "retested",
                "special_asset",
                "kcrit",
                "margin_mw",
            ];
            if timed {
                header.extend(["ups_s", "sa_s", "ft_s", "total_s"]);
            }
            w.write_record(&header).map_err(|e| IoError::Overlay(e.to_string()))?;
            for row in &report.rows {
                let base = [
                    row.index.to_string(),
                    row.event.clone(),
                    row.status.clone(),
                    row.deficit_mw.to_string(),
                    row.retested.to_string(),
                ];
                let timing: Vec<String> = match (timed, row.timings) {
                    (true, Some(t)) => [t.ups_s, t.sa_s, t.ft_s, t.total_s]
                        .iter()
                        .map(f64::to_string)
                        .collect(),
                    (true, None) => vec![String::new(); 4],
                    _ => Vec::new(),
                };
                let specials: Vec<[String; 3]> = if row.new_specials.is_empty() {
                    vec![[String::new(), String::new(), String::new()]]
                } else {
                    row.new_specials
                        .iter()
                        .map(|s| [s.branch.to_string(), join_ids(&s.kcrit, ";"), s.margin_mw.to_string()])
                        .collect()
                };
                for s in specials {
                    let mut rec: Vec<String> = base.to_vec();
                    rec.extend(s);
                    rec.extend(timing.iter().cloned());
                    w.write_record(&rec).map_err(|e| IoError::Overlay(e.to_string()))?;
                }
            }
            w.into_inner().map_err(|e| IoError::Overlay(e.to_string()))
        }
        ReportFormat::Table => Ok(render_table(report, timed).into_bytes()),
    }
}

fn render_table(report: &Report, timed: bool) -> String {
    let mut header = vec![
        "#".to_owned(),
        "event".to_owned(),
        "new special asset".to_owned(),
        "limiting critical cut-set".to_owned(),
        "margin (MW)".to_owned(),
    ];
    if timed {
        header.extend(["ups (s)", "sa (s)", "ft (s)", "total (s)"].map(String::from));
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    for r in &report.rows {
        let timing = |first: bool| -> Vec<String> {
            match (timed, r.timings, first) {
                (true, Some(t), true) => [t.ups_s, t.sa_s, t.ft_s, t.total_s]
                    .iter()
                    .map(|v| format!("{v:.4}"))
                    .collect(),
                (true, _, _) => vec![String::new(); 4],
                _ => Vec::new(),
            }
        };
        let mut event = r.event.clone();
        if r.status != "nominal" {
            event = format!("{event} [{}]", r.status);
        }
        if r.new_specials.is_empty() {
            let mut row = vec![r.index.to_string(), event, "-".into(), "-".into(), "-".into()];
            row.extend(timing(true));
            rows.push(row);
            continue;
        }
        for (k, s) in r.new_specials.iter().enumerate() {
            let first = k == 0;
            let mut row = vec![
                if first { r.index.to_string() } else { String::new() },
                if first { event.clone() } else { String::new() },
                s.branch.to_string(),
                join_ids(&s.kcrit, ", "),
                format!("{:.2}", s.margin_mw),
            ];
            row.extend(timing(first));
            rows.push(row);
        }
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| -> String {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join(" | ").trim_end().to_owned() + "\n"
    };
    let mut out = line(&header);
    out.push_str(&(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-") + "\n"));
    for r in &rows {
        out.push_str(&line(r));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "case two\nbase_mva 100\nbus 1 50 0\nbus 2 0 50 # load\nbranch 1-2 1 2 80 0.1 in\n";

    #[test]
    fn minimal_native() {
        let net = parse_native(TWO, "x").unwrap();
        assert_eq!(net.name(), "two");
        assert_eq!(net.buses().len(), 2);
        assert_eq!(net.branches().len(), 1);
        assert_eq!(parse_native(&write_native(&net), "y").unwrap(), net);
    }

    #[test]
    fn hash_inside_id_is_not_a_comment() {
        let net = parse_native("bus 1 5 0 # gen\nbus 2 0 5\nbranch 1-2#2 1 2 10 - in #x\n", "c").unwrap();
        assert_eq!(net.branches()[0].id, BranchId::from("1-2#2"));
        assert_eq!(net.buses().len(), 2);
    }

    #[test]
    fn duplicate_branch_names_the_id() {
        let text = format!("{TWO}branch 1-2 2 1 80 - out\n");
        let err = parse_native(&text, "x").unwrap_err().to_string();
        assert!(err.contains("line 6") && err.contains("duplicate branch 1-2"), "{err}");
    }

    #[test]
    fn parse_error_points_at_column() {
        let err = parse_native("bus 1 abc 0\n", "x").unwrap_err();
        match err {
            IoError::Parse { line, column, .. } => assert_eq!((line, column), (1, 7)),
            other => panic!("{other}"),
        }
        assert!(parse_native("branch a 1 2 10 0.1 maybe\n", "x").is_err());
        assert!(parse_native("bus 1 0 0 9\n", "x").is_err());
    }

    #[test]
    fn matpower_subset() {
        let text = "function mpc = tiny\nmpc.version = '2';\nmpc.baseMVA = 100;\n\
            mpc.bus = [\n 1 3 0 0 0 0 1 1 0 135 1 1.06 0.94;\n 2 1 60 0 0 0 1 1 0 135 1 1.06 0.94;\n];\n\
            mpc.gen = [\n 1 60 0 10 -10 1 100 1 100 0;\n 2 5 0 0 0 1 100 0 10 0;\n];\n\
            mpc.branch = [\n 1 2 0.01 0.1 0 90 0 0 0 0 1 -360 360;\n 1 2 0.01 0.2 0 0 0 0 0 0 0 -360 360;\n];\n\
            mpc.gencost = [\n 2 0 0 3 0 1 0;\n];\n";
        let parsed = parse_matpower(text, "x").unwrap();
        let net = parsed.network;
        assert_eq!(net.name(), "tiny");
        assert_eq!(net.bus(BusId(1)).unwrap().gen_mw, 60.0);
        assert_eq!(net.bus(BusId(2)).unwrap().gen_mw, 0.0);
        assert_eq!(net.bus(BusId(2)).unwrap().load_mw, 60.0);
        assert_eq!(net.branches()[1].id, BranchId::from("1-2#2"));
        assert!(!net.branches()[1].in_service);
        assert!(parsed.warnings.iter().any(|w| w.contains("gencost")));
        assert!(parsed.warnings.iter().any(|w| w.contains("RATE_A")));
    }

    #[test]
    fn overlay_and_scenario() {
        let r = parse_ratings("branch,rating_mw\n1-2, 80\n# note\n2-3,90.5\n").unwrap();
        assert_eq!(r[&BranchId::from("2-3")], 90.5);
        assert!(parse_ratings("branch,rating_mw\na,1\na,2\n").is_err());
        let s = parse_scenario(
            "case = \"c.m\"\nmerge_parallel = true\n[[events]]\ntype = \"outage\"\nbranch = \"1-2\"\n\
             [[events]]\ntype = \"remedial\"\ncut = [\"1-2\"]\nreduce_by_mw = 5.0\n",
        )
        .unwrap();
        assert_eq!(s.events.len(), 2);
        assert_eq!(s.events[0], ScenarioEvent::Outage { branch: "1-2".into() });
    }

    #[test]
    fn empty_report_is_header_only() {
        let rep = Report::default();
        let csv = String::from_utf8(write_report(&rep, ReportFormat::Csv).unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 1);
        let table = String::from_utf8(write_report(&rep, ReportFormat::Table).unwrap()).unwrap();
        assert_eq!(table.lines().count(), 2);
        let json = write_report(&rep, ReportFormat::Json).unwrap();
        let back: Report = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, rep);
    }
}
