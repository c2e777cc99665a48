//! Bundled cases and scenarios, and resolution of case references that may
//! name either a file on disk or a bundled fixture.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::io::{self, CaseFormat, IoError, ScenarioFile};
use crate::model::{BranchId, BusId, ModelError, PowerNetwork};

const FILES: &[(&str, &str)] = &[
    ("fixture9.case", include_str!("../fixtures/fixture9.case")),
    ("fixture9_case1.flows", include_str!("../fixtures/fixture9_case1.flows")),
    ("fixture9_case2.flows", include_str!("../fixtures/fixture9_case2.flows")),
    (
        "fixture9_remedial.toml",
        include_str!("../fixtures/fixture9_remedial.toml"),
    ),
    ("table4.case", include_str!("../fixtures/table4.case")),
    ("figure4.case", include_str!("../fixtures/figure4.case")),
    ("figure4.flows", include_str!("../fixtures/figure4.flows")),
    ("figure8_s1.case", include_str!("../fixtures/figure8_s1.case")),
    ("figure8_s2.case", include_str!("../fixtures/figure8_s2.case")),
    ("ieee118.m", include_str!("../fixtures/ieee118.m")),
    ("ieee118_ratings.csv", include_str!("../fixtures/ieee118_ratings.csv")),
    (
        "ieee118_hurricane.toml",
        include_str!("../fixtures/ieee118_hurricane.toml"),
    ),
];

/// Contents of a bundled file, by file name.
pub fn bundled(file: &str) -> Option<&'static str> {
    FILES.iter().find(|(n, _)| *n == file).map(|(_, t)| *t)
}

/// Case names accepted by [`case_spec`].
pub const CASE_NAMES: &[&str] = &[
    "fixture9",
    "table4",
    "table4_case2",
    "figure4",
    "figure8_s1",
    "figure8_s2",
    "ieee118",
    "ieee118_study",
];

/// Scenario names accepted by [`scenario`].
pub const SCENARIO_NAMES: &[&str] = &["ieee118_hurricane", "fixture9_remedial"];

fn bare(case: &str) -> ScenarioFile {
    ScenarioFile {
        name: None,
        case: case.to_owned(),
        format: None,
        ratings: None,
        merge_parallel: false,
        auto_slack: None,
        seed: None,
        events: Vec::new(),
    }
}

/// Case preparation recipe for a bundled case name.
pub fn case_spec(name: &str) -> Option<ScenarioFile> {
    let mut spec = match name {
        "fixture9" | "table4" | "figure4" | "figure8_s1" | "figure8_s2" => bare(&format!("{name}.case")),
        "table4_case2" => bare("table4.case"),
        "ieee118" => {
            let mut s = bare("ieee118.m");
            s.auto_slack = Some(69);
            s
        }
        "ieee118_study" => {
            let mut s = scenario("ieee118_hurricane")?;
            s.events.clear();
            s
        }
        _ => return None,
    };
    spec.name = Some(name.to_owned());
    Some(spec)
}

pub fn scenario(name: &str) -> Option<ScenarioFile> {
    let text = bundled(&format!("{name}.toml"))?;
    io::parse_scenario(text).ok()
}

/// Reads `reference` relative to `base_dir`, then as given, then from the
/// bundled files.
pub fn resolve(reference: &str, base_dir: Option<&Path>) -> Result<(String, Option<PathBuf>), IoError> {
    let mut candidates = Vec::new();
    if let Some(dir) = base_dir {
        candidates.push(dir.join(reference));
    }
    candidates.push(PathBuf::from(reference));
    for c in candidates {
        if c.is_file() {
            return Ok((io::read_text(&c)?, Some(c)));
        }
    }
    bundled(reference)
        .map(|t| (t.to_owned(), None))
        .ok_or_else(|| IoError::Read {
            path: reference.to_owned(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or bundled fixture"),
        })
}

/// Builds the network described by a scenario's case section: parse, merge
/// parallel circuits, apply the ratings overlay, then balance at the slack.
/// Returns the network (validated) and any parser warnings.
pub fn prepare(spec: &ScenarioFile, base_dir: Option<&Path>) -> Result<(PowerNetwork, Vec<String>), IoError> {
    let (text, path) = resolve(&spec.case, base_dir)?;
    let format = spec
        .format
        .unwrap_or_else(|| CaseFormat::from_path(path.as_deref().unwrap_or(Path::new(&spec.case))));
    let stem = io::default_name(Path::new(&spec.case));
    let parsed = io::parse_case(&text, format, &stem)?;
    let mut net = parsed.network;
    if spec.merge_parallel {
        net = net.merge_parallel();
    }
    if let Some(r) = &spec.ratings {
        let (overlay, _) = resolve(r, base_dir)?;
        net = net.with_ratings(&io::parse_ratings(&overlay)?)?;
    }
    if let Some(slack) = spec.auto_slack {
        net = net.with_auto_slack(BusId(slack))?;
    }
    if spec.name.as_deref() == Some("table4_case2") {
        net = net.with_scaled_injections(9.0 / 11.0)?;
    }
    let report = net.validate();
    if report.has_errors() {
        return Err(ModelError::Invalid(report).into());
    }
    Ok((net, parsed.warnings))
}

/// A bundled case, ready for analysis.
pub fn case(name: &str) -> Result<PowerNetwork, IoError> {
    let spec = case_spec(name).ok_or_else(|| IoError::Read {
        path: name.to_owned(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "unknown fixture"),
    })?;
    prepare(&spec, None).map(|(n, _)| n)
}

/// Preset branch flows shipped with some fixtures.
pub fn flows(name: &str) -> Option<BTreeMap<BranchId, f64>> {
    bundled(&format!("{name}.flows")).and_then(|t| io::parse_flows(t).ok())
}
