//! The built-in benchmark corpus: parsed function definitions plus the
//! measurement regions, classification points, and expected labels that
//! drive the end-to-end pipeline and its tests.
//!
//! The data ships as `.fpdsl` sources plus a JSON manifest under `corpus/`,
//! compiled into the library with `include_str!` so downstream tools can
//! load the corpus without touching the filesystem.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::ClassificationLabel;
use crate::expr::{parse_file, FunctionDef, ParseError};

/// Where patched and naive evaluations are compared: a one-dimensional
/// interval along `var`, centred at `point[var]`, with every other
/// coordinate held at its value in `point`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// Index of the scanned parameter.
    pub var: usize,
    /// Full evaluation point; `point[var]` is the interval midpoint.
    pub point: Vec<f64>,
    /// Half-width of the interval. Always positive.
    pub radius: f64,
}

impl Region {
    pub fn midpoint(&self) -> f64 {
        self.point[self.var]
    }

    pub fn lo(&self) -> f64 {
        self.midpoint() - self.radius
    }

    pub fn hi(&self) -> f64 {
        self.midpoint() + self.radius
    }

    /// The full point with the scanned coordinate replaced by `x`.
    pub fn point_at(&self, x: f64) -> Vec<f64> {
        let mut p = self.point.clone();
        p[self.var] = x;
        p
    }
}

/// What an entry is in the corpus for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryRole {
    /// Exercises the full detect, classify, repair, measure pipeline.
    Repairable,
    /// Well-conditioned negative control; detection must stay quiet.
    CalmControl,
    /// Ill-conditioned negative control; classification must escalate
    /// instead of promising a working-precision fix.
    HighPrecisionControl,
    /// Demonstrates rewrite accuracy at an extreme scale. Measured
    /// naive-only: its designated region sits at a magnitude where ordinary
    /// sampling statistics are not meaningful, so patched accuracy is
    /// asserted pointwise by dedicated tests instead.
    AccuracyDemo,
}

/// One benchmark function with everything needed to run it end to end.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    /// Stable entry name; also the `.fpdsl` function name.
    pub name: String,
    pub function: FunctionDef,
    /// Algebraically equivalent accurate rewrite, when one is known.
    pub twin: Option<FunctionDef>,
    /// Designated measurement region.
    pub region: Region,
    /// Point where classification (and the peak-condition check) runs.
    /// Not necessarily the region midpoint.
    pub classification_point: Vec<f64>,
    pub expected: ClassificationLabel,
    pub role: EntryRole,
    pub notes: String,
}

impl CorpusEntry {
    /// True when the pipeline is expected to synthesize a rewrite.
    pub fn expects_patch(&self) -> bool {
        self.expected == ClassificationLabel::OriginalPrecisionRepairable
    }

    /// True when measurement compares patched against naive accuracy
    /// (rather than reporting naive error alone).
    pub fn measure_with_patch(&self) -> bool {
        self.role == EntryRole::Repairable
    }
}

/// Failure to resolve corpus data against its manifest.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Deserialize)]
struct Manifest {
    schema: String,
    entries: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
struct ManifestEntry {
    name: String,
    file: String,
    function: String,
    twin: Option<String>,
    region: ManifestRegion,
    classification_point: BTreeMap<String, f64>,
    expected_classification: ClassificationLabel,
    role: EntryRole,
    notes: String,
}

#[derive(Deserialize)]
struct ManifestRegion {
    var: String,
    midpoint: f64,
    radius: f64,
    fixed: BTreeMap<String, f64>,
}

const MANIFEST_SCHEMA: &str = "ofp-corpus/1";
const MANIFEST: &str = include_str!("../corpus/manifest.json");

const SOURCES: &[(&str, &str)] = &[
    ("sin_gap.fpdsl", include_str!("../corpus/sin_gap.fpdsl")),
    ("sqrt_gap.fpdsl", include_str!("../corpus/sqrt_gap.fpdsl")),
    (
        "cos_gap_ratio.fpdsl",
        include_str!("../corpus/cos_gap_ratio.fpdsl"),
    ),
    (
        "expm1_naive.fpdsl",
        include_str!("../corpus/expm1_naive.fpdsl"),
    ),
    (
        "log1p_ratio.fpdsl",
        include_str!("../corpus/log1p_ratio.fpdsl"),
    ),
    ("series_0f1.fpdsl", include_str!("../corpus/series_0f1.fpdsl")),
    (
        "affine_calm.fpdsl",
        include_str!("../corpus/affine_calm.fpdsl"),
    ),
    ("root_gap.fpdsl", include_str!("../corpus/root_gap.fpdsl")),
    ("sin_drift.fpdsl", include_str!("../corpus/sin_drift.fpdsl")),
];

/// Raw `.fpdsl` sources for the built-in corpus, keyed by file name.
/// Exposed so tools can materialise the corpus on disk.
pub fn builtin_sources() -> &'static [(&'static str, &'static str)] {
    SOURCES
}

/// The built-in corpus manifest as shipped (JSON text).
pub fn builtin_manifest_json() -> &'static str {
    MANIFEST
}

fn source_text(file: &str) -> Result<&'static str, CorpusError> {
    SOURCES
        .iter()
        .find(|(name, _)| *name == file)
        .map(|(_, text)| *text)
        .ok_or_else(|| CorpusError::Manifest(format!("no embedded source named {file}")))
}

fn find_function(decls: &[FunctionDef], name: &str, file: &str) -> Result<FunctionDef, CorpusError> {
    decls
        .iter()
        .find(|f| f.name == name)
        .cloned()
        .ok_or_else(|| CorpusError::Manifest(format!("function {name} not found in {file}")))
}

/// Assemble the full point for a manifest value map, in parameter order.
fn bind_point(
    f: &FunctionDef,
    values: &BTreeMap<String, f64>,
    what: &str,
) -> Result<Vec<f64>, CorpusError> {
    let mut point = Vec::with_capacity(f.arity());
    for p in &f.params {
        let v = values.get(&p.name).copied().ok_or_else(|| {
            CorpusError::Manifest(format!("{what} for {} is missing parameter {}", f.name, p.name))
        })?;
        point.push(v);
    }
    if values.len() != f.arity() {
        return Err(CorpusError::Manifest(format!(
            "{what} for {} names a parameter the function does not have",
            f.name
        )));
    }
    Ok(point)
}

fn resolve_entry(m: ManifestEntry) -> Result<CorpusEntry, CorpusError> {
    let text = source_text(&m.file)?;
    let decls = parse_file(text)?;
    let function = find_function(&decls, &m.function, &m.file)?;
    let twin = match &m.twin {
        Some(name) => Some(find_function(&decls, name, &m.file)?),
        None => None,
    };

    let var = function.param_index(&m.region.var).ok_or_else(|| {
        CorpusError::Manifest(format!(
            "region variable {} is not a parameter of {}",
            m.region.var, m.function
        ))
    })?;
    if !(m.region.radius > 0.0 && m.region.radius.is_finite()) {
        return Err(CorpusError::Manifest(format!(
            "region radius for {} must be positive and finite",
            m.name
        )));
    }
    let mut fixed = m.region.fixed.clone();
    fixed.insert(m.region.var.clone(), m.region.midpoint);
    let point = bind_point(&function, &fixed, "region")?;
    let region = Region {
        var,
        point,
        radius: m.region.radius,
    };
    for x in [region.lo(), region.hi()] {
        if !function.params[var].domain.contains(x) {
            return Err(CorpusError::Manifest(format!(
                "region for {} leaves the domain of {} at {x}",
                m.name, m.region.var
            )));
        }
    }
    if !function.point_in_domain(&region.point) {
        return Err(CorpusError::Manifest(format!(
            "region point for {} is outside the function domain",
            m.name
        )));
    }

    let classification_point =
        bind_point(&function, &m.classification_point, "classification point")?;
    if !function.point_in_domain(&classification_point) {
        return Err(CorpusError::Manifest(format!(
            "classification point for {} is outside the function domain",
            m.name
        )));
    }

    Ok(CorpusEntry {
        name: m.name,
        function,
        twin,
        region,
        classification_point,
        expected: m.expected_classification,
        role: m.role,
        notes: m.notes,
    })
}

fn load_builtin() -> Result<Vec<CorpusEntry>, CorpusError> {
    let manifest: Manifest = serde_json::from_str(MANIFEST)?;
    if manifest.schema != MANIFEST_SCHEMA {
        return Err(CorpusError::Manifest(format!(
            "unsupported manifest schema {}",
            manifest.schema
        )));
    }
    manifest.entries.into_iter().map(resolve_entry).collect()
}

/// The built-in benchmark corpus, in manifest order.
///
/// # Panics
///
/// Panics if the embedded corpus data is internally inconsistent, which
/// would be a build defect rather than a runtime condition.
pub fn builtin_corpus() -> Vec<CorpusEntry> {
    load_builtin().expect("embedded corpus data is self-consistent")
}

/// Look up one built-in entry by name.
pub fn corpus_entry(name: &str) -> Option<CorpusEntry> {
    builtin_corpus().into_iter().find(|e| e.name == name)
}
