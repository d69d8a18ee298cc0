//! Dataset persistence: annotation records, manifests, generation and evaluation.
//!
//! Layout under a dataset root:
//!
//! ```text
//! manifest.json
//! clean/<id>.png
//! degraded/<id>.png
//! stages/<id>_<k>_<stage>.png     (when snapshots are enabled for the split)
//! annotations/<id>.json
//! ```
//!
//! All paths stored in files are relative to the root and use `/`.

pub mod evaluate;
pub mod generate;

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::degrade::{DegradationRecipe, SamplerConfig};
use crate::error::{Error, Result};

pub use evaluate::{evaluate, render_table, EvalRow, EvalTable, TABLE_HEADER};
pub use generate::{degrade_indexed, generate_dataset, image_rng};

pub const ANNOTATION_SCHEMA: &str = "rnr-annotation/1";
pub const MANIFEST_SCHEMA: &str = "rnr-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Everything that shapes a generated dataset besides the inputs and the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub name: String,
    pub sampler: SamplerConfig,
    /// Fraction of images assigned to the test split, rounded to a count.
    pub test_fraction: f64,
    pub snapshots_train: bool,
    pub snapshots_test: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            sampler: SamplerConfig::default(),
            test_fraction: 0.1,
            snapshots_train: false,
            snapshots_test: true,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return Err(Error::param("test_fraction", format!("{} outside [0,1]", self.test_fraction)));
        }
        self.sampler.validate()
    }

    pub fn snapshots(&self, split: Split) -> bool {
        match split {
            Split::Train => self.snapshots_train,
            Split::Test => self.snapshots_test,
        }
    }

    /// SHA-256 of the compact JSON form, lowercase hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| json_error("generator config", text, e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePaths {
    pub clean: String,
    pub degraded: String,
    /// One per applied stage, in application order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<String>,
}

impl SamplePaths {
    fn all(&self) -> impl Iterator<Item = &String> {
        [&self.clean, &self.degraded].into_iter().chain(&self.stages)
    }
}

/// Ground truth for one generated image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub schema: String,
    pub id: String,
    /// Position in the sorted input list; with `seed` it names the image's rng stream.
    pub index: u64,
    /// Master seed of the generation run.
    pub seed: u64,
    pub split: Split,
    /// Input file name the clean image was decoded from.
    pub source: String,
    pub paths: SamplePaths,
    pub recipe: DegradationRecipe,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.schema != ANNOTATION_SCHEMA {
            return Err(Error::SchemaVersion {
                found: self.schema.clone(),
                supported: ANNOTATION_SCHEMA.into(),
            });
        }
        self.recipe.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub annotation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkipEntry {
    pub source: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub name: String,
    pub master_seed: u64,
    pub config_hash: String,
    pub config: GeneratorConfig,
    pub record_count: usize,
    pub records: Vec<ManifestEntry>,
    #[serde(default)]
    pub skipped: Vec<SkipEntry>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.schema != MANIFEST_SCHEMA {
            return Err(Error::SchemaVersion {
                found: self.schema.clone(),
                supported: MANIFEST_SCHEMA.into(),
            });
        }
        if self.record_count != self.records.len() {
            return Err(Error::Invariant(format!(
                "record_count {} but {} records listed",
                self.record_count,
                self.records.len()
            )));
        }
        let hash = self.config.hash();
        if hash != self.config_hash {
            return Err(Error::Invariant(format!(
                "config hash {} does not match stored config ({hash})",
                self.config_hash
            )));
        }
        self.config.validate()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.records.iter().filter(move |e| e.split == split)
    }
}

/// Byte offset of a 1-based `(line, column)` position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

fn json_error(what: &'static str, text: &str, e: serde_json::Error) -> Error {
    Error::Malformed {
        what,
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    }
}

/// Checks the `schema` tag before the typed parse, so a newer file reports its
/// version rather than a field mismatch.
fn parse_versioned<T: DeserializeOwned>(what: &'static str, supported: &str, text: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| json_error(what, text, e))?;
    match value.get("schema").and_then(|s| s.as_str()) {
        Some(s) if s == supported => {}
        Some(s) => {
            return Err(Error::SchemaVersion {
                found: s.into(),
                supported: supported.into(),
            })
        }
        None => {
            return Err(Error::Malformed {
                what,
                offset: 0,
                message: "missing string field `schema`".into(),
            })
        }
    }
    serde_json::from_str(text).map_err(|e| json_error(what, text, e))
}

fn render_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("record serializes");
    s.push('\n');
    s
}

pub fn render_annotation(record: &AnnotationRecord) -> String {
    render_json(record)
}

pub fn parse_annotation(text: &str) -> Result<AnnotationRecord> {
    let record: AnnotationRecord = parse_versioned("annotation", ANNOTATION_SCHEMA, text)?;
    record.validate()?;
    Ok(record)
}

pub fn render_manifest(manifest: &Manifest) -> String {
    render_json(manifest)
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let manifest: Manifest = parse_versioned("manifest", MANIFEST_SCHEMA, text)?;
    manifest.validate()?;
    Ok(manifest)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `root/<record annotation path>` after checking every referenced image exists.
pub fn write_annotation(root: &Path, rel: &str, record: &AnnotationRecord) -> Result<()> {
    record.validate()?;
    if let Some(missing) = record.paths.all().find(|p| !root.join(p).is_file()) {
        return Err(Error::Invariant(format!("annotation {} references missing {missing}", record.id)));
    }
    write_text(&root.join(rel), &render_annotation(record))
}

pub fn read_annotation(root: &Path, rel: &str) -> Result<AnnotationRecord> {
    parse_annotation(&read_text(&root.join(rel))?)
}

pub fn write_manifest(root: &Path, manifest: &Manifest) -> Result<()> {
    manifest.validate()?;
    write_text(&root.join(MANIFEST_FILE), &render_manifest(manifest))
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    parse_manifest(&read_text(&root.join(MANIFEST_FILE))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::{degrade, sample_recipe, Degradation};
    use crate::scene::indexed_scene;

    fn record(kinds: &[Degradation]) -> AnnotationRecord {
        let rng = image_rng(5, 3);
        let recipe = sample_recipe(&rng, &SamplerConfig::only(kinds)).unwrap();
        let clean = indexed_scene(5, 3, 40, 40).unwrap();
        AnnotationRecord {
            schema: ANNOTATION_SCHEMA.into(),
            id: "00003".into(),
            index: 3,
            seed: 5,
            split: Split::Train,
            source: "c.png".into(),
            paths: SamplePaths {
                clean: "clean/00003.png".into(),
                degraded: "degraded/00003.png".into(),
                stages: vec![],
            },
            recipe: degrade(&clean, &recipe, &rng).unwrap().recipe,
        }
    }

    #[test]
    fn annotation_round_trips() {
        let r = record(&Degradation::ALL);
        assert_eq!(parse_annotation(&render_annotation(&r)).unwrap(), r);
    }

    #[test]
    fn absent_fog_omits_the_block() {
        let r = record(&[Degradation::Noise]);
        let text = render_annotation(&r);
        assert!(!text.contains("\"fog\""));
        let back = parse_annotation(&text).unwrap();
        assert!(!back.recipe.is_present(Degradation::Fog));
    }

    #[test]
    fn out_of_range_severity_is_rejected() {
        let mut r = record(&[Degradation::Fog]);
        r.recipe.severity[0] = 150.0;
        let text = serde_json::to_string_pretty(&r).unwrap();
        assert!(matches!(parse_annotation(&text), Err(Error::Invariant(_))));
    }

    #[test]
    fn unknown_version_is_named() {
        let text = render_annotation(&record(&[])).replace(ANNOTATION_SCHEMA, "rnr-annotation/7");
        match parse_annotation(&text) {
            Err(Error::SchemaVersion { found, .. }) => assert_eq!(found, "rnr-annotation/7"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let text = render_annotation(&record(&[]));
        let cut = text.find("\"index\"").unwrap();
        let broken = format!("{}@{}", &text[..cut], &text[cut..]);
        match parse_annotation(&broken) {
            Err(Error::Malformed { offset, .. }) => assert_eq!(offset, cut),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn offsets_follow_lines() {
        assert_eq!(byte_offset("ab\ncd\n", 2, 2), 4);
        assert_eq!(byte_offset("ab", 0, 0), 0);
    }

    #[test]
    fn manifest_checks_count_and_hash() {
        let config = GeneratorConfig::default();
        let mut m = Manifest {
            schema: MANIFEST_SCHEMA.into(),
            name: config.name.clone(),
            master_seed: 1,
            config_hash: config.hash(),
            config,
            record_count: 1,
            records: vec![ManifestEntry {
                id: "00000".into(),
                split: Split::Test,
                annotation: "annotations/00000.json".into(),
            }],
            skipped: vec![],
        };
        assert_eq!(parse_manifest(&render_manifest(&m)).unwrap(), m);
        m.record_count = 2;
        assert!(m.validate().is_err());
        m.record_count = 1;
        m.config.test_fraction = 0.2;
        assert!(m.validate().is_err());
    }

    #[test]
    fn config_hash_is_stable_hex() {
        let h = GeneratorConfig::default().hash();
        assert_eq!(h.len(), 64);
        assert_eq!(h, GeneratorConfig::default().hash());
        let mut other = GeneratorConfig::default();
        other.sampler.probabilities[2] = 0.25;
        assert_ne!(h, other.hash());
    }
}
