//! Dataset manifests: JSON documents listing images and their ground truth.
//!
//! ```json
//! {
//!   "name": "mimo-real",
//!   "entries": [
//!     { "image": "img/001.png", "transfer": "linear",
//!       "groundTruth": { "field": "gt/001.png" },
//!       "mask": "mask/001.png", "blackLevel": 0.0, "saturationLevel": 0.95 },
//!     { "image": "img/002.png", "groundTruth": { "global": [0.4, 0.6, 0.7] } }
//!   ]
//! }
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::image::{Illuminant, Transfer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ManifestEntry {
    pub image: PathBuf,
    #[serde(default)]
    pub transfer: Transfer,
    pub ground_truth: GroundTruth,
    /// Evaluation mask raster; nonzero pixels are scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub black_level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation_level: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub enum GroundTruth {
    Global(Illuminant),
    /// Path to an illuminant-field raster.
    Field(PathBuf),
}

const ENTRY_KEYS: [&str; 6] = [
    "image",
    "transfer",
    "groundTruth",
    "mask",
    "blackLevel",
    "saturationLevel",
];

/// Every schema problem in a manifest document, as `path: message` lines.
fn schema_problems(doc: &Value) -> Vec<String> {
    let mut out = Vec::new();
    let Some(obj) = doc.as_object() else {
        return vec!["$: expected an object".into()];
    };
    for key in obj.keys().filter(|k| *k != "name" && *k != "entries") {
        out.push(format!("{key}: unknown field"));
    }
    if !obj.get("name").is_some_and(Value::is_string) {
        out.push("name: expected a string".into());
    }
    let Some(entries) = obj.get("entries").and_then(Value::as_array) else {
        out.push("entries: expected an array".into());
        return out;
    };
    for (i, e) in entries.iter().enumerate() {
        let at = |field: &str| format!("entries[{i}].{field}");
        let Some(e) = e.as_object() else {
            out.push(format!("entries[{i}]: expected an object"));
            continue;
        };
        for key in e.keys().filter(|k| !ENTRY_KEYS.contains(&k.as_str())) {
            out.push(format!("{}: unknown field", at(key)));
        }
        if !e.get("image").is_some_and(Value::is_string) {
            out.push(format!("{}: expected a path string", at("image")));
        }
        if let Some(t) = e.get("transfer") {
            if !matches!(t.as_str(), Some("linear" | "srgb")) {
                out.push(format!(
                    "{}: expected \"linear\" or \"srgb\"",
                    at("transfer")
                ));
            }
        }
        if let Some(m) = e.get("mask") {
            if !m.is_string() {
                out.push(format!("{}: expected a path string", at("mask")));
            }
        }
        for key in ["blackLevel", "saturationLevel"] {
            if let Some(v) = e.get(key) {
                if !v.as_f64().is_some_and(|x| x >= 0.0) {
                    out.push(format!("{}: expected a nonnegative number", at(key)));
                }
            }
        }
        match e.get("groundTruth").and_then(Value::as_object) {
            None => out.push(format!(
                "{}: expected an object with `global` or `field`",
                at("groundTruth")
            )),
            Some(gt) => {
                let kinds: Vec<_> = gt.keys().collect();
                if kinds.len() != 1 {
                    out.push(format!(
                        "{}: exactly one of `global` or `field` required, found {}",
                        at("groundTruth"),
                        kinds.len()
                    ));
                } else if let Some(g) = gt.get("global") {
                    let ok = g.as_array().is_some_and(|a| {
                        a.len() == 3
                            && a.iter().all(|c| c.as_f64().is_some_and(|c| c >= 0.0))
                            && a.iter().any(|c| c.as_f64().is_some_and(|c| c > 0.0))
                    });
                    if !ok {
                        out.push(format!(
                            "{}: expected three nonnegative numbers, not all zero",
                            at("groundTruth.global")
                        ));
                    }
                } else if let Some(f) = gt.get("field") {
                    if !f.is_string() {
                        out.push(format!(
                            "{}: expected a path string",
                            at("groundTruth.field")
                        ));
                    }
                } else {
                    out.push(format!(
                        "{}: unknown ground-truth kind `{}`",
                        at("groundTruth"),
                        kinds[0]
                    ));
                }
            }
        }
    }
    out
}

impl Manifest {
    /// Parse and validate a manifest document. Problems are collected across
    /// all entries before failing.
    pub fn from_json(text: &str, origin: &Path) -> Result<Manifest> {
        let schema_err = |message: String| Error::Schema {
            path: origin.to_path_buf(),
            message,
        };
        let doc: Value = serde_json::from_str(text).map_err(|e| schema_err(e.to_string()))?;
        let problems = schema_problems(&doc);
        if !problems.is_empty() {
            return Err(schema_err(problems.join("; ")));
        }
        serde_path_to_error::deserialize(doc)
            .map_err(|e| schema_err(format!("{}: {}", e.path(), e.inner())))
    }

    /// Load from disk and resolve relative paths against the manifest directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut manifest = Self::from_json(&text, path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        manifest.resolve_relative_to(base);
        Ok(manifest)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for e in &mut self.entries {
            fix(&mut e.image);
            if let Some(m) = e.mask.as_mut() {
                fix(m);
            }
            if let GroundTruth::Field(f) = &mut e.ground_truth {
                fix(f);
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_ground_truth_kinds() {
        let text = r#"{"name": "t", "entries": [
            {"image": "a.png", "groundTruth": {"global": [2, 0, 0]}},
            {"image": "b.png", "transfer": "srgb", "groundTruth": {"field": "b_gt.png"}, "blackLevel": 0.01}
        ]}"#;
        let mut m = Manifest::from_json(text, Path::new("m.json")).unwrap();
        assert_eq!(
            m.entries[0].ground_truth,
            GroundTruth::Global(Illuminant::try_from([1.0, 0.0, 0.0]).unwrap())
        );
        assert_eq!(m.entries[1].transfer, Transfer::Srgb);
        m.resolve_relative_to(Path::new("/data"));
        assert_eq!(m.entries[1].image, Path::new("/data/b.png"));
        assert_eq!(
            m.entries[1].ground_truth,
            GroundTruth::Field("/data/b_gt.png".into())
        );
    }

    #[test]
    fn lists_every_offending_field() {
        let text = r#"{"name": "t", "entries": [
            {"image": 3, "groundTruth": {"global": [0, 0, 0]}},
            {"image": "b.png", "groundTruth": {"global": [1, 1, 1], "field": "x.png"}, "colour": 1},
            {"image": "c.png", "groundTruth": {"field": "c.png"}, "transfer": "gamma", "blackLevel": -1}
        ]}"#;
        let err = Manifest::from_json(text, Path::new("m.json")).unwrap_err();
        let Error::Schema { message, .. } = err else {
            panic!("{err}")
        };
        for needle in [
            "entries[0].image",
            "entries[0].groundTruth.global",
            "entries[1].groundTruth: exactly one",
            "entries[1].colour: unknown field",
            "entries[2].transfer",
            "entries[2].blackLevel",
        ] {
            assert!(message.contains(needle), "missing {needle} in {message}");
        }
    }

    #[test]
    fn rejects_malformed_json() {
        assert!(matches!(
            Manifest::from_json("{", Path::new("m.json")),
            Err(Error::Schema { .. })
        ));
    }
}
