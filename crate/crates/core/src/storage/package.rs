//! Zip packaging with a SHA-256 manifest.
//!
//! Archives are deterministic: members are written in sorted order after
//! the manifest, with a fixed timestamp and mode, so packing the same
//! logical content twice gives identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

use super::schema::{
    parse_json, schema, to_json, FileDigest, Manifest, ManifestModel, ManifestStat, ModelDocument,
    ModelType, StatDocument, FORMAT_VERSION, HETERO_FILE, MANIFEST_FILE, MODEL_FILE, RKME_FILE,
    SEMANTIC_FILE,
};
use crate::error::{Error, Result};
use crate::model::{ExternalModel, Model, PortableModel};
use crate::specification::{SemanticSpec, StatKind, StatSpec};

/// Upper bound on the unpacked size of a package.
pub const MAX_UNPACKED_BYTES: u64 = 256 << 20;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Portable(PortableModel),
    /// Files are extracted into a private directory and `command` runs there.
    /// Dimensions are declared by the semantic spec.
    External {
        command: Vec<String>,
        entry: String,
        files: BTreeMap<String, Vec<u8>>,
    },
}

/// Logical content of a package.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnwarePackage {
    pub name: String,
    pub semantic: SemanticSpec,
    pub stat_specs: Vec<StatSpec>,
    pub model: ModelSource,
}

fn stat_file(kind: StatKind) -> &'static str {
    match kind {
        StatKind::RkmeTable => RKME_FILE,
        StatKind::HeteroMapTable => HETERO_FILE,
    }
}

fn reserved(path: &str) -> bool {
    [MANIFEST_FILE, SEMANTIC_FILE, RKME_FILE, HETERO_FILE].contains(&path)
}

/// Archive paths are relative, forward-slashed and never climb out.
fn check_member_path(path: &str) -> Result<()> {
    let bad = path.is_empty()
        || path.starts_with('/')
        || path.contains('\\')
        || path.contains(':')
        || path
            .split('/')
            .any(|c| c.is_empty() || c == "." || c == "..");
    if bad {
        return Err(Error::PackageFormat(format!(
            "illegal member path {path:?}"
        )));
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl LearnwarePackage {
    fn members(&self) -> Result<(ManifestModel, Vec<ManifestStat>, BTreeMap<String, Vec<u8>>)> {
        let mut files = BTreeMap::new();
        files.insert(SEMANTIC_FILE.to_string(), to_json(&self.semantic));
        let mut stats = Vec::new();
        let mut kinds = BTreeSet::new();
        for spec in &self.stat_specs {
            if !kinds.insert(spec.kind) {
                return Err(Error::PackageFormat(format!(
                    "two {} specs",
                    spec.kind.as_str()
                )));
            }
            let file = stat_file(spec.kind);
            files.insert(file.to_string(), to_json(&StatDocument::from_spec(spec)));
            stats.push(ManifestStat {
                kind: spec.kind,
                file: file.to_string(),
            });
        }
        stats.sort_by_key(|s| s.kind);
        let model = match &self.model {
            ModelSource::Portable(m) => {
                files.insert(
                    MODEL_FILE.to_string(),
                    to_json(&ModelDocument::from_model(m)),
                );
                ManifestModel {
                    kind: ModelType::Portable,
                    entry: MODEL_FILE.to_string(),
                    command: None,
                }
            }
            ModelSource::External {
                command,
                entry,
                files: extra,
            } => {
                if command.is_empty() {
                    return Err(Error::PackageFormat(
                        "external model needs a command".into(),
                    ));
                }
                if !extra.contains_key(entry) {
                    return Err(Error::PackageFormat(format!(
                        "entry {entry:?} is not among the model files"
                    )));
                }
                for (path, bytes) in extra {
                    check_member_path(path)?;
                    if reserved(path) {
                        return Err(Error::PackageFormat(format!(
                            "model file {path:?} uses a reserved name"
                        )));
                    }
                    files.insert(path.clone(), bytes.clone());
                }
                ManifestModel {
                    kind: ModelType::External,
                    entry: entry.clone(),
                    command: Some(command.clone()),
                }
            }
        };
        Ok((model, stats, files))
    }

    pub fn pack(&self) -> Result<Vec<u8>> {
        let (model, stat_specs, files) = self.members()?;
        let manifest = Manifest {
            version: FORMAT_VERSION,
            name: self.name.clone(),
            model,
            stat_specs,
            semantic: SEMANTIC_FILE.to_string(),
            files: files
                .iter()
                .map(|(path, bytes)| FileDigest {
                    path: path.clone(),
                    sha256: sha256_hex(bytes),
                })
                .collect(),
        };
        let options = SimpleFileOptions::default()
            .compression_method(CompressionMethod::Deflated)
            .last_modified_time(DateTime::default())
            .unix_permissions(0o644);
        let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
        zip.start_file(MANIFEST_FILE, options)?;
        zip.write_all(&to_json(&manifest))?;
        for (path, bytes) in &files {
            zip.start_file(path.as_str(), options)?;
            zip.write_all(bytes)?;
        }
        Ok(zip.finish()?.into_inner())
    }

    pub fn unpack(bytes: &[u8]) -> Result<Self> {
        let mut archive = ZipArchive::new(Cursor::new(bytes))?;
        let mut members: BTreeMap<String, Vec<u8>> = BTreeMap::new();
        let mut budget = MAX_UNPACKED_BYTES;
        for i in 0..archive.len() {
            let mut entry = archive.by_index(i)?;
            if entry.is_dir() {
                continue;
            }
            let name = entry.name().to_string();
            check_member_path(&name)?;
            let mut buf = Vec::new();
            let read = (&mut entry).take(budget + 1).read_to_end(&mut buf)? as u64;
            if read > budget {
                return Err(Error::PackageFormat(
                    "package exceeds the size limit".into(),
                ));
            }
            budget -= read;
            if members.insert(name.clone(), buf).is_some() {
                return Err(Error::PackageFormat(format!("duplicate member {name:?}")));
            }
        }

        let manifest_bytes = members
            .remove(MANIFEST_FILE)
            .ok_or_else(|| Error::PackageFormat(format!("missing member {MANIFEST_FILE}")))?;
        let manifest: Manifest = parse_json(MANIFEST_FILE, &manifest_bytes)?;
        if manifest.version != FORMAT_VERSION {
            return Err(schema(
                MANIFEST_FILE,
                "/version",
                format!(
                    "unsupported version {}, expected {FORMAT_VERSION}",
                    manifest.version
                ),
            ));
        }

        let mut listed = BTreeSet::new();
        for f in &manifest.files {
            check_member_path(&f.path)?;
            if !listed.insert(f.path.as_str()) {
                return Err(Error::PackageFormat(format!("{} listed twice", f.path)));
            }
            let data = members
                .get(&f.path)
                .ok_or_else(|| Error::PackageFormat(format!("missing member {}", f.path)))?;
            if sha256_hex(data) != f.sha256.to_ascii_lowercase() {
                return Err(Error::Integrity(format!("digest mismatch for {}", f.path)));
            }
        }
        if let Some(extra) = members.keys().find(|k| !listed.contains(k.as_str())) {
            return Err(Error::PackageFormat(format!(
                "member {extra} is not in the manifest"
            )));
        }
        let take = |members: &mut BTreeMap<String, Vec<u8>>, path: &str| {
            members
                .remove(path)
                .ok_or_else(|| Error::PackageFormat(format!("missing member {path}")))
        };

        if manifest.semantic != SEMANTIC_FILE {
            return Err(schema(
                MANIFEST_FILE,
                "/semantic",
                format!("expected {SEMANTIC_FILE:?}"),
            ));
        }
        let semantic: SemanticSpec =
            parse_json(SEMANTIC_FILE, &take(&mut members, SEMANTIC_FILE)?)?;

        let mut stat_specs = Vec::new();
        let mut kinds = BTreeSet::new();
        for (i, s) in manifest.stat_specs.iter().enumerate() {
            if s.file != stat_file(s.kind) {
                return Err(schema(
                    MANIFEST_FILE,
                    &format!("/stat_specs/{i}/file"),
                    format!("{} specs live in {}", s.kind.as_str(), stat_file(s.kind)),
                ));
            }
            if !kinds.insert(s.kind) {
                return Err(Error::PackageFormat(format!(
                    "two {} specs",
                    s.kind.as_str()
                )));
            }
            let doc: StatDocument = parse_json(&s.file, &take(&mut members, &s.file)?)?;
            if doc.kind != s.kind {
                return Err(schema(
                    &s.file,
                    "/kind",
                    format!("manifest declares {}", s.kind.as_str()),
                ));
            }
            stat_specs.push(doc.into_spec(&s.file)?);
        }

        let model = match manifest.model.kind {
            ModelType::Portable => {
                if manifest.model.command.is_some() {
                    return Err(schema(
                        MANIFEST_FILE,
                        "/model/command",
                        "portable models take no command",
                    ));
                }
                let entry = &manifest.model.entry;
                let doc: ModelDocument = parse_json(entry, &take(&mut members, entry)?)?;
                if let Some(extra) = members.keys().next() {
                    return Err(Error::PackageFormat(format!("unreferenced member {extra}")));
                }
                ModelSource::Portable(doc.into_model(entry)?)
            }
            ModelType::External => {
                let command = manifest
                    .model
                    .command
                    .clone()
                    .filter(|c| !c.is_empty())
                    .ok_or_else(|| {
                        schema(
                            MANIFEST_FILE,
                            "/model/command",
                            "external models need a command",
                        )
                    })?;
                if !members.contains_key(&manifest.model.entry) {
                    return Err(Error::PackageFormat(format!(
                        "missing member {}",
                        manifest.model.entry
                    )));
                }
                if let Some(r) = members.keys().find(|k| reserved(k)) {
                    return Err(Error::PackageFormat(format!("unreferenced member {r}")));
                }
                ModelSource::External {
                    command,
                    entry: manifest.model.entry.clone(),
                    files: members,
                }
            }
        };

        Ok(Self {
            name: manifest.name,
            semantic,
            stat_specs,
            model,
        })
    }

    pub fn stat(&self, kind: StatKind) -> Option<&StatSpec> {
        self.stat_specs.iter().find(|s| s.kind == kind)
    }

    /// Builds the runnable model. External files are written under `workdir`.
    pub fn instantiate(&self, workdir: &Path) -> Result<Model> {
        match &self.model {
            ModelSource::Portable(m) => Ok(Model::Portable(m.clone())),
            ModelSource::External { command, files, .. } => {
                fs::create_dir_all(workdir)?;
                for (path, bytes) in files {
                    let target = workdir.join(path);
                    if let Some(parent) = target.parent() {
                        fs::create_dir_all(parent)?;
                    }
                    fs::write(&target, bytes)?;
                }
                let model = ExternalModel::new(
                    command.clone(),
                    workdir,
                    self.semantic.input_dim,
                    self.semantic.output_dim,
                );
                Ok(model.into())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelParams, RkmeSpec};
    use crate::specification::{DataType, TaskType};
    use ndarray::array;

    fn package() -> LearnwarePackage {
        LearnwarePackage {
            name: "demo".into(),
            semantic: SemanticSpec {
                data_type: DataType::Table,
                task_type: TaskType::Regression,
                scenarios: ["demo".to_string()].into(),
                description: "identity".into(),
                input_dim: 2,
                feature_descriptions: vec![],
                output_dim: 2,
                label_names: None,
            },
            stat_specs: vec![StatSpec::rkme_table(
                RkmeSpec::new(
                    array![0.25, 0.75],
                    array![[0.0, 1.0], [2.0, 3.0]],
                    KernelParams::default(),
                )
                .unwrap(),
            )],
            model: ModelSource::Portable(
                PortableModel::linear(Array2::eye(2), array![0.0, 0.5]).unwrap(),
            ),
        }
    }

    use ndarray::Array2;

    #[test]
    fn round_trip_is_byte_stable() {
        let pkg = package();
        let a = pkg.pack().unwrap();
        let back = LearnwarePackage::unpack(&a).unwrap();
        assert_eq!(back, pkg);
        assert_eq!(back.pack().unwrap(), a);
    }

    #[test]
    fn illegal_paths_rejected() {
        for p in ["../x", "/abs", "a//b", "a\\b", "./a", "c:x"] {
            assert!(check_member_path(p).is_err(), "{p}");
        }
        assert!(check_member_path("src/model.py").is_ok());
    }
}
