//! JSON documents stored inside a learnware package.
//!
//! Numbers are written in shortest round-trip form. Non-finite values are
//! written as `null` and read back as NaN, so a corrupt spec survives the
//! trip to the checker instead of failing at parse time.

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelParams, RkmeSpec};
use crate::model::{PortableKind, PortableModel};
use crate::specification::{ProjectorInfo, StatKind, StatSpec};

pub const MANIFEST_FILE: &str = "learnware.json";
pub const SEMANTIC_FILE: &str = "semantic.json";
pub const RKME_FILE: &str = "stat_rkme.json";
pub const HETERO_FILE: &str = "stat_hetero.json";
pub const MODEL_FILE: &str = "model.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub name: String,
    pub model: ManifestModel,
    pub stat_specs: Vec<ManifestStat>,
    pub semantic: String,
    pub files: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestModel {
    #[serde(rename = "type")]
    pub kind: ModelType,
    pub entry: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelType {
    Portable,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestStat {
    pub kind: StatKind,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

type Row = Vec<Option<f64>>;

fn to_row<'a>(values: impl IntoIterator<Item = &'a f64>) -> Row {
    values
        .into_iter()
        .map(|v| v.is_finite().then_some(*v))
        .collect()
}

fn from_row(row: &[Option<f64>]) -> impl Iterator<Item = f64> + '_ {
    row.iter().map(|v| v.unwrap_or(f64::NAN))
}

fn to_matrix(m: &Array2<f64>) -> Vec<Row> {
    m.rows().into_iter().map(|r| to_row(r.iter())).collect()
}

/// Rebuilds a matrix, reporting ragged rows against `pointer`.
fn from_matrix(rows: &[Row], cols: usize, file: &str, field: &str) -> Result<Array2<f64>> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(schema(
                file,
                &format!("/{field}/{i}"),
                format!("expected {cols} columns, found {}", r.len()),
            ));
        }
    }
    let flat: Vec<f64> = rows.iter().flat_map(|r| from_row(r)).collect();
    Ok(Array2::from_shape_vec((rows.len(), cols), flat).expect("row lengths checked"))
}

pub(crate) fn schema(file: &str, pointer: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        pointer: format!("{file}#{pointer}"),
        message: message.into(),
    }
}

/// Parses `bytes` as `T`, reporting the failing location as a JSON pointer.
pub fn parse_json<T: DeserializeOwned>(file: &str, bytes: &[u8]) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(e.path());
        schema(file, &pointer, e.into_inner().to_string())
    })
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => {
                out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1")))
            }
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("documents serialize");
    bytes.push(b'\n');
    bytes
}

/// `stat_rkme.json` and `stat_hetero.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatDocument {
    pub kind: StatKind,
    pub gamma: f64,
    pub dim: usize,
    pub beta: Row,
    #[serde(rename = "Z")]
    pub z: Vec<Row>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projector_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_sem: Option<usize>,
}

impl StatDocument {
    pub fn from_spec(spec: &StatSpec) -> Self {
        let p = &spec.payload;
        Self {
            kind: spec.kind,
            gamma: p.kernel().gamma(),
            dim: p.dim(),
            beta: to_row(p.beta().iter()),
            z: to_matrix(p.z()),
            projector_seed: spec.projector.map(|i| i.seed),
            d_sem: spec.projector.map(|i| i.d_sem),
        }
    }

    /// Structural conversion. Shape and kernel problems are schema errors;
    /// value problems (NaN, negative β) are left for the checker.
    pub fn into_spec(self, file: &str) -> Result<StatSpec> {
        let kernel =
            KernelParams::new(self.gamma).map_err(|e| schema(file, "/gamma", e.to_string()))?;
        if self.beta.len() != self.z.len() {
            return Err(schema(
                file,
                "/beta",
                format!(
                    "{} coefficients for {} rows of Z",
                    self.beta.len(),
                    self.z.len()
                ),
            ));
        }
        let z = from_matrix(&self.z, self.dim, file, "Z")?;
        let beta: Array1<f64> = from_row(&self.beta).collect();
        let projector = match (self.kind, self.projector_seed, self.d_sem) {
            (StatKind::RkmeTable, None, None) => None,
            (StatKind::HeteroMapTable, Some(seed), Some(d_sem)) => {
                Some(ProjectorInfo { seed, d_sem })
            }
            (StatKind::RkmeTable, _, _) => {
                return Err(schema(
                    file,
                    "/projector_seed",
                    "rkme_table specs carry no projector",
                ))
            }
            (StatKind::HeteroMapTable, _, _) => {
                return Err(schema(
                    file,
                    "/projector_seed",
                    "hetero_map_table needs projector_seed and d_sem",
                ))
            }
        };
        Ok(StatSpec {
            kind: self.kind,
            payload: RkmeSpec::from_parts_unchecked(beta, z, kernel),
            projector,
        })
    }
}

/// `model.json` for portable models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub kind: PortableKindTag,
    pub input_dim: usize,
    pub output_dim: usize,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<Row>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Row>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prototypes: Option<Vec<Row>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortableKindTag {
    Linear,
    Logistic,
    Prototype,
}

impl From<PortableKind> for PortableKindTag {
    fn from(k: PortableKind) -> Self {
        match k {
            PortableKind::Linear => Self::Linear,
            PortableKind::Logistic => Self::Logistic,
            PortableKind::Prototype => Self::Prototype,
        }
    }
}

impl From<PortableKindTag> for PortableKind {
    fn from(k: PortableKindTag) -> Self {
        match k {
            PortableKindTag::Linear => Self::Linear,
            PortableKindTag::Logistic => Self::Logistic,
            PortableKindTag::Prototype => Self::Prototype,
        }
    }
}

impl ModelDocument {
    pub fn from_model(m: &PortableModel) -> Self {
        let (w, b, prototypes, classes) = match m.prototypes() {
            Some((p, c)) => (None, None, Some(to_matrix(p)), Some(c.to_vec())),
            None => (
                Some(to_matrix(m.weights())),
                Some(to_row(m.bias().iter())),
                None,
                None,
            ),
        };
        Self {
            kind: m.kind().into(),
            input_dim: m.input_dim(),
            output_dim: m.output_dim(),
            w,
            b,
            prototypes,
            classes,
        }
    }

    pub fn into_model(self, file: &str) -> Result<PortableModel> {
        let kind: PortableKind = self.kind.into();
        let missing = |field: &str| {
            schema(
                file,
                &format!("/{field}"),
                format!("{} models need {field}", kind.as_str()),
            )
        };
        match kind {
            PortableKind::Linear | PortableKind::Logistic => {
                let w = self.w.ok_or_else(|| missing("W"))?;
                let b = self.b.ok_or_else(|| missing("b"))?;
                let cols = w.first().map_or(self.input_dim, |r| r.len());
                let w = from_matrix(&w, cols, file, "W")?;
                Ok(PortableModel::from_parts_unchecked(
                    kind,
                    self.input_dim,
                    self.output_dim,
                    w,
                    from_row(&b).collect(),
                    None,
                    None,
                ))
            }
            PortableKind::Prototype => {
                let p = self.prototypes.ok_or_else(|| missing("prototypes"))?;
                let classes = self.classes.ok_or_else(|| missing("classes"))?;
                let cols = p.first().map_or(self.input_dim, |r| r.len());
                let p = from_matrix(&p, cols, file, "prototypes")?;
                Ok(PortableModel::from_parts_unchecked(
                    kind,
                    self.input_dim,
                    self.output_dim,
                    Array2::zeros((0, 0)),
                    Array1::zeros(0),
                    Some(p),
                    Some(classes),
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pointer_names_the_failing_field() {
        let err =
            parse_json::<ManifestStat>("x.json", br#"{"kind":"bogus","file":"a"}"#).unwrap_err();
        match err {
            Error::Schema { pointer, .. } => assert_eq!(pointer, "x.json#/kind"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn floats_round_trip_exactly() {
        let spec = StatSpec::rkme_table(
            RkmeSpec::new(
                array![0.1 + 0.2, 1.0 / 3.0],
                array![[1e-300, -2.5e17], [std::f64::consts::PI, 7.0]],
                KernelParams::default(),
            )
            .unwrap(),
        );
        let bytes = to_json(&StatDocument::from_spec(&spec));
        let back = parse_json::<StatDocument>(RKME_FILE, &bytes)
            .unwrap()
            .into_spec(RKME_FILE)
            .unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn nan_survives_as_null() {
        let spec = StatSpec::rkme_table(RkmeSpec::from_parts_unchecked(
            array![1.0],
            array![[f64::NAN, 0.0]],
            KernelParams::default(),
        ));
        let bytes = to_json(&StatDocument::from_spec(&spec));
        assert!(String::from_utf8_lossy(&bytes).contains("null"));
        let back = parse_json::<StatDocument>(RKME_FILE, &bytes)
            .unwrap()
            .into_spec(RKME_FILE)
            .unwrap();
        assert!(back.payload.z()[[0, 0]].is_nan());
        assert!(back.validate().is_err());
    }

    #[test]
    fn ragged_z_is_a_schema_error() {
        let doc = br#"{"kind":"rkme_table","gamma":0.1,"dim":2,"beta":[0.5,0.5],"Z":[[0,0],[1]]}"#;
        let err = parse_json::<StatDocument>(RKME_FILE, doc)
            .unwrap()
            .into_spec(RKME_FILE)
            .unwrap_err();
        assert!(
            matches!(err, Error::Schema { ref pointer, .. } if pointer == "stat_rkme.json#/Z/1"),
            "{err:?}"
        );
    }
}
