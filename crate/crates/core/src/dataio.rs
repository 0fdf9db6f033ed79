//! Dataset ingestion, statement parsing, OCR export adapter and checkpoints.
//!
//! Dataset files are JSON Lines, one image per line:
//!
//! ```json
//! {"id": "img1", "object_features": [[0.1, 0.2]], "symbol_features": [],
//!  "ocr_tokens": ["TASTE", "THE", "FEELING"],
//!  "statements": [{"text": "I should drink Coke because it is refreshing", "label": 1}]}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::lexical::TfIdfModel;
use crate::ranker::RankingWeights;
use crate::textsem::SceneText;
use crate::token;
use crate::vissem::{ProjectionModel, VisualFeatures};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
    Unlabeled,
}

/// A candidate statement with its normalized tokens and action/reason parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub text: String,
    pub tokens: Vec<String>,
    pub action_tokens: Vec<String>,
    pub reason_tokens: Vec<String>,
    /// Whether a usable "because" split was found.
    pub split: bool,
    pub label: Label,
}

impl Statement {
    pub fn new(text: impl Into<String>, label: Label) -> Self {
        let text = text.into();
        let tokens = token::tokenize(&text);
        let (action_tokens, reason_tokens, split) = split_tokens(&tokens);
        Statement {
            text,
            tokens,
            action_tokens,
            reason_tokens,
            split,
            label,
        }
    }
}

fn split_tokens(tokens: &[String]) -> (Vec<String>, Vec<String>, bool) {
    if let Some(pos) = tokens.iter().position(|t| t == "because") {
        let (action, reason) = (&tokens[..pos], &tokens[pos + 1..]);
        if !action.is_empty() && !reason.is_empty() {
            return (action.to_vec(), reason.to_vec(), true);
        }
    }
    (tokens.to_vec(), tokens.to_vec(), false)
}

/// Splits at the first standalone "because". Without a split, or when either
/// side would be empty, both parts are the full token list.
pub fn parse_action_reason(text: &str) -> (Vec<String>, Vec<String>) {
    let (a, r, _) = split_tokens(&token::tokenize(text));
    (a, r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub features: VisualFeatures,
    pub scene: SceneText,
    pub statements: Vec<Statement>,
}

impl ImageRecord {
    pub fn positive_indices(&self) -> BTreeSet<usize> {
        self.statements
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == Label::Positive)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Per-channel patch dimensions. A channel never observed has dimension 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FeatureDims {
    pub object: usize,
    pub symbol: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<ImageRecord>,
    pub dims: FeatureDims,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Positive statement indices per image id.
    pub fn gold(&self) -> BTreeMap<String, BTreeSet<usize>> {
        self.records
            .iter()
            .map(|r| (r.id.clone(), r.positive_indices()))
            .collect()
    }

    /// Documents for tf-idf fitting: every candidate statement plus one
    /// document of scene tokens per image.
    pub fn tfidf_documents(&self) -> Vec<Vec<String>> {
        let mut docs = Vec::new();
        for r in &self.records {
            docs.extend(r.statements.iter().map(|s| s.tokens.clone()));
            docs.push(r.scene.normalized());
        }
        docs
    }

    pub fn fit_tfidf(&self) -> Result<TfIdfModel> {
        TfIdfModel::fit(&self.tfidf_documents())
    }

    /// Splits off the records from `at` onward; both halves keep the dims.
    pub fn split_at(&self, at: usize) -> (Dataset, Dataset) {
        let at = at.min(self.records.len());
        (
            Dataset {
                records: self.records[..at].to_vec(),
                dims: self.dims,
            },
            Dataset {
                records: self.records[at..].to_vec(),
                dims: self.dims,
            },
        )
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut dims: [Option<(usize, usize)>; 2] = [None, None];
        let mut seen = HashSet::new();
        let mut records = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let rec = parse_record(&value).map_err(|message| Error::Parse {
                line: lineno,
                message,
            })?;
            if !seen.insert(rec.id.clone()) {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("duplicate id {:?}", rec.id),
                });
            }
            for (slot, (patches, name)) in dims.iter_mut().zip([
                (&rec.features.object_patches, "object"),
                (&rec.features.symbol_patches, "symbol"),
            ]) {
                for p in patches {
                    match *slot {
                        None => *slot = Some((p.len(), lineno)),
                        Some((d, at)) if d != p.len() => {
                            return Err(Error::dim(format!(
                                "line {lineno}: {name} feature dimension {} differs from {d} established at line {at}",
                                p.len()
                            )))
                        }
                        _ => {}
                    }
                }
            }
            records.push(rec);
        }
        Ok(Dataset {
            records,
            dims: FeatureDims {
                object: dims[0].map_or(0, |d| d.0),
                symbol: dims[1].map_or(0, |d| d.0),
            },
        })
    }

    pub fn to_writer<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, &record_to_json(r))?;
            w.write_all(b"\n").map_err(|e| Error::io("<dataset>", e))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.to_writer(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 json")
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_reader(file)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, dataset.to_jsonl()).map_err(|e| Error::io(path, e))
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, String> {
    obj.get(name).ok_or_else(|| format!("missing field {name}"))
}

fn parse_matrix(value: &Value, path: &str) -> Result<Vec<Vec<f64>>, String> {
    let rows = value
        .as_array()
        .ok_or_else(|| format!("{path}: expected array of arrays"))?;
    let mut out = Vec::with_capacity(rows.len());
    let mut width = None;
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| format!("{path}[{i}]: expected array of numbers"))?;
        let v = row
            .iter()
            .enumerate()
            .map(|(j, x)| {
                x.as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| format!("{path}[{i}][{j}]: expected finite number"))
            })
            .collect::<Result<Vec<f64>, String>>()?;
        if v.is_empty() {
            return Err(format!("{path}[{i}]: empty feature vector"));
        }
        match width {
            None => width = Some(v.len()),
            Some(w) if w != v.len() => {
                return Err(format!(
                    "{path}[{i}]: dimension {} differs from {w} within the record",
                    v.len()
                ))
            }
            _ => {}
        }
        out.push(v);
    }
    Ok(out)
}

fn parse_record(value: &Value) -> Result<ImageRecord, String> {
    let obj = value.as_object().ok_or("expected a JSON object")?;
    let id = field(obj, "id")?
        .as_str()
        .ok_or("id: expected string")?
        .to_string();
    if id.is_empty() {
        return Err("id: must be non-empty".into());
    }
    let object_patches = parse_matrix(field(obj, "object_features")?, "object_features")?;
    let symbol_patches = parse_matrix(field(obj, "symbol_features")?, "symbol_features")?;
    let tokens = field(obj, "ocr_tokens")?
        .as_array()
        .ok_or("ocr_tokens: expected array of strings")?
        .iter()
        .enumerate()
        .map(|(i, t)| {
            t.as_str()
                .map(str::to_string)
                .ok_or_else(|| format!("ocr_tokens[{i}]: expected string"))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let statements = field(obj, "statements")?
        .as_array()
        .ok_or("statements: expected array")?
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let s = s
                .as_object()
                .ok_or_else(|| format!("statements[{i}]: expected object"))?;
            let text = s
                .get("text")
                .ok_or_else(|| format!("statements[{i}]: missing field text"))?
                .as_str()
                .ok_or_else(|| format!("statements[{i}].text: expected string"))?;
            let label = match s.get("label") {
                None | Some(Value::Null) => Label::Unlabeled,
                Some(v) => match v.as_u64() {
                    Some(1) => Label::Positive,
                    Some(0) => Label::Negative,
                    _ => return Err(format!("statements[{i}].label: expected 0 or 1")),
                },
            };
            Ok(Statement::new(text, label))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(ImageRecord {
        id,
        features: VisualFeatures {
            object_patches,
            symbol_patches,
        },
        scene: SceneText::new(tokens),
        statements,
    })
}

fn record_to_json(r: &ImageRecord) -> Value {
    let statements: Vec<Value> = r
        .statements
        .iter()
        .map(|s| match s.label {
            Label::Positive => json!({"text": s.text, "label": 1}),
            Label::Negative => json!({"text": s.text, "label": 0}),
            Label::Unlabeled => json!({"text": s.text}),
        })
        .collect();
    json!({
        "id": r.id,
        "object_features": r.features.object_patches,
        "symbol_features": r.features.symbol_patches,
        "ocr_tokens": r.scene.tokens(),
        "statements": statements,
    })
}

/// Scene text read from an OCR export, plus any non-fatal problems.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OcrImport {
    pub scene: SceneText,
    pub warnings: Vec<String>,
}

/// Reads word-level annotations from an OCR export.
///
/// Accepts `{"textAnnotations": [...]}`, `{"responses": [{"textAnnotations": [...]}]}`
/// or a bare annotation array. The first element is the full-text block and is
/// skipped; each later element contributes its `description`.
pub fn parse_ocr_json(value: &Value) -> OcrImport {
    let annotations = value
        .get("textAnnotations")
        .or_else(|| {
            value
                .get("responses")
                .and_then(|r| r.get(0))
                .and_then(|r| r.get("textAnnotations"))
        })
        .or(Some(value))
        .and_then(Value::as_array);
    let Some(annotations) = annotations else {
        return OcrImport {
            scene: SceneText::default(),
            warnings: vec!["no text annotation array found".into()],
        };
    };
    let mut warnings = Vec::new();
    let mut tokens = Vec::new();
    for (i, a) in annotations.iter().enumerate().skip(1) {
        match a.get("description").and_then(Value::as_str) {
            Some(d) => tokens.push(d.to_string()),
            None => warnings.push(format!("annotation {i} has no description")),
        }
    }
    OcrImport {
        scene: SceneText::new(tokens),
        warnings,
    }
}

pub fn parse_ocr_export(path: impl AsRef<Path>) -> Result<OcrImport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    Ok(parse_ocr_json(&value))
}

pub const CHECKPOINT_FORMAT: &str = "adrank-checkpoint";
pub const CHECKPOINT_VERSION: &str = "1";

/// Everything `rank` needs besides data and embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: ProjectionModel,
    pub tfidf: TfIdfModel,
    pub weights: RankingWeights,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    version: String,
    #[serde(flatten)]
    body: Checkpoint,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let doc = CheckpointDoc {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION.into(),
            body: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parse_err = |e: serde_json::Error| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        };
        let value: Value = serde_json::from_str(text).map_err(parse_err)?;
        match value.get("format").and_then(Value::as_str) {
            Some(CHECKPOINT_FORMAT) => {}
            other => {
                return Err(Error::Format(format!(
                    "not a checkpoint (format {other:?})"
                )))
            }
        }
        let version = value
            .get("version")
            .and_then(Value::as_str)
            .unwrap_or_default();
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version.into(),
                expected: CHECKPOINT_VERSION.into(),
            });
        }
        let doc: CheckpointDoc = serde_json::from_value(value).map_err(parse_err)?;
        doc.body.model.validate()?;
        doc.body.tfidf.validate()?;
        Ok(doc.body)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn save_model(
    model: &ProjectionModel,
    tfidf: &TfIdfModel,
    path: impl AsRef<Path>,
) -> Result<()> {
    Checkpoint {
        model: model.clone(),
        tfidf: tfidf.clone(),
        weights: RankingWeights::default(),
    }
    .save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ProjectionModel, TfIdfModel)> {
    let c = Checkpoint::load(path)?;
    Ok((c.model, c.tfidf))
}
