use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_atomic, DatasetManifest, FeatureLayout, Question, Sample, MAX_TOKENS, PAD_TOKEN, TEXT_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    meta: Meta,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    #[serde(rename = "C")]
    classes: usize,
    d_model: usize,
    feature_layout: FeatureLayout,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    question_tokens: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    question_features: Option<Vec<f64>>,
    image_features: Vec<f64>,
    answer_class: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fold: Option<usize>,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

/// Parses dataset JSONL; `origin` only labels error messages.
pub fn parse_dataset(text: &str, origin: &Path) -> Result<DatasetManifest> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (hline, htext) = lines.next().ok_or_else(|| {
        Error::schema(format!(
            "{}: empty dataset file has no meta header",
            origin.display()
        ))
    })?;
    let header: Header = serde_json::from_str(htext).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        line: hline,
        message: format!("expected meta header: {e}"),
    })?;
    let meta = header.meta;
    if meta.classes == 0 || meta.d_model == 0 {
        return Err(Error::schema("header C and d_model must be positive"));
    }
    let image_dim = meta.feature_layout.image_dim(meta.d_model);

    let mut samples = Vec::new();
    let mut folds = Vec::new();
    for (line, raw) in lines {
        let rec: Record = serde_json::from_str(raw).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let bad = |msg: String| Error::schema(format!("{}:{line}: {msg}", origin.display()));

        let answer_class = usize::try_from(rec.answer_class)
            .ok()
            .filter(|&c| c < meta.classes)
            .ok_or_else(|| {
                bad(format!(
                    "answer_class {} outside [0, {})",
                    rec.answer_class, meta.classes
                ))
            })?;
        if rec.image_features.len() != image_dim {
            return Err(bad(format!(
                "image_features has {} values, layout expects {image_dim}",
                rec.image_features.len()
            )));
        }
        if rec.image_features.iter().any(|v| !v.is_finite()) {
            return Err(bad("image_features contains non-finite values".into()));
        }
        let question = match (rec.question_tokens, rec.question_features) {
            (Some(tokens), None) => {
                let mut ids = Vec::with_capacity(MAX_TOKENS);
                for t in tokens.into_iter().take(MAX_TOKENS) {
                    ids.push(u32::try_from(t).map_err(|_| bad(format!("token id {t} is invalid")))?);
                }
                ids.resize(MAX_TOKENS, PAD_TOKEN);
                Question::Tokens(ids)
            }
            (None, Some(features)) => {
                if features.len() != TEXT_DIM {
                    return Err(bad(format!(
                        "question_features has {} values, expected {TEXT_DIM}",
                        features.len()
                    )));
                }
                if features.iter().any(|v| !v.is_finite()) {
                    return Err(bad("question_features contains non-finite values".into()));
                }
                Question::Features(features)
            }
            _ => {
                return Err(bad(
                    "exactly one of question_tokens / question_features is required".into(),
                ))
            }
        };
        folds.push(rec.fold);
        samples.push(Sample {
            id: rec.id,
            image_id: rec.image_id,
            image_features: rec.image_features,
            question,
            answer_class,
        });
    }

    let folds = validate_folds(&samples, &folds)?;
    Ok(DatasetManifest {
        samples,
        classes: meta.classes,
        d_model: meta.d_model,
        layout: meta.feature_layout,
        folds,
    })
}

fn validate_folds(samples: &[Sample], folds: &[Option<usize>]) -> Result<Option<Vec<usize>>> {
    let present = folds.iter().filter(|f| f.is_some()).count();
    if present == 0 {
        return Ok(None);
    }
    if present != folds.len() {
        return Err(Error::schema(
            "fold given for some samples but not all".to_string(),
        ));
    }
    let folds: Vec<usize> = folds.iter().map(|f| f.expect("checked")).collect();
    let mut by_image: HashMap<&str, usize> = HashMap::new();
    for (s, &f) in samples.iter().zip(&folds) {
        match by_image.insert(&s.image_id, f) {
            Some(prev) if prev != f => {
                return Err(Error::schema(format!(
                    "image {} appears in folds {prev} and {f}",
                    s.image_id
                )))
            }
            _ => {}
        }
    }
    Ok(Some(folds))
}

fn to_record(s: &Sample, fold: Option<usize>) -> Record {
    let (question_tokens, question_features) = match &s.question {
        Question::Tokens(t) => (Some(t.iter().map(|&v| v as i64).collect()), None),
        Question::Features(f) => (None, Some(f.clone())),
    };
    Record {
        id: s.id.clone(),
        image_id: s.image_id.clone(),
        question_tokens,
        question_features,
        image_features: s.image_features.clone(),
        answer_class: s.answer_class as i64,
        fold,
    }
}

/// Serializes a manifest to the JSONL layout read by [`load_dataset`].
pub fn dataset_to_jsonl(m: &DatasetManifest) -> Result<String> {
    let header = Header {
        meta: Meta {
            classes: m.classes,
            d_model: m.d_model,
            feature_layout: m.layout,
        },
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for (i, s) in m.samples.iter().enumerate() {
        let fold = m.folds.as_ref().map(|f| f[i]);
        out.push_str(&serde_json::to_string(&to_record(s, fold))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, m: &DatasetManifest) -> Result<()> {
    write_atomic(path.as_ref(), dataset_to_jsonl(m)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> &'static Path {
        Path::new("fixture.jsonl")
    }

    const HEADER: &str = r#"{"meta":{"C":3,"d_model":4,"feature_layout":"precomputed"}}"#;

    fn features_line(id: &str, image: &str, class: i64) -> String {
        let q: Vec<String> = (0..TEXT_DIM).map(|i| format!("{}", i as f64 * 0.01)).collect();
        format!(
            r#"{{"id":"{id}","image_id":"{image}","question_features":[{}],"image_features":[1.0,2.0,3.0,4.0],"answer_class":{class}}}"#,
            q.join(",")
        )
    }

    #[test]
    fn empty_file_needs_header() {
        assert!(matches!(parse_dataset("", origin()), Err(Error::Schema(_))));
        let m = parse_dataset(HEADER, origin()).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.classes, 3);
    }

    #[test]
    fn two_line_fixture() {
        let text = format!(
            "{HEADER}\n{}\n{}\n",
            features_line("a", "img1", 0),
            r#"{"id":"b","image_id":"img2","question_tokens":[5,7,9],"image_features":[0.0,0.5,0.0,0.5],"answer_class":2}"#
        );
        let m = parse_dataset(&text, origin()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.samples[0].id, "a");
        assert_eq!(m.samples[1].answer_class, 2);
        match &m.samples[1].question {
            Question::Tokens(t) => {
                assert_eq!(t.len(), MAX_TOKENS);
                assert_eq!(&t[..4], &[5, 7, 9, 0]);
            }
            q => panic!("unexpected {q:?}"),
        }
        assert!(m.folds.is_none());
    }

    #[test]
    fn tokens_truncate_to_max_length() {
        let toks: Vec<String> = (1..=80).map(|i| i.to_string()).collect();
        let text = format!(
            "{HEADER}\n{{\"id\":\"a\",\"image_id\":\"i\",\"question_tokens\":[{}],\"image_features\":[0,0,0,1],\"answer_class\":0}}",
            toks.join(",")
        );
        let m = parse_dataset(&text, origin()).unwrap();
        let Question::Tokens(t) = &m.samples[0].question else { panic!() };
        assert_eq!(t.len(), MAX_TOKENS);
        assert_eq!(t[49], 50);
    }

    #[test]
    fn class_out_of_range_is_schema_error() {
        let text = format!("{HEADER}\n{}", features_line("a", "i", 3));
        assert!(matches!(parse_dataset(&text, origin()), Err(Error::Schema(_))));
        let text = format!("{HEADER}\n{}", features_line("a", "i", -1));
        assert!(matches!(parse_dataset(&text, origin()), Err(Error::Schema(_))));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{HEADER}\n{}\n{{not json", features_line("a", "i", 0));
        match parse_dataset(&text, origin()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_schema_error() {
        let text = format!(
            "{HEADER}\n{}",
            r#"{"id":"a","image_id":"i","question_tokens":[1],"image_features":[1.0,2.0],"answer_class":0}"#
        );
        assert!(matches!(parse_dataset(&text, origin()), Err(Error::Schema(_))));
        let text = format!(
            "{HEADER}\n{}",
            r#"{"id":"a","image_id":"i","question_features":[1.0],"image_features":[1,2,3,4],"answer_class":0}"#
        );
        assert!(matches!(parse_dataset(&text, origin()), Err(Error::Schema(_))));
    }

    #[test]
    fn both_or_neither_question_field_is_rejected() {
        let text = format!(
            "{HEADER}\n{}",
            r#"{"id":"a","image_id":"i","image_features":[1,2,3,4],"answer_class":0}"#
        );
        assert!(matches!(parse_dataset(&text, origin()), Err(Error::Schema(_))));
    }

    #[test]
    fn folds_must_group_images() {
        let mut a = features_line("a", "img", 0);
        let mut b = features_line("b", "img", 1);
        a.insert_str(a.len() - 1, r#","fold":0"#);
        b.insert_str(b.len() - 1, r#","fold":1"#);
        let text = format!("{HEADER}\n{a}\n{b}");
        assert!(matches!(parse_dataset(&text, origin()), Err(Error::Schema(_))));
    }

    #[test]
    fn write_then_load_reproduces_manifest() {
        let text = format!(
            "{HEADER}\n{}\n{}\n",
            features_line("a", "img1", 0),
            r#"{"id":"b","image_id":"img2","question_tokens":[5],"image_features":[0.1,0.2,0.30000000000000004,1e-17],"answer_class":1}"#
        );
        let m = parse_dataset(&text, origin()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_dataset(&path, &m).unwrap();
        let again = load_dataset(&path).unwrap();
        assert_eq!(m, again);
        write_dataset(&path, &again).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), m);
    }
}
