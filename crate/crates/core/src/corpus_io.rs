//! Parsing and serialization of all external data formats: Moses-style
//! n-best lists, judgment records (JSON lines), plain-text reference
//! corpora and metric model files.
//!
//! All text is whitespace-normalized at ingestion: trimmed, with internal
//! whitespace runs collapsed to single spaces. Casing is preserved.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Current model file format version.
pub const MODEL_VERSION: u32 = 1;

const NBEST_DELIM: &str = " ||| ";

/// Trim and collapse internal whitespace runs to single spaces.
pub fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One candidate translation from a decoder's n-best list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NBestEntry {
    pub segment_id: usize,
    pub hypothesis: String,
    /// 0-based position within the segment's list, in file order.
    pub decoder_rank: usize,
}

/// Origin of a judged pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Human,
    Pseudo,
}

/// The atomic training unit: for one segment, a reference plus a better
/// and a worse hypothesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgedPair {
    pub segment_id: usize,
    pub reference: String,
    pub better: String,
    pub worse: String,
    pub source_tag: SourceTag,
}

impl JudgedPair {
    /// Builds a pair with normalized text, rejecting invariant violations.
    pub fn new(
        segment_id: usize,
        reference: &str,
        better: &str,
        worse: &str,
        source_tag: SourceTag,
    ) -> Result<Self> {
        let reference = normalize_ws(reference);
        let better = normalize_ws(better);
        let worse = normalize_ws(worse);
        if reference.is_empty() {
            return Err(Error::Validation(format!(
                "segment {segment_id}: reference must be non-empty"
            )));
        }
        if better == worse {
            return Err(Error::Validation(format!(
                "segment {segment_id}: better and worse hypotheses are identical"
            )));
        }
        Ok(JudgedPair {
            segment_id,
            reference,
            better,
            worse,
            source_tag,
        })
    }
}

/// Per-feature standardization statistics. `std` is floored strictly above 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Applies `(x - mean) / std` componentwise.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mean.iter().zip(self.std.iter()))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// A trained linear metric: feature names, weights in standardized feature
/// space, the standardization statistics frozen at training time and the
/// training configuration fingerprint. There is no intercept; it cancels in
/// pairwise feature differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricModel {
    pub version: u32,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub standardization: Standardization,
    pub config: BTreeMap<String, String>,
}

impl MetricModel {
    /// Checks the structural invariants of a model.
    pub fn validate(&self) -> Result<()> {
        let n = self.feature_names.len();
        if self.weights.len() != n || self.standardization.mean.len() != n || self.standardization.std.len() != n {
            return Err(Error::Validation(format!(
                "model dimensions disagree: {} names, {} weights, {} means, {} stds",
                n,
                self.weights.len(),
                self.standardization.mean.len(),
                self.standardization.std.len()
            )));
        }
        if self.standardization.std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Validation("standardization std must be > 0".to_string()));
        }
        Ok(())
    }

    /// Stable hex fingerprint over the serialized model, used to record
    /// pseudo-label provenance.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("model serializes");
        let digest = Sha256::digest(&bytes);
        format!("{digest:x}")
    }
}

/// Parses a Moses-convention n-best stream: `sid ||| hypothesis ||| ...`,
/// splitting only on the exact 5-character delimiter. Decoder feature
/// scores and totals beyond the hypothesis field are ignored.
pub fn parse_nbest<R: BufRead>(reader: R) -> Result<Vec<NBestEntry>> {
    let mut entries = Vec::new();
    let mut rank_of_segment: Option<(usize, usize)> = None;
    let mut seen_segments = std::collections::HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(NBEST_DELIM).collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected at least 2 fields separated by \"{NBEST_DELIM}\""),
            });
        }
        let segment_id: usize = fields[0].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad segment id {:?}", fields[0].trim()),
        })?;
        let rank = match rank_of_segment {
            Some((seg, rank)) if seg == segment_id => rank + 1,
            _ => {
                if !seen_segments.insert(segment_id) {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("segment {segment_id} entries are not contiguous"),
                    });
                }
                0
            }
        };
        rank_of_segment = Some((segment_id, rank));
        entries.push(NBestEntry {
            segment_id,
            hypothesis: normalize_ws(fields[1]),
            decoder_rank: rank,
        });
    }
    Ok(entries)
}

/// Writes entries back in Moses convention, one per line.
pub fn serialize_nbest(entries: &[NBestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!("{}{}{}\n", e.segment_id, NBEST_DELIM, e.hypothesis));
    }
    out
}

#[derive(Serialize, Deserialize)]
struct JudgmentRecord {
    segment_id: usize,
    reference: String,
    better: String,
    worse: String,
}

/// Reads one JSON judgment record per line; all pairs are tagged human.
pub fn read_judgments<R: BufRead>(reader: R) -> Result<Vec<JudgedPair>> {
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JudgmentRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        pairs.push(JudgedPair::new(
            record.segment_id,
            &record.reference,
            &record.better,
            &record.worse,
            SourceTag::Human,
        )?);
    }
    Ok(pairs)
}

/// Writes pairs as one JSON record per line (the format `read_judgments`
/// accepts; the source tag is not stored, it is implied by the file's role).
pub fn write_judgments<W: Write>(writer: &mut W, pairs: &[JudgedPair]) -> Result<()> {
    for p in pairs {
        let record = JudgmentRecord {
            segment_id: p.segment_id,
            reference: p.reference.clone(),
            better: p.better.clone(),
            worse: p.worse.clone(),
        };
        serde_json::to_writer(&mut *writer, &record).map_err(|e| Error::Validation(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a reference corpus: one reference per line, line `i` belongs to
/// segment `i`. Lines are whitespace-normalized.
pub fn read_references<R: BufRead>(reader: R) -> Result<Vec<String>> {
    reader
        .lines()
        .map(|line| Ok(normalize_ws(&line?)))
        .collect()
}

/// Serializes a model as a JSON document. Floats use shortest-round-trip
/// decimal form, so `load_model(save_model(m)) == m` bit-exactly.
pub fn save_model<W: Write>(writer: &mut W, model: &MetricModel) -> Result<()> {
    model.validate()?;
    let text = serde_json::to_string_pretty(model).map_err(|e| Error::Validation(e.to_string()))?;
    writer.write_all(text.as_bytes())?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Loads and validates a model document, rejecting unknown versions.
pub fn load_model<R: BufRead>(reader: R) -> Result<MetricModel> {
    let model: MetricModel = serde_json::from_reader(reader).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    if model.version != MODEL_VERSION {
        return Err(Error::Incompatible(format!(
            "model file version {} is not supported (expected {MODEL_VERSION})",
            model.version
        )));
    }
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model_fixture() -> MetricModel {
        let names = crate::features::feature_names();
        let n = names.len();
        MetricModel {
            version: MODEL_VERSION,
            feature_names: names,
            weights: (0..n).map(|i| (i as f64) * 0.1 - 1.0).collect(),
            standardization: Standardization {
                mean: vec![0.5; n],
                std: vec![0.25; n],
            },
            config: BTreeMap::from([("seed".to_string(), "1".to_string())]),
        }
    }

    #[test]
    fn parse_nbest_splits_fields() {
        let input = "0 ||| the cat ||| d: -1.2 ||| -3.4";
        let entries = parse_nbest(input.as_bytes()).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].segment_id, 0);
        assert_eq!(entries[0].hypothesis, "the cat");
        assert_eq!(entries[0].decoder_rank, 0);
    }

    #[test]
    fn parse_nbest_positional_rank() {
        let entries = parse_nbest("0 ||| a\n0 ||| b".as_bytes()).unwrap();
        assert_eq!(entries[0].decoder_rank, 0);
        assert_eq!(entries[1].decoder_rank, 1);
    }

    #[test]
    fn parse_nbest_bad_segment_id() {
        let err = parse_nbest("x ||| a".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn parse_nbest_missing_delimiter() {
        let err = parse_nbest("0 | a".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn parse_nbest_rejects_non_contiguous_segments() {
        let err = parse_nbest("0 ||| a\n1 ||| b\n0 ||| c".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn parse_nbest_keeps_empty_hypothesis() {
        let entries = parse_nbest("0 |||   ||| -1.0".as_bytes()).unwrap();
        assert_eq!(entries[0].hypothesis, "");
    }

    #[test]
    fn read_judgments_passthrough() {
        let line = r#"{"segment_id":0,"reference":"a b","better":"a b","worse":"a"}"#;
        let pairs = read_judgments(line.as_bytes()).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].better, "a b");
        assert_eq!(pairs[0].worse, "a");
        assert_eq!(pairs[0].source_tag, SourceTag::Human);
    }

    #[test]
    fn read_judgments_rejects_equal_pair() {
        let line = r#"{"segment_id":0,"reference":"a","better":"x","worse":"x"}"#;
        assert!(matches!(
            read_judgments(line.as_bytes()).unwrap_err(),
            Error::Validation(_)
        ));
    }

    #[test]
    fn read_judgments_missing_key() {
        let line = r#"{"segment_id":0,"reference":"a","better":"x"}"#;
        assert!(matches!(
            read_judgments(line.as_bytes()).unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn read_judgments_preserves_order() {
        let lines = concat!(
            r#"{"segment_id":0,"reference":"r","better":"a","worse":"b"}"#,
            "\n",
            r#"{"segment_id":1,"reference":"r","better":"c","worse":"d"}"#,
        );
        let pairs = read_judgments(lines.as_bytes()).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].segment_id, 0);
        assert_eq!(pairs[1].segment_id, 1);
    }

    #[test]
    fn judgments_round_trip() {
        let pairs = vec![
            JudgedPair::new(0, "r one", "a", "b", SourceTag::Human).unwrap(),
            JudgedPair::new(3, "r two", "c d", "c", SourceTag::Human).unwrap(),
        ];
        let mut buf = Vec::new();
        write_judgments(&mut buf, &pairs).unwrap();
        let read_back = read_judgments(buf.as_slice()).unwrap();
        assert_eq!(read_back, pairs);
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let model = model_fixture();
        let mut buf = Vec::new();
        save_model(&mut buf, &model).unwrap();
        let loaded = load_model(buf.as_slice()).unwrap();
        assert_eq!(loaded, model);
        for (a, b) in loaded.weights.iter().zip(model.weights.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn load_model_rejects_unknown_version() {
        let mut model = model_fixture();
        model.version = 99;
        let text = serde_json::to_string(&model).unwrap();
        assert!(matches!(
            load_model(text.as_bytes()).unwrap_err(),
            Error::Incompatible(_)
        ));
    }

    #[test]
    fn load_model_rejects_truncated_file() {
        let model = model_fixture();
        let text = serde_json::to_string(&model).unwrap();
        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            load_model(truncated.as_bytes()).unwrap_err(),
            Error::Parse { .. }
        ));
    }

    proptest! {
        // parse_nbest ∘ serialize_nbest is the identity on well-formed lists
        #[test]
        fn nbest_round_trip(hyps in prop::collection::vec(prop::collection::vec("[a-z]{1,4}", 1..5), 1..5)) {
            let entries: Vec<NBestEntry> = hyps
                .iter()
                .enumerate()
                .map(|(seg, tokens)| NBestEntry {
                    segment_id: seg,
                    hypothesis: tokens.join(" "),
                    decoder_rank: 0,
                })
                .collect();
            let text = serialize_nbest(&entries);
            let parsed = parse_nbest(text.as_bytes()).unwrap();
            prop_assert_eq!(parsed, entries);
        }

        #[test]
        fn model_weights_survive_round_trip(ws in prop::collection::vec(-1e6f64..1e6, 26)) {
            let mut model = model_fixture();
            model.weights = ws;
            let mut buf = Vec::new();
            save_model(&mut buf, &model).unwrap();
            let loaded = load_model(buf.as_slice()).unwrap();
            prop_assert_eq!(loaded, model);
        }
    }
}
