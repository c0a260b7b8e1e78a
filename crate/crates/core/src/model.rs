//! Minimal pairs, their three-level taxonomy, dataset ingestion, layer
//! selection and seeded subsampling.
//!
//! A [`Dataset`] fixes the canonical sample order. Every vector set and
//! similarity matrix downstream refers to samples by their position in that
//! order, and carries the dataset's `content_hash` so mismatched artifacts can
//! be rejected.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::digest::Digest;
use crate::rng::{sample_without_replacement, SampleRng};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: String },
    #[error("line {line}: field `{field}` is empty")]
    EmptyField { line: usize, field: String },
    #[error("line {line}: duplicate pair_id `{pair_id}`")]
    DuplicatePairId { line: usize, pair_id: String },
    #[error("line {line}: pair `{pair_id}` has identical good and bad sentences")]
    IdenticalSentences { line: usize, pair_id: String },
    #[error("line {line}: phenomenon `{uid}` already mapped to a different term/field")]
    TaxonomyConflict { line: usize, uid: String },
    #[error("unknown adapter `{0}` (expected canonical, blimp, sling or rublimp)")]
    UnknownAdapter(String),
    #[error("unknown taxonomy level `{0}` (expected phenomenon, term or field)")]
    UnknownLevel(String),
    #[error("model has {0} layers; layer sampling needs at least 6")]
    TooFewLayers(usize),
    #[error("pool of {0} samples is too small; k = 1% needs at least 100")]
    PoolTooSmall(usize),
    #[error("cannot subsample an empty dataset")]
    EmptyDataset,
    #[error("fraction {0} is outside (0, 1]")]
    FractionOutOfRange(f64),
    #[error("fraction {fraction} of {size} samples selects nothing")]
    EmptySelection { fraction: f64, size: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalPair {
    pub pair_id: String,
    pub language: String,
    pub phenomenon_uid: String,
    pub sentence_good: String,
    pub sentence_bad: String,
}

/// Levels of the linguistic taxonomy, finest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Phenomenon,
    Term,
    Field,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Phenomenon, Level::Term, Level::Field];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Phenomenon => "phenomenon",
            Level::Term => "term",
            Level::Field => "field",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "phenomenon" | "1" => Ok(Level::Phenomenon),
            "term" | "2" => Ok(Level::Term),
            "field" | "3" => Ok(Level::Field),
            other => Err(ModelError::UnknownLevel(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonEntry {
    pub phenomenon: String,
    pub term: String,
    pub field: String,
}

impl TaxonEntry {
    pub fn label(&self, level: Level) -> &str {
        match level {
            Level::Phenomenon => &self.phenomenon,
            Level::Term => &self.term,
            Level::Field => &self.field,
        }
    }
}

/// phenomenon uid → (phenomenon, term, field).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    entries: BTreeMap<String, TaxonEntry>,
}

impl Taxonomy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a row. Returns false if `uid` is already mapped to a
    /// different entry.
    pub fn insert(&mut self, uid: &str, entry: TaxonEntry) -> bool {
        match self.entries.get(uid) {
            Some(existing) => *existing == entry,
            None => {
                self.entries.insert(uid.to_owned(), entry);
                true
            }
        }
    }

    pub fn get(&self, uid: &str) -> Option<&TaxonEntry> {
        self.entries.get(uid)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TaxonEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub dataset_id: String,
    pairs: Vec<MinimalPair>,
    taxonomy: Taxonomy,
    content_hash: Digest,
}

impl Dataset {
    /// Builds a dataset, checking every pair invariant. Line numbers in
    /// errors are 1-based positions in `pairs`.
    pub fn new(
        dataset_id: impl Into<String>,
        pairs: Vec<MinimalPair>,
        taxonomy: Taxonomy,
    ) -> Result<Self, ModelError> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for (n, p) in pairs.iter().enumerate() {
            let line = n + 1;
            if !seen.insert(p.pair_id.as_str()) {
                return Err(ModelError::DuplicatePairId {
                    line,
                    pair_id: p.pair_id.clone(),
                });
            }
            if p.sentence_good == p.sentence_bad {
                return Err(ModelError::IdenticalSentences {
                    line,
                    pair_id: p.pair_id.clone(),
                });
            }
            if taxonomy.get(&p.phenomenon_uid).is_none() {
                return Err(ModelError::Malformed {
                    line,
                    message: format!("phenomenon `{}` not in taxonomy", p.phenomenon_uid),
                });
            }
        }
        let content_hash = Digest::of_ids(pairs.iter().map(|p| p.pair_id.as_str()));
        Ok(Self {
            dataset_id: dataset_id.into(),
            pairs,
            taxonomy,
            content_hash,
        })
    }

    pub fn pairs(&self) -> &[MinimalPair] {
        &self.pairs
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn content_hash(&self) -> Digest {
        self.content_hash
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Per-sample class label at `level`, in canonical order.
    pub fn labels(&self, level: Level) -> Vec<&str> {
        self.pairs
            .iter()
            .map(|p| {
                self.taxonomy
                    .get(&p.phenomenon_uid)
                    .expect("taxonomy checked at construction")
                    .label(level)
            })
            .collect()
    }

    pub fn taxon(&self, index: usize) -> &TaxonEntry {
        self.taxonomy
            .get(&self.pairs[index].phenomenon_uid)
            .expect("taxonomy checked at construction")
    }

    /// Writes the dataset as canonical records, one JSON object per line.
    pub fn write_canonical<W: Write>(&self, mut out: W) -> io::Result<()> {
        for p in &self.pairs {
            let t = self.taxon_of(p);
            let rec = CanonicalRecord {
                pair_id: &p.pair_id,
                language: &p.language,
                phenomenon_uid: &p.phenomenon_uid,
                sentence_good: &p.sentence_good,
                sentence_bad: &p.sentence_bad,
                term: &t.term,
                field: &t.field,
                phenomenon: (t.phenomenon != p.phenomenon_uid).then_some(t.phenomenon.as_str()),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    fn taxon_of(&self, p: &MinimalPair) -> &TaxonEntry {
        self.taxonomy
            .get(&p.phenomenon_uid)
            .expect("taxonomy checked at construction")
    }
}

#[derive(Serialize)]
struct CanonicalRecord<'a> {
    pair_id: &'a str,
    language: &'a str,
    phenomenon_uid: &'a str,
    sentence_good: &'a str,
    sentence_bad: &'a str,
    term: &'a str,
    field: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    phenomenon: Option<&'a str>,
}

/// Source corpora the ingester understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adapter {
    Canonical,
    Blimp,
    Sling,
    Rublimp,
}

impl FromStr for Adapter {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "canonical" => Ok(Adapter::Canonical),
            "blimp" => Ok(Adapter::Blimp),
            "sling" => Ok(Adapter::Sling),
            "rublimp" => Ok(Adapter::Rublimp),
            _ => Err(ModelError::UnknownAdapter(s.to_owned())),
        }
    }
}

impl fmt::Display for Adapter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Adapter::Canonical => "canonical",
            Adapter::Blimp => "blimp",
            Adapter::Sling => "sling",
            Adapter::Rublimp => "rublimp",
        })
    }
}

/// Source field names for one corpus.
#[derive(Debug, Clone, Copy)]
pub struct FieldMap {
    /// `None`: ids are synthesized as `<uid>:<ordinal within uid>`.
    pub pair_id: Option<&'static str>,
    /// Whether the source id is only unique within its phenomenon, so the
    /// canonical id gets the uid as a prefix.
    pub id_scoped_to_uid: bool,
    pub pair_id_required: bool,
    pub language: Option<&'static str>,
    pub default_language: &'static str,
    pub good: &'static str,
    pub bad: &'static str,
    pub uid: &'static str,
    /// Optional human-readable level-1 label; the uid is used when absent.
    pub phenomenon: Option<&'static str>,
    pub term: &'static str,
    pub field: &'static str,
    /// Used when the source has no field column.
    pub default_field: Option<&'static str>,
}

impl Adapter {
    pub fn field_map(self) -> FieldMap {
        match self {
            Adapter::Canonical => FieldMap {
                pair_id: Some("pair_id"),
                id_scoped_to_uid: false,
                pair_id_required: true,
                language: Some("language"),
                default_language: "",
                good: "sentence_good",
                bad: "sentence_bad",
                uid: "phenomenon_uid",
                phenomenon: Some("phenomenon"),
                term: "term",
                field: "field",
                default_field: None,
            },
            Adapter::Blimp => FieldMap {
                pair_id: Some("pairID"),
                id_scoped_to_uid: true,
                pair_id_required: true,
                language: None,
                default_language: "en",
                good: "sentence_good",
                bad: "sentence_bad",
                uid: "UID",
                phenomenon: None,
                term: "linguistics_term",
                field: "field",
                default_field: None,
            },
            Adapter::Sling => FieldMap {
                pair_id: Some("pair_id"),
                id_scoped_to_uid: true,
                pair_id_required: false,
                language: None,
                default_language: "zh",
                good: "sentence_good",
                bad: "sentence_bad",
                uid: "paradigm",
                phenomenon: None,
                term: "phenomenon",
                field: "field",
                default_field: None,
            },
            Adapter::Rublimp => FieldMap {
                pair_id: Some("id"),
                id_scoped_to_uid: false,
                pair_id_required: false,
                language: None,
                default_language: "ru",
                good: "source_sentence",
                bad: "target_sentence",
                uid: "PID",
                phenomenon: None,
                term: "phenomenon",
                field: "field",
                default_field: Some("unspecified"),
            },
        }
    }
}

fn take_str(
    obj: &Map<String, Value>,
    key: &str,
    line: usize,
    required: bool,
) -> Result<Option<String>, ModelError> {
    let s = match obj.get(key) {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        Some(other) => {
            return Err(ModelError::Malformed {
                line,
                message: format!("field `{key}` must be a string, got {other}"),
            })
        }
    };
    match s {
        None if required => Err(ModelError::MissingField {
            line,
            field: key.to_owned(),
        }),
        Some(s) if s.trim().is_empty() => Err(ModelError::EmptyField {
            line,
            field: key.to_owned(),
        }),
        other => Ok(other),
    }
}

/// Parses line-delimited JSON records through `adapter` into a [`Dataset`]
/// whose order is the input order. Blank lines are skipped; reported line
/// numbers are physical 1-based lines.
pub fn parse_minimal_pairs<R: BufRead>(
    reader: R,
    adapter: Adapter,
    dataset_id: &str,
) -> Result<Dataset, ModelError> {
    let map = adapter.field_map();
    let mut pairs = Vec::new();
    let mut taxonomy = Taxonomy::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut ordinal: HashMap<String, usize> = HashMap::new();

    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| ModelError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let Value::Object(obj) = value else {
            return Err(ModelError::Malformed {
                line: line_no,
                message: "record is not a JSON object".into(),
            });
        };
        let req = |key: &str| {
            take_str(&obj, key, line_no, true).map(|v| v.expect("required field present"))
        };

        let good = req(map.good)?;
        let bad = req(map.bad)?;
        let uid = req(map.uid)?;
        let term = req(map.term)?;
        let field = match map.default_field {
            Some(default) => take_str(&obj, map.field, line_no, false)?
                .unwrap_or_else(|| default.to_owned()),
            None => req(map.field)?,
        };
        let phenomenon = match map.phenomenon {
            Some(key) => take_str(&obj, key, line_no, false)?,
            None => None,
        }
        .unwrap_or_else(|| uid.clone());
        let language = match map.language {
            Some(key) => req(key)?,
            None => map.default_language.to_owned(),
        };

        let count = ordinal.entry(uid.clone()).or_insert(0);
        let source_id = match map.pair_id {
            Some(key) => take_str(&obj, key, line_no, map.pair_id_required)?,
            None => None,
        };
        let pair_id = match source_id {
            Some(id) if map.id_scoped_to_uid => format!("{uid}:{id}"),
            Some(id) => id,
            None => format!("{uid}:{count}"),
        };
        *count += 1;

        if !seen.insert(pair_id.clone()) {
            return Err(ModelError::DuplicatePairId {
                line: line_no,
                pair_id,
            });
        }
        if good == bad {
            return Err(ModelError::IdenticalSentences {
                line: line_no,
                pair_id,
            });
        }
        let entry = TaxonEntry {
            phenomenon,
            term,
            field,
        };
        if !taxonomy.insert(&uid, entry) {
            return Err(ModelError::TaxonomyConflict { line: line_no, uid });
        }
        pairs.push(MinimalPair {
            pair_id,
            language,
            phenomenon_uid: uid,
            sentence_good: good,
            sentence_bad: bad,
        });
    }

    Dataset::new(dataset_id, pairs, taxonomy)
}

/// The five evenly spaced hidden-state layers `⌊i·L/6⌋`, `i = 1..=5`.
pub fn sample_layer_indices(total_layers: usize) -> Result<[usize; 5], ModelError> {
    if total_layers < 6 {
        return Err(ModelError::TooFewLayers(total_layers));
    }
    Ok(std::array::from_fn(|i| (i + 1) * total_layers / 6))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSelection {
    pub source_hash: Digest,
    pub seed: u64,
    pub indices: Vec<usize>,
}

impl SampleSelection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Number of samples selected by `fraction` of `size`. A 1e-9 guard keeps
/// products like `0.57 * 100` from flooring to one below the intended count.
pub fn selection_count(size: usize, fraction: f64) -> Result<usize, ModelError> {
    if size == 0 {
        return Err(ModelError::EmptyDataset);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ModelError::FractionOutOfRange(fraction));
    }
    let count = ((fraction * size as f64) + 1e-9).floor() as usize;
    if count == 0 {
        return Err(ModelError::EmptySelection { fraction, size });
    }
    Ok(count.min(size))
}

/// Draws `⌊fraction·size⌋` indices uniformly without replacement.
pub fn subsample_indices(
    size: usize,
    source_hash: Digest,
    fraction: f64,
    seed: u64,
) -> Result<SampleSelection, ModelError> {
    let count = selection_count(size, fraction)?;
    let mut rng = SampleRng::new(seed);
    Ok(SampleSelection {
        source_hash,
        seed,
        indices: sample_without_replacement(size, count, &mut rng),
    })
}

pub fn subsample(dataset: &Dataset, fraction: f64, seed: u64) -> Result<SampleSelection, ModelError> {
    subsample_indices(dataset.len(), dataset.content_hash(), fraction, seed)
}

/// Neighborhood size for mutual k-NN: 1% of the pool, rounded.
pub fn k_from_pool(pool_size: usize) -> Result<usize, ModelError> {
    if pool_size < 100 {
        return Err(ModelError::PoolTooSmall(pool_size));
    }
    Ok(((pool_size as f64 / 100.0).round() as usize).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical_line(id: &str, uid: &str) -> String {
        format!(
            r#"{{"pair_id":"{id}","language":"en","phenomenon_uid":"{uid}","sentence_good":"The dog barks.","sentence_bad":"The dog bark.","term":"agreement","field":"morphology"}}"#
        )
    }

    #[test]
    fn canonical_records_parse_in_order() {
        let input = format!("{}\n{}\n", canonical_line("a", "sv"), canonical_line("b", "sv"));
        let ds = parse_minimal_pairs(input.as_bytes(), Adapter::Canonical, "t").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.pairs()[0].pair_id, "a");
        assert_eq!(ds.pairs()[1].pair_id, "b");
        let again = parse_minimal_pairs(input.as_bytes(), Adapter::Canonical, "t").unwrap();
        assert_eq!(ds.content_hash(), again.content_hash());
        assert_eq!(ds.content_hash(), Digest::of_ids(["a", "b"]));
    }

    #[test]
    fn blimp_record_maps_uid_term_and_field() {
        let line = r#"{"sentence_good": "Who should Derek hug after shocking Richard?", "sentence_bad": "Who should Derek hug Richard after shocking?", "field": "syntax", "linguistics_term": "island_effects", "UID": "adjunct_island", "simple_LM_method": true, "one_prefix_method": false, "two_prefix_method": false, "lexically_identical": true, "pairID": "0"}"#;
        let ds = parse_minimal_pairs(line.as_bytes(), Adapter::Blimp, "blimp").unwrap();
        let p = &ds.pairs()[0];
        assert_eq!(p.phenomenon_uid, "adjunct_island");
        assert_eq!(p.pair_id, "adjunct_island:0");
        assert_eq!(p.language, "en");
        let t = ds.taxonomy().get("adjunct_island").unwrap();
        assert_eq!(t.phenomenon, "adjunct_island");
        assert_eq!(t.term, "island_effects");
        assert_eq!(t.field, "syntax");
    }

    #[test]
    fn numeric_pair_ids_are_accepted() {
        let line = r#"{"sentence_good":"a b","sentence_bad":"b a","field":"f","linguistics_term":"t","UID":"u","pairID":17}"#;
        let ds = parse_minimal_pairs(line.as_bytes(), Adapter::Blimp, "x").unwrap();
        assert_eq!(ds.pairs()[0].pair_id, "u:17");
    }

    #[test]
    fn missing_bad_sentence_names_field_and_line() {
        let input = format!(
            "{}\n{}\n",
            canonical_line("a", "sv"),
            r#"{"pair_id":"b","language":"en","phenomenon_uid":"sv","sentence_good":"x","term":"t","field":"f"}"#
        );
        let err = parse_minimal_pairs(input.as_bytes(), Adapter::Canonical, "t").unwrap_err();
        match err {
            ModelError::MissingField { line, field } => {
                assert_eq!(line, 2);
                assert_eq!(field, "sentence_bad");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_string(input.as_bytes()).contains("line 2"));
    }

    fn err_string(input: &[u8]) -> String {
        parse_minimal_pairs(input, Adapter::Canonical, "t")
            .unwrap_err()
            .to_string()
    }

    #[test]
    fn duplicate_ids_rejected() {
        let input = format!("{}\n{}\n", canonical_line("a", "sv"), canonical_line("a", "sv"));
        assert!(matches!(
            parse_minimal_pairs(input.as_bytes(), Adapter::Canonical, "t"),
            Err(ModelError::DuplicatePairId { line: 2, .. })
        ));
    }

    #[test]
    fn malformed_json_reports_line() {
        let input = format!("{}\n\n{{not json\n", canonical_line("a", "sv"));
        assert!(matches!(
            parse_minimal_pairs(input.as_bytes(), Adapter::Canonical, "t"),
            Err(ModelError::Malformed { line: 3, .. })
        ));
    }

    #[test]
    fn conflicting_taxonomy_rejected() {
        let a = canonical_line("a", "sv");
        let b = canonical_line("b", "sv").replace("morphology", "syntax");
        let input = format!("{a}\n{b}\n");
        assert!(matches!(
            parse_minimal_pairs(input.as_bytes(), Adapter::Canonical, "t"),
            Err(ModelError::TaxonomyConflict { line: 2, .. })
        ));
    }

    #[test]
    fn identical_sentences_rejected() {
        let line = canonical_line("a", "sv").replace("The dog bark.", "The dog barks.");
        assert!(matches!(
            parse_minimal_pairs(line.as_bytes(), Adapter::Canonical, "t"),
            Err(ModelError::IdenticalSentences { .. })
        ));
    }

    #[test]
    fn unknown_adapter() {
        assert!(matches!("climp".parse::<Adapter>(), Err(ModelError::UnknownAdapter(_))));
        assert_eq!("BLiMP".parse::<Adapter>().unwrap(), Adapter::Blimp);
    }

    #[test]
    fn rublimp_defaults_field_and_synthesizes_ids() {
        let input = concat!(
            r#"{"source_sentence":"Он пришёл.","target_sentence":"Он пришла.","phenomenon":"agreement","PID":"subj_verb_gender"}"#,
            "\n",
            r#"{"source_sentence":"Она пришла.","target_sentence":"Она пришёл.","phenomenon":"agreement","PID":"subj_verb_gender"}"#,
        );
        let ds = parse_minimal_pairs(input.as_bytes(), Adapter::Rublimp, "ru").unwrap();
        assert_eq!(ds.pairs()[0].pair_id, "subj_verb_gender:0");
        assert_eq!(ds.pairs()[1].pair_id, "subj_verb_gender:1");
        assert_eq!(ds.taxon(0).field, "unspecified");
        assert_eq!(ds.pairs()[0].language, "ru");
    }

    #[test]
    fn canonical_roundtrip() {
        let input = concat!(
            r#"{"sentence_good":"他把书读完了。","sentence_bad":"他把书读了完。","paradigm":"ba_construction","phenomenon":"ba","field":"syntax"}"#,
            "\n",
            r#"{"sentence_good":"他们都来了。","sentence_bad":"都他们来了。","paradigm":"dou_position","phenomenon":"quantifier","field":"semantics","pair_id":"7"}"#,
        );
        let ds = parse_minimal_pairs(input.as_bytes(), Adapter::Sling, "sling").unwrap();
        let mut buf = Vec::new();
        ds.write_canonical(&mut buf).unwrap();
        let back = parse_minimal_pairs(&buf[..], Adapter::Canonical, "sling").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn layer_rule_small_cases() {
        assert_eq!(sample_layer_indices(7).unwrap(), [1, 2, 3, 4, 5]);
        assert_eq!(sample_layer_indices(25).unwrap(), [4, 8, 12, 16, 20]);
        assert_eq!(sample_layer_indices(33).unwrap(), [5, 11, 16, 22, 27]);
        assert!(matches!(sample_layer_indices(5), Err(ModelError::TooFewLayers(5))));
    }

    #[test]
    fn k_from_pool_cases() {
        assert_eq!(k_from_pool(6700).unwrap(), 67);
        assert_eq!(k_from_pool(3800).unwrap(), 38);
        assert_eq!(k_from_pool(4500).unwrap(), 45);
        assert_eq!(k_from_pool(100).unwrap(), 1);
        assert!(matches!(k_from_pool(99), Err(ModelError::PoolTooSmall(99))));
    }

    #[test]
    fn subsample_counts() {
        let s = subsample_indices(10, Digest(1), 1.0, 3).unwrap();
        assert_eq!(s.indices, (0..10).collect::<Vec<_>>());
        let s = subsample_indices(67_000, Digest(1), 0.1, 3).unwrap();
        assert_eq!(s.len(), 6_700);
        assert_eq!(selection_count(100, 0.57).unwrap(), 57);
        assert!(matches!(subsample_indices(0, Digest(1), 0.5, 1), Err(ModelError::EmptyDataset)));
        assert!(matches!(
            subsample_indices(5, Digest(1), 0.1, 1),
            Err(ModelError::EmptySelection { .. })
        ));
        assert!(matches!(
            subsample_indices(5, Digest(1), 1.5, 1),
            Err(ModelError::FractionOutOfRange(_))
        ));
    }

    #[test]
    fn subsample_is_seeded() {
        let a = subsample_indices(1000, Digest(1), 0.5, 7).unwrap();
        let b = subsample_indices(1000, Digest(1), 0.5, 7).unwrap();
        assert_eq!(a, b);
        let differing = (0..5)
            .map(|s| subsample_indices(1000, Digest(1), 0.5, 100 + s).unwrap())
            .filter(|s| s.indices != a.indices)
            .count();
        assert!(differing >= 1);
    }
}
