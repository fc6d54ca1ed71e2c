//! Question records, embeddings and corpus ingestion.
//!
//! A corpus file is JSON Lines: one object per line with `id`, `subject`,
//! `text` and either `embedding` (a pooled vector) or `tokens` (token-level
//! vectors that are mean-pooled on load). Embeddings are stored as given;
//! no normalization happens here.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Subject {
    Xyz,
    Kva,
    Nog,
    Dtk,
}

impl Subject {
    pub const ALL: [Subject; 4] = [Subject::Xyz, Subject::Kva, Subject::Nog, Subject::Dtk];

    pub fn as_str(self) -> &'static str {
        match self {
            Subject::Xyz => "XYZ",
            Subject::Kva => "KVA",
            Subject::Nog => "NOG",
            Subject::Dtk => "DTK",
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subject {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "XYZ" => Ok(Subject::Xyz),
            "KVA" => Ok(Subject::Kva),
            "NOG" => Ok(Subject::Nog),
            "DTK" => Ok(Subject::Dtk),
            other => Err(Error::UnknownSubject(other.to_string())),
        }
    }
}

impl TryFrom<String> for Subject {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Subject> for String {
    fn from(s: Subject) -> String {
        s.as_str().to_string()
    }
}

/// A finite, non-empty embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimMismatch { expected: 1, found: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Embedding::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Vec<f64> {
        e.0
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub subject: Subject,
    pub text: String,
    pub embedding: Embedding,
}

/// An immutable, validated collection of questions sharing one embedding dimension.
#[derive(Debug, Clone)]
pub struct Corpus {
    records: Vec<QuestionRecord>,
    dim: usize,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_records(records: Vec<QuestionRecord>) -> Result<Self> {
        let dim = records.first().map_or(0, |r| r.embedding.dim());
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.embedding.dim() != dim {
                return Err(Error::DimMismatch { expected: dim, found: r.embedding.dim() });
            }
            if r.text.is_empty() {
                return Err(Error::EmptyText(r.id.clone()));
            }
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(Corpus { records, dim, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[QuestionRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&QuestionRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn require(&self, id: &str) -> Result<&QuestionRecord> {
        self.get(id).ok_or_else(|| Error::UnknownQuestion(id.to_string()))
    }

    /// Records of one subject, in corpus order.
    pub fn subject_slice(&self, subject: Subject) -> Vec<&QuestionRecord> {
        self.records.iter().filter(|r| r.subject == subject).collect()
    }

    pub fn subject_counts(&self) -> BTreeMap<Subject, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.subject).or_insert(0) += 1;
        }
        counts
    }

    pub fn subjects(&self) -> Vec<Subject> {
        self.subject_counts().into_keys().collect()
    }
}

/// Strips leading/trailing whitespace and collapses internal whitespace runs.
pub fn clean_text(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Element-wise arithmetic mean of token vectors.
pub fn mean_pool(tokens: &[Embedding]) -> Result<Embedding> {
    let first = tokens.first().ok_or(Error::NoTokens)?;
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for t in tokens {
        if t.dim() != dim {
            return Err(Error::DimMismatch { expected: dim, found: t.dim() });
        }
        for (a, v) in acc.iter_mut().zip(t.as_slice()) {
            *a += v;
        }
    }
    let n = tokens.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Embedding::new(acc)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    subject: Subject,
    text: String,
    #[serde(default)]
    embedding: Option<Embedding>,
    #[serde(default)]
    tokens: Option<Vec<Embedding>>,
}

/// Parses corpus JSON Lines from a reader. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut dim: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let embedding = match (raw.embedding, raw.tokens) {
            (Some(e), None) => e,
            (None, Some(tokens)) => mean_pool(&tokens).map_err(|e| parse_err(e.to_string()))?,
            (Some(_), Some(_)) => return Err(parse_err("both `embedding` and `tokens` given".into())),
            (None, None) => return Err(parse_err("missing `embedding` or `tokens`".into())),
        };
        let expected = *dim.get_or_insert(embedding.dim());
        if embedding.dim() != expected {
            return Err(parse_err(Error::DimMismatch { expected, found: embedding.dim() }.to_string()));
        }
        if let Some(prev) = seen.insert(raw.id.clone(), line_no) {
            return Err(parse_err(format!("{} (first seen on line {prev})", Error::DuplicateId(raw.id))));
        }
        let text = clean_text(&raw.text);
        if text.is_empty() {
            return Err(parse_err(Error::EmptyText(raw.id).to_string()));
        }
        records.push(QuestionRecord { id: raw.id, subject: raw.subject, text, embedding });
    }
    Corpus::from_records(records)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    read_corpus(BufReader::new(File::open(path)?))
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut writer: W) -> Result<()> {
    for r in corpus.records() {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    write_corpus(corpus, BufWriter::new(File::create(path)?))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn clean_text_examples() {
        assert_eq!(clean_text("  x + 1 = 2 "), "x + 1 = 2");
        assert_eq!(clean_text("a\n\nb"), "a b");
        assert_eq!(clean_text(""), "");
        assert_eq!(clean_text("\t a \t b  c\r\n"), "a b c");
    }

    #[test]
    fn subject_parsing() {
        for s in Subject::ALL {
            assert_eq!(s.as_str().parse::<Subject>().unwrap(), s);
        }
        assert!(matches!("xyz".parse::<Subject>(), Err(Error::UnknownSubject(_))));
        assert!("MATH".parse::<Subject>().is_err());
    }

    #[test]
    fn embedding_rejects_non_finite() {
        assert!(matches!(Embedding::new(vec![1.0, f64::NAN]), Err(Error::NonFinite)));
        assert!(Embedding::new(vec![f64::INFINITY]).is_err());
        assert!(Embedding::new(vec![]).is_err());
    }

    #[test]
    fn mean_pool_examples() {
        let out = mean_pool(&[emb(&[1.0, 3.0]), emb(&[3.0, 5.0])]).unwrap();
        assert_eq!(out.as_slice(), &[2.0, 4.0]);
        let out = mean_pool(&[emb(&[7.0, -2.0, 0.0])]).unwrap();
        assert_eq!(out.as_slice(), &[7.0, -2.0, 0.0]);
        assert!(matches!(mean_pool(&[]), Err(Error::NoTokens)));
        assert!(matches!(
            mean_pool(&[emb(&[1.0]), emb(&[1.0, 2.0])]),
            Err(Error::DimMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn mean_pool_matches_per_coordinate_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let tokens: Vec<Vec<f64>> = (0..5).map(|_| (0..8).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let pooled = mean_pool(&tokens.iter().map(|t| emb(t)).collect::<Vec<_>>()).unwrap();
        for j in 0..8 {
            let mut sum = 0.0;
            for t in &tokens {
                sum += t[j];
            }
            assert!((pooled.as_slice()[j] - sum / 5.0).abs() < 1e-12);
        }
    }

    fn line(id: &str, subject: &str, text: &str, e: &[f64]) -> String {
        serde_json::json!({"id": id, "subject": subject, "text": text, "embedding": e}).to_string()
    }

    #[test]
    fn read_two_line_corpus() {
        let src = format!(
            "{}\n{}\n",
            line("q1", "XYZ", "  what is\n 2+2 ", &[1.0, 2.0, 3.0, 4.0]),
            line("q2", "KVA", "b", &[0.5, 0.5, 0.5, 0.5])
        );
        let c = read_corpus(src.as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.dim(), 4);
        assert_eq!(c.get("q1").unwrap().text, "what is 2+2");
        assert_eq!(c.get("q2").unwrap().subject, Subject::Kva);
    }

    #[test]
    fn duplicate_id_is_named() {
        let src = format!("{}\n{}\n", line("q1", "XYZ", "a", &[1.0]), line("q1", "XYZ", "b", &[2.0]));
        let err = read_corpus(src.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("\"q1\""), "{err}");
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let src = format!("{}\n\n{{not json\n", line("q1", "XYZ", "a", &[1.0]));
        match read_corpus(src.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dim_mismatch_rejected() {
        let src = format!("{}\n{}\n", line("q1", "XYZ", "a", &[1.0]), line("q2", "XYZ", "b", &[1.0, 2.0]));
        let err = read_corpus(src.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");
    }

    #[test]
    fn empty_text_and_bad_subject_rejected() {
        assert!(read_corpus(line("q1", "XYZ", "   ", &[1.0]).as_bytes()).is_err());
        assert!(read_corpus(line("q1", "ABC", "x", &[1.0]).as_bytes()).is_err());
    }

    #[test]
    fn token_level_records_are_pooled() {
        let src = r#"{"id":"t","subject":"NOG","text":"x","tokens":[[1,3],[3,5]]}"#;
        let c = read_corpus(src.as_bytes()).unwrap();
        assert_eq!(c.get("t").unwrap().embedding.as_slice(), &[2.0, 4.0]);
    }

    proptest! {
        #[test]
        fn mean_pool_is_permutation_invariant(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 1..8),
            rot in 0usize..8,
        ) {
            let tokens: Vec<Embedding> = rows.iter().map(|r| emb(r)).collect();
            let mut shuffled = tokens.clone();
            shuffled.rotate_left(rot % tokens.len());
            shuffled.reverse();
            let a = mean_pool(&tokens).unwrap();
            let b = mean_pool(&shuffled).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn mean_pool_of_copies_is_identity(
            v in prop::collection::vec(-1e6f64..1e6, 1..10),
            n in 1usize..20,
        ) {
            let tokens = vec![emb(&v); n];
            let pooled = mean_pool(&tokens).unwrap();
            for (x, y) in pooled.as_slice().iter().zip(&v) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300));
            }
        }

        #[test]
        fn corpus_round_trips_through_jsonl(
            vals in prop::collection::vec(prop::collection::vec(-1e9f64..1e9, 3), 1..12),
        ) {
            let records: Vec<QuestionRecord> = vals
                .iter()
                .enumerate()
                .map(|(i, v)| QuestionRecord {
                    id: format!("q{i}"),
                    subject: Subject::ALL[i % 4],
                    text: format!("question {i}"),
                    embedding: emb(v),
                })
                .collect();
            let corpus = Corpus::from_records(records).unwrap();
            let mut buf = Vec::new();
            write_corpus(&corpus, &mut buf).unwrap();
            let back = read_corpus(buf.as_slice()).unwrap();
            prop_assert_eq!(back.records(), corpus.records());
        }
    }
}
