//! Self-organizing map training and SOM-based recommendation.
//!
//! Training is the online Kohonen rule. Each epoch is one shuffled pass over
//! the subject slice; the learning rate `lr0 * (1 - t/epochs)` and the Gaussian
//! neighbourhood width `max(radius0 * (1 - t/epochs), 0.5)` are updated per
//! epoch, not per sample. Codebook vectors start uniformly inside the
//! per-coordinate data range.
//!
//! Recommendation finds the query's best matching unit, ranks co-members of
//! that neuron by Euclidean distance and, when the neuron runs out, backfills
//! from rings of increasing Chebyshev grid distance around it. Scores are
//! Euclidean distances; they ascend within a ring, not necessarily across
//! rings.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cosine::{ranked, Recommendation};
use crate::data::{euclidean, squared_euclidean, Corpus, Subject};
use crate::error::{Error, Result};
use crate::rng;

pub const SOM_FORMAT_VERSION: u32 = 1;

const MIN_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomConfig {
    pub rows: usize,
    pub cols: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub radius0: f64,
    pub seed: u64,
}

impl Default for SomConfig {
    fn default() -> Self {
        SomConfig::grid(5, 8)
    }
}

impl SomConfig {
    /// A `rows x cols` grid with the remaining hyperparameters at their defaults
    /// (1000 epochs, learning rate 0.5, radius `max(rows, cols) / 2`).
    pub fn grid(rows: usize, cols: usize) -> Self {
        SomConfig { rows, cols, epochs: 1000, lr0: 0.5, radius0: rows.max(cols) as f64 / 2.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("som: {m}")));
        if self.rows == 0 || self.cols == 0 || self.rows * self.cols < 2 {
            return bad("grid must have at least 2 neurons");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr0 > 0.0 && self.lr0 <= 1.0) {
            return bad("lr0 must be in (0, 1]");
        }
        if !(self.radius0 > 0.0 && self.radius0.is_finite()) {
            return bad("radius0 must be positive");
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 * (1.0 - epoch as f64 / self.epochs as f64)
    }

    pub fn radius(&self, epoch: usize) -> f64 {
        (self.radius0 * (1.0 - epoch as f64 / self.epochs as f64)).max(MIN_RADIUS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Neuron {
    pub row: usize,
    pub col: usize,
}

impl Neuron {
    fn chebyshev(self, other: Neuron) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomModel {
    pub version: u32,
    pub config: SomConfig,
    pub subject: Subject,
    pub dim: usize,
    /// Row-major codebook, `rows * cols` vectors of length `dim`.
    pub weights: Vec<Vec<f64>>,
    pub assignments: BTreeMap<String, Neuron>,
}

pub fn train_som(corpus: &Corpus, subject: Subject, config: &SomConfig) -> Result<SomModel> {
    config.validate()?;
    let slice = corpus.subject_slice(subject);
    if slice.is_empty() {
        return Err(Error::EmptySubject(subject));
    }
    let dim = corpus.dim();
    let data: Vec<&[f64]> = slice.iter().map(|r| r.embedding.as_slice()).collect();
    let mut rng = rng::seeded(config.seed);

    let mut lo = data[0].to_vec();
    let mut hi = data[0].to_vec();
    for x in &data[1..] {
        for j in 0..dim {
            lo[j] = lo[j].min(x[j]);
            hi[j] = hi[j].max(x[j]);
        }
    }
    let neurons = config.rows * config.cols;
    let mut weights: Vec<Vec<f64>> =
        (0..neurons).map(|_| (0..dim).map(|j| lo[j] + rng.random::<f64>() * (hi[j] - lo[j])).collect()).collect();

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        let alpha = config.learning_rate(epoch);
        let sigma = config.radius(epoch);
        let denom = 2.0 * sigma * sigma;
        order.shuffle(&mut rng);
        for &i in &order {
            let x = data[i];
            let winner = nearest(&weights, x);
            let (br, bc) = (winner / config.cols, winner % config.cols);
            for (idx, w) in weights.iter_mut().enumerate() {
                let dr = (idx / config.cols) as f64 - br as f64;
                let dc = (idx % config.cols) as f64 - bc as f64;
                let step = alpha * (-(dr * dr + dc * dc) / denom).exp();
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += step * (xj - *wj);
                }
            }
        }
    }

    let mut model = SomModel {
        version: SOM_FORMAT_VERSION,
        config: config.clone(),
        subject,
        dim,
        weights,
        assignments: BTreeMap::new(),
    };
    for r in slice {
        let n = model.bmu(r.embedding.as_slice())?;
        model.assignments.insert(r.id.clone(), n);
    }
    Ok(model)
}

/// Index of the codebook vector closest to `x`; the first one wins ties.
fn nearest(weights: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, w) in weights.iter().enumerate() {
        let d = squared_euclidean(w, x);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

impl SomModel {
    pub fn neuron(&self, index: usize) -> Neuron {
        Neuron { row: index / self.config.cols, col: index % self.config.cols }
    }

    pub fn codebook(&self, n: Neuron) -> &[f64] {
        &self.weights[n.row * self.config.cols + n.col]
    }

    pub fn bmu(&self, x: &[f64]) -> Result<Neuron> {
        if x.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: x.len() });
        }
        Ok(self.neuron(nearest(&self.weights, x)))
    }

    /// Number of training questions assigned to each neuron, row-major.
    pub fn hit_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.weights.len()];
        for n in self.assignments.values() {
            counts[n.row * self.config.cols + n.col] += 1;
        }
        counts
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Model(format!("som {}: {m}", self.subject)));
        if self.version != SOM_FORMAT_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        self.config.validate()?;
        if self.weights.len() != self.config.rows * self.config.cols {
            return bad(format!("expected {} codebook vectors", self.config.rows * self.config.cols));
        }
        if self.weights.iter().any(|w| w.len() != self.dim || w.iter().any(|v| !v.is_finite())) {
            return bad("codebook vector with wrong length or non-finite entry".into());
        }
        if let Some((id, _)) =
            self.assignments.iter().find(|(_, n)| n.row >= self.config.rows || n.col >= self.config.cols)
        {
            return bad(format!("assignment of {id:?} outside the grid"));
        }
        Ok(())
    }

    /// Checks that the assignments cover exactly the corpus's slice for this subject.
    pub fn check_coverage(&self, corpus: &Corpus) -> Result<()> {
        if corpus.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: corpus.dim() });
        }
        let slice = corpus.subject_slice(self.subject);
        if slice.len() != self.assignments.len() || slice.iter().any(|r| !self.assignments.contains_key(&r.id)) {
            return Err(Error::Model(format!("som {} assignments do not match the corpus", self.subject)));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: SomModel = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        model.validate()?;
        Ok(model)
    }

    /// Writes `question_id,row,col` rows for external plotting.
    pub fn write_assignments_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["question_id", "row", "col"]).map_err(csv_err)?;
        for (id, n) in &self.assignments {
            w.write_record([id.as_str(), &n.row.to_string(), &n.col.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn recommend_som(model: &SomModel, corpus: &Corpus, query_id: &str, n: usize) -> Result<Vec<Recommendation>> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    if !model.assignments.contains_key(query_id) {
        return Err(Error::UnknownQuestion(query_id.to_string()));
    }
    let query = corpus.require(query_id)?;
    let q = query.embedding.as_slice();
    let center = model.bmu(q)?;

    // (ring, distance, id)
    let mut candidates: Vec<(usize, f64, &str)> = Vec::with_capacity(model.assignments.len());
    for (id, &neuron) in &model.assignments {
        if id == query_id {
            continue;
        }
        let r = corpus.require(id)?;
        if r.subject != model.subject {
            continue;
        }
        candidates.push((neuron.chebyshev(center), euclidean(q, r.embedding.as_slice()), id));
    }
    candidates.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal)).then_with(|| a.2.cmp(b.2))
    });
    Ok(ranked(candidates.into_iter().take(n).map(|(_, d, id)| (id.to_string(), d))))
}

/// Mean Euclidean distance from each question of the model's subject to its BMU codebook vector.
pub fn quantization_error(model: &SomModel, corpus: &Corpus) -> Result<f64> {
    let slice = corpus.subject_slice(model.subject);
    if slice.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for r in &slice {
        let x = r.embedding.as_slice();
        let n = model.bmu(x)?;
        total += euclidean(model.codebook(n), x);
    }
    Ok(total / slice.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Embedding, QuestionRecord};

    fn corpus(points: &[(&str, &[f64])]) -> Corpus {
        Corpus::from_records(
            points
                .iter()
                .map(|(id, v)| QuestionRecord {
                    id: id.to_string(),
                    subject: Subject::Xyz,
                    text: id.to_string(),
                    embedding: Embedding::new(v.to_vec()).unwrap(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn model_with(rows: usize, cols: usize, weights: Vec<Vec<f64>>) -> SomModel {
        let dim = weights[0].len();
        SomModel {
            version: SOM_FORMAT_VERSION,
            config: SomConfig { epochs: 1, ..SomConfig::grid(rows, cols) },
            subject: Subject::Xyz,
            dim,
            weights,
            assignments: BTreeMap::new(),
        }
    }

    #[test]
    fn defaults() {
        let c = SomConfig::default();
        assert_eq!((c.rows, c.cols, c.epochs), (5, 8, 1000));
        assert_eq!(c.lr0, 0.5);
        assert_eq!(c.radius0, 4.0);
    }

    #[test]
    fn config_validation() {
        assert!(SomConfig::grid(1, 1).validate().is_err());
        assert!(SomConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(SomConfig { lr0: 0.0, ..Default::default() }.validate().is_err());
        assert!(SomConfig { lr0: 1.5, ..Default::default() }.validate().is_err());
        assert!(SomConfig { radius0: 0.0, ..Default::default() }.validate().is_err());
        assert!(SomConfig::grid(1, 2).validate().is_ok());
    }

    #[test]
    fn schedules_are_nonincreasing_and_positive() {
        let c = SomConfig::default();
        for t in 1..c.epochs {
            assert!(c.learning_rate(t) <= c.learning_rate(t - 1));
            assert!(c.radius(t) <= c.radius(t - 1));
        }
        assert!(c.learning_rate(c.epochs - 1) > 0.0);
        assert_eq!(c.radius(c.epochs - 1), 0.5);
        assert_eq!(c.learning_rate(0), 0.5);
        assert_eq!(c.radius(0), 4.0);
    }

    #[test]
    fn bmu_examples() {
        let m = model_with(1, 2, vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(m.bmu(&[0.1, 0.1]).unwrap(), Neuron { row: 0, col: 0 });
        assert_eq!(m.bmu(&[1.0, 1.0]).unwrap(), Neuron { row: 0, col: 1 });
        assert_eq!(m.bmu(&[0.5, 0.5]).unwrap(), Neuron { row: 0, col: 0 }, "row-major tie-break");
        assert!(matches!(m.bmu(&[0.0]), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn bmu_matches_exhaustive_scan() {
        let mut r = rng::seeded(3);
        let weights: Vec<Vec<f64>> = (0..40).map(|_| (0..6).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let m = model_with(5, 8, weights.clone());
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
            let dists: Vec<f64> =
                weights.iter().map(|w| w.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).collect();
            let best = (0..40).fold(0, |b, i| if dists[i] < dists[b] { i } else { b });
            assert_eq!(m.bmu(&x).unwrap(), Neuron { row: best / 8, col: best % 8 });
        }
    }

    #[test]
    fn single_point_converges() {
        let c = corpus(&[("p", &[0.3, -1.2, 4.0])]);
        let m = train_som(&c, Subject::Xyz, &SomConfig { seed: 5, ..Default::default() }).unwrap();
        let n = m.assignments["p"];
        assert!(euclidean(m.codebook(n), &[0.3, -1.2, 4.0]) <= 1e-6);
        assert!(quantization_error(&m, &c).unwrap() <= 1e-6);
    }

    #[test]
    fn empty_subject_is_an_error() {
        let c = corpus(&[("p", &[0.0])]);
        assert!(matches!(train_som(&c, Subject::Kva, &SomConfig::default()), Err(Error::EmptySubject(Subject::Kva))));
    }

    #[test]
    fn codebook_stays_inside_data_box() {
        let c = corpus(&[("a", &[0.0, 1.0]), ("b", &[2.0, -1.0]), ("c", &[1.0, 3.0]), ("d", &[-0.5, 0.0])]);
        let m = train_som(&c, Subject::Xyz, &SomConfig { epochs: 50, seed: 9, ..SomConfig::grid(3, 3) }).unwrap();
        for w in &m.weights {
            assert!((-0.5..=2.0).contains(&w[0]), "{w:?}");
            assert!((-1.0..=3.0).contains(&w[1]), "{w:?}");
        }
    }

    #[test]
    fn only_co_member_is_returned_first() {
        // Two neurons; q and q7 share neuron 0, far points share neuron 1.
        let c = corpus(&[("q", &[0.0, 0.0]), ("q7", &[0.1, 0.0]), ("f1", &[10.0, 10.0]), ("f2", &[10.5, 10.0])]);
        let mut m = model_with(1, 2, vec![vec![0.05, 0.0], vec![10.2, 10.0]]);
        for r in c.records() {
            let n = m.bmu(r.embedding.as_slice()).unwrap();
            m.assignments.insert(r.id.clone(), n);
        }
        let out = recommend_som(&m, &c, "q", 1).unwrap();
        assert_eq!(out[0].question_id, "q7");
        let out = recommend_som(&m, &c, "q", 3).unwrap();
        let ids: Vec<_> = out.iter().map(|r| r.question_id.as_str()).collect();
        assert_eq!(ids, ["q7", "f1", "f2"]);
        assert!(matches!(recommend_som(&m, &c, "nope", 1), Err(Error::UnknownQuestion(_))));
    }

    #[test]
    fn lone_query_backfills_from_nearest_ring() {
        // 1x3 grid: query alone in neuron 0; `near` in neuron 1 (ring 1),
        // `far` in neuron 2 (ring 2) although `far` is closer in Euclidean terms.
        let c = corpus(&[("q", &[0.0]), ("near", &[5.0]), ("mid", &[4.0]), ("far", &[-3.0])]);
        let mut m = model_with(1, 3, vec![vec![0.0], vec![4.5], vec![-3.0]]);
        m.assignments.insert("q".into(), Neuron { row: 0, col: 0 });
        m.assignments.insert("near".into(), Neuron { row: 0, col: 1 });
        m.assignments.insert("mid".into(), Neuron { row: 0, col: 1 });
        m.assignments.insert("far".into(), Neuron { row: 0, col: 2 });
        let out = recommend_som(&m, &c, "q", 1).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].question_id, "mid");
        assert_eq!(out[0].score, 4.0);
        let ids: Vec<_> = recommend_som(&m, &c, "q", 10).unwrap().into_iter().map(|r| r.question_id).collect();
        assert_eq!(ids, ["mid", "near", "far"]);
    }

    #[test]
    fn quantization_error_zero_on_exact_codebook() {
        let c = corpus(&[("a", &[1.0, 2.0]), ("b", &[3.0, 4.0])]);
        let m = model_with(1, 2, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(quantization_error(&m, &c).unwrap(), 0.0);
    }

    #[test]
    fn persistence_round_trip_and_validation() {
        let c = corpus(&[("a", &[1.0, 2.0]), ("b", &[3.0, 4.0]), ("c", &[0.0, 0.5])]);
        let m = train_som(&c, Subject::Xyz, &SomConfig { epochs: 20, ..SomConfig::grid(2, 2) }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("som.json");
        m.save(&path).unwrap();
        let back = SomModel::load(&path).unwrap();
        assert_eq!(back, m);
        back.check_coverage(&c).unwrap();

        let mut bad = m.clone();
        bad.version = 99;
        assert!(bad.validate().is_err());
        let mut bad = m.clone();
        bad.assignments.insert("x".into(), Neuron { row: 7, col: 0 });
        assert!(bad.validate().is_err());

        let mut buf = Vec::new();
        m.write_assignments_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("question_id,row,col\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
