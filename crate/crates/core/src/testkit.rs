//! Deterministic synthetic data: labeled Gaussian-blob corpora and scripted
//! session logs whose metrics are known by construction.
//!
//! Every generator is a pure function of its inputs and seed.

use std::collections::BTreeMap;

use chrono::{Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analytics::{QuizSession, SessionLog, SessionQuestion};
use crate::data::{euclidean, Corpus, Embedding, QuestionRecord, Subject};
use crate::error::{Error, Result};
use crate::registry::Strategy;
use crate::rng;

const CENTER_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub subject: Subject,
    pub n_blobs: usize,
    pub points_per_blob: usize,
    pub dim: usize,
    pub center_separation: f64,
    pub blob_std: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn separation_ratio(&self) -> f64 {
        self.center_separation / self.blob_std
    }

    fn validate(&self) -> Result<()> {
        if self.n_blobs == 0 || self.points_per_blob == 0 || self.dim == 0 {
            return Err(Error::InvalidConfig("blob spec counts must be positive".into()));
        }
        if !(self.center_separation > 0.0 && self.blob_std > 0.0) {
            return Err(Error::InvalidConfig("blob separation and std must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BlobCorpus {
    pub corpus: Corpus,
    /// Question id to blob index.
    pub labels: BTreeMap<String, usize>,
    pub centers: BTreeMap<Subject, Vec<Vec<f64>>>,
}

fn gaussian(rng: &mut rng::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Centers at random directions and radii inside a ball, accepted only when at
/// least `center_separation` from every earlier center.
fn place_centers(spec: &BlobSpec, rng: &mut rng::Rng) -> Result<Vec<Vec<f64>>> {
    let radius = spec.center_separation * spec.n_blobs as f64;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.n_blobs);
    while centers.len() < spec.n_blobs {
        let mut placed = false;
        for _ in 0..CENTER_ATTEMPTS {
            let dir: Vec<f64> = (0..spec.dim).map(|_| gaussian(rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let r = radius * rng.random::<f64>().powf(1.0 / spec.dim as f64);
            let c: Vec<f64> = dir.iter().map(|v| v / norm * r).collect();
            if centers.iter().all(|o| euclidean(o, &c) >= spec.center_separation) {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Fixture(format!(
                "could not place {} centers {} apart in {} dimensions",
                spec.n_blobs, spec.center_separation, spec.dim
            )));
        }
    }
    Ok(centers)
}

type BlobParts = (Vec<QuestionRecord>, BTreeMap<String, usize>, Vec<Vec<f64>>);

fn blob_records(spec: &BlobSpec) -> Result<BlobParts> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let centers = place_centers(spec, &mut rng)?;
    let mut records = Vec::with_capacity(spec.n_blobs * spec.points_per_blob);
    let mut labels = BTreeMap::new();
    for (b, c) in centers.iter().enumerate() {
        for i in 0..spec.points_per_blob {
            let id = format!("{}-{b:02}-{i:04}", spec.subject);
            let v: Vec<f64> = c.iter().map(|m| m + spec.blob_std * gaussian(&mut rng)).collect();
            records.push(QuestionRecord {
                id: id.clone(),
                subject: spec.subject,
                text: format!("Synthetic {} question {b}.{i}", spec.subject),
                embedding: Embedding::new(v)?,
            });
            labels.insert(id, b);
        }
    }
    Ok((records, labels, centers))
}

pub fn generate_blob_corpus(spec: &BlobSpec) -> Result<BlobCorpus> {
    generate_multi_subject(std::slice::from_ref(spec))
}

/// One blob corpus per spec, merged. Specs must share `dim` and use distinct subjects.
pub fn generate_multi_subject(specs: &[BlobSpec]) -> Result<BlobCorpus> {
    let mut records = Vec::new();
    let mut labels = BTreeMap::new();
    let mut centers = BTreeMap::new();
    for spec in specs {
        let (r, l, c) = blob_records(spec)?;
        if centers.insert(spec.subject, c).is_some() {
            return Err(Error::InvalidConfig(format!("subject {} given twice", spec.subject)));
        }
        records.extend(r);
        labels.extend(l);
    }
    Ok(BlobCorpus { corpus: Corpus::from_records(records)?, labels, centers })
}

/// One scripted session: its answers in order, plus optional metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecipe {
    /// `true` for a correct answer.
    pub outcomes: Vec<bool>,
    pub duration_secs: Option<f64>,
    pub rating: Option<u8>,
    /// Response times, cycled over the questions. Empty means 60 s each.
    pub response_secs: Vec<f64>,
}

impl SessionRecipe {
    pub fn new(outcomes: Vec<bool>) -> Self {
        SessionRecipe { outcomes, duration_secs: Some(600.0), rating: None, response_secs: Vec::new() }
    }

    /// Parses `C`/`W` strings such as `"WWC"`.
    pub fn from_pattern(pattern: &str) -> Result<Self> {
        let outcomes = pattern
            .chars()
            .map(|c| match c {
                'C' => Ok(true),
                'W' => Ok(false),
                other => Err(Error::Fixture(format!("bad outcome {other:?} in recipe"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SessionRecipe::new(outcomes))
    }

    fn validate(&self) -> Result<()> {
        if self.rating.is_some_and(|r| !(1..=5).contains(&r)) {
            return Err(Error::Fixture("rating must be in 1..=5".into()));
        }
        if self.duration_secs.is_some_and(|d| !(d >= 0.0)) || self.response_secs.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::Fixture("durations and response times must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmScript {
    pub algorithm: Strategy,
    pub sessions: Vec<SessionRecipe>,
}

/// Builds the log for a script. Sessions are shuffled and given ids and start
/// times from `seed`; answers, durations and ratings follow the recipes exactly.
pub fn generate_session_log(arms: &[ArmScript], seed: u64) -> Result<SessionLog> {
    let mut rng = rng::seeded(seed);
    let mut scripted: Vec<(Strategy, &SessionRecipe)> = Vec::new();
    for arm in arms {
        for recipe in &arm.sessions {
            recipe.validate()?;
            scripted.push((arm.algorithm, recipe));
        }
    }
    scripted.shuffle(&mut rng);

    let base = Utc.with_ymd_and_hms(2024, 9, 1, 8, 0, 0).single().expect("valid date");
    let micros = |secs: f64| Duration::microseconds((secs * 1e6).round() as i64);
    let mut sessions = Vec::with_capacity(scripted.len());
    let mut questions = Vec::new();
    let mut start = base;
    for (i, (algorithm, recipe)) in scripted.into_iter().enumerate() {
        start += Duration::seconds(rng.random_range(60..3600));
        let session_id = format!("s{i:05}");
        let subject = Subject::ALL[rng.random_range(0..Subject::ALL.len())];
        let mut t = start;
        for (j, &correct) in recipe.outcomes.iter().enumerate() {
            let rt = if recipe.response_secs.is_empty() {
                60.0
            } else {
                recipe.response_secs[j % recipe.response_secs.len()]
            };
            let answered = t + micros(rt);
            questions.push(SessionQuestion {
                session_id: session_id.clone(),
                question_id: format!("{subject}-{:04}", rng.random_range(0..10_000)),
                sequence_order: j as u32 + 1,
                presented_at: t,
                answered_at: Some(answered),
                correct: Some(correct),
            });
            t = answered;
        }
        sessions.push(QuizSession {
            session_id,
            user_id: Some(format!("u{:04}", rng.random_range(0..500))),
            algorithm,
            question_types: [subject].into(),
            started_at: start,
            ended_at: recipe.duration_secs.map(|d| start + micros(d)),
            rating: recipe.rating,
        });
    }
    SessionLog::new(sessions, questions)
}

/// `sessions` recipes of `per_session` answers with exactly `rate` correct
/// overall. Errors when `rate * total` is not a whole number of answers.
pub fn correctness_recipes(rate: f64, per_session: usize, sessions: usize) -> Result<Vec<SessionRecipe>> {
    if !(0.0..=1.0).contains(&rate) || per_session == 0 {
        return Err(Error::Fixture("rate must be in [0, 1] and sessions non-empty".into()));
    }
    let total = per_session * sessions;
    let exact = rate * total as f64;
    let correct = exact.round();
    if (exact - correct).abs() > 1e-6 {
        return Err(Error::Fixture(format!("rate {rate} is unreachable with {total} answers ({exact} correct)")));
    }
    let correct = correct as usize;
    let flags: Vec<bool> = (0..total).map(|j| (j + 1) * correct / total > j * correct / total).collect();
    Ok(flags.chunks(per_session).map(|c| SessionRecipe::new(c.to_vec())).collect())
}

/// Integer streak counts whose percentages are each within `tolerance` of the
/// targets, using `total` streaks.
pub fn streak_counts(percentages: &[(usize, f64)], total: usize, tolerance: f64) -> Result<BTreeMap<usize, usize>> {
    let counts: BTreeMap<usize, usize> =
        percentages.iter().map(|&(l, p)| (l, (p * total as f64 / 100.0).round() as usize)).collect();
    let sum: usize = counts.values().sum();
    let off = percentages.iter().find(|&&(l, p)| (100.0 * counts[&l] as f64 / total as f64 - p).abs() > tolerance);
    if sum != total || off.is_some() {
        return Err(Error::Fixture(format!("no exact streak split of {total} matches the targets")));
    }
    Ok(counts)
}

/// One session per streak: `length` wrong answers closed by a correct one.
pub fn streak_recipes(counts: &BTreeMap<usize, usize>) -> Vec<SessionRecipe> {
    let mut out = Vec::new();
    for (&len, &n) in counts {
        for _ in 0..n {
            let mut outcomes = vec![false; len];
            outcomes.push(true);
            out.push(SessionRecipe::new(outcomes));
        }
    }
    out
}

/// Strategy, streak total, and `(length, percent)` pairs.
pub type StreakRow = (Strategy, usize, &'static [(usize, f64)]);

/// Streak-length distributions (percent) with the streak totals that realize
/// them exactly at two-decimal precision. The `gmmSimilarityAlg` row keeps its
/// unlisted 0.10% remainder as one streak of length 11.
pub const REFERENCE_STREAKS: [StreakRow; 3] = [
    (
        Strategy::Cosine,
        1035,
        &[
            (1, 60.68),
            (2, 22.42),
            (3, 8.60),
            (4, 3.77),
            (5, 1.64),
            (6, 1.55),
            (7, 0.39),
            (8, 0.58),
            (9, 0.19),
            (10, 0.19),
        ],
    ),
    (
        Strategy::GmmKl,
        985,
        &[
            (1, 67.01),
            (2, 19.29),
            (3, 8.63),
            (4, 2.44),
            (5, 1.22),
            (6, 0.41),
            (7, 0.30),
            (8, 0.20),
            (9, 0.10),
            (10, 0.30),
            (11, 0.10),
        ],
    ),
    (
        Strategy::Som,
        986,
        &[
            (1, 64.71),
            (2, 21.40),
            (3, 7.40),
            (4, 3.65),
            (5, 1.32),
            (6, 0.81),
            (7, 0.41),
            (8, 0.30),
            (9, 0.00),
            (10, 0.00),
        ],
    ),
];

/// Response-time fixture for the `cosineSimilarityAlg` arm of [`reference_log`]:
/// percentile anchors (0, 50, 95, 100) in seconds and the target mean.
pub const REFERENCE_RESPONSE_ANCHORS: [(f64, f64); 4] = [(0.0, 1.0), (50.0, 64.49), (95.0, 295.92), (100.0, 1200.0)];
pub const REFERENCE_RESPONSE_MEAN: f64 = 95.82;

/// The reference log: one arm per [`REFERENCE_STREAKS`] row with exactly
/// those streak counts, cosine response times from
/// [`REFERENCE_RESPONSE_ANCHORS`], and seeded durations and ratings.
pub fn reference_log(seed: u64) -> Result<SessionLog> {
    let mut rng = rng::seeded(rng::derive_seed(seed, "reference/metadata"));
    let durations = LogNormal::new((12.0f64 * 60.0).ln(), 0.9).expect("valid lognormal");
    let mut arms = Vec::new();
    for (algorithm, total, pct) in REFERENCE_STREAKS {
        let mut sessions = streak_recipes(&streak_counts(pct, total, 0.005)?);
        for r in &mut sessions {
            let u: f64 = rng.random();
            r.duration_secs = match u {
                u if u < 0.03 => None,
                u if u < 0.05 => Some(rng.random_range(0.0..5.0)),
                _ => Some((durations.sample(&mut rng) * 1e3).round() / 1e3),
            };
            r.rating = rng.random_bool(0.6).then(|| rng.random_range(1..=5));
            r.response_secs = vec![(rng.random_range(3.0..240.0f64) * 1e3).round() / 1e3];
        }
        if algorithm == Strategy::Cosine {
            let n = sessions.iter().map(|r| r.outcomes.len()).sum();
            let mut times = values_with_quantiles(n, &REFERENCE_RESPONSE_ANCHORS, REFERENCE_RESPONSE_MEAN)?.into_iter();
            for r in &mut sessions {
                r.response_secs = times.by_ref().take(r.outcomes.len()).collect();
            }
        }
        arms.push(ArmScript { algorithm, sessions });
    }
    generate_session_log(&arms, seed)
}

/// Sorted values whose order statistics pass through `anchors` (percentile,
/// value) under linear-interpolation percentiles and whose mean is `mean`.
///
/// Anchors must include percentiles 0 and 100. Values between anchors follow
/// `lo + (hi - lo) * t^gamma` with one shared `gamma`, found by bisection.
pub fn values_with_quantiles(n: usize, anchors: &[(f64, f64)], mean: f64) -> Result<Vec<f64>> {
    let bad = |m: String| Err(Error::Fixture(m));
    if n < 2 {
        return bad("need at least two values".into());
    }
    let mut fixed: BTreeMap<usize, f64> = BTreeMap::new();
    for &(p, v) in anchors {
        let pos = p / 100.0 * (n - 1) as f64;
        for idx in [pos.floor() as usize, pos.ceil() as usize] {
            if let Some(prev) = fixed.insert(idx, v) {
                if prev != v {
                    return bad(format!("anchors collide at index {idx}"));
                }
            }
        }
    }
    if !fixed.contains_key(&0) || !fixed.contains_key(&(n - 1)) {
        return bad("anchors must include the 0th and 100th percentiles".into());
    }
    let pts: Vec<(usize, f64)> = fixed.into_iter().collect();
    if pts.windows(2).any(|w| w[1].1 < w[0].1) {
        return bad("anchor values must be nondecreasing".into());
    }
    let build = |gamma: f64| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for w in pts.windows(2) {
            let ((ia, va), (ib, vb)) = (w[0], w[1]);
            for (i, slot) in out.iter_mut().enumerate().take(ib + 1).skip(ia) {
                let t = (i - ia) as f64 / (ib - ia) as f64;
                *slot = va + (vb - va) * t.powf(gamma);
            }
        }
        out
    };
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    // The mean decreases as gamma grows.
    let (mut lo, mut hi) = (-12.0f64, 12.0f64);
    if avg(&build(lo.exp())) < mean || avg(&build(hi.exp())) > mean {
        return bad(format!("mean {mean} is unreachable for these anchors"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if avg(&build(mid.exp())) > mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(build((0.5 * (lo + hi)).exp()))
}
