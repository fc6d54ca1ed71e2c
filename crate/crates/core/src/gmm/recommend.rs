use std::cmp::Ordering;

use crate::cosine::{ranked, Recommendation};
use crate::data::{euclidean, Corpus};
use crate::error::{Error, Result};

use super::{divergence, GmmModel, ProbabilityVector};

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    Ok(())
}

fn query_posterior<'a>(model: &'a GmmModel, query_id: &str) -> Result<&'a ProbabilityVector> {
    model.posteriors.get(query_id).ok_or_else(|| Error::UnknownQuestion(query_id.to_string()))
}

fn by_score_then_id(a: &(String, f64), b: &(String, f64)) -> Ordering {
    a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0))
}

/// The `n` same-subject questions whose posterior profile diverges least from the query's.
pub fn recommend_gmm_kl(model: &GmmModel, corpus: &Corpus, query_id: &str, n: usize) -> Result<Vec<Recommendation>> {
    check_n(n)?;
    let query = query_posterior(model, query_id)?;
    corpus.require(query_id)?;
    let mut scored = Vec::with_capacity(model.posteriors.len());
    for (id, p) in &model.posteriors {
        if id == query_id || corpus.require(id)?.subject != model.subject {
            continue;
        }
        scored.push((id.clone(), divergence(model.config.divergence, query, p)?));
    }
    scored.sort_by(by_score_then_id);
    scored.truncate(n);
    Ok(ranked(scored))
}

/// Component holding the most posterior mass; the lowest index wins ties.
pub fn hard_component(p: &ProbabilityVector) -> usize {
    p.argmax()
}

/// Questions sharing the query's top component, nearest first in embedding
/// space, then questions of the query's next most probable components.
pub fn recommend_gmm_cluster(
    model: &GmmModel,
    corpus: &Corpus,
    query_id: &str,
    n: usize,
) -> Result<Vec<Recommendation>> {
    check_n(n)?;
    let query = query_posterior(model, query_id)?;
    let q = corpus.require(query_id)?.embedding.as_slice();

    let mut component_order: Vec<usize> = (0..query.len()).collect();
    component_order
        .sort_by(|&a, &b| query.probs()[b].partial_cmp(&query.probs()[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut priority = vec![0; query.len()];
    for (rank, &c) in component_order.iter().enumerate() {
        priority[c] = rank;
    }

    let mut candidates: Vec<(usize, String, f64)> = Vec::with_capacity(model.posteriors.len());
    for (id, p) in &model.posteriors {
        if id == query_id {
            continue;
        }
        let r = corpus.require(id)?;
        if r.subject != model.subject {
            continue;
        }
        candidates.push((priority[hard_component(p)], id.clone(), euclidean(q, r.embedding.as_slice())));
    }
    candidates.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| a.2.partial_cmp(&b.2).unwrap_or(Ordering::Equal)).then_with(|| a.1.cmp(&b.1))
    });
    Ok(ranked(candidates.into_iter().take(n).map(|(_, id, d)| (id, d))))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::OnceLock;

    use super::*;
    use crate::data::{Embedding, QuestionRecord, Subject};
    use crate::gmm::{GmmConfig, GMM_FORMAT_VERSION};

    fn fixture(points: &[(&str, &[f64], &[f64])]) -> (GmmModel, Corpus) {
        let corpus = Corpus::from_records(
            points
                .iter()
                .map(|(id, e, _)| QuestionRecord {
                    id: id.to_string(),
                    subject: Subject::Dtk,
                    text: id.to_string(),
                    embedding: Embedding::new(e.to_vec()).unwrap(),
                })
                .collect(),
        )
        .unwrap();
        let k = points[0].2.len();
        let model = GmmModel {
            version: GMM_FORMAT_VERSION,
            config: GmmConfig::with_k(k),
            subject: Subject::Dtk,
            dim: points[0].1.len(),
            weights: vec![1.0 / k as f64; k],
            means: vec![vec![0.0; points[0].1.len()]; k],
            covariances: vec![vec![vec![1.0]]; k],
            converged: true,
            iterations: 1,
            final_log_likelihood: 0.0,
            log_likelihood_history: vec![],
            posteriors: points
                .iter()
                .map(|(id, _, p)| (id.to_string(), ProbabilityVector::new(p.to_vec()).unwrap()))
                .collect::<BTreeMap<_, _>>(),
            factors: OnceLock::new(),
        };
        (model, corpus)
    }

    #[test]
    fn identical_profile_ranks_first_with_zero() {
        let (m, c) =
            fixture(&[("q", &[0.0], &[0.7, 0.3]), ("same", &[9.0], &[0.7, 0.3]), ("other", &[0.1], &[0.2, 0.8])]);
        let out = recommend_gmm_kl(&m, &c, "q", 5).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].question_id, "same");
        assert_eq!(out[0].score, 0.0);
        assert_eq!(out[0].rank, 1);
        assert!(out[1].score > 0.0);
        assert!(matches!(recommend_gmm_kl(&m, &c, "nope", 1), Err(Error::UnknownQuestion(_))));
    }

    #[test]
    fn cluster_single_component_is_plain_nearest_neighbour() {
        let (m, c) =
            fixture(&[("q", &[0.0], &[1.0]), ("a", &[3.0], &[1.0]), ("b", &[-1.0], &[1.0]), ("d", &[2.0], &[1.0])]);
        let ids: Vec<_> = recommend_gmm_cluster(&m, &c, "q", 3).unwrap().into_iter().map(|r| r.question_id).collect();
        assert_eq!(ids, ["b", "d", "a"]);
    }

    #[test]
    fn cluster_alone_in_component_backfills() {
        // The query is the only member of component 0; its second choice is 2, then 1.
        let (m, c) = fixture(&[
            ("q", &[0.0], &[0.6, 0.1, 0.3]),
            ("c1", &[0.5], &[0.0, 1.0, 0.0]),
            ("c2far", &[4.0], &[0.1, 0.0, 0.9]),
            ("c2near", &[2.0], &[0.0, 0.2, 0.8]),
        ]);
        let out = recommend_gmm_cluster(&m, &c, "q", 3).unwrap();
        let ids: Vec<_> = out.iter().map(|r| r.question_id.as_str()).collect();
        assert_eq!(ids, ["c2near", "c2far", "c1"]);
        assert_eq!(out[0].score, 2.0);
    }
}
