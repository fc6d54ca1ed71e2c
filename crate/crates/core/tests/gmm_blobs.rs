use std::collections::BTreeSet;

use mathrec_core::gmm::{divergence, fit_gmm, recommend_gmm_kl, select_k, Divergence, GmmConfig, GmmModel};
use mathrec_core::testkit::{generate_blob_corpus, BlobSpec};
use mathrec_core::{Corpus, Subject};

fn blobs(n_blobs: usize, per_blob: usize, seed: u64) -> (Corpus, std::collections::BTreeMap<String, usize>) {
    let b = generate_blob_corpus(&BlobSpec {
        subject: Subject::Nog,
        n_blobs,
        points_per_blob: per_blob,
        dim: 8,
        center_separation: 10.0,
        blob_std: 1.0,
        seed,
    })
    .unwrap();
    (b.corpus, b.labels)
}

fn check_em_invariants(m: &GmmModel) {
    for w in m.log_likelihood_history.windows(2) {
        assert!(w[1] >= w[0] - 1e-8, "log-likelihood fell from {} to {}", w[0], w[1]);
    }
    for p in m.posteriors.values() {
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
    assert_eq!(m.final_log_likelihood, *m.log_likelihood_history.last().unwrap());
}

#[test]
fn em_is_monotone_across_k_and_seeds() {
    for seed in 0..5 {
        let (corpus, _) = blobs(3, 60, seed);
        for k in 1..=5 {
            let m = fit_gmm(&corpus, Subject::Nog, &GmmConfig { seed, ..GmmConfig::with_k(k) }).unwrap();
            check_em_invariants(&m);
        }
    }
}

#[test]
fn three_blobs_recover_labels() {
    let (corpus, labels) = blobs(3, 100, 11);
    let m = fit_gmm(&corpus, Subject::Nog, &GmmConfig { seed: 4, ..GmmConfig::with_k(3) }).unwrap();
    assert!(m.converged);
    check_em_invariants(&m);
    // Each component holds exactly one blob.
    for c in 0..3 {
        let blobs: BTreeSet<usize> =
            m.posteriors.iter().filter(|(_, p)| p.argmax() == c).map(|(id, _)| labels[id]).collect();
        assert_eq!(blobs.len(), 1, "component {c} mixes blobs {blobs:?}");
    }
}

#[test]
fn kl_recommendations_match_exhaustive_scan() {
    for seed in 0..5 {
        let (corpus, _) = blobs(3, 40, 100 + seed);
        for kind in [Divergence::Kl, Divergence::KlReverse, Divergence::JensenShannon] {
            let config = GmmConfig { seed, divergence: kind, ..GmmConfig::with_k(4) };
            let m = fit_gmm(&corpus, Subject::Nog, &config).unwrap();
            for query in corpus.records().iter().step_by(17) {
                let q = &m.posteriors[&query.id];
                let mut scan: Vec<(f64, &str)> = m
                    .posteriors
                    .iter()
                    .filter(|(id, _)| **id != query.id)
                    .map(|(id, p)| (divergence(kind, q, p).unwrap(), id.as_str()))
                    .collect();
                scan.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
                let expected: Vec<&str> = scan.iter().take(10).map(|s| s.1).collect();
                let got = recommend_gmm_kl(&m, &corpus, &query.id, 10).unwrap();
                let got: Vec<&str> = got.iter().map(|r| r.question_id.as_str()).collect();
                assert_eq!(got, expected);
            }
        }
    }
}

#[test]
fn bic_picks_three_for_three_blobs() {
    let mut hits = 0;
    for seed in 0..5 {
        let (corpus, _) = blobs(3, 100, 200 + seed);
        let sel = select_k(&corpus, Subject::Nog, 1..=6, &GmmConfig { seed, ..GmmConfig::default() }).unwrap();
        assert_eq!(sel.reports.len(), 6);
        hits += usize::from(sel.chosen_k == 3);
    }
    assert!(hits >= 4, "k = 3 chosen on {hits} of 5 seeds");
}
