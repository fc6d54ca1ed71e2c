use std::collections::BTreeMap;
use std::sync::Arc;

use mathrec_core::registry::SubjectModels;
use mathrec_core::testkit::{generate_multi_subject, BlobSpec};
use mathrec_core::{
    fit_gmm, recommend_gmm_kl, recommend_som, save_corpus, train_som, Corpus, GmmConfig, Manifest, SomConfig, Strategy,
    StrategyRegistry, Subject,
};

fn corpus() -> Corpus {
    let specs: Vec<BlobSpec> = [Subject::Xyz, Subject::Dtk]
        .into_iter()
        .enumerate()
        .map(|(i, subject)| BlobSpec {
            subject,
            n_blobs: 2,
            points_per_blob: 30,
            dim: 4,
            center_separation: 8.0,
            blob_std: 1.0,
            seed: i as u64,
        })
        .collect();
    generate_multi_subject(&specs).unwrap().corpus
}

fn full_registry(corpus: Arc<Corpus>) -> StrategyRegistry {
    let mut reg = StrategyRegistry::new(corpus.clone(), 99);
    for s in corpus.subjects() {
        let som = SomConfig { epochs: 50, ..SomConfig::grid(3, 3) };
        reg.register_som(train_som(&corpus, s, &som).unwrap()).unwrap();
        reg.register_gmm(fit_gmm(&corpus, s, &GmmConfig::with_k(2)).unwrap()).unwrap();
    }
    reg
}

#[test]
fn assignment_is_uniform_and_stable() {
    let reg = full_registry(Arc::new(corpus()));
    assert_eq!(reg.routable_strategies(), Strategy::EXPERIMENT.to_vec());
    let mut counts: BTreeMap<Strategy, usize> = BTreeMap::new();
    for i in 0..30_000 {
        let key = format!("session-{i}");
        let arm = reg.assign_strategy(&key).unwrap();
        assert_eq!(reg.assign_strategy(&key).unwrap(), arm);
        *counts.entry(arm).or_default() += 1;
    }
    for (arm, n) in counts {
        let share = 100.0 * n as f64 / 30_000.0;
        assert!((share - 100.0 / 3.0).abs() <= 1.5, "{arm}: {share:.2}%");
    }
}

#[test]
fn missing_models_shrink_the_routable_set() {
    let corpus = Arc::new(corpus());
    let mut reg = StrategyRegistry::new(corpus.clone(), 1);
    assert_eq!(reg.routable_strategies(), vec![Strategy::Cosine]);
    reg.register_som(train_som(&corpus, Subject::Xyz, &SomConfig { epochs: 5, ..SomConfig::grid(2, 2) }).unwrap())
        .unwrap();
    // A SOM for one of two subjects is not enough.
    assert_eq!(reg.routable_strategies(), vec![Strategy::Cosine]);
    assert!(reg.recommend(Strategy::Som, "DTK-00-0000", 3).is_err());
    assert!(reg.recommend(Strategy::Som, "XYZ-00-0000", 3).is_ok());
}

#[test]
fn manifest_round_trip_dispatches_like_direct_calls() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = Arc::new(corpus());
    save_corpus(&corpus, dir.path().join("corpus.jsonl")).unwrap();
    let reg = full_registry(corpus.clone());
    let mut manifest = Manifest::new("corpus.jsonl", 99);
    for s in corpus.subjects() {
        let (som, gmm) = (format!("som_{s}.json"), format!("gmm_{s}.json"));
        reg.som(s).unwrap().save(dir.path().join(&som)).unwrap();
        reg.gmm(s).unwrap().save(dir.path().join(&gmm)).unwrap();
        manifest.models.insert(s, SubjectModels { som: Some(som.into()), gmm: Some(gmm.into()) });
    }
    manifest.save(dir.path().join("manifest.json")).unwrap();
    let loaded = Manifest::load_registry(dir.path().join("manifest.json")).unwrap();

    for q in ["XYZ-01-0003", "DTK-00-0017"] {
        let s = corpus.require(q).unwrap().subject;
        assert_eq!(
            loaded.recommend(Strategy::Som, q, 10).unwrap(),
            recommend_som(reg.som(s).unwrap(), &corpus, q, 10).unwrap()
        );
        assert_eq!(
            loaded.recommend(Strategy::GmmKl, q, 10).unwrap(),
            recommend_gmm_kl(reg.gmm(s).unwrap(), &corpus, q, 10).unwrap()
        );
    }
    for i in 0..100 {
        let key = format!("k{i}");
        assert_eq!(loaded.assign_strategy(&key).unwrap(), reg.assign_strategy(&key).unwrap());
    }
}
