use rand::Rng;
use rand_distr::StandardNormal;

use mathrec_core::rng::seeded;
use mathrec_core::{recommend_cosine, Corpus, Embedding, QuestionRecord, Subject};

fn random_corpus(n: usize, dim: usize, seed: u64) -> Corpus {
    let mut rng = seeded(seed);
    let records = (0..n)
        .map(|i| {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            QuestionRecord {
                id: format!("q{i:03}"),
                subject: Subject::ALL[rng.random_range(0..4)],
                text: format!("question {i}"),
                embedding: Embedding::new(v).unwrap(),
            }
        })
        .collect();
    Corpus::from_records(records).unwrap()
}

fn brute_force(corpus: &Corpus, query: &QuestionRecord, n: usize) -> Vec<String> {
    let q = query.embedding.as_slice();
    let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut all: Vec<(f64, &str)> = corpus
        .records()
        .iter()
        .filter(|r| r.id != query.id && r.subject == query.subject)
        .map(|r| {
            let v = r.embedding.as_slice();
            let dot: f64 = q.iter().zip(v).map(|(a, b)| a * b).sum();
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            ((dot / (qn * vn)).clamp(-1.0, 1.0), r.id.as_str())
        })
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    all.into_iter().take(n).map(|(_, id)| id.to_string()).collect()
}

#[test]
fn top_ten_matches_brute_force_on_every_query() {
    for seed in 0..5 {
        let corpus = random_corpus(200, 8, seed);
        for query in corpus.records() {
            let got: Vec<String> =
                recommend_cosine(&corpus, &query.id, 10).unwrap().into_iter().map(|r| r.question_id).collect();
            assert_eq!(got, brute_force(&corpus, query, 10), "seed {seed}, query {}", query.id);
        }
    }
}

#[test]
fn scores_descend_and_ranks_count_up() {
    let corpus = random_corpus(120, 5, 9);
    let recs = recommend_cosine(&corpus, "q007", 25).unwrap();
    assert!(recs.windows(2).all(|w| w[0].score >= w[1].score));
    assert!(recs.iter().enumerate().all(|(i, r)| r.rank == i + 1));
    assert!(recs.iter().all(|r| (-1.0..=1.0).contains(&r.score)));
}
