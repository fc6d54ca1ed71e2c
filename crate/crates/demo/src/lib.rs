//! Browser demo: 2-D Gaussian blobs, a SOM, a GMM, and per-strategy
//! recommendations for a clicked point. Every method returns JSON so the page
//! script stays a thin canvas renderer.

use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use mathrec_core::testkit::{generate_blob_corpus, BlobSpec};
use mathrec_core::{
    fit_gmm, train_som, Corpus, Error, GmmConfig, GmmModel, Recommendation, SomConfig, SomModel, Strategy,
    StrategyRegistry, Subject,
};

const SUBJECT: Subject = Subject::Xyz;
/// Keeps every blob away from the origin so cosine scores stay meaningful.
const OFFSET: f64 = 12.0;

#[derive(Serialize)]
struct Point<'a> {
    id: &'a str,
    x: f64,
    y: f64,
    blob: usize,
}

#[derive(Serialize)]
struct SomView<'a> {
    rows: usize,
    cols: usize,
    weights: &'a [Vec<f64>],
    quantization_error: f64,
}

#[derive(Serialize)]
struct GmmView<'a> {
    weights: &'a [f64],
    means: &'a [Vec<f64>],
    covariances: &'a [Vec<Vec<f64>>],
    converged: bool,
    iterations: usize,
    log_likelihood: f64,
    /// Hard component per point, in point order.
    labels: Vec<usize>,
}

#[derive(Serialize)]
struct Recommendations {
    query: String,
    by_strategy: Vec<(Strategy, Vec<Recommendation>)>,
}

fn to_js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("demo views serialize")
}

#[wasm_bindgen]
pub struct Demo {
    corpus: Arc<Corpus>,
    labels: Vec<usize>,
    som: Option<SomModel>,
    gmm: Option<GmmModel>,
    seed: u64,
}

impl Demo {
    pub fn create(seed: u64, blobs: usize, points_per_blob: usize, spread: f64) -> Result<Demo, Error> {
        let spec = BlobSpec {
            subject: SUBJECT,
            n_blobs: blobs,
            points_per_blob,
            dim: 2,
            center_separation: 4.0,
            blob_std: spread,
            seed,
        };
        let generated = generate_blob_corpus(&spec)?;
        let records = generated
            .corpus
            .records()
            .iter()
            .map(|r| {
                let v: Vec<f64> = r.embedding.as_slice().iter().map(|c| c + OFFSET).collect();
                Ok(mathrec_core::QuestionRecord { embedding: v.try_into()?, ..r.clone() })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let corpus = Corpus::from_records(records)?;
        let labels = corpus.records().iter().map(|r| generated.labels[&r.id]).collect();
        Ok(Demo { corpus: Arc::new(corpus), labels, som: None, gmm: None, seed })
    }

    pub fn train(&mut self, rows: usize, cols: usize, epochs: usize) -> Result<String, Error> {
        let config = SomConfig { epochs, seed: self.seed, ..SomConfig::grid(rows, cols) };
        let model = train_som(&self.corpus, SUBJECT, &config)?;
        let view = json(&SomView {
            rows,
            cols,
            weights: &model.weights,
            quantization_error: mathrec_core::som::quantization_error(&model, &self.corpus)?,
        });
        self.som = Some(model);
        Ok(view)
    }

    pub fn fit(&mut self, k: usize) -> Result<String, Error> {
        let model = fit_gmm(&self.corpus, SUBJECT, &GmmConfig { seed: self.seed, ..GmmConfig::with_k(k) })?;
        let labels = self.corpus.records().iter().map(|r| model.posteriors[&r.id].argmax()).collect();
        let view = json(&GmmView {
            weights: &model.weights,
            means: &model.means,
            covariances: &model.covariances,
            converged: model.converged,
            iterations: model.iterations,
            log_likelihood: model.final_log_likelihood,
            labels,
        });
        self.gmm = Some(model);
        Ok(view)
    }

    /// Recommendations for the point nearest to `(x, y)` from every strategy
    /// whose model has been trained.
    pub fn recommend_near(&self, x: f64, y: f64, n: usize) -> Result<String, Error> {
        let query = self
            .corpus
            .records()
            .iter()
            .min_by(|a, b| {
                let d = |r: &mathrec_core::QuestionRecord| {
                    let v = r.embedding.as_slice();
                    (v[0] - x).powi(2) + (v[1] - y).powi(2)
                };
                d(a).total_cmp(&d(b))
            })
            .ok_or(Error::EmptySubject(SUBJECT))?;
        let mut registry = StrategyRegistry::new(self.corpus.clone(), self.seed).with_arms(Strategy::ALL);
        if let Some(m) = &self.som {
            registry.register_som(m.clone())?;
        }
        if let Some(m) = &self.gmm {
            registry.register_gmm(m.clone())?;
        }
        let mut by_strategy = Vec::new();
        for s in registry.routable_strategies() {
            by_strategy.push((s, registry.recommend(s, &query.id, n)?));
        }
        Ok(json(&Recommendations { query: query.id.clone(), by_strategy }))
    }

    pub fn points_json(&self) -> String {
        let points: Vec<Point> = self
            .corpus
            .records()
            .iter()
            .zip(&self.labels)
            .map(|(r, &blob)| {
                let v = r.embedding.as_slice();
                Point { id: &r.id, x: v[0], y: v[1], blob }
            })
            .collect();
        json(&points)
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, blobs: usize, points_per_blob: usize, spread: f64) -> Result<Demo, JsError> {
        Demo::create(u64::from(seed), blobs, points_per_blob, spread).map_err(to_js)
    }

    pub fn points(&self) -> String {
        self.points_json()
    }

    #[wasm_bindgen(js_name = trainSom)]
    pub fn train_som(&mut self, rows: usize, cols: usize, epochs: usize) -> Result<String, JsError> {
        self.train(rows, cols, epochs).map_err(to_js)
    }

    #[wasm_bindgen(js_name = fitGmm)]
    pub fn fit_gmm(&mut self, k: usize) -> Result<String, JsError> {
        self.fit(k).map_err(to_js)
    }

    pub fn recommend(&self, x: f64, y: f64, n: usize) -> Result<String, JsError> {
        self.recommend_near(x, y, n).map_err(to_js)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn full_session() {
        let mut demo = Demo::create(3, 3, 40, 0.6).unwrap();
        let points: Value = serde_json::from_str(&demo.points_json()).unwrap();
        assert_eq!(points.as_array().unwrap().len(), 120);

        let only_cosine: Value = serde_json::from_str(&demo.recommend_near(OFFSET, OFFSET, 5).unwrap()).unwrap();
        assert_eq!(only_cosine["by_strategy"].as_array().unwrap().len(), 1);

        let som: Value = serde_json::from_str(&demo.train(4, 4, 100).unwrap()).unwrap();
        assert_eq!(som["weights"].as_array().unwrap().len(), 16);
        let gmm: Value = serde_json::from_str(&demo.fit(3).unwrap()).unwrap();
        assert_eq!(gmm["means"].as_array().unwrap().len(), 3);
        assert_eq!(gmm["labels"].as_array().unwrap().len(), 120);

        let p = &points[0];
        let recs: Value =
            serde_json::from_str(&demo.recommend_near(p["x"].as_f64().unwrap(), p["y"].as_f64().unwrap(), 5).unwrap())
                .unwrap();
        assert_eq!(recs["query"], p["id"]);
        let by = recs["by_strategy"].as_array().unwrap();
        assert_eq!(by.len(), 4);
        assert!(by.iter().all(|s| s[1].as_array().unwrap().len() == 5));
    }

    #[test]
    fn bad_parameters_are_errors() {
        assert!(Demo::create(1, 0, 10, 1.0).is_err());
        let mut demo = Demo::create(1, 2, 5, 1.0).unwrap();
        assert!(demo.fit(50).is_err());
        assert!(demo.train(1, 1, 10).is_err());
    }
}
