//! Choosing the number of components by BIC, with silhouette scores reported alongside.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{euclidean, Corpus, Subject};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

use super::{fit_gmm, GmmConfig};

/// Free parameters of a full-covariance mixture: weights, means, covariances.
pub fn free_parameters(k: usize, dim: usize) -> usize {
    (k - 1) + k * dim + k * dim * (dim + 1) / 2
}

pub fn bic(log_likelihood: f64, k: usize, dim: usize, n: usize) -> f64 {
    free_parameters(k, dim) as f64 * (n as f64).ln() - 2.0 * log_likelihood
}

/// Mean silhouette of a hard clustering under Euclidean distance.
///
/// Points in singleton clusters score 0. Returns `None` when fewer than two
/// clusters are populated.
pub fn silhouette(data: &[&[f64]], labels: &[usize]) -> Option<f64> {
    let k = labels.iter().copied().max()? + 1;
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return None;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for (i, x) in data.iter().enumerate() {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (j, y) in data.iter().enumerate() {
            if i != j {
                sums[labels[j]] += euclidean(x, y);
            }
        }
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Some(total / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KReport {
    pub k: usize,
    pub bic: Option<f64>,
    pub silhouette: Option<f64>,
    pub converged: bool,
    pub log_likelihood: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub subject: Subject,
    pub chosen_k: usize,
    pub reports: Vec<KReport>,
}

impl Selection {
    /// CSV with header `k,bic,silhouette,converged,log_likelihood`; failed fits leave fields empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["k", "bic", "silhouette", "converged", "log_likelihood"]).map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.reports {
            w.write_record([
                r.k.to_string(),
                opt(r.bic),
                opt(r.silhouette),
                r.converged.to_string(),
                opt(r.log_likelihood),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fits one mixture per candidate `k` (seeded from the template seed and `k`)
/// and picks the lowest BIC. Per-k failures are recorded; only a total
/// failure is an error.
pub fn select_k(
    corpus: &Corpus,
    subject: Subject,
    ks: impl IntoIterator<Item = usize>,
    template: &GmmConfig,
) -> Result<Selection> {
    let ks: Vec<usize> = ks.into_iter().collect();
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidConfig("k range must be non-empty and start at 1 or more".into()));
    }
    let slice = corpus.subject_slice(subject);
    if slice.is_empty() {
        return Err(Error::EmptySubject(subject));
    }
    let data: Vec<&[f64]> = slice.iter().map(|r| r.embedding.as_slice()).collect();
    let n = data.len();
    let dim = corpus.dim();

    let mut reports = Vec::with_capacity(ks.len());
    let mut first_error = None;
    for k in ks {
        let config = GmmConfig { k, seed: derive_seed(template.seed, &format!("k={k}")), ..template.clone() };
        match fit_gmm(corpus, subject, &config) {
            Ok(model) => {
                let labels: Vec<usize> = slice.iter().map(|r| model.posteriors[&r.id].argmax()).collect();
                reports.push(KReport {
                    k,
                    bic: Some(bic(model.final_log_likelihood, k, dim, n)),
                    silhouette: silhouette(&data, &labels),
                    converged: model.converged,
                    log_likelihood: Some(model.final_log_likelihood),
                    error: None,
                });
            }
            Err(e) => {
                reports.push(KReport {
                    k,
                    bic: None,
                    silhouette: None,
                    converged: false,
                    log_likelihood: None,
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let chosen = reports
        .iter()
        .filter_map(|r| r.bic.map(|b| (r.k, b)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    match chosen {
        Some((chosen_k, _)) => Ok(Selection { subject, chosen_k, reports }),
        None => Err(first_error.unwrap_or(Error::Model("no k could be fitted".into()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_by_hand() {
        // k=1, d=2: mean 2 + covariance 3 = 5, no free weight.
        assert_eq!(free_parameters(1, 2), 5);
        // k=2, d=2: one free weight + 2*2 means + 2*3 covariances = 11.
        assert_eq!(free_parameters(2, 2), 11);
        // k=1, d=1: mean + variance.
        assert_eq!(free_parameters(1, 1), 2);
        assert_eq!(free_parameters(3, 8), 2 + 24 + 3 * 36);
    }

    #[test]
    fn bic_formula() {
        let v = bic(-100.0, 2, 2, 50);
        assert!((v - (11.0 * 50f64.ln() + 200.0)).abs() < 1e-12);
    }

    #[test]
    fn silhouette_by_hand() {
        // Clusters {0, 1} and {10}: point 0: a=1, b=10 -> 0.9; point 1: a=1, b=9 -> 8/9;
        // point 10 is a singleton -> 0.
        let pts = [[0.0], [1.0], [10.0]];
        let data: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let s = silhouette(&data, &[0, 0, 1]).unwrap();
        assert!((s - (0.9 + 8.0 / 9.0) / 3.0).abs() < 1e-12);
        assert_eq!(silhouette(&data, &[1, 1, 1]), None);
    }
}
