//! Gaussian mixture models with full covariance, fitted by EM.
//!
//! EM starts from a seeded k-means partition. Each iteration runs an E-step
//! (log-space responsibilities), then an M-step that adds `reg_covar` to every
//! covariance diagonal. Fitting stops when the mean per-sample
//! log-likelihood changes by less than `tol`, or after `max_iter` iterations.
//! A final E-step fills the per-question posterior vectors.

mod divergence;
mod kmeans;
mod recommend;
mod select;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, Subject};
use crate::error::{Error, Result};
use crate::rng;

pub use divergence::{divergence, jensen_shannon, kl_divergence, Divergence, ProbabilityVector, SMOOTHING_EPSILON};
pub use kmeans::{kmeans, KMeans, MAX_LLOYD_ITERATIONS};
pub use recommend::{hard_component, recommend_gmm_cluster, recommend_gmm_kl};
pub use select::{bic, free_parameters, select_k, silhouette, KReport, Selection};

pub const GMM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceType {
    #[default]
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub k: usize,
    #[serde(default)]
    pub covariance: CovarianceType,
    pub tol: f64,
    pub max_iter: usize,
    pub reg_covar: f64,
    pub seed: u64,
    #[serde(default)]
    pub divergence: Divergence,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            k: 1,
            covariance: CovarianceType::Full,
            tol: 1e-3,
            max_iter: 100,
            reg_covar: 1e-6,
            seed: 0,
            divergence: Divergence::default(),
        }
    }
}

impl GmmConfig {
    pub fn with_k(k: usize) -> Self {
        GmmConfig { k, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("gmm: {m}")));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        if !(self.reg_covar >= 0.0 && self.reg_covar.is_finite()) {
            return bad("reg_covar must be nonnegative");
        }
        Ok(())
    }
}

/// Component counts per subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectComponentCounts {
    #[serde(rename = "XYZ")]
    pub xyz: usize,
    #[serde(rename = "KVA")]
    pub kva: usize,
    #[serde(rename = "NOG")]
    pub nog: usize,
    #[serde(rename = "DTK")]
    pub dtk: usize,
}

impl Default for SubjectComponentCounts {
    fn default() -> Self {
        SubjectComponentCounts { xyz: 16, kva: 18, nog: 15, dtk: 31 }
    }
}

impl SubjectComponentCounts {
    pub fn get(&self, subject: Subject) -> usize {
        match subject {
            Subject::Xyz => self.xyz,
            Subject::Kva => self.kva,
            Subject::Nog => self.nog,
            Subject::Dtk => self.dtk,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if Subject::ALL.iter().any(|&s| self.get(s) == 0) {
            return Err(Error::InvalidConfig("component counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Cholesky factor and log-determinant of one component covariance.
#[derive(Debug, Clone)]
struct Factor {
    lower: DMatrix<f64>,
    log_det: f64,
}

impl Factor {
    fn new(cov: &DMatrix<f64>, component: usize) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(cov.clone()).ok_or(Error::NonFiniteLikelihood { component })?;
        let lower = chol.unpack();
        let log_det = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::NonFiniteLikelihood { component });
        }
        Ok(Factor { lower, log_det })
    }

    /// Squared Mahalanobis distance via forward substitution.
    fn mahalanobis(&self, x: &[f64], mean: &[f64], scratch: &mut [f64]) -> f64 {
        let d = x.len();
        let mut total = 0.0;
        for i in 0..d {
            let mut v = x[i] - mean[i];
            for j in 0..i {
                v -= self.lower[(i, j)] * scratch[j];
            }
            v /= self.lower[(i, i)];
            scratch[i] = v;
            total += v * v;
        }
        total
    }
}

#[derive(Debug, Clone)]
struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

impl Params {
    fn factors(&self) -> Result<Vec<Factor>> {
        self.covariances.iter().enumerate().map(|(c, cov)| Factor::new(cov, c)).collect()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Per-component `ln w_c + ln N(x | mu_c, Sigma_c)`.
fn weighted_log_densities(
    x: &[f64],
    weights: &[f64],
    means: &[Vec<f64>],
    factors: &[Factor],
    out: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    let norm = x.len() as f64 * (2.0 * PI).ln();
    for c in 0..weights.len() {
        let maha = factors[c].mahalanobis(x, &means[c], scratch);
        let v = weights[c].ln() - 0.5 * (norm + factors[c].log_det + maha);
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFiniteLikelihood { component: c });
        }
        out[c] = v;
    }
    Ok(())
}

/// Returns total log-likelihood and the responsibility matrix (n x k).
fn e_step(data: &[&[f64]], params: &Params) -> Result<(f64, Vec<Vec<f64>>)> {
    let k = params.weights.len();
    let factors = params.factors()?;
    let mut scratch = vec![0.0; data[0].len()];
    let mut logp = vec![0.0; k];
    let mut total = 0.0;
    let mut resp = Vec::with_capacity(data.len());
    for x in data {
        weighted_log_densities(x, &params.weights, &params.means, &factors, &mut logp, &mut scratch)?;
        let lse = log_sum_exp(&logp);
        if !lse.is_finite() {
            let worst =
                (0..k).max_by(|&a, &b| logp[a].partial_cmp(&logp[b]).unwrap_or(std::cmp::Ordering::Equal)).unwrap_or(0);
            return Err(Error::NonFiniteLikelihood { component: worst });
        }
        total += lse;
        resp.push(logp.iter().map(|v| (v - lse).exp()).collect());
    }
    Ok((total, resp))
}

fn m_step(data: &[&[f64]], resp: &[Vec<f64>], reg_covar: f64) -> Params {
    let n = data.len();
    let k = resp[0].len();
    let d = data[0].len();
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covariances = Vec::with_capacity(k);
    for c in 0..k {
        let nk: f64 = resp.iter().map(|r| r[c]).sum::<f64>() + 10.0 * f64::EPSILON;
        let mut mean = vec![0.0; d];
        for (x, r) in data.iter().zip(resp) {
            for (m, v) in mean.iter_mut().zip(x.iter()) {
                *m += r[c] * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        let mut diff = vec![0.0; d];
        for (x, r) in data.iter().zip(resp) {
            let w = r[c];
            if w == 0.0 {
                continue;
            }
            for i in 0..d {
                diff[i] = x[i] - mean[i];
            }
            for i in 0..d {
                let wi = w * diff[i];
                for j in 0..=i {
                    cov[(i, j)] += wi * diff[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..=i {
                let v = cov[(i, j)] / nk;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
            cov[(i, i)] += reg_covar;
        }
        weights.push(nk / n as f64);
        means.push(mean);
        covariances.push(cov);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Params { weights, means, covariances }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmModel {
    pub version: u32,
    pub config: GmmConfig,
    pub subject: Subject,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `dim x dim` matrices.
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub converged: bool,
    pub iterations: usize,
    pub final_log_likelihood: f64,
    /// Total log-likelihood after each E-step, ending with the fitted parameters.
    pub log_likelihood_history: Vec<f64>,
    pub posteriors: BTreeMap<String, ProbabilityVector>,
    #[serde(skip)]
    factors: OnceLock<Vec<Factor>>,
}

impl PartialEq for GmmModel {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version
            && self.config == other.config
            && self.subject == other.subject
            && self.dim == other.dim
            && self.weights == other.weights
            && self.means == other.means
            && self.covariances == other.covariances
            && self.converged == other.converged
            && self.iterations == other.iterations
            && self.final_log_likelihood.to_bits() == other.final_log_likelihood.to_bits()
            && self.log_likelihood_history == other.log_likelihood_history
            && self.posteriors == other.posteriors
    }
}

pub fn fit_gmm(corpus: &Corpus, subject: Subject, config: &GmmConfig) -> Result<GmmModel> {
    config.validate()?;
    let slice = corpus.subject_slice(subject);
    let n = slice.len();
    if n < config.k {
        return Err(Error::TooFewSamples { subject, k: config.k, n });
    }
    let data: Vec<&[f64]> = slice.iter().map(|r| r.embedding.as_slice()).collect();
    let dim = corpus.dim();
    let k = config.k;

    let init = kmeans(&data, k, &mut rng::seeded(config.seed));
    let one_hot: Vec<Vec<f64>> =
        init.labels.iter().map(|&l| (0..k).map(|c| if c == l { 1.0 } else { 0.0 }).collect()).collect();
    let mut params = m_step(&data, &one_hot, config.reg_covar);
    // A component left empty by k-means keeps its k-means center.
    for (c, center) in init.centers.iter().enumerate() {
        if !init.labels.contains(&c) {
            params.means[c] = center.clone();
        }
    }

    let mut history = Vec::new();
    let mut previous_mean = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        let (ll, resp) = e_step(&data, &params)?;
        history.push(ll);
        params = m_step(&data, &resp, config.reg_covar);
        let mean_ll = ll / n as f64;
        if (mean_ll - previous_mean).abs() < config.tol {
            converged = true;
            break;
        }
        previous_mean = mean_ll;
    }
    let (final_ll, resp) = e_step(&data, &params)?;
    history.push(final_ll);

    let posteriors = slice
        .iter()
        .zip(resp)
        .map(|(r, p)| Ok((r.id.clone(), ProbabilityVector::normalized(p)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;

    Ok(GmmModel {
        version: GMM_FORMAT_VERSION,
        config: config.clone(),
        subject,
        dim,
        weights: params.weights,
        means: params.means,
        covariances: params
            .covariances
            .iter()
            .map(|m| (0..dim).map(|i| (0..dim).map(|j| m[(i, j)]).collect()).collect())
            .collect(),
        converged,
        iterations,
        final_log_likelihood: final_ll,
        log_likelihood_history: history,
        posteriors,
        factors: OnceLock::new(),
    })
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    fn factors(&self) -> Result<&[Factor]> {
        if let Some(f) = self.factors.get() {
            return Ok(f);
        }
        let built = self
            .covariances
            .iter()
            .enumerate()
            .map(|(c, rows)| Factor::new(&DMatrix::from_fn(self.dim, self.dim, |i, j| rows[i][j]), c))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.factors.get_or_init(|| built))
    }

    /// Posterior component probabilities of `x`, computed in log space.
    pub fn posterior(&self, x: &[f64]) -> Result<ProbabilityVector> {
        if x.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: x.len() });
        }
        let factors = self.factors()?;
        let mut logp = vec![0.0; self.k()];
        let mut scratch = vec![0.0; self.dim];
        weighted_log_densities(x, &self.weights, &self.means, factors, &mut logp, &mut scratch)?;
        let lse = log_sum_exp(&logp);
        if !lse.is_finite() {
            return Err(Error::NonFiniteLikelihood { component: 0 });
        }
        ProbabilityVector::normalized(logp.iter().map(|v| (v - lse).exp()).collect())
    }

    /// Total log-likelihood of `data` under the fitted mixture.
    pub fn log_likelihood(&self, data: &[&[f64]]) -> Result<f64> {
        let factors = self.factors()?;
        let mut logp = vec![0.0; self.k()];
        let mut scratch = vec![0.0; self.dim];
        let mut total = 0.0;
        for x in data {
            if x.len() != self.dim {
                return Err(Error::DimMismatch { expected: self.dim, found: x.len() });
            }
            weighted_log_densities(x, &self.weights, &self.means, factors, &mut logp, &mut scratch)?;
            total += log_sum_exp(&logp);
        }
        Ok(total)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Model(format!("gmm {}: {m}", self.subject)));
        if self.version != GMM_FORMAT_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        let k = self.k();
        if k == 0 || self.means.len() != k || self.covariances.len() != k {
            return bad("inconsistent component count".into());
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 || self.weights.iter().any(|&w| w <= 0.0) {
            return bad("weights must be positive and sum to 1".into());
        }
        for (c, (m, cov)) in self.means.iter().zip(&self.covariances).enumerate() {
            if m.len() != self.dim || cov.len() != self.dim || cov.iter().any(|r| r.len() != self.dim) {
                return bad(format!("component {c} has wrong shape"));
            }
            for i in 0..self.dim {
                for j in 0..i {
                    if (cov[i][j] - cov[j][i]).abs() > 1e-9 {
                        return bad(format!("covariance {c} is not symmetric"));
                    }
                }
            }
        }
        self.factors()?;
        for (id, p) in &self.posteriors {
            if p.len() != k {
                return bad(format!("posterior of {id:?} has length {}", p.len()));
            }
        }
        Ok(())
    }

    pub fn check_coverage(&self, corpus: &Corpus) -> Result<()> {
        if corpus.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: corpus.dim() });
        }
        let slice = corpus.subject_slice(self.subject);
        if slice.len() != self.posteriors.len() || slice.iter().any(|r| !self.posteriors.contains_key(&r.id)) {
            return Err(Error::Model(format!("gmm {} posteriors do not match the corpus", self.subject)));
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
        let model: GmmModel = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        model.validate()?;
        Ok(model)
    }
}
