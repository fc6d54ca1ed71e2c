//! Per-subject model bindings and randomized, per-session strategy assignment.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cosine::{recommend_cosine, Recommendation};
use crate::data::{load_corpus, Corpus, Subject};
use crate::error::{Error, Result};
use crate::gmm::{recommend_gmm_cluster, recommend_gmm_kl, GmmModel};
use crate::som::{recommend_som, SomModel};

pub const MANIFEST_VERSION: u32 = 1;

/// A recommendation strategy. The names match the session-log algorithm labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    Cosine,
    Som,
    GmmKl,
    /// Top-component subset ranked by Euclidean distance.
    GmmCluster,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Cosine, Strategy::Som, Strategy::GmmKl, Strategy::GmmCluster];
    /// The three arms of the original experiment.
    pub const EXPERIMENT: [Strategy; 3] = [Strategy::Cosine, Strategy::Som, Strategy::GmmKl];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Cosine => "cosineSimilarityAlg",
            Strategy::Som => "somSimilarityAlg",
            Strategy::GmmKl => "gmmSimilarityAlg",
            Strategy::GmmCluster => "gmmClusterAlg",
        }
    }

    /// Like `parse`, but also accepts the short names `cosine`, `som`, `gmm`
    /// (or `gmm-kl`) and `gmm-cluster`.
    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Strategy::Cosine),
            "som" => Ok(Strategy::Som),
            "gmm" | "gmm-kl" => Ok(Strategy::GmmKl),
            "gmm-cluster" => Ok(Strategy::GmmCluster),
            _ => s.parse(),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.as_str().to_string()
    }
}

#[derive(Debug, Clone)]
pub struct StrategyRegistry {
    corpus: Arc<Corpus>,
    som: BTreeMap<Subject, SomModel>,
    gmm: BTreeMap<Subject, GmmModel>,
    assignment_seed: u64,
    arms: Vec<Strategy>,
}

impl StrategyRegistry {
    pub fn new(corpus: Arc<Corpus>, assignment_seed: u64) -> Self {
        StrategyRegistry {
            corpus,
            som: BTreeMap::new(),
            gmm: BTreeMap::new(),
            assignment_seed,
            arms: Strategy::EXPERIMENT.to_vec(),
        }
    }

    pub fn with_arms(mut self, arms: impl IntoIterator<Item = Strategy>) -> Self {
        let mut arms: Vec<Strategy> = arms.into_iter().collect();
        arms.sort();
        arms.dedup();
        self.arms = arms;
        self
    }

    pub fn register_som(&mut self, model: SomModel) -> Result<()> {
        model.validate()?;
        model.check_coverage(&self.corpus)?;
        self.som.insert(model.subject, model);
        Ok(())
    }

    pub fn register_gmm(&mut self, model: GmmModel) -> Result<()> {
        model.validate()?;
        model.check_coverage(&self.corpus)?;
        self.gmm.insert(model.subject, model);
        Ok(())
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn som(&self, subject: Subject) -> Option<&SomModel> {
        self.som.get(&subject)
    }

    pub fn gmm(&self, subject: Subject) -> Option<&GmmModel> {
        self.gmm.get(&subject)
    }

    pub fn arms(&self) -> &[Strategy] {
        &self.arms
    }

    pub fn assignment_seed(&self) -> u64 {
        self.assignment_seed
    }

    fn missing(&self, strategy: Strategy, subject: Subject) -> Option<Error> {
        match strategy {
            Strategy::Cosine => None,
            Strategy::Som if !self.som.contains_key(&subject) => Some(Error::MissingModel { model: "SOM", subject }),
            Strategy::GmmKl | Strategy::GmmCluster if !self.gmm.contains_key(&subject) => {
                Some(Error::MissingModel { model: "GMM", subject })
            }
            _ => None,
        }
    }

    pub fn is_routable(&self, strategy: Strategy, subject: Subject) -> bool {
        self.missing(strategy, subject).is_none()
    }

    /// Arms that can serve every subject present in the corpus.
    pub fn routable_strategies(&self) -> Vec<Strategy> {
        let subjects = self.corpus.subjects();
        if subjects.is_empty() {
            return Vec::new();
        }
        self.arms.iter().copied().filter(|&st| subjects.iter().all(|&s| self.is_routable(st, s))).collect()
    }

    /// Uniform choice among routable arms, fixed per `(assignment_seed, session_key)`.
    pub fn assign_strategy(&self, session_key: &str) -> Result<Strategy> {
        let arms = self.routable_strategies();
        if arms.is_empty() {
            return Err(Error::NoRoutableStrategy);
        }
        let mut h = Sha256::new();
        h.update(self.assignment_seed.to_le_bytes());
        h.update(session_key.as_bytes());
        let digest = h.finalize();
        let x = u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"));
        Ok(arms[(x % arms.len() as u64) as usize])
    }

    pub fn recommend(&self, strategy: Strategy, query_id: &str, n: usize) -> Result<Vec<Recommendation>> {
        let subject = self.corpus.require(query_id)?.subject;
        if let Some(e) = self.missing(strategy, subject) {
            return Err(e);
        }
        match strategy {
            Strategy::Cosine => recommend_cosine(&self.corpus, query_id, n),
            Strategy::Som => recommend_som(&self.som[&subject], &self.corpus, query_id, n),
            Strategy::GmmKl => recommend_gmm_kl(&self.gmm[&subject], &self.corpus, query_id, n),
            Strategy::GmmCluster => recommend_gmm_cluster(&self.gmm[&subject], &self.corpus, query_id, n),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectModels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub som: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gmm: Option<PathBuf>,
}

/// On-disk registry description. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub corpus: PathBuf,
    pub assignment_seed: u64,
    #[serde(default = "default_arms")]
    pub arms: Vec<Strategy>,
    #[serde(default)]
    pub models: BTreeMap<Subject, SubjectModels>,
}

fn default_arms() -> Vec<Strategy> {
    Strategy::EXPERIMENT.to_vec()
}

impl Manifest {
    pub fn new(corpus: impl Into<PathBuf>, assignment_seed: u64) -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            corpus: corpus.into(),
            assignment_seed,
            arms: default_arms(),
            models: BTreeMap::new(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let m: Manifest = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Model(format!("unsupported manifest version {}", m.version)));
        }
        Ok(m)
    }

    /// Loads the corpus and every referenced model, validating subjects and coverage.
    pub fn load_registry(path: impl AsRef<Path>) -> Result<StrategyRegistry> {
        let path = path.as_ref();
        let manifest = Manifest::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let corpus = Arc::new(load_corpus(resolve(&manifest.corpus))?);
        let mut registry =
            StrategyRegistry::new(corpus, manifest.assignment_seed).with_arms(manifest.arms.iter().copied());
        for (&subject, entry) in &manifest.models {
            if let Some(p) = &entry.som {
                let model = SomModel::load(resolve(p))?;
                if model.subject != subject {
                    return Err(Error::Model(format!(
                        "{} holds a SOM for {}, listed under {subject}",
                        p.display(),
                        model.subject
                    )));
                }
                registry.register_som(model)?;
            }
            if let Some(p) = &entry.gmm {
                let model = GmmModel::load(resolve(p))?;
                if model.subject != subject {
                    return Err(Error::Model(format!(
                        "{} holds a GMM for {}, listed under {subject}",
                        p.display(),
                        model.subject
                    )));
                }
                registry.register_gmm(model)?;
            }
        }
        Ok(registry)
    }
}
