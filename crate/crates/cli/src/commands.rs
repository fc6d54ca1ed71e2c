use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use mathrec_core::analytics::{report, SessionLog};
use mathrec_core::gmm::select_k;
use mathrec_core::registry::SubjectModels;
use mathrec_core::rng::derive_seed;
use mathrec_core::som::quantization_error;
use mathrec_core::testkit::{generate_multi_subject, reference_log, BlobSpec};
use mathrec_core::{
    fit_gmm, load_corpus, read_corpus, save_corpus, train_som, Error, Manifest, Result, RunConfig, Strategy,
    StrategyRegistry, Subject,
};

use crate::{AnalyzeArgs, AssignArgs, Command, GenFixturesArgs, IngestArgs, RecommendArgs, SelectKArgs, TrainArgs};

pub fn run(command: Command, config: RunConfig) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a, &config),
        Command::Train(a) => train(a, config),
        Command::SelectK(a) => select(a, config),
        Command::Recommend(a) => recommend(a, &config),
        Command::Assign(a) => assign(a, &config),
        Command::Analyze(a) => analyze(a, config),
        Command::GenFixtures(a) => gen_fixtures(a, &config),
        Command::Config => emit(&config.to_toml()),
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes to stdout; a closed pipe (`mathrec ... | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize + ?Sized>(value: &T) -> Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

fn ingest(a: IngestArgs, config: &RunConfig) -> Result<()> {
    let corpus = read_corpus(BufReader::new(File::open(&a.input)?))?;
    let output = a.output.unwrap_or_else(|| config.paths.corpus.clone());
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_corpus(&corpus, &output)?;
    #[derive(Serialize)]
    struct Ingested<'a> {
        output: &'a Path,
        questions: usize,
        dim: usize,
        subjects: BTreeMap<Subject, usize>,
    }
    print_json(&Ingested {
        output: &output,
        questions: corpus.len(),
        dim: corpus.dim(),
        subjects: corpus.subject_counts(),
    })
}

#[derive(Debug, Serialize)]
struct SomSummary {
    rows: usize,
    cols: usize,
    epochs: usize,
    quantization_error: f64,
}

#[derive(Debug, Serialize)]
struct GmmSummary {
    k: usize,
    converged: bool,
    iterations: usize,
    final_log_likelihood: f64,
}

#[derive(Debug, Serialize)]
struct SubjectSummary {
    questions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    som: Option<SomSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gmm: Option<GmmSummary>,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    seed: u64,
    dim: usize,
    subjects: BTreeMap<Subject, SubjectSummary>,
}

fn train(a: TrainArgs, mut config: RunConfig) -> Result<()> {
    if let Some(e) = a.epochs {
        config.som.epochs = e;
    }
    for (subject, k) in a.k {
        let c = &mut config.gmm.components;
        *match subject {
            Subject::Xyz => &mut c.xyz,
            Subject::Kva => &mut c.kva,
            Subject::Nog => &mut c.nog,
            Subject::Dtk => &mut c.dtk,
        } = k;
    }
    if a.no_som {
        config.strategies.train_som = false;
    }
    if a.no_gmm {
        config.strategies.train_gmm = false;
    }
    config.validate()?;

    let corpus = load_corpus(a.corpus.as_ref().unwrap_or(&config.paths.corpus))?;
    let dir = a.models.unwrap_or_else(|| config.paths.models.clone());
    fs::create_dir_all(&dir)?;
    save_corpus(&corpus, dir.join("corpus.jsonl"))?;

    let mut manifest = Manifest::new("corpus.jsonl", config.assignment_seed());
    manifest.arms = config.strategies.arms.clone();
    let mut summary = TrainSummary { seed: config.seed, dim: corpus.dim(), subjects: BTreeMap::new() };
    for subject in corpus.subjects() {
        let mut entry = SubjectModels::default();
        let mut s = SubjectSummary { questions: corpus.subject_slice(subject).len(), som: None, gmm: None };
        if config.strategies.train_som {
            let som_config = config.som_config(subject);
            let model = train_som(&corpus, subject, &som_config)?;
            let file = format!("som_{subject}.json");
            model.save(dir.join(&file))?;
            let mut w = BufWriter::new(File::create(dir.join(format!("som_{subject}_assignments.csv")))?);
            model.write_assignments_csv(&mut w)?;
            w.flush()?;
            s.som = Some(SomSummary {
                rows: som_config.rows,
                cols: som_config.cols,
                epochs: som_config.epochs,
                quantization_error: quantization_error(&model, &corpus)?,
            });
            entry.som = Some(PathBuf::from(file));
        }
        if config.strategies.train_gmm {
            let model = fit_gmm(&corpus, subject, &config.gmm_config(subject))?;
            let file = format!("gmm_{subject}.json");
            model.save(dir.join(&file))?;
            s.gmm = Some(GmmSummary {
                k: model.k(),
                converged: model.converged,
                iterations: model.iterations,
                final_log_likelihood: model.final_log_likelihood,
            });
            entry.gmm = Some(PathBuf::from(file));
        }
        manifest.models.insert(subject, entry);
        summary.subjects.insert(subject, s);
    }
    manifest.save(dir.join("manifest.json"))?;
    write_json(&dir.join("training_summary.json"), &summary)?;
    print_json(&summary)
}

fn select(a: SelectKArgs, mut config: RunConfig) -> Result<()> {
    if let Some(k) = a.k_min {
        config.select_k.k_min = k;
    }
    if let Some(k) = a.k_max {
        config.select_k.k_max = k;
    }
    config.validate()?;
    let corpus = load_corpus(a.corpus.as_ref().unwrap_or(&config.paths.corpus))?;
    let subjects = match a.subject {
        Some(s) => vec![s],
        None => corpus.subjects(),
    };
    let dir = a.output.unwrap_or_else(|| config.paths.output.clone());
    fs::create_dir_all(&dir)?;
    let mut chosen = BTreeMap::new();
    for subject in subjects {
        let ks = config.select_k.k_min..=config.select_k.k_max;
        let sel = select_k(&corpus, subject, ks, &config.select_k_template(subject))?;
        let mut w = BufWriter::new(File::create(dir.join(format!("select_k_{subject}.csv")))?);
        sel.write_csv(&mut w)?;
        w.flush()?;
        chosen.insert(subject, sel.chosen_k);
    }
    print_json(&chosen)
}

fn registry(models: Option<PathBuf>, config: &RunConfig) -> Result<StrategyRegistry> {
    let dir = models.unwrap_or_else(|| config.paths.models.clone());
    Manifest::load_registry(dir.join("manifest.json"))
}

fn recommend(a: RecommendArgs, config: &RunConfig) -> Result<()> {
    let reg = registry(a.models, config)?;
    let recs = reg.recommend(a.strategy, &a.query, a.n.unwrap_or(config.recommend_n))?;
    print_json(&recs)
}

fn assign(a: AssignArgs, config: &RunConfig) -> Result<()> {
    #[derive(Serialize)]
    struct Assignment<'a> {
        session: &'a str,
        strategy: Strategy,
    }
    let reg = registry(a.models, config)?;
    let out = a
        .sessions
        .iter()
        .map(|s| Ok(Assignment { session: s, strategy: reg.assign_strategy(s)? }))
        .collect::<Result<Vec<_>>>()?;
    print_json(&out)
}

fn analyze(a: AnalyzeArgs, mut config: RunConfig) -> Result<()> {
    if a.no_trailing_streaks {
        config.analytics.count_trailing_streaks = false;
    }
    let log = SessionLog::load(
        a.sessions.as_ref().unwrap_or(&config.paths.sessions),
        a.questions.as_ref().unwrap_or(&config.paths.questions),
    )?;
    let r = report(&log, &config.report_filters())?;
    let dir = a.output.unwrap_or_else(|| config.paths.output.clone());
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("report.json"), &r)?;
    let text = r.to_text();
    fs::write(dir.join("report.txt"), &text)?;
    emit(&text)
}

fn gen_fixtures(a: GenFixturesArgs, config: &RunConfig) -> Result<()> {
    if a.blobs == 0 || !a.per_subject.is_multiple_of(a.blobs) {
        return Err(Error::InvalidConfig(format!(
            "--per-subject {} must be a positive multiple of --blobs {}",
            a.per_subject, a.blobs
        )));
    }
    let seed = config.fixture_seed();
    let specs: Vec<BlobSpec> = Subject::ALL
        .iter()
        .map(|&subject| BlobSpec {
            subject,
            n_blobs: a.blobs,
            points_per_blob: a.per_subject / a.blobs,
            dim: a.dim,
            center_separation: 10.0,
            blob_std: 1.0,
            seed: derive_seed(seed, &format!("blobs/{subject}")),
        })
        .collect();
    let blobs = generate_multi_subject(&specs)?;
    fs::create_dir_all(&a.output)?;
    save_corpus(&blobs.corpus, a.output.join("corpus.jsonl"))?;

    let mut labels = BufWriter::new(File::create(a.output.join("labels.csv"))?);
    writeln!(labels, "question_id,subject,blob")?;
    for r in blobs.corpus.records() {
        writeln!(labels, "{},{},{}", r.id, r.subject, blobs.labels[&r.id])?;
    }
    labels.flush()?;

    let log = reference_log(derive_seed(seed, "log"))?;
    log.write(
        BufWriter::new(File::create(a.output.join("sessions.csv"))?),
        BufWriter::new(File::create(a.output.join("session_questions.csv"))?),
    )?;
    #[derive(Serialize)]
    struct Generated {
        questions: usize,
        sessions: usize,
        session_questions: usize,
    }
    print_json(&Generated {
        questions: blobs.corpus.len(),
        sessions: log.sessions.len(),
        session_questions: log.questions.len(),
    })
}
