// SPDX-License-Identifier: Apache-2.0

//! Pipeline configuration and the stages shared by the command-line
//! subcommands: load, graphs, relevance, RGT, features, model, annotations,
//! evaluation report.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotate::{train, AnnotationModel, TrainConfig};
use crate::error::{Error, Result};
use crate::evaluation::{holdout_experiment, write_report_csv, EvalData, Protocol, ReportRow};
use crate::event_log::{
    parse_event_log, parse_friendships, parse_metadata, validate_friendships, EventFormat, EventLog,
    FriendshipMatrix, MetadataTable,
};
use crate::features::{
    assemble_features, label_posteriors, modularity_features, tfidf_features, ContentFeatures, FeatureBlocks,
    FeatureMatrix,
};
use crate::graph_build::{
    build_location_graph, build_social_graph, build_spatiotemporal_graph, build_temporal_graph, ContextGraph,
};
use crate::periodicity::{periodic_relation, PeriodicRelation, PeriodicityConfig, ThresholdPolicy};
use crate::rgt::{build_rgt, RelationalGraphOfThings};
use crate::rwr::{combine, relevance_matrix, sum_relevance, DanglingPolicy, RelevanceMatrix, RwrConfig};

/// Every tunable of the pipeline. Loaded from TOML; unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub events: Option<PathBuf>,
    pub events_format: Option<String>,
    pub friendships: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub out_dir: PathBuf,

    pub time_bins: usize,
    pub tz_offset_secs: i64,
    pub dedupe_slots: bool,

    pub threshold: String,
    pub theta: f64,
    pub fold_daily: bool,
    pub binary: bool,

    pub alpha_social: f64,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub dangling: String,

    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub k_eig: usize,
    pub features: String,

    pub lambda: f64,
    pub iterations: usize,
    pub step: f64,
    pub annotate_k: usize,

    pub fractions: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let rwr = RwrConfig::default();
        let train = TrainConfig::default();
        PipelineConfig {
            events: None,
            events_format: None,
            friendships: None,
            metadata: None,
            out_dir: PathBuf::from("out"),
            time_bins: 24,
            tz_offset_secs: 0,
            dedupe_slots: false,
            threshold: ThresholdPolicy::default().to_string(),
            theta: 0.5,
            fold_daily: false,
            binary: false,
            alpha_social: 1.0,
            c: rwr.c,
            tol: rwr.tol,
            max_iter: rwr.max_iter,
            dangling: rwr.dangling.to_string(),
            alpha: 0.5,
            beta: 0.5,
            k: 5,
            k_eig: 8,
            features: "all".into(),
            lambda: train.lambda,
            iterations: train.iterations,
            step: train.step,
            annotate_k: 1,
            fractions: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            reps: 5,
            seed: 42,
        }
    }
}

/// The parameter subset that feeds the config hash (no paths).
#[derive(Serialize)]
struct HashView<'a> {
    time_bins: usize,
    tz_offset_secs: i64,
    dedupe_slots: bool,
    threshold: &'a str,
    theta: f64,
    fold_daily: bool,
    binary: bool,
    alpha_social: f64,
    c: f64,
    tol: f64,
    max_iter: usize,
    dangling: &'a str,
    alpha: f64,
    beta: f64,
    k: usize,
    k_eig: usize,
    features: &'a str,
    lambda: f64,
    iterations: usize,
    step: f64,
    annotate_k: usize,
    fractions: &'a [f64],
    reps: usize,
    seed: u64,
}

impl PipelineConfig {
    /// Reads a TOML file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.events, &mut cfg.friendships, &mut cfg.metadata].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_bins == 0 {
            return Err(Error::param("time_bins", "must be >= 1"));
        }
        self.periodicity()?.validate()?;
        self.rwr()?.validate()?;
        if !self.alpha_social.is_finite() {
            return Err(Error::param("alpha_social", "must be finite"));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("{v} not in [0, 1]")));
            }
        }
        if self.annotate_k == 0 {
            return Err(Error::param("annotate_k", "must be >= 1"));
        }
        self.blocks()?;
        self.event_format()?;
        self.protocol().validate()
    }

    pub fn periodicity(&self) -> Result<PeriodicityConfig> {
        Ok(PeriodicityConfig {
            policy: self.threshold.parse()?,
            theta: self.theta,
            fold_daily: self.fold_daily,
            binary: self.binary,
        })
    }

    pub fn rwr(&self) -> Result<RwrConfig> {
        Ok(RwrConfig {
            c: self.c,
            tol: self.tol,
            max_iter: self.max_iter,
            dangling: self.dangling.parse::<DanglingPolicy>()?,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            iterations: self.iterations,
            step: self.step,
        }
    }

    pub fn blocks(&self) -> Result<FeatureBlocks> {
        self.features.parse()
    }

    pub fn protocol(&self) -> Protocol {
        Protocol {
            fractions: self.fractions.clone(),
            reps: self.reps,
            seed: self.seed,
            k_rgt: self.k,
            k_eig: self.k_eig,
            train: self.train_config(),
        }
    }

    /// Explicit `events_format`, else inferred from the events extension.
    pub fn event_format(&self) -> Result<EventFormat> {
        if let Some(f) = &self.events_format {
            return f.parse();
        }
        let ext = self
            .events
            .as_ref()
            .and_then(|p| p.extension())
            .and_then(|e| e.to_str())
            .unwrap_or("csv");
        Ok(match ext {
            "jsonl" | "ndjson" | "json" => EventFormat::Jsonl,
            _ => EventFormat::Csv,
        })
    }

    /// First 16 hex digits of SHA-256 over the parameters (paths excluded).
    pub fn hash(&self) -> String {
        let view = HashView {
            time_bins: self.time_bins,
            tz_offset_secs: self.tz_offset_secs,
            dedupe_slots: self.dedupe_slots,
            threshold: &self.threshold,
            theta: self.theta,
            fold_daily: self.fold_daily,
            binary: self.binary,
            alpha_social: self.alpha_social,
            c: self.c,
            tol: self.tol,
            max_iter: self.max_iter,
            dangling: &self.dangling,
            alpha: self.alpha,
            beta: self.beta,
            k: self.k,
            k_eig: self.k_eig,
            features: &self.features,
            lambda: self.lambda,
            iterations: self.iterations,
            step: self.step,
            annotate_k: self.annotate_k,
            fractions: &self.fractions,
            reps: self.reps,
            seed: self.seed,
        };
        let bytes = serde_json::to_vec(&view).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))[..16].to_string()
    }

    fn require<'a>(&self, p: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        p.as_deref()
            .ok_or_else(|| Error::param(name, "no input file given (flag or config key)"))
    }
}

/// Parsed and validated inputs.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub log: EventLog,
    pub friendships: FriendshipMatrix,
    pub metadata: MetadataTable,
}

impl Inputs {
    pub fn new(log: EventLog, friendships: &FriendshipMatrix, metadata: MetadataTable) -> Self {
        let (friendships, _) = validate_friendships(friendships, &log);
        for m in metadata.entries() {
            if log.thing_index(&m.thing).is_none() {
                warn!("metadata for `{}` ignored: thing never appears in the event log", m.thing);
            }
        }
        Inputs {
            log,
            friendships,
            metadata,
        }
    }

    /// Metadata label sets aligned with the log's thing order.
    pub fn label_sets(&self) -> Vec<BTreeSet<usize>> {
        self.log.things().iter().map(|t| self.metadata.label_set(t)).collect()
    }

    pub fn content(&self) -> ContentFeatures {
        let docs: Vec<&str> = self.log.things().iter().map(|t| self.metadata.description(t)).collect();
        tfidf_features(&docs)
    }

    pub fn eval_data(&self) -> EvalData {
        EvalData {
            things: self.log.things().to_vec(),
            label_names: self.metadata.labels().to_vec(),
            labels: self.label_sets(),
            content: self.content(),
        }
    }
}

pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs> {
    let events = cfg.require(&cfg.events, "events")?;
    let mut log = parse_event_log(events, cfg.event_format()?, cfg.time_bins)?.with_tz_offset(cfg.tz_offset_secs);
    if cfg.dedupe_slots {
        log = log.dedupe_slots();
    }
    let friendships = match &cfg.friendships {
        Some(p) => parse_friendships(p)?,
        None => FriendshipMatrix::empty(),
    };
    let metadata = match &cfg.metadata {
        Some(p) => parse_metadata(p)?,
        None => MetadataTable::default(),
    };
    info!(
        "loaded {} events: {} things, {} users, {} locations",
        log.len(),
        log.things().len(),
        log.users().len(),
        log.locations().len()
    );
    Ok(Inputs::new(log, &friendships, metadata))
}

pub fn relation(inputs: &Inputs, cfg: &PipelineConfig) -> Result<PeriodicRelation> {
    periodic_relation(&inputs.log, &cfg.periodicity()?)
}

pub fn st_graph(inputs: &Inputs, cfg: &PipelineConfig) -> Result<ContextGraph> {
    build_spatiotemporal_graph(&inputs.log, &relation(inputs, cfg)?)
}

pub fn social_graph(inputs: &Inputs, cfg: &PipelineConfig) -> Result<ContextGraph> {
    build_social_graph(&inputs.log, &inputs.friendships, cfg.alpha_social)
}

#[derive(Debug, Clone)]
pub struct Relevances {
    pub st: RelevanceMatrix,
    pub social: RelevanceMatrix,
}

impl Relevances {
    pub fn combined(&self, alpha: f64, beta: f64) -> Result<RelevanceMatrix> {
        combine(&self.st, &self.social, alpha, beta)
    }
}

pub fn relevances(inputs: &Inputs, cfg: &PipelineConfig) -> Result<Relevances> {
    let rwr = cfg.rwr()?;
    Ok(Relevances {
        st: relevance_matrix(&st_graph(inputs, cfg)?, &rwr)?,
        social: relevance_matrix(&social_graph(inputs, cfg)?, &rwr)?,
    })
}

/// Relevance with location and time kept as two separate graphs.
pub fn no_sti_relevance(inputs: &Inputs, cfg: &PipelineConfig) -> Result<RelevanceMatrix> {
    let rwr = cfg.rwr()?;
    let loc = relevance_matrix(&build_location_graph(&inputs.log), &rwr)?;
    let time = relevance_matrix(&build_temporal_graph(&inputs.log), &rwr)?;
    sum_relevance(&[&loc, &time])
}

pub fn rgt(inputs: &Inputs, rel: &Relevances, cfg: &PipelineConfig) -> Result<RelationalGraphOfThings> {
    build_rgt(&rel.combined(cfg.alpha, cfg.beta)?, inputs.log.things(), cfg.k)
}

/// Full feature matrix over all things; labeled things train their label
/// posteriors leave-one-out.
pub fn features(
    inputs: &Inputs,
    r: &RelevanceMatrix,
    g: &RelationalGraphOfThings,
    cfg: &PipelineConfig,
) -> Result<FeatureMatrix> {
    let labels = inputs.metadata.labels();
    let train_sets = inputs.label_sets();
    if train_sets.iter().all(BTreeSet::is_empty) {
        return Err(Error::Empty("no labeled thing in metadata".into()));
    }
    let fl = label_posteriors(r, &train_sets, labels.len())?;
    let fs = modularity_features(g, cfg.k_eig)?;
    Ok(assemble_features(inputs.log.things(), labels, &fl, &fs, &inputs.content())?.select(cfg.blocks()?))
}

/// Trains on every thing whose metadata carries labels.
pub fn train_model(fm: &FeatureMatrix, metadata: &MetadataTable, cfg: &PipelineConfig) -> Result<AnnotationModel> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (t, row) in fm.things.iter().zip(&fm.rows) {
        let set = metadata.label_set(t);
        if !set.is_empty() {
            x.push(row.clone());
            y.push(set);
        }
    }
    train(&x, &y, metadata.labels(), &fm.header()[1..], &cfg.train_config())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRow {
    pub thing: String,
    pub rank: usize,
    pub label: String,
    pub score: f64,
}

/// Top-`k` labels for each thing in `things` (all feature rows if `None`).
pub fn annotate(
    model: &AnnotationModel,
    fm: &FeatureMatrix,
    things: Option<&[String]>,
    k: usize,
) -> Result<Vec<AnnotationRow>> {
    if model.feature_names != fm.header()[1..] {
        return Err(Error::DimensionMismatch(
            "feature columns differ from the ones the model was trained on".into(),
        ));
    }
    let targets: Vec<&String> = match things {
        Some(ts) => ts.iter().collect(),
        None => fm.things.iter().collect(),
    };
    let mut rows = Vec::new();
    for t in targets {
        let i = fm.thing_index(t).ok_or_else(|| Error::UnknownId {
            kind: "thing",
            id: t.clone(),
        })?;
        let p = model.predict(&fm.rows[i], k)?;
        for (rank, (l, score)) in p.ranked.into_iter().enumerate() {
            rows.push(AnnotationRow {
                thing: t.clone(),
                rank: rank + 1,
                label: model.labels[l].clone(),
                score,
            });
        }
    }
    Ok(rows)
}

/// Things lacking labels in `metadata`, in feature-matrix order.
pub fn unlabeled_things(fm: &FeatureMatrix, metadata: &MetadataTable) -> Vec<String> {
    fm.things
        .iter()
        .filter(|t| metadata.label_set(t).is_empty())
        .cloned()
        .collect()
}

pub fn write_annotations_csv<W: Write>(rows: &[AnnotationRow], mut out: W, config_hash: &str) -> Result<()> {
    let fmt = |e: std::io::Error| Error::Format(e.to_string());
    writeln!(out, "# config={config_hash}").map_err(fmt)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["thing", "rank", "label", "score"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.thing.clone(), r.rank.to_string(), r.label.clone(), r.score.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(fmt)
}

/// Holdout report at the configured `(alpha, beta)` and feature set.
pub fn report(inputs: &Inputs, rel: &Relevances, cfg: &PipelineConfig) -> Result<Vec<ReportRow>> {
    let r = rel.combined(cfg.alpha, cfg.beta)?;
    holdout_experiment(
        &inputs.eval_data(),
        &r,
        cfg.blocks()?,
        &cfg.protocol(),
        &cfg.features,
        cfg.alpha,
        cfg.beta,
    )
}

/// Paths of the artifacts written by [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub rgt: PathBuf,
    pub features: PathBuf,
    pub model: PathBuf,
    pub annotations: PathBuf,
    pub report: PathBuf,
}

impl Artifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Artifacts {
            rgt: dir.join("rgt.json"),
            features: dir.join("features.csv"),
            model: dir.join("model.txt"),
            annotations: dir.join("annotations.csv"),
            report: dir.join("report.csv"),
        }
    }
}

/// Opens `path` for writing, creating parent directories.
pub fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create_file(path)?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

/// Runs every stage and writes all artifacts into `cfg.out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let hash = cfg.hash();
    let out = Artifacts::in_dir(&cfg.out_dir);
    let inputs = load_inputs(cfg)?;
    let rel = relevances(&inputs, cfg)?;
    let r = rel.combined(cfg.alpha, cfg.beta)?;
    let g = build_rgt(&r, inputs.log.things(), cfg.k)?;
    write_text(&out.rgt, &g.to_json(Some(&hash)))?;

    let fm = features(&inputs, &r, &g, cfg)?;
    fm.write_csv(create_file(&out.features)?, &hash)?;

    let model = train_model(&fm, &inputs.metadata, cfg)?;
    write_text(&out.model, &model.to_text(&hash))?;

    let targets = unlabeled_things(&fm, &inputs.metadata);
    let rows = annotate(&model, &fm, Some(&targets), cfg.annotate_k)?;
    write_annotations_csv(&rows, create_file(&out.annotations)?, &hash)?;

    let report_rows = report(&inputs, &rel, cfg)?;
    write_report_csv(&report_rows, create_file(&out.report)?, false, &hash)?;
    Ok(out)
}
