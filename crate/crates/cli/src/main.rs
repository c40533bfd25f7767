// SPDX-License-Identifier: Apache-2.0

//! `discort`: correlation mining and thing annotation from usage logs.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use discort_core::annotate::AnnotationModel;
use discort_core::evaluation::{
    alpha_beta_sweep, default_grid, holdout_experiment, write_report_csv, ReportRow,
};
use discort_core::event_log::{validate_friendships, write_events_csv};
use discort_core::features::{FeatureBlocks, FeatureMatrix};
use discort_core::graph_build::{build_location_graph, build_temporal_graph, ContextGraph};
use discort_core::periodicity::{dominant_indices, location_sequence, periodogram};
use discort_core::pipeline::{
    self, annotate, create_file, load_inputs, no_sti_relevance, relevances, run_pipeline, train_model,
    unlabeled_things, write_annotations_csv, write_text, Artifacts, PipelineConfig,
};
use discort_core::rgt::{build_rgt, RgtFormat};
use discort_core::rwr::{rwr_steady_state, transition_matrix};
use discort_core::synth::{generate, write_synth, SynthConfig};
use discort_core::{Error, Result};

#[derive(Parser)]
#[command(name = "discort", version, about = "Mine correlations between things from human-thing usage logs")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted clusters.
    Synth(SynthArgs),
    /// Parse and validate the inputs, print a summary.
    Ingest(IngestArgs),
    /// Periodogram of one location's activity sequence.
    Periodogram(PeriodogramArgs),
    /// Dump a context graph as `src,dst,weight` triplets.
    Graph(GraphArgs),
    /// Stationary distribution of a walk seeded at one thing.
    Rwr(RwrArgs),
    /// Build the relational graph of things.
    Rgt(RgtArgs),
    /// Write the per-thing feature matrix.
    Features(OutArgs),
    /// Train the one-vs-rest annotation model.
    Train(TrainArgs),
    /// Rank labels for things with a trained model.
    Annotate(AnnotateArgs),
    /// Holdout evaluation, parameter sweep, or setting comparisons.
    Eval(EvalArgs),
    /// Run every stage and write all artifacts.
    Pipeline(PipelineArgs),
}

/// Inputs and parameters shared by the analysis subcommands. Precedence:
/// flag, then config file, then built-in default.
#[derive(Args, Clone, Default)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long, value_name = "TOML")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    events: Option<PathBuf>,
    /// csv or jsonl; inferred from the extension by default.
    #[arg(long, value_name = "FMT")]
    events_format: Option<String>,
    #[arg(long, value_name = "PATH")]
    friendships: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    metadata: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    time_bins: Option<usize>,
    /// Offset added to timestamps before binning, in seconds.
    #[arg(long, allow_hyphen_values = true)]
    tz_offset_secs: Option<i64>,
    /// Collapse repeated (thing, user, location) events within one slot.
    #[arg(long, visible_alias = "dedupe-slot")]
    dedupe_slots: bool,
    /// mean-std:<z>, false-alarm:<alpha> or energy:<fraction>.
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    /// Detect periods on a single folded day instead of the full span.
    #[arg(long)]
    fold_daily: bool,
    /// Use 0/1 slot indicators instead of counts.
    #[arg(long)]
    binary: bool,
    #[arg(long)]
    alpha_social: Option<f64>,
    /// Restart probability, in (0, 1].
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// self-loop or uniform.
    #[arg(long)]
    dangling: Option<String>,
    /// Weight of the spatio-temporal relevance.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the social relevance.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    k_eig: Option<usize>,
    /// all, structural, content, or a `+` list of FL, FS, FC.
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

macro_rules! set {
    ($cfg:ident, $src:ident, $($field:ident),+) => {
        $( if let Some(v) = $src.$field.clone() { $cfg.$field = v; } )+
    };
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        for (slot, v) in [
            (&mut cfg.events, &self.events),
            (&mut cfg.friendships, &self.friendships),
            (&mut cfg.metadata, &self.metadata),
        ] {
            if v.is_some() {
                slot.clone_from(v);
            }
        }
        if self.events_format.is_some() {
            cfg.events_format.clone_from(&self.events_format);
        }
        cfg.dedupe_slots |= self.dedupe_slots;
        cfg.fold_daily |= self.fold_daily;
        cfg.binary |= self.binary;
        set!(
            cfg, self, out_dir, time_bins, tz_offset_secs, threshold, theta, alpha_social, c, tol, max_iter,
            dangling, alpha, beta, k_eig, features, lambda, iterations, step, seed
        );
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Generator config (TOML); defaults apply to missing keys.
    #[arg(long, value_name = "TOML")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise_rate: Option<f64>,
    #[arg(long)]
    days: Option<usize>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    /// Also write the parsed events back out as normalized CSV.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PeriodogramArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    location: String,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    St,
    Social,
    Location,
    Temporal,
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "st")]
    which: Which,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RwrArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "THING")]
    seed_thing: String,
    #[arg(long, value_enum, default_value = "st")]
    which: Which,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Dot,
    Graphml,
}

#[derive(Args)]
struct RgtArgs {
    #[command(flatten)]
    common: Common,
    /// Neighbors kept per thing.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Defaults to `<out-dir>/rgt.<ext>`.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OutArgs {
    #[command(flatten)]
    common: Common,
    /// Neighbors kept per thing in the RGT.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Feature CSV; defaults to `<out-dir>/features.csv`.
    #[arg(long = "feature-file", value_name = "PATH")]
    feature_file: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long, value_name = "TOML")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    /// Feature CSV; defaults to `<out-dir>/features.csv`.
    #[arg(long = "feature-file", value_name = "PATH")]
    feature_file: Option<PathBuf>,
    /// Used to pick unlabeled things; without it every thing is annotated.
    #[arg(long, value_name = "PATH")]
    metadata: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Labels per thing.
    #[arg(long)]
    k: Option<usize>,
    /// Annotate every thing, labeled or not.
    #[arg(long)]
    all: bool,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    /// Holdout at the configured alpha/beta.
    Holdout,
    /// Holdout over the alpha/beta grid.
    Sweep,
    /// Compare all, structural-only and content-only features.
    Features,
    /// Compare joint spatio-temporal graph against separate graphs.
    Sti,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    k: Option<usize>,
    /// `a..b` in steps of 0.1, or a comma list.
    #[arg(long)]
    fractions: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_enum, default_value = "holdout")]
    mode: EvalMode,
    /// Defaults to `<out-dir>/report.csv`.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    annotate_k: Option<usize>,
    #[arg(long)]
    fractions: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
}

fn parse_fractions(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::param("fractions", format!("`{s}`: expected a..b or a comma list"));
    if let Some((a, b)) = s.split_once("..") {
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        let (lo, hi) = ((a * 10.0).round() as i64, (b * 10.0).round() as i64);
        if lo > hi {
            return Err(bad());
        }
        Ok((lo..=hi).map(|i| i as f64 / 10.0).collect())
    } else {
        s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create_file(p)?),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

/// A closed downstream pipe (e.g. `| head`) ends the program quietly.
fn io_err(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::BrokenPipe {
        std::process::exit(0);
    }
    Error::Format(e.to_string())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io_err(io),
        other => Error::Format(format!("{other:?}")),
    }
}

fn checked(cfg: PipelineConfig) -> Result<PipelineConfig> {
    cfg.validate()?;
    Ok(cfg)
}

fn context_graph(which: Which, inputs: &pipeline::Inputs, cfg: &PipelineConfig) -> Result<ContextGraph> {
    match which {
        Which::St => pipeline::st_graph(inputs, cfg),
        Which::Social => pipeline::social_graph(inputs, cfg),
        Which::Location => Ok(build_location_graph(&inputs.log)),
        Which::Temporal => Ok(build_temporal_graph(&inputs.log)),
    }
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => SynthConfig::load(p)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.noise_rate {
        cfg.noise_rate = n;
    }
    if let Some(d) = a.days {
        cfg.days = d;
    }
    let data = generate(&cfg)?;
    write_synth(&data, &a.out_dir)?;
    println!(
        "events={} things={} users={} locations={} friendships={} out_dir={}",
        data.log.len(),
        data.log.things().len(),
        data.log.users().len(),
        data.log.locations().len(),
        data.friendships.edge_count(),
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let cfg = checked(a.common.config()?)?;
    let inputs = load_inputs(&cfg)?;
    let raw = match &cfg.friendships {
        Some(p) => discort_core::event_log::parse_friendships(p)?,
        None => discort_core::event_log::FriendshipMatrix::empty(),
    };
    let (_, warnings) = validate_friendships(&raw, &inputs.log);
    let log = &inputs.log;
    let (first, last) = log
        .events()
        .iter()
        .fold((i64::MAX, i64::MIN), |(lo, hi), e| (lo.min(e.timestamp), hi.max(e.timestamp)));
    println!(
        "events={} things={} users={} locations={} labels={} friendships={} friendship_warnings={} first={} last={}",
        log.len(),
        log.things().len(),
        log.users().len(),
        log.locations().len(),
        inputs.metadata.labels().len(),
        inputs.friendships.edge_count(),
        warnings.len(),
        discort_core::event_log::format_timestamp(first),
        discort_core::event_log::format_timestamp(last),
    );
    if let Some(out) = &a.out {
        write_events_csv(log.events(), create_file(out)?)?;
    }
    Ok(())
}

fn cmd_periodogram(a: PeriodogramArgs) -> Result<()> {
    let cfg = checked(a.common.config()?)?;
    let inputs = load_inputs(&cfg)?;
    let pcfg = cfg.periodicity()?;
    let seq = location_sequence(&inputs.log, &a.location, &pcfg)?;
    let p = periodogram(&seq);
    let dominant = dominant_indices(&p, pcfg.policy);
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["k", "period", "power", "dominant"]).map_err(csv_err)?;
    for (k, &power) in p.power().iter().enumerate() {
        let is_dominant = dominant.contains(&k);
        w.write_record([
            k.to_string(),
            p.period_of(k).to_string(),
            power.to_string(),
            u8::from(is_dominant).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

fn cmd_graph(a: GraphArgs) -> Result<()> {
    let cfg = checked(a.common.config()?)?;
    let inputs = load_inputs(&cfg)?;
    let g = context_graph(a.which, &inputs, &cfg)?;
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["src", "dst", "weight"]).map_err(csv_err)?;
    for (i, j, v) in g.weights().triplets() {
        w.write_record([g.node_ids()[i].as_str(), g.node_ids()[j].as_str(), &v.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

fn cmd_rwr(a: RwrArgs) -> Result<()> {
    let cfg = checked(a.common.config()?)?;
    let inputs = load_inputs(&cfg)?;
    let thing = inputs.log.thing_index(&a.seed_thing).ok_or_else(|| Error::UnknownId {
        kind: "thing",
        id: a.seed_thing.clone(),
    })?;
    let g = context_graph(a.which, &inputs, &cfg)?;
    let rwr = cfg.rwr()?;
    let run = rwr_steady_state(&transition_matrix(g.weights(), rwr.dangling)?, g.thing_node(thing), &rwr)?;
    info!("converged in {} iterations, residual {:e}", run.iterations, run.residual);
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["node", "score"]).map_err(csv_err)?;
    for (id, p) in g.node_ids().iter().zip(&run.pi) {
        w.write_record([id.as_str(), &p.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

fn with_k(mut cfg: PipelineConfig, k: Option<usize>) -> PipelineConfig {
    if let Some(k) = k {
        cfg.k = k;
    }
    cfg
}

fn cmd_rgt(a: RgtArgs) -> Result<()> {
    let cfg = checked(with_k(a.common.config()?, a.k))?;
    let inputs = load_inputs(&cfg)?;
    let rel = relevances(&inputs, &cfg)?;
    let g = build_rgt(&rel.combined(cfg.alpha, cfg.beta)?, inputs.log.things(), cfg.k)?;
    let (format, ext) = match a.format {
        FormatArg::Json => (RgtFormat::Json, "json"),
        FormatArg::Dot => (RgtFormat::Dot, "dot"),
        FormatArg::Graphml => (RgtFormat::GraphMl, "graphml"),
    };
    let out = a.out.unwrap_or_else(|| cfg.out_dir.join(format!("rgt.{ext}")));
    write_text(&out, &g.render(format, Some(&cfg.hash())))
}

fn cmd_features(a: OutArgs) -> Result<()> {
    let cfg = checked(with_k(a.common.config()?, a.k))?;
    let inputs = load_inputs(&cfg)?;
    let rel = relevances(&inputs, &cfg)?;
    let r = rel.combined(cfg.alpha, cfg.beta)?;
    let g = build_rgt(&r, inputs.log.things(), cfg.k)?;
    let fm = pipeline::features(&inputs, &r, &g, &cfg)?;
    let out = a.out.unwrap_or_else(|| Artifacts::in_dir(&cfg.out_dir).features);
    fm.write_csv(create_file(&out)?, &cfg.hash())
}

fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let f = fs::File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(FeatureMatrix::read_csv(io::BufReader::new(f))?.0)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = checked(a.common.config()?)?;
    let paths = Artifacts::in_dir(&cfg.out_dir);
    let fm = read_features(a.feature_file.as_deref().unwrap_or(&paths.features))?;
    let meta_path = cfg
        .metadata
        .as_deref()
        .ok_or_else(|| Error::param("metadata", "training needs labels (flag or config key)"))?;
    let metadata = discort_core::event_log::parse_metadata(meta_path)?;
    let model = train_model(&fm, &metadata, &cfg)?;
    write_text(a.out.as_deref().unwrap_or(&paths.model), &model.to_text(&cfg.hash()))
}

fn cmd_annotate(a: AnnotateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if a.metadata.is_some() {
        cfg.metadata.clone_from(&a.metadata);
    }
    if let Some(d) = &a.out_dir {
        cfg.out_dir.clone_from(d);
    }
    if let Some(k) = a.k {
        cfg.annotate_k = k;
    }
    let cfg = checked(cfg)?;
    let paths = Artifacts::in_dir(&cfg.out_dir);
    let model_path = a.model.as_deref().unwrap_or(&paths.model);
    let text = fs::read_to_string(model_path).map_err(|e| Error::Io {
        path: model_path.to_path_buf(),
        source: e,
    })?;
    let (model, _) = AnnotationModel::from_text(&text)?;
    let fm = read_features(a.feature_file.as_deref().unwrap_or(&paths.features))?;
    let targets = match (&cfg.metadata, a.all) {
        (Some(p), false) => Some(unlabeled_things(&fm, &discort_core::event_log::parse_metadata(p)?)),
        _ => None,
    };
    let rows = annotate(&model, &fm, targets.as_deref(), cfg.annotate_k)?;
    let out = a.out.unwrap_or(paths.annotations);
    write_annotations_csv(&rows, create_file(&out)?, &cfg.hash())
}

fn eval_config(common: &Common, k: Option<usize>, fractions: &Option<String>, reps: Option<usize>) -> Result<PipelineConfig> {
    let mut cfg = with_k(common.config()?, k);
    if let Some(f) = fractions {
        cfg.fractions = parse_fractions(f)?;
    }
    if let Some(r) = reps {
        cfg.reps = r;
    }
    checked(cfg)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let cfg = eval_config(&a.common, a.k, &a.fractions, a.reps)?;
    let inputs = load_inputs(&cfg)?;
    let rel = relevances(&inputs, &cfg)?;
    let data = inputs.eval_data();
    let protocol = cfg.protocol();
    let blocks = cfg.blocks()?;
    let (rows, with_setting): (Vec<ReportRow>, bool) = match a.mode {
        EvalMode::Holdout => (pipeline::report(&inputs, &rel, &cfg)?, false),
        EvalMode::Sweep => (alpha_beta_sweep(&data, &rel.st, &rel.social, &default_grid(), blocks, &protocol)?, false),
        EvalMode::Features => {
            let r = rel.combined(cfg.alpha, cfg.beta)?;
            let mut rows = Vec::new();
            for (name, b) in [
                ("all", FeatureBlocks::ALL),
                ("structural", FeatureBlocks::STRUCTURAL),
                ("content", FeatureBlocks::CONTENT),
            ] {
                rows.extend(holdout_experiment(&data, &r, b, &protocol, name, cfg.alpha, cfg.beta)?);
            }
            (rows, true)
        }
        EvalMode::Sti => {
            let mut rows = holdout_experiment(&data, &rel.st, blocks, &protocol, "sti", 1.0, 0.0)?;
            let no_sti = no_sti_relevance(&inputs, &cfg)?;
            rows.extend(holdout_experiment(&data, &no_sti, blocks, &protocol, "no-sti", 1.0, 0.0)?);
            (rows, true)
        }
    };
    let out = a.out.unwrap_or_else(|| Artifacts::in_dir(&cfg.out_dir).report);
    write_report_csv(&rows, create_file(&out)?, with_setting, &cfg.hash())
}

fn cmd_pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg = eval_config(&a.common, a.k, &a.fractions, a.reps)?;
    if let Some(k) = a.annotate_k {
        cfg.annotate_k = k;
    }
    let out = run_pipeline(&cfg)?;
    for p in [&out.rgt, &out.features, &out.model, &out.annotations, &out.report] {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Periodogram(a) => cmd_periodogram(a),
        Command::Graph(a) => cmd_graph(a),
        Command::Rwr(a) => cmd_rwr(a),
        Command::Rgt(a) => cmd_rgt(a),
        Command::Features(a) => cmd_features(a),
        Command::Train(a) => cmd_train(a),
        Command::Annotate(a) => cmd_annotate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    }
}

/// One line: `error: <kind>: <message>`. Parameter errors name the flag.
fn report_error(e: &Error) -> ExitCode {
    let msg = match e {
        Error::InvalidParameter { name, msg } => format!("flag --{}: {msg}", name.replace('_', "-")),
        other => other.to_string(),
    };
    eprintln!("error: {}: {}", e.kind(), msg.replace('\n', " "));
    match e {
        Error::InvalidParameter { .. } | Error::UnknownFormat(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion)
                || e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                    ExitCode::from(2)
                } else {
                    ExitCode::SUCCESS
                };
            }
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return report_error(&Error::param("jobs", "must be >= 1"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: runtime: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e),
    }
}
