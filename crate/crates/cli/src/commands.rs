use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use autorefine::corpus::{train_generator, training_subset};
use autorefine::ingest::{
    assign_genders, attach_embeddings, free_text_prompt, load_candidates, load_embeddings,
    load_jobs,
};
use autorefine::pipeline::ProfileField;
use autorefine::probe::gender_probe;
use autorefine::report::{run_report, ReportArtifacts};
use autorefine::rlrefine::{
    beta_sweep, build_offline_dataset, QInit, SweepRow, DEFAULT_SWEEP_BETAS,
};
use autorefine::synthetic::{generate_world, WorldParams};
use autorefine::{
    train_q, Config, Embedder, GenerationConfig, HardFilter, HashEmbedder, JobPosting, NGramModel,
    PrefixStripping, QHyper, RewriteConfig, TokenValueModel,
};

use crate::error::{CliError, CliResult};
use crate::server::{serve, AppState};
use crate::service::{generation_config, rewrite_description};
use crate::store::{write_store, Store, LM_FILE, Q_FILE};

#[derive(Debug, Parser)]
#[command(
    name = "autorefine",
    version,
    about = "Rewrite job descriptions toward target candidate demographics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world and write it as a store.
    Synth(SynthArgs),
    /// Validate jobs and candidates, embed candidates, and write a store.
    Ingest(IngestArgs),
    /// Fit the n-gram generator to the store's jobs.
    TrainLm(TrainLmArgs),
    /// Score an offline dataset and fit the token value model.
    TrainQ(TrainQArgs),
    /// Rewrite descriptions with value-guided decoding.
    Rewrite(RewriteArgs),
    /// Score descriptions against the store's candidates.
    Evaluate(EvaluateArgs),
    /// Mean diversity score of the originals and of rewrites at each strength.
    Sweep(SweepArgs),
    /// Write the markdown fairness report.
    Report(ReportArgs),
    /// Measure how an explicit gender statement in profiles moves matching.
    ProbeGender(ProbeArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub candidates: usize,
    #[arg(long, default_value_t = 200)]
    pub train_jobs: usize,
    #[arg(long, default_value_t = 100)]
    pub eval_jobs: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Configuration to record in the store; defaults apply otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub jobs: PathBuf,
    /// Held-out jobs used by `sweep`, `report` and `probe-gender`.
    #[arg(long)]
    pub eval_jobs: Option<PathBuf>,
    #[arg(long)]
    pub candidates: PathBuf,
    /// Precomputed unit vectors; candidate text is hashed when omitted.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Draw genders for profiles of unknown gender from the target, with
    /// this seed. Left unknown otherwise.
    #[arg(long)]
    pub gender_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Defaults to `lm.json` in the store.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitArg {
    Zero,
    ContextReturn,
}

#[derive(Debug, Args)]
pub struct TrainQArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Context width in tokens.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub samples_per_prompt: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Defaults to `q.json` in the store.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RewriteArgs {
    #[arg(long)]
    pub lm: PathBuf,
    #[arg(long)]
    pub q: PathBuf,
    #[arg(long, default_value_t = autorefine::rlrefine::DEFAULT_BETA)]
    pub beta: f64,
    /// A `.jsonl` file of job postings, or any other file holding one
    /// plain-text description.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Sample with this seed instead of decoding greedily.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also score the original and the rewrite against this store.
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct ArtifactArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Defaults to `lm.json` in the store.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    /// Defaults to `q.json` in the store.
    #[arg(long)]
    pub q: Option<PathBuf>,
    /// Jobs to evaluate; defaults to the store's evaluation split.
    #[arg(long)]
    pub jobs: Option<PathBuf>,
    /// Sampling seed; defaults to the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP_BETAS)]
    pub betas: Vec<f64>,
    /// Print rows as JSON instead of a markdown table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub jobs: Option<PathBuf>,
    /// Selection cutoff; defaults to the configured pool size.
    #[arg(long)]
    pub k: Option<usize>,
    /// Drop the self-identification sentence before embedding. Every
    /// delta is then zero, which makes a useful control.
    #[arg(long)]
    pub strip_prefix: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long)]
    pub q: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> CliResult<Config> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

fn print_out(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|()| out.flush())
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::BrokenPipe => CliError::OutputClosed,
            _ => CliError::Internal(e.to_string()),
        })
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    let line = serde_json::to_string(value).map_err(|e| CliError::Internal(e.to_string()))?;
    print_out(&format!("{line}\n"))
}

/// `(id, text, prompt)` of every description in `path`.
fn read_descriptions(path: &Path) -> CliResult<Vec<(String, String, String)>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        return Ok(load_jobs(path)?
            .into_iter()
            .map(|j| (j.id, j.text, j.prompt))
            .collect());
    }
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Data(autorefine::Error::Io {
            path: path.to_owned(),
            source: e,
        })
    })?;
    let text = text.trim().to_owned();
    let prompt = free_text_prompt(&text);
    Ok(vec![("input".to_owned(), text, prompt)])
}

fn synth(args: SynthArgs) -> CliResult<()> {
    let config = load_config(args.config.as_deref())?;
    let geo = config
        .attribute(ProfileField::Geolocation)
        .ok_or_else(|| CliError::Usage("config declares no geolocation attribute".into()))?
        .target_distribution()?;
    let params = WorldParams {
        candidates: args.candidates,
        train_jobs: args.train_jobs,
        eval_jobs: args.eval_jobs,
        embedding_dim: config.embedding_dim,
        seed: args.seed,
        ..WorldParams::default()
    };
    let world = generate_world(&params, &geo)?;
    write_store(
        &args.out,
        &config,
        &world.train_jobs,
        Some(&world.eval_jobs),
        world.candidates,
    )?;
    eprintln!(
        "wrote {} candidates, {} training and {} evaluation jobs to {}",
        args.candidates,
        args.train_jobs,
        args.eval_jobs,
        args.out.display()
    );
    Ok(())
}

fn ingest(args: IngestArgs) -> CliResult<()> {
    let config = load_config(args.config.as_deref())?;
    config.validate()?;
    let jobs = load_jobs(&args.jobs)?;
    let eval_jobs = args.eval_jobs.as_deref().map(load_jobs).transpose()?;
    let mut candidates = load_candidates(
        &args.candidates,
        &config.schema(ProfileField::Gender)?,
        &config.schema(ProfileField::Geolocation)?,
    )?;
    if let Some(seed) = args.gender_seed {
        let target = config
            .attribute(ProfileField::Gender)
            .expect("schema checked above")
            .target_distribution()?;
        candidates = assign_genders(candidates, &target, seed);
    }
    match &args.embeddings {
        Some(path) => {
            attach_embeddings(&mut candidates, &load_embeddings(path)?);
        }
        None => {
            let embedder = HashEmbedder::new(config.embedding_dim);
            for c in &mut candidates {
                c.embedding = Some(embedder.embed(&c.text)?);
            }
        }
    }
    let n = candidates.len();
    write_store(&args.out, &config, &jobs, eval_jobs.as_deref(), candidates)?;
    eprintln!(
        "stored {} jobs and {n} candidates in {}",
        jobs.len(),
        args.out.display()
    );
    Ok(())
}

fn train_lm_cmd(args: TrainLmArgs) -> CliResult<()> {
    let store = Store::open(&args.store)?;
    let c = &store.config;
    let jobs = training_subset(&store.jobs, c.lm.corpus_fraction);
    let lm = train_generator(
        jobs,
        args.vocab_size.unwrap_or(c.lm.vocab_size),
        args.order.unwrap_or(c.lm.order),
        args.alpha.unwrap_or(c.lm.alpha),
        c.max_len,
    )?;
    let out = store.artifact(args.out.as_deref(), LM_FILE);
    lm.save(&out)?;
    eprintln!(
        "trained on {} jobs, vocabulary {}; wrote {}",
        jobs.len(),
        lm.vocab().len(),
        out.display()
    );
    Ok(())
}

fn train_q_cmd(args: TrainQArgs) -> CliResult<()> {
    let store = Store::open(&args.store)?;
    let c = &store.config;
    let lm = NGramModel::load(store.artifact(args.lm.as_deref(), LM_FILE))?;
    let evaluator = store.evaluator()?;
    let dataset = build_offline_dataset(
        &store.jobs,
        &lm,
        &evaluator,
        args.samples_per_prompt.unwrap_or(c.samples_per_prompt),
        args.seed.unwrap_or(c.seed),
        c.max_len,
    )?;
    let hyper = QHyper {
        context_width: args.n.unwrap_or(c.q.context_width),
        tau: args.tau.unwrap_or(c.q.tau),
        gamma: args.gamma.unwrap_or(c.q.gamma),
        learning_rate: args.lr.unwrap_or(c.q.learning_rate),
        epochs: args.epochs.unwrap_or(c.q.epochs),
        init: match args.init {
            Some(InitArg::Zero) => QInit::Zero,
            Some(InitArg::ContextReturn) => QInit::ContextReturn,
            None => c.q.init,
        },
        ..c.q.clone()
    };
    let values = train_q(&dataset, &hyper)?;
    let out = store.artifact(args.out.as_deref(), Q_FILE);
    values.save(&out)?;
    eprintln!(
        "{} samples, {} contexts, {} entries; wrote {}",
        dataset.len(),
        values.num_contexts(),
        values.num_entries(),
        out.display()
    );
    Ok(())
}

fn rewrite_cmd(args: RewriteArgs) -> CliResult<()> {
    let lm = NGramModel::load(&args.lm)?;
    let values = TokenValueModel::load(&args.q)?;
    let (config, evaluator) = match &args.store {
        Some(dir) => {
            let store = Store::open(dir)?;
            let ev = store.evaluator()?;
            (store.config, Some(ev))
        }
        None => (Config::default(), None),
    };
    let rewrite = RewriteConfig {
        beta: args.beta,
        generation: generation_config(&config, args.seed),
    };
    for (id, text, prompt) in read_descriptions(&args.input)? {
        let out = rewrite_description(
            &lm,
            &values,
            evaluator.as_ref(),
            &text,
            Some(&prompt),
            rewrite,
        )?;
        print_json(&serde_json::json!({ "id": id, "result": out }))?;
    }
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> CliResult<()> {
    let store = Store::open(&args.store)?;
    let evaluator = store.evaluator()?;
    for (id, text, _) in read_descriptions(&args.input)? {
        let r = evaluator.evaluate(&text)?;
        print_json(&serde_json::json!({ "id": id, "result": r }))?;
    }
    Ok(())
}

struct Loaded {
    store: Store,
    lm: NGramModel,
    values: TokenValueModel,
    jobs: Vec<JobPosting>,
    generation: GenerationConfig,
}

fn load_artifacts(args: &ArtifactArgs) -> CliResult<Loaded> {
    let store = Store::open(&args.store)?;
    let lm = NGramModel::load(store.artifact(args.lm.as_deref(), LM_FILE))?;
    let values = TokenValueModel::load(store.artifact(args.q.as_deref(), Q_FILE))?;
    let jobs = match &args.jobs {
        Some(p) => load_jobs(p)?,
        None => store.evaluation_jobs().to_vec(),
    };
    let generation = GenerationConfig::sample(args.seed.unwrap_or(store.config.seed))
        .with_max_len(store.config.max_len);
    Ok(Loaded {
        store,
        lm,
        values,
        jobs,
        generation,
    })
}

fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = String::from("| Description | Score (mean ± std) |\n|---|---|\n");
    for r in rows {
        s.push_str(&format!(
            "| {} | {:.4} ± {:.4} |\n",
            r.label, r.score.mean, r.score.std
        ));
    }
    s
}

fn sweep_cmd(args: SweepArgs) -> CliResult<()> {
    if args.betas.iter().any(|b| !(*b >= 0.0)) {
        return Err(CliError::Usage("every beta must be nonnegative".into()));
    }
    let a = load_artifacts(&args.artifacts)?;
    let evaluator = a.store.evaluator()?;
    let rows = beta_sweep(
        &args.betas,
        &a.jobs,
        &a.lm,
        &a.values,
        &evaluator,
        &a.generation,
    )?;
    if args.json {
        for r in &rows {
            print_json(&serde_json::json!({
                "label": r.label,
                "beta": r.beta,
                "score": r.score,
                "impact_ratios": r.impact_ratios,
            }))?;
        }
    } else {
        print_out(&sweep_table(&rows))?;
    }
    Ok(())
}

fn report_cmd(args: ReportArgs) -> CliResult<()> {
    let a = load_artifacts(&args.artifacts)?;
    let evaluator = a.store.evaluator()?;
    let doc = run_report(
        &ReportArtifacts {
            evaluator: &evaluator,
            lm: &a.lm,
            values: &a.values,
            beta: args.beta.unwrap_or(a.store.config.beta),
            generation: a.generation,
        },
        &a.jobs,
    )?;
    fs::write(&args.out, doc).map_err(|e| {
        CliError::Data(autorefine::Error::Io {
            path: args.out.clone(),
            source: e,
        })
    })?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn probe_cmd(args: ProbeArgs) -> CliResult<()> {
    let store = Store::open(&args.store)?;
    let jobs = match &args.jobs {
        Some(p) => load_jobs(p)?,
        None => store.evaluation_jobs().to_vec(),
    };
    let dim = store.evaluator()?.embedder.dim();
    let hash = HashEmbedder::new(dim);
    let embedder: Box<dyn Embedder> = if args.strip_prefix {
        Box::new(PrefixStripping::new(hash))
    } else {
        Box::new(hash)
    };
    let k = args.k.unwrap_or(store.config.k_pool);
    let deltas: BTreeMap<String, BTreeMap<String, f64>> = gender_probe(
        &jobs,
        store.index.profiles(),
        embedder.as_ref(),
        &HardFilter::pass_all(),
        k,
    )?;
    print_json(&deltas)
}

fn serve_cmd(args: ServeArgs) -> CliResult<()> {
    let store = Store::open(&args.store)?;
    let lm_path = store.artifact(args.lm.as_deref(), LM_FILE);
    let q_path = store.artifact(args.q.as_deref(), Q_FILE);
    let rewriter = if args.lm.is_some() || args.q.is_some() || (lm_path.exists() && q_path.exists())
    {
        Some((NGramModel::load(&lm_path)?, TokenValueModel::load(&q_path)?))
    } else {
        eprintln!("no generator or value model found; /rewrite is disabled");
        None
    };
    let state = Arc::new(AppState {
        evaluator: store.evaluator()?,
        config: store.config,
        rewriter,
    });
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    runtime
        .block_on(serve(state, SocketAddr::new(args.host, args.port)))
        .map_err(|e| CliError::Internal(e.to_string()))
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::TrainLm(a) => train_lm_cmd(a),
        Command::TrainQ(a) => train_q_cmd(a),
        Command::Rewrite(a) => rewrite_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::ProbeGender(a) => probe_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    }
}
