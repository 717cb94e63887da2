use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use retrogen::answers::BanList;
use retrogen::dataset::{prep_bbart_dataset, write_jsonl, Direction, Narrative};
use retrogen::entropy::{
    entropy_report, instantiate_tf_templates, tf_templates, ResponseSet, ScreeningRules,
    SlotAssignment,
};
use retrogen::model::{GenerationConfig, StoryState};
use retrogen::pipeline::{bbart_generate, edgar_generate, EdgarInputs, ModelRoles, RunResult};
use retrogen::protocol::{serve, Backend, HttpBackend, MockBackend, MockConfig};
use retrogen::store::{
    corpus_fingerprint, emit_report, load_corpus, persist_run, write_atomic, Generator,
    RunManifest,
};
use retrogen::subjective::{read_pairs, read_records_csv, report, tally};
use retrogen::{Error, Result};

const EXIT_VALIDATION: u8 = 1;
const EXIT_BACKEND: u8 = 2;

/// Ending-first story generation and its evaluation harnesses.
#[derive(Debug, Parser)]
#[command(name = "retrogen", version)]
struct Cli {
    /// JSON file with generation settings; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Backend base URL. `mock://` runs the mock in-process, seeded with
    /// the run seed; `mock://N` seeds it with N.
    #[arg(long, global = true, env = "RETROGEN_BACKEND_URL", value_name = "URL")]
    backend_url: Option<String>,
    /// Output location (a directory, or a file for prep-bbart).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a story backward from its ending.
    #[command(subcommand)]
    Generate(GenerateCmd),
    /// Sample source/target pairs for the seq2seq baseline.
    PrepBbart(PrepArgs),
    /// Evaluate human-study responses.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Question templates.
    #[command(subcommand)]
    Templates(TemplatesCmd),
    /// Serve the deterministic mock backend over HTTP.
    MockServe(MockServeArgs),
}

#[derive(Debug, Subcommand)]
enum GenerateCmd {
    Edgar(EdgarArgs),
    Bbart(CommonGenArgs),
}

#[derive(Debug, Args)]
struct CommonGenArgs {
    /// Text file holding the ending.
    #[arg(long, value_name = "FILE")]
    ending: PathBuf,
    #[arg(long)]
    iterations: Option<usize>,
    /// JSON file naming the model id for each role.
    #[arg(long, value_name = "FILE")]
    models: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EdgarArgs {
    #[command(flatten)]
    common: CommonGenArgs,
    /// Directory of reference documents (.txt).
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    /// Banned phrases, one per line. Defaults to the bundled list.
    #[arg(long, value_name = "FILE")]
    ban_list: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PrepArgs {
    /// Directory of narratives (.txt), one per file.
    #[arg(long, value_name = "DIR")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = DirectionArg::Backward)]
    direction: DirectionArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Backward,
    Literal,
}

#[derive(Debug, Subcommand)]
enum EvalCmd {
    Entropy(EntropyArgs),
    Subjective(SubjectiveArgs),
}

#[derive(Debug, Args)]
struct EntropyArgs {
    /// Responses CSV.
    #[arg(long, value_name = "FILE")]
    responses: PathBuf,
    /// Stories manifest JSON.
    #[arg(long, value_name = "FILE")]
    stories: PathBuf,
    /// Screening rules JSON; without it nobody is screened out.
    #[arg(long, value_name = "FILE")]
    screening: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SubjectiveArgs {
    /// Pairwise records CSV.
    #[arg(long, value_name = "FILE")]
    responses: PathBuf,
    /// Pairs manifest JSON.
    #[arg(long, value_name = "FILE")]
    pairs: PathBuf,
    /// System whose wins the one-tailed test counts.
    #[arg(long, default_value = "edgar")]
    treatment: String,
}

#[derive(Debug, Subcommand)]
enum TemplatesCmd {
    /// List the T/F templates, or fill them for a story.
    Tf(TfArgs),
}

#[derive(Debug, Args)]
struct TfArgs {
    /// Story text file; without it the inventory is listed.
    #[arg(long, value_name = "FILE")]
    story: Option<PathBuf>,
    #[arg(long)]
    i: Option<usize>,
    #[arg(long)]
    j: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    object: Option<String>,
    #[arg(long)]
    character: Option<String>,
}

#[derive(Debug, Args)]
struct MockServeArgs {
    #[arg(long, default_value_t = 0)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, default_value_t = 256)]
    vocab: u32,
    /// All logits zero.
    #[arg(long)]
    uniform: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_backend() { EXIT_BACKEND } else { EXIT_VALIDATION })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(GenerateCmd::Edgar(args)) => generate_edgar(&cli, args),
        Command::Generate(GenerateCmd::Bbart(args)) => generate_bbart(&cli, args),
        Command::PrepBbart(args) => prep(&cli, args),
        Command::Eval(EvalCmd::Entropy(args)) => eval_entropy(&cli, args),
        Command::Eval(EvalCmd::Subjective(args)) => eval_subjective(&cli, args),
        Command::Templates(TemplatesCmd::Tf(args)) => templates(args),
        Command::MockServe(args) => mock_serve(&cli, args),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn load_config(cli: &Cli, iterations: Option<usize>) -> Result<GenerationConfig> {
    let mut config = match &cli.config {
        Some(p) => read_json::<GenerationConfig>(p).map_err(|e| Error::Config(e.to_string()))?,
        None => GenerationConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(n) = iterations {
        config.iterations = n;
    }
    config.validate()?;
    Ok(config)
}

fn backend_url(cli: &Cli) -> String {
    cli.backend_url.clone().unwrap_or_else(|| "mock://".into())
}

fn connect(url: &str, run_seed: u64) -> Result<Box<dyn Backend>> {
    if let Some(rest) = url.strip_prefix("mock://") {
        let seed = if rest.is_empty() {
            run_seed
        } else {
            rest.parse()
                .map_err(|_| Error::Config(format!("mock seed in {url:?} is not an integer")))?
        };
        return Ok(Box::new(MockBackend::with_seed(seed)));
    }
    if !(url.starts_with("http://") || url.starts_with("https://")) {
        return Err(Error::Config(format!(
            "backend URL {url:?} must start with http://, https:// or mock://"
        )));
    }
    Ok(Box::new(HttpBackend::new(url)?))
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn models(args: &CommonGenArgs) -> Result<ModelRoles> {
    match &args.models {
        Some(p) => read_json(p),
        None => Ok(ModelRoles::default()),
    }
}

fn finish_run(
    cli: &Cli,
    generator: Generator,
    config: &GenerationConfig,
    models: &ModelRoles,
    fingerprint: Option<String>,
    ending: &str,
    result: RunResult,
) -> Result<()> {
    let url = backend_url(cli);
    let (story, trace, error) = match result {
        Ok(g) => (g.story, g.trace, None),
        Err(a) => (a.story, a.trace, Some(a.error)),
    };
    let mut manifest = RunManifest::new(generator, config, &url, models, fingerprint, ending, &trace, &story);
    manifest.error = error.as_ref().map(ToString::to_string);
    // A run that failed before producing any state has nothing to persist.
    if error.is_none() || !trace.iterations.is_empty() {
        let paths = persist_run(&out_dir(cli), &mut manifest, &story)?;
        eprintln!("wrote {}", paths.manifest.display());
    }
    match error {
        Some(e) => Err(e),
        None => {
            print!("{}", story.render());
            Ok(())
        }
    }
}

fn generate_edgar(cli: &Cli, args: &EdgarArgs) -> Result<()> {
    let config = load_config(cli, args.common.iterations)?;
    let models = models(&args.common)?;
    let ending = read_text(&args.common.ending)?;
    let corpus = load_corpus(&args.corpus)?;
    let banned = match &args.ban_list {
        Some(p) => BanList::load(p)?,
        None => BanList::builtin(),
    };
    let backend = connect(&backend_url(cli), config.seed)?;
    let result = edgar_generate(
        &EdgarInputs {
            backend: backend.as_ref(),
            models: &models,
            corpus: &corpus,
            banned: &banned,
            config: &config,
        },
        &ending,
    );
    let fp = Some(corpus_fingerprint(&corpus));
    finish_run(cli, Generator::Edgar, &config, &models, fp, &ending, result)
}

fn generate_bbart(cli: &Cli, args: &CommonGenArgs) -> Result<()> {
    let config = load_config(cli, args.iterations)?;
    let models = models(args)?;
    let ending = read_text(&args.ending)?;
    let backend = connect(&backend_url(cli), config.seed)?;
    let result = bbart_generate(backend.as_ref(), &models, &ending, &config);
    finish_run(cli, Generator::Bbart, &config, &models, None, &ending, result)
}

fn prep(cli: &Cli, args: &PrepArgs) -> Result<()> {
    let config = load_config(cli, None)?;
    let narratives: Vec<Narrative> = load_corpus(&args.input)?
        .iter()
        .map(|d| Narrative::from_text(d.doc_id.trim_end_matches(".txt"), &d.text))
        .collect();
    let direction = match args.direction {
        DirectionArg::Backward => Direction::Backward,
        DirectionArg::Literal => Direction::Literal,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pairs = prep_bbart_dataset(&narratives, &mut rng, direction)?;
    let mut buf = Vec::new();
    write_jsonl(&pairs, &mut buf).expect("writing to memory");
    match &cli.out {
        Some(p) => {
            write_atomic(p, &buf)?;
            eprintln!("wrote {} pairs to {}", pairs.len(), p.display());
        }
        None => std::io::stdout().write_all(&buf).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        })?,
    }
    Ok(())
}

fn eval_entropy(cli: &Cli, args: &EntropyArgs) -> Result<()> {
    let responses = ResponseSet::from_paths(&args.responses, &args.stories)?;
    let rules = args.screening.as_deref().map(ScreeningRules::load).transpose()?;
    let report = entropy_report(&responses, rules.as_ref())?;
    let mut csv = Vec::new();
    report
        .write_story_csv(&mut csv)
        .map_err(|e| Error::Validation(e.to_string()))?;
    let paths = emit_report(&out_dir(cli), "entropy_report", &report, Some(&csv))?;
    println!("{:<12} | {:>8} | {:>7}", "System", "Median", "Stories");
    for s in &report.systems {
        println!("{:<12} | {:>8.3} | {:>7}", s.system_id, s.index, s.stories);
    }
    println!("eliminated participants: {}", report.eliminated.len());
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn eval_subjective(cli: &Cli, args: &SubjectiveArgs) -> Result<()> {
    let pairs = read_pairs(&args.pairs)?;
    let file = std::fs::File::open(&args.responses).map_err(|e| Error::Io {
        path: args.responses.clone(),
        source: e,
    })?;
    let records = read_records_csv(file, &pairs)?;
    let r = report(&tally(&records, &pairs)?, &args.treatment)?;
    print!("{}", r.to_table());
    if let Some(dir) = &cli.out {
        for p in emit_report(dir, "subjective_report", &r, None)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn templates(args: &TfArgs) -> Result<()> {
    let Some(path) = &args.story else {
        for (i, t) in tf_templates().iter().enumerate() {
            println!("{i:>2}  {t}");
        }
        return Ok(());
    };
    let story = StoryState::from_ending_text(&read_text(path)?)?;
    let assignment = SlotAssignment {
        i: args.i,
        j: args.j,
        k: args.k,
        object: args.object.clone(),
        character: args.character.clone(),
    };
    for s in instantiate_tf_templates(&story, &assignment)? {
        println!("{}", serde_json::to_string(&s).expect("scaffold serializes"));
    }
    Ok(())
}

fn mock_serve(cli: &Cli, args: &MockServeArgs) -> Result<()> {
    if args.vocab < 2 {
        return Err(Error::Validation("--vocab must be at least 2".into()));
    }
    let backend = MockBackend::new(MockConfig {
        seed: cli.seed.unwrap_or(0),
        vocab_size: args.vocab,
        uniform: args.uniform,
        ..MockConfig::default()
    });
    let addr = SocketAddr::new(args.host, args.port);
    let handle = serve(Arc::new(backend), addr).map_err(|e| Error::Io {
        path: addr.to_string().into(),
        source: e,
    })?;
    println!("listening on {}", handle.url());
    let _ = std::io::stdout().flush();
    handle.wait().map_err(|e| Error::Io {
        path: addr.to_string().into(),
        source: e,
    })
}
