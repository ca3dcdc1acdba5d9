use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use styloshift::corpus::{build_corpus, SourceDocument, SplitPolicy, SystemPromptId, DEFAULT_PROMPT_WORDS};
use styloshift::pipeline::{has_errors, run_stages, validate, Level, PipelineReport, RunConfig, STAGES};
use styloshift::tagger::{export_tagged, tag_text};
use styloshift::Error;

#[derive(Parser)]
#[command(name = "styloshift", version, about = "Register-shift benchmark for model text continuations")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split source texts into prompt/reference pairs and write a corpus manifest.
    Split(SplitArgs),
    /// Request continuations for every document and model configuration.
    Generate(GenerateArgs),
    /// Tag a plain-text file with the built-in tagger (tab-separated output).
    Tag {
        input: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Extract feature rates for all chunks.
    Features(RunArgs),
    /// Score chunks on the dimensions of the configured model.
    Score(RunArgs),
    /// Bootstrap the human baseline and benchmark every configuration.
    Bench(RunArgs),
    /// Cluster configurations by their normalized shift vectors.
    Cluster(RunArgs),
    /// Render figures and tables.
    Report(RunArgs),
    /// Run every stage, reusing cached outputs.
    RunAll(RunArgs),
    /// Check a run configuration without doing any work.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file.
    config: PathBuf,
    /// Cut each continuation to its reference length before tagging.
    #[arg(long)]
    truncate_to_reference: bool,
}

#[derive(Args)]
struct SplitArgs {
    /// Directory of `.txt` sources. The genre is the name of the enclosing
    /// subdirectory, or for files directly in the directory the file-name
    /// prefix before the first `_`.
    sources: PathBuf,
    /// Output directory for `manifest.toml` and `texts/`.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value = "corpus")]
    corpus_id: String,
    #[arg(long, default_value = "en")]
    language: String,
    #[arg(long, default_value_t = DEFAULT_PROMPT_WORDS)]
    prompt_words: usize,
}

#[derive(Args)]
struct GenerateArgs {
    config: PathBuf,
    /// Send every selected configuration to this endpoint profile.
    #[arg(long)]
    endpoint: Option<String>,
    /// Only run these configuration ids (repeatable).
    #[arg(long = "model")]
    models: Vec<String>,
    #[arg(long)]
    temperature: Option<f64>,
    /// none, minimal, minimal_czech or long_assistant.
    #[arg(long, value_parser = parse_system_prompt)]
    system_prompt: Option<SystemPromptId>,
    #[arg(long)]
    concurrency: Option<usize>,
    /// One request at a time, in job order.
    #[arg(long)]
    serial: bool,
    /// Regenerate continuations that are already stored.
    #[arg(long)]
    force: bool,
}

fn parse_system_prompt(s: &str) -> Result<SystemPromptId, String> {
    Ok(match s {
        "none" => SystemPromptId::None,
        "minimal" => SystemPromptId::Minimal,
        "minimal_czech" => SystemPromptId::MinimalCzech,
        "long_assistant" => SystemPromptId::LongAssistant,
        _ => return Err(format!("unknown system prompt `{s}`")),
    })
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_STAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(match e {
                Error::Config(_) | Error::Parse { .. } => EXIT_VALIDATION,
                _ => EXIT_STAGE,
            })
        }
    }
}

fn run(command: Command) -> styloshift::Result<()> {
    match command {
        Command::Split(args) => split(args),
        Command::Generate(args) => generate(args),
        Command::Tag { input, out } => {
            let text = fs::read_to_string(&input).map_err(|e| Error::io(&input, e))?;
            let tsv = export_tagged(&tag_text(&text));
            match out {
                Some(p) => fs::write(&p, tsv).map_err(|e| Error::io(&p, e)),
                None => {
                    print!("{tsv}");
                    Ok(())
                }
            }
        }
        Command::Features(a) => stages(&a, &["features"]),
        Command::Score(a) => stages(&a, &["score"]),
        Command::Bench(a) => stages(&a, &["bench"]),
        Command::Cluster(a) => stages(&a, &["cluster"]),
        Command::Report(a) => stages(&a, &["report"]),
        Command::RunAll(a) => stages(&a, &STAGES),
        Command::Validate(a) => {
            let cfg = RunConfig::load(&a.config)?;
            let diags = validate(&cfg);
            for d in &diags {
                println!("{d}");
            }
            if has_errors(&diags) {
                let n = diags.iter().filter(|d| d.level == Level::Error).count();
                return Err(Error::Config(format!("{n} validation error(s)")));
            }
            println!("ok");
            Ok(())
        }
    }
}

fn print_report(report: &PipelineReport) {
    for s in &report.stages {
        if s.detail.is_empty() {
            println!("{:<9} {}", s.stage, s.status);
        } else {
            println!("{:<9} {:<7} {}", s.stage, s.status.to_string(), s.detail);
        }
    }
}

fn stages(args: &RunArgs, names: &[&str]) -> styloshift::Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    cfg.truncate_to_reference |= args.truncate_to_reference;
    print_report(&run_stages(&cfg, names)?);
    Ok(())
}

fn generate(args: GenerateArgs) -> styloshift::Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if !args.models.is_empty() {
        for id in &args.models {
            if !cfg.models.iter().any(|m| &m.config_id == id) {
                return Err(Error::Config(format!("no model configuration `{id}`")));
            }
        }
        let keep: Vec<bool> = cfg.models.iter().map(|m| args.models.contains(&m.config_id)).collect();
        let mut k = 0;
        cfg.model_locations.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        cfg.models.retain(|m| args.models.contains(&m.config_id));
    }
    for m in &mut cfg.models {
        if let Some(e) = &args.endpoint {
            m.endpoint = e.clone();
        }
        if let Some(t) = args.temperature {
            m.temperature = t;
        }
        if let Some(p) = args.system_prompt {
            m.system_prompt_id = p;
        }
    }
    if let Some(c) = args.concurrency {
        cfg.generation.concurrency = c;
    }
    cfg.generation.serial |= args.serial;
    cfg.generation.force |= args.force;
    if cfg.endpoints.is_empty() {
        return Err(Error::Config("no [[endpoint]] profiles configured".into()));
    }
    print_report(&run_stages(&cfg, &["generate"])?);
    Ok(())
}

fn split(args: SplitArgs) -> styloshift::Result<()> {
    let mut sources = Vec::new();
    collect_sources(&args.sources, None, &mut sources)?;
    if sources.is_empty() {
        return Err(Error::Config(format!("no .txt files under {}", args.sources.display())));
    }
    sources.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let policy = SplitPolicy {
        prompt_words: args.prompt_words,
    };
    let (manifest, skipped) = build_corpus(&args.corpus_id, &args.language, &sources, policy, &args.out)?;
    for id in &skipped {
        log::warn!("{id}: too short to split at {} words; skipped", args.prompt_words);
    }
    println!(
        "{} documents split, {} skipped; manifest at {}",
        manifest.entries.len(),
        skipped.len(),
        args.out.join("manifest.toml").display()
    );
    Ok(())
}

fn collect_sources(dir: &Path, genre: Option<&str>, out: &mut Vec<SourceDocument>) -> styloshift::Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .flatten()
        .map(|e| e.path())
        .collect();
    entries.sort();
    for path in entries {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if path.is_dir() {
            collect_sources(&path, Some(&name), out)?;
            continue;
        }
        if path.extension().is_none_or(|e| e != "txt") {
            continue;
        }
        let doc_id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let genre = match genre {
            Some(g) => g.to_string(),
            None => doc_id.split_once('_').map_or("unknown", |(g, _)| g).to_string(),
        };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        out.push(SourceDocument { doc_id, genre, text });
    }
    Ok(())
}
