use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use measex::analysis::{attribute_report, attribute_table, krippendorff_alpha, vocab_overlap, CoderAnnotations};
use measex::config::Config;
use measex::corpus::{convert_source, read_corpus, read_source_file, write_corpus, ConvertOptions, MappingTable};
use measex::lint::{write_findings_jsonl, Severity};
use measex::pipeline::{
    extract_corpus, frames_to_predictions, write_predictions_file, Execution, FileBackedTagger, LexiconContextTagger,
    RuleQuantityTagger, Tagger,
};
use measex::tags::export_training_file;
use measex::{score_corpus, ScoringMode, Task};

#[derive(Parser)]
#[command(name = "measex", version, about = "Measurement extraction, scoring and corpus tools")]
struct Cli {
    /// Configuration file; overrides MEASEX_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert source annotations into a canonical corpus.
    Convert {
        #[arg(long)]
        input: PathBuf,
        /// Label mapping table (JSON); defaults to the built-in table.
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Domain for records that carry none.
        #[arg(long, default_value = "custom")]
        domain: String,
    },
    /// Write TOKEN<TAB>TAG training data for one task.
    ExportTags {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        task: u8,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the two-stage extraction pipeline.
    Extract {
        #[arg(long)]
        corpus: PathBuf,
        /// `rule` or `file:<predictions.jsonl>`.
        #[arg(long, default_value = "rule")]
        task1: String,
        /// `lexicon` or `file:<predictions.jsonl>`.
        #[arg(long, default_value = "lexicon")]
        task2: String,
        #[arg(long)]
        output: PathBuf,
        /// Write prediction interchange records instead of a corpus.
        #[arg(long)]
        interchange: bool,
    },
    /// Score predicted frames against gold frames.
    Score {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[command(flatten)]
        format: Format,
    },
    /// Entity-attribute report by domain, class and match type.
    Analyze {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Character-level Krippendorff's alpha between coders.
    Iaa {
        /// Directory with one corpus file per coder.
        #[arg(long)]
        coders: PathBuf,
        #[arg(long)]
        per_class: bool,
        #[arg(long)]
        json: bool,
    },
    /// Vocabulary overlap between corpora.
    Overlap {
        #[arg(long, value_delimiter = ',', required = true)]
        corpora: Vec<PathBuf>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Check annotations against the guideline rules.
    Lint {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Strict,
    Overlap,
}

#[derive(Args)]
#[group(multiple = false)]
struct Format {
    #[arg(long)]
    json: bool,
    #[arg(long)]
    table: bool,
}

type Failure = Box<dyn std::error::Error>;

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| format!("cannot create {}: {e}", path.display()).into())
}

fn load(path: &Path) -> Result<Vec<measex::Document>, Failure> {
    read_corpus(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn tagger(source: &str, default: &str, config: &Config) -> Result<Box<dyn Tagger>, Failure> {
    if let Some(path) = source.strip_prefix("file:") {
        return Ok(Box::new(
            FileBackedTagger::load(Path::new(path)).map_err(|e| format!("{path}: {e}"))?,
        ));
    }
    match (source, default) {
        ("rule", "rule") => Ok(Box::new(RuleQuantityTagger::new(config.units()?))),
        ("lexicon", "lexicon") => Ok(Box::new(LexiconContextTagger::new(
            config.units()?,
            config.operations()?,
        ))),
        _ => Err(format!("unknown tagger {source:?}; expected {default} or file:<path>").into()),
    }
}

fn emit(text: &str) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Runs one subcommand; `Ok(false)` signals a validation failure.
fn run(cli: Cli) -> Result<bool, Failure> {
    let config = Config::from_flag_or_env(cli.config.as_deref())?;
    if let Some(n) = config.parallelism {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Convert {
            input,
            mapping,
            output,
            domain,
        } => {
            let table = match mapping {
                Some(p) => MappingTable::load(&p)?,
                None => config.mapping_table()?,
            };
            let options = ConvertOptions {
                table,
                segmenter: config.segmenter()?,
                default_domain: domain,
                ..ConvertOptions::default()
            };
            let sources = read_source_file(&input)?;
            let docs = sources
                .iter()
                .enumerate()
                .map(|(i, s)| convert_source(s, i + 1, &options))
                .collect::<Result<Vec<_>, _>>()?;
            write_corpus(&docs, &output)?;
            info!("converted {} documents", docs.len());
        }
        Command::ExportTags { corpus, task, output } => {
            let docs = load(&corpus)?;
            let task = Task::from_number(task).expect("clap restricts the range");
            let stats = export_training_file(&docs, task, &output)?;
            info!("wrote {} samples, skipped {}", stats.samples, stats.skipped);
        }
        Command::Extract {
            corpus,
            task1,
            task2,
            output,
            interchange,
        } => {
            let docs = load(&corpus)?;
            let t1 = tagger(&task1, "rule", &config)?;
            let t2 = tagger(&task2, "lexicon", &config)?;
            let predicted = extract_corpus(&docs, t1.as_ref(), t2.as_ref(), Execution::Parallel)?;
            if interchange {
                let records: Vec<_> = predicted
                    .iter()
                    .flat_map(|d| frames_to_predictions(d, &d.frames))
                    .collect();
                write_predictions_file(&records, &output)?;
            } else {
                write_corpus(&predicted, &output)?;
            }
        }
        Command::Score {
            gold,
            pred,
            mode,
            format,
        } => {
            let mode = match mode {
                Some(Mode::Strict) => ScoringMode::Strict,
                Some(Mode::Overlap) => ScoringMode::Overlap,
                None => config.scoring_mode,
            };
            let report = score_corpus(&load(&gold)?, &load(&pred)?, mode)?;
            emit(&if format.json {
                report.to_json()
            } else {
                report.to_table()
            })?;
        }
        Command::Analyze {
            gold,
            pred,
            output,
            json,
        } => {
            let rows = attribute_report(&load(&gold)?, &load(&pred)?)?;
            let mut out = create(&output)?;
            if json {
                serde_json::to_writer_pretty(&mut out, &rows)?;
                out.write_all(b"\n")?;
            } else {
                out.write_all(attribute_table(&rows).as_bytes())?;
            }
            out.flush()?;
        }
        Command::Iaa {
            coders,
            per_class,
            json,
        } => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&coders)
                .map_err(|e| format!("{}: {e}", coders.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            files.retain(|p| p.is_file());
            files.sort();
            let mut annotations = Vec::new();
            let mut reference = None;
            for f in &files {
                let docs = load(f)?;
                let name = f
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                annotations.push(CoderAnnotations::from_documents(name, &docs));
                reference.get_or_insert(docs);
            }
            let report = krippendorff_alpha(&annotations, reference.as_deref().unwrap_or_default())?;
            if json {
                let mut v = serde_json::to_value(&report)?;
                if !per_class {
                    v.as_object_mut().expect("report is an object").remove("per_class");
                }
                emit(&serde_json::to_string_pretty(&v)?)?;
            } else if per_class {
                emit(&report.to_table())?;
            } else {
                emit(&format!(
                    "alpha {:.3} ({} coders, {} units)",
                    report.combined, report.coders, report.units
                ))?;
            }
        }
        Command::Overlap { corpora, top_k, json } => {
            let named = corpora
                .iter()
                .map(|p| {
                    Ok((
                        p.file_stem()
                            .map(|s| s.to_string_lossy().into_owned())
                            .unwrap_or_default(),
                        load(p)?,
                    ))
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            let matrix = vocab_overlap(&named, top_k.unwrap_or(config.top_k))?;
            emit(&if json {
                serde_json::to_string_pretty(&matrix)?
            } else {
                matrix.to_table()
            })?;
        }
        Command::Lint { corpus, json } => {
            let linter = config.linter()?;
            let mut findings = Vec::new();
            for doc in load(&corpus)? {
                findings.extend(linter.lint_document(&doc)?);
            }
            if json {
                let mut out = io::stdout().lock();
                write_findings_jsonl(&findings, &mut out)?;
            } else {
                for f in &findings {
                    emit(&f.to_string())?;
                }
            }
            let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
            if errors > 0 {
                error!("{errors} error-severity findings");
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
