//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! failure.

use crate::service::{AskRequest, ClassifyRequest, ClusterRequest, SearchRequest, Service, TsneRequest};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use semlens_core::analysis::CentroidMode;
use semlens_core::config::AppConfig;
use semlens_core::ingest::{ingest_corpus, open_index, read_corpus};
use semlens_core::lexical::{build_tfidf, dictionary_flag, tfidf_search, TermDictionary};
use semlens_core::rag::meta;
use semlens_core::tsne::{export_layout, LayoutFormat, TsneLayout};
use serde::Serialize;
use std::ffi::OsString;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Used when `--config` is not given and the file exists.
pub const DEFAULT_CONFIG: &str = "semlens.toml";

#[derive(Debug, Parser)]
#[command(name = "semlens", version, about = "Semantic search, classification and mapping over text corpora")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chunk, embed and index a JSONL corpus.
    Ingest {
        /// One {"doc_id", "text", "metadata"} object per line.
        file: PathBuf,
    },
    /// Rank indexed chunks by similarity to a query.
    Search {
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Re-score the shortlist with the configured reranker.
        #[arg(long)]
        rerank: bool,
    },
    /// Assign a text to the most similar category.
    Classify {
        #[arg(long)]
        text: String,
        /// JSON list of {"id", "description", "exemplars"}.
        #[arg(long, value_name = "FILE")]
        categories: PathBuf,
        #[arg(long, default_value = "cohen")]
        scale: String,
        /// Centroid from exemplar embeddings instead of the description.
        #[arg(long)]
        exemplar_mean: bool,
    },
    /// k-means over every indexed chunk.
    Cluster {
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// 2-D t-SNE layout of the indexed chunks.
    Tsne {
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        iterations: Option<usize>,
        /// Layout file; `.json` for JSON, CSV otherwise.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Answer a question from retrieved chunks.
    Ask {
        #[arg(long)]
        question: String,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<IpAddr>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Lexical baselines.
    #[command(subcommand)]
    Baseline(Baseline),
}

#[derive(Debug, Subcommand)]
pub enum Baseline {
    /// Flag a text containing any dictionary term.
    Dictionary {
        /// One term per line.
        #[arg(long, value_name = "FILE")]
        dict: PathBuf,
        #[command(flatten)]
        input: TextInput,
    },
    /// TF-IDF ranking over a JSONL corpus, or over the indexed chunks.
    Tfidf {
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, value_name = "FILE")]
        corpus: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct TextInput {
    #[arg(long)]
    text: Option<String>,
    #[arg(long, value_name = "FILE")]
    file: Option<PathBuf>,
}

type Failure = Box<dyn std::error::Error>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<AppConfig, Failure> {
    match path {
        Some(p) => Ok(AppConfig::load(p)?),
        None if Path::new(DEFAULT_CONFIG).exists() => Ok(AppConfig::load(DEFAULT_CONFIG)?),
        None => Ok(AppConfig::default().validated()?),
    }
}

fn emit<T: Serialize>(json: bool, value: &T, human: impl FnOnce(&T) -> String) -> Result<(), Failure> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{}", human(value));
    }
    Ok(())
}

fn excerpt(text: &str, max_chars: usize) -> String {
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    match flat.char_indices().nth(max_chars) {
        Some((i, _)) => format!("{}...", &flat[..i]),
        None => flat,
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(cli.config.as_deref())?;
    let json = cli.json;
    match cli.command {
        Command::Ingest { file } => {
            let report = ingest_corpus(&file, &cfg)?;
            emit(json, &report, |r| {
                let mut s = format!(
                    "ingested {} docs as {} chunks into {}\n",
                    r.docs,
                    r.chunks,
                    cfg.index_path.display()
                );
                for k in &r.skipped {
                    s += &format!("skipped line {}: {}\n", k.line, k.reason);
                }
                s
            })
        }
        Command::Search { query, top, rerank } => {
            let svc = Service::open(cfg)?;
            let resp = svc.search(&SearchRequest {
                query,
                top_n: top,
                rerank,
            })?;
            emit(json, &resp.results, |hits| {
                hits.iter()
                    .map(|h| {
                        format!(
                            "{:>3}. {:>8}  {}  {}\n     {}\n",
                            h.rank,
                            h.display,
                            h.doc_id,
                            h.chunk_id,
                            excerpt(&h.text, 100)
                        )
                    })
                    .collect()
            })
        }
        Command::Classify {
            text,
            categories,
            scale,
            exemplar_mean,
        } => {
            let svc = Service::open(cfg)?;
            let resp = svc.classify(&ClassifyRequest {
                text,
                categories_file: categories,
                scale: Some(scale),
                centroid: if exemplar_mean {
                    CentroidMode::ExemplarMean
                } else {
                    CentroidMode::Description
                },
            })?;
            emit(json, &resp, |r| {
                let mut s = format!("best fit: {} ({}, {})", r.category_id, r.display, r.band);
                if r.tie {
                    s += " [tie]";
                }
                s += "\n";
                for c in &r.scores {
                    s += &format!("  {:<24} {:>8}  {}\n", c.category_id, c.display, c.band);
                }
                s
            })
        }
        Command::Cluster { k, seed, restarts } => {
            let svc = Service::open(cfg)?;
            let resp = svc.cluster(&ClusterRequest { k, seed, restarts })?;
            emit(json, &resp, |r| {
                let mut s = format!("k = {}, inertia {:.6}\n", r.k, r.inertia);
                for g in &r.clusters {
                    let near: Vec<&str> = g.members.iter().take(5).map(|m| m.chunk_id.as_str()).collect();
                    s += &format!("  cluster {} ({} items): {}\n", g.cluster, g.size, near.join(", "));
                }
                s
            })
        }
        Command::Tsne {
            perplexity,
            seed,
            iterations,
            out,
        } => {
            let svc = Service::open(cfg)?;
            let resp = svc.tsne(&TsneRequest {
                perplexity,
                seed,
                iterations,
            })?;
            let layout = TsneLayout {
                points: resp.points.iter().map(|r| [r.x, r.y]).collect(),
                labels: resp.points.iter().map(|r| r.label.clone()).collect(),
                item_ids: resp.points.iter().map(|r| r.item_id.clone()).collect(),
                kl_trace: resp.kl_divergence.into_iter().collect(),
                perplexity: resp.perplexity,
            };
            export_layout(&layout, &out, LayoutFormat::from_path(&out))?;
            let summary = serde_json::json!({
                "out": out,
                "points": layout.len(),
                "perplexity": resp.perplexity,
                "kl_divergence": resp.kl_divergence,
            });
            emit(json, &summary, |_| {
                format!(
                    "wrote {} points to {} (perplexity {})\n",
                    layout.len(),
                    out.display(),
                    resp.perplexity
                )
            })
        }
        Command::Ask { question } => {
            let svc = Service::open(cfg)?;
            let resp = svc.ask(&AskRequest { question })?;
            emit(json, &resp, |r| {
                let mut s = format!("{}\n", r.answer);
                if r.sources.is_empty() {
                    s += "\n(no supporting context)\n";
                } else {
                    s += "\nsources:\n";
                    for src in &r.sources {
                        s += &format!("  [{}] {}  {}\n", src.chunk_id, src.display, excerpt(&src.excerpt, 80));
                    }
                }
                s
            })
        }
        Command::Serve { bind, port } => {
            let ip: IpAddr = match bind {
                Some(ip) => ip,
                None => cfg.server.bind.parse()?,
            };
            let addr = SocketAddr::new(ip, port.unwrap_or(cfg.server.port));
            let svc = Arc::new(Service::open(cfg)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::server::serve(svc, addr))?;
            Ok(())
        }
        Command::Baseline(Baseline::Dictionary { dict, input }) => {
            let dict = TermDictionary::load(&dict)?;
            let text = match (input.text, input.file) {
                (Some(t), _) => t,
                (None, Some(f)) => std::fs::read_to_string(&f).map_err(|e| format!("{}: {e}", f.display()))?,
                (None, None) => unreachable!("clap requires one input"),
            };
            let result = dictionary_flag(&dict, &text);
            emit(json, &result, |r| {
                let mut s = format!("flagged: {}\n", r.flagged);
                for h in &r.hits {
                    s += &format!("  {} at byte {}\n", h.term, h.offset);
                }
                s
            })
        }
        Command::Baseline(Baseline::Tfidf { query, top, corpus }) => {
            let docs: Vec<(String, String)> = match corpus {
                Some(path) => {
                    let f = std::fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                    let (records, skipped) = read_corpus(std::io::BufReader::new(f))?;
                    for k in skipped {
                        log::warn!("skipped line {}: {}", k.line, k.reason);
                    }
                    records.into_iter().map(|r| (r.doc_id, r.text)).collect()
                }
                None => {
                    let index = open_index(&cfg)?;
                    index
                        .ids()
                        .filter_map(|id| {
                            let m = index.metadata(id)?;
                            Some((m.get(meta::CHUNK_ID)?.clone(), m.get(meta::TEXT)?.clone()))
                        })
                        .collect()
                }
            };
            let tfidf = build_tfidf(&docs)?;
            let hits = tfidf_search(&tfidf, &query, top);
            emit(json, &hits, |hs| {
                hs.iter()
                    .map(|h| format!("{:>3}. {:.6}  {}\n", h.rank, h.score, h.item_id))
                    .collect()
            })
        }
    }
}
