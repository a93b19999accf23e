use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use synmine::config::{DonorScope, PipelineConfig, PruneScope, EMBED_ENDPOINT_ENV};
use synmine::ingest::{ParseStats, PropertyIndex, TripleFormat};
use synmine::pipeline::{evaluate, expand_records, load_dump, load_gold, load_lexicon, mine, run_pipeline};
use synmine::selection::{rank_properties, write_score_tsv, Direction};
use synmine::similarity::TextualMethod;
use synmine::synset::{read_jsonl, write_jsonl};
use synmine::wordpiece::{LrEntMode, PmiNormalization};
use synmine::{Error, Result};

#[derive(Parser)]
#[command(name = "synmine", version, about = "Mine synonym sets from knowledge graph triple dumps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a triple dump into a property index JSON.
    Ingest {
        #[command(flatten)]
        source: Source,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Score properties and write the PCP ranking as TSV.
    Select {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        opts: Overrides,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Mine synsets without expansion.
    Cluster {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        opts: Overrides,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Add expansion records to mined synsets.
    Expand {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        opts: Overrides,
        #[arg(long)]
        synsets: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Compute synset statistics and Rand Index against gold labels.
    Eval {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        synsets: PathBuf,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        include_singletons: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Full pipeline: writes synsets.jsonl and report.json.
    Run {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        format: Option<TripleFormat>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[command(flatten)]
        opts: Overrides,
    },
}

/// A triple dump or a previously written property index.
#[derive(Args)]
struct Source {
    #[arg(long, required_unless_present = "index", conflicts_with = "index")]
    input: Option<PathBuf>,
    #[arg(long, default_value = "tsv")]
    format: TripleFormat,
    #[arg(long)]
    index: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> Result<(PropertyIndex, ParseStats)> {
        match (&self.input, &self.index) {
            (Some(input), _) => load_dump(input, self.format),
            (None, Some(index)) => Ok((
                PropertyIndex::from_json_str(&std::fs::read_to_string(index)?)?,
                ParseStats::default(),
            )),
            (None, None) => Err(Error::config("either --input or --index is required")),
        }
    }
}

#[derive(Args)]
struct Overrides {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    direction: Option<Direction>,
    #[arg(long)]
    max_wordpiece_len: Option<usize>,
    #[arg(long)]
    pmi_norm: Option<PmiNormalization>,
    #[arg(long)]
    lrent_mode: Option<LrEntMode>,
    /// Textual similarity over word-pieces (`pieces`, default) or single `chars`.
    #[arg(long)]
    ts_granularity: Option<String>,
    #[arg(long, env = EMBED_ENDPOINT_ENV)]
    embed_endpoint: Option<String>,
    #[arg(long)]
    embed_cache: Option<PathBuf>,
    #[arg(long)]
    prune_q: Option<f64>,
    #[arg(long)]
    prune_scope: Option<PruneScope>,
    #[arg(long)]
    resolution: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    lexicon_weight: Option<f64>,
    #[arg(long)]
    include_singletons: bool,
    #[arg(long)]
    max_values_per_property: Option<usize>,
    #[arg(long)]
    core_k: Option<usize>,
    #[arg(long)]
    min_pcs: Option<f64>,
    #[arg(long)]
    expansion_cap: Option<usize>,
    #[arg(long)]
    donor_scope: Option<DonorScope>,
    #[arg(long)]
    stop_ratio: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
}

macro_rules! set {
    ($cfg:ident, $opts:ident, $($field:ident),+) => {
        $(if let Some(v) = $opts.$field.clone() { $cfg.$field = v; })+
    };
}

impl Overrides {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        set!(c, self, top_k, direction, max_wordpiece_len, prune_q, prune_scope, resolution, seed);
        set!(c, self, lexicon_weight, max_values_per_property, core_k, min_pcs, expansion_cap);
        set!(c, self, donor_scope, stop_ratio);
        if let Some(v) = self.pmi_norm {
            c.stats.pmi_norm = v;
        }
        if let Some(v) = self.lrent_mode {
            c.stats.lrent_mode = v;
        }
        if let Some(t) = &self.ts_granularity {
            c.similarity.textual_methods = vec![match t.as_str() {
                "pieces" => TextualMethod::WeightedJaccard,
                "chars" => TextualMethod::WeightedJaccardChars,
                other => return Err(Error::config(format!("unknown ts granularity `{other}`"))),
            }];
        }
        if let Some(endpoint) = &self.embed_endpoint {
            c.use_embed_endpoint(endpoint, self.embed_cache.clone());
        }
        if self.lexicon.is_some() {
            c.lexicon = self.lexicon.clone();
        }
        if self.include_singletons {
            c.include_singletons = true;
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        c.validate()?;
        Ok(c)
    }
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_synsets(path: &Path) -> Result<Vec<synmine::synset::Synset>> {
    read_jsonl(BufReader::new(File::open(path)?))
}

fn write_json<T: serde::Serialize>(out: &Option<PathBuf>, value: &T) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { source, output } => {
            let (index, stats) = source.load().map_err(|e| e.in_stage("ingest"))?;
            log::info!(
                "{} lines, {} triples, {} malformed, {} skipped",
                stats.lines,
                stats.triples,
                stats.malformed,
                stats.skipped
            );
            let mut w = sink(&output)?;
            index.write_json(&mut w)?;
            w.flush()?;
        }
        Command::Select { source, opts, output } => {
            let config = opts.resolve()?;
            let (index, _) = source.load().map_err(|e| e.in_stage("ingest"))?;
            let mut scores = rank_properties(&index, config.direction, config.max_wordpiece_len)
                .map_err(|e| e.in_stage("select"))?;
            scores.truncate(config.top_k);
            let mut w = sink(&output)?;
            write_score_tsv(&mut w, &scores)?;
            w.flush()?;
        }
        Command::Cluster { source, opts, output } => {
            let mut config = opts.resolve()?;
            config.expansion_cap = 0;
            let (index, parse) = source.load().map_err(|e| e.in_stage("ingest"))?;
            let lexicon = config.lexicon.as_deref().map(load_lexicon).transpose()?;
            let out = mine(&index, &parse, &config, lexicon.as_deref(), None)?;
            let mut w = sink(&output)?;
            write_jsonl(&mut w, &out.records)?;
            w.flush()?;
        }
        Command::Expand { source, opts, synsets, output } => {
            let config = opts.resolve()?;
            let records = read_synsets(&synsets).map_err(|e| e.in_stage("expand"))?;
            let (index, _) = source.load().map_err(|e| e.in_stage("ingest"))?;
            let out = expand_records(&records, &index, &config).map_err(|e| e.in_stage("expand"))?;
            let mut w = sink(&output)?;
            write_jsonl(&mut w, &out)?;
            w.flush()?;
        }
        Command::Eval { source, synsets, gold, include_singletons, output } => {
            let records = read_synsets(&synsets).map_err(|e| e.in_stage("eval"))?;
            let gold = gold.as_deref().map(load_gold).transpose().map_err(|e| e.in_stage("eval"))?;
            let (index, _) = source.load().map_err(|e| e.in_stage("ingest"))?;
            let report = evaluate(&records, &index, gold.as_ref(), include_singletons)?;
            write_json(&output, &report)?;
        }
        Command::Run { input, format, output_dir, gold, opts } => {
            let mut config = opts.resolve()?;
            if input.is_some() {
                config.input = input;
            }
            if let Some(f) = format {
                config.format = f;
            }
            if output_dir.is_some() {
                config.output_dir = output_dir;
            }
            if gold.is_some() {
                config.gold = gold;
            }
            let report = run_pipeline(&config)?;
            write_json(&None, &report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
