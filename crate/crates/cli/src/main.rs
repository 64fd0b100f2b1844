use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dehash_core::aggregate::{compute_bow, compute_vlad, BowHistogram, Normalization};
use dehash_core::hashing::train_hashing;
use dehash_core::io::{
    format_ranking_dump, read_descriptors, read_hashing_model, read_index, read_tree, wire_decode, wire_encode,
    write_file, write_hashing_model, write_index, write_tree,
};
use dehash_core::pipeline::{build_index, describe, lambda_sweep, load_dataset, load_or_train_tree, prepare_experiment, rank_query, Experiment, PreparedQuery};
use dehash_core::reconstruct::ContextTag;
use dehash_core::retrieval::{GeoPoint, ImageId};
use dehash_core::synth::synthesize_dataset;
use dehash_core::{run_pipeline, ExperimentConfig};

// A closed stdout (`dehash ... | head`) is not an error worth a panic.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}
macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "dehash", version, about = "Hashed-VLAD de-hashing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the vocabulary tree and write it to a file.
    TrainTree {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the hashing model on the database VLADs.
    TrainHash {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the database index (BoW, VLAD, codes, PQ codes, GPS, category).
    Index {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Hashing model; trained on the fly when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the database for one query, given as descriptors or as a wire payload.
    Query(QueryArgs),
    /// Run the full experiment and write the report.
    Benchmark {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory for report-<hash>.json and report-<hash>.txt.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Count reconstructed visual words over the configured lambdas.
    SweepLambda {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate a synthetic dataset: descriptor files, manifest and the tree used.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Config file plus overrides. Precedence: flags, then the file, then defaults.
#[derive(Args, Default)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config field, e.g. `--set reconstruction.lambda=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    branch: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    vlad_level: Option<usize>,
    /// tree.seed
    #[arg(long)]
    tree_seed: Option<u64>,
    /// hashing.variant
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    bits: Option<usize>,
    /// hashing.seed
    #[arg(long)]
    hash_seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    top_r: Option<usize>,
    /// Comma-separated cue names.
    #[arg(long)]
    cues: Option<String>,
    #[arg(long)]
    combine: Option<String>,
    /// Comma-separated report modes.
    #[arg(long)]
    modes: Option<String>,
    #[arg(long)]
    normalization: Option<String>,
    /// dataset.manifest
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// dataset.tree: a pre-trained tree file.
    #[arg(long)]
    tree: Option<PathBuf>,
    /// dataset.synthetic.num_images
    #[arg(long)]
    num_images: Option<usize>,
    /// dataset.synthetic.num_queries
    #[arg(long)]
    num_queries: Option<usize>,
    /// dataset.synthetic.seed
    #[arg(long)]
    synth_seed: Option<u64>,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Query descriptors (DHDESC01); encoded locally like a mobile client would.
    #[arg(long, conflicts_with = "wire", required_unless_present = "wire")]
    descriptors: Option<PathBuf>,
    /// A received wire payload (DHWIRE01).
    #[arg(long)]
    wire: Option<PathBuf>,
    #[arg(long, requires = "lon", allow_hyphen_values = true)]
    lat: Option<f64>,
    #[arg(long, requires = "lat", allow_hyphen_values = true)]
    lon: Option<f64>,
    #[arg(long)]
    category: Option<u32>,
    /// Ranking mode, one of the report modes.
    #[arg(long, default_value = "brpk")]
    mode: String,
    /// Keep only the best N results.
    #[arg(long)]
    top: Option<usize>,
    /// Also write the wire payload this query would transmit.
    #[arg(long)]
    wire_out: Option<PathBuf>,
    /// Write the ranking dump here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses a TOML literal, falling back to a bare string.
fn toml_literal(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn list(raw: &str) -> toml::Value {
    toml::Value::Array(raw.split(',').map(|s| toml::Value::String(s.trim().to_string())).collect())
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| anyhow!("empty config key '{key}'"))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("config key '{key}': '{p}' is not a section"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, toml::Value)>> {
        let mut out = Vec::new();
        let mut put = |k: &str, v: Option<toml::Value>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        let int = |x: Option<usize>| x.map(|x| toml::Value::Integer(x as i64));
        let seed = |x: Option<u64>| x.map(|x| toml::Value::Integer(x as i64));
        let float = |x: Option<f64>| x.map(toml::Value::Float);
        let string = |x: &Option<String>| x.as_ref().map(|s| toml::Value::String(s.clone()));
        let path = |x: &Option<PathBuf>| x.as_ref().map(|p| toml::Value::String(p.display().to_string()));
        put("tree.branch", int(self.branch));
        put("tree.levels", int(self.levels));
        put("tree.vlad_level", int(self.vlad_level));
        put("tree.seed", seed(self.tree_seed));
        put("hashing.variant", string(&self.variant));
        put("hashing.bits", int(self.bits));
        put("hashing.seed", seed(self.hash_seed));
        put("reconstruction.lambda", float(self.lambda));
        put("reconstruction.alpha", float(self.alpha));
        put("reconstruction.top_r", int(self.top_r));
        put("reconstruction.cues", self.cues.as_deref().map(list));
        put("reconstruction.combine", string(&self.combine));
        put("modes", self.modes.as_deref().map(list));
        put("retrieval.normalization", string(&self.normalization));
        put("dataset.manifest", path(&self.manifest));
        put("dataset.tree", path(&self.tree));
        put("dataset.synthetic.num_images", int(self.num_images));
        put("dataset.synthetic.num_queries", int(self.num_queries));
        put("dataset.synthetic.seed", seed(self.synth_seed));
        for s in &self.sets {
            let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got '{s}'"))?;
            out.push((k.trim().to_string(), toml_literal(v.trim())));
        }
        Ok(out)
    }

    fn load(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                // relative dataset paths in a config file resolve against the file
                let mut cfg = ExperimentConfig::from_toml(&text).with_context(|| format!("in {}", p.display()))?;
                let dir = p.parent().unwrap_or(Path::new(""));
                for slot in [&mut cfg.dataset.manifest, &mut cfg.dataset.tree] {
                    if let Some(rel) = slot.as_mut().filter(|r| r.is_relative()) {
                        *rel = dir.join(&*rel);
                    }
                }
                cfg
            }
            None => ExperimentConfig::default(),
        };
        let mut table: toml::Table = toml::Value::try_from(&base)?
            .try_into()
            .map_err(|e| anyhow!("config is not a table: {e}"))?;
        for (k, v) in self.overrides()? {
            set_path(&mut table, &k, v)?;
        }
        let text = toml::to_string(&table)?;
        Ok(ExperimentConfig::from_toml(&text)?)
    }
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().with_context(|| format!("stage '{name}'"))
}

fn train_model(cfg: &ExperimentConfig) -> Result<(dehash_core::hashing::HashingModel, dehash_core::vocab::VocabularyTree, dehash_core::io::Dataset)> {
    let (tree, ds) = stage("dataset", || Ok(load_dataset(cfg)?))?;
    let described = stage("aggregate", || Ok(describe(&tree, &ds.descriptors, cfg.retrieval.leaf_search)?))?;
    let model = stage("hashing", || {
        let training: Vec<_> = ds.entries.iter().zip(&described).filter(|(e, _)| !e.is_query()).map(|(_, (_, v))| v.clone()).collect();
        Ok(train_hashing(&training, &cfg.hashing.variant, cfg.hashing.bits, cfg.hashing.seed)?)
    })?;
    Ok((model, tree, ds))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainTree { cfg, out } => {
            let cfg = stage("setup", || cfg.load())?;
            let tree = stage("train-tree", || {
                let ds = match &cfg.dataset.manifest {
                    Some(p) => Some(dehash_core::io::ingest_dataset(p)?),
                    None => None,
                };
                Ok(load_or_train_tree(&cfg, ds.as_ref())?)
            })?;
            stage("write", || Ok(write_tree(&out, &tree)?))?;
            outln!(
                "tree: D = {}, branch {}, {} levels, {} VLAD centers, {} leaves -> {}",
                tree.dim(),
                tree.branch(),
                tree.levels(),
                tree.num_vlad(),
                tree.num_leaves(),
                out.display()
            );
        }
        Command::TrainHash { cfg, out } => {
            let cfg = stage("setup", || cfg.load())?;
            let (model, _, _) = train_model(&cfg)?;
            stage("write", || Ok(write_hashing_model(&out, &model)?))?;
            outln!("{} model, {} bits -> {}", cfg.hashing.variant, model.bits(), out.display());
        }
        Command::Index { cfg, model, out } => {
            let cfg = stage("setup", || cfg.load())?;
            let (tree, ds) = stage("dataset", || Ok(load_dataset(&cfg)?))?;
            let described = stage("aggregate", || Ok(describe(&tree, &ds.descriptors, cfg.retrieval.leaf_search)?))?;
            let model = match model {
                Some(p) => stage("load-model", || Ok(read_hashing_model(&p)?))?,
                None => train_model(&cfg)?.0,
            };
            let index = stage("index", || Ok(build_index(&ds.entries, &described, &model, &cfg)?))?;
            stage("write", || Ok(write_index(&out, &index)?))?;
            outln!("{} images indexed -> {}", index.len(), out.display());
        }
        Command::Query(q) => query(q)?,
        Command::Benchmark { cfg, out } => {
            let cfg = stage("setup", || cfg.load())?;
            let report = stage("benchmark", || Ok(run_pipeline(&cfg)?))?;
            let (json, txt) = stage("write", || Ok(report.write(&out)?))?;
            out!("{}", report.summary());
            outln!("\nwrote {} and {}", json.display(), txt.display());
        }
        Command::SweepLambda { cfg } => {
            let cfg = stage("setup", || cfg.load())?;
            let exp = stage("prepare", || Ok(prepare_experiment(&cfg)?))?;
            let rows = stage("sweep", || Ok(lambda_sweep(&exp)?))?;
            outln!("{:>8} {:>10} {:>10}", "lambda", "VWs", "per query");
            for r in rows {
                outln!("{:>8} {:>10} {:>10.1}", r.lambda, r.visual_words, r.mean_per_query);
            }
        }
        Command::Synth { cfg, out } => {
            let cfg = stage("setup", || cfg.load())?;
            let tree = stage("train-tree", || Ok(load_or_train_tree(&cfg, None)?))?;
            let ds = stage("synth", || Ok(synthesize_dataset(&cfg.dataset.synthetic, &tree)?))?;
            let manifest = stage("write", || {
                write_tree(&out.join("tree.bin"), &tree)?;
                Ok(ds.write(&out)?)
            })?;
            let queries = ds.images.iter().filter(|im| im.entry.is_query()).count();
            outln!(
                "{} database images, {} queries -> {} (tree: {})",
                ds.images.len() - queries,
                queries,
                manifest.display(),
                out.join("tree.bin").display()
            );
        }
    }
    Ok(())
}

fn query(q: QueryArgs) -> Result<()> {
    let cfg = stage("setup", || q.cfg.load())?;
    let tree_path = cfg.dataset.tree.clone().ok_or_else(|| anyhow!("query needs the index's tree (--tree)")).context("stage 'setup'")?;
    let (tree, model, index) = stage("load", || Ok((read_tree(&tree_path)?, read_hashing_model(&q.model)?, read_index(&q.index)?)))?;
    let gps = match (q.lat, q.lon) {
        (Some(lat), Some(lon)) => Some(GeoPoint::new(lat, lon).context("stage 'query'")?),
        _ => None,
    };
    let dim = tree.dim();
    let (prepared, local) = stage("encode", || match (&q.descriptors, &q.wire) {
        (Some(p), _) => {
            let set = read_descriptors(p)?;
            let bow = compute_bow(&tree, &set, cfg.retrieval.leaf_search)?;
            let vlad = compute_vlad(&tree, &set, Normalization::None)?;
            let code = model.encode(&vlad)?;
            let approx = model.approximate_vlad(&code)?;
            Ok((PreparedQuery { id: ImageId(0), relevant: Default::default(), bow, vlad, code, approx, gps, category: q.category }, true))
        }
        (None, Some(p)) => {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            let (code, ctx) = wire_decode(&bytes).with_context(|| p.display().to_string())?;
            let approx = model.approximate_vlad(&code)?;
            let vlad = dehash_core::aggregate::VladVector::zeros(dim, tree.num_vlad());
            let gps = gps.or(ctx.gps);
            let category = q.category.or(ctx.category);
            Ok((PreparedQuery { id: ImageId(0), relevant: Default::default(), bow: BowHistogram::new(tree.num_leaves()), vlad, code, approx, gps, category }, false))
        }
        (None, None) => bail!("give --descriptors or --wire"),
    })?;
    if !local && matches!(q.mode.as_str(), "bow" | "vlad" | "adc" | "recon-vlad") {
        bail!("stage 'query': mode '{}' needs the uncompressed query; a wire payload only carries the code", q.mode);
    }
    if let Some(p) = &q.wire_out {
        let ctx = ContextTag { gps: prepared.gps, category: prepared.category, binary_ranking: None };
        stage("wire", || Ok(write_file(p, &wire_encode(&prepared.code, &ctx)?)?))?;
    }
    let exp = Experiment { config: cfg, tree, model, index, queries: Vec::new(), dim };
    let mut ranking = stage("query", || Ok(rank_query(&exp, &prepared, std::slice::from_ref(&q.mode))?.remove(0)))?;
    if let Some(n) = q.top {
        ranking = ranking.truncated(n);
    }
    let dump = format_ranking_dump(prepared.id, &ranking);
    match &q.out {
        Some(p) => stage("write", || Ok(write_file(p, dump.as_bytes())?))?,
        None => out!("{dump}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // core errors already embed their source in the message
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.ends_with(&cause) {
                    msg = if msg.is_empty() { cause } else { format!("{msg}: {cause}") };
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
