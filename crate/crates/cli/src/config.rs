//! Evaluation run configuration: defaults, a key=value file, and command
//! line flags, merged in that order (flags win).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;

use tmprompt::decoder::DEFAULT_ALPHA;
use tmprompt::eval::{BucketSpec, SystemKind, DEFAULT_BEAM_WIDTH, DEFAULT_MAX_LEN};
use tmprompt::retrieval::DEFAULT_CANDIDATES;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Defaults file with one key=value per line; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Translation-memory store.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Retrieval index (required unless --self-tm or --tms).
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Trained translation model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Word-alignment table (required by the fragment system).
    #[arg(long)]
    pub aligner: Option<PathBuf>,
    /// Test set, one source<TAB>reference per line.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Comma-separated system list (default: all seven).
    #[arg(long)]
    pub systems: Option<String>,
    /// Bucket spec `kind:b0,b1,...` with kind fms or length; repeatable.
    #[arg(long)]
    pub buckets: Vec<String>,
    /// Beam width.
    #[arg(long)]
    pub beam: Option<usize>,
    /// Decode length cap.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Length-penalty strength.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Override the model's interpolation weight without retraining.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Retrieval candidate pool size.
    #[arg(long)]
    pub k: Option<usize>,
    /// Skip TM prompting for sentences whose match scores below this.
    #[arg(long)]
    pub fms_threshold: Option<f64>,
    /// Prompt each sentence with its own reference (oracle mode).
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub self_tm: Option<bool>,
    /// JSON array of store entry ids (null allowed), one per test line,
    /// used instead of retrieval.
    #[arg(long)]
    pub tms: Option<PathBuf>,
    /// Worker threads; results are identical for any value.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Conjunction file (lang=word[ comma] lines) extending the built-ins.
    #[arg(long)]
    pub conjunctions: Option<PathBuf>,
    /// Stop-word list replacing the built-ins in fragment filtering.
    #[arg(long)]
    pub stop_words: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write per-sentence records (JSON lines) here.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

/// Everything `eval` needs, fully resolved and validated.
#[derive(Debug)]
pub struct RunConfig {
    pub store: PathBuf,
    pub index: Option<PathBuf>,
    pub model: PathBuf,
    pub aligner: Option<PathBuf>,
    pub test: PathBuf,
    pub systems: Vec<SystemKind>,
    pub buckets: Vec<BucketSpec>,
    pub beam: usize,
    pub max_len: usize,
    pub alpha: f64,
    pub lambda: Option<f64>,
    pub k: usize,
    pub fms_threshold: Option<f64>,
    pub self_tm: bool,
    pub tms: Option<PathBuf>,
    pub jobs: usize,
    pub conjunctions: Option<PathBuf>,
    pub stop_words: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub records: Option<PathBuf>,
}

const KNOWN_KEYS: [&str; 20] = [
    "store",
    "index",
    "model",
    "aligner",
    "test",
    "systems",
    "buckets",
    "beam",
    "max-len",
    "alpha",
    "lambda",
    "k",
    "fms-threshold",
    "self-tm",
    "tms",
    "jobs",
    "conjunctions",
    "stop-words",
    "report",
    "records",
];

/// `key = value` per line, `#` comments. Repeated keys keep every value
/// (used by `buckets`); for scalars the last one wins.
fn parse_kv_file(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            anyhow!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                i + 1
            )
        })?;
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            bail!(
                "{}:{}: unknown key {key:?} (known: {})",
                path.display(),
                i + 1,
                KNOWN_KEYS.join(", ")
            );
        }
        map.entry(key.to_string())
            .or_default()
            .push(value.trim().to_string());
    }
    Ok(map)
}

struct FileValues(BTreeMap<String, Vec<String>>);

impl FileValues {
    fn scalar(&self, key: &str) -> Option<&str> {
        self.0.get(key).and_then(|v| v.last()).map(String::as_str)
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.scalar(key).map(PathBuf::from)
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.scalar(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| anyhow!("config key {key:?}: expected an integer, got {v:?}"))
            })
            .transpose()
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.scalar(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| anyhow!("config key {key:?}: expected a number, got {v:?}"))
            })
            .transpose()
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.scalar(key)
            .map(|v| match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                other => Err(anyhow!(
                    "config key {key:?}: expected true or false, got {other:?}"
                )),
            })
            .transpose()
    }
}

fn parse_systems(spec: &str) -> Result<Vec<SystemKind>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<SystemKind>().map_err(|e| anyhow!(e)))
        .collect()
}

fn parse_buckets(specs: &[String]) -> Result<Vec<BucketSpec>> {
    let mut out = Vec::new();
    for spec in specs {
        // A single value may carry several space-separated specs.
        for part in spec.split_whitespace() {
            out.push(
                part.parse::<BucketSpec>()
                    .map_err(|e| anyhow!("bucket spec {part:?}: {e}"))?,
            );
        }
    }
    Ok(out)
}

impl RunConfig {
    pub fn assemble(args: &EvalArgs) -> Result<RunConfig> {
        let file = FileValues(match &args.config {
            Some(path) => parse_kv_file(path)?,
            None => BTreeMap::new(),
        });

        let require = |cli: &Option<PathBuf>, key: &str| -> Result<PathBuf> {
            cli.clone()
                .or_else(|| file.path(key))
                .ok_or_else(|| anyhow!("missing --{key} (or {key}= in the config file)"))
        };
        let optional =
            |cli: &Option<PathBuf>, key: &str| cli.clone().or_else(|| file.path(key));

        let systems = match args.systems.as_deref().or_else(|| file.scalar("systems")) {
            Some(spec) => parse_systems(spec)?,
            None => SystemKind::all(),
        };
        let bucket_strings: Vec<String> = if args.buckets.is_empty() {
            file.0.get("buckets").cloned().unwrap_or_default()
        } else {
            args.buckets.clone()
        };
        let buckets = if bucket_strings.is_empty() {
            vec![BucketSpec::fms_default()]
        } else {
            parse_buckets(&bucket_strings)?
        };

        let config = RunConfig {
            store: require(&args.store, "store")?,
            index: optional(&args.index, "index"),
            model: require(&args.model, "model")?,
            aligner: optional(&args.aligner, "aligner"),
            test: require(&args.test, "test")?,
            systems,
            buckets,
            beam: args
                .beam
                .or(file.usize("beam")?)
                .unwrap_or(DEFAULT_BEAM_WIDTH),
            max_len: args
                .max_len
                .or(file.usize("max-len")?)
                .unwrap_or(DEFAULT_MAX_LEN),
            alpha: args.alpha.or(file.f64("alpha")?).unwrap_or(DEFAULT_ALPHA),
            lambda: args.lambda.or(file.f64("lambda")?),
            k: args.k.or(file.usize("k")?).unwrap_or(DEFAULT_CANDIDATES),
            fms_threshold: args.fms_threshold.or(file.f64("fms-threshold")?),
            self_tm: args.self_tm.or(file.bool("self-tm")?).unwrap_or(false),
            tms: optional(&args.tms, "tms"),
            jobs: args.jobs.or(file.usize("jobs")?).unwrap_or(1),
            conjunctions: optional(&args.conjunctions, "conjunctions"),
            stop_words: optional(&args.stop_words, "stop-words"),
            report: optional(&args.report, "report"),
            records: optional(&args.records, "records"),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.systems.is_empty() {
            bail!("the system list is empty; name at least one, e.g. --systems baseline");
        }
        if self.beam == 0 {
            bail!("beam width must be at least 1");
        }
        if self.max_len == 0 {
            bail!("max length must be at least 1");
        }
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        if self.k == 0 {
            bail!("candidate pool size k must be at least 1");
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            bail!("alpha must be a finite non-negative number, got {}", self.alpha);
        }
        if let Some(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                bail!("lambda must lie in [0, 1], got {l}");
            }
        }
        if let Some(t) = self.fms_threshold {
            if !(0.0..=1.0).contains(&t) {
                bail!("fms-threshold must lie in [0, 1], got {t}");
            }
        }
        if self.self_tm && self.tms.is_some() {
            bail!("--self-tm and --tms both supply the matches; pick one");
        }
        if !self.self_tm && self.tms.is_none() && self.index.is_none() {
            bail!("need --index unless --self-tm or --tms supplies the matches");
        }
        if self.systems.contains(&SystemKind::Fragment) && self.aligner.is_none() {
            bail!("the fragment system needs an alignment table: pass --aligner");
        }
        Ok(())
    }
}
