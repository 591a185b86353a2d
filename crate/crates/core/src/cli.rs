//! Command-line front end.
//!
//! Types, words and components are 1-based in every file and flag.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::forest::{Encodings, PlanarForest};
use crate::reduce::{exact_size_distribution, height_tail, project_monotype, reduced_mean};
use crate::sampler::{sample_forest, ConditionedSampler, OffspringSampler, RngStream, SampleOptions, DEFAULT_VERTEX_CAP};
use crate::snake::{attach_spatial, big_sigma_squared};
use crate::spectra::{size_biased, Criticality, OffspringModel, SpectralData};
use crate::verify::{Experiment, ExperimentConfig, Verdict};

pub const TOOL: &str = "mgw";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "mgw", version, about = "Critical multitype Galton-Watson forests, encodings and snakes")]
pub struct Cli {
    /// Worker threads for replicate-parallel work (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectral constants, criticality and reduced means of a model.
    Analyze(AnalyzeArgs),
    /// Sample forests, optionally conditioned on a type count.
    Sample(SampleArgs),
    /// Project a forest onto one type.
    Project(ProjectArgs),
    /// Sample forests with spatial displacements and write the snake.
    Snake(SnakeArgs),
    /// Exact law of the number of vertices of one type in a tree.
    Sizedist(SizedistArgs),
    /// Exact height tail P(ht >= n) of a tree.
    Heighttail(HeighttailArgs),
    /// Run a verification experiment.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model JSON file.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// RNG seed; falls back to MGW_SEED, then 0.
    #[arg(long, env = "MGW_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleFormat {
    /// index,parent,type,component rows.
    Parents,
    /// n,H,V,Lambda_1..K,Upsilon rows.
    Encodings,
}

#[derive(Debug, Args)]
pub struct RootsArgs {
    /// Type of a single root.
    #[arg(long, conflicts_with = "roots")]
    pub root_type: Option<usize>,
    /// Comma-separated root types.
    #[arg(long, value_delimiter = ',')]
    pub roots: Option<Vec<usize>>,
}

impl RootsArgs {
    fn resolve(&self, k: usize) -> Result<Vec<usize>> {
        let roots = match (&self.root_type, &self.roots) {
            (Some(t), _) => vec![*t],
            (None, Some(r)) => r.clone(),
            (None, None) => vec![1],
        };
        roots.iter().map(|&t| zero_based(t, k)).collect()
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub roots: RootsArgs,
    /// Number of independent samples.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Vertex cap per sample.
    #[arg(long, default_value_t = DEFAULT_VERTEX_CAP)]
    pub cap: usize,
    /// Condition a single-root tree on the count of this type.
    #[arg(long, requires = "condition_size")]
    pub condition_type: Option<usize>,
    #[arg(long, requires = "condition_type")]
    pub condition_size: Option<usize>,
    /// Rejection attempts per conditioned sample.
    #[arg(long, default_value_t = 100_000_000)]
    pub max_attempts: u64,
    #[arg(long, value_enum, default_value_t = SampleFormat::Parents)]
    pub format: SampleFormat,
    /// Pad encodings to this many steps.
    #[arg(long)]
    pub pad_to: Option<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Forest CSV (index,parent,type[,component]).
    #[arg(long)]
    pub input: PathBuf,
    /// Type kept by the projection.
    #[arg(long = "type")]
    pub ty: usize,
    /// Number of types, if larger than the largest type in the file.
    #[arg(long)]
    pub num_types: Option<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct SnakeArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub roots: RootsArgs,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, default_value_t = DEFAULT_VERTEX_CAP)]
    pub cap: usize,
    /// Fail on realized child words without a spatial law.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct SizedistArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 1)]
    pub root_type: usize,
    #[arg(long, default_value_t = 1)]
    pub count_type: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_n: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct HeighttailArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long = "type", default_value_t = 1)]
    pub ty: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_n: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Experiment name, for example height-fdd or snake-variance.
    #[arg(long)]
    pub experiment: String,
    #[command(flatten)]
    pub model: ModelArg,
    /// Comma-separated root types, repeated cyclically.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub roots: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Time point of the scaled process.
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    /// Second time point for two-point statistics.
    #[arg(long)]
    pub s2: Option<f64>,
    /// Root or focal type.
    #[arg(long = "type", default_value_t = 1)]
    pub ty: usize,
    /// Counted type for conditioning and local limits.
    #[arg(long, default_value_t = 1)]
    pub count_type: usize,
    /// Child word of a branch event, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub word: Vec<usize>,
    /// Rank of the spine child within the word.
    #[arg(long, default_value_t = 1)]
    pub rank: usize,
    /// Spine length or generation.
    #[arg(long, default_value_t = 200)]
    pub h: usize,
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    #[arg(long, default_value_t = DEFAULT_VERTEX_CAP)]
    pub cap: usize,
    #[arg(long, default_value_t = 100_000_000)]
    pub max_attempts: u64,
    #[arg(long)]
    pub strict: bool,
    /// Run replicates on one thread.
    #[arg(long)]
    pub serial: bool,
    #[arg(long, default_value_t = 100_000)]
    pub reference_steps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub reference_reps: usize,
    /// Report JSON (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of per-replicate raw statistics.
    #[arg(long)]
    pub raw: Option<PathBuf>,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) => 2,
        Error::Invariant { .. }
        | Error::NotIrreducible
        | Error::DegenerateModel
        | Error::DegenerateSpatial
        | Error::NotCritical(_)
        | Error::MissingLaw { .. }
        | Error::InvalidRemoval(_) => 3,
        _ => 5,
    }
}

pub fn verdict_exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Inconclusive => 4,
    }
}

fn zero_based(t: usize, k: usize) -> Result<usize> {
    if t == 0 || t > k {
        return Err(Error::InvalidArgument(format!("type {t} outside 1..={k}")));
    }
    Ok(t - 1)
}

fn load_model(path: &Path) -> Result<OffspringModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    OffspringModel::from_json_str(&text)
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// Reproducibility header shared by all outputs.
fn meta(model: Option<&OffspringModel>, seed: Option<u64>, config: Value) -> Value {
    json!({
        "tool": TOOL,
        "version": VERSION,
        "model_sha256": model.map(|m| m.hash()),
        "seed": seed,
        "config": config,
    })
}

fn write_csv_meta(out: &mut dyn Write, meta: &Value) -> Result<()> {
    writeln!(out, "# {TOOL} {VERSION}")?;
    if let Some(h) = meta["model_sha256"].as_str() {
        writeln!(out, "# model_sha256 {h}")?;
    }
    if let Some(s) = meta["seed"].as_u64() {
        writeln!(out, "# seed {s}")?;
    }
    writeln!(out, "# config {}", meta["config"])?;
    Ok(())
}

fn write_json(out: &mut dyn Write, v: &Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, v)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<i32> {
    let model = load_model(&a.model.model)?;
    let spec = SpectralData::compute(&model)?;
    let k = model.num_types();
    let critical = spec.criticality == Criticality::Critical;
    let reduced: Vec<Value> = (0..k)
        .filter(|_| k >= 2)
        .map(|r| match reduced_mean(&spec.m, r) {
            Ok(m) => json!({"removed_type": r + 1, "mean": m}),
            Err(e) => json!({"removed_type": r + 1, "error": e.to_string()}),
        })
        .collect();
    let mut v = json!({
        "meta": meta(Some(&model), None, json!({"command": "analyze", "model": a.model.model})),
        "num_types": k,
        "rho": spec.rho,
        "a": spec.a,
        "b": spec.b,
        "criticality": spec.criticality,
        "irreducible": spec.irreducible,
        "nondegenerate": spec.nondegenerate,
        "M": spec.m,
        "Q": spec.q,
        "reduced_means": reduced,
    });
    if critical {
        v["sigma"] = json!(spec.sigma);
        v["sigma_squared"] = json!(spec.sigma_squared());
        if spec.sigma > 0.0 {
            v["height_tail_constants"] = json!((0..k).map(|i| spec.height_tail_constant(i)).collect::<Vec<_>>());
            v["projected_variances"] = json!((0..k).map(|i| spec.projected_variance(i)).collect::<Vec<_>>());
        }
        v["spine_transition"] = json!(size_biased(&model, &spec)?.spine_transition);
        if model.has_spatial() {
            let s2 = big_sigma_squared(&model, &spec);
            v["Sigma"] = json!(s2.sqrt());
            v["Sigma_squared"] = json!(s2);
        }
    }
    write_json(&mut *open_out(&a.out.out)?, &v)?;
    Ok(0)
}

fn cmd_sample(a: &SampleArgs) -> Result<i32> {
    let model = load_model(&a.model.model)?;
    let k = model.num_types();
    let roots = a.roots.resolve(k)?;
    let config = json!({
        "command": "sample", "model": a.model.model, "roots": roots.iter().map(|t| t + 1).collect::<Vec<_>>(),
        "count": a.count, "cap": a.cap, "condition_type": a.condition_type, "condition_size": a.condition_size,
        "max_attempts": a.max_attempts, "format": format!("{:?}", a.format).to_lowercase(), "pad_to": a.pad_to,
    });
    let conditioned = match (a.condition_type, a.condition_size) {
        (Some(j), Some(n)) => {
            if roots.len() != 1 {
                return Err(Error::InvalidArgument("conditioned samples need a single root".into()));
            }
            Some(ConditionedSampler::new(&model, roots[0], zero_based(j, k)?, n)?)
        }
        _ => None,
    };
    let sampler = OffspringSampler::new(&model);
    let mut out = open_out(&a.out.out)?;
    write_csv_meta(&mut *out, &meta(Some(&model), Some(a.seed.seed), config))?;
    for c in 0..a.count {
        let mut rng = RngStream::new(a.seed.seed, c as u64).rng();
        let f = match &conditioned {
            Some(cs) => cs.sample(&mut rng, a.max_attempts, a.cap)?.tree,
            None => sample_forest(&sampler, &roots, &mut rng, SampleOptions::with_cap(a.cap))?,
        };
        writeln!(out, "# sample {}", c + 1)?;
        match a.format {
            SampleFormat::Parents => f.write_csv(&mut out, true)?,
            SampleFormat::Encodings => Encodings::of(&f).write_csv(&mut out, true, a.pad_to)?,
        }
    }
    out.flush()?;
    Ok(0)
}

fn cmd_project(a: &ProjectArgs) -> Result<i32> {
    let file = File::open(&a.input).map_err(|e| Error::Io(format!("{}: {e}", a.input.display())))?;
    let forests = PlanarForest::read_csv_many(BufReader::new(file), a.num_types)?;
    let config = json!({"command": "project", "input": a.input, "type": a.ty, "num_types": a.num_types});
    let mut out = open_out(&a.out.out)?;
    write_csv_meta(&mut *out, &meta(None, None, config))?;
    for (c, f) in forests.iter().enumerate() {
        let i = zero_based(a.ty, f.num_types())?;
        let p = project_monotype(f, i);
        writeln!(out, "# sample {}", c + 1)?;
        let floor: Vec<String> = p.deleted_floor.iter().map(|d| d.to_string()).collect();
        writeln!(out, "# deleted_floor {}", floor.join(","))?;
        writeln!(out, "index,parent,type,component,origin,deleted_between")?;
        let r = &p.reduced;
        for v in 0..r.len() {
            let parent = r.parent(v).map_or(-1, |x| x as i64);
            writeln!(
                out,
                "{v},{parent},{},{},{},{}",
                r.type_of(v) + 1,
                r.component(v),
                p.origin[v],
                p.deleted_between[v]
            )?;
        }
    }
    out.flush()?;
    Ok(0)
}

fn cmd_snake(a: &SnakeArgs) -> Result<i32> {
    let model = load_model(&a.model.model)?;
    let spec = SpectralData::compute(&model)?;
    let roots = a.roots.resolve(model.num_types())?;
    let big2 = big_sigma_squared(&model, &spec);
    if a.strict && big2 <= 0.0 {
        return Err(Error::DegenerateSpatial);
    }
    let config = json!({
        "command": "snake", "model": a.model.model, "roots": roots.iter().map(|t| t + 1).collect::<Vec<_>>(),
        "count": a.count, "cap": a.cap, "strict": a.strict,
    });
    let sampler = OffspringSampler::new(&model);
    let mut out = open_out(&a.out.out)?;
    write_csv_meta(&mut *out, &meta(Some(&model), Some(a.seed.seed), config))?;
    for c in 0..a.count {
        let mut rng = RngStream::new(a.seed.seed, c as u64).rng();
        let f = sample_forest(&sampler, &roots, &mut rng, SampleOptions::with_cap(a.cap))?;
        let sf = attach_spatial(&f, &model, &mut rng, a.strict)?;
        writeln!(out, "# sample {}", c + 1)?;
        writeln!(out, "index,parent,type,component,y,S")?;
        for v in 0..f.len() {
            let parent = f.parent(v).map_or(-1, |x| x as i64);
            writeln!(out, "{v},{parent},{},{},{},{}", f.type_of(v) + 1, f.component(v), sf.y[v], sf.s[v])?;
        }
    }
    out.flush()?;
    Ok(0)
}

fn cmd_sizedist(a: &SizedistArgs) -> Result<i32> {
    let model = load_model(&a.model.model)?;
    let k = model.num_types();
    let (i, j) = (zero_based(a.root_type, k)?, zero_based(a.count_type, k)?);
    let dist = exact_size_distribution::<f64>(&model, i, j, a.max_n)?;
    let config = json!({
        "command": "sizedist", "model": a.model.model, "root_type": a.root_type,
        "count_type": a.count_type, "max_n": a.max_n,
    });
    let mut out = open_out(&a.out.out)?;
    write_csv_meta(&mut *out, &meta(Some(&model), None, config))?;
    writeln!(out, "# support_offset {:?} support_period {}", dist.support_offset, dist.support_period)?;
    writeln!(out, "n,q,scaled")?;
    for (n, q) in dist.q.iter().enumerate() {
        writeln!(out, "{n},{q},{}", (n as f64).powf(1.5) * q)?;
    }
    out.flush()?;
    Ok(0)
}

fn cmd_heighttail(a: &HeighttailArgs) -> Result<i32> {
    let model = load_model(&a.model.model)?;
    let i = zero_based(a.ty, model.num_types())?;
    let t = height_tail(&model, i, a.max_n);
    let config = json!({"command": "heighttail", "model": a.model.model, "type": a.ty, "max_n": a.max_n});
    let mut out = open_out(&a.out.out)?;
    write_csv_meta(&mut *out, &meta(Some(&model), None, config))?;
    writeln!(out, "n,t,scaled")?;
    for (n, x) in t.iter().enumerate() {
        writeln!(out, "{n},{x},{}", n as f64 * x)?;
    }
    out.flush()?;
    Ok(0)
}

fn cmd_verify(a: &VerifyArgs) -> Result<i32> {
    let experiment: Experiment = a.experiment.parse()?;
    let model = load_model(&a.model.model)?;
    let k = model.num_types();
    let cfg = ExperimentConfig {
        roots: a.roots.iter().map(|&t| zero_based(t, k)).collect::<Result<_>>()?,
        n: a.n,
        reps: a.reps,
        seed: a.seed.seed,
        s: a.s,
        s2: a.s2,
        i: zero_based(a.ty, k)?,
        j: zero_based(a.count_type, k)?,
        word: a.word.iter().map(|&t| zero_based(t, k)).collect::<Result<_>>()?,
        rank: a
            .rank
            .checked_sub(1)
            .ok_or_else(|| Error::InvalidArgument("rank is 1-based".into()))?,
        h: a.h,
        gamma: a.gamma,
        eta: a.eta,
        vertex_cap: a.cap,
        max_attempts: a.max_attempts,
        strict: a.strict,
        parallel: !a.serial,
        reference_steps: a.reference_steps,
        reference_reps: a.reference_reps,
    };
    let report = experiment.run(&model, &cfg)?;
    let mut config = serde_json::to_value(&cfg)?;
    if let Some(o) = config.as_object_mut() {
        for key in ["i", "j"] {
            o.remove(key);
        }
        o.insert("roots".into(), json!(a.roots));
        o.insert("type".into(), json!(a.ty));
        o.insert("count_type".into(), json!(a.count_type));
        o.insert("word".into(), json!(a.word));
        o.insert("rank".into(), json!(a.rank));
        o.insert("experiment".into(), json!(experiment.name()));
        o.insert("model".into(), json!(a.model.model));
    }
    let v = json!({
        "meta": meta(Some(&model), Some(cfg.seed), config),
        "report": report,
        "fingerprint": report.fingerprint(),
    });
    write_json(&mut *open_out(&a.out)?, &v)?;
    if let Some(p) = &a.raw {
        let f = File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        report.raw.write_csv(BufWriter::new(f))?;
    }
    Ok(verdict_exit_code(report.verdict))
}

pub fn run(cli: &Cli) -> Result<i32> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Project(a) => cmd_project(a),
        Command::Snake(a) => cmd_snake(a),
        Command::Sizedist(a) => cmd_sizedist(a),
        Command::Heighttail(a) => cmd_heighttail(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

pub fn run_from_env() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
