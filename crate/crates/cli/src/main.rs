use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tactile_retrieval::datasets::{build_corpus, read_ndjson, write_corpus, CorpusConfig, SplitManifest};
use tactile_retrieval::encoder::{panel_accuracy, train, Arch, EncoderConfig, EncoderModel, LossKind, Optimizer, TrainConfig, TrainSet};
use tactile_retrieval::harness::{bar_chart, run_experiment, write_outputs, Bar, ExperimentConfig, ExperimentKind, SummaryTable};
use tactile_retrieval::interact::TapVariant;

/// Tactile object retrieval experiments.
#[derive(Parser)]
#[command(name = "tactile", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the shape manifest and every generated shape as JSON.
    GenShapes {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 120)]
        n_train: usize,
        #[arg(long, default_value_t = 30)]
        n_val: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tap every manifest shape at several poses and write train/val NDJSON.
    GenCorpus {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 120)]
        n_train: usize,
        #[arg(long, default_value_t = 30)]
        n_val: usize,
        #[arg(long, default_value_t = 8)]
        poses: usize,
        #[arg(long, value_enum, default_value_t = Variant::Full)]
        variant: Variant,
        #[arg(long)]
        r#static: bool,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an encoder on a corpus directory.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ArchArg::Attention)]
        arch: ArchArg,
        #[arg(long, value_enum, default_value_t = LossArg::Infonce)]
        loss: LossArg,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, value_enum, default_value_t = OptArg::Sgd)]
        optimizer: OptArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON file with `encoder` and/or `train` objects overriding the flags.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Cluster vs particle-filter localization.
    EvalLocalize(EvalArgs),
    /// Identification among a panel of objects sharing a bin.
    EvalIdentify(EvalArgs),
    /// Localize, identify and grasp.
    EvalPipeline(EvalArgs),
    /// Ablation studies.
    Ablate {
        #[arg(value_enum)]
        which: Ablation,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Redraw the bar charts of a run from its summary.json.
    Plot {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct EvalArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    panel: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long)]
    r#static: bool,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Named checkpoint for ablations, as `key=path` (repeatable).
    #[arg(long = "models", value_parser = parse_kv)]
    models: Vec<(String, PathBuf)>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON experiment config; its values override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    Friction,
    Static,
    Interaction,
    Arch,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Full,
    NoReloc,
    Noisy,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Attention,
    Recurrent,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Infonce,
    Triplet,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptArg {
    Sgd,
    Adam,
}

fn parse_kv(s: &str) -> Result<(String, PathBuf), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=path, got {s}"))?;
    Ok((k.to_string(), PathBuf::from(v)))
}

/// Recursively overlays `over` onto `base`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

fn overlay<T: serde::Serialize + serde::de::DeserializeOwned>(base: &T, path: Option<&Path>, key: Option<&str>) -> Result<T> {
    let Some(path) = path else {
        return Ok(serde_json::from_value(serde_json::to_value(base)?)?);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut over: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(k) = key {
        over = over.get(k).cloned().unwrap_or(Value::Null);
    }
    let mut v = serde_json::to_value(base)?;
    if !over.is_null() {
        merge(&mut v, over);
    }
    serde_json::from_value(v).with_context(|| format!("invalid config in {}", path.display()))
}

fn experiment_config(kind: ExperimentKind, a: &EvalArgs) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::for_kind(kind);
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.trials {
        c.n_trials = v;
    }
    if let Some(v) = a.k {
        c.k = v;
    }
    if let Some(v) = a.panel {
        c.panel = v;
    }
    c.physics.friction = a.mu;
    c.physics.mass = a.mass;
    if a.r#static {
        c.physics.static_mode = Some(true);
    }
    c.model.clone_from(&a.model);
    c.models.extend(a.models.iter().cloned());
    c.output_dir.clone_from(&a.out);
    let mut c = overlay(&c, a.config.as_deref(), None)?;
    c.experiment = kind;
    Ok(c)
}

/// Runs an experiment; `Ok(false)` when invariants were violated.
fn evaluate(kind: ExperimentKind, a: &EvalArgs) -> Result<bool> {
    let cfg = experiment_config(kind, a)?;
    let out = run_experiment(&cfg)?;
    for t in &out.tables {
        println!("{}", t.to_text());
    }
    if let Some(c) = out.comparison() {
        println!("{}", c.to_text());
    }
    if let Some(dir) = &cfg.output_dir {
        write_outputs(&out, dir)?;
        println!("wrote {}", dir.display());
    }
    for v in &out.violations {
        eprintln!("invariant violated: {v}");
    }
    Ok(out.violations.is_empty())
}

fn tap_variant(v: Variant) -> TapVariant {
    match v {
        Variant::Full => TapVariant::Full,
        Variant::NoReloc => TapVariant::NoReloc,
        Variant::Noisy => TapVariant::Noisy,
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::GenShapes { seed, n_train, n_val, out } => {
            let m = SplitManifest::new(seed, n_train, n_val);
            m.validate()?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("manifest.json"), m.to_json()?)?;
            let mut shapes = Vec::new();
            for id in m.train.iter().chain(&m.val) {
                let s = m.shape(*id)?;
                shapes.push(serde_json::json!({
                    "id": id,
                    "family": SplitManifest::family(*id).name(),
                    "diameter": s.diameter(),
                    "height": s.height(),
                    "shape": s,
                }));
            }
            std::fs::write(out.join("shapes.json"), serde_json::to_string_pretty(&shapes)?)?;
            println!("{} shapes written to {}", shapes.len(), out.display());
        }
        Cmd::GenCorpus { seed, n_train, n_val, poses, variant, r#static, mu, out } => {
            let m = SplitManifest::new(seed, n_train, n_val);
            let mut cfg = CorpusConfig {
                poses_per_object: poses,
                variant: tap_variant(variant),
                ..CorpusConfig::default()
            };
            cfg.scene.static_mode = r#static;
            if let Some(mu) = mu {
                cfg.scene.friction = mu;
            }
            let c = build_corpus(&m, &cfg, seed)?;
            write_corpus(&out, &m, &c)?;
            println!("{} train / {} val records, {} skipped, in {}", c.train.len(), c.val.len(), c.skipped, out.display());
        }
        Cmd::Train { corpus, out, arch, loss, epochs, lr, optimizer, seed, config } => {
            let enc = EncoderConfig {
                arch: match arch {
                    ArchArg::Attention => Arch::Attention,
                    ArchArg::Recurrent => Arch::Recurrent,
                },
                loss: match loss {
                    LossArg::Infonce => LossKind::Infonce,
                    LossArg::Triplet => LossKind::Triplet,
                },
                ..EncoderConfig::default()
            };
            let tc = TrainConfig {
                epochs,
                learning_rate: lr,
                optimizer: match optimizer {
                    OptArg::Sgd => Optimizer::Sgd,
                    OptArg::Adam => Optimizer::Adam,
                },
                ..TrainConfig::default()
            };
            let enc: EncoderConfig = overlay(&enc, config.as_deref(), Some("encoder"))?;
            let tc: TrainConfig = overlay(&tc, config.as_deref(), Some("train"))?;
            let train_seqs = read_ndjson(&corpus.join("train.ndjson"))?;
            let data = TrainSet::from_sequences(&train_seqs, enc.max_seq_len, seed)?;
            let mut model = EncoderModel::new(enc, seed)?;
            println!("{} parameters, {} objects, {} sequences", model.param_count(), data.groups.len(), data.n_sequences());
            let curve = train(&mut model, &data, &tc, seed)?;
            model.save(&out)?;
            println!("final loss {:.4}", curve.last().copied().unwrap_or(f64::NAN));
            println!("train 5-way accuracy {:.3}", panel_accuracy(&model, &data, 5, 500, seed));
            let val = corpus.join("val.ndjson");
            if val.is_file() {
                let vd = TrainSet::from_sequences(&read_ndjson(&val)?, enc.max_seq_len, seed)?;
                if vd.groups.len() >= 2 {
                    println!("val 5-way accuracy {:.3}", panel_accuracy(&model, &vd, 5, 500, seed));
                }
            }
            println!("saved {}", out.display());
        }
        Cmd::EvalLocalize(a) => return evaluate(ExperimentKind::Localize, &a),
        Cmd::EvalIdentify(a) => return evaluate(ExperimentKind::Identify, &a),
        Cmd::EvalPipeline(a) => return evaluate(ExperimentKind::Pipeline, &a),
        Cmd::Ablate { which, eval } => {
            let kind = match which {
                Ablation::Friction => ExperimentKind::AblateFriction,
                Ablation::Static => ExperimentKind::AblateStatic,
                Ablation::Interaction => ExperimentKind::AblateInteraction,
                Ablation::Arch => ExperimentKind::AblateArch,
            };
            return evaluate(kind, &eval);
        }
        Cmd::Plot { summary, out } => {
            let v: Value = serde_json::from_str(&std::fs::read_to_string(&summary)?)?;
            let tables: Vec<SummaryTable> = serde_json::from_value(v["tables"].clone()).context("summary has no tables")?;
            if tables.is_empty() {
                bail!("summary has no tables");
            }
            std::fs::create_dir_all(&out)?;
            let metrics: std::collections::BTreeSet<&String> = tables.iter().flat_map(|t| t.metrics.keys()).collect();
            for m in metrics {
                let bars: Vec<Bar> = tables
                    .iter()
                    .filter_map(|t| t.metrics.get(m).map(|s| Bar { label: t.name.clone(), value: s.mean, err: s.se }))
                    .collect();
                std::fs::write(out.join(format!("{m}.svg")), bar_chart(m, &bars, None))?;
            }
            println!("charts written to {}", out.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
