//! `idc` command-line interface.
//!
//! Every command resolves a [`RunConfig`] from `--config` (optional) plus
//! flag overrides, writes it to `<out>/config.json`, and stamps its hash on
//! every output it produces.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::data::{self, Dataset};
use crate::error::{IdcError, Result};
use crate::infer::{self, Outcomes};
use crate::membank::EvidenceItem;
use crate::persist;
use crate::select::{self, Method, Strategy};
use crate::trainer;

#[derive(Debug, Parser)]
#[command(name = "idc", version, about = "Memory-bank classifier for unsupervised domain adaptation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Run configuration JSON; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for every random sub-stream (overrides the config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic shift benchmark as an embedding file.
    GenData {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train encoder, heads and memory banks.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Embedding CSV.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Target accuracy of the memory classifier and the FC head.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Target ground truth (`id,label` CSV).
        #[arg(long)]
        truth: PathBuf,
    },
    /// Evidence report for one sample.
    Explain {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        sample_id: String,
        #[arg(long, default_value_t = 3)]
        top: usize,
    },
    /// Accuracy on retained targets at several rejection rates.
    Reject {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Comma-separated rates in [0, 1].
        #[arg(long, value_delimiter = ',', value_parser = parse_rate,
              default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        rates: Vec<f64>,
    },
    /// Select a source subset by importance.
    Select {
        #[command(flatten)]
        common: CommonArgs,
        /// Trained model; needed by the adv and idc methods.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// random, in, adv or idc.
        #[arg(long, value_parser = parse_method)]
        method: Method,
        /// s (global top), p (proportional) or m (even split plus global fill).
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        /// Fraction of source samples to keep, in (0, 1].
        #[arg(long, value_parser = parse_ratio)]
        ratio: f64,
        /// Retrain on the selection and report target accuracy.
        #[arg(long)]
        retrain: bool,
        /// Target ground truth, required with --retrain.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

fn parse_rate(s: &str) -> std::result::Result<f64, String> {
    let r: f64 = s.trim().parse().map_err(|_| format!("not a number: {s:?}"))?;
    if (0.0..=1.0).contains(&r) {
        Ok(r)
    } else {
        Err(format!("rate {r} outside [0, 1]"))
    }
}

fn parse_ratio(s: &str) -> std::result::Result<f64, String> {
    let r: f64 = s.trim().parse().map_err(|_| format!("not a number: {s:?}"))?;
    if r > 0.0 && r <= 1.0 {
        Ok(r)
    } else {
        Err(format!("ratio {r} outside (0, 1]"))
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: IdcError| e.to_string())
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse().map_err(|e: IdcError| e.to_string())
}

fn resolve_config(common: &CommonArgs, tweak: impl FnOnce(&mut RunConfig)) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    tweak(&mut cfg);
    let cfg = cfg.resolve()?;
    fs::create_dir_all(&common.out).map_err(|e| IdcError::io(&common.out, e))?;
    write_file(&common.out.join("config.json"), &cfg.to_json())?;
    Ok(cfg)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| IdcError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| IdcError::CorruptFile(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

fn stamped_csv(hash: &str, body: &str) -> String {
    format!("# config_hash={hash}\n{body}")
}

#[derive(Serialize)]
struct ClassifierMetrics {
    accuracy: f64,
    mean_class_accuracy: f64,
    per_class_accuracy: Vec<Option<f64>>,
}

impl ClassifierMetrics {
    fn from_outcomes(o: &Outcomes, num_classes: usize) -> Self {
        ClassifierMetrics {
            accuracy: o.accuracy(),
            mean_class_accuracy: o.mean_class_accuracy(num_classes),
            per_class_accuracy: o.per_class_accuracy(num_classes),
        }
    }
}

fn load_labeled(data: &Path, truth: &Path) -> Result<(Dataset, Vec<usize>)> {
    let ds = data::load_embeddings(data)?;
    let labels = data::load_target_labels(truth)?.aligned(&ds)?;
    Ok((ds, labels))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common } => {
            let cfg = resolve_config(&common, |_| {})?;
            let generated = data::generate(&cfg.data)?;
            data::save_embeddings(&generated.dataset, common.out.join("embeddings.csv"))?;
            data::save_target_labels(&generated.target_labels, common.out.join("target_labels.csv"))?;
            println!(
                "wrote {} source / {} target samples (config {})",
                generated.dataset.source.len(),
                generated.dataset.target.len(),
                cfg.short_hash()
            );
        }
        Command::Train {
            common,
            data,
            iterations,
        } => {
            let cfg = resolve_config(&common, |c| {
                if let Some(n) = iterations {
                    c.train.iterations = n;
                }
            })?;
            let hash = cfg.hash();
            let ds = data::load_embeddings(&data)?;
            let trained = trainer::train(&cfg.train, &ds)?;
            persist::save_model(&trained.model, common.out.join("model.json"), Some(&hash))?;
            write_file(
                &common.out.join("losses.csv"),
                &stamped_csv(&hash, &trainer::losses_csv(&trained.history)),
            )?;
            if let Some(last) = trained.history.last() {
                println!(
                    "trained {} iterations: L_fc={:.4} L_adv={:.4} L_idc={:.4} src_acc={:.3}",
                    trained.history.len(),
                    last.l_fc,
                    last.l_adv,
                    last.l_idc,
                    last.src_acc
                );
            }
        }
        Command::Eval {
            common,
            model,
            data,
            truth,
        } => {
            let cfg = resolve_config(&common, |_| {})?;
            let model = persist::load_model(&model)?;
            let (ds, labels) = load_labeled(&data, &truth)?;
            let c = ds.num_classes();
            let idc = infer::evaluate_idc(&model, &ds, &labels)?;
            let fc = infer::evaluate_fc(&model, &ds, &labels)?;
            let metrics = json!({
                "config_hash": cfg.hash(),
                "targets": labels.len(),
                "idc": ClassifierMetrics::from_outcomes(&idc, c),
                "fc": ClassifierMetrics::from_outcomes(&fc, c),
            });
            write_json(&common.out.join("metrics.json"), &metrics)?;
            println!(
                "IDC accuracy {:.4} (mean class {:.4}); FC accuracy {:.4} (mean class {:.4})",
                idc.accuracy(),
                idc.mean_class_accuracy(c),
                fc.accuracy(),
                fc.mean_class_accuracy(c)
            );
        }
        Command::Explain {
            common,
            model,
            data,
            sample_id,
            top,
        } => {
            let cfg = resolve_config(&common, |_| {})?;
            let model = persist::load_model(&model)?;
            let ds = data::load_embeddings(&data)?;
            let feature = ds
                .target
                .iter()
                .find(|t| t.id == sample_id)
                .map(|t| &t.feature)
                .or_else(|| ds.source.iter().find(|s| s.id == sample_id).map(|s| &s.feature))
                .ok_or_else(|| IdcError::UnknownId(sample_id.clone()))?;
            let e = infer::explain(&model, feature, top)?;
            let report = json!({
                "config_hash": cfg.hash(),
                "sample_id": sample_id,
                "predicted_class": e.predicted,
                "confidence": e.confidence,
                "scores": e.scores,
                "most_contributing": e.most_contributing,
                "least_contributing": e.least_contributing,
            });
            write_json(&common.out.join("evidence.json"), &report)?;
            print!("{}", evidence_text(&sample_id, &e));
        }
        Command::Reject {
            common,
            model,
            data,
            truth,
            rates,
        } => {
            let cfg = resolve_config(&common, |_| {})?;
            let hash = cfg.hash();
            let model = persist::load_model(&model)?;
            let (ds, labels) = load_labeled(&data, &truth)?;
            let idc = infer::evaluate_idc(&model, &ds, &labels)?.rejection_curve(&rates)?;
            let fc = infer::evaluate_fc(&model, &ds, &labels)?.rejection_curve(&rates)?;
            write_file(&common.out.join("rejection.csv"), &stamped_csv(&hash, &idc.to_csv()))?;
            write_file(&common.out.join("rejection_fc.csv"), &stamped_csv(&hash, &fc.to_csv()))?;
            for (a, b) in idc.points.iter().zip(&fc.points) {
                println!(
                    "rate {:.2}: IDC {:.4} / FC {:.4} ({} retained)",
                    a.rate, a.accuracy, b.accuracy, a.retained
                );
            }
        }
        Command::Select {
            common,
            model,
            data,
            method,
            strategy,
            ratio,
            retrain,
            truth,
        } => {
            let cfg = resolve_config(&common, |c| {
                c.select.method = method;
                c.select.strategy = strategy;
                c.select.ratio = ratio;
            })?;
            let hash = cfg.hash();
            let ds = data::load_embeddings(&data)?;
            let model = model.map(persist::load_model).transpose()?;
            let (table, plan) = select::select(
                method,
                strategy,
                ratio,
                &ds,
                model.as_ref(),
                cfg.seed,
                cfg.select.class_split,
            )?;
            write_file(&common.out.join("selection.csv"), &stamped_csv(&hash, &plan.to_csv(&table)))?;
            let outcome = if retrain {
                let truth = truth.ok_or_else(|| IdcError::ConfigInvalid("--retrain requires --truth".into()))?;
                let labels = data::load_target_labels(truth)?;
                Some(select::retrain_on_selection(&plan, &ds, &cfg.train, &labels)?)
            } else {
                None
            };
            let summary = json!({
                "config_hash": hash,
                "method": method,
                "strategy": strategy,
                "ratio": ratio,
                "quota": plan.quota,
                "selected": plan.selected.len(),
                "per_class_counts": plan.per_class_counts,
                "retrain": outcome,
            });
            write_json(&common.out.join("selection.json"), &summary)?;
            println!(
                "selected {} of {} source samples ({method}-{strategy}, ratio {ratio})",
                plan.selected.len(),
                table.len()
            );
            if let Some(o) = outcome {
                println!("retrained target accuracy: FC {:.4}", o.fc_accuracy);
            }
        }
    }
    Ok(())
}

fn evidence_text(sample_id: &str, e: &infer::Explanation) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "sample {sample_id}: predicted class {} (score {:.4})",
        e.predicted, e.confidence
    );
    let mut section = |title: &str, items: &[EvidenceItem]| {
        let _ = writeln!(out, "  {title}:");
        for it in items {
            let _ = writeln!(
                out,
                "    {:<12} similarity {:.4}  value {:+.4}  contribution {:+.4}",
                it.provenance, it.similarity, it.value, it.contribution
            );
        }
    };
    section("most contributing", &e.most_contributing);
    section("least contributing", &e.least_contributing);
    out
}

/// Parses arguments and runs; returns the process exit code. Runtime errors
/// print one JSON line on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            1
        }
    }
}
