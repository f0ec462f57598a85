//! Command-line entry points: `gen`, `train`, `eval`, `allocate`, `report`.
//!
//! Every command takes `--key value` flags. `train` and `eval` accept any
//! config key (see [`crate::config::KEYS`]) plus `--config FILE`.

pub mod manifest;
pub mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use manifest::{
    dataset_name, find_files, hash_file, sha256_hex, RunManifest, EVAL_MANIFEST, TRAIN_MANIFEST,
};
pub use report::{aggregate, render_csv, render_table, ReportRow, ReportTable};

use crate::allocator::{decide_scores, decision_row, logit_shift, mode_uplift, AllocationGrid, SimulateMode, DECISION_HEADER};
use crate::baselines::{train_slearner, train_tlearner, SLearner, TLearner, UpliftEstimator};
use crate::config::{Config, ModelKind, KEYS};
use crate::datagen::{generate, load_csv, save_csv, Dataset, Sample, SynSpec, PRESETS};
use crate::error::{Error, Result};
use crate::htenet::{history_csv, model_from_text, model_to_text, train, UniMvt};
use crate::metrics::{intensity_edges, CumulativeSlopeCurve, MetricsReport};
use crate::numerics::PROB_EPS;

pub const USAGE: &str = "\
usage: unimvt <command> [--flag value ...]

commands:
  gen <preset|spec-file> [--out DIR]
  train --data TRAIN.csv --out DIR [--config FILE] [--model unimvt|slearner|tlearner] [--<config.key> VALUE ...]
  eval --model MODEL.txt --data TEST.csv --out DIR [--scores model|truth|constant] [--eval.grid K]
  allocate --model MODEL.txt --data DATA.csv --grid QMIN:QMAX:STEP --value V --threshold R [--mode additive|logit] [--out FILE]
  report [DIR ...] [--out FILE.csv]
";

/// Parsed command line: a command, positionals and `--key value` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Args {
    pub command: String,
    pub positional: Vec<String>,
    pub flags: Vec<(String, String)>,
}

impl Args {
    pub fn parse<I: IntoIterator<Item = String>>(args: I) -> Result<Self> {
        let mut it = args.into_iter();
        let command = it.next().ok_or_else(|| Error::usage("missing command"))?;
        let mut out = Self {
            command,
            ..Self::default()
        };
        while let Some(a) = it.next() {
            match a.strip_prefix("--") {
                Some(flag) => match flag.split_once('=') {
                    Some((k, v)) => out.flags.push((k.into(), v.into())),
                    None => {
                        let v = it.next().ok_or_else(|| Error::usage(format!("flag --{flag} needs a value")))?;
                        out.flags.push((flag.into(), v));
                    }
                },
                None => out.positional.push(a),
            }
        }
        Ok(out)
    }

    /// Last value given for `key`.
    pub fn flag(&self, key: &str) -> Option<&str> {
        self.flags.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.flag(key)
            .ok_or_else(|| Error::usage(format!("{} needs --{key}", self.command)))
    }

    fn reject_unknown(&self, allowed: &[&str], config_keys: bool) -> Result<()> {
        for (k, _) in &self.flags {
            let known = allowed.contains(&k.as_str()) || (config_keys && KEYS.iter().any(|(c, _)| c == k));
            if !known {
                return Err(Error::usage(format!("{}: unknown flag --{k}", self.command)));
            }
        }
        Ok(())
    }
}

/// Run one command. Errors carry the message to print; see [`exit_code`].
pub fn run(args: Args) -> Result<()> {
    match args.command.as_str() {
        "gen" => cmd_gen(&args),
        "train" => cmd_train(&args),
        "eval" => cmd_eval(&args),
        "allocate" => cmd_allocate(&args),
        "report" => cmd_report(&args),
        "help" | "-h" | "--help" => {
            print!("{USAGE}");
            Ok(())
        }
        other => Err(Error::usage(format!("unknown command {other:?}"))),
    }
}

/// 2 for usage errors, 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) => 2,
        _ => 1,
    }
}

fn out_dir(args: &Args, default: &str) -> Result<PathBuf> {
    let dir = PathBuf::from(args.flag("out").unwrap_or(default));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_gen(args: &Args) -> Result<()> {
    args.reject_unknown(&["out"], false)?;
    let which = args
        .positional
        .first()
        .ok_or_else(|| Error::usage(format!("gen needs a preset ({}) or spec file", PRESETS.join(", "))))?;
    let spec = if Path::new(which).is_file() {
        let text = fs::read_to_string(which).map_err(|e| Error::io(which, e))?;
        SynSpec::from_text(&text)?
    } else {
        SynSpec::preset(which)?
    };
    let dir = out_dir(args, "data")?;
    let bench = generate(&spec)?;
    let mut extra = vec![("name".to_string(), spec.name.clone())];
    extra.extend(bench.meta.to_lines().into_iter().map(|(k, v)| (format!("generator.{k}"), v)));
    for d in [&bench.train, &bench.test] {
        let path = dir.join(format!("{}_{}.csv", spec.name, d.split));
        save_csv(d, &path, &extra)?;
        println!("{} rows={} sha256={}", path.display(), d.len(), hash_file(&path)?);
    }
    Ok(())
}

/// A trained model of any supported kind, read back from its text file.
#[derive(Clone, Debug, PartialEq)]
pub enum LoadedModel {
    UniMvt(Box<UniMvt>),
    SLearner(SLearner),
    TLearner(TLearner),
}

impl LoadedModel {
    pub fn from_text(text: &str) -> Result<Self> {
        match text.lines().next().unwrap_or("") {
            l if l.starts_with("unimvt-model") => Ok(Self::UniMvt(Box::new(model_from_text(text)?))),
            l if l.starts_with("slearner-model") => Ok(Self::SLearner(SLearner::from_text(text)?)),
            l if l.starts_with("tlearner-model") => Ok(Self::TLearner(TLearner::from_text(text)?)),
            _ => Err(Error::config("unrecognised model file header")),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn estimator(&self) -> &dyn UpliftEstimator {
        match self {
            Self::UniMvt(m) => m.as_ref(),
            Self::SLearner(m) => m,
            Self::TLearner(m) => m,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::UniMvt(_) => ModelKind::UniMvt,
            Self::SLearner(_) => ModelKind::SLearner,
            Self::TLearner(_) => ModelKind::TLearner,
        }
    }
}

fn load_config(args: &Args) -> Result<Config> {
    let mut cfg = match args.flag("config") {
        Some(p) => Config::from_text(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => Config::default(),
    };
    for (k, v) in &args.flags {
        if KEYS.iter().any(|(c, _)| c == k) {
            cfg.set(k, v)?;
        }
    }
    Ok(cfg)
}

fn data_flag(args: &Args) -> Result<&str> {
    args.flag("data")
        .or_else(|| args.flag("train"))
        .ok_or_else(|| Error::usage(format!("{} needs --data", args.command)))
}

fn cmd_train(args: &Args) -> Result<()> {
    args.reject_unknown(&["data", "train", "out", "config"], true)?;
    let mut cfg = load_config(args)?;
    let data_path = PathBuf::from(data_flag(args)?);
    let dir = PathBuf::from(args.required("out")?);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let data = load_csv(&data_path)?;
    let seed = cfg.resolve_seed()?;
    let kind = cfg.model_kind()?;

    let mut manifest = RunManifest {
        command: "train".into(),
        status: "ok".into(),
        label: cfg.label()?,
        dataset: dataset_name(&data_path),
        seed,
        config: cfg.snapshot(),
        inputs: BTreeMap::from([("data".to_string(), hash_file(&data_path)?)]),
        ..RunManifest::default()
    };
    let start = Instant::now();
    let outcome = fit(&mut cfg, kind, &data);
    let manifest_path = dir.join(TRAIN_MANIFEST);
    let (model_text, history, final_loss) = match outcome {
        Ok(v) => v,
        Err(e) => {
            manifest.status = "failed".into();
            manifest.failure = Some(e.to_string());
            manifest.write(&manifest_path)?;
            return Err(e);
        }
    };
    let model_path = dir.join("model.txt");
    write(&model_path, &model_text)?;
    write(&dir.join("history.csv"), &history)?;
    manifest.results.insert("final_train_loss".into(), final_loss);
    manifest.outputs.insert("model".into(), sha256_hex(model_text.as_bytes()));
    manifest.outputs.insert("history".into(), sha256_hex(history.as_bytes()));
    manifest.write(&manifest_path)?;
    manifest::write_timing(&dir.join("train_timing.json"), start.elapsed().as_secs_f64())?;
    println!("wrote {}", model_path.display());
    Ok(())
}

/// Train the selected model; returns its text form, history CSV and the
/// last epoch's per-row loss.
fn fit(cfg: &mut Config, kind: ModelKind, data: &Dataset) -> Result<(String, String, f64)> {
    match kind {
        ModelKind::UniMvt => {
            let tc = cfg.train()?;
            let (model, history) = train(data, &cfg.model()?, &tc)?;
            let last = history.last().map_or(f64::NAN, |r| r.total);
            Ok((model_to_text(&model)?, history_csv(&history), last))
        }
        ModelKind::SLearner | ModelKind::TLearner => {
            let bc = cfg.baseline()?;
            let (text, history) = if kind == ModelKind::SLearner {
                let (m, h) = train_slearner(data, &bc)?;
                (m.to_text(), h)
            } else {
                let (m, h) = train_tlearner(data, &bc)?;
                (m.to_text(), h)
            };
            let mut csv = String::from("epoch,loss\n");
            for (i, l) in history.iter().enumerate() {
                csv.push_str(&format!("{i},{l}\n"));
            }
            Ok((text, csv, history.last().copied().unwrap_or(f64::NAN)))
        }
    }
}

/// Scores used by `eval`: a trained model, or a reference ranking.
enum Scorer {
    Model(LoadedModel),
    Truth,
    Constant,
}

impl Scorer {
    fn scores(&self, samples: &[Sample]) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Model(m) => Ok((m.estimator().base_probs(samples)?, m.estimator().unit_uplifts(samples)?)),
            Self::Truth => {
                let get = |f: fn(&Sample) -> Option<f64>| -> Result<Vec<f64>> {
                    samples
                        .iter()
                        .map(|s| f(s).ok_or_else(|| Error::config("truth scores need truth columns")))
                        .collect()
                };
                Ok((get(|s| s.truth_p0)?, get(|s| s.truth_eta)?))
            }
            Self::Constant => {
                let ctr = samples.iter().filter(|s| s.y).count() as f64 / samples.len().max(1) as f64;
                Ok((vec![ctr; samples.len()], vec![0.0; samples.len()]))
            }
        }
    }
}

fn cmd_eval(args: &Args) -> Result<()> {
    args.reject_unknown(&["model", "data", "out", "scores", "config", "grid"], true)?;
    let mut cfg = load_config(args)?;
    if let Some(k) = args.flag("grid") {
        cfg.set("eval.grid", k)?;
    }
    let data_path = PathBuf::from(args.required("data")?);
    let dir = out_dir(args, ".")?;
    let data = load_csv(&data_path)?;
    let mut inputs = BTreeMap::from([("data".to_string(), hash_file(&data_path)?)]);

    let (scorer, label, config, seed) = match args.flag("scores").unwrap_or("model") {
        "model" => {
            let model_path = PathBuf::from(args.required("model")?);
            inputs.insert("model".into(), hash_file(&model_path)?);
            let model = LoadedModel::load(&model_path)?;
            let train_manifest = model_path.with_file_name(TRAIN_MANIFEST);
            let (label, config, seed) = match RunManifest::read(&train_manifest) {
                Ok(m) => (m.label, m.config, m.seed),
                Err(_) => {
                    let mut c = Config::default();
                    c.set("model", &model.kind().to_string())?;
                    (c.label()?, c.snapshot(), 0)
                }
            };
            (Scorer::Model(model), label, config, seed)
        }
        "truth" => (Scorer::Truth, "oracle".to_string(), BTreeMap::new(), 0),
        "constant" => (Scorer::Constant, "constant".to_string(), BTreeMap::new(), 0),
        other => return Err(Error::usage(format!("unknown --scores {other:?}"))),
    };

    let start = Instant::now();
    let (p0, uplift) = scorer.scores(&data.samples)?;
    let (lo, hi) = data.treated_range().unwrap_or((1.0, 2.0));
    let edges = intensity_edges(lo, hi, cfg.bins()?);
    let grid = cfg.grid()?;
    let report = MetricsReport::compute(&p0, &uplift, &data.samples, grid, &edges)?;
    if report.auc.is_none() {
        eprintln!("warning: evaluated rows hold a single class; AUC omitted");
    }
    let curve = CumulativeSlopeCurve::new(&uplift, &data.samples, grid)?;

    let mut results = BTreeMap::from([
        ("logloss".to_string(), report.logloss),
        ("cs_auuc".to_string(), report.cs_auuc),
        ("cs_qini".to_string(), report.cs_qini),
    ]);
    if let Some(a) = report.auc {
        results.insert("auc".into(), a);
    }
    let mut eval_config = config;
    eval_config.insert("eval.grid".into(), grid.to_string());
    eval_config.insert("eval.bins".into(), cfg.bins()?.to_string());
    let manifest = RunManifest {
        command: "eval".into(),
        status: "ok".into(),
        label,
        dataset: dataset_name(&data_path),
        seed,
        config: eval_config,
        inputs,
        results,
        ..RunManifest::default()
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::config(e.to_string()))?;
    write(&dir.join("metrics.json"), &(json + "\n"))?;
    write(
        &dir.join("metrics.csv"),
        &format!("{}\n{}\n", crate::metrics::REPORT_HEADER, report.csv_row()),
    )?;
    write(&dir.join("curve.csv"), &curve.to_csv())?;
    let mut pcoc = String::from("lo,hi,ratio,count\n");
    for b in &report.pcoc_bins {
        pcoc.push_str(&format!("{},{},{},{}\n", b.lo, b.hi, b.ratio, b.count));
    }
    write(&dir.join("pcoc.csv"), &pcoc)?;
    manifest.write(&dir.join(EVAL_MANIFEST))?;
    manifest::write_timing(&dir.join("eval_timing.json"), start.elapsed().as_secs_f64())?;
    println!("{}\n{}", crate::metrics::REPORT_HEADER, report.csv_row());
    Ok(())
}

/// Base probability and non-negative uplift per row on the scale `mode`
/// expects. Baseline uplifts are probability differences, clipped at zero and
/// converted to a logit shift for logit mode.
pub fn allocation_scores(model: &LoadedModel, samples: &[Sample], mode: SimulateMode) -> Result<Vec<(f64, f64)>> {
    if let LoadedModel::UniMvt(m) = model {
        let preds = m.predict_samples(samples, None)?;
        return Ok(preds.iter().map(|p| (p.p0_hat, mode_uplift(p, mode))).collect());
    }
    let est = model.estimator();
    let p0 = est.base_probs(samples)?;
    let uplift = est.unit_uplifts(samples)?;
    Ok(p0
        .into_iter()
        .zip(uplift)
        .map(|(p, u)| {
            let u = u.max(0.0).min(1.0 - PROB_EPS - p).max(0.0);
            match mode {
                SimulateMode::Additive => (p, u),
                SimulateMode::Logit => (p, logit_shift(p, u)),
            }
        })
        .collect())
}

fn cmd_allocate(args: &Args) -> Result<()> {
    args.reject_unknown(&["model", "data", "grid", "value", "threshold", "mode", "out"], false)?;
    let model = LoadedModel::load(Path::new(args.required("model")?))?;
    let data = load_csv(Path::new(args.required("data")?))?;
    let grid: AllocationGrid = args.required("grid")?.parse()?;
    let num = |k: &str| -> Result<f64> {
        let v = args.required(k)?;
        v.parse().map_err(|_| Error::usage(format!("--{k}: cannot parse {v:?}")))
    };
    let (value, threshold) = (num("value")?, num("threshold")?);
    let mode: SimulateMode = args.flag("mode").unwrap_or("logit").parse()?;
    let q = grid.values();
    let mut out = format!("{DECISION_HEADER}\n");
    for (i, (p0, eta)) in allocation_scores(&model, &data.samples, mode)?.into_iter().enumerate() {
        let d = decide_scores(p0, eta, &q, value, threshold, mode)?;
        out.push_str(&decision_row(i, &d));
        out.push('\n');
    }
    match args.flag("out") {
        Some(p) => write(Path::new(p), &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn cmd_report(args: &Args) -> Result<()> {
    args.reject_unknown(&["out"], false)?;
    let roots: Vec<PathBuf> = if args.positional.is_empty() {
        vec![PathBuf::from(".")]
    } else {
        args.positional.iter().map(PathBuf::from).collect()
    };
    let files = find_files(&roots, EVAL_MANIFEST)?;
    if files.is_empty() {
        return Err(Error::usage("report found no eval manifests"));
    }
    let manifests = files
        .iter()
        .map(|p| RunManifest::read(p).map(|m| (p.clone(), m)))
        .collect::<Result<Vec<_>>>()?;
    let tables = aggregate(&manifests)?;
    print!("{}", render_table(&tables));
    if let Some(p) = args.flag("out") {
        write(Path::new(p), &render_csv(&tables))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Args {
        Args::parse(s.split_whitespace().map(String::from)).unwrap()
    }

    #[test]
    fn parses_flags() {
        let a = args("train --data d.csv --train.epochs=3 --model slearner extra");
        assert_eq!(a.command, "train");
        assert_eq!(a.flag("train.epochs"), Some("3"));
        assert_eq!(a.flag("model"), Some("slearner"));
        assert_eq!(a.positional, vec!["extra"]);
        assert!(Args::parse(["gen".to_string(), "--out".to_string()]).is_err());
        assert!(Args::parse(Vec::<String>::new()).is_err());
    }

    #[test]
    fn unknown_command_and_flags() {
        assert!(matches!(run(args("fly")), Err(Error::Usage(_))));
        assert!(matches!(run(args("gen syn1 --bogus 1")), Err(Error::Usage(_))));
        let e = run(args("gen syn9")).unwrap_err();
        assert!(e.to_string().contains("syn1"));
        assert_eq!(exit_code(&e), 2);
    }
}
