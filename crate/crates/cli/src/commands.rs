use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use er_bounds::bounds::{wilson_interval, BoundReport, ClassBalance, Interval, ValidationStats};
use er_bounds::dataset::{
    generate_synthetic, load_gold, load_labeled_pairs, load_records_csv, split_dataset, write_gold_csv,
    write_labeled_pairs_csv, write_records_csv, GoldMode, LabeledPair, SyntheticConfig,
};
use er_bounds::experiment::{labeled_triples, subset_with_gold};
use er_bounds::matching::{train_match_model, BaseMatcher};
use er_bounds::sweep::{select_threshold, Evaluator, Selection, SelectionMetric, SweepRow, ThresholdGrid};
use er_bounds::{BaseId, Clustering, Dataset, FeatureSchema, GoldTruth, MatchModel, PairMetrics, SplitSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::settings::Settings;
use crate::{EvalArgs, GenerateArgs, ResolveArgs, SweepArgs, TrainArgs};

pub const RECORDS: &str = "records.csv";
pub const GOLD: &str = "gold.csv";
pub const SCHEMA: &str = "schema.json";
pub const MODEL: &str = "model.json";
pub const VALIDATION_STATS: &str = "validation_stats.json";
pub const LABELED_RECORDS: &str = "labeled_records.csv";
pub const TRAIN_PAIRS: &str = "train_pairs.csv";
pub const VALIDATION_PAIRS: &str = "validation_pairs.csv";
pub const TEST_RECORDS: &str = "test_records.csv";
pub const TEST_GOLD: &str = "test_gold.csv";
pub const SWEEP: &str = "sweep.csv";
pub const SWEEP_SUMMARY: &str = "sweep_summary.json";
pub const CLUSTERING: &str = "clustering.csv";
pub const BOUND_REPORT: &str = "bound_report.json";
pub const EFFECTIVE_CONFIG: &str = "effective_config.txt";

struct GoldModeArg(GoldMode);

impl FromStr for GoldModeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cluster-labels" => Ok(Self(GoldMode::ClusterLabels)),
            "proxy-key" => Ok(Self(GoldMode::ProxyKey)),
            other => Err(format!("unknown gold mode `{other}` (expected cluster-labels or proxy-key)")),
        }
    }
}

impl fmt::Display for GoldModeArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.0 {
            GoldMode::ClusterLabels => "cluster-labels",
            GoldMode::ProxyKey => "proxy-key",
        })
    }
}

struct BalanceArg(ClassBalance);

impl FromStr for BalanceArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "estimate" {
            return Ok(Self(ClassBalance::Estimate));
        }
        match s.parse::<f64>() {
            Ok(c) if c > 0.0 && c < 1.0 => Ok(Self(ClassBalance::Fixed(c))),
            _ => Err(format!("class balance `{s}` must be `estimate` or a number in (0, 1)")),
        }
    }
}

impl fmt::Display for BalanceArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            ClassBalance::Estimate => f.write_str("estimate"),
            ClassBalance::Fixed(c) => write!(f, "{c}"),
        }
    }
}

struct MetricArg(SelectionMetric);

impl FromStr for MetricArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(Self).map_err(|e| e.to_string())
    }
}

impl fmt::Display for MetricArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum GateMetric {
    PrecisionLb,
    RecallLb,
    F1Lb,
}

/// `metric>=value` quality gate on a bound report.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Gate {
    metric: GateMetric,
    minimum: f64,
}

impl FromStr for Gate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("gate `{s}` must look like precision_lb>=0.9 (metrics: precision_lb, recall_lb, f1_lb)");
        let (name, value) = s.split_once(">=").ok_or_else(bad)?;
        let metric = match name.trim() {
            "precision_lb" => GateMetric::PrecisionLb,
            "recall_lb" => GateMetric::RecallLb,
            "f1_lb" => GateMetric::F1Lb,
            _ => return Err(bad()),
        };
        let minimum: f64 = value.trim().parse().map_err(|_| bad())?;
        Ok(Gate { metric, minimum })
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.metric {
            GateMetric::PrecisionLb => "precision_lb",
            GateMetric::RecallLb => "recall_lb",
            GateMetric::F1Lb => "f1_lb",
        };
        write!(f, "{name}>={}", self.minimum)
    }
}

impl Gate {
    fn value(&self, report: &BoundReport) -> f64 {
        match self.metric {
            GateMetric::PrecisionLb => report.precision_lb,
            GateMetric::RecallLb => report.recall_lb,
            GateMetric::F1Lb => report.f1_lb,
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::json(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

fn save_records(path: &Path, dataset: &Dataset) -> Result<(), CliError> {
    write_records_csv(create(path)?, dataset)?;
    Ok(())
}

fn save_gold(path: &Path, dataset: &Dataset, gold: &GoldTruth) -> Result<(), CliError> {
    write_gold_csv(create(path)?, dataset, gold)?;
    Ok(())
}

pub fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let mut s = Settings::load(args.config.as_deref())?;
    let defaults = SyntheticConfig::default();
    let out = PathBuf::from(s.required::<String>("out", args.out)?);
    let config = SyntheticConfig {
        n_entities: s.get("entities", args.entities, defaults.n_entities)?,
        records_per_entity: s.get("per_entity", args.per_entity, defaults.records_per_entity)?,
        dims: s.get("dims", args.dims, defaults.dims)?,
        noise_sigma: s.get("noise_sigma", args.noise_sigma, defaults.noise_sigma)?,
        seed: s.get("seed", args.seed, defaults.seed)?,
    };
    s.check_unused(&["out", "entities", "per_entity", "dims", "noise_sigma", "seed"])?;
    if config.dims == 0 {
        return Err(CliError::Usage("dims must be at least 1".into()));
    }
    if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
        return Err(CliError::Usage(format!("noise_sigma = {} must be finite and non-negative", config.noise_sigma)));
    }

    let (dataset, gold) = generate_synthetic(&config);
    create_dir(&out)?;
    save_records(&out.join(RECORDS), &dataset)?;
    save_gold(&out.join(GOLD), &dataset, &gold)?;
    write_json(&out.join(SCHEMA), dataset.schema())?;
    write_text(&out.join(EFFECTIVE_CONFIG), &s.effective("generate"))?;
    println!(
        "wrote {} records, {} truth pairs to {}",
        dataset.len(),
        gold.truth_pairs().len(),
        out.display()
    );
    Ok(())
}

/// Validation-set summary written by `train`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub threshold: f64,
    pub confidence: f64,
    pub stats: ValidationStats,
    pub c_v: f64,
    /// `None` when the model predicts no validation matches.
    pub precision_v: Option<f64>,
    pub recall_v: f64,
    pub precision_interval: Option<Interval>,
    pub recall_interval: Interval,
}

impl ValidationSummary {
    fn new(stats: ValidationStats, threshold: f64, confidence: f64) -> Result<Self, CliError> {
        let usage = |e: er_bounds::bounds::BoundsError| CliError::Usage(e.to_string());
        let tp = stats.n_true_match;
        let precision_interval = match stats.n_predicted_match {
            0 => None,
            n => Some(wilson_interval(tp, n, confidence).map_err(usage)?),
        };
        Ok(Self {
            threshold,
            confidence,
            stats,
            c_v: stats.class_balance(),
            precision_v: stats.precision(),
            recall_v: stats.recall(),
            precision_interval,
            recall_interval: wilson_interval(tp, stats.n_positive, confidence).map_err(usage)?,
        })
    }
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut s = Settings::load(args.config.as_deref())?;
    let split_defaults = SplitSpec::default();
    let train_defaults = TrainConfig::default();
    let records_path = PathBuf::from(s.required::<String>("records", args.records)?);
    let schema_path = PathBuf::from(s.required::<String>("schema", args.schema)?);
    let gold_path = PathBuf::from(s.required::<String>("gold", args.gold)?);
    let gold_mode = s.get("gold_mode", args.gold_mode.map(|m| m.parse()).transpose().map_err(CliError::Usage)?, GoldModeArg(GoldMode::ClusterLabels))?;
    let out = PathBuf::from(s.required::<String>("out", args.out)?);
    let seed = s.get("seed", args.seed, 0u64)?;
    let spec = SplitSpec {
        n_train_pairs: s.get("train_pairs", args.train_pairs, split_defaults.n_train_pairs)?,
        n_validation_pairs: s.get("validation_pairs", args.validation_pairs, split_defaults.n_validation_pairs)?,
        positive_fraction_train: s.get(
            "train_positive_fraction",
            args.train_positive_fraction,
            split_defaults.positive_fraction_train,
        )?,
        positive_fraction_validation: s.get(
            "validation_positive_fraction",
            args.validation_positive_fraction,
            split_defaults.positive_fraction_validation,
        )?,
        seed,
    };
    let config = TrainConfig {
        learning_rate: s.get("learning_rate", args.learning_rate, train_defaults.learning_rate)?,
        epochs: s.get("epochs", args.epochs, train_defaults.epochs)?,
        l2: s.get("l2", args.l2, train_defaults.l2)?,
        seed,
    };
    let threshold = s.get("threshold", args.threshold, 0.5)?;
    let confidence = s.get("confidence", args.confidence, 0.95)?;
    s.check_unused(&[
        "records",
        "schema",
        "gold",
        "gold_mode",
        "out",
        "seed",
        "train_pairs",
        "validation_pairs",
        "train_positive_fraction",
        "validation_positive_fraction",
        "learning_rate",
        "epochs",
        "l2",
        "threshold",
        "confidence",
    ])?;
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(CliError::Usage(format!("confidence = {confidence} must lie in (0, 1)")));
    }

    let schema: FeatureSchema = read_json(&schema_path)?;
    let dataset = load_records_csv(&records_path, &schema)?;
    let gold = load_gold(&gold_path, &dataset, gold_mode.0)?;
    let split = split_dataset(&dataset, &gold, &spec)?;
    let model = train_match_model(&labeled_triples(&dataset, &split.train_pairs), &schema, &config)?
        .with_threshold(threshold)
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let validation = labeled_triples(&dataset, &split.validation_pairs);
    let outcomes = validation
        .iter()
        .map(|(a, b, label)| Ok((*label, model.base_match(a, b)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let stats = ValidationStats::from_predictions(outcomes).map_err(|e| CliError::Usage(e.to_string()))?;
    let summary = ValidationSummary::new(stats, threshold, confidence)?;

    // records touched by labeled pairs, renumbered, with pairs re-expressed on them
    let labeled_ids: Vec<BaseId> = split
        .train_pairs
        .iter()
        .chain(&split.validation_pairs)
        .flat_map(|p| [p.a, p.b])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let (labeled, _) = subset_with_gold(&dataset, &gold, &labeled_ids);
    let renumber: BTreeMap<BaseId, BaseId> = labeled_ids.iter().enumerate().map(|(i, &id)| (id, BaseId(i as u32))).collect();
    let remap = |pairs: &[LabeledPair]| -> Vec<LabeledPair> {
        pairs
            .iter()
            .map(|p| LabeledPair {
                a: renumber[&p.a],
                b: renumber[&p.b],
                label: p.label,
            })
            .collect()
    };
    let (test, test_gold) = subset_with_gold(&dataset, &gold, &split.test_ids);

    create_dir(&out)?;
    write_json(&out.join(MODEL), &model)?;
    write_json(&out.join(SCHEMA), &schema)?;
    write_json(&out.join(VALIDATION_STATS), &summary)?;
    save_records(&out.join(LABELED_RECORDS), &labeled)?;
    write_labeled_pairs_csv(create(&out.join(TRAIN_PAIRS))?, &labeled, &remap(&split.train_pairs))?;
    write_labeled_pairs_csv(create(&out.join(VALIDATION_PAIRS))?, &labeled, &remap(&split.validation_pairs))?;
    save_records(&out.join(TEST_RECORDS), &test)?;
    save_gold(&out.join(TEST_GOLD), &test, &test_gold)?;
    write_text(&out.join(EFFECTIVE_CONFIG), &s.effective("train"))?;

    println!(
        "split: {} train pairs, {} validation pairs, {} test records",
        split.train_pairs.len(),
        split.validation_pairs.len(),
        test.len()
    );
    match summary.precision_v {
        Some(p) => println!(
            "validation at threshold {threshold}: precision {p:.4}, recall {:.4}, class balance {:.4}",
            summary.recall_v, summary.c_v
        ),
        None => println!(
            "validation at threshold {threshold}: precision undefined (no predicted matches), recall {:.4}; bounds are suppressed at this threshold",
            summary.recall_v
        ),
    }
    Ok(())
}

/// Everything `sweep` and `resolve` need from a run directory.
struct Loaded {
    run: PathBuf,
    model: MatchModel,
    labeled: Dataset,
    validation: Vec<LabeledPair>,
    test: Dataset,
    truth: Option<GoldTruth>,
    confidence: f64,
    class_balance: ClassBalance,
}

const EVAL_KEYS: [&str; 6] = ["run", "test_records", "test_gold", "gold_mode", "confidence", "class_balance"];

fn load_run(s: &mut Settings, args: EvalArgs) -> Result<Loaded, CliError> {
    let run = PathBuf::from(s.required::<String>("run", args.run)?);
    let test_records = s.optional::<String>("test_records", args.test_records)?;
    let test_gold = s.optional::<String>("test_gold", args.test_gold)?;
    let gold_mode = s.get("gold_mode", args.gold_mode.map(|m| m.parse()).transpose().map_err(CliError::Usage)?, GoldModeArg(GoldMode::ClusterLabels))?;
    let confidence = s.get("confidence", args.confidence, 0.95)?;
    let class_balance = s.get(
        "class_balance",
        args.class_balance.map(|c| c.parse()).transpose().map_err(CliError::Usage)?,
        BalanceArg(ClassBalance::Estimate),
    )?;
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(CliError::Usage(format!("confidence = {confidence} must lie in (0, 1)")));
    }

    let model_path = run.join(MODEL);
    if !model_path.exists() {
        return Err(CliError::Usage(format!(
            "no model at {}; run `erb train` first",
            model_path.display()
        )));
    }
    let model: MatchModel = read_json(&model_path)?;
    let labeled = load_records_csv(&run.join(LABELED_RECORDS), &model.schema)?;
    let validation = load_labeled_pairs(&run.join(VALIDATION_PAIRS), &labeled)?;
    let (test_path, gold_path) = match test_records {
        Some(p) => (PathBuf::from(p), test_gold.map(PathBuf::from)),
        None => (run.join(TEST_RECORDS), Some(test_gold.map_or_else(|| run.join(TEST_GOLD), PathBuf::from))),
    };
    let test = load_records_csv(&test_path, &model.schema)?;
    let truth = match gold_path {
        Some(p) => Some(load_gold(&p, &test, gold_mode.0)?),
        None => None,
    };
    Ok(Loaded {
        run,
        model,
        labeled,
        validation,
        test,
        truth,
        confidence,
        class_balance: class_balance.0,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

const SWEEP_HEADER: [&str; 16] = [
    "threshold",
    "r_pairs",
    "tm_pairs",
    "c_t_est",
    "prec_lb",
    "prec_lb_lo",
    "prec_lb_hi",
    "rec_lb",
    "rec_lb_lo",
    "rec_lb_hi",
    "f1_lb",
    "f1_lb_lo",
    "f1_lb_hi",
    "true_prec",
    "true_rec",
    "true_f1",
];

fn sweep_line(row: &SweepRow) -> Vec<String> {
    let r = row.report.as_ref();
    let truth = row.truth.as_ref();
    vec![
        row.threshold.to_string(),
        row.r_pairs.to_string(),
        row.tm_pairs.to_string(),
        fmt_opt(r.map(|r| r.c_t_estimate)),
        fmt_opt(r.map(|r| r.precision_lb)),
        fmt_opt(r.map(|r| r.ci.precision.low)),
        fmt_opt(r.map(|r| r.ci.precision.high)),
        fmt_opt(r.map(|r| r.recall_lb)),
        fmt_opt(r.map(|r| r.ci.recall.low)),
        fmt_opt(r.map(|r| r.ci.recall.high)),
        fmt_opt(r.map(|r| r.f1_lb)),
        fmt_opt(r.map(|r| r.ci.f1.low)),
        fmt_opt(r.map(|r| r.ci.f1.high)),
        fmt_opt(truth.map(|m| m.precision)),
        fmt_opt(truth.map(|m| m.recall)),
        fmt_opt(truth.map(|m| m.f1)),
    ]
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    metric: String,
    optimal: Option<Selection>,
    test_records: usize,
    rows: &'a [SweepRow],
}

/// Row cells with the canonical (smallest member name) cluster label of each
/// test record, in test-record order.
fn clustering_rows(test: &Dataset, clustering: &Clustering) -> Vec<[String; 2]> {
    let mut label: BTreeMap<BaseId, &str> = BTreeMap::new();
    for members in clustering.partition() {
        let name = members.iter().map(|&id| test.name(id)).min().expect("clusters are nonempty");
        for id in members {
            label.insert(id, name);
        }
    }
    test.ids().map(|id| [test.name(id).to_string(), label[&id].to_string()]).collect()
}

fn write_clustering(path: &Path, test: &Dataset, clustering: &Clustering) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| CliError::Data(e.into());
    csv.write_record(["id", "cluster_id"]).map_err(io)?;
    for row in clustering_rows(test, clustering) {
        csv.write_record(&row).map_err(io)?;
    }
    csv.flush().map_err(|e| CliError::io(path, e))
}

pub fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let mut s = Settings::load(args.eval.config.as_deref())?;
    let defaults = ThresholdGrid::default();
    let loaded = load_run(&mut s, args.eval)?;
    let grid = ThresholdGrid::new(
        s.get("grid_start", args.grid_start, defaults.start)?,
        s.get("grid_stop", args.grid_stop, defaults.stop)?,
        s.get("grid_steps", args.grid_steps, defaults.steps)?,
    )?;
    let select = s.get(
        "select",
        args.select.map(|m| m.parse()).transpose().map_err(CliError::Usage)?,
        MetricArg(SelectionMetric::default()),
    )?;
    let out = s
        .optional::<String>("out", args.out)?
        .map_or_else(|| loaded.run.join(SWEEP), PathBuf::from);
    let mut known = EVAL_KEYS.to_vec();
    known.extend(["grid_start", "grid_stop", "grid_steps", "select", "out"]);
    s.check_unused(&known)?;

    let validation = labeled_triples(&loaded.labeled, &loaded.validation);
    let evaluator = Evaluator::new(&loaded.model, &validation, loaded.test.records())?;
    let truth_pairs = loaded.truth.as_ref().map(GoldTruth::truth_pairs);
    let rows = evaluator.sweep(&grid, truth_pairs.as_ref(), loaded.class_balance, loaded.confidence)?;
    let optimal = select_threshold(&rows, select.0);

    {
        let mut file = create(&out)?;
        let mut csv = csv::Writer::from_writer(&mut file);
        let io = |e: csv::Error| CliError::Data(e.into());
        csv.write_record(SWEEP_HEADER).map_err(io)?;
        for row in &rows {
            csv.write_record(sweep_line(row)).map_err(io)?;
        }
        csv.flush().map_err(|e| CliError::io(&out, e))?;
        drop(csv);
        writeln!(file).map_err(|e| CliError::io(&out, e))?;
        writeln!(file, "optimal_metric,optimal_threshold,optimal_value").map_err(|e| CliError::io(&out, e))?;
        writeln!(
            file,
            "{},{},{}",
            select.0.name(),
            fmt_opt(optimal.map(|o| o.threshold)),
            fmt_opt(optimal.map(|o| o.value))
        )
        .map_err(|e| CliError::io(&out, e))?;
        file.flush().map_err(|e| CliError::io(&out, e))?;
    }
    let summary_path = out.with_file_name(SWEEP_SUMMARY);
    write_json(
        &summary_path,
        &SweepSummary {
            metric: select.0.name(),
            optimal,
            test_records: loaded.test.len(),
            rows: &rows,
        },
    )?;
    if args.write_clusterings {
        let dir = loaded.run.join("clusterings");
        create_dir(&dir)?;
        for t in grid.values() {
            let clustering = evaluator.resolve(t)?;
            write_clustering(&dir.join(format!("threshold_{t}.csv")), &loaded.test, &clustering)?;
        }
    }
    write_text(&out.with_file_name(EFFECTIVE_CONFIG.replace(".txt", "_sweep.txt")), &s.effective("sweep"))?;

    let suppressed = rows.iter().filter(|r| r.report.is_none()).count();
    println!(
        "swept {} thresholds over {} test records; wrote {}",
        rows.len(),
        loaded.test.len(),
        out.display()
    );
    if suppressed > 0 {
        println!("{suppressed} thresholds have no bound report (see {})", summary_path.display());
    }
    match optimal {
        Some(o) => println!("optimal {}: threshold {} (value {:.4})", select.0.name(), o.threshold, o.value),
        None => println!("no threshold satisfies {}", select.0.name()),
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ResolveReport {
    threshold: f64,
    test_records: usize,
    clusters: usize,
    report: Option<BoundReport>,
    bound_error: Option<String>,
    truth: Option<PairMetrics>,
    gates: Vec<GateResult>,
}

#[derive(Debug, Serialize)]
struct GateResult {
    gate: String,
    value: Option<f64>,
    passed: bool,
}

pub fn resolve(args: ResolveArgs) -> Result<(), CliError> {
    let mut s = Settings::load(args.eval.config.as_deref())?;
    let loaded = load_run(&mut s, args.eval)?;
    let threshold = s.required::<f64>("threshold", args.threshold)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(CliError::Usage(format!("threshold = {threshold} must lie in (0, 1)")));
    }
    let gate_flag = if args.gate.is_empty() { None } else { Some(args.gate.join(";")) };
    let gates: Vec<Gate> = s
        .optional::<String>("gate", gate_flag)?
        .map(|g| g.split(';').map(|x| x.trim().parse::<Gate>()).collect::<Result<_, _>>())
        .transpose()
        .map_err(CliError::Usage)?
        .unwrap_or_default();
    let out = s.optional::<String>("out", args.out)?.map_or_else(|| loaded.run.clone(), PathBuf::from);
    let mut known = EVAL_KEYS.to_vec();
    known.extend(["threshold", "gate", "out"]);
    s.check_unused(&known)?;

    let validation = labeled_triples(&loaded.labeled, &loaded.validation);
    let evaluator = Evaluator::new(&loaded.model, &validation, loaded.test.records())?;
    let truth_pairs = loaded.truth.as_ref().map(GoldTruth::truth_pairs);
    let (clustering, row) = evaluator.evaluate(threshold, truth_pairs.as_ref(), loaded.class_balance, loaded.confidence)?;
    let results: Vec<GateResult> = gates
        .iter()
        .map(|g| {
            let value = row.report.as_ref().map(|r| g.value(r));
            GateResult {
                gate: g.to_string(),
                value,
                passed: value.is_some_and(|v| v >= g.minimum),
            }
        })
        .collect();

    create_dir(&out)?;
    write_clustering(&out.join(CLUSTERING), &loaded.test, &clustering)?;
    let report = ResolveReport {
        threshold,
        test_records: loaded.test.len(),
        clusters: clustering.len(),
        report: row.report.clone(),
        bound_error: row.bound_error.clone(),
        truth: row.truth,
        gates: results,
    };
    write_json(&out.join(BOUND_REPORT), &report)?;
    write_text(&out.join(EFFECTIVE_CONFIG.replace(".txt", "_resolve.txt")), &s.effective("resolve"))?;

    println!(
        "resolved {} records into {} clusters at threshold {threshold}",
        loaded.test.len(),
        clustering.len()
    );
    match &row.report {
        Some(r) => println!(
            "bounds: precision >= {:.4}, recall >= {:.4}, f1 >= {:.4}",
            r.precision_lb, r.recall_lb, r.f1_lb
        ),
        None => println!("bounds unavailable: {}", row.bound_error.as_deref().unwrap_or("unknown")),
    }
    let failed: Vec<&GateResult> = report.gates.iter().filter(|g| !g.passed).collect();
    if !failed.is_empty() {
        let names: Vec<String> = failed
            .iter()
            .map(|g| match g.value {
                Some(v) => format!("{} (got {v:.4})", g.gate),
                None => format!("{} (no bound report)", g.gate),
            })
            .collect();
        return Err(CliError::Gate(names.join(", ")));
    }
    Ok(())
}
