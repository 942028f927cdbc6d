//! End-to-end commands: generate data, train and score, evaluate, compare
//! policies and summarize risk by property size. Each command reads and
//! writes files under the configured directories and echoes the resolved
//! configuration next to its outputs.

mod config;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

pub use config::{
    HistogramConfig, ModelConfig, RunConfig, ScoreImport, SignificanceConfig, WindowConfig,
};

use crate::data::synthetic::generate_synthetic;
use crate::data::{
    build_dataset, load_filings, load_neighborhoods, load_properties, load_tenures, write_filings,
    write_neighborhoods, write_properties, write_tenures, DataQualityReport, DatasetInputs,
    EvictionFiling, FeatureSet, FilterReport, LabeledDataset, Neighborhoods, OwnerTenure,
    PropertyRecord,
};
use crate::error::{Error, Result};
use crate::metrics::{
    bootstrap_pr_test, delong_test, pr_auc, pr_curve, roc_auc, roc_curve, write_curve,
    BootstrapResult, DelongResult,
};
use crate::policies::{compare_policies, render_table, ComparisonInputs, ComparisonRow, PlanContext, PolicyKind, PolicySpec};
use crate::risk::{grid_search_cv, import_scores, train_gbdt, write_scores, GridSearch, Hyperparams, RiskGroup};

pub const PROPERTIES_FILE: &str = "properties.csv";
pub const FILINGS_FILE: &str = "filings.csv";
pub const NEIGHBORHOODS_FILE: &str = "neighborhoods.csv";
pub const TENURES_FILE: &str = "tenures.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const TRAINING_FILE: &str = "training.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const COMPARISON_FILE: &str = "comparison.json";
pub const COMPARISON_TABLE_FILE: &str = "comparison.txt";
pub const HISTOGRAM_FILE: &str = "risk_histogram.csv";

/// Identifies the configuration and code that produced a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Provenance {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn echo_config(cfg: &RunConfig) -> Result<()> {
    let text = format!(
        "# seed {}, config hash {}\n{}",
        cfg.seed,
        cfg.hash(),
        cfg.to_toml()
    );
    write_text(&cfg.out_dir.join(CONFIG_ECHO_FILE), &text)
}

pub fn scores_path(cfg: &RunConfig, set: FeatureSet) -> PathBuf {
    cfg.out_dir.join("scores").join(format!("{set}.csv"))
}

pub fn model_path(cfg: &RunConfig, set: FeatureSet) -> PathBuf {
    cfg.out_dir.join("models").join(format!("{set}.json"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenSummary {
    pub data_dir: PathBuf,
    pub properties: usize,
    pub filings: usize,
}

/// Generates a synthetic region into the data directory.
pub fn cmd_gen(cfg: &RunConfig) -> Result<GenSummary> {
    cfg.validate()?;
    let data = generate_synthetic(&cfg.synthetic, cfg.seed)?;
    let dir = cfg.data_dir();
    create_dir(&dir)?;
    write_properties(&dir.join(PROPERTIES_FILE), &data.properties)?;
    write_filings(&dir.join(FILINGS_FILE), &data.filings)?;
    write_neighborhoods(&dir.join(NEIGHBORHOODS_FILE), &data.neighborhoods)?;
    write_tenures(&dir.join(TENURES_FILE), &data.tenures)?;
    write_json(&dir.join(GROUND_TRUTH_FILE), &data.truth)?;
    echo_config(cfg)?;
    Ok(GenSummary {
        data_dir: dir,
        properties: data.properties.len(),
        filings: data.filings.len(),
    })
}

/// The four input tables, with properties already filtered.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub properties: Vec<PropertyRecord>,
    pub filter: FilterReport,
    pub filings: Vec<EvictionFiling>,
    pub neighborhoods: Neighborhoods,
    pub tenures: Vec<OwnerTenure>,
}

impl LoadedData {
    pub fn inputs(&self) -> DatasetInputs<'_> {
        DatasetInputs {
            properties: &self.properties,
            filings: &self.filings,
            neighborhoods: &self.neighborhoods,
            tenures: &self.tenures,
        }
    }
}

pub fn load_data(cfg: &RunConfig) -> Result<LoadedData> {
    let dir = cfg.data_dir();
    let (properties, filter) = load_properties(&dir.join(PROPERTIES_FILE), &cfg.filter)?;
    let known: HashSet<&str> = properties
        .iter()
        .map(|p| p.property_id.as_str())
        .chain(filter.excluded_ids.iter().map(String::as_str))
        .collect();
    let filings = load_filings(&dir.join(FILINGS_FILE), &known)?;
    let neighborhoods = load_neighborhoods(&dir.join(NEIGHBORHOODS_FILE))?;
    let tenures = load_tenures(&dir.join(TENURES_FILE))?;
    if properties.is_empty() {
        return Err(Error::invalid("no property passes the filter"));
    }
    Ok(LoadedData {
        properties,
        filter,
        filings,
        neighborhoods,
        tenures,
    })
}

fn read_scores(path: &Path, ids: &[String]) -> Result<Vec<f64>> {
    let known: HashSet<&str> = ids.iter().map(String::as_str).collect();
    let imported = import_scores(path, Some(&known))?;
    ids.iter()
        .map(|id| {
            imported
                .scores
                .get(id)
                .copied()
                .ok_or_else(|| Error::invalid(format!("{}: no score for property {id}", path.display())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub feature_set: FeatureSet,
    /// `trained` or `imported`.
    pub source: String,
    pub hyperparams: Option<Hyperparams>,
    pub trees: usize,
    pub grid_search: Option<GridSearch>,
    pub train_quality: Option<DataQualityReport>,
    pub test_quality: DataQualityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingReport {
    pub provenance: Provenance,
    pub filter: FilterReport,
    pub models: Vec<ModelSummary>,
}

fn sorted_sets(sets: &[FeatureSet]) -> Vec<FeatureSet> {
    sets.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
}

/// Trains (or imports) one scorer per feature set, writes models and score
/// files, then evaluates them as [`cmd_metrics`] does.
pub fn cmd_train_score(cfg: &RunConfig) -> Result<(TrainingReport, MetricsReport)> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let train_w = cfg.windows.training()?;
    let test_w = cfg.windows.testing()?;
    let mut models = Vec::new();
    for set in sorted_sets(&cfg.model.feature_sets) {
        let (test, test_quality) = build_dataset(data.inputs(), &test_w, set)?;
        let out = scores_path(cfg, set);
        if let Some(parent) = out.parent() {
            create_dir(parent)?;
        }
        if let Some(path) = cfg.model.imported(set) {
            let scores = read_scores(path, &test.property_ids)?;
            write_scores(&out, &test.property_ids, &scores)?;
            models.push(ModelSummary {
                feature_set: set,
                source: "imported".into(),
                hyperparams: None,
                trees: 0,
                grid_search: None,
                train_quality: None,
                test_quality,
            });
            continue;
        }
        let (train, train_quality) = build_dataset(data.inputs(), &train_w, set)?;
        let (hyper, grid) = if cfg.model.grid_search {
            let g = grid_search_cv(&train, &Hyperparams::search_grid(), cfg.model.cv_folds, cfg.seed)?;
            (g.best, Some(g))
        } else {
            (cfg.model.hyperparams_for(set), None)
        };
        let model = train_gbdt(&train, &hyper)?;
        write_text(&model_path(cfg, set), &(model.to_json()? + "\n"))?;
        let scores = model.predict_dataset(&test)?;
        write_scores(&out, &test.property_ids, &scores)?;
        models.push(ModelSummary {
            feature_set: set,
            source: "trained".into(),
            hyperparams: Some(hyper),
            trees: model.trees.len(),
            grid_search: grid,
            train_quality: Some(train_quality),
            test_quality,
        });
    }
    let training = TrainingReport {
        provenance: Provenance::of(cfg),
        filter: data.filter.clone(),
        models,
    };
    write_json(&cfg.out_dir.join(TRAINING_FILE), &training)?;
    let metrics = evaluate(cfg, &data)?;
    Ok((training, metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetMetrics {
    pub feature_set: FeatureSet,
    pub roc_auc: f64,
    pub pr_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTest {
    pub a: FeatureSet,
    pub b: FeatureSet,
    pub delong: DelongResult,
    pub bootstrap_pr: BootstrapResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricBlock {
    pub rows: usize,
    pub positives: usize,
    pub base_rate: f64,
    pub sets: Vec<SetMetrics>,
    /// Adjacent feature sets, plus the smallest against the largest.
    pub comparisons: Vec<PairTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub metrics: MetricBlock,
}

impl MetricsReport {
    pub fn auc(&self, set: FeatureSet) -> Option<f64> {
        self.metrics.sets.iter().find(|s| s.feature_set == set).map(|s| s.roc_auc)
    }
}

fn test_labels(cfg: &RunConfig, data: &LoadedData) -> Result<LabeledDataset> {
    Ok(build_dataset(data.inputs(), &cfg.windows.testing()?, FeatureSet::E)?.0)
}

fn load_set_scores(cfg: &RunConfig, sets: &[FeatureSet], ids: &[String]) -> Result<BTreeMap<FeatureSet, Vec<f64>>> {
    sets.iter().map(|&s| Ok((s, read_scores(&scores_path(cfg, s), ids)?))).collect()
}

fn metric_block(cfg: &RunConfig, labels: &[bool], scores: &BTreeMap<FeatureSet, Vec<f64>>) -> Result<MetricBlock> {
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::invalid("the test window needs both filing and non-filing properties"));
    }
    let sets: Vec<FeatureSet> = scores.keys().copied().collect();
    let mut metrics = Vec::new();
    for (&set, s) in scores {
        metrics.push(SetMetrics {
            feature_set: set,
            roc_auc: roc_auc(s, labels)?,
            pr_auc: pr_auc(s, labels)?,
        });
    }
    let mut pairs: Vec<(FeatureSet, FeatureSet)> = sets.windows(2).map(|w| (w[0], w[1])).collect();
    if sets.len() > 2 {
        pairs.push((sets[0], sets[sets.len() - 1]));
    }
    let mut comparisons = Vec::new();
    for (a, b) in pairs {
        comparisons.push(PairTest {
            a,
            b,
            delong: delong_test(&scores[&a], &scores[&b], labels)?,
            bootstrap_pr: bootstrap_pr_test(
                &scores[&a],
                &scores[&b],
                labels,
                cfg.significance.bootstrap_iterations,
                cfg.seed,
            )?,
        });
    }
    Ok(MetricBlock {
        rows: labels.len(),
        positives,
        base_rate: positives as f64 / labels.len() as f64,
        sets: metrics,
        comparisons,
    })
}

fn evaluate(cfg: &RunConfig, data: &LoadedData) -> Result<MetricsReport> {
    let test = test_labels(cfg, data)?;
    let sets = sorted_sets(&cfg.model.feature_sets);
    let scores = load_set_scores(cfg, &sets, &test.property_ids)?;
    let curves = cfg.out_dir.join("curves");
    create_dir(&curves)?;
    for (set, s) in &scores {
        write_curve(&curves.join(format!("{set}_roc.csv")), &roc_curve(s, &test.labels)?, "fpr", "tpr")?;
        write_curve(&curves.join(format!("{set}_pr.csv")), &pr_curve(s, &test.labels)?, "recall", "precision")?;
    }
    let report = MetricsReport {
        provenance: Provenance::of(cfg),
        metrics: metric_block(cfg, &test.labels, &scores)?,
    };
    write_json(&cfg.out_dir.join(METRICS_FILE), &report)?;
    echo_config(cfg)?;
    Ok(report)
}

/// Evaluates existing score files against the test-window labels.
pub fn cmd_metrics(cfg: &RunConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    evaluate(cfg, &data)
}

/// Overlap between the NEO-T-O selection and one alternative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Overlap {
    pub alternative: String,
    pub file: String,
    pub primary_only: usize,
    pub alternative_only: usize,
    pub both: usize,
    /// Share of NEO-T-O properties the alternative also visits.
    pub primary_covered: f64,
    /// Share of the alternative's properties NEO-T-O also visits.
    pub alternative_covered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub provenance: Provenance,
    pub budget_hours: f64,
    pub budget_units: u64,
    pub rows: Vec<ComparisonRow>,
    pub metrics: MetricBlock,
    pub overlaps: Vec<Overlap>,
}

pub fn policy_slug(spec: &PolicySpec) -> String {
    let kind = serde_json::to_value(spec.kind).expect("policy kind serializes");
    let control = serde_json::to_value(spec.control).expect("control serializes");
    format!("{}_{}", kind.as_str().unwrap_or("policy"), control.as_str().unwrap_or("control"))
}

fn overlay(
    primary: &[String],
    alternative: &[String],
    properties: &BTreeMap<&str, &PropertyRecord>,
    name: &str,
) -> (serde_json::Value, usize, usize, usize) {
    let p: BTreeSet<&str> = primary.iter().map(String::as_str).collect();
    let a: BTreeSet<&str> = alternative.iter().map(String::as_str).collect();
    let mut counts = (0, 0, 0);
    let mut features = Vec::new();
    for id in p.union(&a) {
        let membership = match (p.contains(id), a.contains(id)) {
            (true, true) => {
                counts.2 += 1;
                "both"
            }
            (true, false) => {
                counts.0 += 1;
                "primary_only"
            }
            _ => {
                counts.1 += 1;
                "alternative_only"
            }
        };
        let r = properties[id];
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [r.location.lon, r.location.lat]},
            "properties": {"property_id": id, "units": r.units, "membership": membership},
        }));
    }
    let share = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let value = json!({
        "type": "FeatureCollection",
        "name": name,
        "overlap": {
            "primary_only": counts.0,
            "alternative_only": counts.1,
            "both": counts.2,
            "primary_covered": share(counts.2, p.len()),
            "alternative_covered": share(counts.2, a.len()),
        },
        "features": features,
    });
    (value, counts.0, counts.1, counts.2)
}

/// Plans every configured policy on the test-window scores and writes the
/// comparison table, per-policy routes and overlays against NEO-T-O.
pub fn cmd_compare(cfg: &RunConfig) -> Result<CompareReport> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let test = test_labels(cfg, &data)?;
    let mut needed: BTreeSet<FeatureSet> = cfg.policies.iter().filter_map(|s| s.kind.feature_set()).collect();
    needed.insert(FeatureSet::ENO);
    needed.extend(cfg.model.feature_sets.iter().copied());
    let sets: Vec<FeatureSet> = needed.into_iter().collect();
    let scores = load_set_scores(cfg, &sets, &test.property_ids)?;
    let by_set: BTreeMap<FeatureSet, BTreeMap<String, f64>> = scores
        .iter()
        .map(|(&set, s)| (set, test.property_ids.iter().cloned().zip(s.iter().copied()).collect()))
        .collect();

    let ctx = PlanContext {
        properties: &data.properties,
        params: &cfg.cost,
        tour: cfg.tour,
        thresholds: cfg.thresholds,
        seed: cfg.seed,
    };
    let prior = cfg.windows.prior()?;
    let test_window = cfg.windows.testing()?.label;
    let report = compare_policies(
        &ctx,
        &cfg.policies,
        &ComparisonInputs {
            scores: &by_set,
            filings: &data.filings,
            prior_window: &prior,
            test_window: &test_window,
        },
    )?;

    let routes = cfg.out_dir.join("routes");
    let overlays = cfg.out_dir.join("overlays");
    create_dir(&routes)?;
    create_dir(&overlays)?;
    let lookup: BTreeMap<&str, &PropertyRecord> =
        data.properties.iter().map(|p| (p.property_id.as_str(), p)).collect();
    let primary = compare_neo_ids(&ctx, &by_set)?;
    let mut overlaps = Vec::new();
    for (row, plan) in report.rows.iter().zip(&report.plans) {
        let slug = policy_slug(&row.spec);
        plan.plan.write_csv(&routes.join(format!("{slug}.csv")))?;
        write_json(&routes.join(format!("{slug}.geojson")), &plan.plan.to_geojson(&row.policy))?;
        if row.spec.kind == PolicyKind::NeoTO {
            continue;
        }
        let file = format!("neo_t_o_vs_{slug}.geojson");
        let name = format!("NEO-T-O vs {} ({})", row.policy, row.spec.control);
        let (value, po, ao, both) = overlay(&primary, &plan.plan.visit_order, &lookup, &name);
        write_json(&overlays.join(&file), &value)?;
        let share = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        overlaps.push(Overlap {
            alternative: name,
            file: format!("overlays/{file}"),
            primary_only: po,
            alternative_only: ao,
            both,
            primary_covered: share(both, po + both),
            alternative_covered: share(both, ao + both),
        });
    }

    let out = CompareReport {
        provenance: Provenance::of(cfg),
        budget_hours: report.budget_hours,
        budget_units: report.budget_units,
        rows: report.rows.clone(),
        metrics: metric_block(cfg, &test.labels, &scores)?,
        overlaps,
    };
    write_json(&cfg.out_dir.join(COMPARISON_FILE), &out)?;
    write_text(&cfg.out_dir.join(COMPARISON_TABLE_FILE), &render_table(&report))?;
    echo_config(cfg)?;
    Ok(out)
}

fn compare_neo_ids(ctx: &PlanContext<'_>, scores: &BTreeMap<FeatureSet, BTreeMap<String, f64>>) -> Result<Vec<String>> {
    let s = &scores[&FeatureSet::ENO];
    let mut ids = Vec::new();
    for p in ctx.properties {
        if ctx.thresholds.bin(s[&p.property_id])? >= RiskGroup::Medium {
            ids.push(p.property_id.clone());
        }
    }
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBucket {
    pub label: String,
    pub min_units: u32,
    /// Inclusive; `None` for the open last bucket.
    pub max_units: Option<u32>,
    pub properties: u64,
    /// Counts in VeryLow, Low, Medium, High order.
    pub counts: [u64; 4],
    pub proportions: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskHistogram {
    pub feature_set: FeatureSet,
    pub buckets: Vec<HistogramBucket>,
    /// Properties smaller than the first bucket.
    pub below_range: u64,
}

/// Share of each risk group within unit-size buckets.
pub fn risk_histogram(
    properties: &[PropertyRecord],
    scores: &BTreeMap<String, f64>,
    cfg: &RunConfig,
) -> Result<RiskHistogram> {
    let bounds = &cfg.histogram.bucket_lower_bounds;
    let mut buckets: Vec<HistogramBucket> = bounds
        .iter()
        .enumerate()
        .map(|(i, &lo)| {
            let hi = bounds.get(i + 1).map(|&next| next - 1);
            HistogramBucket {
                label: match hi {
                    Some(h) if h == lo => lo.to_string(),
                    Some(h) => format!("{lo}-{h}"),
                    None => format!("{lo}+"),
                },
                min_units: lo,
                max_units: hi,
                properties: 0,
                counts: [0; 4],
                proportions: [0.0; 4],
            }
        })
        .collect();
    let mut below_range = 0;
    for p in properties {
        let score = scores
            .get(&p.property_id)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no score for property {}", p.property_id)))?;
        let group = cfg.thresholds.bin(score)?;
        match bounds.iter().rposition(|&lo| p.units >= lo) {
            Some(b) => {
                buckets[b].properties += 1;
                buckets[b].counts[group as usize] += 1;
            }
            None => below_range += 1,
        }
    }
    for b in &mut buckets {
        if b.properties > 0 {
            for g in 0..4 {
                b.proportions[g] = b.counts[g] as f64 / b.properties as f64;
            }
        }
    }
    Ok(RiskHistogram {
        feature_set: cfg.histogram.feature_set,
        buckets,
        below_range,
    })
}

pub fn cmd_risk_histogram(cfg: &RunConfig) -> Result<RiskHistogram> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let ids: Vec<String> = data.properties.iter().map(|p| p.property_id.clone()).collect();
    let set = cfg.histogram.feature_set;
    let s = read_scores(&scores_path(cfg, set), &ids)?;
    let scores: BTreeMap<String, f64> = ids.into_iter().zip(s).collect();
    let hist = risk_histogram(&data.properties, &scores, cfg)?;

    let path = cfg.out_dir.join(HISTOGRAM_FILE);
    create_dir(&cfg.out_dir)?;
    let mut w = crate::data::io::writer(&path)?;
    let mut header = vec!["units".to_string(), "properties".to_string()];
    for g in RiskGroup::ALL {
        header.push(format!("{}_count", g.as_str()));
    }
    for g in RiskGroup::ALL {
        header.push(format!("{}_share", g.as_str()));
    }
    w.write_record(&header)?;
    for b in &hist.buckets {
        let mut rec = vec![b.label.clone(), b.properties.to_string()];
        rec.extend(b.counts.iter().map(u64::to_string));
        rec.extend(b.proportions.iter().map(|p| format!("{p:.6}")));
        w.write_record(&rec)?;
    }
    crate::data::io::finish(w, &path)?;
    echo_config(cfg)?;
    Ok(hist)
}
