use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use outreach_core::data::FeatureSet;
use outreach_core::metrics::format_percent;
use outreach_core::pipeline::{
    cmd_compare, cmd_gen, cmd_metrics, cmd_risk_histogram, cmd_train_score, MetricsReport, RunConfig,
    ScoreImport, COMPARISON_TABLE_FILE,
};
use outreach_core::risk::RiskGroup;
use outreach_core::{Error, Result};

/// Eviction risk scoring and outreach policy comparison.
#[derive(Debug, Parser)]
#[command(name = "outreach", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory with the input tables (default: <out>/data).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Generate a synthetic region.
    Gen {
        #[arg(long)]
        properties: Option<usize>,
    },
    /// Train one model per feature set, score the test window and evaluate.
    TrainScore {
        /// Pick hyperparameters by cross-validated grid search.
        #[arg(long)]
        grid_search: bool,
        /// Use external scores for a feature set, as SET=PATH.
        #[arg(long = "import-scores", value_parser = parse_import)]
        import_scores: Vec<ScoreImport>,
    },
    /// Compare outreach policies under the NEO-T-O budget.
    Compare {
        /// Perturbation rounds per tour.
        #[arg(long)]
        kicks: Option<usize>,
    },
    /// Risk-group shares by property size.
    RiskHistogram {
        #[arg(long, value_parser = parse_set)]
        feature_set: Option<FeatureSet>,
    },
    /// Re-evaluate existing score files.
    Metrics {
        #[arg(long)]
        bootstrap_iterations: Option<usize>,
    },
}

fn parse_set(s: &str) -> std::result::Result<FeatureSet, String> {
    FeatureSet::ALL
        .into_iter()
        .find(|f| f.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown feature set `{s}` (expected E, EN or ENO)"))
}

fn parse_import(s: &str) -> std::result::Result<ScoreImport, String> {
    let (set, path) = s.split_once('=').ok_or("expected SET=PATH")?;
    Ok(ScoreImport {
        feature_set: parse_set(set)?,
        path: path.into(),
    })
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(d) = &cli.common.data_dir {
        cfg.data_dir = Some(d.clone());
    }
    match &cli.verb {
        Verb::Gen { properties } => {
            if let Some(n) = properties {
                cfg.synthetic.properties = *n;
            }
        }
        Verb::TrainScore { grid_search, import_scores } => {
            cfg.model.grid_search |= grid_search;
            for imp in import_scores {
                cfg.model.import_scores.retain(|s| s.feature_set != imp.feature_set);
                cfg.model.import_scores.push(imp.clone());
            }
        }
        Verb::Compare { kicks } => {
            if let Some(k) = kicks {
                cfg.tour.kicks = *k;
            }
        }
        Verb::RiskHistogram { feature_set } => {
            if let Some(f) = feature_set {
                cfg.histogram.feature_set = *f;
            }
        }
        Verb::Metrics { bootstrap_iterations } => {
            if let Some(n) = bootstrap_iterations {
                cfg.significance.bootstrap_iterations = *n;
            }
        }
    }
    Ok(cfg)
}

fn print_metrics(m: &MetricsReport) {
    let b = &m.metrics;
    println!(
        "test window: {} properties, {} with filings ({})",
        b.rows,
        b.positives,
        format_percent(b.base_rate)
    );
    for s in &b.sets {
        println!("{:<4} ROC AUC {:.4}  PR AUC {:.4}", s.feature_set.as_str(), s.roc_auc, s.pr_auc);
    }
    for c in &b.comparisons {
        println!(
            "{} vs {}: DeLong p = {:.3e}, bootstrap PR p = {:.3e}",
            c.a, c.b, c.delong.p_value, c.bootstrap_pr.p_value
        );
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    match cli.verb {
        Verb::Gen { .. } => {
            let g = cmd_gen(&cfg)?;
            println!("wrote {} properties and {} filings to {}", g.properties, g.filings, g.data_dir.display());
        }
        Verb::TrainScore { .. } => {
            let (t, m) = cmd_train_score(&cfg)?;
            for model in &t.models {
                println!("{}: {} ({} trees)", model.feature_set, model.source, model.trees);
            }
            print_metrics(&m);
        }
        Verb::Compare { .. } => {
            cmd_compare(&cfg)?;
            let path = cfg.out_dir.join(COMPARISON_TABLE_FILE);
            let table = std::fs::read_to_string(&path).map_err(|source| Error::Io { path, source })?;
            print!("{table}");
        }
        Verb::RiskHistogram { .. } => {
            let h = cmd_risk_histogram(&cfg)?;
            print!("{:<8} {:>10}", "units", "properties");
            for g in RiskGroup::ALL {
                print!(" {:>9}", g.as_str());
            }
            println!();
            for b in &h.buckets {
                print!("{:<8} {:>10}", b.label, b.properties);
                for p in b.proportions {
                    print!(" {:>9}", format_percent(p));
                }
                println!();
            }
        }
        Verb::Metrics { .. } => print_metrics(&cmd_metrics(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
