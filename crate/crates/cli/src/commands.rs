use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::thread;

use marg_core::baselines::{
    ablation_table, cross_validate, run_prompt_baseline, score_with_strategy, AblationInput, PromptBaseline,
    RegressionMethod, WeightingStrategy,
};
use marg_core::corpus::{
    load_dataset, read_patent_document, sample_std_dev, AnnotatedPair, DatasetFormat, PatentPair,
    QC_MAX_STD_DEV,
};
use marg_core::dims::Dims;
use marg_core::engine::{EngineOptions, MargEngine, Sampling};
use marg_core::evalkit::{
    agreement_report, build_report, read_prediction_table, render_report, residual_analysis, to_text, top_k_errors,
    AgreementReport, IpcLevel, ReportFormat, ReportOptions, ScoredPair,
};
use marg_core::gateway::{
    merge_usage, merge_usage_concurrent, Backend, Gateway, LiveBackend, ResponseCache, ScriptedBackend, UsageRecord,
    DEFAULT_MODEL,
};
use serde::Serialize;

use crate::config::{BackendKind, RunConfig};
use crate::{Cli, CliError, Command};

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.global.resolve()?;
    match cli.command {
        Command::ScorePair { a, b, pair_id } => score_pair(&cfg, &a, &b, pair_id),
        Command::Batch {
            dataset,
            baseline,
            format,
            ipc_level,
            top_k,
        } => {
            let baseline = baseline.as_deref().map(PromptBaseline::from_str).transpose().map_err(CliError::Config)?;
            let level = IpcLevel::from_str(&ipc_level).map_err(CliError::Config)?;
            batch(&cfg, &dataset, baseline, format.as_deref(), level, top_k)
        }
        Command::Ablate { dataset, format } => ablate(&cfg, &dataset, format.as_deref()),
        Command::Agreement { ratings } => agreement(&cfg, &ratings),
        Command::FitWeights {
            dataset,
            method,
            lambda,
            folds,
        } => {
            let method = RegressionMethod::from_name(&method, lambda).map_err(|e| CliError::Config(e.to_string()))?;
            fit_weights(&cfg, &dataset, method, folds)
        }
        Command::Errors {
            table,
            top_k,
            ipc_level,
            format,
        } => {
            let level = IpcLevel::from_str(&ipc_level).map_err(CliError::Config)?;
            errors(&cfg, &table, top_k, level, format.as_deref())
        }
    }
}

struct Session {
    engine: MargEngine,
    gateway: Arc<Gateway>,
    sampling: Sampling,
}

fn session(cfg: &RunConfig) -> Result<Session, CliError> {
    let config = |e: marg_core::gateway::GatewayError| CliError::Config(e.to_string());
    let (backend, default_model): (Arc<dyn Backend>, String) = match cfg.backend {
        BackendKind::Scripted => {
            let path = cfg.script.as_ref().expect("checked when resolving the config");
            let script = ScriptedBackend::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            (Arc::new(script), DEFAULT_MODEL.to_string())
        }
        BackendKind::Live => {
            let live = LiveBackend::from_env().map_err(config)?;
            let model = live.default_model().to_string();
            (Arc::new(live), model)
        }
    };
    let cache = match &cfg.cache_dir {
        Some(dir) => ResponseCache::with_dir(dir).map_err(config)?,
        None => ResponseCache::in_memory(),
    };
    let gateway = Arc::new(Gateway::new(backend).with_cache(Some(cache)));
    let sampling = Sampling {
        model: cfg.model.clone().unwrap_or(default_model),
        temperature: cfg.temperature,
        top_p: cfg.top_p,
    };
    let options = EngineOptions {
        mode: cfg.plan,
        final_mode: cfg.final_mode,
        jobs: cfg.jobs,
        schedule_seed: cfg.seed,
        sampling: sampling.clone(),
    };
    Ok(Session {
        engine: MargEngine::new(gateway.clone(), options),
        gateway,
        sampling,
    })
}

fn schema(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Schema(format!("{}: {e}", path.display()))
}

fn write_out(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

fn output_format(flag: Option<&str>, out: Option<&PathBuf>) -> Result<ReportFormat, CliError> {
    match (flag, out) {
        (Some(f), _) => ReportFormat::from_str(f).map_err(CliError::Config),
        (None, Some(p)) => Ok(ReportFormat::from_path(p)),
        (None, None) => Ok(ReportFormat::Json),
    }
}

fn load_pairs(path: &Path) -> Result<Vec<AnnotatedPair>, CliError> {
    load_dataset(path, DatasetFormat::from_path(path)).map_err(|e| schema(path, e))
}

/// Applies `f` to every item, `jobs` at a time, keeping input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(jobs.max(1)) {
        if chunk.len() == 1 {
            out.push(f(&chunk[0]));
            continue;
        }
        thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|item| s.spawn(|| f(item))).collect();
            out.extend(handles.into_iter().map(|h| h.join().expect("worker panicked")));
        });
    }
    out
}

/// Sums usage of pairs processed `jobs` at a time.
fn batch_usage(records: &[UsageRecord], jobs: usize) -> UsageRecord {
    records.chunks(jobs.max(1)).fold(UsageRecord::default(), |total, chunk| {
        let concurrent = chunk.iter().copied().fold(UsageRecord::default(), merge_usage_concurrent);
        merge_usage(total, concurrent)
    })
}

fn score_pair(cfg: &RunConfig, a: &Path, b: &Path, pair_id: Option<String>) -> Result<(), CliError> {
    let doc_a = read_patent_document(a).map_err(|e| schema(a, e))?;
    let doc_b = read_patent_document(b).map_err(|e| schema(b, e))?;
    let id = pair_id.unwrap_or_else(|| format!("{}__{}", doc_a.id(), doc_b.id()));
    let pair = PatentPair::new(id, doc_a, doc_b).map_err(|e| CliError::Schema(e.to_string()))?;
    let s = session(cfg)?;
    let result = s.engine.score::<f64>(&pair).map_err(|e| CliError::Stage(e.to_string()))?;
    if let Some(out) = &cfg.out {
        write_out(out, &to_json(&result))?;
    }
    for w in &result.warnings {
        eprintln!("warning: {}", serde_json::to_string(w).expect("serializable warning"));
    }
    let sc = result.scores.values();
    let w = &result.weights;
    println!("pair: {}", result.pair_id);
    println!("scores:  technical {:.3}  domain {:.3}  claim {:.3}", sc.technical, sc.domain, sc.claim);
    println!("weights: technical {:.3}  domain {:.3}  claim {:.3}", w.w_t, w.w_d, w.w_c);
    println!("relation: {} (ipc rules: {})", result.relation.category, result.ipc_relation.category);
    println!(
        "calls: {}  tokens: {} in / {} out",
        result.usage.calls, result.usage.input_tokens, result.usage.output_tokens
    );
    println!("final score: {:.3}", result.final_score);
    Ok(())
}

struct Outcome {
    scored: ScoredPair,
    usage: UsageRecord,
}

fn first_ipc(pair: &AnnotatedPair) -> &marg_core::corpus::IpcCode {
    &pair.pair.a.ipc_codes()[0]
}

fn score_one(s: &Session, strategy: &WeightingStrategy, baseline: Option<PromptBaseline>, item: &AnnotatedPair) -> Outcome {
    let mut scored = ScoredPair {
        gold: item.gold_normalized,
        ..ScoredPair::new(item.pair_id(), first_ipc(item))
    };
    let mut usage = UsageRecord::default();
    let outcome: Result<(), String> = (|| {
        if let Some(kind) = baseline {
            let r = run_prompt_baseline(&s.gateway, &s.sampling, &item.pair, kind).map_err(|e| e.to_string())?;
            usage = r.trace.usage;
            scored.predicted = Some(r.score);
            if r.clamped {
                scored.warnings.push("score_clamped".into());
            }
            return Ok(());
        }
        if strategy.is_dynamic() {
            let r = s.engine.score::<f64>(&item.pair).map_err(|e| e.to_string())?;
            usage = r.usage;
            scored.predicted = Some(r.final_score);
            scored.dimension_scores = Some(r.scores.values());
            scored.weights = Some(r.weights.as_dims());
            scored.warnings = r.warnings.iter().map(|w| w.kind().to_string()).collect();
        } else {
            let r = s.engine.score_dimensions::<f64>(&item.pair).map_err(|e| e.to_string())?;
            usage = r.usage;
            let weights = strategy.weights(None).map_err(|e| e.to_string())?;
            let values = r.scores.values();
            scored.predicted = Some(score_with_strategy(&values, strategy, None).map_err(|e| e.to_string())?);
            scored.dimension_scores = Some(values);
            scored.weights = Some(weights.as_dims());
            scored.warnings = r.warnings.iter().map(|w| w.kind().to_string()).collect();
        }
        Ok(())
    })();
    if let Err(message) = outcome {
        scored.failure = Some(message);
    }
    Outcome { scored, usage }
}

/// Agreement over the dataset's ratings, when every pair carries the same number (≥ 2).
fn dataset_agreement(pairs: &[AnnotatedPair]) -> Option<AgreementReport> {
    let n = pairs.first()?.ratings.len();
    if n < 2 || pairs.iter().any(|p| p.ratings.len() != n) {
        return None;
    }
    let ratings: Vec<Vec<u8>> = pairs.iter().map(|p| p.ratings.clone()).collect();
    agreement_report(&ratings).ok()
}

fn batch(
    cfg: &RunConfig,
    dataset: &Path,
    baseline: Option<PromptBaseline>,
    format: Option<&str>,
    level: IpcLevel,
    top_k: usize,
) -> Result<(), CliError> {
    let pairs = load_pairs(dataset)?;
    let format = output_format(format, cfg.out.as_ref())?;
    let s = session(cfg)?;
    let outcomes = parallel_map(&pairs, cfg.jobs, |item| score_one(&s, &cfg.strategy, baseline, item));
    let usage = batch_usage(&outcomes.iter().map(|o| o.usage).collect::<Vec<_>>(), cfg.jobs);
    let label = match baseline {
        Some(kind) => format!("baseline:{kind}"),
        None => cfg.strategy.to_string(),
    };
    let options = ReportOptions {
        label,
        level,
        top_k,
        prices: Some(cfg.prices),
    };
    let report = build_report(
        outcomes.into_iter().map(|o| o.scored).collect(),
        usage,
        dataset_agreement(&pairs),
        &options,
    );
    if let Some(out) = &cfg.out {
        let body = render_report(&report, format).map_err(|e| CliError::Config(e.to_string()))?;
        write_out(out, &body)?;
    }
    print!("{}", to_text(&report));
    println!("backend calls: {}", s.gateway.backend_calls());
    if report.n_failed > 0 {
        return Err(CliError::Partial {
            failed: report.n_failed,
            total: pairs.len(),
        });
    }
    Ok(())
}

fn ablate(cfg: &RunConfig, dataset: &Path, format: Option<&str>) -> Result<(), CliError> {
    let pairs = load_pairs(dataset)?;
    if let Some(p) = pairs.iter().find(|p| p.gold_normalized.is_none()) {
        return Err(schema(dataset, format!("pair `{}` has no gold score", p.pair_id())));
    }
    let format = output_format(format, cfg.out.as_ref())?;
    let s = session(cfg)?;
    let results = parallel_map(&pairs, cfg.jobs, |item| s.engine.score::<f64>(&item.pair));
    let mut inputs = Vec::new();
    let mut failed = 0;
    for (item, r) in pairs.iter().zip(results) {
        match r {
            Ok(r) => inputs.push(AblationInput {
                scores: r.scores.values(),
                dynamic: r.weights,
                gold: item.gold_normalized.expect("checked above"),
            }),
            Err(e) => {
                failed += 1;
                eprintln!("failed: {}: {e}", item.pair_id());
            }
        }
    }
    let table = ablation_table(&inputs).map_err(|e| CliError::Schema(e.to_string()))?;
    if let Some(out) = &cfg.out {
        let body = match format {
            ReportFormat::Json => to_json(&table),
            ReportFormat::Csv => table.to_csv(),
            ReportFormat::Text => table.to_text(),
        };
        write_out(out, &body)?;
    }
    print!("{}", table.to_text());
    if failed > 0 {
        return Err(CliError::Partial {
            failed,
            total: pairs.len(),
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct AgreementOutput {
    #[serde(flatten)]
    report: AgreementReport,
    n_excluded: usize,
    excluded: Vec<String>,
}

/// `id,r1,r2,...` rows with a header line.
fn read_ratings_csv(path: &Path) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| schema(path, e))?;
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema(path, e))?;
        let mut fields = record.iter();
        let id = fields.next().unwrap_or_default().to_string();
        let ratings = fields
            .map(|f| f.parse::<u8>())
            .collect::<Result<Vec<u8>, _>>()
            .map_err(|e| schema(path, format!("row {}: {e}", idx + 1)))?;
        rows.push((id, ratings));
    }
    Ok(rows)
}

fn agreement(cfg: &RunConfig, path: &Path) -> Result<(), CliError> {
    let rows: Vec<(String, Vec<u8>)> = if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        read_ratings_csv(path)?
    } else {
        let pairs = load_pairs(path)?;
        if let Some(p) = pairs.iter().find(|p| p.ratings.is_empty()) {
            return Err(schema(path, format!("pair `{}` has no ratings", p.pair_id())));
        }
        pairs.into_iter().map(|p| (p.pair.pair_id.clone(), p.ratings)).collect()
    };
    if let Some((id, _)) = rows.iter().find(|(_, r)| r.len() < 2) {
        return Err(schema(path, format!("`{id}` needs at least two ratings")));
    }
    let (kept, excluded): (Vec<_>, Vec<_>) = rows.into_iter().partition(|(_, r)| sample_std_dev(r) <= QC_MAX_STD_DEV);
    let ratings: Vec<Vec<u8>> = kept.iter().map(|(_, r)| r.clone()).collect();
    let report = agreement_report(&ratings).map_err(|e| schema(path, e))?;
    println!("items: {} kept, {} excluded", report.n_items, excluded.len());
    for (id, r) in &excluded {
        println!("  excluded {id}: ratings {r:?}, sd {:.3}", sample_std_dev(r));
    }
    println!("raters: {}", report.n_raters);
    println!("fleiss kappa: {:.3}", report.fleiss_kappa);
    println!("cronbach alpha: {:.3}", report.cronbach_alpha);
    if let Some(out) = &cfg.out {
        let output = AgreementOutput {
            report,
            n_excluded: excluded.len(),
            excluded: excluded.into_iter().map(|(id, _)| id).collect(),
        };
        write_out(out, &to_json(&output))?;
    }
    Ok(())
}

fn fit_weights(cfg: &RunConfig, dataset: &Path, method: RegressionMethod<f64>, folds: usize) -> Result<(), CliError> {
    let pairs = load_pairs(dataset)?;
    let mut rows: Vec<(Dims<f64>, f64)> = Vec::with_capacity(pairs.len());
    for p in &pairs {
        let (Some(s), Some(g)) = (p.dimension_scores, p.gold_normalized) else {
            return Err(schema(
                dataset,
                format!("pair `{}` needs both dimension_scores and a gold score", p.pair_id()),
            ));
        };
        rows.push((s, g));
    }
    let cv = cross_validate(&rows, method, folds, cfg.seed.unwrap_or(0)).map_err(|e| schema(dataset, e))?;
    for w in &cv.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(out) = &cfg.out {
        write_out(out, &to_json(&cv))?;
    }
    let c = &cv.full_fit.coefficients;
    println!("method: {}", cv.method);
    println!(
        "coefficients: technical {:.6}  domain {:.6}  claim {:.6}  intercept {:.6}",
        c.technical, c.domain, c.claim, cv.full_fit.intercept
    );
    match &cv.mean_test_metrics {
        Some(m) => println!(
            "{}-fold test: pearson {:.3}  spearman {:.3}  mse {:.4}  mae {:.4}",
            cv.k, m.pearson, m.spearman, m.mse, m.mae
        ),
        None => println!("{}-fold test: no metrics", cv.k),
    }
    Ok(())
}

fn errors(cfg: &RunConfig, table: &Path, top_k: usize, level: IpcLevel, format: Option<&str>) -> Result<(), CliError> {
    let rows = read_prediction_table(table).map_err(|e| schema(table, e))?;
    let predictions = rows
        .iter()
        .map(|r| r.to_prediction())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| schema(table, e))?;
    let Some(analysis) = residual_analysis(&predictions, level) else {
        println!("no rows");
        return Ok(());
    };
    let top = top_k_errors(&analysis.records, top_k);
    let mut text = String::new();
    let _ = writeln!(text, "rows: {}  mean residual: {:+.3}", analysis.records.len(), analysis.mean_residual);
    let _ = writeln!(text, "per IPC {level}:");
    for (k, g) in &analysis.per_group {
        let _ = writeln!(text, "  {k:<6} n {:>3}  mae {:.3}  residual {:+.3}", g.n, g.mae, g.mean_residual);
    }
    let _ = writeln!(text, "largest errors:");
    for r in &top {
        let _ = writeln!(
            text,
            "  {:<16} predicted {:.3}  gold {:.3}  residual {:+.3}",
            r.pair_id, r.predicted, r.gold, r.residual
        );
    }
    print!("{text}");
    if let Some(out) = &cfg.out {
        let body = match output_format(format, Some(out))? {
            ReportFormat::Json => to_json(&serde_json::json!({ "analysis": analysis, "top_errors": top })),
            ReportFormat::Csv => {
                let mut s = String::from("pair_id,predicted,gold,residual,ipc_section,ipc_class\n");
                for r in &analysis.records {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{}",
                        r.pair_id, r.predicted, r.gold, r.residual, r.ipc_section, r.ipc_class
                    );
                }
                s
            }
            ReportFormat::Text => text,
        };
        write_out(out, &body)?;
    }
    Ok(())
}
