use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;

use crate::cluster::ClusterError;
use crate::data_io::{normalize_vector, read_repo_file, read_split_column, Dataset};
use crate::graph_embed::embed_labels;
use crate::label_graph::{build_label_graph, LabelGraph};
use crate::metrics::{evaluate, MetricReport, MetricsError};
use crate::model_file::{load_model, to_bytes};
use crate::net::NetError;
use crate::pipeline::{train_model, DxmlModel, PipelineError};
use crate::predictor::{parse_prediction_line, PredictError, PredictParams, Scores, Weighting};

use super::{CliError, EmbedArgs, EvaluateArgs, PredictArgs, ReportFormat, SplitArgs, SweepArgs, TrainArgs};

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

fn pipeline_error(e: PipelineError) -> CliError {
    match e {
        PipelineError::Network(NetError::NoLabeledPoints) => CliError::Data("no labeled training points".into()),
        PipelineError::Network(NetError::Config(_)) | PipelineError::Embedding(_) => CliError::Usage(e.to_string()),
        PipelineError::Graph(_)
        | PipelineError::Dimension(_)
        | PipelineError::Cluster(ClusterError::TooManyClusters { .. })
        | PipelineError::Network(NetError::FeatureOutOfRange { .. })
        | PipelineError::Predict(PredictError::Input(NetError::FeatureOutOfRange { .. })) => {
            CliError::Data(e.to_string())
        }
        other => CliError::Internal(other.to_string()),
    }
}

fn predict_error(e: PredictError) -> CliError {
    pipeline_error(PipelineError::Predict(e))
}

/// Reads a data file, keeping only the split rows when a split file is given.
pub fn load_data(path: &Path, split: &SplitArgs) -> Result<Dataset, CliError> {
    let data = read_repo_file(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let Some(split_path) = &split.split else {
        return Ok(data);
    };
    let file = fs::File::open(split_path).map_err(|e| CliError::Data(format!("{}: {e}", split_path.display())))?;
    let ids = read_split_column(BufReader::new(file), split.split_column)
        .map_err(|e| CliError::Data(format!("{}: {e}", split_path.display())))?;
    data.subset(&ids)
        .map_err(|e| CliError::Data(format!("{}: {e}", split_path.display())))
}

fn load_graph(path: &Path, num_labels: usize) -> Result<LabelGraph, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    LabelGraph::from_edge_list(BufReader::new(file), num_labels)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_model_file(path: &Path) -> Result<DxmlModel, CliError> {
    load_model(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    if threads == 0 {
        return Err(CliError::Usage("threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(internal)?;
    Ok(pool.install(f))
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

/// Writes via a temporary file and a rename so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = temp_path(path);
    let result = fs::write(&tmp, bytes).and_then(|()| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::Data(format!("{}: {e}", path.display())));
    }
    Ok(())
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => stdout.write_all(text.as_bytes()).map_err(internal),
    }
}

pub fn cmd_train(args: &TrainArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = args.config.resolve(args.threads)?;
    if args.dry_run {
        let mut text = format!(
            "scale={} seed={} threads={} normalization={}\n",
            config.scale, config.train.seed, config.threads, config.normalization
        );
        for step in config.plan() {
            let _ = writeln!(text, "{step}");
        }
        return emit(None, stdout, &text);
    }
    let out = args
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("train needs --out <MODEL>".into()))?;

    let dataset = load_data(&args.train_file, &args.split)?;
    info!(
        "loaded {} points, {} features, {} labels",
        dataset.num_points(),
        dataset.num_features(),
        dataset.num_labels()
    );
    if dataset.num_labeled() == 0 {
        return Err(CliError::Data("no labeled training points".into()));
    }
    let prior = args
        .prior_graph
        .as_deref()
        .map(|p| load_graph(p, dataset.num_labels()))
        .transpose()?;

    let (model, report) = with_pool(config.threads, || train_model(&dataset, &config, prior))?.map_err(pipeline_error)?;
    for t in &report.timings {
        eprintln!("{:<14} {:>10.3}s", t.stage, t.seconds);
    }
    if report.skipped_unlabeled > 0 {
        info!("{} unlabeled training points skipped", report.skipped_unlabeled);
    }
    write_atomic(out, &to_bytes(&model))?;
    info!("model written to {}", out.display());
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if args.k == 0 || args.p == 0 {
        return Err(CliError::Usage("k and p must be at least 1".into()));
    }
    let model = load_model_file(&args.model)?;
    let test = load_data(&args.test_file, &args.split)?;
    let params = PredictParams {
        k: args.k,
        p: args.p,
        weighting: args.weighting,
    };
    let predictions = with_pool(args.threads, || model.predict_dataset(&test, &params))?.map_err(pipeline_error)?;
    let limit = (!args.all_scores).then_some(args.p);
    let mut text = String::new();
    for pred in &predictions {
        text.push_str(&pred.to_line(limit));
        text.push('\n');
    }
    emit(args.out.as_deref(), stdout, &text)
}

/// Reads a predictions file, one score line per point.
pub fn read_predictions(path: &Path) -> Result<Vec<Scores>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| parse_prediction_line(line, i + 1))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn metrics_error(e: MetricsError) -> CliError {
    match e {
        MetricsError::ZeroK => CliError::Usage(e.to_string()),
        MetricsError::CountMismatch { .. } => CliError::Data(e.to_string()),
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let predictions = read_predictions(&args.predictions)?;
    let test = load_data(&args.test_file, &args.split)?;
    let report = evaluate(&predictions, &test, &args.ks, args.skip_unlabeled).map_err(metrics_error)?;
    let text = match args.format {
        ReportFormat::Table => report.to_table(),
        ReportFormat::Kv => report.to_key_values(),
    };
    emit(args.out.as_deref(), stdout, &text)
}

/// Metric reports for each candidate k and the best k per metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub reports: Vec<(usize, MetricReport)>,
    /// `(metric name, best k)`, e.g. `("P@1", 10)`.
    pub best: Vec<(String, usize)>,
}

/// Evaluates every candidate k on `data`; ties go to the smallest k.
pub fn sweep_k(
    model: &DxmlModel,
    data: &Dataset,
    candidates: &[usize],
    metric_ks: &[usize],
    weighting: Weighting,
    skip_unlabeled: bool,
) -> Result<SweepResult, CliError> {
    if candidates.is_empty() {
        return Err(CliError::Usage("no candidate k values given".into()));
    }
    if candidates.contains(&0) {
        return Err(CliError::Usage("candidate k values must be at least 1".into()));
    }
    if data.num_features() != model.num_features {
        return Err(pipeline_error(PipelineError::Dimension(format!(
            "validation data has {} features, model expects {}",
            data.num_features(),
            model.num_features
        ))));
    }
    let parts = model.parts();
    parts.check().map_err(predict_error)?;
    let embedded: Vec<Vec<f64>> = data
        .points()
        .par_iter()
        .map(|p| {
            let mut x = p.features.clone();
            normalize_vector(&mut x, model.config.normalization);
            parts.net.embed(&x)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| predict_error(e.into()))?;

    let mut ks = candidates.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut reports = Vec::with_capacity(ks.len());
    for &k in &ks {
        let params = PredictParams {
            k,
            p: metric_ks.iter().copied().max().unwrap_or(1),
            weighting,
        };
        let scores: Vec<Scores> = embedded
            .par_iter()
            .map(|e| parts.predict_embedded(e, &params).map(|p| p.scores))
            .collect::<Result<_, _>>()
            .map_err(predict_error)?;
        let report = evaluate(&scores, data, metric_ks, skip_unlabeled).map_err(metrics_error)?;
        info!("k={k}: {}", report.to_key_values().replace('\n', " "));
        reports.push((k, report));
    }

    let mut best = Vec::new();
    for (name, pick) in [("P", 0usize), ("nDCG", 1)] {
        for (i, mk) in metric_ks.iter().enumerate() {
            let value = |r: &MetricReport| if pick == 0 { r.precision[i] } else { r.ndcg[i] };
            let mut top = &reports[0];
            for r in &reports[1..] {
                if value(&r.1) > value(&top.1) {
                    top = r;
                }
            }
            best.push((format!("{name}@{mk}"), top.0));
        }
    }
    Ok(SweepResult { reports, best })
}

pub fn cmd_sweep_k(args: &SweepArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if args.candidates.is_empty() {
        return Err(CliError::Usage("sweep-k needs --candidates k1,k2,...".into()));
    }
    let model = load_model_file(&args.model)?;
    let data = load_data(&args.validation_file, &args.split)?;
    let result = with_pool(args.threads, || {
        sweep_k(&model, &data, &args.candidates, &args.metric_ks, args.weighting, args.skip_unlabeled)
    })??;
    let mut text = String::new();
    for (k, report) in &result.reports {
        let _ = writeln!(text, "k={k} {}", report.to_key_values().trim_end().replace('\n', " "));
    }
    for (metric, k) in &result.best {
        let _ = writeln!(text, "best {metric}: k={k}");
    }
    emit(args.out.as_deref(), stdout, &text)
}

pub fn cmd_embed_labels(args: &EmbedArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = args.config.resolve(None)?;
    let dataset = load_data(&args.train_file, &args.split)?;
    let graph = match &args.prior_graph {
        Some(p) => load_graph(p, dataset.num_labels())?,
        None => build_label_graph(&dataset),
    };
    info!("label graph: {} nodes, {} edges", graph.num_nodes(), graph.num_edges());
    let v = embed_labels(&graph, &config.deepwalk).map_err(|e| CliError::Usage(e.to_string()))?;
    emit(args.out.as_deref(), stdout, &v.to_text())
}
