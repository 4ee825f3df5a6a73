//! Subcommand implementations. Each writes one JSON document holding the
//! command's configuration and its result.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use magnitude::classify::{tune_scales, NullRule, Scales};
use magnitude::data::{
    gen_blobs, gen_checkerboard, gen_moons, gen_outlier_mixture, load_csv, load_points_csv, write_csv, LabelColumn,
    MixtureSpec,
};
use magnitude::harness::{
    load_baselines, run_al_bench, run_classification_bench, run_null_class_bench, ALBench, ClassificationBench,
    NullClassBench,
};
use magnitude::{
    detect_outliers, fit, magnitude_function, weighting, ClassifierConfig, FittedClassifier, LabeledDataset, Metric,
    OutlierOptions, PointCloud, Prediction, Strategy,
};
use serde::Serialize;

use crate::args::*;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    config: &'a Command,
    result: T,
}

fn emit<T: Serialize>(command: &Command, output: &Option<PathBuf>, result: T) -> Result<()> {
    let doc = Envelope { tool: "magnitude", version: env!("CARGO_PKG_VERSION"), config: command, result };
    let text = serde_json::to_string_pretty(&doc)?;
    match output {
        Some(path) => std::fs::write(path, text + "\n")
            .map_err(magnitude::Error::from)
            .with_context(|| format!("--output {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
            Ok(())
        }
    }
}

fn label_column(flag: &str, spec: &str) -> Result<LabelColumn> {
    spec.parse().with_context(|| format!("{flag} `{spec}`"))
}

fn load_labeled(flag: &str, path: &Path, label: &str, metric: Metric) -> Result<LabeledDataset> {
    let column = label_column("--label-column", label)?;
    let mut data = load_csv(path, &column).with_context(|| format!("{flag} {}", path.display()))?;
    data.cloud = data.cloud.with_metric(metric);
    Ok(data)
}

fn load_unlabeled(flag: &str, path: &Path, ignore: &Option<String>, metric: Metric) -> Result<PointCloud> {
    let ignore = ignore.as_deref().map(|s| label_column("--ignore-column", s)).transpose()?;
    let cloud = load_points_csv(path, ignore.as_ref()).with_context(|| format!("{flag} {}", path.display()))?;
    Ok(cloud.with_metric(metric))
}

fn classifier_config(args: &ClassifierArgs, scales: Scales) -> ClassifierConfig {
    ClassifierConfig {
        scales,
        scale_mode: args.scale_mode.into(),
        decide: args.decide.into(),
        null: args.null_threshold.map(|threshold| NullRule { threshold, basis: args.null_basis.into() }),
    }
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Weights(a) => weights(command, a),
        Command::Classify(ClassifyCommand::Fit(a)) => classify_fit(command, a),
        Command::Classify(ClassifyCommand::Predict(a)) => classify_predict(command, a),
        Command::Classify(ClassifyCommand::Tune(a)) => classify_tune(command, a),
        Command::Al(a) => al(command, a),
        Command::Outliers(a) => outliers(command, a),
        Command::Bench(a) => bench(command, a),
        Command::BenchNull(a) => bench_null(command, a),
        Command::Gen(g) => generate(command, g),
        Command::Serve(a) => crate::serve_cmd::serve(a),
    }
}

#[derive(Serialize)]
struct WeightsResult<'a> {
    points: usize,
    dim: usize,
    magnitude: f64,
    weights: &'a [f64],
}

fn weights(command: &Command, a: &WeightsArgs) -> Result<()> {
    let cloud = load_unlabeled("--input", &a.input, &a.ignore_column, a.metric.into())?;
    if let Some(scales) = &a.sweep {
        let table = magnitude_function(&cloud, scales)?;
        return emit(command, &a.output.output, serde_json::json!({ "points": cloud.len(), "sweep": table }));
    }
    let state = weighting(&cloud.with_scale(a.t)?)?;
    emit(
        command,
        &a.output.output,
        WeightsResult { points: state.cloud().len(), dim: state.cloud().dim(), magnitude: state.magnitude(), weights: state.weights() },
    )
}

#[derive(Serialize)]
struct ClassSummary {
    label: String,
    points: usize,
    t: f64,
    magnitude: f64,
}

fn class_summaries(model: &FittedClassifier) -> Vec<ClassSummary> {
    model
        .classes()
        .iter()
        .map(|c| ClassSummary {
            label: model.label_names()[c.label()].clone(),
            points: c.state().cloud().len(),
            t: c.t(),
            magnitude: c.state().magnitude(),
        })
        .collect()
}

fn classify_fit(command: &Command, a: &FitArgs) -> Result<()> {
    let mut data = load_labeled("--train", &a.train, &a.label_column, a.classifier.metric.into())?;
    if a.dedup {
        data = data.dedup_within_class().0;
    }
    let scales = match &a.t_per_class {
        Some(ts) => Scales::PerClass(ts.clone()),
        None => Scales::Shared(a.t),
    };
    let model = fit(&data, &classifier_config(&a.classifier, scales))?;
    model.save(&a.model).with_context(|| format!("--model {}", a.model.display()))?;
    let training_accuracy = model.accuracy(&data)?;
    emit(
        command,
        &a.output.output,
        serde_json::json!({ "model": a.model, "classes": class_summaries(&model), "training_accuracy": training_accuracy }),
    )
}

#[derive(Serialize)]
struct PointPrediction {
    index: usize,
    label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    raw: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scaled: Option<Vec<f64>>,
}

fn classify_predict(command: &Command, a: &PredictArgs) -> Result<()> {
    let model = FittedClassifier::load(&a.model).with_context(|| format!("--model {}", a.model.display()))?;
    let (cloud, truth): (PointCloud, Option<Vec<String>>) = match &a.label_column {
        Some(col) => {
            let d = load_labeled("--input", &a.input, col, model.metric())?;
            let names = d.labels.iter().map(|&l| d.label_names[l].clone()).collect();
            (d.cloud, Some(names))
        }
        None => (load_unlabeled("--input", &a.input, &None, model.metric())?, None),
    };
    if cloud.dim() != model.dim() {
        bail!(magnitude::Error::invalid(format!(
            "--input has {} feature columns, the model expects {}",
            cloud.dim(),
            model.dim()
        )));
    }
    let mut rows = Vec::with_capacity(cloud.len());
    for (i, x) in cloud.points().enumerate() {
        let scores = model.score(x)?;
        let label = match model.decide_scores(&scores) {
            Prediction::Label(l) => model.label_names()[l].clone(),
            Prediction::Null => "NULL".to_string(),
        };
        rows.push(PointPrediction {
            index: i,
            label,
            truth: truth.as_ref().map(|t| t[i].clone()),
            raw: a.scores.then(|| scores.raw.clone()),
            scaled: a.scores.then(|| scores.scaled.clone()),
        });
    }
    let accuracy = truth.as_ref().map(|_| {
        rows.iter().filter(|r| r.truth.as_deref() == Some(r.label.as_str())).count() as f64 / rows.len() as f64
    });
    let nulls = rows.iter().filter(|r| r.label == "NULL").count();
    emit(command, &a.output.output, serde_json::json!({ "accuracy": accuracy, "null_count": nulls, "predictions": rows }))
}

fn classify_tune(command: &Command, a: &TuneArgs) -> Result<()> {
    let data = load_labeled("--train", &a.train, &a.label_column, a.classifier.metric.into())?;
    let base = classifier_config(&a.classifier, Scales::default());
    let tuned = tune_scales(&data, &a.grid, a.folds, a.seed, &base)?;
    if let Some(path) = &a.model {
        let config = ClassifierConfig { scales: Scales::PerClass(tuned.scales.clone()), ..base };
        fit(&data.dedup_within_class().0, &config)?.save(path).with_context(|| format!("--model {}", path.display()))?;
    }
    emit(command, &a.output.output, serde_json::json!({ "label_names": data.label_names, "tune": tuned }))
}

fn al(command: &Command, a: &AlArgs) -> Result<()> {
    let datasets = a
        .data
        .iter()
        .map(|d| Ok((d.name.clone(), load_labeled("--data", &d.path, &a.label_column, Metric::L2)?)))
        .collect::<Result<Vec<_>>>()?;
    let strategies: Vec<Strategy> =
        if a.strategy.is_empty() { Strategy::ALL.to_vec() } else { a.strategy.iter().map(|&s| s.into()).collect() };
    let bench = ALBench {
        runs: a.runs,
        pool_fraction: a.pool_fraction,
        budget: a.budget,
        gamma: a.gamma,
        lambda: a.lambda,
        batch: a.batch,
        seed: a.seed,
        strategies,
    };
    let report = run_al_bench(&datasets, &bench)?;
    if let Some(path) = &a.curves {
        report.write_curves_csv(path).with_context(|| format!("--curves {}", path.display()))?;
    }
    for c in &report.curves {
        log::info!(
            "{} {}: accuracy at half budget {:.4} +/- {:.4}",
            c.dataset,
            c.strategy,
            c.half_budget.mean,
            c.half_budget.std
        );
    }
    emit(command, &a.output.output, report)
}

#[derive(Serialize)]
struct GroundTruthScore {
    precision: f64,
    recall: f64,
    true_outliers: usize,
}

fn outliers(command: &Command, a: &OutliersArgs) -> Result<()> {
    let (cloud, truth) = match (&a.input, a.mixture_seed) {
        (Some(path), _) => (load_unlabeled("--input", path, &a.ignore_column, a.metric.into())?, None),
        (None, Some(seed)) => {
            let mix = gen_outlier_mixture(&MixtureSpec::default(), seed)?;
            (mix.data.cloud.with_metric(a.metric.into()), Some(mix.is_outlier))
        }
        (None, None) => bail!("one of --input or --mixture-seed is required"),
    };
    let report = detect_outliers(&cloud.with_scale(a.t)?, a.tau, OutlierOptions { freeze_inliers: a.freeze_inliers })?;
    let score = truth.map(|truth| {
        let flagged = report.is_outlier();
        let tp = (0..truth.len()).filter(|&i| truth[i] && flagged[i]).count();
        let true_outliers = truth.iter().filter(|&&o| o).count();
        GroundTruthScore {
            precision: if report.outliers.is_empty() { 1.0 } else { tp as f64 / report.outliers.len() as f64 },
            recall: if true_outliers == 0 { 1.0 } else { tp as f64 / true_outliers as f64 },
            true_outliers,
        }
    });
    let records = report.records();
    emit(command, &a.output.output, serde_json::json!({ "report": report, "points": records, "ground_truth": score }))
}

fn bench(command: &Command, a: &BenchArgs) -> Result<()> {
    let datasets = a
        .data
        .iter()
        .map(|d| Ok((d.name.clone(), load_labeled("--data", &d.path, &a.label_column, a.classifier.metric.into())?)))
        .collect::<Result<Vec<_>>>()?;
    let bench = ClassificationBench {
        runs: a.runs,
        train_fraction: a.train_fraction,
        seed: a.seed,
        standardize: a.standardize,
        dedup_train: !a.no_dedup,
        classifier: classifier_config(&a.classifier, Scales::Shared(a.t)),
    };
    let mut report = run_classification_bench(&datasets, &bench)?;
    if let Some(path) = &a.baselines {
        report.baselines = load_baselines(path).with_context(|| format!("--baselines {}", path.display()))?;
    }
    for c in &report.cells {
        log::info!("{} {}: {:.4} +/- {:.4}", c.dataset, c.classifier, c.aggregate.mean, c.aggregate.std);
    }
    emit(command, &a.output.output, report)
}

fn bench_null(command: &Command, a: &BenchNullArgs) -> Result<()> {
    let data = load_labeled("--data", &a.data, &a.label_column, Metric::L2)?;
    let id = |flag: &str, name: &str| {
        data.label_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| anyhow!(magnitude::Error::invalid(format!("{flag}: no class named `{name}`"))))
    };
    let bench = NullClassBench {
        train_classes: (id("--train-classes", &a.train_classes[0])?, id("--train-classes", &a.train_classes[1])?),
        held_out: id("--held-out", &a.held_out)?,
        null_rule: NullRule { threshold: a.threshold, basis: a.null_basis.into() },
        t: a.t,
        splits: a.splits,
        train_fraction: a.train_fraction,
        seed: a.seed,
    };
    let report = run_null_class_bench(&data, &bench)?;
    log::info!("NULL rate {:.4}, class rates {:?}", report.null_rate, report.class_rates);
    emit(command, &a.output.output, report)
}

fn parse_centers(s: &str) -> Result<Vec<Vec<f64>>> {
    let centers = s
        .split(';')
        .map(|c| c.split(',').map(|v| v.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| magnitude::Error::invalid(format!("--centers `{s}`: {e}")))?;
    if centers.is_empty() || centers.iter().any(|c| c.len() != centers[0].len()) {
        bail!(magnitude::Error::invalid(format!("--centers `{s}`: centers need a common dimension")));
    }
    Ok(centers)
}

fn generate(command: &Command, kind: &GenCommand) -> Result<()> {
    let (data, output) = match kind {
        GenCommand::Checkerboard { cells, points, noise, seed, output } => {
            (gen_checkerboard(*cells, *points, *noise, *seed)?, output)
        }
        GenCommand::Mixture { seed, output } => (gen_outlier_mixture(&MixtureSpec::default(), *seed)?.data, output),
        GenCommand::Blobs { centers, std, per_class, seed, output } => {
            (gen_blobs(&parse_centers(centers)?, *std, *per_class, *seed)?, output)
        }
        GenCommand::Moons { per_class, noise, seed, output } => (gen_moons(*per_class, *noise, *seed)?, output),
    };
    write_csv(&data, output).with_context(|| format!("--output {}", output.display()))?;
    emit(command, &None, serde_json::json!({ "points": data.len(), "classes": data.label_names, "output": output }))
}
