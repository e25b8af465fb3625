//! The five commands, callable without the argument parser.

use std::path::{Path, PathBuf};
use std::time::Instant;

use acl_core::encoder::{self, EncoderParams, Mode};
use acl_core::metrics::{self, LabeledEmbeddings, MetricReport, ToleranceNorm};
use acl_core::training::{
    self, embed, EmbeddingSpace, ExperimentConfig, RunMode, Split, SupervisedModel, SweepAxis, TrainObserver,
    TrainRecord,
};
use acl_core::Matrix;
use rayon::prelude::*;

use crate::error::{from_core, LabError, LabResult};
use crate::manifest::{self, RunManifest};
use crate::{checkpoint_file, config, dataset, tables};

pub const RECORDS_CSV: &str = "records.csv";
pub const CHECKPOINT: &str = "checkpoint.acl";
pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.toml";
pub const EMBEDDINGS_CSV: &str = "embeddings.csv";
pub const CLASSWISE_CSV: &str = "probe_classwise.csv";

/// Overrides allowed on the command line; everything else comes from the
/// config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

struct Loaded {
    cfg: ExperimentConfig,
    base: PathBuf,
    out: PathBuf,
}

fn load(config_path: &Path, o: &Overrides) -> LabResult<Loaded> {
    let mut cfg = config::load(config_path)?;
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &o.output_dir {
        cfg.output_dir = dir.display().to_string();
    }
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&out).map_err(|e| LabError::output(&out, e))?;
    Ok(Loaded { cfg, base, out })
}

fn write_text(path: &Path, text: &str) -> LabResult<()> {
    std::fs::write(path, text).map_err(|e| LabError::output(path, e))
}

fn shown(path: &Path) -> String {
    path.display().to_string()
}

/// Writes the train and test splits as CSV.
pub fn gen_data(config_path: &Path, o: &Overrides) -> LabResult<Vec<PathBuf>> {
    let l = load(config_path, o)?;
    let corpus = dataset::corpus(&l.cfg, &l.base)?;
    dataset::write_splits(&corpus, &l.out)?;
    let files = vec![l.out.join(dataset::TRAIN_CSV), l.out.join(dataset::TEST_CSV)];
    println!(
        "wrote {} train and {} test samples ({} features) to {}",
        corpus.len(Split::Train),
        corpus.len(Split::Test),
        corpus.d_in(),
        l.out.display()
    );
    Ok(files)
}

/// Prints probed epochs and supplies wall-clock time.
struct Progress {
    start: Instant,
}

impl TrainObserver for Progress {
    fn elapsed_ms(&mut self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    fn on_record(&mut self, r: &TrainRecord) {
        if let Some(acc) = r.probe_acc {
            println!(
                "epoch {:>4}  loss {:.5}  uniformity {:.4}  tolerance {:.4}  acc {:.4}",
                r.epoch, r.loss_total, r.uniformity, r.tolerance, acc
            );
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub output_dir: PathBuf,
    pub final_record: TrainRecord,
}

/// Test-split embeddings in the configured metric space.
fn test_embeddings(cfg: &ExperimentConfig, params: &EncoderParams, corpus: &training::Corpus) -> LabResult<Matrix> {
    let (h, z) = embed(params, corpus, Split::Test).map_err(|e| from_core("embedding", e))?;
    Ok(match cfg.metrics.space {
        EmbeddingSpace::H => h,
        EmbeddingSpace::Z => z,
    })
}

/// Trains, then writes records, checkpoint, test embeddings, config echo
/// and manifest to the output directory.
pub fn train(config_path: &Path, o: &Overrides) -> LabResult<TrainOutcome> {
    let started = manifest::now_unix_ms();
    let l = load(config_path, o)?;
    let cfg = &l.cfg;
    let corpus = dataset::corpus(cfg, &l.base)?;
    let mut progress = Progress { start: Instant::now() };
    let (records, tensors, emb) = match cfg.mode {
        RunMode::Ssl => {
            let run = training::train_ssl_observed(cfg, &corpus, &mut progress).map_err(|e| from_core("train", e))?;
            let emb = test_embeddings(cfg, &run.params, &corpus)?;
            (run.records, run.params.to_tensors(), emb)
        }
        RunMode::Supervised => {
            let run = training::train_supervised_observed(cfg, &corpus, &mut progress)
                .map_err(|e| from_core("train", e))?;
            let (_, h) = run.model.logits(&corpus.features(Split::Test)).map_err(|e| from_core("embedding", e))?;
            (run.records, run.model.to_tensors(), h)
        }
    };
    let records_path = l.out.join(RECORDS_CSV);
    let ckpt_path = l.out.join(CHECKPOINT);
    let emb_path = l.out.join(EMBEDDINGS_CSV);
    let echo_path = l.out.join(CONFIG_ECHO);
    tables::write_records(&records_path, &records)?;
    checkpoint_file::save(&ckpt_path, &tensors)?;
    let labeled = acl_core::data::synthetic::LabeledVectors::new(emb, corpus.labels(Split::Test).to_vec())
        .map_err(|e| from_core("embedding", e))?;
    tables::write_vectors(&emb_path, &labeled)?;
    write_text(&echo_path, &config::to_toml(cfg)?)?;
    let final_record = records.last().cloned().ok_or_else(|| LabError::data("no records"))?;
    let m = RunManifest {
        command: "train".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_ms: started,
        finished_unix_ms: manifest::now_unix_ms(),
        config: cfg.clone(),
        final_metrics: Some(final_record.clone()),
        checkpoint: Some(shown(&ckpt_path)),
        artifacts: [&records_path, &emb_path, &echo_path].iter().map(|p| shown(p)).collect(),
        artifact_choices: manifest::artifact_choices(cfg),
    };
    manifest::write(&l.out.join(MANIFEST), &m)?;
    println!(
        "final: loss {:.6}  uniformity {:.6}  tolerance {:.6}  probe_acc {}",
        final_record.loss_total,
        final_record.uniformity,
        final_record.tolerance,
        final_record.probe_acc.map_or("-".to_string(), |a| format!("{a:.4}"))
    );
    println!("wrote {}", l.out.display());
    Ok(TrainOutcome { output_dir: l.out, final_record })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub accuracy: f64,
    pub per_class: Vec<(usize, f64)>,
    pub classwise_csv: PathBuf,
}

/// Default probe settings, used when no config accompanies a checkpoint.
fn probe_settings() -> (usize, f64) {
    let m = acl_core::training::MetricsConfig::default();
    (m.probe_epochs, m.probe_lr)
}

/// Scores a checkpoint on a dataset directory. Checkpoints with a
/// classifier are scored directly; encoder-only checkpoints get a linear
/// probe on `h`, fit on the train split.
pub fn probe(checkpoint: &Path, dataset_dir: &Path, output_dir: &Path) -> LabResult<ProbeOutcome> {
    let tensors = checkpoint_file::load(checkpoint)?;
    let ckpt = shown(checkpoint);
    let encoder = EncoderParams::from_tensors(&tensors).map_err(|e| from_core(&ckpt, e))?;
    let (train, test) = dataset::read_splits(dataset_dir, encoder.d_in())?;
    for split in [&train, &test] {
        if split.dim() != encoder.d_in() {
            return Err(LabError::data(format!(
                "{}: {} features, checkpoint expects {}",
                dataset_dir.display(),
                split.dim(),
                encoder.d_in()
            )));
        }
    }
    let predictions = match SupervisedModel::from_tensors(&tensors).map_err(|e| from_core(&ckpt, e))? {
        Some(model) => model.predict(&test.features).map_err(|e| from_core("probe", e))?,
        None => {
            let h = |x: &Matrix| -> LabResult<Matrix> {
                Ok(encoder::forward(&encoder, x, Mode::Eval).map_err(|e| from_core("probe", e))?.h)
            };
            let tr = LabeledEmbeddings::new(&h(&train.features)?, train.labels.clone()).map_err(|e| from_core("probe", e))?;
            let te = LabeledEmbeddings::new(&h(&test.features)?, test.labels.clone()).map_err(|e| from_core("probe", e))?;
            let (epochs, lr) = probe_settings();
            metrics::linear_probe(&tr, &te, epochs, lr).map_err(|e| from_core("probe", e))?.predictions
        }
    };
    let acc = metrics::class_wise_accuracy(&predictions, &test.labels).map_err(|e| from_core("probe", e))?;
    let correct = predictions.iter().zip(&test.labels).filter(|(p, t)| p == t).count();
    let accuracy = correct as f64 / test.labels.len() as f64;
    std::fs::create_dir_all(output_dir).map_err(|e| LabError::output(output_dir, e))?;
    let classwise_csv = output_dir.join(CLASSWISE_CSV);
    tables::write_classwise(&classwise_csv, &acc, &test.labels)?;
    println!("accuracy {accuracy:.4} on {} test samples", test.labels.len());
    for (c, a) in &acc.per_class {
        println!("  class {c:>3}: {a:.4}");
    }
    Ok(ProbeOutcome { accuracy, per_class: acc.per_class.into_iter().collect(), classwise_csv })
}

/// Uniformity and tolerance of a `label,feature_*` embedding file.
pub fn metrics_report(embeddings: &Path, t: f64, norm: ToleranceNorm, output: &Path) -> LabResult<MetricReport> {
    let data = tables::read_vectors(embeddings)?;
    let emb = LabeledEmbeddings::new(&data.features, data.labels).map_err(|e| from_core("metrics", e))?;
    let report = MetricReport::compute(&emb, t, norm, 0).map_err(|e| match e {
        acl_core::Error::Config { .. } => from_core("--t", e),
        other => from_core(&shown(embeddings), other),
    })?;
    tables::write_metric_reports(output, &[report])?;
    println!(
        "uniformity {}  tolerance {}  (t = {t}, n = {})",
        tables::fmt_f64(report.uniformity),
        tables::fmt_f64(report.tolerance),
        report.n_samples
    );
    Ok(report)
}

pub fn sweep_file_name(axis: SweepAxis) -> String {
    format!("sweep_{}.csv", axis.name())
}

/// One full run per (value, variant), in parallel; rows keep the input order.
pub fn sweep(config_path: &Path, o: &Overrides, axis: SweepAxis, values: &[f64]) -> LabResult<PathBuf> {
    let started = manifest::now_unix_ms();
    let l = load(config_path, o)?;
    let corpus = dataset::corpus(&l.cfg, &l.base)?;
    let points = training::sweep_points(&l.cfg, axis, values).map_err(|e| from_core("sweep", e))?;
    let rows = points
        .par_iter()
        .map(|p| training::run_sweep_point(p, &corpus).map_err(|e| from_core(&format!("sweep {} = {}", axis.name(), p.value), e)))
        .collect::<LabResult<Vec<_>>>()?;
    let path = l.out.join(sweep_file_name(axis));
    tables::write_sweep(&path, &rows)?;
    for r in &rows {
        println!(
            "{} = {:<6} {:<8} uniformity {:.4}  tolerance {:.4}  acc {:.4}",
            axis.name(),
            r.value,
            format!("{:?}", r.variant).to_lowercase(),
            r.uniformity,
            r.tolerance,
            r.probe_acc
        );
    }
    let m = RunManifest {
        command: format!("sweep {} {:?}", axis.name(), values),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_ms: started,
        finished_unix_ms: manifest::now_unix_ms(),
        config: l.cfg.clone(),
        final_metrics: None,
        checkpoint: None,
        artifacts: vec![shown(&path)],
        artifact_choices: manifest::artifact_choices(&l.cfg),
    };
    manifest::write(&l.out.join(MANIFEST), &m)?;
    Ok(path)
}
