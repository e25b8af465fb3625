//! CSV files. Floats are written in shortest round-trip form, so every
//! numeric column parses back to the identical `f64`.

use std::fs::File;
use std::path::Path;

use acl_core::data::synthetic::LabeledVectors;
use acl_core::metrics::{ClassWiseAccuracy, MetricReport};
use acl_core::training::{SweepRow, SweepVariant, TrainRecord};
use acl_core::Matrix;

use crate::error::{LabError, LabResult};

pub const RECORDS_HEADER: [&str; 8] =
    ["epoch", "loss_total", "loss_c", "loss_a", "uniformity", "tolerance", "probe_acc", "wall_ms"];
pub const METRICS_HEADER: [&str; 5] = ["step", "uniformity", "tolerance", "t", "probe_acc"];
pub const SWEEP_HEADER: [&str; 5] = ["value", "variant", "uniformity", "tolerance", "probe_acc"];
pub const CLASSWISE_HEADER: [&str; 3] = ["class", "accuracy", "count"];

/// Shortest decimal that parses back to `v` exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn writer(path: &Path) -> LabResult<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| LabError::output(path, e.into()))
}

fn write_all(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> LabResult<()> {
    let io = |e: csv::Error| LabError::output(path, e.into());
    let mut w = writer(path)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| LabError::output(path, e))
}

/// Header and string rows of a CSV file.
fn read_all(path: &Path) -> LabResult<(Vec<String>, Vec<Vec<String>>)> {
    let bad = |e: csv::Error| LabError::data(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(bad)?;
    let header = r.headers().map_err(bad)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(bad)?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn expect_header(path: &Path, got: &[String], want: &[&str]) -> LabResult<()> {
    if got.iter().map(String::as_str).eq(want.iter().copied()) {
        Ok(())
    } else {
        Err(LabError::data(format!("{}: expected header {}, found {}", path.display(), want.join(","), got.join(","))))
    }
}

/// Typed access to one CSV cell, with row and column in errors.
struct Cells<'a> {
    path: &'a Path,
    line: usize,
    row: &'a [String],
    header: &'a [String],
}

impl Cells<'_> {
    fn raw(&self, col: usize) -> &str {
        self.row.get(col).map_or("", String::as_str)
    }

    fn parse<T: std::str::FromStr>(&self, col: usize) -> LabResult<T> {
        self.raw(col).trim().parse().map_err(|_| {
            let name = self.header.get(col).map_or("?", String::as_str);
            LabError::data(format!(
                "{}:{}: column `{name}`: cannot parse {:?}",
                self.path.display(),
                self.line,
                self.raw(col)
            ))
        })
    }

    fn optional(&self, col: usize) -> LabResult<Option<f64>> {
        if self.raw(col).trim().is_empty() {
            Ok(None)
        } else {
            self.parse(col).map(Some)
        }
    }
}

fn each_row<T>(
    path: &Path,
    header: &[String],
    rows: &[Vec<String>],
    f: impl Fn(&Cells) -> LabResult<T>,
) -> LabResult<Vec<T>> {
    rows.iter()
        .enumerate()
        .map(|(i, row)| f(&Cells { path, line: i + 2, row, header }))
        .collect()
}

pub fn write_records(path: &Path, records: &[TrainRecord]) -> LabResult<()> {
    write_all(
        path,
        &RECORDS_HEADER,
        records.iter().map(|r| {
            vec![
                r.epoch.to_string(),
                fmt_f64(r.loss_total),
                fmt_f64(r.loss_contrastive),
                fmt_f64(r.loss_margin),
                fmt_f64(r.uniformity),
                fmt_f64(r.tolerance),
                fmt_opt(r.probe_acc),
                r.wall_ms.to_string(),
            ]
        }),
    )
}

pub fn read_records(path: &Path) -> LabResult<Vec<TrainRecord>> {
    let (header, rows) = read_all(path)?;
    expect_header(path, &header, &RECORDS_HEADER)?;
    each_row(path, &header, &rows, |c| {
        Ok(TrainRecord {
            epoch: c.parse(0)?,
            loss_total: c.parse(1)?,
            loss_contrastive: c.parse(2)?,
            loss_margin: c.parse(3)?,
            uniformity: c.parse(4)?,
            tolerance: c.parse(5)?,
            probe_acc: c.optional(6)?,
            wall_ms: c.parse(7)?,
        })
    })
}

/// `label,feature_0..feature_{d-1}`; also the format of embedding dumps.
pub fn write_vectors(path: &Path, data: &LabeledVectors) -> LabResult<()> {
    let mut header = vec!["label".to_string()];
    header.extend((0..data.dim()).map(|j| format!("feature_{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_all(
        path,
        &header,
        data.features.iter_rows().zip(&data.labels).map(|(row, label)| {
            let mut out = vec![label.to_string()];
            out.extend(row.iter().map(|&v| fmt_f64(v)));
            out
        }),
    )
}

pub fn read_vectors(path: &Path) -> LabResult<LabeledVectors> {
    let (header, rows) = read_all(path)?;
    let dim = header.len().saturating_sub(1);
    let mut want = vec!["label".to_string()];
    want.extend((0..dim).map(|j| format!("feature_{j}")));
    if dim == 0 || header != want {
        return Err(LabError::data(format!(
            "{}: expected header label,feature_0,...,feature_{{d-1}}",
            path.display()
        )));
    }
    if rows.is_empty() {
        return Err(LabError::data(format!("{}: no rows", path.display())));
    }
    let parsed = each_row(path, &header, &rows, |c| {
        let label: usize = c.parse(0)?;
        let feats = (1..=dim).map(|j| c.parse::<f64>(j)).collect::<LabResult<Vec<f64>>>()?;
        Ok((label, feats))
    })?;
    let labels = parsed.iter().map(|p| p.0).collect();
    let data = parsed.into_iter().flat_map(|p| p.1).collect();
    let features = Matrix::new(rows.len(), dim, data)
        .map_err(|e| LabError::data(format!("{}: {e}", path.display())))?;
    LabeledVectors::new(features, labels).map_err(|e| LabError::data(format!("{}: {e}", path.display())))
}

pub fn write_metric_reports(path: &Path, reports: &[MetricReport]) -> LabResult<()> {
    write_all(
        path,
        &METRICS_HEADER,
        reports.iter().map(|r| {
            vec![r.step.to_string(), fmt_f64(r.uniformity), fmt_f64(r.tolerance), fmt_f64(r.t), fmt_opt(r.probe_acc)]
        }),
    )
}

/// `(step, uniformity, tolerance, t, probe_acc)` rows.
pub fn read_metric_reports(path: &Path) -> LabResult<Vec<(usize, f64, f64, f64, Option<f64>)>> {
    let (header, rows) = read_all(path)?;
    expect_header(path, &header, &METRICS_HEADER)?;
    each_row(path, &header, &rows, |c| Ok((c.parse(0)?, c.parse(1)?, c.parse(2)?, c.parse(3)?, c.optional(4)?)))
}

fn variant_name(v: SweepVariant) -> &'static str {
    match v {
        SweepVariant::Acl => "acl",
        SweepVariant::Baseline => "baseline",
    }
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> LabResult<()> {
    write_all(
        path,
        &SWEEP_HEADER,
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.value),
                variant_name(r.variant).to_string(),
                fmt_f64(r.uniformity),
                fmt_f64(r.tolerance),
                fmt_f64(r.probe_acc),
            ]
        }),
    )
}

pub fn read_sweep(path: &Path) -> LabResult<Vec<SweepRow>> {
    let (header, rows) = read_all(path)?;
    expect_header(path, &header, &SWEEP_HEADER)?;
    each_row(path, &header, &rows, |c| {
        let variant = match c.raw(1) {
            "acl" => SweepVariant::Acl,
            "baseline" => SweepVariant::Baseline,
            other => return Err(LabError::data(format!("{}:{}: unknown variant {other:?}", path.display(), c.line))),
        };
        Ok(SweepRow {
            value: c.parse(0)?,
            variant,
            uniformity: c.parse(2)?,
            tolerance: c.parse(3)?,
            probe_acc: c.parse(4)?,
        })
    })
}

/// One row per class present in the ground truth.
pub fn write_classwise(path: &Path, acc: &ClassWiseAccuracy, truth: &[usize]) -> LabResult<()> {
    write_all(
        path,
        &CLASSWISE_HEADER,
        acc.per_class.iter().map(|(&class, &a)| {
            let count = truth.iter().filter(|&&t| t == class).count();
            vec![class.to_string(), fmt_f64(a), count.to_string()]
        }),
    )
}
