mod common;

use acl_core::metrics::MetricReport;
use acl_core::training::{SweepRow, SweepVariant, TrainRecord};
use acl_lab::tables;
use common::*;
use proptest::prelude::*;

fn any_f64() -> impl Strategy<Value = f64> {
    any::<u64>().prop_map(f64::from_bits).prop_filter("NaN has many encodings", |v| !v.is_nan())
}

fn same_bits(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn configs_round_trip(cfg in arb_config()) {
        prop_assert_eq!(config_round_trip(&cfg), Ok(()));
    }

    #[test]
    fn checkpoints_round_trip(tensors in arb_tensors()) {
        let dir = tempfile::tempdir().unwrap();
        prop_assert_eq!(checkpoint_round_trip(dir.path(), &tensors), Ok(()));
    }

    #[test]
    fn records_round_trip(rows in prop::collection::vec((0usize..1000, any_f64(), any_f64(), any_f64(), any_f64(), any_f64(), prop::option::of(any_f64()), any::<u64>()), 0..20)) {
        let records: Vec<TrainRecord> = rows.into_iter().map(|(epoch, a, b, c, d, e, p, w)| TrainRecord {
            epoch, loss_total: a, loss_contrastive: b, loss_margin: c, uniformity: d, tolerance: e, probe_acc: p, wall_ms: w,
        }).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        tables::write_records(&path, &records).unwrap();
        let back = tables::read_records(&path).unwrap();
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            prop_assert_eq!(a.epoch, b.epoch);
            prop_assert_eq!(a.wall_ms, b.wall_ms);
            for (x, y) in [(a.loss_total, b.loss_total), (a.loss_contrastive, b.loss_contrastive), (a.loss_margin, b.loss_margin), (a.uniformity, b.uniformity), (a.tolerance, b.tolerance)] {
                prop_assert!(same_bits(x, y), "{} vs {}", x, y);
            }
            prop_assert_eq!(a.probe_acc.map(f64::to_bits), b.probe_acc.map(f64::to_bits));
        }
    }

    #[test]
    fn vectors_round_trip(dim in 1usize..6, data in prop::collection::vec(any_f64().prop_filter("finite", |v| v.is_finite()), 1..60)) {
        let rows = data.len() / dim;
        prop_assume!(rows > 0);
        let features = acl_core::Matrix::new(rows, dim, data[..rows * dim].to_vec()).unwrap();
        let labels: Vec<usize> = (0..rows).map(|i| i % 3).collect();
        let v = acl_core::data::synthetic::LabeledVectors::new(features, labels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        tables::write_vectors(&path, &v).unwrap();
        let back = tables::read_vectors(&path).unwrap();
        prop_assert_eq!(back.labels, v.labels);
        prop_assert!(back.features.as_slice().iter().zip(v.features.as_slice()).all(|(a, b)| same_bits(*a, *b)));
    }

    #[test]
    fn sweep_and_metric_tables_round_trip(vals in prop::collection::vec((any_f64(), any::<bool>(), any_f64(), any_f64(), any_f64()), 0..10), step in any::<usize>(), u in any_f64(), t in any_f64()) {
        let rows: Vec<SweepRow> = vals.into_iter().map(|(value, acl, uniformity, tolerance, probe_acc)| SweepRow {
            value, variant: if acl { SweepVariant::Acl } else { SweepVariant::Baseline }, uniformity, tolerance, probe_acc,
        }).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep_tau.csv");
        tables::write_sweep(&path, &rows).unwrap();
        let back = tables::read_sweep(&path).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            prop_assert_eq!(a.variant, b.variant);
            prop_assert!(same_bits(a.value, b.value) && same_bits(a.uniformity, b.uniformity));
            prop_assert!(same_bits(a.tolerance, b.tolerance) && same_bits(a.probe_acc, b.probe_acc));
        }
        let report = MetricReport { step, uniformity: u, tolerance: t, t: 2.0, n_samples: 3, probe_acc: None };
        let path = dir.path().join("metrics.csv");
        tables::write_metric_reports(&path, &[report]).unwrap();
        let got = tables::read_metric_reports(&path).unwrap();
        prop_assert_eq!(got.len(), 1);
        prop_assert_eq!(got[0].0, step);
        prop_assert!(same_bits(got[0].1, u) && same_bits(got[0].2, t) && got[0].4.is_none());
    }
}
