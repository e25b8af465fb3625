//! Library values against naive enumeration. Each suite returns the number
//! of instances compared, or the first mismatch beyond `1e-10`.

use std::f64::consts::PI;

use acl_core::losses::{self, build_pair_relation, LossConfig, PairBatch};
use acl_core::metrics::{self, LabeledEmbeddings, ToleranceNorm};
use acl_core::CounterRng;

use super::*;

pub const TOL: f64 = 1e-10;

fn compare(what: &str, case: usize, ours: f64, naive: f64) -> Result<(), String> {
    if (ours - naive).abs() <= TOL {
        Ok(())
    } else {
        Err(format!("{what} case {case}: {ours} vs naive {naive}"))
    }
}

pub fn losses(cases: usize) -> Result<usize, String> {
    let mut rng = CounterRng::new(201);
    for case in 0..cases {
        let n = rng.inclusive(1, 4);
        let d = rng.inclusive(2, 4);
        let tau = rng.uniform_range(0.1, 2.0);
        let margin = rng.uniform_range(0.2, PI);
        let alpha = rng.uniform();
        let z = random_rows(&mut rng, 2 * n, d);
        let h = random_rows(&mut rng, 2 * n, d);
        let batch = PairBatch::new(matrix_of(&z), matrix_of(&h)).unwrap();
        let rel = build_pair_relation(n);
        compare("nt_xent", case, losses::nt_xent(&batch, tau).unwrap().value, naive_nt_xent(&z, tau))?;
        compare(
            "angular_margin",
            case,
            losses::angular_margin(&matrix_of(&h), &rel, margin).unwrap().value,
            naive_margin(&h, &pair_positive, margin),
        )?;
        let cfg = LossConfig::new(tau, margin, alpha).unwrap();
        compare("acl", case, losses::acl(&batch, &rel, &cfg).unwrap().value, naive_acl(&z, &h, tau, margin, alpha))?;

        let rows = 2 * n;
        let classes = rng.inclusive(2, 4);
        let y: Vec<usize> = (0..rows).map(|_| rng.below(classes as u64) as usize).collect();
        let logits = random_rows(&mut rng, rows, classes);
        compare(
            "cross_entropy",
            case,
            losses::cross_entropy(&matrix_of(&logits), &y).unwrap().value,
            naive_cross_entropy(&logits, &y),
        )?;
        compare(
            "supervised_combined",
            case,
            losses::supervised_combined(&matrix_of(&logits), &matrix_of(&h), &y, &cfg).unwrap().value,
            naive_supervised(&logits, &h, &y, margin, alpha),
        )?;
    }
    Ok(cases)
}

pub fn metrics(cases: usize) -> Result<usize, String> {
    let mut rng = CounterRng::new(202);
    for case in 0..cases {
        let n = rng.inclusive(2, 64);
        let d = rng.inclusive(2, 8);
        let classes = rng.inclusive(1, 5);
        let t = rng.uniform_range(0.5, 4.0);
        let z = random_rows(&mut rng, n, d);
        let y: Vec<usize> = (0..n).map(|_| rng.below(classes as u64) as usize).collect();
        let emb = LabeledEmbeddings::new(&matrix_of(&z), y.clone()).unwrap();
        compare("uniformity", case, metrics::uniformity(&emb, t).unwrap(), naive_uniformity(&z, t))?;
        compare(
            "tolerance",
            case,
            metrics::tolerance(&emb, ToleranceNorm::AllPairs).unwrap(),
            naive_tolerance(&z, &y, false),
        )?;
        compare(
            "tolerance (same-class)",
            case,
            metrics::tolerance(&emb, ToleranceNorm::SameClassPairs).unwrap(),
            naive_tolerance(&z, &y, true),
        )?;
    }
    Ok(cases)
}
