//! Boundary identities of the combined loss and pinned trivial values.

use std::f64::consts::FRAC_PI_2;

use acl_core::losses::{self, build_pair_relation, LossConfig, PairBatch, PairRelation};
use acl_core::metrics::{self, LabeledEmbeddings, ToleranceNorm};
use acl_core::{CounterRng, Matrix};

use super::*;

pub const TOL: f64 = 1e-12;

fn max_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &Matrix) -> f64 {
    a.as_slice().iter().map(|x| x.abs()).fold(0.0, f64::max)
}

fn within(what: &str, case: usize, err: f64) -> Result<(), String> {
    if err <= TOL {
        Ok(())
    } else {
        Err(format!("{what} batch {case}: off by {err:e}"))
    }
}

/// `acl` at `α = 1` against `nt_xent` and at `α = 0` against
/// `angular_margin`, value and gradients.
pub fn alpha_endpoints(batches: usize) -> Result<usize, String> {
    let mut rng = CounterRng::new(301);
    for case in 0..batches {
        let n = rng.inclusive(1, 8);
        let d = rng.inclusive(2, 16);
        let tau = rng.uniform_range(0.05, 1.0);
        let batch = PairBatch::new(
            matrix_of(&random_rows(&mut rng, 2 * n, d)),
            matrix_of(&random_rows(&mut rng, 2 * n, d)),
        )
        .unwrap();
        let rel: PairRelation = build_pair_relation(n);

        let c = losses::acl(&batch, &rel, &LossConfig::new(tau, FRAC_PI_2, 1.0).unwrap()).unwrap();
        let nt = losses::nt_xent(&batch, tau).unwrap();
        within("alpha=1 value", case, (c.value - nt.value).abs())?;
        within("alpha=1 grad_z", case, max_diff(&c.grad_z, &nt.grad))?;
        within("alpha=1 grad_h", case, max_abs(&c.grad_h))?;

        let a = losses::acl(&batch, &rel, &LossConfig::new(tau, FRAC_PI_2, 0.0).unwrap()).unwrap();
        let am = losses::angular_margin(batch.h(), &rel, FRAC_PI_2).unwrap();
        within("alpha=0 value", case, (a.value - am.value).abs())?;
        within("alpha=0 grad_h", case, max_diff(&a.grad_h, &am.grad))?;
        within("alpha=0 grad_z", case, max_abs(&a.grad_z))?;
    }
    Ok(batches)
}

/// Closed-form values: NT-Xent with a single pair, uniformity and tolerance
/// of identical rows, and a margin loss whose negatives are orthogonal.
pub fn trivial_values() -> Result<(), String> {
    let pin = |what: &str, got: f64, want: f64| {
        if (got - want).abs() <= TOL {
            Ok(())
        } else {
            Err(format!("{what}: {got} vs {want}"))
        }
    };
    let mut rng = CounterRng::new(302);
    for _ in 0..10 {
        let z = matrix_of(&random_rows(&mut rng, 2, 5));
        let b = PairBatch::new(z.clone(), z).unwrap();
        pin("nt_xent(N=1)", losses::nt_xent(&b, 0.2).unwrap().value, 0.0)?;

        let row = random_rows(&mut rng, 1, 6).remove(0);
        let same = matrix_of(&vec![row; 9]);
        let emb = LabeledEmbeddings::new(&same, vec![3; 9]).unwrap();
        pin("uniformity(identical)", metrics::uniformity(&emb, 2.0).unwrap(), 0.0)?;
        for norm in [ToleranceNorm::AllPairs, ToleranceNorm::SameClassPairs] {
            pin("tolerance(identical)", metrics::tolerance(&emb, norm).unwrap(), 1.0)?;
        }
    }
    // Two items, both views equal, items orthogonal.
    let h = matrix_of(&vec![
        vec![2.0, 0.0, 0.0],
        vec![2.0, 0.0, 0.0],
        vec![0.0, 0.5, 0.0],
        vec![0.0, 0.5, 0.0],
    ]);
    let r = losses::angular_margin(&h, &build_pair_relation(2), FRAC_PI_2).unwrap();
    pin("orthogonal negatives at pi/2", r.value, 0.0)?;
    pin("orthogonal negatives gradient", max_abs(&r.grad), 0.0)?;
    Ok(())
}
