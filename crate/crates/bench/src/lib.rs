//! Shared inputs for the estimator benchmarks.

use gapdecomp::synth::{generate, SyntheticDgp};
use gapdecomp::{Dataset, RoleMap};

/// Two controls, one mediator, confounded group assignment.
pub fn mediation_sample(n: usize) -> (Dataset, RoleMap) {
    let dgp = SyntheticDgp {
        dim_w: 2,
        gamma: vec![0.5, -0.3],
        delta: vec![vec![0.4], vec![0.2]],
        kappa: vec![0.5, 0.5],
        ..SyntheticDgp::simple(n, 1.0, 0.5, 2.0, 7)
    };
    let data = generate(&dgp).expect("valid benchmark design");
    (data, dgp.roles())
}
