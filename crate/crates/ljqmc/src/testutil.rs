//! Shared helpers for unit tests.

use nalgebra::DMatrix;
use rand::Rng;

use crate::geometry::{gram_matrix, pair_distances, Configuration};

/// Random nondegenerate configuration with all pair distances >= 0.55 so
/// that LJ-adapted wavefunctions stay in range.
pub fn random_config(rng: &mut impl Rng, n: usize, d: usize) -> Configuration {
    let half = 0.9 + 0.25 * n as f64;
    loop {
        let m = DMatrix::from_fn(d, n, |_, _| rng.gen_range(-half..half));
        let c = Configuration::new(m).unwrap();
        if let Ok(ds) = pair_distances(&c) {
            if ds.as_slice().iter().all(|&r| r >= 0.55) {
                return c;
            }
        }
    }
}

/// As `random_config`, but additionally well separated from collinearity:
/// the pivot Grammian is kept well conditioned so relative tolerances on
/// omega and its gradients are meaningful.
pub fn random_realizable_config(rng: &mut impl Rng, n: usize, d: usize) -> Configuration {
    loop {
        let c = random_config(rng, n, d);
        let ds = pair_distances(&c).unwrap();
        let g = gram_matrix(&ds, 0);
        let eig = g.symmetric_eigenvalues();
        let max = eig.iter().cloned().fold(0.0_f64, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if min >= 5e-3 * max {
            return c;
        }
    }
}
