//! Cartesian configurations, inter-particle distances, difference-vector
//! Grammians and angle cosines: the coordinate substrate shared by the
//! stochastic engine and the exact dimensional transformation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Two atoms closer than this (in LJ length units) count as coincident.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Relative eigenvalue threshold for the realizability check of a Grammian.
pub const REALIZABILITY_TOL: f64 = 1e-9;

/// Cluster identity: particle count, spatial dimension and inverse mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub n_atoms: usize,
    pub dim: usize,
    pub inv_mass: f64,
    pub species_label: String,
}

impl ClusterSpec {
    pub fn new(n_atoms: usize, dim: usize, inv_mass: f64, species_label: &str) -> Result<Self> {
        if n_atoms < 2 {
            return Err(Error::Validation(format!("n_atoms must be >= 2, got {n_atoms}")));
        }
        if dim < 1 {
            return Err(Error::Validation("dim must be >= 1".into()));
        }
        if !(inv_mass > 0.0) {
            return Err(Error::Validation(format!("inv_mass must be > 0, got {inv_mass}")));
        }
        Ok(ClusterSpec { n_atoms, dim, inv_mass, species_label: species_label.to_string() })
    }

    /// Dimensionless mass m = 1 / (1/m).
    pub fn mass(&self) -> f64 {
        1.0 / self.inv_mass
    }
}

/// One cluster geometry: a D x N matrix whose columns are atom positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    coords: DMatrix<f64>,
}

impl Configuration {
    pub fn new(coords: DMatrix<f64>) -> Result<Self> {
        if coords.ncols() == 0 || coords.nrows() == 0 {
            return Err(Error::Validation("configuration must be a D x N matrix with D, N >= 1".into()));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("configuration contains non-finite coordinates".into()));
        }
        Ok(Configuration { coords })
    }

    pub fn from_columns(dim: usize, cols: &[Vec<f64>]) -> Result<Self> {
        let n = cols.len();
        let mut m = DMatrix::zeros(dim, n);
        for (j, c) in cols.iter().enumerate() {
            if c.len() != dim {
                return Err(Error::Validation("column length does not match dimension".into()));
            }
            for (a, &x) in c.iter().enumerate() {
                m[(a, j)] = x;
            }
        }
        Configuration::new(m)
    }

    pub fn dim(&self) -> usize {
        self.coords.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.coords.ncols()
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.coords
    }

    pub fn atom(&self, i: usize) -> DVector<f64> {
        self.coords.column(i).into_owned()
    }
}

/// Index of the unordered pair (i, j), i < j, in the flat upper-triangular
/// layout used by every module that touches distances.
#[inline]
pub fn pair_index(n_atoms: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n_atoms);
    i * n_atoms - i * (i + 1) / 2 + (j - i - 1)
}

/// Number of unordered pairs for `n_atoms`.
#[inline]
pub fn n_pairs(n_atoms: usize) -> usize {
    n_atoms * (n_atoms - 1) / 2
}

/// Inverse of `pair_index`: the (i, j) pair, i < j, for a flat index.
pub fn pair_atoms(n_atoms: usize, mut idx: usize) -> (usize, usize) {
    for i in 0..n_atoms - 1 {
        let row = n_atoms - 1 - i;
        if idx < row {
            return (i, i + 1 + idx);
        }
        idx -= row;
    }
    panic!("pair index out of range");
}

/// All N(N-1)/2 pairwise distances of a cluster, flat upper-triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSet {
    n_atoms: usize,
    r: Vec<f64>,
}

impl DistanceSet {
    /// Build from raw distances (flat upper-triangular order). A standalone
    /// set must pass the realizability check before use in dimsym-core.
    pub fn from_raw(n_atoms: usize, r: Vec<f64>) -> Result<Self> {
        if r.len() != n_pairs(n_atoms) {
            return Err(Error::Validation(format!(
                "expected {} distances for {} atoms, got {}",
                n_pairs(n_atoms),
                n_atoms,
                r.len()
            )));
        }
        for (p, &d) in r.iter().enumerate() {
            if !(d > DEGENERACY_TOL) {
                let (i, j) = pair_atoms(n_atoms, p);
                return Err(Error::DegenerateConfiguration(i, j, d));
            }
        }
        Ok(DistanceSet { n_atoms, r })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i != j);
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.r[pair_index(self.n_atoms, a, b)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.r
    }
}

/// All pairwise Euclidean distances of a configuration.
pub fn pair_distances(config: &Configuration) -> Result<DistanceSet> {
    let n = config.n_atoms();
    let mut r = Vec::with_capacity(n_pairs(n));
    for i in 0..n {
        for j in i + 1..n {
            let d = (config.coords.column(j) - config.coords.column(i)).norm();
            if d <= DEGENERACY_TOL {
                return Err(Error::DegenerateConfiguration(i, j, d));
            }
            r.push(d);
        }
    }
    DistanceSet::from_raw(n, r)
}

/// Angle cosine g_{i;jk} = (r_ij^2 + r_ik^2 - r_jk^2) / (2 r_ij r_ik)
/// by the law of cosines; g_{i;jj} = 1.
pub fn cos_angle(dists: &DistanceSet, i: usize, j: usize, k: usize) -> f64 {
    debug_assert!(i != j && i != k);
    if j == k {
        return 1.0;
    }
    let rij = dists.get(i, j);
    let rik = dists.get(i, k);
    let rjk = dists.get(j, k);
    (rij * rij + rik * rik - rjk * rjk) / (2.0 * rij * rik)
}

/// Grammian of the N-1 difference vectors from the pivot atom:
/// entry (j, k) is r_ij g_{i;jk} r_ik = (r_ij^2 + r_ik^2 - r_jk^2) / 2.
pub fn gram_matrix(dists: &DistanceSet, pivot: usize) -> DMatrix<f64> {
    let n = dists.n_atoms();
    debug_assert!(pivot < n);
    let others: Vec<usize> = (0..n).filter(|&a| a != pivot).collect();
    let m = others.len();
    let mut g = DMatrix::zeros(m, m);
    for (a, &j) in others.iter().enumerate() {
        for (b, &k) in others.iter().enumerate() {
            if j == k {
                let r = dists.get(pivot, j);
                g[(a, b)] = r * r;
            } else {
                let rij = dists.get(pivot, j);
                let rik = dists.get(pivot, k);
                let rjk = dists.get(j, k);
                g[(a, b)] = (rij * rij + rik * rik - rjk * rjk) / 2.0;
            }
        }
    }
    g
}

/// Grammian determinant omega: the squared volume of the parallelepiped
/// spanned by the difference vectors from the pivot; pivot-independent.
/// Computed through a symmetric eigendecomposition so that unrealizable
/// distance sets (a genuinely negative eigenvalue) are detected.
pub fn gram_det(dists: &DistanceSet, pivot: usize) -> Result<f64> {
    let g = gram_matrix(dists, pivot);
    let eig = g.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -REALIZABILITY_TOL * max {
        return Err(Error::UnrealizableDistances { min, max });
    }
    let det: f64 = eig.iter().product();
    Ok(det.max(0.0))
}

/// Gradient of omega with respect to the pivot distances r_{pivot,j}:
/// d omega / d r_{pivot,j} = 2 r_{pivot,j} * sum_k C_{kj}, with C the
/// cofactor matrix of the Grammian. Returned in the order of non-pivot
/// atoms ascending. All other distances are held fixed.
pub fn grad_omega_pivot(dists: &DistanceSet, pivot: usize) -> Vec<f64> {
    let n = dists.n_atoms();
    let g = gram_matrix(dists, pivot);
    let cof = cofactor_matrix(&g);
    let others: Vec<usize> = (0..n).filter(|&a| a != pivot).collect();
    others
        .iter()
        .enumerate()
        .map(|(a, &j)| {
            let col_sum: f64 = (0..others.len()).map(|b| cof[(b, a)]).sum();
            2.0 * dists.get(pivot, j) * col_sum
        })
        .collect()
}

/// Cofactor matrix of a small square matrix, by minors. Sizes here are
/// at most N-1, so the O(n^5) cost is irrelevant.
pub fn cofactor_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let minor = m.clone().remove_row(i).remove_column(j);
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            c[(i, j)] = sign * minor.determinant();
        }
    }
    c
}

/// First and second partial derivatives of a scalar function of the
/// pairwise distances, in the flat pair layout of `pair_index`.
#[derive(Debug, Clone)]
pub struct RadialDerivs {
    /// dL / dr_p, one entry per pair.
    pub d1: Vec<f64>,
    /// d2 L / dr_p dr_q, symmetric, pairs x pairs.
    pub d2: DMatrix<f64>,
}

impl RadialDerivs {
    pub fn zeros(n_atoms: usize) -> Self {
        let p = n_pairs(n_atoms);
        RadialDerivs { d1: vec![0.0; p], d2: DMatrix::zeros(p, p) }
    }
}

/// Cartesian gradient of a distance function L: component (alpha, i) is
/// sum_{j != i} (x_{alpha,i} - x_{alpha,j}) / r_ij * dL/dr_ij.
pub fn grad_cartesian(config: &Configuration, dists: &DistanceSet, d1: &[f64]) -> DMatrix<f64> {
    let n = config.n_atoms();
    let d = config.dim();
    let mut g = DMatrix::zeros(d, n);
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            let p = pair_index(n, a, b);
            let r = dists.get(i, j);
            let coef = d1[p] / r;
            for alpha in 0..d {
                g[(alpha, i)] += coef * (config.coords[(alpha, i)] - config.coords[(alpha, j)]);
            }
        }
    }
    g
}

/// Per-atom kinetic ingredients of a distance function L, via the chain
/// rule over the pairs containing the atom:
///   lap_i   = sum_{j != i} (D-1)/r_ij dL/dr_ij
///           + sum_{j,k != i} g_{i;jk} d2L/dr_ij dr_ik
///   grad2_i = sum_{j,k != i} g_{i;jk} dL/dr_ij dL/dr_ik
/// Returns (lap_i, grad2_i) per atom. `dim` may differ from the embedding
/// dimension of a Configuration only in tests.
pub fn atom_kinetic_terms(dists: &DistanceSet, dim: usize, derivs: &RadialDerivs) -> Vec<(f64, f64)> {
    let n = dists.n_atoms();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut lap = 0.0;
        let mut grad2 = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            let p = pair_index(n, a, b);
            lap += (dim as f64 - 1.0) / dists.get(i, j) * derivs.d1[p];
            for k in 0..n {
                if k == i {
                    continue;
                }
                let (c, e) = if i < k { (i, k) } else { (k, i) };
                let q = pair_index(n, c, e);
                let g = cos_angle(dists, i, j, k);
                lap += g * derivs.d2[(p, q)];
                grad2 += g * derivs.d1[p] * derivs.d1[q];
            }
        }
        out.push((lap, grad2));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    use crate::testutil::{random_config, random_realizable_config};

    fn equilateral() -> DistanceSet {
        DistanceSet::from_raw(3, vec![1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn two_atom_distance() {
        let c = Configuration::from_columns(1, &[vec![0.0], vec![3.0]]).unwrap();
        let d = pair_distances(&c).unwrap();
        assert_eq!(d.get(0, 1), 3.0);
    }

    #[test]
    fn equilateral_triangle_distances() {
        let c = Configuration::from_columns(
            2,
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 3f64.sqrt() / 2.0]],
        )
        .unwrap();
        let d = pair_distances(&c).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert_relative_eq!(d.get(i, j), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn translation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_config(&mut rng, 4, 3);
        let d0 = pair_distances(&c).unwrap();
        let mut shifted = c.clone();
        for j in 0..4 {
            for a in 0..3 {
                shifted.coords_mut()[(a, j)] += [0.7, -1.3, 2.1][a];
            }
        }
        let d1 = pair_distances(&shifted).unwrap();
        for (x, y) in d0.as_slice().iter().zip(d1.as_slice()) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let c = random_config(&mut rng, 4, 3);
            let d0 = pair_distances(&c).unwrap();
            // random orthogonal map via QR of a random matrix
            let a = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            let qr = a.qr();
            let q = qr.q();
            let rotated = Configuration::new(&q * c.coords()).unwrap();
            let d1 = pair_distances(&rotated).unwrap();
            for (x, y) in d0.as_slice().iter().zip(d1.as_slice()) {
                assert_relative_eq!(x, y, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn coincident_atoms_error() {
        let c = Configuration::from_columns(2, &[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(pair_distances(&c), Err(Error::DegenerateConfiguration(..))));
    }

    #[test]
    fn gram_matrix_two_atoms() {
        let d = DistanceSet::from_raw(2, vec![3.0]).unwrap();
        let g = gram_matrix(&d, 0);
        assert_eq!(g.nrows(), 1);
        assert_relative_eq!(g[(0, 0)], 9.0);
        assert_relative_eq!(gram_det(&d, 1).unwrap(), 9.0);
    }

    #[test]
    fn gram_matrix_equilateral() {
        let g = gram_matrix(&equilateral(), 0);
        assert_relative_eq!(g[(0, 0)], 1.0);
        assert_relative_eq!(g[(0, 1)], 0.5);
        assert_relative_eq!(g[(1, 0)], 0.5);
        assert_relative_eq!(g[(1, 1)], 1.0);
        assert_relative_eq!(gram_det(&equilateral(), 0).unwrap(), 0.75, max_relative = 1e-14);
    }

    #[test]
    fn gram_matrix_collinear() {
        // atoms at 0, 1, 2 on a line; pivot at atom 0
        let d = DistanceSet::from_raw(3, vec![1.0, 2.0, 1.0]).unwrap();
        let g = gram_matrix(&d, 0);
        assert_relative_eq!(g[(0, 0)], 1.0);
        assert_relative_eq!(g[(0, 1)], 2.0);
        assert_relative_eq!(g[(1, 1)], 4.0);
        let w = gram_det(&d, 0).unwrap();
        assert!(w.abs() < 1e-12, "collinear omega should vanish, got {w}");
    }

    #[test]
    fn cos_angle_cases() {
        let eq = equilateral();
        assert_eq!(cos_angle(&eq, 0, 1, 1), 1.0);
        assert_relative_eq!(cos_angle(&eq, 0, 1, 2), 0.5);
        let line = DistanceSet::from_raw(3, vec![1.0, 2.0, 1.0]).unwrap();
        assert_relative_eq!(cos_angle(&line, 0, 1, 2), 1.0);
    }

    #[test]
    fn unrealizable_distances_detected() {
        // violates the triangle-like realizability: r13 much larger than r12 + r23
        let d = DistanceSet::from_raw(3, vec![1.0, 5.0, 1.0]).unwrap();
        assert!(matches!(gram_det(&d, 0), Err(Error::UnrealizableDistances { .. })));
    }

    #[test]
    fn pivot_independence_of_omega() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut count = 0;
        for n in 2..=6usize {
            for d in (n - 1)..=(n + 2) {
                for _ in 0..(1000 / (5 * 4)) + 1 {
                    let c = random_realizable_config(&mut rng, n, d);
                    let ds = pair_distances(&c).unwrap();
                    let w0 = gram_det(&ds, 0).unwrap();
                    for p in 1..n {
                        let wp = gram_det(&ds, p).unwrap();
                        assert_relative_eq!(w0, wp, max_relative = 1e-10);
                    }
                    count += 1;
                }
            }
        }
        assert!(count > 50);
    }

    #[test]
    fn gram_matches_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let c = random_config(&mut rng, 4, 3);
            let ds = pair_distances(&c).unwrap();
            for pivot in 0..4 {
                let g = gram_matrix(&ds, pivot);
                let others: Vec<usize> = (0..4).filter(|&a| a != pivot).collect();
                for (a, &j) in others.iter().enumerate() {
                    for (b, &k) in others.iter().enumerate() {
                        let vij = c.atom(j) - c.atom(pivot);
                        let vik = c.atom(k) - c.atom(pivot);
                        assert_relative_eq!(g[(a, b)], vij.dot(&vik), max_relative = 1e-12, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn cramer_identity() {
        // sum_i g_{ji} domega/dr_i = 2 omega / r_j, cofactor gradients
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3usize, 4, 5] {
            for _ in 0..100 {
                let c = random_realizable_config(&mut rng, n, n);
                let ds = pair_distances(&c).unwrap();
                let pivot = n - 1;
                let w = gram_det(&ds, pivot).unwrap();
                let grad = grad_omega_pivot(&ds, pivot);
                let others: Vec<usize> = (0..n).filter(|&a| a != pivot).collect();
                for (jj, &j) in others.iter().enumerate() {
                    let mut lhs = 0.0;
                    for (ii, &i) in others.iter().enumerate() {
                        lhs += cos_angle(&ds, pivot, j, i) * grad[ii];
                    }
                    let _ = jj;
                    let rhs = 2.0 * w / ds.get(pivot, j);
                    assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn grad_omega_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let c = random_realizable_config(&mut rng, 4, 4);
            let ds = pair_distances(&c).unwrap();
            let pivot = 2;
            let grad = grad_omega_pivot(&ds, pivot);
            let others: Vec<usize> = (0..4).filter(|&a| a != pivot).collect();
            let h = 1e-6;
            for (a, &j) in others.iter().enumerate() {
                let perturb = |sign: f64| {
                    let mut r = ds.as_slice().to_vec();
                    let (lo, hi) = if pivot < j { (pivot, j) } else { (j, pivot) };
                    r[pair_index(4, lo, hi)] += sign * h;
                    let d2 = DistanceSet::from_raw(4, r).unwrap();
                    gram_matrix(&d2, pivot).determinant()
                };
                let fd = (perturb(1.0) - perturb(-1.0)) / (2.0 * h);
                assert_relative_eq!(grad[a], fd, max_relative = 1e-6, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn pair_index_roundtrip() {
        for n in 2..8 {
            let mut seen = vec![false; n_pairs(n)];
            for i in 0..n {
                for j in i + 1..n {
                    let p = pair_index(n, i, j);
                    assert!(!seen[p]);
                    seen[p] = true;
                    assert_eq!(pair_atoms(n, p), (i, j));
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }
}
