//! The least-squares matrix eigenvalue method: build B and B' from a
//! psi_g^2 sample, form E = (B^T B)^-1 (B^T B') with SVD regularization,
//! extract left/right eigenpairs, and drive the nonlinear parameter
//! optimization by variance (chi^2) minimization.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Configuration;
use crate::hamiltonian::Hamiltonian;
use crate::optim::NelderMead;
use crate::wavefunction::BasisSet;

/// Default relative singular-value cutoff for the overlap regularization.
pub const DEFAULT_SVD_THRESHOLD: f64 = 1e-8;

/// Basis functions as seen by the estimator: values and local energies.
pub trait BasisEvaluator: Sync {
    fn len(&self) -> usize;
    /// Per basis function: (log|beta_i(R)|, sign_i, H beta_i / beta_i).
    fn eval(&self, config: &Configuration) -> Result<Vec<(f64, f64, f64)>>;
}

/// The LJ cluster basis: monomial-prefactor functions with analytic
/// distance-space derivatives feeding the local energy.
pub struct ClusterBasis<'a> {
    pub basis: &'a BasisSet,
    pub ham: &'a Hamiltonian,
}

impl BasisEvaluator for ClusterBasis<'_> {
    fn len(&self) -> usize {
        self.basis.n
    }

    fn eval(&self, config: &Configuration) -> Result<Vec<(f64, f64, f64)>> {
        let dists = crate::geometry::pair_distances(config)?;
        let ev = self.basis.eval_full(&dists)?;
        let mut out = Vec::with_capacity(self.basis.n);
        for i in 0..self.basis.n {
            let eloc = self.ham.local_energy(config, &dists, &ev.derivs[i])?;
            out.push((ev.log_beta[i], ev.sign[i], eloc));
        }
        Ok(out)
    }
}

/// Monte Carlo sums: row sigma holds beta^_i(R_sigma) and beta^'_i(R_sigma).
#[derive(Debug, Clone)]
pub struct EstimatorAccumulator {
    pub b: DMatrix<f64>,
    pub bp: DMatrix<f64>,
}

impl EstimatorAccumulator {
    pub fn sample_count(&self) -> usize {
        self.b.nrows()
    }

    pub fn basis_size(&self) -> usize {
        self.b.ncols()
    }

    /// N^ = B^T B.
    pub fn overlap(&self) -> DMatrix<f64> {
        self.b.transpose() * &self.b
    }

    /// H^ = B^T B' (deliberately NOT symmetrized).
    pub fn hamiltonian_matrix(&self) -> DMatrix<f64> {
        self.b.transpose() * &self.bp
    }
}

/// Fill B and B' over a fixed sample. `log_psi_g` holds log psi_g(R_sigma)
/// (half the sampling log-weight) for each sample, so that
/// beta^_i = psi_g^-1 beta_i stays an unbiased re-weighting.
pub fn accumulate(
    samples: &[Configuration],
    log_psi_g: &[f64],
    basis: &impl BasisEvaluator,
) -> Result<EstimatorAccumulator> {
    if samples.len() != log_psi_g.len() {
        return Err(Error::Validation("samples and guiding logs disagree in length".into()));
    }
    let n = basis.len();
    let s = samples.len();
    let rows: Vec<Result<(Vec<f64>, Vec<f64>)>> = samples
        .par_iter()
        .zip(log_psi_g.par_iter())
        .enumerate()
        .map(|(sigma, (config, &lg))| {
            let ev = basis.eval(config)?;
            let mut brow = Vec::with_capacity(n);
            let mut bprow = Vec::with_capacity(n);
            for (i, &(logb, sign, eloc)) in ev.iter().enumerate() {
                let bhat = sign * (logb - lg).exp();
                let bphat = bhat * eloc;
                if !bhat.is_finite() || !bphat.is_finite() {
                    return Err(Error::SamplePoisoned { sample: sigma, basis: i });
                }
                brow.push(bhat);
                bprow.push(bphat);
            }
            Ok((brow, bprow))
        })
        .collect();
    let mut b = DMatrix::zeros(s, n);
    let mut bp = DMatrix::zeros(s, n);
    for (sigma, row) in rows.into_iter().enumerate() {
        let (brow, bprow) = row?;
        for i in 0..n {
            b[(sigma, i)] = brow[i];
            bp[(sigma, i)] = bprow[i];
        }
    }
    Ok(EstimatorAccumulator { b, bp })
}

/// One eigenpair of the regularized estimator.
#[derive(Debug, Clone)]
pub struct SpectrumEstimate {
    /// Real parts, ascending.
    pub eigenvalues: Vec<f64>,
    /// Imaginary parts; nonzero entries are flagged in `complex_pair`.
    pub imag: Vec<f64>,
    pub complex_pair: Vec<bool>,
    /// Right eigenvectors d^k as columns (basis coordinates).
    pub right: DMatrix<f64>,
    /// Left eigenvectors d^^k as columns, scaled so left_k . right_k = 1.
    pub left: DMatrix<f64>,
    pub retained_singular_values: Vec<f64>,
    pub discarded_singular_values: usize,
    /// Least-squares residual |B' - B E|_F.
    pub residual: f64,
}

fn eig_small_nonsymmetric(c: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let r = c.nrows();
    let eig = c.clone().complex_eigenvalues();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| {
        (eig[a].re, eig[a].im).partial_cmp(&(eig[b].re, eig[b].im)).unwrap()
    });
    let scale = eig.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let mut re = Vec::with_capacity(r);
    let mut im = Vec::with_capacity(r);
    let mut right = DMatrix::zeros(r, r);
    let mut left = DMatrix::zeros(r, r);
    for (k, &idx) in order.iter().enumerate() {
        let lam = eig[idx];
        re.push(lam.re);
        im.push(lam.im);
        if lam.im.abs() > 1e-10 * scale {
            continue; // flagged complex pair: no real eigenvector extracted
        }
        // null vectors of (C - lambda I) and its transpose via SVD
        let shifted = c - DMatrix::identity(r, r) * lam.re;
        let svd = shifted.clone().svd(true, true);
        let v_t = svd.v_t.as_ref().unwrap();
        let u = svd.u.as_ref().unwrap();
        // smallest singular value is last in nalgebra's ordering
        let pos = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        for i in 0..r {
            right[(i, k)] = v_t[(pos, i)];
            left[(i, k)] = u[(i, pos)];
        }
    }
    (re, im, right, left)
}

/// Solve the least-squares eigenproblem from the SVD of B: the
/// pseudo-inverse of N^ keeps singular values >= threshold * largest.
pub fn solve_spectrum(acc: &EstimatorAccumulator, svd_threshold: f64) -> Result<SpectrumEstimate> {
    let n = acc.basis_size();
    let s = acc.sample_count();
    if s < n {
        return Err(Error::Validation(format!("need s >= n, got s = {s}, n = {n}")));
    }
    let svd = acc.b.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let v_t = svd.v_t.as_ref().unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let retained: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] >= svd_threshold * smax)
        .collect();
    if retained.is_empty() || smax == 0.0 {
        return Err(Error::RankZero);
    }
    let r = retained.len();
    // reduced operator C = S^-1 U^T B' V  (r x r)
    let mut ur = DMatrix::zeros(s, r);
    let mut vr = DMatrix::zeros(n, r);
    let mut sinv = DVector::zeros(r);
    for (col, &k) in retained.iter().enumerate() {
        ur.set_column(col, &u.column(k));
        for i in 0..n {
            vr[(i, col)] = v_t[(k, i)];
        }
        sinv[col] = 1.0 / svd.singular_values[k];
    }
    let mut c = ur.transpose() * &acc.bp * &vr;
    for row in 0..r {
        for col in 0..r {
            c[(row, col)] *= sinv[row];
        }
    }

    let (re, im, y_right, y_left) = eig_small_nonsymmetric(&c);
    let mut right = &vr * &y_right;
    let mut left = &vr * &y_left;
    let complex_pair: Vec<bool> = im
        .iter()
        .map(|&x| x.abs() > 1e-10 * re.iter().map(|v| v.abs()).fold(1.0, f64::max))
        .collect();

    // normalize: |d^k| = 1 and left_k . right_k = 1
    for k in 0..r {
        if complex_pair[k] {
            continue;
        }
        let nr = right.column(k).norm();
        if nr > 0.0 {
            for i in 0..n {
                right[(i, k)] /= nr;
            }
        }
        let dot = left.column(k).dot(&right.column(k));
        if dot.abs() > 1e-300 {
            for i in 0..n {
                left[(i, k)] /= dot;
            }
        }
    }

    // full-operator residual on the retained subspace
    let e_full = &vr * &c * vr.transpose();
    let residual = (&acc.bp - &acc.b * &e_full).norm();

    Ok(SpectrumEstimate {
        eigenvalues: re,
        imag: im,
        complex_pair,
        right,
        left,
        retained_singular_values: retained.iter().map(|&k| svd.singular_values[k]).collect(),
        discarded_singular_values: n - r,
        residual,
    })
}

/// Spectrum directly from accumulated matrices N^ and H^ (used for
/// jackknife resamples, t > 0 projections, and cross-checks). The overlap
/// need not be symmetric; its pseudo-inverse keeps singular values above
/// threshold^2 * largest (matching the B-SVD route, where singular values
/// of N^ are those of B squared).
pub fn solve_from_matrices(
    overlap: &DMatrix<f64>,
    h: &DMatrix<f64>,
    svd_threshold: f64,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let n = overlap.nrows();
    let svd = overlap.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let v_t = svd.v_t.as_ref().unwrap();
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    if smax <= 0.0 {
        return Err(Error::RankZero);
    }
    let cut = (svd_threshold * svd_threshold) * smax;
    let retained: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] >= cut).collect();
    if retained.is_empty() {
        return Err(Error::RankZero);
    }
    let r = retained.len();
    let mut ur = DMatrix::zeros(n, r);
    let mut vr = DMatrix::zeros(n, r);
    for (col, &k) in retained.iter().enumerate() {
        ur.set_column(col, &u.column(k));
        for i in 0..n {
            vr[(i, col)] = v_t[(k, i)];
        }
    }
    // reduced operator of N^+ H^ on the retained subspace
    let mut c = ur.transpose() * h * &vr;
    for i in 0..r {
        for j in 0..r {
            c[(i, j)] /= svd.singular_values[retained[i]];
        }
    }
    let evs = c.complex_eigenvalues();
    let mut pairs: Vec<(f64, f64)> = evs.iter().map(|z| (z.re, z.im)).collect();
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scale = pairs.iter().map(|p| p.0.abs()).fold(1.0, f64::max);
    Ok((
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1.abs() > 1e-10 * scale).collect(),
    ))
}

/// Normalized residual chi^2 = |B'd - (Bd) e|^2 / |Bd|^2 for one state:
/// coefficients d, eigenvalue estimate e, over the stored sample.
pub fn variance_objective(acc: &EstimatorAccumulator, d: &[f64], e: f64) -> Result<f64> {
    let dv = DVector::from_column_slice(d);
    let psi = &acc.b * &dv;
    let psip = &acc.bp * &dv;
    let denom = psi.norm_squared();
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::DegenerateState);
    }
    Ok((psip - psi * e).norm_squared() / denom)
}

/// Per-evaluation diagnostics of the nonlinear optimization.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub iteration: usize,
    pub chi2: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub discarded_singular_values: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub records: Vec<IterRecord>,
    pub final_chi2: Vec<f64>,
    pub best_objective: f64,
    pub evals: usize,
    pub stagnated: bool,
}

/// Derivative-free minimization of the summed chi^2 of the target states.
/// Every objective evaluation re-solves the inner linear problem on the
/// SAME fixed sample (correlated sampling); psi_g stays the function the
/// sample was drawn from.
pub fn optimize_nonlinear(
    basis0: &BasisSet,
    ham: &Hamiltonian,
    samples: &[Configuration],
    log_psi_g: &[f64],
    targets: &[usize],
    svd_threshold: f64,
    max_evals: usize,
) -> Result<(BasisSet, OptimizeReport)> {
    basis0.validate_params()?;
    if targets.is_empty() {
        return Err(Error::Validation("at least one target state required".into()));
    }
    let records = std::sync::Mutex::new(Vec::<IterRecord>::new());
    let count = std::sync::atomic::AtomicUsize::new(0);

    let objective = |p: &[f64]| -> f64 {
        let it = count.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        let basis = match basis0.with_params(p) {
            Ok(b) => b,
            Err(_) => return f64::MAX / 4.0,
        };
        let eval = ClusterBasis { basis: &basis, ham };
        let acc = match accumulate(samples, log_psi_g, &eval) {
            Ok(a) => a,
            Err(_) => return f64::MAX / 4.0,
        };
        let spec = match solve_spectrum(&acc, svd_threshold) {
            Ok(s) => s,
            Err(_) => return f64::MAX / 4.0,
        };
        let mut total = 0.0;
        let mut chi2s = Vec::with_capacity(targets.len());
        for &k in targets {
            if k >= spec.eigenvalues.len() || spec.complex_pair[k] {
                return f64::MAX / 4.0;
            }
            let d: Vec<f64> = spec.right.column(k).iter().cloned().collect();
            match variance_objective(&acc, &d, spec.eigenvalues[k]) {
                Ok(x) => {
                    total += x;
                    chi2s.push(x);
                }
                Err(_) => return f64::MAX / 4.0,
            }
        }
        records.lock().unwrap().push(IterRecord {
            iteration: it,
            chi2: chi2s,
            eigenvalues: spec.eigenvalues.clone(),
            discarded_singular_values: spec.discarded_singular_values,
        });
        total
    };

    let bounds = basis0.param_bounds();
    let x0 = basis0.params();
    let mut steps = vec![0.0; x0.len()];
    steps[0] = 0.1; // sigma_s
    steps[1] = 0.25 * x0[1].abs().max(0.1); // c5
    steps[2] = 0.25 * x0[2].abs().max(0.1); // kappa
    for s in steps.iter_mut().skip(3) {
        *s = 0.25;
    }
    let mut nm = NelderMead::new(bounds, steps);
    nm.max_evals = max_evals;
    let res = nm.minimize(objective, &x0);

    let best = basis0.with_params(&res.x)?;
    // final chi^2 per target at the optimum
    let eval = ClusterBasis { basis: &best, ham };
    let acc = accumulate(samples, log_psi_g, &eval)?;
    let spec = solve_spectrum(&acc, svd_threshold)?;
    let mut final_chi2 = Vec::new();
    for &k in targets {
        let d: Vec<f64> = spec.right.column(k).iter().cloned().collect();
        final_chi2.push(variance_objective(&acc, &d, spec.eigenvalues[k])?);
    }
    let report = OptimizeReport {
        records: records.into_inner().unwrap(),
        final_chi2,
        best_objective: res.fx,
        evals: res.evals,
        stagnated: !res.converged,
    };
    Ok((best, report))
}

/// Spectrum with jackknife errors over contiguous sample blocks. The full
/// estimate uses the SVD-of-B route; resamples use the matrix route.
pub fn solve_with_errors(
    acc: &EstimatorAccumulator,
    svd_threshold: f64,
    n_blocks: usize,
) -> Result<(SpectrumEstimate, Vec<f64>)> {
    let spec = solve_spectrum(acc, svd_threshold)?;
    let s = acc.sample_count();
    let n = acc.basis_size();
    let g = n_blocks.clamp(2, s / n.max(1));
    // per-block partial sums of N^ and H^
    let mut n_blocks_mat = Vec::with_capacity(g);
    let mut h_blocks_mat = Vec::with_capacity(g);
    let bounds: Vec<usize> = (0..=g).map(|k| k * s / g).collect();
    for k in 0..g {
        let rows = bounds[k + 1] - bounds[k];
        let bsub = acc.b.rows(bounds[k], rows);
        let bpsub = acc.bp.rows(bounds[k], rows);
        n_blocks_mat.push(bsub.transpose() * bsub);
        h_blocks_mat.push(bsub.transpose() * bpsub);
    }
    let n_total: DMatrix<f64> = n_blocks_mat.iter().fold(DMatrix::zeros(n, n), |a, b| a + b);
    let h_total: DMatrix<f64> = h_blocks_mat.iter().fold(DMatrix::zeros(n, n), |a, b| a + b);

    let m = spec.eigenvalues.len();
    let mut jack = vec![Vec::with_capacity(g); m];
    for k in 0..g {
        let nz = &n_total - &n_blocks_mat[k];
        let hz = &h_total - &h_blocks_mat[k];
        if let Ok((evs, _)) = solve_from_matrices(&nz, &hz, svd_threshold) {
            // match by nearest eigenvalue
            for (state, &full) in spec.eigenvalues.iter().enumerate() {
                if let Some(&best) = evs
                    .iter()
                    .min_by(|a, b| (*a - full).abs().partial_cmp(&(*b - full).abs()).unwrap())
                {
                    jack[state].push(best);
                }
            }
        }
    }
    let mut errors = Vec::with_capacity(m);
    for series in &jack {
        let gg = series.len() as f64;
        if gg < 2.0 {
            errors.push(f64::NAN);
            continue;
        }
        let mean = series.iter().sum::<f64>() / gg;
        let var: f64 = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
        errors.push(((gg - 1.0) / gg * var).sqrt());
    }
    Ok((spec, errors))
}
