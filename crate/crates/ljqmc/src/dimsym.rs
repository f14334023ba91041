//! Exact dimensional structure of the distance-coordinate Hamiltonian.
//! Dividing out chi = omega^((1-D)/4), with omega the squared simplex
//! volume (Grammian determinant), kills every first-order distance
//! operator and leaves a multiplicative term U whose amplitude is
//! symmetric in D about D = N. That symmetry is what makes the spectra
//! in D = N-1 and D = N+1 coincide, with eigenfunctions related by a
//! factor sqrt(omega).

use crate::error::{Error, Result};
use crate::geometry::{
    cos_angle, grad_omega_pivot, gram_det, pair_distances, pair_index, Configuration, DistanceSet,
};
use crate::hamiltonian::total_potential;

/// omega below this fraction of the distance-product scale counts as
/// collinear: U diverges there and must not be evaluated silently.
pub const COLLINEARITY_THRESHOLD: f64 = 1e-12;

/// D-dependent prefactor of U: [(N-1)^2 - (N-D)^2]/8, exactly symmetric
/// about D = N by construction. D may be any real number.
pub fn amplitude(n_atoms: usize, dim: f64) -> f64 {
    let nm1 = (n_atoms - 1) as f64;
    let nd = n_atoms as f64 - dim;
    (nm1 * nm1 - nd * nd) / 8.0
}

/// chi = omega^((1-D)/4).
pub fn chi(omega: f64, dim: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("chi needs omega > 0, got {omega}")));
    }
    Ok(omega.powf((1.0 - dim) / 4.0))
}

/// The multiplicative term for one pivot, with its ingredients exposed.
#[derive(Debug, Clone)]
pub struct EffectivePotentialTerm {
    pub amplitude: f64,
    pub value: f64,
    /// d omega / d r_{pivot,j} for j != pivot, in ascending j order.
    pub grad_omega: Vec<f64>,
    /// False when D < N-1, where the continuation has no physical spectrum.
    pub physical: bool,
}

fn omega_checked(dists: &DistanceSet, pivot: usize) -> Result<f64> {
    let omega = gram_det(dists, pivot)?;
    let n = dists.n_atoms();
    let mut scale = 1.0;
    for j in (0..n).filter(|&j| j != pivot) {
        let r = dists.get(pivot, j);
        scale *= r * r;
    }
    if omega < COLLINEARITY_THRESHOLD * scale || omega < 1e-14 {
        return Err(Error::NearCollinear(omega));
    }
    Ok(omega)
}

/// U_i from both closed forms, cross-checked to relative 1e-10:
///   (amp/omega) sum_j (1/r_ij) d omega/d r_ij
///   (amp/(2 omega^2)) sum_jk (d omega/d r_ij) g_ijk (d omega/d r_ik)
/// The quadratic form is returned; disagreement means the gradient or
/// Grammian evaluation has broken down.
pub fn u_term(dists: &DistanceSet, pivot: usize, dim: f64) -> Result<EffectivePotentialTerm> {
    let n = dists.n_atoms();
    let omega = omega_checked(dists, pivot)?;
    let grad = grad_omega_pivot(dists, pivot);
    let others: Vec<usize> = (0..n).filter(|&j| j != pivot).collect();
    let amp = amplitude(n, dim);

    let mut linear = 0.0;
    for (a, &j) in others.iter().enumerate() {
        linear += grad[a] / dists.get(pivot, j);
    }
    let form_log = amp * linear / omega;

    let mut quad = 0.0;
    for (a, &j) in others.iter().enumerate() {
        for (b, &k) in others.iter().enumerate() {
            quad += grad[a] * cos_angle(dists, pivot, j, k) * grad[b];
        }
    }
    let form_quad = amp * quad / (2.0 * omega * omega);

    let scale = form_log.abs().max(form_quad.abs());
    if scale > 0.0 && (form_log - form_quad).abs() > 1e-10 * scale {
        return Err(Error::TransformInconsistency { cartesian: form_log, distance: form_quad });
    }
    Ok(EffectivePotentialTerm {
        amplitude: amp,
        value: form_quad,
        grad_omega: grad,
        physical: dim >= (n - 1) as f64,
    })
}

/// The full multiplicative part of the transformed Hamiltonian:
/// V - sum_i U_i / (2 m_i). All first-order operators vanish for this chi.
pub fn effective_potential(dists: &DistanceSet, dim: f64, masses: &[f64]) -> Result<f64> {
    let n = dists.n_atoms();
    if masses.len() != n {
        return Err(Error::Validation(format!(
            "expected {n} masses, got {}",
            masses.len()
        )));
    }
    let mut v = total_potential(dists)?;
    for (i, &m) in masses.iter().enumerate() {
        v -= u_term(dists, i, dim)?.value / (2.0 * m);
    }
    Ok(v)
}

fn t_residual(dists: &DistanceSet, dim: f64, chi_exponent: f64) -> Result<f64> {
    let n = dists.n_atoms();
    let mut worst = 0.0_f64;
    for pivot in 0..n {
        let omega = omega_checked(dists, pivot)?;
        let grad = grad_omega_pivot(dists, pivot);
        let others: Vec<usize> = (0..n).filter(|&j| j != pivot).collect();
        for &j in &others {
            let rij = dists.get(pivot, j);
            // chi^-1 d chi/d r = c * (d omega/d r) / omega for chi = omega^c
            let mut coeff = 0.0;
            for (b, &k) in others.iter().enumerate() {
                coeff += cos_angle(dists, pivot, j, k) * chi_exponent * grad[b] / omega;
            }
            let a_ij = (dim - 1.0) / rij;
            let scale = (a_ij / 2.0).abs().max(coeff.abs()).max(1e-300);
            worst = worst.max((coeff + a_ij / 2.0).abs() / scale);
        }
    }
    Ok(worst)
}

/// Maximum relative residual of the coefficient multiplying each
/// first-order operator d/d r_ij after the transformation; zero (to
/// rounding) exactly when chi = omega^((1-D)/4).
pub fn verify_t_annihilation(dists: &DistanceSet, dim: f64) -> Result<f64> {
    t_residual(dists, dim, (1.0 - dim) / 4.0)
}

/// Same residual with an arbitrary exponent in chi = omega^c; a wrong
/// exponent must yield an O(1) residual (negative-control hook).
pub fn t_residual_with_exponent(dists: &DistanceSet, dim: f64, c: f64) -> Result<f64> {
    t_residual(dists, dim, c)
}

/// Smooth scalar function of the flat pair-distance vector, with enough
/// derivatives for the second-order distance operator.
pub trait DistanceFunction {
    fn value(&self, r: &[f64]) -> f64;
    /// Second partials with respect to pairs p, q (flat indexing).
    fn d2(&self, r: &[f64], p: usize, q: usize) -> f64;
}

/// The transformed operator applied to phi at this configuration:
/// V phi - sum_i (S_i phi + U_i phi) / (2 m_i).
pub fn distance_side(
    dists: &DistanceSet,
    phi: &dyn DistanceFunction,
    dim: f64,
    masses: &[f64],
) -> Result<f64> {
    let n = dists.n_atoms();
    let r = dists.as_slice();
    let v = total_potential(dists)?;
    let phi0 = phi.value(r);
    let mut out = v * phi0;
    for i in 0..n {
        let mut s_phi = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            for k in (0..n).filter(|&k| k != i) {
                let p = pair_index(n, i.min(j), i.max(j));
                let q = pair_index(n, i.min(k), i.max(k));
                s_phi += cos_angle(dists, i, j, k) * phi.d2(r, p, q);
            }
        }
        let u = u_term(dists, i, dim)?.value;
        out -= (s_phi + u * phi0) / (2.0 * masses[i]);
    }
    Ok(out)
}

fn cartesian_side(
    config: &Configuration,
    phi: &dyn DistanceFunction,
    dim: f64,
    masses: &[f64],
    step: f64,
) -> Result<f64> {
    let eval_psi = |c: &Configuration| -> Result<f64> {
        let dists = pair_distances(c)?;
        let omega = gram_det(&dists, 0)?;
        Ok(chi(omega, dim)? * phi.value(dists.as_slice()))
    };
    let dists = pair_distances(config)?;
    let v = total_potential(&dists)?;
    let psi0 = eval_psi(config)?;
    let chi0 = chi(gram_det(&dists, 0)?, dim)?;
    let mut kinetic = 0.0;
    let d = config.dim();
    for atom in 0..config.n_atoms() {
        let mut lap = 0.0;
        for alpha in 0..d {
            let mut plus = config.clone();
            plus.coords_mut()[(alpha, atom)] += step;
            let mut minus = config.clone();
            minus.coords_mut()[(alpha, atom)] -= step;
            lap += (eval_psi(&plus)? - 2.0 * psi0 + eval_psi(&minus)?) / (step * step);
        }
        kinetic += lap / (2.0 * masses[atom]);
    }
    Ok(v * psi0 / chi0 - kinetic / chi0)
}

/// Finite-difference arbiter: applies the original Cartesian Hamiltonian
/// to chi * phi, divides by chi, and compares with the distance-side
/// evaluation. The embedding dimension of `config` fixes D; it must carry
/// at least N-1 Cartesian dimensions for the distances to realize omega.
/// Returns the discrepancy at the refined step; errors if refinement
/// makes it worse while it is still large.
pub fn verify_transform_consistency(
    config: &Configuration,
    phi: &dyn DistanceFunction,
    dim: f64,
    masses: &[f64],
    step: f64,
) -> Result<f64> {
    let dists = pair_distances(config)?;
    let reference = distance_side(&dists, phi, dim, masses)?;
    let coarse = (cartesian_side(config, phi, dim, masses, step)? - reference).abs();
    let cart_fine = cartesian_side(config, phi, dim, masses, step / 2.0)?;
    let fine = (cart_fine - reference).abs();
    if fine > 2.0 * coarse && fine > 1e-4 * reference.abs().max(1.0) {
        return Err(Error::TransformInconsistency { cartesian: cart_fine, distance: reference });
    }
    Ok(fine)
}

/// psi(D = N+1) = psi(D = N-1) / sqrt(omega) per configuration.
pub fn degeneracy_map(psi_low: &[f64], omegas: &[f64]) -> Result<Vec<f64>> {
    if psi_low.len() != omegas.len() {
        return Err(Error::Validation("value/omega length mismatch".into()));
    }
    psi_low
        .iter()
        .zip(omegas)
        .map(|(&p, &w)| {
            if !(w > 0.0) {
                return Err(Error::NearCollinear(w));
            }
            Ok(p / w.sqrt())
        })
        .collect()
}

/// Inverse map: psi(D = N-1) = sqrt(omega) * psi(D = N+1).
pub fn degeneracy_map_inverse(psi_high: &[f64], omegas: &[f64]) -> Result<Vec<f64>> {
    if psi_high.len() != omegas.len() {
        return Err(Error::Validation("value/omega length mismatch".into()));
    }
    psi_high
        .iter()
        .zip(omegas)
        .map(|(&p, &w)| {
            if !(w > 0.0) {
                return Err(Error::NearCollinear(w));
            }
            Ok(p * w.sqrt())
        })
        .collect()
}
