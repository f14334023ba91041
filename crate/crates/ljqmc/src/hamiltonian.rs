//! Dimensionless Lennard-Jones pair potential, total potential energy, and
//! the local energy of a trial wavefunction. A pluggable isotropic-harmonic
//! test potential backs the exactly solvable checks.

use crate::error::{Error, Result};
use crate::geometry::{atom_kinetic_terms, ClusterSpec, Configuration, DistanceSet, RadialDerivs};

/// Shipped species table: label -> dimensionless inverse mass.
pub const SPECIES: [(&str, f64); 4] = [
    ("Kr", 1.9128e-4),
    ("Ar", 6.9635e-4),
    ("Ne", 7.0920e-3),
    ("half-Ne", 1.4184e-2),
];

/// Inverse mass of a shipped species, if known.
pub fn species_inv_mass(label: &str) -> Option<f64> {
    SPECIES.iter().find(|(l, _)| *l == label).map(|&(_, m)| m)
}

/// V(r) = r^-12 - 2 r^-6; minimum -1 at r = 1.
pub fn lj_pair(r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("lj_pair requires r > 0, got {r}")));
    }
    let r6 = r.powi(-6);
    Ok(r6 * r6 - 2.0 * r6)
}

/// Compensated (Kahan) summation.
#[derive(Debug, Clone, Default)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Sum of the LJ pair potential over all unordered pairs.
pub fn total_potential(dists: &DistanceSet) -> Result<f64> {
    let mut acc = KahanSum::default();
    for &r in dists.as_slice() {
        acc.add(lj_pair(r)?);
    }
    Ok(acc.value())
}

/// Potential form used by the engine; `Harmonic` is a test hook, with
/// V = (k/2) sum_i |r_i|^2 about the coordinate origin.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    LennardJones,
    Harmonic { spring: f64 },
    /// V identically zero (free particles, test hook).
    None,
}

/// Hamiltonian with per-particle masses. The CLI only exposes equal-mass
/// clusters but the exact-results module is stated for general m_i.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    pub masses: Vec<f64>,
    pub potential: Potential,
}

impl Hamiltonian {
    pub fn lennard_jones(spec: &ClusterSpec) -> Self {
        Hamiltonian { masses: vec![spec.mass(); spec.n_atoms], potential: Potential::LennardJones }
    }

    pub fn new(masses: Vec<f64>, potential: Potential) -> Result<Self> {
        if masses.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::Validation("all masses must be positive".into()));
        }
        Ok(Hamiltonian { masses, potential })
    }

    /// Potential energy at a configuration.
    pub fn potential_energy(&self, config: &Configuration, dists: Option<&DistanceSet>) -> Result<f64> {
        match &self.potential {
            Potential::LennardJones => {
                let owned;
                let d = match dists {
                    Some(d) => d,
                    None => {
                        owned = crate::geometry::pair_distances(config)?;
                        &owned
                    }
                };
                total_potential(d)
            }
            Potential::Harmonic { spring } => {
                let mut acc = KahanSum::default();
                for j in 0..config.n_atoms() {
                    acc.add(0.5 * spring * config.coords().column(j).norm_squared());
                }
                Ok(acc.value())
            }
            Potential::None => Ok(0.0),
        }
    }

    /// Local energy V(R) - sum_i [lap_i(log psi) + |grad_i log psi|^2] / (2 m_i),
    /// from analytic distance-space derivatives of log psi.
    pub fn local_energy(
        &self,
        config: &Configuration,
        dists: &DistanceSet,
        log_derivs: &RadialDerivs,
    ) -> Result<f64> {
        let v = self.potential_energy(config, Some(dists))?;
        let terms = atom_kinetic_terms(dists, config.dim(), log_derivs);
        let mut kin = KahanSum::default();
        for (i, (lap, grad2)) in terms.iter().enumerate() {
            kin.add((lap + grad2) / (2.0 * self.masses[i]));
        }
        Ok(v - kin.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{pair_distances, DistanceSet};
    use approx::assert_relative_eq;

    #[test]
    fn lj_pair_values() {
        assert_relative_eq!(lj_pair(1.0).unwrap(), -1.0);
        assert!(lj_pair(1e6).unwrap().abs() < 1e-35);
        assert_relative_eq!(lj_pair(2.0).unwrap(), -0.031005859375);
        assert!(lj_pair(0.0).is_err());
        assert!(lj_pair(-1.0).is_err());
    }

    #[test]
    fn total_potential_values() {
        let dimer = DistanceSet::from_raw(2, vec![1.0]).unwrap();
        assert_relative_eq!(total_potential(&dimer).unwrap(), -1.0);
        let triangle = DistanceSet::from_raw(3, vec![1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(total_potential(&triangle).unwrap(), -3.0);
        // regular tetrahedron side 1
        let tetra = DistanceSet::from_raw(4, vec![1.0; 6]).unwrap();
        assert_relative_eq!(total_potential(&tetra).unwrap(), -6.0);
    }

    #[test]
    fn summation_order_stability() {
        let n = 21; // 210 pairs
        let r: Vec<f64> = (0..210).map(|k| 0.8 + 0.005 * (k as f64 % 240.0)).collect();
        let asc = DistanceSet::from_raw(n, r.clone()).unwrap();
        let mut rev = r;
        rev.reverse();
        let desc = DistanceSet::from_raw(n, rev).unwrap();
        assert_relative_eq!(
            total_potential(&asc).unwrap(),
            total_potential(&desc).unwrap(),
            max_relative = 1e-12
        );
    }

    /// log psi = -a r^2/2 over the pair distance is the exact ground state
    /// of the relative-motion oscillator when a = sqrt(m k / 2); the local
    /// energy must be the constant D * omega / 2 with omega = sqrt(2k/m).
    #[test]
    fn harmonic_ground_state_constant_local_energy() {
        let c = crate::geometry::Configuration::from_columns(3, &[vec![0.1, 0.2, -0.3], vec![0.9, -0.4, 0.5]]).unwrap();
        let dists = pair_distances(&c).unwrap();
        let r = dists.get(0, 1);
        // log psi = -a r^2/2 over the pair distance; exact eigenstate of the
        // relative oscillator -(1/m) u'' + (k/2) r^2 when a = sqrt(m k / 2).
        let m = 1.0;
        let k = 1.0;
        let a = (m * k / 2.0f64).sqrt();
        let mut derivs = RadialDerivs::zeros(2);
        derivs.d1[0] = -a * r;
        derivs.d2[(0, 0)] = -a;
        let ham = Hamiltonian::new(vec![m, m], Potential::None).unwrap();
        let e_kin = ham.local_energy(&c, &dists, &derivs).unwrap();
        // add pair-harmonic potential (k/2) r^2 by hand
        let e = e_kin + 0.5 * k * r * r;
        // relative oscillator: omega = sqrt(2k/m), E0 = D * omega / 2
        let omega = (2.0 * k / m).sqrt();
        assert_relative_eq!(e, 3.0 * omega / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn species_table() {
        assert_eq!(species_inv_mass("Kr"), Some(1.9128e-4));
        assert_eq!(species_inv_mass("Ar"), Some(6.9635e-4));
        assert_eq!(species_inv_mass("Ne"), Some(7.0920e-3));
        assert_eq!(species_inv_mass("half-Ne"), Some(1.4184e-2));
        assert_eq!(species_inv_mass("Xe"), None);
    }
}
