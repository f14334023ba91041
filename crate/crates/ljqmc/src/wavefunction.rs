//! Elementary basis functions beta_i = s_i(R) exp(sum_j a_j s_j(R) +
//! sum_pairs A(r)), their analytic log-derivatives in distance space,
//! bosonic symmetrization, and the guiding function psi_g^2 = psi~^(2/rho).
//!
//! The pair variable is f_ij = exp(-r_ij / sigma_s); the s_i are orbit sums
//! of monomials in the f_ij under the atom-permutation group, and
//! A(r) = -c5 / r^5 - kappa r fixes the short- and long-range asymptotics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{n_pairs, pair_index, Configuration, DistanceSet, RadialDerivs};

/// Exponent clamp: beyond this the evaluation is reported as a parameter
/// range error rather than silently saturating.
pub const EXPONENT_CLAMP: f64 = 700.0;

pub const SIGMA_BOUNDS: (f64, f64) = (0.3, 3.0);

/// A bosonically symmetrized monomial: the orbit sum of one exponent
/// vector over pairs under all atom permutations. Each term is an
/// exponent vector e, contributing prod_p f_p^{e_p} = exp(-(e . r)/sigma).
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub degree: u32,
    /// Canonical representative (lexicographically largest orbit element).
    pub rep: Vec<u8>,
    pub terms: Vec<Vec<u8>>,
}

/// Value and distance-partials of one orbit sum at fixed pair distances.
#[derive(Debug, Clone)]
pub struct MonomialEval {
    pub value: f64,
    pub d1: Vec<f64>,
    pub d2: DMatrix<f64>,
}

impl Monomial {
    pub fn eval(&self, r: &[f64], sigma: f64, second: bool) -> MonomialEval {
        let p = r.len();
        let mut value = 0.0;
        let mut d1 = vec![0.0; p];
        let mut d2 = DMatrix::zeros(if second { p } else { 0 }, if second { p } else { 0 });
        let inv_s = 1.0 / sigma;
        for term in &self.terms {
            let dot: f64 = term.iter().zip(r).map(|(&e, &x)| e as f64 * x).sum();
            let v = (-dot * inv_s).exp();
            value += v;
            for (a, &ea) in term.iter().enumerate() {
                if ea == 0 {
                    continue;
                }
                d1[a] -= ea as f64 * inv_s * v;
                if second {
                    for (b, &eb) in term.iter().enumerate() {
                        if eb != 0 {
                            d2[(a, b)] += (ea as f64) * (eb as f64) * inv_s * inv_s * v;
                        }
                    }
                }
            }
        }
        MonomialEval { value, d1, d2 }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..n).collect();
    heap_permute(&mut items, n, &mut out);
    out
}

fn heap_permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out);
        if k % 2 == 0 {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}

/// Maps induced on pair indices by each atom permutation.
fn pair_permutations(n_atoms: usize) -> Vec<Vec<usize>> {
    let perms = permutations(n_atoms);
    let np = n_pairs(n_atoms);
    perms
        .iter()
        .map(|perm| {
            let mut map = vec![0usize; np];
            for i in 0..n_atoms {
                for j in i + 1..n_atoms {
                    let (a, b) = (perm[i], perm[j]);
                    let (a, b) = if a < b { (a, b) } else { (b, a) };
                    map[pair_index(n_atoms, i, j)] = pair_index(n_atoms, a, b);
                }
            }
            map
        })
        .collect()
}

/// Deterministic, duplicate-free list of permutation-invariant monomial
/// orbit sums in the scaled pair variables, sorted by (total degree,
/// lexicographic signature of the canonical representative).
pub fn symmetrized_monomials(n_atoms: usize, degree_cap: u32) -> Vec<Monomial> {
    assert!(degree_cap >= 1, "degree_cap must be >= 1");
    let np = n_pairs(n_atoms);
    let pperms = pair_permutations(n_atoms);
    let mut out: Vec<Monomial> = Vec::new();

    // enumerate exponent vectors with 1 <= total degree <= cap
    let mut e = vec![0u8; np];
    enumerate(&mut e, 0, degree_cap, &mut |e| {
        // canonical representative: lexicographically largest image
        let mut orbit: Vec<Vec<u8>> = pperms
            .iter()
            .map(|map| {
                let mut img = vec![0u8; np];
                for (p, &ex) in e.iter().enumerate() {
                    img[map[p]] = ex;
                }
                img
            })
            .collect();
        orbit.sort();
        orbit.dedup();
        let rep = orbit.last().unwrap().clone();
        if rep.as_slice() == e {
            let degree = e.iter().map(|&x| x as u32).sum();
            out.push(Monomial { degree, rep, terms: orbit });
        }
    });
    out.sort_by(|a, b| (a.degree, &a.rep).cmp(&(b.degree, &b.rep)));
    out
}

fn enumerate(e: &mut Vec<u8>, pos: usize, budget: u32, f: &mut impl FnMut(&[u8])) {
    if pos == e.len() {
        if e.iter().any(|&x| x > 0) {
            f(e);
        }
        return;
    }
    for v in 0..=budget {
        e[pos] = v as u8;
        enumerate(e, pos + 1, budget - v, f);
    }
    e[pos] = 0;
}

/// Basis set with one shared exponential and monomial prefactors: basis
/// function i has prefactor 1 for i = 0 and the (i-1)-th symmetrized
/// monomial otherwise, all multiplying exp(sum_j a_j s_j + sum_p A(r_p)).
#[derive(Debug, Clone)]
pub struct BasisSet {
    pub n_atoms: usize,
    pub n: usize,
    pub degree_cap: u32,
    pub monomials: Vec<Monomial>,
    pub sigma_s: f64,
    pub a: Vec<f64>,
    pub c5: f64,
    pub kappa: f64,
}

impl BasisSet {
    pub fn new(
        n_atoms: usize,
        n: usize,
        degree_cap: u32,
        sigma_s: f64,
        a: Vec<f64>,
        c5: f64,
        kappa: f64,
    ) -> Result<Self> {
        let monomials = symmetrized_monomials(n_atoms, degree_cap);
        if n == 0 || n > monomials.len() + 1 {
            return Err(Error::Validation(format!(
                "basis size {n} out of range (1..={} for degree cap {degree_cap})",
                monomials.len() + 1
            )));
        }
        if a.len() != monomials.len() {
            return Err(Error::Validation(format!(
                "expected {} exponent coefficients, got {}",
                monomials.len(),
                a.len()
            )));
        }
        let b = BasisSet { n_atoms, n, degree_cap, monomials, sigma_s, a, c5, kappa };
        b.validate_params()?;
        Ok(b)
    }

    /// Starting point for a given cluster: c5 = sqrt(m)/5 cancels the
    /// r^-12 divergence of the local energy, kappa = 5 c5 puts the pair
    /// function's peak at the potential minimum.
    pub fn for_cluster(spec: &crate::geometry::ClusterSpec, n: usize, degree_cap: u32) -> Result<Self> {
        let c5 = spec.mass().sqrt() / 5.0;
        let n_mono = symmetrized_monomials(spec.n_atoms, degree_cap).len();
        BasisSet::new(spec.n_atoms, n, degree_cap, 1.0, vec![0.0; n_mono], c5, 5.0 * c5)
    }

    pub fn validate_params(&self) -> Result<()> {
        if !(self.c5 > 0.0) {
            return Err(Error::ParameterRange(format!("c5 must be > 0, got {}", self.c5)));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::ParameterRange(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.sigma_s >= SIGMA_BOUNDS.0 && self.sigma_s <= SIGMA_BOUNDS.1) {
            return Err(Error::ParameterRange(format!(
                "sigma_s must lie in [{}, {}], got {}",
                SIGMA_BOUNDS.0, SIGMA_BOUNDS.1, self.sigma_s
            )));
        }
        if self.a.iter().any(|x| !x.is_finite()) {
            return Err(Error::ParameterRange("non-finite exponent coefficient".into()));
        }
        Ok(())
    }

    /// Flat nonlinear-parameter vector [sigma_s, c5, kappa, a...].
    pub fn params(&self) -> Vec<f64> {
        let mut p = vec![self.sigma_s, self.c5, self.kappa];
        p.extend_from_slice(&self.a);
        p
    }

    /// Lower/upper bounds matching `params`.
    pub fn param_bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![SIGMA_BOUNDS, (1e-6, 1e6), (1e-6, 1e6)];
        b.extend(std::iter::repeat((-50.0, 50.0)).take(self.a.len()));
        b
    }

    pub fn with_params(&self, p: &[f64]) -> Result<Self> {
        if p.len() != 3 + self.a.len() {
            return Err(Error::ParameterRange("parameter vector length mismatch".into()));
        }
        let mut b = self.clone();
        b.sigma_s = p[0];
        b.c5 = p[1];
        b.kappa = p[2];
        b.a = p[3..].to_vec();
        b.validate_params()?;
        Ok(b)
    }

    /// Shared exponent sum_j a_j s_j + sum_p A(r_p) and its partials.
    fn exponent(&self, r: &[f64], second: bool) -> Result<(f64, RadialDerivs)> {
        let np = r.len();
        let mut value = 0.0;
        let mut d = RadialDerivs {
            d1: vec![0.0; np],
            d2: DMatrix::zeros(if second { np } else { 0 }, if second { np } else { 0 }),
        };
        for (j, m) in self.monomials.iter().enumerate() {
            if self.a[j] == 0.0 {
                continue;
            }
            let me = m.eval(r, self.sigma_s, second);
            if (self.a[j] * me.value).abs() > EXPONENT_CLAMP {
                return Err(Error::ParameterRange(format!(
                    "exponent overflow from coefficient a_{j} = {}",
                    self.a[j]
                )));
            }
            value += self.a[j] * me.value;
            for p in 0..np {
                d.d1[p] += self.a[j] * me.d1[p];
                if second {
                    for q in 0..np {
                        d.d2[(p, q)] += self.a[j] * me.d2[(p, q)];
                    }
                }
            }
        }
        for (p, &rp) in r.iter().enumerate() {
            value += -self.c5 * rp.powi(-5) - self.kappa * rp;
            d.d1[p] += 5.0 * self.c5 * rp.powi(-6) - self.kappa;
            if second {
                d.d2[(p, p)] += -30.0 * self.c5 * rp.powi(-7);
            }
        }
        if value.abs() > EXPONENT_CLAMP {
            return Err(Error::ParameterRange(format!("exponent magnitude {value:.1} exceeds clamp")));
        }
        Ok((value, d))
    }

    /// Prefactor orbit-sum value and partials for basis index i.
    fn prefactor(&self, i: usize, r: &[f64], second: bool) -> Option<MonomialEval> {
        if i == 0 {
            None
        } else {
            Some(self.monomials[i - 1].eval(r, self.sigma_s, second))
        }
    }

    /// log|beta_i| and sign for every basis function (values only).
    pub fn eval_log(&self, dists: &DistanceSet) -> Result<Vec<(f64, f64)>> {
        let r = dists.as_slice();
        let (expo, _) = self.exponent(r, false)?;
        let mut out = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let (logp, sign) = match self.prefactor(i, r, false) {
                None => (0.0, 1.0),
                Some(me) => (me.value.ln(), 1.0),
            };
            out.push((logp + expo, sign));
        }
        Ok(out)
    }

    /// Full per-basis evaluation: log values, signs, and distance partials
    /// of log beta_i. The shared exponent is evaluated once.
    pub fn eval_full(&self, dists: &DistanceSet) -> Result<BasisEval> {
        let r = dists.as_slice();
        let np = r.len();
        let (expo, dexp) = self.exponent(r, true)?;
        let mut log_beta = Vec::with_capacity(self.n);
        let mut derivs = Vec::with_capacity(self.n);
        for i in 0..self.n {
            match self.prefactor(i, r, true) {
                None => {
                    log_beta.push(expo);
                    derivs.push(dexp.clone());
                }
                Some(me) => {
                    log_beta.push(me.value.ln() + expo);
                    let mut d = dexp.clone();
                    let s = me.value;
                    for p in 0..np {
                        d.d1[p] += me.d1[p] / s;
                        for q in 0..np {
                            d.d2[(p, q)] += me.d2[(p, q)] / s - me.d1[p] * me.d1[q] / (s * s);
                        }
                    }
                    derivs.push(d);
                }
            }
        }
        Ok(BasisEval { log_beta, sign: vec![1.0; self.n], derivs })
    }
}

/// Per-configuration basis evaluation.
#[derive(Debug, Clone)]
pub struct BasisEval {
    pub log_beta: Vec<f64>,
    pub sign: Vec<f64>,
    pub derivs: Vec<RadialDerivs>,
}

/// log|beta_i(R)| and prefactor sign for a single basis function.
pub fn eval_log_basis(basis: &BasisSet, i: usize, config: &Configuration) -> Result<(f64, f64)> {
    let dists = crate::geometry::pair_distances(config)?;
    Ok(basis.eval_log(&dists)?[i])
}

/// Linear combination psi~^k = sum_i d_i beta_i for one state.
#[derive(Debug, Clone)]
pub struct TrialWavefunction {
    pub basis: BasisSet,
    pub coeffs: Vec<f64>,
}

/// Value and distance partials of log |psi~|.
#[derive(Debug, Clone)]
pub struct WfEval {
    pub log_abs: f64,
    pub sign: f64,
    pub derivs: RadialDerivs,
}

impl TrialWavefunction {
    pub fn new(basis: BasisSet, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.n {
            return Err(Error::Validation(format!(
                "coefficient vector length {} does not match basis size {}",
                coeffs.len(),
                basis.n
            )));
        }
        Ok(TrialWavefunction { basis, coeffs })
    }

    /// With the shared exponent, psi~ = q(R) exp(E(R)) with
    /// q = sum_i d_i s_i; the log form never over/underflows in q.
    pub fn eval_log(&self, dists: &DistanceSet) -> Result<(f64, f64)> {
        let r = dists.as_slice();
        let (expo, _) = self.basis.exponent(r, false)?;
        let (q, qscale) = self.prefactor_sum(r, false)?.0;
        if q.abs() <= 1e-14 * qscale {
            return Err(Error::NodeProximity);
        }
        Ok((q.abs().ln() + expo, q.signum()))
    }

    /// q = sum_i d_i s_i with partials; returns ((q, scale), d1, d2) where
    /// scale = sum_i |d_i s_i| gauges node proximity.
    fn prefactor_sum(
        &self,
        r: &[f64],
        second: bool,
    ) -> Result<((f64, f64), Vec<f64>, DMatrix<f64>)> {
        let np = r.len();
        let mut q = 0.0;
        let mut scale = 0.0;
        let mut d1 = vec![0.0; np];
        let mut d2 = DMatrix::zeros(if second { np } else { 0 }, if second { np } else { 0 });
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            match self.basis.prefactor(i, r, second) {
                None => {
                    q += c;
                    scale += c.abs();
                }
                Some(me) => {
                    q += c * me.value;
                    scale += (c * me.value).abs();
                    for p in 0..np {
                        d1[p] += c * me.d1[p];
                        if second {
                            for s in 0..np {
                                d2[(p, s)] += c * me.d2[(p, s)];
                            }
                        }
                    }
                }
            }
        }
        Ok(((q, scale), d1, d2))
    }

    /// log |psi~|, sign, and analytic first/second distance partials.
    pub fn eval_full(&self, dists: &DistanceSet) -> Result<WfEval> {
        let r = dists.as_slice();
        let np = r.len();
        let (expo, dexp) = self.basis.exponent(r, true)?;
        let ((q, scale), q1, q2) = self.prefactor_sum(r, true)?;
        if q.abs() <= 1e-14 * scale {
            return Err(Error::NodeProximity);
        }
        let mut derivs = dexp;
        for p in 0..np {
            derivs.d1[p] += q1[p] / q;
            for s in 0..np {
                derivs.d2[(p, s)] += q2[(p, s)] / q - q1[p] * q1[s] / (q * q);
            }
        }
        Ok(WfEval { log_abs: q.abs().ln() + expo, sign: q.signum(), derivs })
    }
}

/// Nodeless sampling density psi_g^2 = psi~^(2/rho).
#[derive(Debug, Clone)]
pub struct GuidingFunction {
    pub base: TrialWavefunction,
    pub rho: f64,
}

pub const DEFAULT_RHO: f64 = 2.5;

impl GuidingFunction {
    pub fn new(base: TrialWavefunction, rho: f64) -> Result<Self> {
        if !(2.0..=3.0).contains(&rho) {
            return Err(Error::ParameterRange(format!("rho must lie in [2, 3], got {rho}")));
        }
        Ok(GuidingFunction { base, rho })
    }

    /// log psi_g^2 = (2/rho) log |psi~|.
    pub fn log_weight(&self, dists: &DistanceSet) -> Result<f64> {
        let (log_abs, _) = self.base.eval_log(dists)?;
        Ok(2.0 / self.rho * log_abs)
    }

    /// Distance partials of log psi_g = (1/rho) log |psi~|.
    pub fn eval_full(&self, dists: &DistanceSet) -> Result<WfEval> {
        let mut e = self.base.eval_full(dists)?;
        let s = 1.0 / self.rho;
        e.log_abs *= s;
        e.sign = 1.0;
        for x in e.derivs.d1.iter_mut() {
            *x *= s;
        }
        e.derivs.d2 *= s;
        Ok(e)
    }

    /// Re-weighting factor log(psi_g^-1 beta_i) and sign for each basis
    /// function, from precomputed log values.
    pub fn reweight(&self, log_psi_g: f64, log_beta: f64, sign: f64) -> (f64, f64) {
        (log_beta - log_psi_g, sign)
    }
}

// ---------------------------------------------------------------------------
// wavefunction parameter document (structured text, bit-exact round trip)
// ---------------------------------------------------------------------------

/// Serialized wavefunction: species, cluster shape, basis parameters and
/// the linear coefficient matrix (one row per state).
#[derive(Debug, Clone)]
pub struct WavefunctionDocument {
    pub species: String,
    pub n_atoms: usize,
    pub dim: usize,
    pub inv_mass: f64,
    pub rho: f64,
    pub basis_n: usize,
    pub degree_cap: u32,
    pub sigma_s: f64,
    pub c5: f64,
    pub kappa: f64,
    pub a: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
    pub reference_energy: Option<f64>,
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Io(format!("bad float '{t}': {e}"))))
        .collect()
}

impl WavefunctionDocument {
    pub fn from_parts(
        species: &str,
        dim: usize,
        inv_mass: f64,
        rho: f64,
        basis: &BasisSet,
        coeffs: Vec<Vec<f64>>,
        reference_energy: Option<f64>,
    ) -> Self {
        WavefunctionDocument {
            species: species.to_string(),
            n_atoms: basis.n_atoms,
            dim,
            inv_mass,
            rho,
            basis_n: basis.n,
            degree_cap: basis.degree_cap,
            sigma_s: basis.sigma_s,
            c5: basis.c5,
            kappa: basis.kappa,
            a: basis.a.clone(),
            coeffs,
            reference_energy,
        }
    }

    pub fn basis(&self) -> Result<BasisSet> {
        BasisSet::new(
            self.n_atoms,
            self.basis_n,
            self.degree_cap,
            self.sigma_s,
            self.a.clone(),
            self.c5,
            self.kappa,
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("species = {}\n", self.species));
        s.push_str(&format!("n_atoms = {}\n", self.n_atoms));
        s.push_str(&format!("dim = {}\n", self.dim));
        s.push_str(&format!("inv_mass = {}\n", self.inv_mass));
        s.push_str(&format!("rho = {}\n", self.rho));
        s.push_str(&format!("basis_n = {}\n", self.basis_n));
        s.push_str(&format!("degree_cap = {}\n", self.degree_cap));
        s.push_str(&format!("sigma_s = {}\n", self.sigma_s));
        s.push_str(&format!("c5 = {}\n", self.c5));
        s.push_str(&format!("kappa = {}\n", self.kappa));
        s.push_str(&format!("a = {}\n", fmt_list(&self.a)));
        for (k, row) in self.coeffs.iter().enumerate() {
            s.push_str(&format!("coeffs_{} = {}\n", k + 1, fmt_list(row)));
        }
        if let Some(e) = self.reference_energy {
            s.push_str(&format!("reference_energy = {e}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Io(format!("malformed line '{line}'")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<String> {
            map.get(k).cloned().ok_or_else(|| Error::Io(format!("missing key '{k}'")))
        };
        let parse_f = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|e| Error::Io(format!("bad value for '{k}': {e}")))
        };
        let parse_u = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|e| Error::Io(format!("bad value for '{k}': {e}")))
        };
        let mut coeffs = Vec::new();
        for k in 1.. {
            match map.get(&format!("coeffs_{k}")) {
                Some(v) => coeffs.push(parse_list(v)?),
                None => break,
            }
        }
        Ok(WavefunctionDocument {
            species: get("species")?,
            n_atoms: parse_u("n_atoms")?,
            dim: parse_u("dim")?,
            inv_mass: parse_f("inv_mass")?,
            rho: parse_f("rho")?,
            basis_n: parse_u("basis_n")?,
            degree_cap: parse_u("degree_cap")? as u32,
            sigma_s: parse_f("sigma_s")?,
            c5: parse_f("c5")?,
            kappa: parse_f("kappa")?,
            a: parse_list(&get("a")?)?,
            coeffs,
            reference_energy: match map.get("reference_energy") {
                Some(v) => Some(v.parse().map_err(|e| Error::Io(format!("bad reference_energy: {e}")))?),
                None => None,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pair_distances;
    use crate::testutil::random_config;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn small_basis(n_atoms: usize, n: usize, cap: u32) -> BasisSet {
        let m = symmetrized_monomials(n_atoms, cap).len();
        let mut a = vec![0.0; m];
        a[0] = 0.8;
        if m > 1 {
            a[1] = -0.3;
        }
        BasisSet::new(n_atoms, n, cap, 1.1, a, 0.7, 1.3).unwrap()
    }

    #[test]
    fn monomials_two_atoms() {
        let m = symmetrized_monomials(2, 2);
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].rep, vec![1]);
        assert_eq!(m[1].rep, vec![2]);
    }

    #[test]
    fn monomials_three_atoms_cap1() {
        let m = symmetrized_monomials(3, 1);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].terms.len(), 3); // sum over the three pairs
    }

    #[test]
    fn monomials_three_atoms_cap2() {
        // degree <= 2 invariants: {sum f, sum f^2, sum_{p<q} f_p f_q}
        let m = symmetrized_monomials(3, 2);
        assert_eq!(m.len(), 3);
        let degrees: Vec<u32> = m.iter().map(|x| x.degree).collect();
        assert_eq!(degrees, vec![1, 2, 2]);
        // brute-force check against orbit sums of all degree-2 vectors
        let sizes: Vec<usize> = m.iter().map(|x| x.terms.len()).collect();
        assert!(sizes.contains(&3)); // f^2 orbit and ff' orbit both have 3 terms
    }

    #[test]
    fn monomial_count_is_permutation_orbit_count() {
        // N = 4, cap 2: orbits of exponent vectors over 6 pairs.
        // deg 1: 1. deg 2: f^2 (1), f_p f_q sharing an atom (1),
        // f_p f_q disjoint (1) -> total 4.
        let m = symmetrized_monomials(4, 2);
        assert_eq!(m.len(), 4);
    }

    #[test]
    fn identity_basis_function() {
        // all a_j = 0, A ~ 0 limit, prefactor 1 -> log 0 sign +1
        let m = symmetrized_monomials(2, 2).len();
        let b = BasisSet::new(2, 1, 2, 1.0, vec![0.0; m], 1e-6, 1e-6).unwrap();
        let c = Configuration::from_columns(1, &[vec![0.0], vec![1.5]]).unwrap();
        let (log, sign) = eval_log_basis(&b, 0, &c).unwrap();
        // residual A contribution only, tiny but not exactly 0
        assert!(log.abs() < 1e-5);
        assert_eq!(sign, 1.0);
    }

    #[test]
    fn single_pair_reduction() {
        // N = 2 with only A active: log beta = A(r12)
        let m = symmetrized_monomials(2, 2).len();
        let b = BasisSet::new(2, 1, 2, 1.0, vec![0.0; m], 0.7, 1.3).unwrap();
        let c = Configuration::from_columns(3, &[vec![0.0, 0.0, 0.0], vec![1.2, 0.0, 0.0]]).unwrap();
        let (log, _) = eval_log_basis(&b, 0, &c).unwrap();
        let r: f64 = 1.2;
        assert_relative_eq!(log, -0.7 * r.powi(-5) - 1.3 * r, max_relative = 1e-14);
    }

    #[test]
    fn bosonic_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = small_basis(4, 5, 3);
        for _ in 0..20 {
            let c = random_config(&mut rng, 4, 3);
            let d = pair_distances(&c).unwrap();
            let v0 = b.eval_log(&d).unwrap();
            // random permutation of atom labels
            let mut perm: Vec<usize> = (0..4).collect();
            perm.shuffle(&mut rng);
            let cols: Vec<Vec<f64>> =
                perm.iter().map(|&j| c.coords().column(j).iter().cloned().collect()).collect();
            let cp = Configuration::from_columns(3, &cols).unwrap();
            let dp = pair_distances(&cp).unwrap();
            let v1 = b.eval_log(&dp).unwrap();
            for (x, y) in v0.iter().zip(&v1) {
                assert_relative_eq!(x.0, y.0, max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn finite_difference_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = small_basis(3, 4, 3);
        let wf = TrialWavefunction::new(b, vec![1.0, 0.5, -0.25, 0.1]).unwrap();
        for _ in 0..10 {
            let c = random_config(&mut rng, 3, 3);
            let d = pair_distances(&c).unwrap();
            let full = wf.eval_full(&d).unwrap();
            let h = 1e-5;
            let np = d.as_slice().len();
            for p in 0..np {
                let mut rp = d.as_slice().to_vec();
                rp[p] += h;
                let dp = DistanceSet::from_raw(3, rp.clone()).unwrap();
                rp[p] -= 2.0 * h;
                let dm = DistanceSet::from_raw(3, rp).unwrap();
                let (lp, _) = wf.eval_log(&dp).unwrap();
                let (lm, _) = wf.eval_log(&dm).unwrap();
                assert_relative_eq!(full.derivs.d1[p], (lp - lm) / (2.0 * h), max_relative = 1e-6, epsilon = 1e-8);
                let h = 5e-4; // larger step: mixed partials are roundoff-limited
                for q in 0..np {
                    let shift = |dr_p: f64, dr_q: f64| {
                        let mut r = d.as_slice().to_vec();
                        r[p] += dr_p;
                        r[q] += dr_q;
                        let ds = DistanceSet::from_raw(3, r).unwrap();
                        wf.eval_log(&ds).unwrap().0
                    };
                    let fd = (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h)) / (4.0 * h * h);
                    assert_relative_eq!(full.derivs.d2[(p, q)], fd, max_relative = 1e-4, epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn translation_sum_rule() {
        // sum_i grad_i log psi = 0 for distance-only wavefunctions
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let b = small_basis(4, 4, 2);
        let wf = TrialWavefunction::new(b, vec![1.0, -0.3, 0.2, 0.05]).unwrap();
        let c = random_config(&mut rng, 4, 3);
        let d = pair_distances(&c).unwrap();
        let full = wf.eval_full(&d).unwrap();
        let g = crate::geometry::grad_cartesian(&c, &d, &full.derivs.d1);
        for alpha in 0..3 {
            let s: f64 = (0..4).map(|i| g[(alpha, i)]).sum();
            assert!(s.abs() < 1e-10, "translation sum rule violated: {s}");
        }
    }

    #[test]
    fn gradient_antisymmetric_for_pair() {
        let b = small_basis(2, 2, 2);
        let wf = TrialWavefunction::new(b, vec![1.0, 0.4]).unwrap();
        let c = Configuration::from_columns(3, &[vec![0.0, 0.0, 0.0], vec![0.9, 0.3, -0.2]]).unwrap();
        let d = pair_distances(&c).unwrap();
        let full = wf.eval_full(&d).unwrap();
        let g = crate::geometry::grad_cartesian(&c, &d, &full.derivs.d1);
        for alpha in 0..3 {
            assert_relative_eq!(g[(alpha, 0)], -g[(alpha, 1)], max_relative = 1e-12);
        }
    }

    #[test]
    fn guiding_weight_forms() {
        let b = small_basis(3, 3, 2);
        let wf = TrialWavefunction::new(b, vec![1.0, 0.2, -0.1]).unwrap();
        let c = Configuration::from_columns(
            2,
            &[vec![0.0, 0.0], vec![1.1, 0.0], vec![0.4, 0.9]],
        )
        .unwrap();
        let d = pair_distances(&c).unwrap();
        let (log_abs, _) = wf.eval_log(&d).unwrap();
        // psi_g^2 = psi~^(2/rho): weight (2/rho) log |psi~|
        let g2 = GuidingFunction::new(wf.clone(), 2.0).unwrap();
        assert_relative_eq!(g2.log_weight(&d).unwrap(), log_abs, max_relative = 1e-14);
        let g3 = GuidingFunction::new(wf, 3.0).unwrap();
        assert_relative_eq!(g3.log_weight(&d).unwrap(), 2.0 / 3.0 * log_abs, max_relative = 1e-14);
    }

    #[test]
    fn rho_out_of_range_rejected() {
        let b = small_basis(2, 1, 1);
        let wf = TrialWavefunction::new(b, vec![1.0]).unwrap();
        assert!(GuidingFunction::new(wf, 1.5).is_err());
    }

    #[test]
    fn exponent_clamp_reports_offender() {
        let m = symmetrized_monomials(2, 1).len();
        let mut a = vec![0.0; m];
        a[0] = 1e9;
        let b = BasisSet::new(2, 1, 1, 1.0, a, 0.5, 1.0).unwrap();
        let c = Configuration::from_columns(1, &[vec![0.0], vec![0.8]]).unwrap();
        match eval_log_basis(&b, 0, &c) {
            Err(Error::ParameterRange(msg)) => assert!(msg.contains("a_0"), "msg: {msg}"),
            other => panic!("expected parameter-range error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let m = symmetrized_monomials(2, 1).len();
        assert!(BasisSet::new(2, 1, 1, 1.0, vec![0.0; m], -1.0, 1.0).is_err());
        assert!(BasisSet::new(2, 1, 1, 1.0, vec![0.0; m], 1.0, 0.0).is_err());
        assert!(BasisSet::new(2, 1, 1, 5.0, vec![0.0; m], 1.0, 1.0).is_err());
    }

    #[test]
    fn document_roundtrip_bit_exact() {
        let b = small_basis(3, 3, 2);
        let doc = WavefunctionDocument::from_parts(
            "Ar",
            3,
            6.9635e-4,
            2.5,
            &b,
            vec![vec![1.0, 0.1 + 0.2, -3.0e-17], vec![0.5, std::f64::consts::PI, 1e300]],
            Some(-2.5529532199999998),
        );
        let text = doc.to_text();
        let back = WavefunctionDocument::from_text(&text).unwrap();
        assert_eq!(doc.species, back.species);
        assert_eq!(doc.a, back.a);
        assert_eq!(doc.coeffs, back.coeffs);
        assert_eq!(doc.reference_energy, back.reference_energy);
        assert_eq!(doc.sigma_s.to_bits(), back.sigma_s.to_bits());
        assert_eq!(text, back.to_text());
    }
}
