//! Experiment layer: declarative configs, the optimize -> VMC -> CFMC
//! pipeline per dimension, quadratic fits in D, and table emission.

use std::fmt::Write as _;

use rand::prelude::*;
use rayon::prelude::*;

use crate::cfmc::{self, CfmcConfig};
use crate::error::{Error, Result};
use crate::geometry::{Configuration, ClusterSpec};
use crate::hamiltonian::{species_inv_mass, Hamiltonian, Potential};
use crate::optim::NelderMead;
use crate::sampler::{stream_rng, GuidedWavefunction, LogTarget, WalkerEnsemble};
use crate::spectral::{self, ClusterBasis};
use crate::wavefunction::{
    symmetrized_monomials, BasisSet, GuidingFunction, TrialWavefunction, WavefunctionDocument,
    DEFAULT_RHO,
};

/// Basis sizes that reach ~1e-4 precision at desk budgets.
pub fn default_basis_size(n_atoms: usize) -> usize {
    if n_atoms <= 3 {
        8
    } else {
        12
    }
}

/// Smallest monomial degree cap whose orbit count covers the basis.
pub fn default_degree_cap(n_atoms: usize, basis_n: usize) -> Result<u32> {
    for cap in 1..=8u32 {
        if symmetrized_monomials(n_atoms, cap).len() + 1 >= basis_n {
            return Ok(cap);
        }
    }
    Err(Error::Validation(format!(
        "no degree cap up to 8 yields {basis_n} basis functions for N = {n_atoms}"
    )))
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub species: String,
    pub n_atoms: usize,
    pub dims: Vec<usize>,
    pub n_states: usize,
    pub basis_n: usize,
    pub degree_cap: u32,
    pub opt_samples: usize,
    pub prod_samples: usize,
    pub walkers: usize,
    pub cfmc_starts: usize,
    /// Zero means mass-scaled defaults (tau = 1e-3 m, t_max = 0.02 m).
    pub tau: f64,
    pub t_max: f64,
    pub n_grid: usize,
    pub svd_threshold: f64,
    pub rho: f64,
    pub seed: u64,
    pub out: String,
}

impl ExperimentConfig {
    pub fn defaults(species: &str, n_atoms: usize, dims: Vec<usize>) -> Result<Self> {
        let basis_n = default_basis_size(n_atoms);
        let cfg = ExperimentConfig {
            species: species.to_string(),
            n_atoms,
            dims,
            n_states: 2,
            basis_n,
            degree_cap: default_degree_cap(n_atoms, basis_n)?,
            opt_samples: 10_000,
            prod_samples: 1_000_000,
            walkers: 256,
            cfmc_starts: 4096,
            tau: 0.0,
            t_max: 0.0,
            n_grid: 6,
            svd_threshold: spectral::DEFAULT_SVD_THRESHOLD,
            rho: DEFAULT_RHO,
            seed: 1,
            out: ".".to_string(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        species_inv_mass(&self.species)
            .ok_or_else(|| Error::Validation(format!("unknown species: {}", self.species)))?;
        if self.dims.is_empty() {
            return Err(Error::Validation("dims list must not be empty".into()));
        }
        if self.n_states == 0 || self.n_states > self.basis_n {
            return Err(Error::Validation(format!(
                "n_states must lie in 1..={}, got {}",
                self.basis_n, self.n_states
            )));
        }
        for &(label, v) in [
            ("opt_samples", self.opt_samples),
            ("prod_samples", self.prod_samples),
            ("walkers", self.walkers),
            ("cfmc_starts", self.cfmc_starts),
            ("n_grid", self.n_grid),
        ]
        .iter()
        {
            if v == 0 {
                return Err(Error::Validation(format!("{label} must be positive")));
            }
        }
        if !(self.svd_threshold > 0.0 && self.svd_threshold < 1.0) {
            return Err(Error::Validation("svd_threshold must lie in (0, 1)".into()));
        }
        if !(2.0..=3.0).contains(&self.rho) {
            return Err(Error::Validation(format!("rho must lie in [2, 3], got {}", self.rho)));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "species = {}", self.species);
        let _ = writeln!(s, "n_atoms = {}", self.n_atoms);
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "dims = {}", dims.join(","));
        let _ = writeln!(s, "n_states = {}", self.n_states);
        let _ = writeln!(s, "basis_n = {}", self.basis_n);
        let _ = writeln!(s, "degree_cap = {}", self.degree_cap);
        let _ = writeln!(s, "opt_samples = {}", self.opt_samples);
        let _ = writeln!(s, "prod_samples = {}", self.prod_samples);
        let _ = writeln!(s, "walkers = {}", self.walkers);
        let _ = writeln!(s, "cfmc_starts = {}", self.cfmc_starts);
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "t_max = {}", self.t_max);
        let _ = writeln!(s, "n_grid = {}", self.n_grid);
        let _ = writeln!(s, "svd_threshold = {}", self.svd_threshold);
        let _ = writeln!(s, "rho = {}", self.rho);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out = {}", self.out);
        s
    }

    /// Flat key = value parsing with typed fields and unknown-key rejection.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut species = None;
        let mut n_atoms = None;
        let mut dims: Option<Vec<usize>> = None;
        let mut cfg_partial: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Validation(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            match key.as_str() {
                "species" => species = Some(value),
                "n_atoms" => n_atoms = Some(parse_num::<usize>(&key, &value)?),
                "dims" => {
                    let parsed = value
                        .split(',')
                        .map(|p| parse_num::<usize>("dims", p.trim()))
                        .collect::<Result<Vec<_>>>()?;
                    dims = Some(parsed);
                }
                "n_states" | "basis_n" | "degree_cap" | "opt_samples" | "prod_samples"
                | "walkers" | "cfmc_starts" | "n_grid" | "tau" | "t_max" | "svd_threshold"
                | "rho" | "seed" | "out" => cfg_partial.push((key, value)),
                other => {
                    return Err(Error::Validation(format!("unknown config key: {other}")));
                }
            }
        }
        let species = species.ok_or_else(|| Error::Validation("missing key: species".into()))?;
        let n_atoms = n_atoms.ok_or_else(|| Error::Validation("missing key: n_atoms".into()))?;
        let dims = dims.ok_or_else(|| Error::Validation("missing key: dims".into()))?;
        let mut cfg = ExperimentConfig::defaults(&species, n_atoms, dims)?;
        for (key, value) in cfg_partial {
            match key.as_str() {
                "n_states" => cfg.n_states = parse_num(&key, &value)?,
                "basis_n" => {
                    cfg.basis_n = parse_num(&key, &value)?;
                    cfg.degree_cap = default_degree_cap(cfg.n_atoms, cfg.basis_n)?;
                }
                "degree_cap" => cfg.degree_cap = parse_num(&key, &value)?,
                "opt_samples" => cfg.opt_samples = parse_num(&key, &value)?,
                "prod_samples" => cfg.prod_samples = parse_num(&key, &value)?,
                "walkers" => cfg.walkers = parse_num(&key, &value)?,
                "cfmc_starts" => cfg.cfmc_starts = parse_num(&key, &value)?,
                "n_grid" => cfg.n_grid = parse_num(&key, &value)?,
                "tau" => cfg.tau = parse_num(&key, &value)?,
                "t_max" => cfg.t_max = parse_num(&key, &value)?,
                "svd_threshold" => cfg.svd_threshold = parse_num(&key, &value)?,
                "rho" => cfg.rho = parse_num(&key, &value)?,
                "seed" => cfg.seed = parse_num(&key, &value)?,
                "out" => cfg.out = value,
                _ => unreachable!(),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Validation(format!("invalid value for {key}: {value}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Vmc,
    Cfmc,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vmc => "vmc",
            Method::Cfmc => "cfmc",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "vmc" => Ok(Method::Vmc),
            "cfmc" => Ok(Method::Cfmc),
            other => Err(Error::Validation(format!("unknown method tag: {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub species: String,
    pub n_atoms: usize,
    pub dim: usize,
    pub state: usize,
    pub energy: f64,
    pub error: f64,
    pub method: Method,
    /// Deviation from the quadratic fit, once a fit has been attached.
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateFit {
    pub state: usize,
    pub method: Method,
    pub offset: f64,
    pub curvature: f64,
    pub center: f64,
    pub d_min: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub fits: Vec<StateFit>,
    pub seed: u64,
    /// Per-dimension failures; other dimensions still complete.
    pub failures: Vec<(usize, String)>,
}

/// Atoms on a chain at near-minimum spacing, with a deterministic jitter
/// in the remaining directions so walkers start spread out.
pub fn initial_configurations(
    n_atoms: usize,
    dim: usize,
    n_walkers: usize,
    seed: u64,
) -> Vec<Configuration> {
    let mut rng = stream_rng(seed ^ 0x1417_0000_0000_0000, 0, 0);
    (0..n_walkers)
        .map(|_| {
            let mut cols = Vec::with_capacity(n_atoms);
            for atom in 0..n_atoms {
                let mut x = vec![0.0; dim];
                x[0] = 1.12 * atom as f64;
                for entry in x.iter_mut() {
                    *entry += 0.05 * rng.gen::<f64>();
                }
                cols.push(x);
            }
            Configuration::from_columns(dim, &cols).expect("jittered chain is nondegenerate")
        })
        .collect()
}

/// Stage 1: sample the default-parameter guiding function, minimize the
/// summed chi^2 of the target states, and package the optimized
/// wavefunction with its linear coefficients.
pub fn optimize_stage(cfg: &ExperimentConfig, dim: usize) -> Result<WavefunctionDocument> {
    let inv_mass = species_inv_mass(&cfg.species)
        .ok_or_else(|| Error::Validation(format!("unknown species: {}", cfg.species)))?;
    let spec = ClusterSpec::new(cfg.n_atoms, dim, inv_mass, &cfg.species)?;
    let ham = Hamiltonian::lennard_jones(&spec);
    let mass = spec.mass();
    let seed = cfg.seed ^ (dim as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);

    let basis0 = BasisSet::for_cluster(&spec, cfg.basis_n, cfg.degree_cap)?;
    let mut coeffs0 = vec![0.0; cfg.basis_n];
    coeffs0[0] = 1.0; // constant prefactor: nodeless start
    let guiding0 =
        GuidingFunction::new(TrialWavefunction::new(basis0.clone(), coeffs0)?, cfg.rho)?;
    let target0 = GuidedWavefunction { guiding: &guiding0, ham: &ham };
    let mut ens = WalkerEnsemble::new(
        initial_configurations(cfg.n_atoms, dim, cfg.walkers, seed),
        0.1 * mass.powf(-0.25),
        seed,
        &target0,
    )?;
    ens.autotune_step(&target0, 0.5)?;
    ens.equilibrate(&target0);
    let opt_samples = ens.sample(&target0, cfg.opt_samples, 2);
    let opt_logs: Vec<f64> = opt_samples
        .par_iter()
        .map(|c| Ok(0.5 * target0.log_weight(c)?))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<usize> = (0..cfg.n_states).collect();
    let (basis, _report) = spectral::optimize_nonlinear(
        &basis0,
        &ham,
        &opt_samples,
        &opt_logs,
        &targets,
        cfg.svd_threshold,
        400,
    )?;

    let opt_acc = spectral::accumulate(
        &opt_samples,
        &opt_logs,
        &ClusterBasis { basis: &basis, ham: &ham },
    )?;
    let opt_spec = spectral::solve_spectrum(&opt_acc, cfg.svd_threshold)?;
    let coeffs: Vec<Vec<f64>> = (0..cfg.n_states)
        .map(|k| opt_spec.right.column(k).iter().cloned().collect())
        .collect();
    Ok(WavefunctionDocument::from_parts(
        &cfg.species,
        dim,
        inv_mass,
        cfg.rho,
        &basis,
        coeffs,
        Some(opt_spec.eigenvalues[0]),
    ))
}

/// Stage 2: production VMC with the optimized guiding function. Returns
/// the per-state rows and a thinned sample for seeding the projection.
pub fn production_stage(
    cfg: &ExperimentConfig,
    doc: &WavefunctionDocument,
) -> Result<(Vec<ResultRow>, Vec<Configuration>)> {
    let dim = doc.dim;
    let spec = ClusterSpec::new(doc.n_atoms, dim, doc.inv_mass, &doc.species)?;
    let ham = Hamiltonian::lennard_jones(&spec);
    let mass = spec.mass();
    let seed = cfg.seed ^ (dim as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 1;

    let basis = doc.basis()?;
    let guiding =
        GuidingFunction::new(TrialWavefunction::new(basis.clone(), doc.coeffs[0].clone())?, doc.rho)?;
    let target = GuidedWavefunction { guiding: &guiding, ham: &ham };
    let mut ens = WalkerEnsemble::new(
        initial_configurations(doc.n_atoms, dim, cfg.walkers, seed),
        0.1 * mass.powf(-0.25),
        seed,
        &target,
    )?;
    ens.autotune_step(&target, 0.5)?;
    ens.equilibrate(&target);
    let prod_samples = ens.sample(&target, cfg.prod_samples, 2);
    let prod_logs: Vec<f64> = prod_samples
        .par_iter()
        .map(|c| Ok(0.5 * target.log_weight(c)?))
        .collect::<Result<Vec<_>>>()?;
    let acc = spectral::accumulate(
        &prod_samples,
        &prod_logs,
        &ClusterBasis { basis: &basis, ham: &ham },
    )?;
    let (vmc, vmc_errors) = spectral::solve_with_errors(&acc, cfg.svd_threshold, 64)?;

    let mut rows = Vec::new();
    for k in 0..cfg.n_states {
        if vmc.complex_pair[k] {
            return Err(Error::DegenerateState);
        }
        rows.push(ResultRow {
            species: doc.species.clone(),
            n_atoms: doc.n_atoms,
            dim,
            state: k,
            energy: vmc.eigenvalues[k],
            error: vmc_errors[k],
            method: Method::Vmc,
            deviation: None,
        });
    }
    let stride = (prod_samples.len() / cfg.cfmc_starts).max(1);
    let starts: Vec<Configuration> =
        prod_samples.into_iter().step_by(stride).take(cfg.cfmc_starts).collect();
    Ok((rows, starts))
}

/// Stage 3: CFMC projection from a psi_g^2-distributed start ensemble.
pub fn projection_stage(
    cfg: &ExperimentConfig,
    doc: &WavefunctionDocument,
    starts: &[Configuration],
    e_ref: f64,
) -> Result<Vec<ResultRow>> {
    let dim = doc.dim;
    let spec = ClusterSpec::new(doc.n_atoms, dim, doc.inv_mass, &doc.species)?;
    let ham = Hamiltonian::lennard_jones(&spec);
    let mass = spec.mass();
    let seed = cfg.seed ^ (dim as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 2;

    let basis = doc.basis()?;
    let guiding =
        GuidingFunction::new(TrialWavefunction::new(basis.clone(), doc.coeffs[0].clone())?, doc.rho)?;
    let target = GuidedWavefunction { guiding: &guiding, ham: &ham };
    let mut ccfg = CfmcConfig::for_mass(mass, e_ref);
    if cfg.tau > 0.0 {
        ccfg.tau = cfg.tau;
    }
    if cfg.t_max > 0.0 {
        ccfg.t_max = cfg.t_max;
    }
    ccfg.n_grid = cfg.n_grid;
    let masses = vec![mass; doc.n_atoms];
    let run = cfmc::project(
        starts,
        &target,
        &ClusterBasis { basis: &basis, ham: &ham },
        &masses,
        &ccfg,
        seed,
    )?;
    let levels = cfmc::extrapolate_levels(&run, cfg.svd_threshold, cfg.n_states)?;
    Ok(levels
        .into_iter()
        .map(|lvl| ResultRow {
            species: doc.species.clone(),
            n_atoms: doc.n_atoms,
            dim,
            state: lvl.state,
            energy: lvl.energy,
            error: lvl.error.hypot(lvl.drift.abs()),
            method: Method::Cfmc,
            deviation: None,
        })
        .collect())
}

/// The full optimize -> production-VMC -> CFMC pipeline for one dimension.
pub fn run_single_dim(cfg: &ExperimentConfig, dim: usize) -> Result<Vec<ResultRow>> {
    let doc = optimize_stage(cfg, dim)?;
    let (mut rows, starts) = production_stage(cfg, &doc)?;
    let e_ref = rows[0].energy;
    rows.extend(projection_stage(cfg, &doc, &starts, e_ref)?);
    Ok(rows)
}

/// Run every dimension; failures are recorded per D and do not abort the
/// remaining dimensions. Deterministic for a fixed seed.
pub fn run_experiment(cfg: &ExperimentConfig, parallel_dims: bool) -> Result<ResultTable> {
    cfg.validate()?;
    let results: Vec<(usize, Result<Vec<ResultRow>>)> = if parallel_dims {
        cfg.dims.par_iter().map(|&d| (d, run_single_dim(cfg, d))).collect()
    } else {
        cfg.dims.iter().map(|&d| (d, run_single_dim(cfg, d))).collect()
    };
    let mut table = ResultTable { seed: cfg.seed, ..Default::default() };
    for (d, res) in results {
        match res {
            Ok(rows) => table.rows.extend(rows),
            Err(e) => table.failures.push((d, e.to_string())),
        }
    }
    Ok(table)
}

/// Least-squares fit of E(D) = a + b (D - center)^2 over points with
/// D >= d_min. Returns (a, b); needs >= 3 fitted points and at least two
/// distinct values of (D - center)^2.
pub fn parabola_fit(points: &[(f64, f64)], d_min: f64, center: f64) -> Result<(f64, f64)> {
    let fitted: Vec<(f64, f64)> =
        points.iter().filter(|p| p.0 >= d_min).map(|&(d, e)| ((d - center) * (d - center), e)).collect();
    if fitted.len() < 3 {
        return Err(Error::Fit(format!("need >= 3 points with D >= {d_min}, got {}", fitted.len())));
    }
    let n = fitted.len() as f64;
    let su: f64 = fitted.iter().map(|p| p.0).sum();
    let suu: f64 = fitted.iter().map(|p| p.0 * p.0).sum();
    let se: f64 = fitted.iter().map(|p| p.1).sum();
    let sue: f64 = fitted.iter().map(|p| p.0 * p.1).sum();
    let det = n * suu - su * su;
    if det.abs() <= 1e-12 * (n * suu).abs().max(1e-300) {
        return Err(Error::Fit("curvature not identifiable: all fitted D equidistant from center".into()));
    }
    let b = (n * sue - su * se) / det;
    let a = (se - b * su) / n;
    Ok((a, b))
}

/// Fit each (state, method) series over D >= d_min and attach deviations
/// to every row of that series, including excluded points.
pub fn fit_table(table: &mut ResultTable, d_min: f64, center: f64) -> Result<()> {
    let mut series: Vec<(usize, Method)> = table
        .rows
        .iter()
        .map(|r| (r.state, r.method))
        .collect();
    series.sort_by_key(|&(s, m)| (s, m == Method::Cfmc));
    series.dedup();
    table.fits.clear();
    for (state, method) in series {
        let points: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter(|r| r.state == state && r.method == method)
            .map(|r| (r.dim as f64, r.energy))
            .collect();
        let (a, b) = parabola_fit(&points, d_min, center)?;
        for r in table.rows.iter_mut().filter(|r| r.state == state && r.method == method) {
            let u = (r.dim as f64 - center) * (r.dim as f64 - center);
            r.deviation = Some(r.energy - (a + b * u));
        }
        table.fits.push(StateFit { state, method, offset: a, curvature: b, center, d_min });
    }
    Ok(())
}

pub const CSV_HEADER: &str = "species,N,D,k,E,error,method,dE";

/// One row per (D, state, method), full decimal precision.
pub fn emit_csv(table: &ResultTable) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &table.rows {
        let dev = r.deviation.map(|d| format!("{d}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.species, r.n_atoms, r.dim, r.state, r.energy, r.error, r.method.as_str(), dev
        );
    }
    s
}

pub fn parse_csv(text: &str) -> Result<ResultTable> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(Error::Validation("missing or wrong CSV header".into())),
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Validation(format!("line {}: expected 8 fields", lineno + 2)));
        }
        rows.push(ResultRow {
            species: f[0].to_string(),
            n_atoms: parse_num("N", f[1])?,
            dim: parse_num("D", f[2])?,
            state: parse_num("k", f[3])?,
            energy: parse_num("E", f[4])?,
            error: parse_num("error", f[5])?,
            method: Method::parse(f[6])?,
            deviation: if f[7].is_empty() { None } else { Some(parse_num("dE", f[7])?) },
        });
    }
    Ok(ResultTable { rows, ..Default::default() })
}

/// Human-readable report: fit coefficients, seed, failures, and the
/// degeneracy check |E(N-1) - E(N+1)| / combined error when both
/// dimensions are present.
pub fn emit_report(table: &ResultTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "seed = {}", table.seed);
    for f in &table.fits {
        let _ = writeln!(
            s,
            "fit state {} [{}]: E(D) = {} + {} (D - {})^2 over D >= {}",
            f.state,
            f.method.as_str(),
            f.offset,
            f.curvature,
            f.center,
            f.d_min
        );
    }
    for (d, msg) in &table.failures {
        let _ = writeln!(s, "FAILED D = {d}: {msg}");
    }
    if let Some(r) = table.rows.first() {
        let n = r.n_atoms;
        for method in [Method::Vmc, Method::Cfmc] {
            let lo = table
                .rows
                .iter()
                .find(|r| r.dim + 1 == n && r.state == 0 && r.method == method);
            let hi = table
                .rows
                .iter()
                .find(|r| r.dim == n + 1 && r.state == 0 && r.method == method);
            if let (Some(lo), Some(hi)) = (lo, hi) {
                let combined = lo.error.hypot(hi.error);
                let _ = writeln!(
                    s,
                    "degeneracy [{}]: |E({}) - E({})| / combined error = {}",
                    method.as_str(),
                    n - 1,
                    n + 1,
                    (lo.energy - hi.energy).abs() / combined
                );
            }
        }
    }
    s
}

/// Classical minimum of the total pair potential over Cartesian
/// coordinates, via restarted simplex minimization.
pub fn classical_minimum(n_atoms: usize, dim: usize) -> Result<f64> {
    let ham = Hamiltonian::new(vec![1.0; n_atoms], Potential::LennardJones)?;
    let nvar = n_atoms * dim;
    let objective = |x: &[f64]| -> f64 {
        let cols: Vec<Vec<f64>> = (0..n_atoms).map(|a| x[a * dim..(a + 1) * dim].to_vec()).collect();
        match Configuration::from_columns(dim, &cols) {
            Ok(c) => ham.potential_energy(&c, None).unwrap_or(f64::MAX / 4.0),
            Err(_) => f64::MAX / 4.0,
        }
    };
    let mut best = f64::INFINITY;
    for restart in 0..8u64 {
        let mut rng = stream_rng(0x3141 ^ restart, 0, 0);
        let mut x0 = vec![0.0; nvar];
        for atom in 0..n_atoms {
            x0[atom * dim] = 1.12 * atom as f64;
            for alpha in 0..dim {
                x0[atom * dim + alpha] += 0.3 * (rng.gen::<f64>() - 0.5);
            }
        }
        let mut nm = NelderMead::new(vec![(-20.0, 20.0); nvar], vec![0.25; nvar]);
        nm.max_evals = 40_000;
        nm.ftol = 1e-13;
        nm.xtol = 1e-10;
        let res = nm.minimize(objective, &x0);
        best = best.min(res.fx);
    }
    if !best.is_finite() {
        return Err(Error::Fit("classical minimization diverged".into()));
    }
    Ok(best)
}
