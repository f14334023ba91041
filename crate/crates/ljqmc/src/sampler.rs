//! Metropolis sampling of psi_g^2 with deterministic seeding, step-size
//! autotuning, and Flyvbjerg blocking error analysis. Walkers evolve
//! independently; every stream is keyed by (master seed, walker, sweep)
//! so results are bit-reproducible regardless of thread count.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Configuration;

/// Relative sampling density: log psi_g(R)^2. Implementations must be
/// cheap to evaluate; failures are treated as rejected moves.
pub trait LogTarget: Sync {
    fn log_weight(&self, config: &Configuration) -> Result<f64>;
}

/// Target with the extra structure needed for drift-diffusion projection.
pub trait GuidedTarget: LogTarget {
    /// grad log psi_g, a D x N matrix.
    fn drift(&self, config: &Configuration) -> Result<DMatrix<f64>>;
    /// Local energy of the guiding function.
    fn local_energy(&self, config: &Configuration) -> Result<f64>;
}

/// The production target: a guiding function tied to its Hamiltonian.
pub struct GuidedWavefunction<'a> {
    pub guiding: &'a crate::wavefunction::GuidingFunction,
    pub ham: &'a crate::hamiltonian::Hamiltonian,
}

impl LogTarget for GuidedWavefunction<'_> {
    fn log_weight(&self, config: &Configuration) -> Result<f64> {
        let dists = crate::geometry::pair_distances(config)?;
        self.guiding.log_weight(&dists)
    }
}

impl GuidedTarget for GuidedWavefunction<'_> {
    fn drift(&self, config: &Configuration) -> Result<DMatrix<f64>> {
        let dists = crate::geometry::pair_distances(config)?;
        let ev = self.guiding.eval_full(&dists)?;
        Ok(crate::geometry::grad_cartesian(config, &dists, &ev.derivs.d1))
    }

    fn local_energy(&self, config: &Configuration) -> Result<f64> {
        let dists = crate::geometry::pair_distances(config)?;
        let ev = self.guiding.eval_full(&dists)?;
        self.ham.local_energy(config, &dists, &ev.derivs)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Counter-based stream: a fresh generator keyed by (seed, walker, sweep).
pub fn stream_rng(master_seed: u64, walker: u64, sweep: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(master_seed ^ walker.wrapping_mul(0x9e3779b97f4a7c15)) ^ sweep);
    ChaCha8Rng::seed_from_u64(key)
}

#[derive(Debug, Clone)]
struct Walker {
    config: Configuration,
    log_weight: f64,
    accepted: u64,
    proposed: u64,
}

/// Ensemble of independent Metropolis walkers.
#[derive(Debug, Clone)]
pub struct WalkerEnsemble {
    walkers: Vec<Walker>,
    pub step_scale: f64,
    pub master_seed: u64,
    sweep: u64,
}

impl WalkerEnsemble {
    pub fn new(
        initial: Vec<Configuration>,
        step_scale: f64,
        master_seed: u64,
        target: &impl LogTarget,
    ) -> Result<Self> {
        if initial.is_empty() {
            return Err(Error::Validation("ensemble needs at least one walker".into()));
        }
        if !(step_scale > 0.0) {
            return Err(Error::Validation("step_scale must be positive".into()));
        }
        let walkers = initial
            .into_iter()
            .map(|config| {
                let log_weight = target.log_weight(&config)?;
                Ok(Walker { config, log_weight, accepted: 0, proposed: 0 })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WalkerEnsemble { walkers, step_scale, master_seed, sweep: 0 })
    }

    pub fn n_walkers(&self) -> usize {
        self.walkers.len()
    }

    pub fn configurations(&self) -> Vec<Configuration> {
        self.walkers.iter().map(|w| w.config.clone()).collect()
    }

    pub fn acceptance(&self) -> f64 {
        let acc: u64 = self.walkers.iter().map(|w| w.accepted).sum();
        let prop: u64 = self.walkers.iter().map(|w| w.proposed).sum();
        if prop == 0 {
            0.0
        } else {
            acc as f64 / prop as f64
        }
    }

    pub fn reset_stats(&mut self) {
        for w in &mut self.walkers {
            w.accepted = 0;
            w.proposed = 0;
        }
    }

    /// One sweep: every walker proposes one Gaussian move per atom with
    /// acceptance min(1, psi_g(R')^2 / psi_g(R)^2).
    pub fn metropolis_sweep(&mut self, target: &impl LogTarget) {
        let seed = self.master_seed;
        let sweep = self.sweep;
        let step = self.step_scale;
        self.walkers.par_iter_mut().enumerate().for_each(|(wid, w)| {
            let mut rng = stream_rng(seed, wid as u64, sweep);
            let n = w.config.n_atoms();
            let d = w.config.dim();
            for atom in 0..n {
                w.proposed += 1;
                let mut proposal = w.config.clone();
                for alpha in 0..d {
                    let dx: f64 = rng.sample(StandardNormal);
                    proposal.coords_mut()[(alpha, atom)] += step * dx;
                }
                match target.log_weight(&proposal) {
                    Ok(lw) => {
                        let log_ratio = lw - w.log_weight;
                        let u: f64 = rng.gen::<f64>();
                        if log_ratio >= 0.0 || u < log_ratio.exp() {
                            w.config = proposal;
                            w.log_weight = lw;
                            w.accepted += 1;
                        }
                    }
                    Err(_) => {} // rejected move on evaluation failure
                }
            }
        });
        self.sweep += 1;
    }

    pub fn run_sweeps(&mut self, target: &impl LogTarget, n: usize) {
        for _ in 0..n {
            self.metropolis_sweep(target);
        }
    }

    /// Discard max(1000, 20 * estimated autocorrelation time) sweeps.
    pub fn equilibrate(&mut self, target: &impl LogTarget) -> usize {
        let probe = 1000usize;
        let mut series = Vec::with_capacity(probe);
        for _ in 0..probe {
            self.metropolis_sweep(target);
            series.push(self.walkers[0].log_weight);
        }
        let tau = integrated_autocorrelation(&series);
        let extra = ((20.0 * tau) as usize).saturating_sub(probe);
        self.run_sweeps(target, extra);
        self.reset_stats();
        probe + extra
    }

    /// Collect `n_samples` configurations (round-robin over walkers),
    /// separated by `stride` sweeps between collection rounds.
    pub fn sample(&mut self, target: &impl LogTarget, n_samples: usize, stride: usize) -> Vec<Configuration> {
        let mut out = Vec::with_capacity(n_samples);
        'outer: loop {
            self.run_sweeps(target, stride.max(1));
            for w in &self.walkers {
                out.push(w.config.clone());
                if out.len() == n_samples {
                    break 'outer;
                }
            }
        }
        out
    }

    /// Bisection on step_scale until the ensemble acceptance is within
    /// +-0.05 of the target. Tuning sweeps are discarded from statistics.
    pub fn autotune_step(&mut self, target: &impl LogTarget, target_acceptance: f64) -> Result<f64> {
        if !(target_acceptance > 0.2 && target_acceptance < 0.8) {
            return Err(Error::Validation(format!(
                "target acceptance must lie in (0.2, 0.8), got {target_acceptance}"
            )));
        }
        // enough proposals per probe that the +-0.05 window is resolvable
        let proposals_per_sweep = self.walkers.len() * self.walkers[0].config.n_atoms();
        let probe_sweeps = (2500 / proposals_per_sweep).max(20);
        let probe = |ens: &mut Self, step: f64| -> f64 {
            ens.step_scale = step;
            ens.reset_stats();
            ens.run_sweeps(target, probe_sweeps);
            ens.acceptance()
        };

        let mut step = self.step_scale;
        let mut acc = probe(self, step);
        if (acc - target_acceptance).abs() <= 0.05 {
            self.reset_stats();
            return Ok(step);
        }
        // bracket: acceptance decreases with step size
        let (mut lo, mut hi);
        if acc > target_acceptance {
            lo = step;
            let mut iter = 0;
            loop {
                step *= 2.0;
                acc = probe(self, step);
                iter += 1;
                if acc < target_acceptance {
                    hi = step;
                    break;
                }
                if iter > 50 {
                    return Err(Error::Tuning("failed to bracket from below".into()));
                }
            }
        } else {
            hi = step;
            let mut iter = 0;
            loop {
                step /= 2.0;
                acc = probe(self, step);
                iter += 1;
                if acc > target_acceptance {
                    lo = step;
                    break;
                }
                if iter > 50 {
                    return Err(Error::Tuning("failed to bracket from above".into()));
                }
            }
        }
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            let a = probe(self, mid);
            if (a - target_acceptance).abs() <= 0.05 {
                self.reset_stats();
                return Ok(mid);
            }
            if a > target_acceptance {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Err(Error::Tuning("bisection did not converge within 50 iterations".into()))
    }
}

/// Integrated autocorrelation time of a scalar series (sum of the
/// normalized autocorrelation up to the first lag below 0.05).
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var: f64 = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return 1.0;
    }
    let mut tau = 0.5;
    for k in 1..n / 2 {
        let c: f64 = (0..n - k).map(|t| (series[t] - mean) * (series[t + k] - mean)).sum::<f64>()
            / (n - k) as f64;
        let rho = c / var;
        if rho < 0.05 {
            break;
        }
        tau += rho;
    }
    tau
}

/// Blocking (successive pair averaging) error estimate.
#[derive(Debug, Clone)]
pub struct BlockingResult {
    pub mean: f64,
    pub error: f64,
    /// False if no plateau was found; the maximum-level estimate is used.
    pub converged: bool,
    /// Error estimate at each blocking level.
    pub levels: Vec<f64>,
}

/// Flyvbjerg-style blocking: pair-average repeatedly and take the error at
/// the first level where the estimate changes by < 5% over two levels.
pub fn blocking_error(series: &[f64]) -> Result<BlockingResult> {
    if series.len() < 64 {
        return Err(Error::Validation(format!(
            "blocking_error needs at least 64 samples, got {}",
            series.len()
        )));
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let mut data = series.to_vec();
    let mut levels = Vec::new();
    while data.len() >= 4 {
        let n = data.len() as f64;
        let m = data.iter().sum::<f64>() / n;
        let var: f64 = data.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        levels.push((var / (n - 1.0)).sqrt());
        let mut next = Vec::with_capacity(data.len() / 2);
        for c in data.chunks_exact(2) {
            next.push(0.5 * (c[0] + c[1]));
        }
        data = next;
    }
    // plateau: relative change < 5% over two consecutive levels
    for i in 0..levels.len().saturating_sub(2) {
        let a = levels[i];
        let b = levels[i + 1];
        let c = levels[i + 2];
        if a > 0.0 && ((b - a) / a).abs() < 0.05 && ((c - b) / b.max(1e-300)).abs() < 0.05 {
            return Ok(BlockingResult { mean, error: c, converged: true, levels });
        }
    }
    let error = levels.iter().cloned().fold(0.0, f64::max);
    Ok(BlockingResult { mean, error, converged: false, levels })
}
