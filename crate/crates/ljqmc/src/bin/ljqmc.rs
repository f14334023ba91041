use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ljqmc::error::Error;
use ljqmc::geometry::pair_distances;
use ljqmc::harness::{
    self, emit_csv, emit_report, fit_table, parse_csv, ExperimentConfig, ResultTable,
};
use ljqmc::sampler::stream_rng;
use ljqmc::wavefunction::WavefunctionDocument;
use ljqmc::{dimsym, geometry};

#[derive(Parser)]
#[command(name = "ljqmc", about = "Quantum Monte Carlo for Lennard-Jones clusters in D dimensions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the config-file master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config-file output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize trial-wavefunction parameters for one dimension.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dim: usize,
    },
    /// Production variational run from an optimized wavefunction file.
    Vmc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        wavefunction: PathBuf,
    },
    /// Projection run from an optimized wavefunction file.
    Cfmc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        wavefunction: PathBuf,
        /// Reference energy; defaults to the one stored in the wavefunction.
        #[arg(long)]
        e_ref: Option<f64>,
    },
    /// Exact-identity suite over randomized realizable configurations.
    VerifyIdentities {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed_offset: u64,
    },
    /// Full pipeline over every dimension in the config.
    ScanDims {
        #[arg(long)]
        config: PathBuf,
        /// Run the dimensions as parallel deterministic jobs.
        #[arg(long, default_value_t = false)]
        parallel_dims: bool,
    },
    /// Quadratic fit in D over an emitted results table.
    Fit {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        center: f64,
        #[arg(long, default_value_t = 2.0)]
        d_min: f64,
    },
}

fn exit_for(e: &Error) -> ExitCode {
    match e {
        Error::Validation(_) | Error::ParameterRange(_) | Error::Io(_) => ExitCode::from(2),
        _ => ExitCode::from(3),
    }
}

fn load_config(path: &Path, cli: &Cli) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = ExperimentConfig::from_text(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.display().to_string();
    }
    Ok(cfg)
}

fn write_out(dir: &str, name: &str, content: &str) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir)?;
    let path = Path::new(dir).join(name);
    std::fs::write(&path, content)?;
    Ok(path)
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Optimize { config, dim } => {
            let cfg = load_config(config, cli)?;
            let doc = harness::optimize_stage(&cfg, *dim)?;
            let path = write_out(&cfg.out, &format!("wf_d{dim}.txt"), &doc.to_text())?;
            println!("wavefunction written to {}", path.display());
            if let Some(e) = doc.reference_energy {
                println!("optimization-sample ground energy = {e}");
            }
        }
        Command::Vmc { config, wavefunction } => {
            let cfg = load_config(config, cli)?;
            let doc = WavefunctionDocument::from_text(&std::fs::read_to_string(wavefunction)?)?;
            let (rows, _starts) = harness::production_stage(&cfg, &doc)?;
            let table = ResultTable { rows, seed: cfg.seed, ..Default::default() };
            let csv = emit_csv(&table);
            print!("{csv}");
            write_out(&cfg.out, &format!("vmc_d{}.csv", doc.dim), &csv)?;
        }
        Command::Cfmc { config, wavefunction, e_ref } => {
            let cfg = load_config(config, cli)?;
            let doc = WavefunctionDocument::from_text(&std::fs::read_to_string(wavefunction)?)?;
            let e_ref = e_ref.or(doc.reference_energy).ok_or_else(|| {
                Error::Validation("no reference energy stored or supplied".into())
            })?;
            let (_rows, starts) = harness::production_stage(&cfg, &doc)?;
            let rows = harness::projection_stage(&cfg, &doc, &starts, e_ref)?;
            let table = ResultTable { rows, seed: cfg.seed, ..Default::default() };
            let csv = emit_csv(&table);
            print!("{csv}");
            write_out(&cfg.out, &format!("cfmc_d{}.csv", doc.dim), &csv)?;
        }
        Command::VerifyIdentities { trials, seed_offset } => {
            verify_identities(*trials, *seed_offset)?;
        }
        Command::ScanDims { config, parallel_dims } => {
            let cfg = load_config(config, cli)?;
            let mut table = harness::run_experiment(&cfg, *parallel_dims)?;
            // attach the quadratic fit when enough dimensions are present
            let _ = fit_table(&mut table, 2.0, cfg.n_atoms as f64);
            let csv = emit_csv(&table);
            let report = emit_report(&table);
            write_out(&cfg.out, "results.csv", &csv)?;
            write_out(&cfg.out, "report.txt", &report)?;
            print!("{report}");
            if !table.failures.is_empty() {
                return Err(Error::Validation(format!(
                    "{} dimension(s) failed; see report",
                    table.failures.len()
                )));
            }
        }
        Command::Fit { table, center, d_min } => {
            let text = std::fs::read_to_string(table)?;
            let mut parsed = parse_csv(&text)?;
            fit_table(&mut parsed, *d_min, *center)?;
            std::fs::write(table, emit_csv(&parsed))?;
            print!("{}", emit_report(&parsed));
        }
    }
    Ok(())
}

/// Exact-math suite: worst-case residuals of the Grammian identities over
/// randomized realizable configurations for N in {3, 4, 5}.
fn verify_identities(trials: usize, seed_offset: u64) -> Result<(), Error> {
    let mut failed = false;
    for n in [3usize, 4, 5] {
        let mut rng = stream_rng(seed_offset, n as u64, 0);
        let mut worst_cramer = 0.0_f64;
        let mut worst_t = 0.0_f64;
        let mut worst_pivot = 0.0_f64;
        let mut worst_amp = 0.0_f64;
        for trial in 0..trials {
            let config = random_realizable(&mut rng, n);
            let dists = pair_distances(&config)?;
            let d = (n as f64 - 1.0) + 2.0 * rand::Rng::gen::<f64>(&mut rng);

            // Cramer identity: sum_k g_jk domega/dr_k = 2 omega / r_j
            let omega = geometry::gram_det(&dists, 0)?;
            let grad = geometry::grad_omega_pivot(&dists, 0);
            let others: Vec<usize> = (1..n).collect();
            for (a, &j) in others.iter().enumerate() {
                let mut lhs = 0.0;
                for (b, &k) in others.iter().enumerate() {
                    lhs += geometry::cos_angle(&dists, 0, j, k) * grad[b];
                }
                let rhs = 2.0 * omega / dists.get(0, j);
                worst_cramer = worst_cramer.max((lhs - rhs).abs() / rhs.abs().max(1e-300));
                let _ = a;
            }

            worst_t = worst_t.max(dimsym::verify_t_annihilation(&dists, d)?);
            // u_term internally cross-checks the two closed forms
            dimsym::u_term(&dists, trial % n, d)?;

            let w0 = geometry::gram_det(&dists, 0)?;
            for pivot in 1..n {
                let wp = geometry::gram_det(&dists, pivot)?;
                worst_pivot = worst_pivot.max((wp - w0).abs() / w0.abs().max(1e-300));
            }

            let delta = ((trial as f64 / trials as f64) * 65536.0).round() / 16384.0;
            let diff = dimsym::amplitude(n, n as f64 + delta)
                - dimsym::amplitude(n, n as f64 - delta);
            worst_amp = worst_amp.max(diff.abs());
        }
        println!(
            "N = {n}: cramer {worst_cramer:e}  t-annihilation {worst_t:e}  \
             pivot {worst_pivot:e}  amplitude-symmetry {worst_amp:e}"
        );
        if worst_cramer > 1e-10 || worst_t > 1e-10 || worst_pivot > 1e-10 || worst_amp != 0.0 {
            failed = true;
        }
    }
    if failed {
        return Err(Error::TransformInconsistency { cartesian: 0.0, distance: 0.0 });
    }
    println!("all identities pass");
    Ok(())
}

fn random_realizable(rng: &mut impl rand::Rng, n: usize) -> geometry::Configuration {
    // well-separated, well-conditioned random cluster in an N-dimensional
    // embedding (omega > 0 guaranteed away from collinearity)
    loop {
        let half = 0.9 + 0.25 * n as f64;
        let cols: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.gen_range(-half..half)).collect()).collect();
        let Ok(config) = geometry::Configuration::from_columns(n, &cols) else { continue };
        let Ok(dists) = pair_distances(&config) else { continue };
        if dists.as_slice().iter().any(|&r| r < 0.55) {
            continue;
        }
        let g = geometry::gram_matrix(&dists, 0);
        let eig = g.symmetric_eigenvalues();
        let max = eig.iter().cloned().fold(0.0_f64, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if min > 5e-3 * max {
            return config;
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}
