use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use steinflow::experiment::{
    self, parse_kernel, parse_target, read_grid_field, write_geodesic, ExperimentConfig, GeodesicConfig, PdeConfig,
    SweepAxis,
};
use steinflow::geometry::{hessian_form, stein_generator_gap, DensityField1D, Grid1D, ScalarField1D, MAX_BASIS};
use steinflow::metrics::{w1_1d, w1_assignment, w1_sinkhorn};
use steinflow::{Error, Result};

#[derive(Parser)]
#[command(
    name = "steinflow",
    version,
    about = "Stein variational gradient descent experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Run(RunArgs),
    /// Same as `run`: final positions and the metrics series.
    Sample(RunArgs),
    /// Run an experiment for several values of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// p, sigma, N or seed.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the one-dimensional mean-field equation.
    Pde {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Eigenvalues of the Stein generator on a one-dimensional grid.
    Spectrum {
        /// gaussian:S, laplace:S, pexp:P:S, matern, poly or poly1.
        #[arg(long)]
        kernel: String,
        /// normal, normal:MEAN:STD or a preset name.
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 1024)]
        grid: usize,
        /// lo,hi (defaults to the truncation domain of the target).
        #[arg(long, allow_hyphen_values = true)]
        domain: Option<String>,
        /// Number of basis functions (at most the grid size and 512).
        #[arg(long, default_value_t = 256)]
        basis: usize,
        /// Write the eigenvalue CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hessian of KL at a grid density in direction of a grid potential.
    Hessian {
        /// CSV `x, rho` on a uniform grid.
        #[arg(long)]
        rho: PathBuf,
        /// CSV `x, psi` on the same grid.
        #[arg(long)]
        psi: PathBuf,
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        target: String,
    },
    /// Wasserstein-1 distance between two point clouds.
    W1 {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = W1Choice::Auto)]
        method: W1Choice,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 5000)]
        max_iters: usize,
    },
    /// Shoot a geodesic of the Stein geometry from a JSON config.
    Geodesic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the one in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum W1Choice {
    Auto,
    Exact1d,
    Assign,
    Sinkhorn,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn print_csv(header: &str, rows: impl Iterator<Item = String>) {
    println!("{header}");
    for r in rows {
        println!("{r}");
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(out) = args.out {
        cfg.output_dir = Some(out);
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = experiment::run_experiment(&cfg)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    match &cfg.output_dir {
        Some(dir) => {
            let last = out.rows.last().expect("a run records at least one row");
            eprintln!(
                "wrote {} (t={}, w1={}, stein_fisher={})",
                dir.display(),
                last.time,
                opt(last.w1),
                opt(last.stein_fisher)
            );
        }
        None => print_csv(
            "t,grad_evals,pair_evals,w1,stein_fisher",
            out.rows.iter().map(|r| {
                format!(
                    "{},{},{},{},{}",
                    r.time,
                    r.grad_evals,
                    r.pair_evals,
                    opt(r.w1),
                    opt(r.stein_fisher)
                )
            }),
        ),
    }
    Ok(())
}

fn parse_domain(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    if let [lo, hi] = parts.as_slice() {
        if let (Ok(lo), Ok(hi)) = (lo.trim().parse(), hi.trim().parse()) {
            return Ok((lo, hi));
        }
    }
    Err(Error::Config(format!("domain must be lo,hi, got {s:?}")))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) | Command::Sample(args) => run(args),
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let axis: SweepAxis = axis.parse()?;
            let result = experiment::sweep(&cfg, axis, &values)?;
            let dir = out
                .or(cfg.output_dir.clone())
                .ok_or_else(|| Error::Config("sweep needs --out or output_dir".into()))?;
            result.write(&dir)?;
            let failed: Vec<_> = result.failures().collect();
            for (v, e) in &failed {
                eprintln!("cell {v} failed: {e}");
            }
            eprintln!(
                "wrote {} ({} of {} cells ok)",
                dir.display(),
                values.len() - failed.len(),
                values.len()
            );
            Ok(())
        }
        Command::Pde { config, out } => {
            let cfg = PdeConfig::from_json(&read_text(&config)?)?;
            let run = cfg.run()?;
            match out.or(cfg.output_dir.clone()) {
                Some(dir) => {
                    run.write(&dir)?;
                    eprintln!("wrote {}", dir.display());
                }
                None => print_csv(
                    "t,kl,stein_fisher,ratio",
                    run.kl_series
                        .iter()
                        .zip(&run.fisher_series)
                        .zip(&run.ratio_series)
                        .map(|((a, b), c)| format!("{},{},{},{}", a.0, a.1, b.1, c.1)),
                ),
            }
            Ok(())
        }
        Command::Spectrum {
            kernel,
            target,
            grid,
            domain,
            basis,
            out,
        } => {
            let target = parse_target(&target)?.build()?;
            let kernel = parse_kernel(&kernel)?.build(&target)?;
            if target.dim() != 1 {
                return Err(Error::Config("spectrum needs a one-dimensional target".into()));
            }
            let g = match domain {
                Some(d) => {
                    let (lo, hi) = parse_domain(&d)?;
                    Grid1D::new(lo, hi, grid)
                }
                None => Grid1D::for_target(&target, grid),
            }
            .map_err(|e| Error::Config(e.to_string()))?;
            let basis = basis.min(grid).min(MAX_BASIS);
            let spec = stein_generator_gap(&kernel, &target, &g, basis)?;
            let lines = spec.eigenvalues.iter().enumerate().map(|(i, v)| format!("{i},{v}"));
            match out {
                Some(path) => {
                    let mut text = String::from("index,eigenvalue\n");
                    lines.for_each(|l| {
                        text.push_str(&l);
                        text.push('\n');
                    });
                    std::fs::write(&path, text)?;
                }
                None => print_csv("index,eigenvalue", lines),
            }
            eprintln!("gap {}", spec.gap);
            Ok(())
        }
        Command::Hessian {
            rho,
            psi,
            kernel,
            target,
        } => {
            let target = parse_target(&target)?.build()?;
            let kernel = parse_kernel(&kernel)?.build(&target)?;
            let (grid, r) = read_grid_field(&rho)?;
            let (grid_psi, p) = read_grid_field(&psi)?;
            if grid_psi.len() != grid.len()
                || (grid_psi.lo() - grid.lo()).abs() > 1e-9
                || (grid_psi.hi() - grid.hi()).abs() > 1e-9
            {
                return Err(Error::Config("rho and psi must share their grid".into()));
            }
            let rho = DensityField1D::new(grid.clone(), r)?.normalized()?;
            let psi = ScalarField1D::new(grid, p)?;
            let h = hessian_form(&rho, &psi, &kernel, &target)?;
            println!(
                "{}",
                serde_json::json!({ "hessian": h.total, "regularity": h.reg, "cost": h.cost })
            );
            Ok(())
        }
        Command::W1 {
            a,
            b,
            method,
            eps,
            max_iters,
        } => {
            let (pa, da) = experiment::io::read_points_csv(&a)?;
            let (pb, db) = experiment::io::read_points_csv(&b)?;
            if da != db {
                return Err(Error::Config(format!("point clouds have dimensions {da} and {db}")));
            }
            if da != 1 && matches!(method, W1Choice::Exact1d) {
                return Err(Error::Config("exact1d needs one-dimensional points".into()));
            }
            let same_size = pa.len() == pb.len();
            let value = match method {
                W1Choice::Exact1d => w1_1d(&pa, &pb)?,
                W1Choice::Auto if da == 1 => w1_1d(&pa, &pb)?,
                W1Choice::Assign => w1_assignment(&pa, &pb, da)?,
                W1Choice::Auto if same_size && pa.len() / da <= steinflow::metrics::MAX_ASSIGNMENT_SIZE => {
                    w1_assignment(&pa, &pb, da)?
                }
                W1Choice::Auto | W1Choice::Sinkhorn => {
                    let r = w1_sinkhorn(&pa, &pb, da, eps, max_iters)?;
                    if !r.converged {
                        eprintln!(
                            "sinkhorn stopped after {} iterations (marginal error {:e})",
                            r.iterations, r.marginal_error
                        );
                    }
                    r.cost
                }
            };
            println!("{value}");
            Ok(())
        }
        Command::Geodesic { config, out } => {
            let cfg = GeodesicConfig::from_json(&read_text(&config)?)?;
            let traj = cfg.run()?;
            eprintln!(
                "speed drift {:e}, mass drift {:e}, {} rejected steps",
                traj.speed_drift(),
                traj.mass_drift(),
                traj.rejected_steps
            );
            match out.or(cfg.output_dir.clone()) {
                Some(dir) => {
                    write_geodesic(&traj, &dir)?;
                    eprintln!("wrote {}", dir.display());
                }
                None => print_csv(
                    "t,speed,mass",
                    traj.times
                        .iter()
                        .zip(&traj.speeds)
                        .zip(&traj.masses)
                        .map(|((t, s), m)| format!("{t},{s},{m}")),
                ),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
