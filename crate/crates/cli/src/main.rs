use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use shocklab::cartesian::COMPARE_NAMES;
use shocklab::config::RunConfig;
use shocklab::harness::{self, RunOutcome, RunSummary};

#[derive(Parser)]
#[command(name = "shocklab", version, about = "Shock-formation simulator for a fast/slow wave system in 1+2 dimensions")]
struct Cli {
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Perturbation seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the solver selected in the config.
    Run { config: PathBuf },
    /// Repeat a run over several values of one numeric key.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        key: String,
        /// Comma-separated values; may be empty.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
    },
    /// Compare final snapshots of a geo2d run and a cartesian run.
    Compare { geo_dir: PathBuf, cart_dir: PathBuf },
    /// Print the data-size parameters of the configured initial data.
    Params { config: PathBuf },
}

fn load(path: &Path, cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_path(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn describe(s: &RunSummary) -> String {
    let head = format!("{} run in {:.2} s, output in {}", s.solver.name(), s.wall_time, s.dir.display());
    match &s.outcome {
        RunOutcome::Shock(r) => format!(
            "{head}\ncase II: T_shock = {:.6}, kappa = {:.6}, T_shock*deltastar = {:.6}, u_star = {:.4}, blowup exponent = {:.4}",
            r.t_shock,
            r.kappa,
            r.t_shock * s.params.deltastar,
            r.u_star,
            r.blowup_exponent
        ),
        RunOutcome::NoShock { t_end, mu_star_min } => {
            format!("{head}\ncase I: no shock up to t = {t_end:.4}, min mu_star = {mu_star_min:.6}")
        }
        RunOutcome::Reference { t_end } => format!("{head}\nreference solution at t = {t_end:.6}"),
        RunOutcome::Compared(c) => format!(
            "{head}\ncompared at t = {:.6}: worst max relative error {:.3e}, worst L2 relative error {:.3e}",
            c.t_cart,
            c.worst_max_rel(),
            c.worst_l2_rel()
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Run { config } => {
            let cfg = load(config, cli)?;
            let s = harness::run(&cfg).context("run failed")?;
            if !cli.quiet {
                println!("{}", describe(&s));
            }
        }
        Cmd::Sweep { config, key, values } => {
            let cfg = load(config, cli)?;
            let values: Vec<String> = values.iter().map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
            let (path, rows) = harness::sweep(&cfg, key, &values).context("sweep failed")?;
            if !cli.quiet {
                for r in &rows {
                    let t = r.report.map(|x| format!("T_shock = {:.6}", x.t_shock)).unwrap_or_default();
                    let p = r.observed_order.map(|p| format!(", observed order {p:.2}")).unwrap_or_default();
                    println!("{key} = {}: {} {t}{p}{}", r.value, r.status, if r.error.is_empty() { String::new() } else { format!(" ({})", r.error) });
                }
                println!("aggregate written to {}", path.display());
            }
        }
        Cmd::Compare { geo_dir, cart_dir } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let rep = harness::compare_dirs(geo_dir, cart_dir, &out).context("compare failed")?;
            if !cli.quiet {
                println!("{} samples, t_geo = {:.6}, t_cart = {:.6}", rep.samples, rep.t_geo, rep.t_cart);
                for (q, name) in COMPARE_NAMES.iter().enumerate() {
                    println!("{name:>7}: max {:.3e}  max rel {:.3e}  L2 rel {:.3e}", rep.max_abs[q], rep.max_rel[q], rep.l2_rel[q]);
                }
                println!("report written to {}", out.join("compare_report.csv").display());
            }
        }
        Cmd::Params { config } => {
            let cfg = load(config, cli)?;
            let p = harness::params(&cfg)?;
            print!("{}", harness::params_text(&p));
        }
    }
    Ok(())
}
