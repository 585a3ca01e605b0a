use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use photonic_herald::cli::{self, KrausCircuit, SweepConfig};
use photonic_herald::diqkd::{Amplifier, Framework};

#[derive(Parser)]
#[command(name = "herald", version, about = "Heralded photonic amplifiers and DIQKD key-rate sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print per-pattern Kraus operators and compare them with the closed form.
    Kraus {
        #[arg(long, default_value = "modified")]
        circuit: KrausCircuit,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        /// Also print the circuit in its text format.
        #[arg(long)]
        show_circuit: bool,
    },
    /// Success probability and fidelity of KLM teleportation and QND heralding.
    Klm {
        #[arg(long, default_value_t = 4)]
        n_max: usize,
    },
    /// Optimize the key rate over a range of distances and write CSV.
    Sweep {
        #[command(flatten)]
        opts: SweepOpts,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize the key rate at a single distance.
    Optimize {
        #[command(flatten)]
        opts: SweepOpts,
        #[arg(long)]
        distance: f64,
    },
    /// Run internal consistency checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct SweepOpts {
    /// key = value file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    framework: Option<Framework>,
    #[arg(long)]
    amplifier: Option<Amplifier>,
    #[arg(long)]
    eta_d: Option<f64>,
    #[arg(long)]
    eta_c: Option<f64>,
    #[arg(long)]
    eta_cd: Option<f64>,
    #[arg(long)]
    atten_db_per_km: Option<f64>,
    #[arg(long)]
    dist_min: Option<f64>,
    #[arg(long)]
    dist_max: Option<f64>,
    #[arg(long)]
    dist_step: Option<f64>,
    #[arg(long)]
    photon_cap: Option<u32>,
}

impl SweepOpts {
    fn resolve(&self) -> photonic_herald::Result<SweepConfig> {
        let mut c = match &self.config {
            Some(p) => SweepConfig::from_file(p)?,
            None => SweepConfig::default(),
        };
        if let Some(v) = self.framework {
            c.framework = v;
        }
        if let Some(v) = self.amplifier {
            c.amplifier = v;
        }
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.eta_d, self.eta_d);
        set(&mut c.eta_c, self.eta_c);
        set(&mut c.atten_db_per_km, self.atten_db_per_km);
        set(&mut c.dist_min, self.dist_min);
        set(&mut c.dist_max, self.dist_max);
        set(&mut c.dist_step, self.dist_step);
        if self.eta_cd.is_some() {
            c.eta_cd = self.eta_cd;
        }
        if let Some(v) = self.photon_cap {
            c.photon_cap = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cmd: Command) -> photonic_herald::Result<bool> {
    match cmd {
        Command::Kraus { circuit, t, show_circuit } => {
            let r = cli::kraus_report(circuit, t)?;
            if show_circuit {
                println!("{}", r.circuit);
            }
            println!("target:\n{}", r.target);
            for ((pattern, k), fit) in r.operators.iter().zip(&r.comparison.fits) {
                println!(
                    "pattern {pattern}: scale {:.12}, deviation {:.2e}, phases global {:.6} per-mode {:?}",
                    fit.scale, fit.deviation, fit.correction.global, fit.correction.per_mode
                );
                println!("{k}");
            }
            println!(
                "max deviation {:.3e}, sum of squared scales {:.12}",
                r.comparison.max_deviation, r.comparison.scale_norm_sq
            );
        }
        Command::Klm { n_max } => {
            println!("n  teleport_success  teleport_min_fidelity  qnd_success  qnd_min_fidelity");
            for row in cli::report_klm(n_max)? {
                println!(
                    "{}  {:.12}  {:.12}  {:.12}  {:.12}",
                    row.teleport.n,
                    row.teleport.success_probability,
                    row.teleport.min_fidelity,
                    row.qnd.success_probability,
                    row.qnd.min_fidelity
                );
            }
        }
        Command::Sweep { opts, out } => {
            let cfg = opts.resolve()?;
            let rows = cli::sweep(&cfg)?;
            match out {
                Some(p) => cli::write_csv_file(&rows, &p)?,
                None => cli::write_csv(&rows, std::io::stdout().lock())?,
            }
        }
        Command::Optimize { opts, distance } => {
            let cfg = opts.resolve()?;
            let r = cli::optimize_point(&cfg, distance)?;
            cli::write_csv(&[cli::SweepRow { distance_km: distance, point: r }], std::io::stdout().lock())?;
        }
        Command::Selftest { seed } => {
            let checks = cli::selftest(seed)?;
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
