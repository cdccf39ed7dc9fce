//! `udmdi`: key-rate calculations, sweeps, and figure reproduction from the command line.
//!
//! Exit codes: 0 success, 1 statistical or acceptance failure, 2 configuration
//! error, 3 I/O error.

mod config;
mod plot;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use udmdi::channel::{physicality_check, Physicality, PhysicalityMode};
use udmdi::finite_size::{finite_size_key_rate, FiniteSizeConfig};
use udmdi::keyrate::{key_rate_symmetric_gm, key_rate_ud, optimize_modulation, plob_bound_for};
use udmdi::mc::{validate, EstimatorForm};
use udmdi::sweep::{
    fmt_float, max_distance, preset, run_sweep, RateKind, Scenario, SweepSpec, SweepTable,
    DEFAULT_RESOLUTION_KM,
};

use crate::config::ConfigFile;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("check failed: {0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<udmdi::Error> for CliError {
    fn from(e: udmdi::Error) -> Self {
        match e {
            udmdi::Error::PlobViolation { .. } => CliError::Failed(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "udmdi", version, about = "Key rates for unidimensional CV-MDI QKD")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (CSV for sweeps); stdout when absent.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Seed for stochastic commands; deterministic commands accept and ignore it.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    #[arg(long, global = true, value_enum)]
    scenario: Option<ScenarioArg>,
    /// Use the literal 1/(eta eps) correction term in the physicality constraint.
    #[arg(long = "strict-eq7", global = true)]
    strict_eq7: bool,
    /// Worker threads for sweeps and Monte Carlo runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Symmetric,
    Asymmetric,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Symmetric => Scenario::Symmetric,
            ScenarioArg::Asymmetric => Scenario::Asymmetric,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RateArg {
    Ud,
    Gm,
    Finite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Figure {
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
}

impl Figure {
    fn name(self) -> &'static str {
        match self {
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
            Figure::Fig8 => "fig8",
            Figure::Fig9 => "fig9",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Asymptotic key rate at a single point.
    Keyrate {
        /// Total distance, km.
        #[arg(long, allow_negative_numbers = true)]
        distance: Option<f64>,
        #[arg(long)]
        modulation_variance: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Also search V_m over [1, this value] for the best rate.
        #[arg(long)]
        optimize_up_to: Option<f64>,
    },
    /// Sweep defined by the `[sweep]` section of the configuration file.
    Sweep {
        /// Also write a gnuplot script plotting the CSV.
        #[arg(long)]
        gnuplot: Option<PathBuf>,
    },
    /// Largest distance with a positive key rate.
    MaxDistance {
        #[arg(long, value_enum, default_value = "ud")]
        rate: RateArg,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION_KM)]
        resolution: f64,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Evaluate the unmodulated-quadrature physicality constraint.
    Physicality {
        #[arg(long)]
        eta_x: f64,
        #[arg(long)]
        eps_x: f64,
        /// Defaults to eta_x.
        #[arg(long)]
        eta_p: Option<f64>,
        /// Defaults to eps_x.
        #[arg(long)]
        eps_p: Option<f64>,
    },
    /// Finite-size key rate at a single point.
    FiniteSize {
        #[arg(long, allow_negative_numbers = true)]
        distance: Option<f64>,
        #[arg(long)]
        block_length: Option<f64>,
    },
    /// Monte Carlo validation of the estimator statistics.
    McValidate {
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        eps_pe: Option<f64>,
        /// Use unsquared residuals in the variance estimator (negative control).
        #[arg(long, hide = true)]
        corrupt_estimator: bool,
    },
    /// Regenerate the data behind a reference figure.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[arg(long)]
        gnuplot: Option<PathBuf>,
    },
}

struct Ctx {
    file: ConfigFile,
    scenario: Scenario,
    strict: bool,
    threads: Option<usize>,
    output: Option<PathBuf>,
    seed: u64,
}

impl Ctx {
    fn protocol_at(&self, distance: f64) -> udmdi::keyrate::ProtocolConfig {
        self.file.protocol(self.scenario, distance, self.strict)
    }

    fn open_output(&self) -> Result<Box<dyn Write>, CliError> {
        match &self.output {
            Some(path) => {
                let f = File::create(path)
                    .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
                Ok(Box::new(BufWriter::new(f)))
            }
            None => Ok(Box::new(io::stdout().lock())),
        }
    }

    fn emit(&self, text: &str) -> Result<(), CliError> {
        let mut out = self.open_output()?;
        out.write_all(text.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| CliError::Io(e.to_string()))
    }
}

fn kv(out: &mut String, key: &str, value: f64) {
    out.push_str(&format!("{key} = {}\n", fmt_float(value)));
}

fn write_table(ctx: &Ctx, table: &SweepTable, gnuplot: Option<&Path>) -> Result<(), CliError> {
    let mut out = ctx.open_output()?;
    table
        .write_csv(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Io(e.to_string()))?;
    let bad = table.nonphysical_rows();
    if bad > 0 {
        eprintln!("warning: {bad} of {} rows are nonphysical", table.rows.len());
    }
    if let Some(path) = gnuplot {
        let csv = ctx
            .output
            .as_deref()
            .ok_or_else(|| CliError::Config("--gnuplot needs --output for the CSV path".into()))?;
        std::fs::write(path, plot::gnuplot_script(table, csv))
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn sweep_from_config(ctx: &Ctx) -> Result<SweepSpec, CliError> {
    let s = &ctx.file.sweep;
    let variable = s
        .variable
        .ok_or_else(|| CliError::Config("[sweep] needs `variable`".into()))?;
    let finite = s.finite_size.unwrap_or(false)
        || variable == udmdi::sweep::SweepVariable::BlockLength;
    Ok(SweepSpec {
        variable,
        grid: ctx.file.sweep_grid()?,
        scenario: ctx.scenario,
        base: ctx.protocol_at(0.0),
        distance: ctx.file.distance(),
        curves: s.curves.clone().unwrap_or_else(|| {
            vec![udmdi::sweep::Curve {
                label: "default".into(),
                ..Default::default()
            }]
        }),
        finite_size: finite.then(|| ctx.file.finite_size_columns()),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let ctx = Ctx {
        scenario: file.scenario(cli.scenario.map(Into::into)),
        file,
        strict: cli.strict_eq7,
        threads: cli.threads,
        output: cli.output,
        seed: cli.seed,
    };
    match cli.command {
        Command::Keyrate {
            distance,
            modulation_variance,
            beta,
            optimize_up_to,
        } => {
            let mut cfg = ctx.protocol_at(distance.unwrap_or_else(|| ctx.file.distance()));
            if let Some(vm) = modulation_variance {
                cfg.modulation_variance = vm;
            }
            if let Some(b) = beta {
                cfg.beta = b;
            }
            let ud = key_rate_ud(&cfg)?;
            let gm = key_rate_symmetric_gm(&cfg)?;
            let mut out = String::new();
            kv(&mut out, "distance_km", cfg.topology.total_length());
            kv(&mut out, "modulation_variance", cfg.modulation_variance);
            kv(&mut out, "beta", cfg.beta);
            kv(&mut out, "key_rate_ud", ud.key_rate);
            kv(&mut out, "key_rate_ud_signed", ud.raw_key_rate);
            kv(&mut out, "mutual_info", ud.mutual_info);
            kv(&mut out, "holevo", ud.holevo);
            kv(&mut out, "lambda1", ud.lambda1);
            kv(&mut out, "lambda2", ud.lambda2);
            kv(&mut out, "lambda3", ud.lambda3);
            kv(&mut out, "t_x", ud.equivalent_channel.t_x);
            kv(&mut out, "eps_prime_x", ud.equivalent_channel.eps_prime_x);
            kv(&mut out, "gain_sq", ud.equivalent_channel.gain_sq);
            kv(&mut out, "key_rate_gm", gm.key_rate);
            kv(&mut out, "plob", plob_bound_for(&cfg.topology)?);
            if let Some(vmax) = optimize_up_to {
                let opt = optimize_modulation(&cfg, 1.0, vmax)?;
                kv(&mut out, "optimal_modulation_variance", opt.modulation_variance);
                kv(&mut out, "optimal_key_rate", opt.key_rate);
                if opt.all_zero {
                    out.push_str("optimal_all_zero = true\n");
                }
            }
            ctx.emit(&out)
        }
        Command::Sweep { gnuplot } => {
            let spec = sweep_from_config(&ctx)?;
            let table = run_sweep(&spec, ctx.threads)?;
            write_table(&ctx, &table, gnuplot.as_deref())
        }
        Command::MaxDistance {
            rate,
            resolution,
            beta,
        } => {
            let mut cfg = ctx.protocol_at(0.0);
            if let Some(b) = beta {
                cfg.beta = b;
            }
            let kind = match rate {
                RateArg::Ud => RateKind::Unidimensional,
                RateArg::Gm => RateKind::SymmetricGm,
                RateArg::Finite => {
                    let cols = ctx.file.finite_size_columns();
                    RateKind::FiniteSize(cols.config(ctx.file.block_length())?)
                }
            };
            let km = max_distance(&cfg, ctx.scenario, kind, resolution)?;
            ctx.emit(&format!("max_distance_km = {}\n", fmt_float(km)))
        }
        Command::Physicality {
            eta_x,
            eps_x,
            eta_p,
            eps_p,
        } => {
            let mode = if ctx.strict {
                PhysicalityMode::StrictLiteral
            } else {
                PhysicalityMode::Corrected
            };
            let r = physicality_check(eta_x, eps_x, eta_p.unwrap_or(eta_x), eps_p.unwrap_or(eps_x), mode)?;
            let verdict = match r.verdict {
                Physicality::Physical => "physical",
                Physicality::Nonphysical => "nonphysical",
            };
            ctx.emit(&format!(
                "lhs = {}\nrhs = {}\nverdict = {verdict}\n",
                fmt_float(r.lhs),
                fmt_float(r.rhs)
            ))
        }
        Command::FiniteSize {
            distance,
            block_length,
        } => {
            let cfg = ctx.protocol_at(distance.unwrap_or_else(|| ctx.file.distance()));
            let cols = ctx.file.finite_size_columns();
            let fcfg: FiniteSizeConfig = cols.config(block_length.unwrap_or_else(|| ctx.file.block_length()))?;
            let r = finite_size_key_rate(&cfg, &fcfg, None)?;
            let asym = key_rate_ud(&cfg)?;
            let mut out = String::new();
            kv(&mut out, "distance_km", cfg.topology.total_length());
            kv(&mut out, "block_length", fcfg.block_length);
            kv(&mut out, "key_fraction", r.key_fraction);
            kv(&mut out, "z_quantile", fcfg.z_quantile);
            kv(&mut out, "delta_n", r.delta);
            kv(&mut out, "eta_a_worst", r.worst_case.links.eta_a_x);
            kv(&mut out, "eps_a_worst", r.worst_case.links.eps_a_x);
            kv(&mut out, "eta_b_worst", r.worst_case.links.eta_b_x);
            kv(&mut out, "eps_b_worst", r.worst_case.links.eps_b_x);
            kv(&mut out, "key_rate_finite", r.key_rate);
            kv(&mut out, "key_rate_finite_signed", r.raw_key_rate);
            kv(&mut out, "key_rate_asymptotic", asym.key_rate);
            ctx.emit(&out)
        }
        Command::McValidate {
            trials,
            m,
            eps_pe,
            corrupt_estimator,
        } => {
            let mut p = ctx.file.mc_params(ctx.seed);
            if let Some(t) = trials {
                p.trials = t;
            }
            if let Some(m) = m {
                p.m = m;
            }
            if let Some(e) = eps_pe {
                p.eps_pe = e;
            }
            if corrupt_estimator {
                p.estimator = EstimatorForm::UnsquaredResiduals;
            }
            let report = match ctx.threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| CliError::Config(e.to_string()))?
                    .install(|| validate(&p))?,
                None => validate(&p)?,
            };
            let mut out = format!(
                "trials = {}\nm = {}\neps_pe = {}\nseed = {}\n",
                p.trials, p.m, p.eps_pe, p.seed
            );
            out.push_str("statistic,observed,expected,tolerance,result\n");
            for c in &report.checks {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    c.name,
                    fmt_float(c.observed),
                    fmt_float(c.expected),
                    fmt_float(c.tolerance),
                    if c.passed { "pass" } else { "FAIL" }
                ));
            }
            ctx.emit(&out)?;
            let failed: Vec<&str> = report.failures().map(|c| c.name).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Failed(format!("statistics out of tolerance: {}", failed.join(", "))))
            }
        }
        Command::Reproduce { figure, gnuplot } => {
            let mut spec = preset(figure.name()).expect("every figure has a preset");
            if ctx.strict {
                spec.base.physicality_mode = PhysicalityMode::StrictLiteral;
            }
            let table = run_sweep(&spec, ctx.threads)?;
            write_table(&ctx, &table, gnuplot.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
