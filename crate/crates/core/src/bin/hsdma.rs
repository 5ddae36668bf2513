use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use hsdma::discretize::Method;
use hsdma::hybrid_sim::{self, BisectOptions, Excitation, SimOptions};
use hsdma::io::{self as hio, System};
use hsdma::loewner::{self, FitOptions, RankTest, StabilityOptions};
use hsdma::margin::{self, MarginOptions};
use hsdma::pipeline::{self, Grid, HsdmaConfig, OracleConfig};
use hsdma::{Error, Result};

/// Delay margins of hybrid feedback loops via Loewner interpolation.
#[derive(Parser)]
#[command(name = "hsdma", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Discretize a continuous system.
    Discretize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a discrete system on the unit circle up to the Nyquist frequency.
    Sample {
        #[arg(long)]
        controller: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a continuous descriptor model to frequency data.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Sampling period the data came from (only recorded for range checks).
        #[arg(long)]
        h: Option<f64>,
        #[command(flatten)]
        fit: FitArgs,
        /// Where to write the fitted system; the report then goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Delay margin of a continuous plant with a continuous controller.
    Margin {
        #[arg(long)]
        plant: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        omega_min: f64,
        #[arg(long)]
        omega_max: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        points_per_decade: usize,
    },
    /// Delay margin of a continuous plant with a discrete controller.
    Hsdma {
        #[arg(long)]
        plant: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        sweep_band_max: Option<f64>,
    },
    /// Simulate the hybrid loop with a transport delay and write the trace.
    Simulate {
        #[arg(long)]
        plant: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long)]
        tau: f64,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bisect the destabilizing transport delay by simulation.
    Bisect {
        #[arg(long)]
        plant: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long)]
        tau_lo: f64,
        #[arg(long)]
        tau_hi: f64,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// HSDMA over discretization methods and sampling periods.
    Sweep {
        #[arg(long)]
        plant: PathBuf,
        /// Continuous controller to discretize.
        #[arg(long)]
        controller: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "forward,backward,bilinear")]
        methods: Vec<Method>,
        /// Sampling periods; defaults to 0.01, 0.02, ..., 0.15.
        #[arg(long = "h", value_delimiter = ',')]
        hs: Vec<f64>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        fit: FitArgs,
        /// Also bisect each row by simulation.
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = 1e-3)]
        oracle_tol: f64,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Plot data (`h,continuous,forward,backward,bilinear`).
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value = "log")]
    grid: Grid,
    #[arg(long, default_value_t = 1e-3)]
    omega_min: f64,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value_t = FitOptions::default().tol)]
    svd_tol: f64,
    /// Rank test on the Loewner matrix alone instead of the stacked pencil.
    #[arg(long)]
    loewner_rank: bool,
    #[arg(long)]
    enforce_stability: bool,
}

impl FitArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            tol: self.svd_tol,
            rank_test: if self.loewner_rank { RankTest::Loewner } else { RankTest::Stacked },
        }
    }
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 150.0)]
    t_final: f64,
    /// Unit step reference from rest instead of the default initial state.
    #[arg(long)]
    step: bool,
    #[arg(long, default_value_t = 1e-3)]
    slope_tol: f64,
}

impl SimArgs {
    fn options(&self) -> SimOptions {
        SimOptions {
            t_final: self.t_final,
            excitation: if self.step { Excitation::Step } else { Excitation::InitialState },
            ..SimOptions::default()
        }
    }
}

fn config(grid: &GridArgs, fit: &FitArgs, sweep_band_max: Option<f64>) -> HsdmaConfig {
    HsdmaConfig {
        n: grid.n,
        grid: grid.grid,
        omega_min: grid.omega_min,
        fit: fit.options(),
        enforce_stability: fit.enforce_stability,
        stability: StabilityOptions::default(),
        sweep_band_max,
        ..HsdmaConfig::default()
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    let mut w = sink(path)?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}

fn warn(msgs: &[String]) {
    for m in msgs {
        eprintln!("warning: {m}");
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Discretize { input, method, h, out } => {
            let sys = hio::read_system(&input)?.into_continuous()?;
            let d = method.apply(&sys, h)?;
            emit(out.as_deref(), &hio::system_to_json(&System::Discrete(d)))
        }
        Cmd::Sample { controller, grid, out } => {
            let ctrl = hio::read_system(&controller)?.into_discrete()?;
            let cfg = HsdmaConfig { n: grid.n, grid: grid.grid, omega_min: grid.omega_min, ..HsdmaConfig::default() };
            let omegas = pipeline::frequency_grid(&cfg, ctrl.h())?;
            let data = pipeline::sample(&ctrl, &omegas)?;
            hio::write_frequency_csv(&data, sink(out.as_deref())?)
        }
        Cmd::Fit { input, h, fit, out } => {
            let data = hio::read_frequency_csv(File::open(&input)?, h)?;
            let red = loewner::fit_rational(&data, fit.options())?;
            let sys = if fit.enforce_stability {
                loewner::enforce_stability(&red.sys, StabilityOptions::default())?
            } else {
                red.sys
            };
            let err = loewner::interpolation_error(&sys, &data)?;
            let report = pretty(&json!({
                "order": red.order,
                "interpolation_error": err,
                "singular_values": red.singular_values,
            }));
            let text = hio::system_to_json(&System::Continuous(sys));
            match out {
                Some(p) => {
                    emit(Some(&p), &text)?;
                    emit(None, &report)
                }
                None => {
                    emit(None, &text)?;
                    eprintln!("{report}");
                    Ok(())
                }
            }
        }
        Cmd::Margin { plant, controller, omega_min, omega_max, points_per_decade } => {
            let p = hio::read_system(&plant)?.into_continuous()?;
            let c = match hio::read_system(&controller)? {
                System::Continuous(c) => c,
                System::Discrete(_) => {
                    return Err(Error::InvalidData(
                        "margin needs a continuous controller; use hsdma for discrete ones".into(),
                    ))
                }
            };
            let l = margin::loop_transfer(&p, &c)?;
            let opts = MarginOptions { omega_min, omega_max, points_per_decade, ..MarginOptions::default() };
            emit(None, &hio::report_to_json(&margin::delay_margin(&l, &opts)?))
        }
        Cmd::Hsdma { plant, controller, grid, fit, sweep_band_max } => {
            let p = hio::read_system(&plant)?.into_continuous()?;
            let c = hio::read_system(&controller)?.into_discrete()?;
            let res = pipeline::hsdma(&p, &c, &config(&grid, &fit, sweep_band_max))?;
            warn(&res.warnings);
            let mut v = hio::report_value(&res.report);
            let obj = v.as_object_mut().expect("report is an object");
            obj.insert("order".into(), json!(res.order));
            obj.insert("interpolation_error".into(), json!(res.interpolation_error));
            obj.insert("warnings".into(), json!(res.warnings));
            emit(None, &pretty(&v))
        }
        Cmd::Simulate { plant, controller, tau, sim, out } => {
            let p = hio::read_system(&plant)?.into_continuous()?;
            let c = hio::read_system(&controller)?.into_discrete()?;
            let tr = hybrid_sim::simulate_hybrid(&p, &c, tau, &sim.options())?;
            match hybrid_sim::classify(&tr, sim.slope_tol) {
                Ok(s) => eprintln!("classification: {s}"),
                Err(e) => eprintln!("classification unavailable: {e}"),
            }
            hio::write_trace_csv(&tr, sink(out.as_deref())?)
        }
        Cmd::Bisect { plant, controller, tau_lo, tau_hi, tol, sim } => {
            let p = hio::read_system(&plant)?.into_continuous()?;
            let c = hio::read_system(&controller)?.into_discrete()?;
            let opts = BisectOptions { sim: sim.options(), slope_tol: sim.slope_tol, ..BisectOptions::default() };
            let b = hybrid_sim::bisect_delay_margin(&p, &c, tau_lo, tau_hi, tol, &opts)?;
            emit(None, &hio::bracket_to_json(&b))
        }
        Cmd::Sweep { plant, controller, methods, hs, grid, fit, oracle, oracle_tol, threads, out, plot } => {
            let p = hio::read_system(&plant)?.into_continuous()?;
            let c = hio::read_system(&controller)?.into_continuous()?;
            let hs = if hs.is_empty() { pipeline::default_h_grid() } else { hs };
            if let Some(h) = hs.iter().find(|&&h| h > 0.15) {
                eprintln!("warning: h = {h} is beyond the 0.15 s range this setup is tuned for");
            }
            let threads = pipeline::resolve_threads(threads)?;
            let oc = oracle.then(|| OracleConfig { tol: oracle_tol, ..OracleConfig::default() });
            let rows = pipeline::sweep(&p, &c, &methods, &hs, &config(&grid, &fit, None), oc.as_ref(), threads)?;
            hio::write_sweep_csv(&rows, sink(out.as_deref())?)?;
            if let Some(path) = plot {
                let dm = pipeline::continuous_margin(&p, &c)?.delay_margin;
                hio::write_plot_csv(&pipeline::plot_table(&rows, dm), File::create(path)?)?;
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
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
