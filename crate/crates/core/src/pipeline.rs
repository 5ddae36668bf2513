//! End-to-end delay-margin algorithm for hybrid loops and the discretization sweep.
//!
//! Steps: frequency grid up to the Nyquist limit, sampling of the discrete controller on
//! the unit circle, Loewner fit of a continuous model to those samples, optional
//! stability enforcement, loop assembly with the plant and margin analysis.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::discretize::Method;
use crate::error::{Error, Result};
use crate::hybrid_sim::{self, BisectOptions, OracleMargin};
use crate::loewner::{self, FitOptions, FrequencyDataSet, StabilityOptions};
use crate::lti::{ContinuousStateSpace, DiscreteStateSpace};
use crate::margin::{self, MarginOptions, MarginReport, NominalTest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Grid {
    #[default]
    Log,
    Linear,
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(Grid::Log),
            "linear" => Ok(Grid::Linear),
            _ => Err(Error::Parse(format!("unknown grid {s:?} (expected log or linear)"))),
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grid::Log => "log",
            Grid::Linear => "linear",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HsdmaConfig {
    pub n: usize,
    pub grid: Grid,
    pub omega_min: f64,
    pub fit: FitOptions,
    pub enforce_stability: bool,
    pub stability: StabilityOptions,
    /// Upper end of the crossover search; the Nyquist limit `pi / h` when `None`.
    pub sweep_band_max: Option<f64>,
    pub points_per_decade: usize,
}

impl Default for HsdmaConfig {
    fn default() -> Self {
        Self {
            n: 200,
            grid: Grid::Log,
            omega_min: 1e-3,
            fit: FitOptions::default(),
            enforce_stability: false,
            stability: StabilityOptions::default(),
            sweep_band_max: None,
            points_per_decade: 2000,
        }
    }
}

/// `n` frequencies in `(0, pi/h]`, the last one exactly `pi/h`.
pub fn frequency_grid(cfg: &HsdmaConfig, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::NonPositiveStep(h));
    }
    let n = cfg.n;
    if n == 0 {
        return Err(Error::InvalidData("sample count must be positive".into()));
    }
    let top = PI / h;
    let grid = match cfg.grid {
        Grid::Linear => (1..=n).map(|i| if i == n { top } else { i as f64 * PI / (h * n as f64) }).collect(),
        Grid::Log => {
            if !(cfg.omega_min > 0.0 && cfg.omega_min < top) {
                return Err(Error::InvalidData(format!("omega_min must lie in (0, {top}), got {}", cfg.omega_min)));
            }
            if n == 1 {
                vec![top]
            } else {
                let (a, b) = (cfg.omega_min.log10(), top.log10());
                (0..n)
                    .map(|i| match i {
                        0 => cfg.omega_min,
                        _ if i == n - 1 => top,
                        _ => 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64),
                    })
                    .collect()
            }
        }
    };
    Ok(grid)
}

/// Discrete responses `Hd(e^{j omega h})` on the grid.
pub fn sample(ctrl: &DiscreteStateSpace, omegas: &[f64]) -> Result<FrequencyDataSet> {
    let values = omegas.iter().map(|&w| ctrl.eval_freq(w)).collect::<Result<Vec<_>>>()?;
    FrequencyDataSet::new(omegas.to_vec(), values, Some(ctrl.h()))
}

#[derive(Clone, Debug)]
pub struct HsdmaResult {
    pub report: MarginReport,
    pub fitted: ContinuousStateSpace,
    pub order: usize,
    /// Worst relative interpolation error at the data points.
    pub interpolation_error: f64,
    pub singular_values: Vec<f64>,
    pub warnings: Vec<String>,
}

fn unstable_plant_poles(plant: &ContinuousStateSpace) -> Result<usize> {
    Ok(plant.poles()?.values.iter().filter(|z| z.re >= 0.0).count())
}

/// Margin of `plant` closed through the discrete controller `ctrl`.
pub fn hsdma(plant: &ContinuousStateSpace, ctrl: &DiscreteStateSpace, cfg: &HsdmaConfig) -> Result<HsdmaResult> {
    let mut warnings = Vec::new();
    if cfg.n < 10 * ctrl.order() {
        warnings.push(format!(
            "N = {} is small for a controller of order {}; use N >= {}",
            cfg.n,
            ctrl.order(),
            10 * ctrl.order()
        ));
    }
    let data = sample(ctrl, &frequency_grid(cfg, ctrl.h())?)?;
    let unstable_ctrl = ctrl.poles()?.values.iter().filter(|z| z.norm() >= 1.0).count();
    let mut out = hsdma_from_data(plant, &data, unstable_ctrl, cfg)?;
    out.warnings.splice(0..0, warnings);
    Ok(out)
}

/// Steps 4 to 7 on given samples. `unstable_controller_poles` enters the Nyquist count.
pub fn hsdma_from_data(
    plant: &ContinuousStateSpace,
    data: &FrequencyDataSet,
    unstable_controller_poles: usize,
    cfg: &HsdmaConfig,
) -> Result<HsdmaResult> {
    let mut warnings = Vec::new();
    let red = loewner::fit_rational(data, cfg.fit)?;
    let interpolation_error = loewner::interpolation_error(&red.sys, data)?;
    let fitted = if cfg.enforce_stability {
        let stable = loewner::enforce_stability(&red.sys, cfg.stability)?;
        let moved = loewner::interpolation_error(&stable, data)?;
        warnings.push(format!("stability enforcement changed the response by up to {moved:.3e} (relative)"));
        stable
    } else {
        red.sys
    };
    let l = margin::loop_transfer(plant, &fitted)?;
    let top = data.h().map(|h| PI / h);
    let opts = MarginOptions {
        omega_min: cfg.omega_min.min(data.omegas().first().copied().unwrap_or(cfg.omega_min)),
        omega_max: cfg.sweep_band_max.or(top),
        points_per_decade: cfg.points_per_decade,
        nyquist_limit: top,
        nominal: NominalTest::Nyquist { open_loop_unstable: unstable_plant_poles(plant)? + unstable_controller_poles },
    };
    let report = match margin::delay_margin(&l, &opts) {
        Ok(r) => r,
        Err(Error::PoleOnSweep(0.0)) => {
            warnings.push("loop is singular at s = 0; nominal stability from closed-loop poles".into());
            margin::delay_margin(&l, &MarginOptions { nominal: NominalTest::ClosedLoopPoles, ..opts })?
        }
        Err(e) => return Err(e),
    };
    Ok(HsdmaResult {
        report,
        fitted,
        order: red.order,
        interpolation_error,
        singular_values: red.singular_values,
        warnings,
    })
}

/// Margin of the continuous pair `(plant, controller)`.
pub fn continuous_margin(plant: &ContinuousStateSpace, controller: &ContinuousStateSpace) -> Result<MarginReport> {
    margin::delay_margin(&margin::loop_transfer(plant, controller)?, &MarginOptions::default())
}

/// Margin of the loop `Hd(e^{j omega h}) P(j omega)` evaluated directly, without a fit.
pub fn direct_discrete_margin(
    plant: &ContinuousStateSpace,
    ctrl: &DiscreteStateSpace,
    cfg: &HsdmaConfig,
) -> Result<f64> {
    let top = PI / ctrl.h();
    let f = |w: f64| -> Result<Complex64> {
        Ok(ctrl.eval_siso(Complex64::from_polar(1.0, w * ctrl.h()))? * plant.eval_siso(Complex64::new(0.0, w))?)
    };
    let opts = MarginOptions { points_per_decade: cfg.points_per_decade, ..Default::default() };
    let (crossovers, _) = margin::margins_of(&f, cfg.omega_min, cfg.sweep_band_max.unwrap_or(top), &opts)?;
    Ok(margin::min_delay(&crossovers))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    pub tol: f64,
    pub bisect: BisectOptions,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { tol: 1e-3, bisect: BisectOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub h: f64,
    pub dm_hsdma: Option<f64>,
    pub dm_sim: Option<f64>,
    pub order: Option<usize>,
    pub stable_nominal: Option<bool>,
    pub interpolation_error: Option<f64>,
    /// `"ok"` or the error that stopped this row.
    pub status: String,
}

/// Default sweep periods `0.01, 0.02, ..., 0.15`.
pub fn default_h_grid() -> Vec<f64> {
    (1..=15).map(|i| i as f64 / 100.0).collect()
}

/// Worker count: explicit flag, else `HSDMA_THREADS`, else the rayon default (0).
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var("HSDMA_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("HSDMA_THREADS must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn sweep_row(
    plant: &ContinuousStateSpace,
    ctrl_c: &ContinuousStateSpace,
    method: Method,
    h: f64,
    cfg: &HsdmaConfig,
    oracle: Option<&OracleConfig>,
) -> SweepRow {
    let mut row = SweepRow {
        method,
        h,
        dm_hsdma: None,
        dm_sim: None,
        order: None,
        stable_nominal: None,
        interpolation_error: None,
        status: "ok".into(),
    };
    let run = |row: &mut SweepRow| -> Result<()> {
        let ctrl = method.apply(ctrl_c, h)?;
        let res = hsdma(plant, &ctrl, cfg)?;
        row.dm_hsdma = Some(res.report.delay_margin);
        row.order = Some(res.order);
        row.stable_nominal = Some(res.report.stable_nominal);
        row.interpolation_error = Some(res.interpolation_error);
        if let Some(oc) = oracle {
            let guess = if res.report.delay_margin.is_finite() && res.report.delay_margin > 0.0 {
                res.report.delay_margin
            } else {
                0.5
            };
            let om = hybrid_sim::oracle_delay_margin(plant, &ctrl, guess, oc.tol, &oc.bisect)?;
            row.dm_sim = Some(om.delay_margin(h));
        }
        Ok(())
    };
    if let Err(e) = run(&mut row) {
        row.status = e.to_string();
    }
    row
}

/// HSDMA (and optionally the simulation oracle) for every `(method, h)`, ordered by method
/// then `h`. Failures are recorded per row.
pub fn sweep(
    plant: &ContinuousStateSpace,
    ctrl_c: &ContinuousStateSpace,
    methods: &[Method],
    hs: &[f64],
    cfg: &HsdmaConfig,
    oracle: Option<&OracleConfig>,
    threads: usize,
) -> Result<Vec<SweepRow>> {
    let mut jobs: Vec<(Method, f64)> = methods.iter().flat_map(|&m| hs.iter().map(move |&h| (m, h))).collect();
    jobs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidData(format!("thread pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(|&(m, h)| sweep_row(plant, ctrl_c, m, h, cfg, oracle)).collect()))
}

/// Simulation oracle on its own, reported as a hold-adjusted margin.
pub fn oracle_margin(
    plant: &ContinuousStateSpace,
    ctrl: &DiscreteStateSpace,
    guess: f64,
    oc: &OracleConfig,
) -> Result<OracleMargin> {
    hybrid_sim::oracle_delay_margin(plant, ctrl, guess, oc.tol, &oc.bisect)
}

/// Plot-ready table: one line per `h` with the continuous margin and each method's HSDMA
/// margin (empty when unavailable).
pub fn plot_table(rows: &[SweepRow], continuous_dm: f64) -> Vec<(f64, f64, [Option<f64>; 3])> {
    let mut hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    hs.into_iter()
        .map(|h| {
            let pick = |m: Method| rows.iter().find(|r| r.method == m && r.h == h).and_then(|r| r.dm_hsdma);
            (h, continuous_dm, [pick(Method::Forward), pick(Method::Backward), pick(Method::Bilinear)])
        })
        .collect()
}
