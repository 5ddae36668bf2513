//! Gain crossovers, phase and delay margins of a SISO loop transfer `L(s)` under
//! negative feedback `L / (1 + L)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lti::ContinuousStateSpace;

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Refined crossovers satisfy `||L(j omega_c)| - 1| <= CROSSOVER_TOL`.
pub const CROSSOVER_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossover {
    pub omega: f64,
    /// `pi + arg L(j omega)` wrapped to `(-pi, pi]`.
    pub pm_rad: f64,
    pub dm_s: f64,
    /// Found above the Nyquist limit of the analysis band; excluded from the margin.
    pub above_nyquist: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainMargin {
    pub omega: f64,
    pub gm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginReport {
    pub crossovers: Vec<Crossover>,
    /// Minimum `pm / omega_c` over positive-margin crossovers; `+inf` without crossovers,
    /// `0` when the nominal loop is unstable.
    pub delay_margin: f64,
    pub gain_margins: Vec<GainMargin>,
    pub stable_nominal: bool,
}

/// How nominal closed-loop stability is decided.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum NominalTest {
    /// Poles of the unity-feedback closed-loop realization.
    #[default]
    ClosedLoopPoles,
    /// Nyquist criterion with the given number of open-loop unstable poles.
    Nyquist { open_loop_unstable: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginOptions {
    pub omega_min: f64,
    /// Upper sweep limit; chosen from the loop's poles and gain when `None`.
    pub omega_max: Option<f64>,
    pub points_per_decade: usize,
    /// Crossovers above this frequency are flagged and excluded from the delay margin.
    pub nyquist_limit: Option<f64>,
    pub nominal: NominalTest,
}

impl Default for MarginOptions {
    fn default() -> Self {
        Self {
            omega_min: 1e-3,
            omega_max: None,
            points_per_decade: 2000,
            nyquist_limit: None,
            nominal: NominalTest::ClosedLoopPoles,
        }
    }
}

/// Step-6 loop `controller * plant`.
pub fn loop_transfer(plant: &ContinuousStateSpace, controller: &ContinuousStateSpace) -> Result<ContinuousStateSpace> {
    let l = plant.series(controller)?;
    l.require_siso()?;
    Ok(l)
}

fn wrap_pi(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    } else if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1) + 1;
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64),
        })
        .collect()
}

fn checked_eval<F>(f: &F, w: f64) -> Result<Complex64>
where
    F: Fn(f64) -> Result<Complex64>,
{
    match f(w) {
        Ok(z) if z.re.is_finite() && z.im.is_finite() => Ok(z),
        Ok(_) | Err(Error::Singular { .. }) => Err(Error::PoleOnSweep(w)),
        Err(e) => Err(e),
    }
}

/// Bisection for a sign change of `g` on `[lo, hi]` until `|g| <= tol(z)`.
fn bisect<F, G>(f: &F, g: G, mut lo: f64, mut hi: f64, tol: impl Fn(Complex64) -> f64) -> Result<(f64, Complex64)>
where
    F: Fn(f64) -> Result<Complex64>,
    G: Fn(Complex64) -> f64,
{
    let mut zlo = checked_eval(f, lo)?;
    let zhi = checked_eval(f, hi)?;
    let (mut glo, ghi) = (g(zlo), g(zhi));
    if glo == 0.0 {
        return Ok((lo, zlo));
    }
    if ghi == 0.0 {
        return Ok((hi, zhi));
    }
    let mut best = if glo.abs() <= ghi.abs() { (lo, zlo, glo.abs()) } else { (hi, zhi, ghi.abs()) };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let zm = checked_eval(f, mid)?;
        let gm = g(zm);
        if gm.abs() < best.2 {
            best = (mid, zm, gm.abs());
        }
        if gm.abs() <= tol(zm) {
            break;
        }
        if (gm < 0.0) == (glo < 0.0) {
            lo = mid;
            zlo = zm;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    let _ = zlo;
    Ok((best.0, best.1))
}

/// Sweep results: grid and loop values.
struct Sweep {
    omegas: Vec<f64>,
    values: Vec<Complex64>,
}

fn sweep<F>(f: &F, lo: f64, hi: f64, per_decade: usize) -> Result<Sweep>
where
    F: Fn(f64) -> Result<Complex64> + Sync,
{
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidData(format!("sweep band must satisfy 0 < {lo} < {hi}")));
    }
    let omegas = log_grid(lo, hi, per_decade);
    let values = omegas.par_iter().map(|&w| checked_eval(f, w)).collect::<Result<Vec<_>>>()?;
    Ok(Sweep { omegas, values })
}

fn sign_changes(g: &[f64]) -> Vec<usize> {
    (0..g.len().saturating_sub(1))
        .filter(|&i| (g[i] < 0.0 && g[i + 1] >= 0.0) || (g[i] > 0.0 && g[i + 1] <= 0.0) || (i == 0 && g[0] == 0.0))
        .collect()
}

fn crossovers_from<F>(f: &F, sw: &Sweep) -> Result<Vec<(f64, Complex64)>>
where
    F: Fn(f64) -> Result<Complex64>,
{
    let g: Vec<f64> = sw.values.iter().map(|z| z.norm() - 1.0).collect();
    let mut out: Vec<(f64, Complex64)> = Vec::new();
    for i in sign_changes(&g) {
        let c = bisect(f, |z| z.norm() - 1.0, sw.omegas[i], sw.omegas[i + 1], |_| CROSSOVER_TOL)?;
        if out.last().is_none_or(|last| last.0 != c.0) {
            out.push(c);
        }
    }
    Ok(out)
}

/// All gain crossovers of `L(j omega)` in `[omega_min, omega_max]`, increasing.
pub fn gain_crossovers(l: &ContinuousStateSpace, omega_min: f64, omega_max: f64) -> Result<Vec<f64>> {
    gain_crossovers_with(l, omega_min, omega_max, MarginOptions::default().points_per_decade)
}

pub fn gain_crossovers_with(
    l: &ContinuousStateSpace,
    omega_min: f64,
    omega_max: f64,
    points_per_decade: usize,
) -> Result<Vec<f64>> {
    l.require_siso()?;
    let f = |w: f64| l.eval_siso(J * w);
    let sw = sweep(&f, omega_min, omega_max, points_per_decade)?;
    Ok(crossovers_from(&f, &sw)?.into_iter().map(|c| c.0).collect())
}

/// Crossovers and gain margins of an arbitrary frequency-response function `L(j omega)`.
pub fn margins_of<F>(f: &F, lo: f64, hi: f64, opts: &MarginOptions) -> Result<(Vec<Crossover>, Vec<GainMargin>)>
where
    F: Fn(f64) -> Result<Complex64> + Sync,
{
    let sw = sweep(f, lo, hi, opts.points_per_decade)?;
    let crossovers = crossovers_from(f, &sw)?
        .into_iter()
        .map(|(w, z)| {
            let pm = wrap_pi(PI + z.arg());
            Crossover {
                omega: w,
                pm_rad: pm,
                dm_s: pm / w,
                above_nyquist: opts.nyquist_limit.is_some_and(|lim| w > lim),
            }
        })
        .collect();
    let im: Vec<f64> = sw.values.iter().map(|z| z.im).collect();
    let mut gains = Vec::new();
    for i in sign_changes(&im) {
        let (w, z) = bisect(f, |z| z.im, sw.omegas[i], sw.omegas[i + 1], |z| 1e-12 * z.norm())?;
        if z.re < 0.0 {
            gains.push(GainMargin { omega: w, gm: 1.0 / z.norm() });
        }
    }
    Ok((crossovers, gains))
}

/// Minimum `pm / omega` over positive-margin, in-band crossovers.
pub fn min_delay(crossovers: &[Crossover]) -> f64 {
    crossovers.iter().filter(|c| c.pm_rad > 0.0 && !c.above_nyquist).map(|c| c.dm_s).fold(f64::INFINITY, f64::min)
}

fn default_omega_max(l: &ContinuousStateSpace, lo: f64) -> Result<f64> {
    let radius = l.poles().map(|p| p.values.iter().map(|z| z.norm()).fold(1.0, f64::max)).unwrap_or(1.0);
    let mut hi = (100.0 * radius).max(10.0 * lo);
    while hi < 1e12 {
        match l.eval_siso(J * hi) {
            Ok(z) if z.norm() < 1.0 => break,
            _ => hi *= 10.0,
        }
    }
    Ok(hi)
}

/// Clockwise encirclements of `-1` by `L(j omega)` over the whole imaginary axis, from the
/// half-axis sweep and conjugate symmetry. Fails when `L` is singular at `omega = 0`.
pub fn nyquist_encirclements(l: &ContinuousStateSpace) -> Result<i64> {
    l.require_siso()?;
    let poles = l.poles()?;
    let radius = poles.values.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let small = poles.values.iter().map(|z| z.norm()).filter(|&r| r > 0.0).fold(1.0, f64::min);
    let f = |w: f64| -> Result<Complex64> { Ok(l.eval_siso(J * w)? + 1.0) };
    let top = 1e3 * radius;
    let mut grid = vec![0.0];
    grid.extend(log_grid(1e-4 * small, top, 100));
    let mut prev = checked_eval(&f, 0.0)?;
    let mut total = 0.0;
    for pair in grid.windows(2) {
        total += arg_increment(&f, pair[0], pair[1], prev, 0)?;
        prev = checked_eval(&f, pair[1])?;
    }
    Ok((-total / PI).round() as i64)
}

/// Phase change of `f` from `a` to `b`, subdividing until each step turns by < 0.3 rad.
fn arg_increment<F>(f: &F, a: f64, b: f64, fa: Complex64, depth: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<Complex64>,
{
    let fb = checked_eval(f, b)?;
    let d = (fb / fa).arg();
    if d.abs() < 0.3 || depth > 40 {
        return Ok(d);
    }
    let mid = 0.5 * (a + b);
    let fm = checked_eval(f, mid)?;
    Ok(arg_increment(f, a, mid, fa, depth + 1)? + arg_increment(f, mid, b, fm, depth + 1)?)
}

/// Full margin analysis of the loop transfer `l`.
pub fn delay_margin(l: &ContinuousStateSpace, opts: &MarginOptions) -> Result<MarginReport> {
    l.require_siso()?;
    let lo = opts.omega_min;
    let hi = match opts.omega_max {
        Some(hi) => hi,
        None => default_omega_max(l, lo)?,
    };
    let f = |w: f64| l.eval_siso(J * w);
    let (crossovers, gain_margins) = margins_of(&f, lo, hi, opts)?;
    let stable_nominal = match opts.nominal {
        NominalTest::ClosedLoopPoles => l.feedback_unity()?.is_stable(0.0),
        NominalTest::Nyquist { open_loop_unstable } => nyquist_encirclements(l)? + open_loop_unstable as i64 == 0,
    };
    let delay_margin = if stable_nominal { min_delay(&crossovers) } else { 0.0 };
    Ok(MarginReport { crossovers, delay_margin, gain_margins, stable_nominal })
}
