//! Sampled-data closed loop in the time domain: continuous plant, discrete controller,
//! zero-order hold and a pure transport delay on the controller output.
//!
//! The plant is integrated with an adaptive Dormand-Prince pair between events. Events
//! are the controller sampling instants `k h` and the release times `k h + tau` at which
//! delayed controller outputs reach the plant.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lti::{ContinuousStateSpace, DiscreteStateSpace};
use crate::ode::{DormandPrince, Tolerances};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Excitation {
    /// Plant starts at `[1, 0, ...]`, zero reference.
    #[default]
    InitialState,
    /// Plant starts at rest, unit step reference.
    Step,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    pub t_final: f64,
    pub tol: Tolerances,
    pub excitation: Excitation,
    /// Overrides the default initial plant state.
    pub init: Option<Vec<f64>>,
    /// Envelope window length; `max(10 h, t_final / 40)` when `None`.
    pub window: Option<f64>,
    /// Record every accepted integrator step, not only event times.
    pub record_steps: bool,
    /// `|y|` beyond this truncates the run as divergent.
    pub blowup: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            t_final: 150.0,
            tol: Tolerances::default(),
            excitation: Excitation::InitialState,
            init: None,
            window: None,
            record_steps: true,
            blowup: 1e100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopePoint {
    pub t_mid: f64,
    pub peak: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub outputs: Vec<f64>,
    pub controls: Vec<f64>,
    /// Indices into `times` of the controller sampling instants.
    pub sample_indices: Vec<usize>,
    pub envelope: Vec<EnvelopePoint>,
    pub window: f64,
    /// Run stopped early on overflow or step-size underflow.
    pub truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Marginal => "marginal",
        })
    }
}

fn check_loop(plant: &ContinuousStateSpace, ctrl: &DiscreteStateSpace) -> Result<()> {
    if plant.is_descriptor() {
        return Err(Error::InvalidData("simulation requires a plant with E = I".into()));
    }
    plant.require_siso()?;
    if ctrl.inputs() != 1 || ctrl.outputs() != 1 {
        return Err(Error::DimensionMismatch("simulation requires a SISO controller".into()));
    }
    Ok(())
}

/// Simulate the loop with transport delay `tau` on the controller output.
pub fn simulate_hybrid(
    plant: &ContinuousStateSpace,
    ctrl: &DiscreteStateSpace,
    tau: f64,
    opts: &SimOptions,
) -> Result<SimTrace> {
    check_loop(plant, ctrl)?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidData(format!("delay must be non-negative, got {tau}")));
    }
    if !(opts.t_final > 0.0 && opts.t_final.is_finite()) {
        return Err(Error::InvalidData(format!("t_final must be positive, got {}", opts.t_final)));
    }
    let n = plant.order();
    let h = ctrl.h();
    let mut x = match (&opts.init, opts.excitation) {
        (Some(v), _) if v.len() == n => v.clone(),
        (Some(v), _) => {
            return Err(Error::DimensionMismatch(format!("initial state has {} entries, plant order is {n}", v.len())))
        }
        (None, Excitation::InitialState) => (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
        (None, Excitation::Step) => vec![0.0; n],
    };
    let reference = match opts.excitation {
        Excitation::InitialState => 0.0,
        Excitation::Step => 1.0,
    };
    let (a, b, c, d) = (plant.a(), plant.b(), plant.c(), plant.d()[(0, 0)]);
    let output = |x: &[f64], u: f64| c.row(0).iter().zip(x).map(|(ci, xi)| ci * xi).sum::<f64>() + d * u;

    let mut xc = DVector::<f64>::zeros(ctrl.order());
    let (ad, bd, cd, dd) = (ctrl.a(), ctrl.b().column(0), ctrl.c().row(0).transpose(), ctrl.d()[(0, 0)]);
    let mut dp = DormandPrince::new(n, opts.tol);
    let mut queue: VecDeque<(f64, f64)> = VecDeque::new();
    let mut u = 0.0;
    let mut k: u64 = 0;
    let mut t = 0.0;
    let mut tr = SimTrace {
        times: Vec::new(),
        outputs: Vec::new(),
        controls: Vec::new(),
        sample_indices: Vec::new(),
        envelope: Vec::new(),
        window: opts.window.unwrap_or((10.0 * h).max(opts.t_final / 40.0)),
        truncated: false,
    };
    let tie = |t: f64| 1e-11 * t.abs().max(h);

    loop {
        while queue.front().is_some_and(|&(rt, _)| rt <= t + tie(t)) {
            u = queue.pop_front().map(|q| q.1).unwrap_or(u);
        }
        let kh = k as f64 * h;
        if (t - kh).abs() <= tie(t) {
            let e = reference - output(&x, u);
            let uk = cd.dot(&xc) + dd * e;
            xc = ad * &xc + bd * e;
            if tau == 0.0 {
                u = uk;
            } else {
                queue.push_back((kh + tau, uk));
            }
            tr.sample_indices.push(tr.times.len());
            k += 1;
        }
        let y = output(&x, u);
        tr.times.push(t);
        tr.outputs.push(y);
        tr.controls.push(u);
        if !(y.abs() <= opts.blowup) {
            tr.truncated = true;
            break;
        }
        if t >= opts.t_final {
            break;
        }

        let next_sample = k as f64 * h;
        let mut next = next_sample.min(opts.t_final);
        if let Some(&(rt, _)) = queue.front() {
            if rt < next - tie(next) {
                next = rt;
            }
        }
        if (opts.t_final - next).abs() <= tie(next) {
            next = next.max(opts.t_final);
        }

        let held = u;
        let rhs = |_t: f64, x: &[f64], dx: &mut [f64]| {
            for i in 0..n {
                let mut acc = b[(i, 0)] * held;
                for j in 0..n {
                    acc += a[(i, j)] * x[j];
                }
                dx[i] = acc;
            }
        };
        let record = opts.record_steps;
        let (times, outputs, controls) = (&mut tr.times, &mut tr.outputs, &mut tr.controls);
        let result = dp.integrate(&rhs, t, next, &mut x, |ts, xs| {
            if record && ts < next {
                times.push(ts);
                outputs.push(output(xs, held));
                controls.push(held);
            }
        });
        if result.is_err() {
            tr.truncated = true;
            break;
        }
        t = next;
    }
    tr.envelope = envelope(&tr, opts.excitation, tr.window);
    Ok(tr)
}

/// Peak `|y|` per window; for a step reference, peak `|y_k - y_{k-1}|` over sampling instants.
fn envelope(tr: &SimTrace, excitation: Excitation, window: f64) -> Vec<EnvelopePoint> {
    let t_end = tr.times.last().copied().unwrap_or(0.0);
    let count = (t_end / window * (1.0 + 1e-12)).floor() as usize;
    let mut peaks = vec![0.0_f64; count];
    let mut put = |t: f64, v: f64| {
        let i = (t / window).floor() as usize;
        if i < count {
            peaks[i] = peaks[i].max(v.abs());
        }
    };
    match excitation {
        Excitation::InitialState => {
            for (&t, &y) in tr.times.iter().zip(&tr.outputs) {
                put(t, y);
            }
        }
        Excitation::Step => {
            for w in tr.sample_indices.windows(2) {
                put(tr.times[w[1]], tr.outputs[w[1]] - tr.outputs[w[0]]);
            }
        }
    }
    peaks.into_iter().enumerate().map(|(i, peak)| EnvelopePoint { t_mid: (i as f64 + 0.5) * window, peak }).collect()
}

/// Minimum number of envelope windows a trace must span to be classified.
pub const MIN_WINDOWS: usize = 20;

/// Least-squares slope of the log-envelope over the trailing half of the windows
/// (per second). Truncated traces give `+inf`.
pub fn envelope_slope(tr: &SimTrace) -> Result<f64> {
    if tr.truncated {
        return Ok(f64::INFINITY);
    }
    let m = tr.envelope.len();
    if m < MIN_WINDOWS {
        return Err(Error::TraceTooShort { windows: m, needed: MIN_WINDOWS });
    }
    let tail = &tr.envelope[m / 2..];
    let len = tail.len() as f64;
    let mt = tail.iter().map(|p| p.t_mid).sum::<f64>() / len;
    let logs: Vec<f64> = tail.iter().map(|p| p.peak.max(f64::MIN_POSITIVE).ln()).collect();
    let ml = logs.iter().sum::<f64>() / len;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (p, l) in tail.iter().zip(&logs) {
        sxy += (p.t_mid - mt) * (l - ml);
        sxx += (p.t_mid - mt).powi(2);
    }
    Ok(sxy / sxx)
}

pub fn classify(tr: &SimTrace, slope_tol: f64) -> Result<Stability> {
    let slope = envelope_slope(tr)?;
    Ok(if slope < -slope_tol {
        Stability::Stable
    } else if slope > slope_tol {
        Stability::Unstable
    } else {
        Stability::Marginal
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BisectOptions {
    pub sim: SimOptions,
    pub slope_tol: f64,
    /// Interior points classified up front to detect non-monotone behavior.
    pub probes: usize,
}

impl Default for BisectOptions {
    fn default() -> Self {
        Self { sim: SimOptions::default(), slope_tol: 1e-3, probes: 3 }
    }
}

/// Final bisection bracket on the transport delay.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayBracket {
    /// Largest delay classified stable.
    pub tau_lo: f64,
    /// Smallest delay classified unstable or marginal.
    pub tau_hi: f64,
    pub tol: f64,
    pub classified_at: Vec<(f64, Stability)>,
}

impl DelayBracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.tau_lo + self.tau_hi)
    }

    /// Transport-delay boundary plus the half-sample phase lag of the zero-order hold.
    pub fn hold_adjusted(&self, h: f64) -> f64 {
        self.midpoint() + 0.5 * h
    }
}

pub fn classify_at(
    plant: &ContinuousStateSpace,
    ctrl: &DiscreteStateSpace,
    tau: f64,
    opts: &BisectOptions,
) -> Result<Stability> {
    classify(&simulate_hybrid(plant, ctrl, tau, &opts.sim)?, opts.slope_tol)
}

/// Bisection on the delay with marginal counted as unstable.
pub fn bisect_delay_margin(
    plant: &ContinuousStateSpace,
    ctrl: &DiscreteStateSpace,
    tau_lo: f64,
    tau_hi: f64,
    tol: f64,
    opts: &BisectOptions,
) -> Result<DelayBracket> {
    if !(tol > 0.0) {
        return Err(Error::InvalidBracket(format!("tolerance must be positive, got {tol}")));
    }
    if !(tau_lo >= 0.0 && tau_hi > tau_lo) {
        return Err(Error::InvalidBracket(format!("need 0 <= tau_lo < tau_hi, got [{tau_lo}, {tau_hi}]")));
    }
    let mut seen = Vec::new();
    let run = |seen: &mut Vec<(f64, Stability)>, tau: f64| -> Result<bool> {
        let s = classify_at(plant, ctrl, tau, opts)?;
        seen.push((tau, s));
        Ok(s == Stability::Stable)
    };
    if !run(&mut seen, tau_lo)? {
        return Err(Error::InvalidBracket(format!("loop is not stable at tau_lo = {tau_lo}")));
    }
    if run(&mut seen, tau_hi)? {
        return Err(Error::InvalidBracket(format!("loop is stable at tau_hi = {tau_hi}")));
    }
    let (mut lo, mut hi) = (tau_lo, tau_hi);
    for i in 1..=opts.probes {
        let tau = tau_lo + (tau_hi - tau_lo) * i as f64 / (opts.probes + 1) as f64;
        if run(&mut seen, tau)? {
            lo = lo.max(tau);
        } else {
            hi = hi.min(tau);
        }
    }
    let stable: Vec<f64> = seen.iter().filter(|s| s.1 == Stability::Stable).map(|s| s.0).collect();
    let unstable: Vec<f64> = seen.iter().filter(|s| s.1 != Stability::Stable).map(|s| s.0).collect();
    let max_stable = stable.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_unstable = unstable.iter().copied().fold(f64::INFINITY, f64::min);
    if max_stable > min_unstable {
        return Err(Error::NonMonotone { stable, unstable });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if run(&mut seen, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DelayBracket { tau_lo: lo, tau_hi: hi, tol, classified_at: seen })
}

/// Outcome of the simulation-based margin search.
#[derive(Clone, Debug, PartialEq)]
pub enum OracleMargin {
    /// Diverges without added delay.
    UnstableAtZero,
    Bracket(DelayBracket),
}

impl OracleMargin {
    /// Hold-adjusted delay margin; zero when the undelayed loop is unstable.
    pub fn delay_margin(&self, h: f64) -> f64 {
        match self {
            OracleMargin::UnstableAtZero => 0.0,
            OracleMargin::Bracket(b) => b.hold_adjusted(h),
        }
    }
}

/// Bracket the destabilizing delay starting from `[0, guess]`, doubling the upper end
/// until the loop is unstable, then bisect.
pub fn oracle_delay_margin(
    plant: &ContinuousStateSpace,
    ctrl: &DiscreteStateSpace,
    guess: f64,
    tol: f64,
    opts: &BisectOptions,
) -> Result<OracleMargin> {
    if classify_at(plant, ctrl, 0.0, opts)? != Stability::Stable {
        return Ok(OracleMargin::UnstableAtZero);
    }
    let mut hi = guess.max(tol);
    let mut lo = 0.0;
    for _ in 0..12 {
        if classify_at(plant, ctrl, hi, opts)? != Stability::Stable {
            return bisect_delay_margin(plant, ctrl, lo, hi, tol, opts).map(OracleMargin::Bracket);
        }
        lo = hi;
        hi *= 2.0;
    }
    Err(Error::InvalidBracket(format!("loop still stable at tau = {lo}")))
}
