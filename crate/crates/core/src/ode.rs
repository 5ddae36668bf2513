//! Dormand-Prince 5(4) embedded Runge-Kutta integrator with adaptive step size.

/// Right-hand side `dy/dt = f(t, y)`.
pub trait OdeSystem {
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]);
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for F {
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        self(t, y, dydt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Failure {
    /// Step size shrank below the floating-point resolution of `t`.
    StepUnderflow,
    /// State became non-finite.
    Overflow,
}

#[derive(Clone, Debug, Default)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
}

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Reusable Dormand-Prince integrator. `h` carries the suggested step across calls so
/// restarts at input discontinuities do not re-probe the step size from scratch.
pub struct DormandPrince {
    tol: Tolerances,
    h: f64,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y5: Vec<f64>,
    pub stats: Stats,
}

impl DormandPrince {
    pub fn new(dim: usize, tol: Tolerances) -> Self {
        Self {
            tol,
            h: 0.0,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
            y5: vec![0.0; dim],
            stats: Stats::default(),
        }
    }

    fn initial_step<S: OdeSystem>(&mut self, sys: &S, t: f64, y: &[f64], span: f64) -> f64 {
        sys.rhs(t, y, &mut self.k[0]);
        let scale = |i: usize| self.tol.atol + self.tol.rtol * y[i].abs();
        let n = y.len().max(1) as f64;
        let d0 = (y.iter().enumerate().map(|(i, v)| (v / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
        let d1 = (self.k[0].iter().enumerate().map(|(i, v)| (v / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(span)
    }

    /// Advance `y` from `t0` to `t1`, calling `observe(t, y)` after every accepted step.
    pub fn integrate<S, O>(&mut self, sys: &S, t0: f64, t1: f64, y: &mut [f64], mut observe: O) -> Result<(), Failure>
    where
        S: OdeSystem,
        O: FnMut(f64, &[f64]),
    {
        let mut t = t0;
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(());
        }
        if y.is_empty() {
            observe(t1, y);
            return Ok(());
        }
        if self.h <= 0.0 {
            self.h = self.initial_step(sys, t, y, span);
        } else {
            sys.rhs(t, y, &mut self.k[0]);
        }
        let mut h = self.h.min(span);
        loop {
            let remaining = t1 - t;
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h <= 16.0 * f64::EPSILON * t.abs().max(span) {
                return Err(Failure::StepUnderflow);
            }
            let err = self.step(sys, t, y, h);
            if !err.is_finite() {
                return Err(Failure::Overflow);
            }
            if err <= 1.0 {
                self.stats.accepted += 1;
                t = if last { t1 } else { t + h };
                y.copy_from_slice(&self.y5);
                // FSAL: the last stage is the derivative at the new point.
                self.k.swap(0, 6);
                observe(t, y);
                let factor =
                    if err == 0.0 { MAX_FACTOR } else { (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR) };
                let next = h * factor;
                if last {
                    // A step clipped to the interval end says little about the next one.
                    self.h = self.h.max(next);
                    return Ok(());
                }
                h = next;
                self.h = h;
            } else {
                self.stats.rejected += 1;
                h *= (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
            }
        }
    }

    /// One trial step; stores the 5th-order solution in `y5` and returns the scaled error.
    fn step<S: OdeSystem>(&mut self, sys: &S, t: f64, y: &[f64], h: f64) -> f64 {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(t + h, tmp, k6);
        let y5 = &mut self.y5;
        for i in 0..n {
            y5[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        sys.rhs(t + h, y5, k7);
        let mut acc = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.tol.atol + self.tol.rtol * y[i].abs().max(y5[i].abs());
            acc += (e / sc).powi(2);
        }
        (acc / n as f64).sqrt()
    }
}
