//! Continuous to discrete transforms and the exact (logarithmic) discretization evaluator.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::lti::{ContinuousStateSpace, DiscreteStateSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Forward,
    Backward,
    Bilinear,
    Zoh,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Forward, Method::Backward, Method::Bilinear, Method::Zoh];

    pub fn name(self) -> &'static str {
        match self {
            Method::Forward => "forward",
            Method::Backward => "backward",
            Method::Bilinear => "bilinear",
            Method::Zoh => "zoh",
        }
    }

    pub fn apply(self, sys: &ContinuousStateSpace, h: f64) -> Result<DiscreteStateSpace> {
        match self {
            Method::Forward => forward_euler(sys, h),
            Method::Backward => backward_euler(sys, h),
            Method::Bilinear => bilinear(sys, h),
            Method::Zoh => zoh(sys, h),
        }
    }

    /// The continuous frequency `s` substituted for `z` by the rational transforms.
    pub fn substitution(self, z: Complex64, h: f64) -> Option<Complex64> {
        match self {
            Method::Forward => Some((z - 1.0) / h),
            Method::Backward => Some((z - 1.0) / (z * h)),
            Method::Bilinear => Some((z - 1.0) / (z + 1.0) * (2.0 / h)),
            Method::Zoh => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method {s:?} (expected forward, backward, bilinear or zoh)")))
    }
}

fn check_input(sys: &ContinuousStateSpace, h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::NonPositiveStep(h));
    }
    if sys.is_descriptor() {
        return Err(Error::InvalidData("discretization requires E = I".into()));
    }
    Ok(())
}

/// `(I - alpha A)^-1`, or a singularity error naming the transform.
fn resolvent(a: &DMatrix<f64>, alpha: f64, what: &str) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = DMatrix::identity(n, n) - a * alpha;
    linalg::solve_real(m, &DMatrix::identity(n, n), linalg::DEFAULT_MIN_PIVOT_RATIO)
        .ok_or_else(|| Error::Singular { at: format!("{what}: I - {alpha} A") })
}

/// `s <- (z - 1) / h`.
pub fn forward_euler(sys: &ContinuousStateSpace, h: f64) -> Result<DiscreteStateSpace> {
    check_input(sys, h)?;
    let n = sys.order();
    DiscreteStateSpace::new(DMatrix::identity(n, n) + sys.a() * h, sys.b() * h, sys.c().clone(), sys.d().clone(), h)
}

/// `s <- (z - 1) / (h z)`.
pub fn backward_euler(sys: &ContinuousStateSpace, h: f64) -> Result<DiscreteStateSpace> {
    check_input(sys, h)?;
    let m = resolvent(sys.a(), h, "backward Euler")?;
    let mb = &m * sys.b() * h;
    DiscreteStateSpace::new(m.clone(), mb.clone(), sys.c() * &m, sys.d() + sys.c() * mb, h)
}

/// Tustin: `s <- (2/h) (z - 1) / (z + 1)`. Balanced realization with `sqrt(h)` split
/// between the input and output maps.
pub fn bilinear(sys: &ContinuousStateSpace, h: f64) -> Result<DiscreteStateSpace> {
    check_input(sys, h)?;
    let n = sys.order();
    let m = resolvent(sys.a(), h / 2.0, "bilinear")?;
    let ad = &m * (DMatrix::identity(n, n) + sys.a() * (h / 2.0));
    let mb = &m * sys.b();
    let rh = h.sqrt();
    let dd = sys.d() + sys.c() * &mb * (h / 2.0);
    DiscreteStateSpace::new(ad, mb * rh, sys.c() * &m * rh, dd, h)
}

/// Zero-order hold via the exponential of `[[A, B], [0, 0]] h`.
pub fn zoh(sys: &ContinuousStateSpace, h: f64) -> Result<DiscreteStateSpace> {
    check_input(sys, h)?;
    let (n, m) = (sys.order(), sys.inputs());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(sys.a() * h));
    aug.view_mut((0, n), (n, m)).copy_from(&(sys.b() * h));
    let ex = aug.exp();
    DiscreteStateSpace::new(
        ex.view((0, 0), (n, n)).into_owned(),
        ex.view((0, n), (n, m)).into_owned(),
        sys.c().clone(),
        sys.d().clone(),
        h,
    )
}

/// `C ((1/h) Ln(e^{j omega h}) I - A)^-1 B + D` on the principal branch, for
/// `0 < |omega| <= pi/h`.
pub fn eval_exact_discretization(sys: &ContinuousStateSpace, h: f64, omega: f64) -> Result<CMatrix> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::NonPositiveStep(h));
    }
    let limit = PI / h;
    if omega == 0.0 || !omega.is_finite() || omega.abs() > limit * (1.0 + 4.0 * f64::EPSILON) {
        return Err(Error::OutsideBand { omega, limit });
    }
    let z = Complex64::from_polar(1.0, omega * h);
    let mut ln = z.ln();
    // Ln(-1) = j pi on the principal branch; rounding in z can land on -j pi.
    if omega > 0.0 && ln.im < 0.0 {
        ln.im = -ln.im;
    }
    sys.eval(ln / h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64, c: f64, d: f64) -> ContinuousStateSpace {
        ContinuousStateSpace::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
            DMatrix::from_element(1, 1, d),
        )
        .unwrap()
    }

    fn controller() -> ContinuousStateSpace {
        ContinuousStateSpace::new(
            DMatrix::from_row_slice(2, 2, &[-0.001, 7.854, 0.0, -62.83]),
            DMatrix::from_row_slice(2, 1, &[0.0, 8.0]),
            DMatrix::from_row_slice(1, 2, &[70.0, 235.6]),
            DMatrix::zeros(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn forward_integrator() {
        let d = forward_euler(&scalar(0.0, 1.0, 1.0, 0.0), 0.1).unwrap();
        assert_eq!(d.a()[(0, 0)], 1.0);
        assert_eq!(d.b()[(0, 0)], 0.1);
        assert_eq!(d.c()[(0, 0)], 1.0);
        assert_eq!(d.d()[(0, 0)], 0.0);
    }

    #[test]
    fn forward_loses_stability_at_boundary() {
        let d = forward_euler(&scalar(-1.0, 1.0, 1.0, 0.0), 2.0).unwrap();
        assert_eq!(d.a()[(0, 0)], -1.0);
        assert!(!d.is_stable(0.0));
    }

    #[test]
    fn backward_scalar() {
        let d = backward_euler(&scalar(-1.0, 1.0, 1.0, 0.0), 1.0).unwrap();
        assert!((d.a()[(0, 0)] - 0.5).abs() < 1e-15);
        for h in [0.02, 0.15] {
            assert!(backward_euler(&controller(), h).unwrap().is_stable(0.0));
        }
    }

    #[test]
    fn bilinear_integrator_vanishes_at_nyquist() {
        let d = bilinear(&scalar(0.0, 1.0, 1.0, 0.0), 0.1).unwrap();
        assert!(d.eval_siso(Complex64::new(-1.0, 0.0)).unwrap().norm() < 1e-15);
        let z = Complex64::new(0.3, 0.8);
        let want = (z + 1.0) / (z - 1.0) * 0.05;
        assert!((d.eval_siso(z).unwrap() - want).norm() < 1e-14);
    }

    #[test]
    fn bilinear_warping_identity_on_controller() {
        let (c, h, w) = (controller(), 0.02, 1.0);
        let d = bilinear(&c, h).unwrap();
        let lhs = d.eval_siso(Complex64::from_polar(1.0, w * h)).unwrap();
        let rhs = c.eval_siso(Complex64::new(0.0, 2.0 / h * (w * h / 2.0).tan())).unwrap();
        assert!((lhs - rhs).norm() <= 1e-10 * rhs.norm());
        assert!(d.is_stable(0.0));
    }

    #[test]
    fn zoh_scalar_cases() {
        let d = zoh(&scalar(0.0, 1.0, 1.0, 0.0), 0.3).unwrap();
        assert!((d.a()[(0, 0)] - 1.0).abs() < 1e-15 && (d.b()[(0, 0)] - 0.3).abs() < 1e-15);
        let d = zoh(&scalar(-1.0, 1.0, 1.0, 0.0), 1.0).unwrap();
        assert!((d.a()[(0, 0)] - (-1f64).exp()).abs() < 1e-14);
        assert!((d.b()[(0, 0)] - (1.0 - (-1f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn exact_evaluator_matches_continuous_in_band() {
        let (c, h) = (controller(), 0.02);
        for w in [10.0, PI / h] {
            let lhs = eval_exact_discretization(&c, h, w).unwrap()[(0, 0)];
            let rhs = c.eval_siso(Complex64::new(0.0, w)).unwrap();
            assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm());
        }
        assert!(matches!(eval_exact_discretization(&c, h, 0.0), Err(Error::OutsideBand { .. })));
        assert!(matches!(eval_exact_discretization(&c, h, 200.0), Err(Error::OutsideBand { .. })));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("tustin".parse::<Method>().is_err());
    }

    #[test]
    fn nonpositive_step_rejected() {
        assert!(matches!(bilinear(&controller(), 0.0), Err(Error::NonPositiveStep(_))));
        assert!(matches!(zoh(&controller(), -1.0), Err(Error::NonPositiveStep(_))));
    }
}
