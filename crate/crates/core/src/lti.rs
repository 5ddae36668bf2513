//! Continuous descriptor and discrete state-space systems.
//!
//! Continuous: `E x' = A x + B u`, `y = C x + D u`, transfer `C (sE - A)^-1 B + D`.
//! Discrete:   `x[k+1] = Ad x[k] + Bd u[k]`, `y = Cd x + Dd u`, sampling period `h`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, DEFAULT_MIN_PIVOT_RATIO};

fn check_dims(
    e: Option<&DMatrix<f64>>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<()> {
    let n = a.nrows();
    let mismatch = |what: &str| Err(Error::DimensionMismatch(what.to_string()));
    if a.ncols() != n {
        return mismatch(&format!("A is {}x{}, expected square", n, a.ncols()));
    }
    if let Some(e) = e {
        if e.shape() != (n, n) {
            return mismatch(&format!("E is {:?}, A is {n}x{n}", e.shape()));
        }
    }
    if b.nrows() != n {
        return mismatch(&format!("B has {} rows, order is {n}", b.nrows()));
    }
    if c.ncols() != n {
        return mismatch(&format!("C has {} columns, order is {n}", c.ncols()));
    }
    if d.shape() != (c.nrows(), b.ncols()) {
        return mismatch(&format!("D is {:?}, expected {}x{}", d.shape(), c.nrows(), b.ncols()));
    }
    let finite = |m: &DMatrix<f64>| m.iter().all(|x| x.is_finite());
    if !(finite(a) && finite(b) && finite(c) && finite(d) && e.is_none_or(finite)) {
        return Err(Error::InvalidData("realization has non-finite entries".into()));
    }
    Ok(())
}

/// Continuous-time descriptor realization `(E, A, B, C, D)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousStateSpace {
    e: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    descriptor: bool,
}

impl ContinuousStateSpace {
    /// Classical realization with `E = I`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        check_dims(None, &a, &b, &c, &d)?;
        let n = a.nrows();
        Ok(Self { e: DMatrix::identity(n, n), a, b, c, d, descriptor: false })
    }

    /// Descriptor realization. Rejects pencils whose determinant vanishes at every probe point.
    pub fn descriptor(
        e: DMatrix<f64>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self> {
        check_dims(Some(&e), &a, &b, &c, &d)?;
        let n = a.nrows();
        let descriptor = e != DMatrix::identity(n, n);
        let sys = Self { e, a, b, c, d, descriptor };
        if descriptor && !sys.pencil_is_regular() {
            return Err(Error::SingularPencil);
        }
        Ok(sys)
    }

    /// Static gain `y = D u` with no states.
    pub fn gain(d: DMatrix<f64>) -> Self {
        let (p, m) = d.shape();
        Self::new(DMatrix::zeros(0, 0), DMatrix::zeros(0, m), DMatrix::zeros(p, 0), d)
            .expect("static gain dimensions are consistent by construction")
    }

    fn pencil_is_regular(&self) -> bool {
        let n = self.order();
        if n == 0 {
            return true;
        }
        let ne = self.e.norm();
        let scale = if ne > 0.0 { (self.a.norm() / ne).max(1e-6) } else { 1.0 };
        let probes = [
            Complex64::new(0.37, 1.13),
            Complex64::new(-1.71, 0.29),
            Complex64::new(2.93, -4.07),
            Complex64::new(0.013, 7.77),
        ];
        let e = linalg::to_complex(&self.e);
        let a = linalg::to_complex(&self.a);
        probes.iter().any(|&p| {
            let m = &e * (p * scale) - &a;
            let lu = m.lu();
            linalg::pivot_ratio(lu.u().diagonal().iter().map(|z| z.norm())) > DEFAULT_MIN_PIVOT_RATIO
        })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    /// True when `E` is not exactly the identity.
    pub fn is_descriptor(&self) -> bool {
        self.descriptor
    }

    /// `C (sE - A)^-1 B + D`.
    pub fn eval(&self, s: Complex64) -> Result<CMatrix> {
        self.eval_with(s, DEFAULT_MIN_PIVOT_RATIO)
    }

    /// [`Self::eval`] with an explicit singularity threshold on the LU pivot ratio.
    pub fn eval_with(&self, s: Complex64, min_pivot_ratio: f64) -> Result<CMatrix> {
        let d = linalg::to_complex(&self.d);
        if self.order() == 0 {
            return Ok(d);
        }
        let pencil = linalg::to_complex(&self.e) * s - linalg::to_complex(&self.a);
        let x = linalg::solve_complex(pencil, &linalg::to_complex(&self.b), min_pivot_ratio)
            .ok_or_else(|| Error::Singular { at: format!("s = {s}") })?;
        Ok(linalg::to_complex(&self.c) * x + d)
    }

    /// SISO shortcut for [`Self::eval`].
    pub fn eval_siso(&self, s: Complex64) -> Result<Complex64> {
        self.require_siso()?;
        Ok(self.eval(s)?[(0, 0)])
    }

    pub(crate) fn require_siso(&self) -> Result<()> {
        if self.inputs() != 1 || self.outputs() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected a SISO system, got {} outputs x {} inputs",
                self.outputs(),
                self.inputs()
            )));
        }
        Ok(())
    }

    /// Finite generalized eigenvalues of `(A, E)`; infinite ones are counted separately.
    pub fn poles(&self) -> Result<PoleSet> {
        if self.descriptor {
            let (values, infinite) = linalg::generalized_eigenvalues(&self.a, &self.e)?;
            Ok(PoleSet { values, infinite })
        } else {
            Ok(PoleSet { values: linalg::eigenvalues(&self.a)?, infinite: 0 })
        }
    }

    /// Every finite pole has real part `< -margin`.
    pub fn is_stable(&self, margin: f64) -> bool {
        match self.poles() {
            Ok(p) => p.values.iter().all(|z| z.re < -margin),
            Err(_) => false,
        }
    }

    /// Realization of `k * self`: `self` feeds `k`.
    pub fn series(&self, k: &ContinuousStateSpace) -> Result<ContinuousStateSpace> {
        series(self, k)
    }

    /// Unity negative feedback around `self`: `y = G (r - y)`.
    pub fn feedback_unity(&self) -> Result<ContinuousStateSpace> {
        let p = self.outputs();
        if p != self.inputs() {
            return Err(Error::DimensionMismatch("feedback needs a square system".into()));
        }
        let i_plus_d = DMatrix::identity(p, p) + &self.d;
        let inv = i_plus_d.try_inverse().ok_or_else(|| Error::Singular { at: "I + D (algebraic loop)".into() })?;
        let a = &self.a - &self.b * &inv * &self.c;
        let b = &self.b * &inv;
        let c = &inv * &self.c;
        let d = &inv * &self.d;
        Ok(Self { e: self.e.clone(), a, b, c, d, descriptor: self.descriptor })
    }
}

/// Realization of the product `k * g`, block lower-triangular in the stacked state `[x_g; x_k]`.
pub fn series(g: &ContinuousStateSpace, k: &ContinuousStateSpace) -> Result<ContinuousStateSpace> {
    if g.outputs() != k.inputs() {
        return Err(Error::DimensionMismatch(format!(
            "series: first system has {} outputs, second has {} inputs",
            g.outputs(),
            k.inputs()
        )));
    }
    let (ng, nk) = (g.order(), k.order());
    let n = ng + nk;
    let mut e = DMatrix::zeros(n, n);
    let mut a = DMatrix::zeros(n, n);
    e.view_mut((0, 0), (ng, ng)).copy_from(&g.e);
    e.view_mut((ng, ng), (nk, nk)).copy_from(&k.e);
    a.view_mut((0, 0), (ng, ng)).copy_from(&g.a);
    a.view_mut((ng, 0), (nk, ng)).copy_from(&(&k.b * &g.c));
    a.view_mut((ng, ng), (nk, nk)).copy_from(&k.a);
    let mut b = DMatrix::zeros(n, g.inputs());
    b.view_mut((0, 0), (ng, g.inputs())).copy_from(&g.b);
    b.view_mut((ng, 0), (nk, g.inputs())).copy_from(&(&k.b * &g.d));
    let mut c = DMatrix::zeros(k.outputs(), n);
    c.view_mut((0, 0), (k.outputs(), ng)).copy_from(&(&k.d * &g.c));
    c.view_mut((0, ng), (k.outputs(), nk)).copy_from(&k.c);
    let d = &k.d * &g.d;
    Ok(ContinuousStateSpace { e, a, b, c, d, descriptor: g.descriptor || k.descriptor })
}

/// Discrete-time realization `(Ad, Bd, Cd, Dd, h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteStateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    h: f64,
}

impl DiscreteStateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::NonPositiveStep(h));
        }
        check_dims(None, &a, &b, &c, &d)?;
        Ok(Self { a, b, c, d, h })
    }

    pub fn gain(d: DMatrix<f64>, h: f64) -> Result<Self> {
        let (p, m) = d.shape();
        Self::new(DMatrix::zeros(0, 0), DMatrix::zeros(0, m), DMatrix::zeros(p, 0), d, h)
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn h(&self) -> f64 {
        self.h
    }

    /// `Cd (zI - Ad)^-1 Bd + Dd`.
    pub fn eval(&self, z: Complex64) -> Result<CMatrix> {
        let d = linalg::to_complex(&self.d);
        let n = self.order();
        if n == 0 {
            return Ok(d);
        }
        let m = CMatrix::identity(n, n) * z - linalg::to_complex(&self.a);
        let x = linalg::solve_complex(m, &linalg::to_complex(&self.b), DEFAULT_MIN_PIVOT_RATIO)
            .ok_or_else(|| Error::Singular { at: format!("z = {z}") })?;
        Ok(linalg::to_complex(&self.c) * x + d)
    }

    pub fn eval_siso(&self, z: Complex64) -> Result<Complex64> {
        if self.inputs() != 1 || self.outputs() != 1 {
            return Err(Error::DimensionMismatch("expected a SISO discrete system".into()));
        }
        Ok(self.eval(z)?[(0, 0)])
    }

    /// Response on the unit circle at `z = e^{j omega h}`.
    pub fn eval_freq(&self, omega: f64) -> Result<CMatrix> {
        self.eval(Complex64::from_polar(1.0, omega * self.h))
    }

    pub fn poles(&self) -> Result<PoleSet> {
        Ok(PoleSet { values: linalg::eigenvalues(&self.a)?, infinite: 0 })
    }

    /// Every eigenvalue has modulus `< 1 - margin`.
    pub fn is_stable(&self, margin: f64) -> bool {
        match self.poles() {
            Ok(p) => p.values.iter().all(|z| z.norm() < 1.0 - margin),
            Err(_) => false,
        }
    }
}

/// Poles of a realization. `infinite` counts infinite generalized eigenvalues of a
/// singular `E`; they are excluded from `values`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoleSet {
    pub values: Vec<Complex64>,
    pub infinite: usize,
}

impl PoleSet {
    /// Values sorted by real part, then imaginary part.
    pub fn sorted(&self) -> Vec<Complex64> {
        let mut v = self.values.clone();
        v.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
        v
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plant() -> ContinuousStateSpace {
        ContinuousStateSpace::new(
            DMatrix::from_row_slice(2, 2, &[-10.0, -5.0, 4.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.5, 0.0]),
            DMatrix::from_row_slice(1, 2, &[0.0, 0.5]),
            DMatrix::zeros(1, 1),
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
    fn plant_dc_gain() {
        let g = plant().eval_siso(Complex64::new(0.0, 0.0)).unwrap();
        assert!((g - Complex64::new(0.05, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_input_map_returns_d() {
        let sys = ContinuousStateSpace::new(
            DMatrix::from_row_slice(1, 1, &[-3.0]),
            DMatrix::zeros(1, 1),
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DMatrix::from_row_slice(1, 1, &[0.25]),
        )
        .unwrap();
        assert_eq!(sys.eval_siso(Complex64::new(1.0, 5.0)).unwrap(), Complex64::new(0.25, 0.0));
    }

    #[test]
    fn strictly_proper_rolls_off() {
        let g = plant().eval_siso(Complex64::new(0.0, 1e6)).unwrap();
        assert!(g.norm() < 1e-9);
    }

    #[test]
    fn plant_poles_are_quadratic_roots() {
        let p = plant().poles().unwrap().sorted();
        assert!((p[0].re + 5.0 + 5f64.sqrt()).abs() < 1e-12);
        assert!((p[1].re + 5.0 - 5f64.sqrt()).abs() < 1e-12);
        assert!(plant().is_stable(0.0));
    }

    #[test]
    fn controller_poles_are_diagonal() {
        let p = controller().poles().unwrap().sorted();
        assert!((p[0].re + 62.83).abs() < 1e-10);
        assert!((p[1].re + 0.001).abs() < 1e-12);
        assert!(controller().is_stable(0.0));
    }

    #[test]
    fn unit_delay_and_unit_circle_pole() {
        let delay = DiscreteStateSpace::new(
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            1.0,
        )
        .unwrap();
        let z = Complex64::new(0.3, -1.7);
        assert!((delay.eval_siso(z).unwrap() - z.inv()).norm() < 1e-15);

        let hold = DiscreteStateSpace::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            0.1,
        )
        .unwrap();
        assert!(!hold.is_stable(0.0));
        let diag = DiscreteStateSpace::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.3]),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(1, 2),
            DMatrix::from_element(1, 1, 4.0),
            0.1,
        )
        .unwrap();
        assert_eq!(diag.eval_siso(Complex64::new(0.0, 2.0)).unwrap(), Complex64::new(4.0, 0.0));
        let p = diag.poles().unwrap().sorted();
        assert!((p[0].re + 0.3).abs() < 1e-15 && (p[1].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn series_is_pointwise_product() {
        let (p, c) = (plant(), controller());
        let l = p.series(&c).unwrap();
        assert_eq!(l.order(), 4);
        let s = Complex64::new(0.0, 1.0);
        let want = c.eval_siso(s).unwrap() * p.eval_siso(s).unwrap();
        assert!((l.eval_siso(s).unwrap() - want).norm() < 1e-12 * want.norm());
    }

    #[test]
    fn identity_gain_in_series_is_transparent() {
        let p = plant();
        let l = p.series(&ContinuousStateSpace::gain(DMatrix::identity(1, 1))).unwrap();
        for k in 0..20 {
            let s = Complex64::new(-0.5 + 0.1 * k as f64, 0.7 * k as f64 - 3.0);
            assert!((l.eval_siso(s).unwrap() - p.eval_siso(s).unwrap()).norm() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = ContinuousStateSpace::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(3, 1),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 1),
        );
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
        assert!(matches!(DiscreteStateSpace::gain(DMatrix::zeros(1, 1), 0.0), Err(Error::NonPositiveStep(_))));
    }

    #[test]
    fn singular_pencil_rejected() {
        let err = ContinuousStateSpace::descriptor(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 1),
        );
        assert!(matches!(err, Err(Error::SingularPencil)));
    }

    #[test]
    fn eval_at_pole_is_singular() {
        let integ = ContinuousStateSpace::new(
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert!(matches!(integ.eval(Complex64::new(0.0, 0.0)), Err(Error::Singular { .. })));
    }

    #[test]
    fn feedback_of_integrator() {
        let integ = ContinuousStateSpace::new(
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let cl = integ.feedback_unity().unwrap();
        let p = cl.poles().unwrap();
        assert!((p.values[0].re + 2.0).abs() < 1e-15);
    }
}
