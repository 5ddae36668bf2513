//! Loewner-pencil rational interpolation of frequency-response data.
//!
//! Samples `Phi_i` taken at `j omega_i` are split alternately into left and right
//! interpolation points, closed under conjugation, assembled into the Loewner and
//! shifted-Loewner matrices, projected onto their dominant singular subspaces and turned
//! into a real descriptor realization `E = -LL_r, A = -sLL_r, B = V_r, C = W_r`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::lti::ContinuousStateSpace;

type CVector = DVector<Complex64>;

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Frequency samples `(omega_i, Phi_i)` with strictly increasing positive `omega_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyDataSet {
    omegas: Vec<f64>,
    values: Vec<CMatrix>,
    h: Option<f64>,
    outputs: usize,
    inputs: usize,
}

impl FrequencyDataSet {
    /// `h`, when given, bounds every frequency by the Nyquist limit `pi / h`.
    pub fn new(omegas: Vec<f64>, values: Vec<CMatrix>, h: Option<f64>) -> Result<Self> {
        if omegas.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} frequencies but {} responses",
                omegas.len(),
                values.len()
            )));
        }
        let (outputs, inputs) = values.first().map_or((1, 1), |v| v.shape());
        if let Some(i) = values.iter().position(|v| v.shape() != (outputs, inputs)) {
            return Err(Error::DimensionMismatch(format!("sample {i} has shape {:?}", values[i].shape())));
        }
        if let Some(h) = h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::NonPositiveStep(h));
            }
        }
        for (i, &w) in omegas.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidData(format!("frequency {i} is {w}, must be positive")));
            }
            if let Some(h) = h {
                let limit = std::f64::consts::PI / h;
                if w > limit * (1.0 + 4.0 * f64::EPSILON) {
                    return Err(Error::OutsideBand { omega: w, limit });
                }
            }
            if i > 0 && w <= omegas[i - 1] {
                return Err(Error::InvalidData(format!(
                    "frequencies must be strictly increasing: {} then {w}",
                    omegas[i - 1]
                )));
            }
        }
        if values.iter().flat_map(|v| v.iter()).any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidData("non-finite response value".into()));
        }
        Ok(Self { omegas, values, h, outputs, inputs })
    }

    /// SISO convenience constructor.
    pub fn siso(omegas: Vec<f64>, values: Vec<Complex64>, h: Option<f64>) -> Result<Self> {
        let values = values.into_iter().map(|z| CMatrix::from_element(1, 1, z)).collect();
        Self::new(omegas, values, h)
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }
    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }
    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }
    pub fn values(&self) -> &[CMatrix] {
        &self.values
    }
    pub fn h(&self) -> Option<f64> {
        self.h
    }
    pub fn outputs(&self) -> usize {
        self.outputs
    }
    pub fn inputs(&self) -> usize {
        self.inputs
    }
}

/// Left triple `(mu, l, v)` with `v^* = l^* H(mu)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LeftPoint {
    pub mu: Complex64,
    pub l: CVector,
    pub v: CVector,
}

/// Right triple `(lambda, r, w)` with `w = H(lambda) r`.
#[derive(Clone, Debug, PartialEq)]
pub struct RightPoint {
    pub lambda: Complex64,
    pub r: CVector,
    pub w: CVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangentialDataSet {
    pub left: Vec<LeftPoint>,
    pub right: Vec<RightPoint>,
}

fn unit(n: usize, k: usize) -> CVector {
    let mut e = CVector::zeros(n);
    e[k % n] = Complex64::new(1.0, 0.0);
    e
}

fn conj_vec(v: &CVector) -> CVector {
    v.map(|z| z.conj())
}

/// Alternate samples between left (even positions) and right (odd positions), each
/// point followed by its conjugate.
pub fn build_tangential(data: &FrequencyDataSet) -> Result<TangentialDataSet> {
    if !data.len().is_multiple_of(2) {
        return Err(Error::InvalidData(format!("sample count must be even, got {}", data.len())));
    }
    let (p, m) = (data.outputs(), data.inputs());
    let mut left = Vec::with_capacity(data.len());
    let mut right = Vec::with_capacity(data.len());
    for (i, (&w, phi)) in data.omegas.iter().zip(&data.values).enumerate() {
        let s = J * w;
        if i % 2 == 0 {
            let l = unit(p, i / 2);
            let v = phi.adjoint() * &l;
            left.push(LeftPoint { mu: s, l: l.clone(), v: v.clone() });
            left.push(LeftPoint { mu: s.conj(), l: conj_vec(&l), v: conj_vec(&v) });
        } else {
            let r = unit(m, i / 2);
            let wv = phi * &r;
            right.push(RightPoint { lambda: s, r: r.clone(), w: wv.clone() });
            right.push(RightPoint { lambda: s.conj(), r: conj_vec(&r), w: conj_vec(&wv) });
        }
    }
    Ok(TangentialDataSet { left, right })
}

/// Loewner pencil with its data matrices. `lmat` and `v` hold `l_j^*` and `v_j^*` as rows;
/// `r` and `w` hold `r_i` and `w_i` as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct LoewnerPencil {
    pub ll: CMatrix,
    pub sll: CMatrix,
    pub mu: Vec<Complex64>,
    pub lambda: Vec<Complex64>,
    pub lmat: CMatrix,
    pub r: CMatrix,
    pub v: CMatrix,
    pub w: CMatrix,
}

impl LoewnerPencil {
    pub fn m(&self) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_vec(self.mu.clone()))
    }
    pub fn lambda_mat(&self) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_vec(self.lambda.clone()))
    }
    pub fn q(&self) -> usize {
        self.mu.len()
    }
    pub fn k(&self) -> usize {
        self.lambda.len()
    }
}

pub fn build_pencil(t: &TangentialDataSet) -> Result<LoewnerPencil> {
    let (q, k) = (t.left.len(), t.right.len());
    let p = t.left.first().map_or(0, |x| x.l.len());
    let m = t.right.first().map_or(0, |x| x.r.len());
    let lmat = CMatrix::from_fn(q, p, |j, a| t.left[j].l[a].conj());
    let v = CMatrix::from_fn(q, m, |j, b| t.left[j].v[b].conj());
    let r = CMatrix::from_fn(m, k, |b, i| t.right[i].r[b]);
    let w = CMatrix::from_fn(p, k, |a, i| t.right[i].w[a]);
    let vr = &v * &r;
    let lw = &lmat * &w;
    let mut ll = CMatrix::zeros(q, k);
    let mut sll = CMatrix::zeros(q, k);
    for j in 0..q {
        let mu = t.left[j].mu;
        for i in 0..k {
            let lambda = t.right[i].lambda;
            let den = mu - lambda;
            if den.norm() == 0.0 {
                return Err(Error::InvalidData(format!("left and right points coincide at {mu}")));
            }
            ll[(j, i)] = (vr[(j, i)] - lw[(j, i)]) / den;
            sll[(j, i)] = (mu * vr[(j, i)] - lambda * lw[(j, i)]) / den;
        }
    }
    Ok(LoewnerPencil {
        ll,
        sll,
        mu: t.left.iter().map(|x| x.mu).collect(),
        lambda: t.right.iter().map(|x| x.lambda).collect(),
        lmat,
        r,
        v,
        w,
    })
}

/// Relative residuals of `LL Lambda - M LL = L W - V R` and
/// `sLL Lambda - M sLL = L W Lambda - M V R`.
pub fn verify_sylvester(p: &LoewnerPencil) -> (f64, f64) {
    if p.q() == 0 || p.k() == 0 {
        return (0.0, 0.0);
    }
    let (mm, lam) = (p.m(), p.lambda_mat());
    let lw = &p.lmat * &p.w;
    let vr = &p.v * &p.r;
    let r1 = &p.ll * &lam - &mm * &p.ll - (&lw - &vr);
    let r2 = &p.sll * &lam - &mm * &p.sll - (&lw * &lam - &mm * &vr);
    let scale = p.ll.norm().max(1.0);
    (r1.norm() / scale, r2.norm() / scale)
}

/// Which matrix's singular values decide the order and the projection subspaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RankTest {
    /// SVD of the Loewner matrix alone.
    Loewner,
    /// Left subspace from `[LL sLL]`, right subspace from `[LL; sLL]`.
    #[default]
    Stacked,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Singular values above `tol * sigma_1` are kept.
    pub tol: f64,
    pub rank_test: RankTest,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-10, rank_test: RankTest::Stacked }
    }
}

/// Reduced model plus the singular values that chose its order.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub sys: ContinuousStateSpace,
    pub order: usize,
    pub singular_values: Vec<f64>,
}

fn check_pairs(points: &[Complex64], what: &str) -> Result<()> {
    if !points.len().is_multiple_of(2) {
        return Err(Error::InvalidData(format!("{what} points are not conjugate-paired")));
    }
    for pair in points.chunks(2) {
        let tol = 1e-14 * pair[0].norm().max(1.0);
        if (pair[1] - pair[0].conj()).norm() > tol {
            return Err(Error::InvalidData(format!("{what} point {} lacks its conjugate", pair[0])));
        }
    }
    Ok(())
}

/// Conjugate pairs `(x, conj x)` map to the real pair `(sqrt2 Re x, -sqrt2 Im x)`.
///
/// Rows transformed by `T^*`: pairs of rows `(x, y)` become `((x + y)/sqrt2, j(x - y)/sqrt2)`.
fn realify_rows(m: &CMatrix) -> DMatrix<f64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for p in (0..m.nrows()).step_by(2) {
        for c in 0..m.ncols() {
            let (x, y) = (m[(p, c)], m[(p + 1, c)]);
            out[(p, c)] = ((x + y) * s).re;
            out[(p + 1, c)] = (J * (x - y) * s).re;
        }
    }
    out
}

/// Columns transformed by `T`: pairs `(x, y)` become `((x + y)/sqrt2, j(y - x)/sqrt2)`.
fn realify_cols(m: &CMatrix) -> DMatrix<f64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for p in (0..m.ncols()).step_by(2) {
        for r in 0..m.nrows() {
            let (x, y) = (m[(r, p)], m[(r, p + 1)]);
            out[(r, p)] = ((x + y) * s).re;
            out[(r, p + 1)] = (J * (y - x) * s).re;
        }
    }
    out
}

/// Real pencil `(LL_r, sLL_r, V_r, W_r)` from a conjugate-paired pencil.
pub struct RealPencil {
    pub ll: DMatrix<f64>,
    pub sll: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

pub fn realify(p: &LoewnerPencil) -> Result<RealPencil> {
    check_pairs(&p.mu, "left")?;
    check_pairs(&p.lambda, "right")?;
    Ok(RealPencil {
        ll: realify_two_sided(&p.ll),
        sll: realify_two_sided(&p.sll),
        v: realify_rows(&p.v),
        w: realify_cols(&p.w),
    })
}

/// `T^* X T` with `T = [[1, -j], [1, j]] / sqrt2` on each conjugate pair.
fn realify_two_sided(m: &CMatrix) -> DMatrix<f64> {
    let s = 0.5;
    let (q, k) = m.shape();
    let mut out = DMatrix::zeros(q, k);
    for a in (0..q).step_by(2) {
        for b in (0..k).step_by(2) {
            let (x11, x12, x21, x22) = (m[(a, b)], m[(a, b + 1)], m[(a + 1, b)], m[(a + 1, b + 1)]);
            let r0 = [x11 + x21, x12 + x22];
            let r1 = [J * (x11 - x21), J * (x12 - x22)];
            out[(a, b)] = ((r0[0] + r0[1]) * s).re;
            out[(a, b + 1)] = (J * (r0[1] - r0[0]) * s).re;
            out[(a + 1, b)] = ((r1[0] + r1[1]) * s).re;
            out[(a + 1, b + 1)] = (J * (r1[1] - r1[0]) * s).re;
        }
    }
    out
}

fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

/// Project the realified pencil onto its numerically dominant subspaces.
pub fn reduce(p: &LoewnerPencil, opts: FitOptions) -> Result<Reduction> {
    let rp = realify(p)?;
    reduce_real(&rp, opts)
}

pub fn reduce_real(rp: &RealPencil, opts: FitOptions) -> Result<Reduction> {
    let q = rp.ll.nrows();
    if q == 0 {
        return Err(Error::RankCollapse);
    }
    let (y, sigma, x) = match opts.rank_test {
        RankTest::Loewner => linalg::svd_sorted(rp.ll.clone()),
        RankTest::Stacked => {
            let (y, sigma, _) = linalg::svd_sorted(hstack(&rp.ll, &rp.sll));
            let (_, _, x) = linalg::svd_sorted(vstack(&rp.ll, &rp.sll));
            (y, sigma, x)
        }
    };
    let s1 = sigma.first().copied().unwrap_or(0.0);
    let r = if s1 > 0.0 { sigma.iter().filter(|&&s| s > opts.tol * s1).count() } else { 0 };
    if r == 0 {
        return Err(Error::RankCollapse);
    }
    if r >= q.min(rp.ll.ncols()) {
        return Err(Error::UnderSampled { order: r, points: q });
    }
    let y1 = y.columns(0, r);
    let x1 = x.columns(0, r);
    let e = -(y1.transpose() * &rp.ll * x1);
    let a = -(y1.transpose() * &rp.sll * x1);
    let b = y1.transpose() * &rp.v;
    let c = &rp.w * x1;
    let d = DMatrix::zeros(c.nrows(), b.ncols());
    let sys = ContinuousStateSpace::descriptor(e, a, b, c, d)?;
    Ok(Reduction { sys, order: r, singular_values: sigma })
}

/// Data whose Loewner matrix vanishes carry a constant response.
fn constant_response(data: &FrequencyDataSet, rel_tol: f64) -> Option<DMatrix<f64>> {
    let first = data.values.first()?;
    let scale = data.values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let flat = data.values.iter().all(|v| (v - first).norm() <= rel_tol * scale);
    let real = first.iter().all(|z| z.im.abs() <= rel_tol * scale);
    (flat && real).then(|| first.map(|z| z.re))
}

/// Build, reduce and realify. Constant data yield a static gain with no states.
pub fn fit_rational(data: &FrequencyDataSet, opts: FitOptions) -> Result<Reduction> {
    if let Some(d) = constant_response(data, 1e-13) {
        return Ok(Reduction { sys: ContinuousStateSpace::gain(d), order: 0, singular_values: Vec::new() });
    }
    let t = build_tangential(data)?;
    let p = build_pencil(&t)?;
    reduce(&p, opts)
}

/// `max_i |H(j omega_i) - Phi_i| / max(1, |Phi_i|)` using the spectral norm bound of the
/// Frobenius norm.
pub fn interpolation_error(sys: &ContinuousStateSpace, data: &FrequencyDataSet) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (&w, phi) in data.omegas.iter().zip(&data.values) {
        let h = sys.eval(J * w)?;
        worst = worst.max((h - phi).norm() / phi.norm().max(1.0));
    }
    Ok(worst)
}

/// Options for [`enforce_stability`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityOptions {
    /// Target real-part margin: poles end up with `Re <= -eps`.
    pub eps: f64,
    /// Largest tolerated eigenvalue condition number before declaring the spectrum defective.
    pub max_condition: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self { eps: 1e-6, max_condition: 1e12 }
    }
}

struct Mode {
    pole: Complex64,
    /// Output direction `c_i` and input direction `b_i` with residue `c_i b_i`.
    c: CVector,
    b: CVector,
}

/// Modal decomposition of the finite part of a descriptor system.
fn finite_modes(sys: &ContinuousStateSpace, max_condition: f64) -> Result<Vec<Mode>> {
    let (a, e) = (sys.a(), sys.e());
    let n = sys.order();
    let (sigma, _) = linalg::pencil_shift(a, e)?;
    let shifted = a - e * sigma;
    let rhs = {
        let mut m = DMatrix::zeros(n, n + sys.inputs());
        m.view_mut((0, 0), (n, n)).copy_from(e);
        m.view_mut((0, n), (n, sys.inputs())).copy_from(sys.b());
        m
    };
    let sol = linalg::solve_real(shifted, &rhs, 0.0).ok_or(Error::SingularPencil)?;
    let m = sol.columns(0, n).into_owned();
    let bt = linalg::to_complex(&sol.columns(n, sys.inputs()).into_owned());
    let mus = linalg::eigenvalues(&m)?;
    let max_mu = mus.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let finite: Vec<Complex64> = mus
        .into_iter()
        .filter(|mu| max_mu > 0.0 && mu.norm() > linalg::INFINITE_EIG_TOL * max_mu && mu.im >= 0.0)
        .collect();
    for (i, x) in finite.iter().enumerate() {
        for y in &finite[i + 1..] {
            if (x - y).norm() <= 1e-10 * max_mu {
                return Err(Error::Defective(f64::INFINITY));
            }
        }
    }
    let mc = linalg::to_complex(&m);
    let right = linalg::eigenvectors(&mc, &finite)?;
    let conj: Vec<Complex64> = finite.iter().map(|z| z.conj()).collect();
    let left = linalg::eigenvectors(&mc.adjoint(), &conj)?;
    let c = linalg::to_complex(sys.c());
    let mut modes = Vec::with_capacity(finite.len());
    for (i, &mu) in finite.iter().enumerate() {
        let x = right.column(i);
        let y = left.column(i);
        let yx = (y.adjoint() * x)[(0, 0)];
        let cond = x.norm() * y.norm() / yx.norm();
        if !(cond <= max_condition) {
            return Err(Error::Defective(cond));
        }
        let b_row = (y.adjoint() * &bt).transpose() / (yx * mu);
        modes.push(Mode { pole: Complex64::new(sigma, 0.0) + mu.inv(), c: &c * x, b: b_row.column(0).into_owned() });
    }
    Ok(modes)
}

fn moved_pole(p: Complex64, eps: f64) -> Complex64 {
    if p.re >= eps {
        Complex64::new(-p.re, p.im)
    } else if p.re > -eps {
        Complex64::new(-eps, p.im)
    } else {
        p
    }
}

/// Rebuild a classical real realization from modes and a constant term.
fn modal_realization(modes: &[Mode], d: DMatrix<f64>) -> Result<ContinuousStateSpace> {
    let (p, m) = d.shape();
    let n: usize = modes.iter().map(|md| if md.pole.im == 0.0 { 1 } else { 2 }).sum();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    let mut c = DMatrix::zeros(p, n);
    let mut k = 0;
    for md in modes {
        if md.pole.im == 0.0 {
            // c b is real; rotate both factors onto the real axis.
            let pivot = md.c.iter().copied().max_by(|x, y| x.norm().total_cmp(&y.norm())).unwrap_or_default();
            let phase = if pivot.norm() > 0.0 { pivot / pivot.norm() } else { Complex64::new(1.0, 0.0) };
            a[(k, k)] = md.pole.re;
            for j in 0..m {
                b[(k, j)] = (md.b[j] * phase).re;
            }
            for i in 0..p {
                c[(i, k)] = (md.c[i] / phase).re;
            }
            k += 1;
        } else {
            let (al, be) = (md.pole.re, md.pole.im);
            a[(k, k)] = al;
            a[(k, k + 1)] = -be;
            a[(k + 1, k)] = be;
            a[(k + 1, k + 1)] = al;
            for j in 0..m {
                b[(k, j)] = md.b[j].re;
                b[(k + 1, j)] = md.b[j].im;
            }
            for i in 0..p {
                c[(i, k)] = 2.0 * md.c[i].re;
                c[(i, k + 1)] = -2.0 * md.c[i].im;
            }
            k += 2;
        }
    }
    ContinuousStateSpace::new(a, b, c, d)
}

/// Modal stability enforcement: poles with `Re >= eps` are mirrored into the left
/// half-plane, poles with `|Re| < eps` are moved to `-eps`, residues are kept. Infinite
/// eigenvalues are folded into the feedthrough. Already-stable systems come back unchanged.
pub fn enforce_stability(sys: &ContinuousStateSpace, opts: StabilityOptions) -> Result<ContinuousStateSpace> {
    let poles = sys.poles()?;
    if poles.values.iter().all(|p| p.re <= -opts.eps) {
        return Ok(sys.clone());
    }
    let mut modes = finite_modes(sys, opts.max_condition)?;
    let expected: usize = modes.iter().map(|md| if md.pole.im == 0.0 { 1 } else { 2 }).sum();
    if expected != poles.len() {
        return Err(Error::Defective(f64::INFINITY));
    }
    // Constant term: whatever the finite modes do not explain at a probe point.
    let radius = modes.iter().map(|md| md.pole.norm()).fold(1.0, f64::max);
    let probe = |s: Complex64| -> Result<CMatrix> {
        let mut h = sys.eval(s)?;
        for md in &modes {
            let res = &md.c * md.b.transpose();
            h -= res.clone() / (s - md.pole);
            if md.pole.im != 0.0 {
                h -= res.map(|z| z.conj()) / (s - md.pole.conj());
            }
        }
        Ok(h)
    };
    let d0 = probe(J * (10.0 * radius) + 0.37 * radius)?;
    let d1 = probe(J * (-3.1 * radius) + 1.9 * radius)?;
    let scale = d0.norm().max(sys.eval(J * radius)?.norm()).max(1.0);
    if (&d0 - &d1).norm() > 1e-6 * scale {
        return Err(Error::InvalidData("system has a polynomial part; cannot enforce stability modally".into()));
    }
    let d = (d0 + d1).map(|z| z.re / 2.0);
    for md in &mut modes {
        md.pole = moved_pole(md.pole, opts.eps);
    }
    modal_realization(&modes, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_order_data(n: usize) -> FrequencyDataSet {
        let omegas: Vec<f64> = (0..n).map(|i| 0.1 * 1.7f64.powi(i as i32)).collect();
        let values = omegas.iter().map(|&w| (J * w + 1.0).inv()).collect();
        FrequencyDataSet::siso(omegas, values, None).unwrap()
    }

    #[test]
    fn counting_and_scalar_directions() {
        let t = build_tangential(&first_order_data(4)).unwrap();
        assert_eq!((t.left.len(), t.right.len()), (4, 4));
        assert!(t.left.iter().all(|p| p.l[0] == Complex64::new(1.0, 0.0)));
        assert!(t.right.iter().all(|p| p.r[0] == Complex64::new(1.0, 0.0)));
        assert!(matches!(build_tangential(&first_order_data(3)), Err(Error::InvalidData(_))));
    }

    #[test]
    fn constant_data_pencil() {
        let omegas = vec![1.0, 2.0, 3.0, 4.0];
        let data = FrequencyDataSet::siso(omegas, vec![Complex64::new(2.5, 0.0); 4], None).unwrap();
        let p = build_pencil(&build_tangential(&data).unwrap()).unwrap();
        assert!(p.ll.norm() < 1e-15);
        assert!(p.sll.iter().all(|z| (z - Complex64::new(2.5, 0.0)).norm() < 1e-14));
        let fit = fit_rational(&data, FitOptions::default()).unwrap();
        assert_eq!(fit.order, 0);
        assert_eq!(fit.sys.d()[(0, 0)], 2.5);
    }

    #[test]
    fn first_order_rank_and_recovery() {
        let data = first_order_data(4);
        let p = build_pencil(&build_tangential(&data).unwrap()).unwrap();
        let (_, s, _) = linalg::svd_sorted(realify(&p).unwrap().ll);
        assert!(s[1] < 1e-12 * s[0]);
        let fit = fit_rational(&data, FitOptions { tol: 1e-8, rank_test: RankTest::Loewner }).unwrap();
        assert_eq!(fit.order, 1);
        for k in 0..20 {
            let s = Complex64::new(0.3 * k as f64 - 2.0, 1.1 * k as f64 - 7.0);
            let want = (s + 1.0).inv();
            assert!((fit.sys.eval_siso(s).unwrap() - want).norm() <= 1e-8 * want.norm());
        }
    }

    #[test]
    fn sylvester_residuals_and_corruption() {
        let p = build_pencil(&build_tangential(&first_order_data(8)).unwrap()).unwrap();
        let (r1, r2) = verify_sylvester(&p);
        assert!(r1 <= 1e-10 && r2 <= 1e-10);
        let mut bad = p.clone();
        bad.ll[(1, 2)] += 1.0;
        assert!(verify_sylvester(&bad).0 > 0.1);
        let empty = build_pencil(&TangentialDataSet { left: vec![], right: vec![] }).unwrap();
        assert_eq!(verify_sylvester(&empty), (0.0, 0.0));
    }

    #[test]
    fn undersampled_is_flagged() {
        // Two samples of a second-order response: order would equal the data count.
        let omegas = vec![1.0, 3.0];
        let g = |w: f64| (J * w * J * w + J * w * 0.3 + 4.0).inv();
        let data = FrequencyDataSet::siso(omegas.clone(), omegas.iter().map(|&w| g(w)).collect(), None).unwrap();
        assert!(matches!(fit_rational(&data, FitOptions::default()), Err(Error::UnderSampled { .. })));
    }

    #[test]
    fn realified_model_is_conjugate_symmetric() {
        let fit = fit_rational(&first_order_data(8), FitOptions::default()).unwrap();
        let s = Complex64::new(0.4, 2.3);
        let a = fit.sys.eval_siso(s).unwrap();
        let b = fit.sys.eval_siso(s.conj()).unwrap();
        assert!((a - b.conj()).norm() < 1e-12);
    }

    #[test]
    fn reflection_of_unstable_real_pole() {
        let sys = ContinuousStateSpace::new(
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 3.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let out = enforce_stability(&sys, StabilityOptions::default()).unwrap();
        let p = out.poles().unwrap().values;
        assert!((p[0].re + 2.0).abs() < 1e-12);
        for w in [0.1, 1.0, 7.0] {
            let a = sys.eval_siso(J * w).unwrap().norm();
            let b = out.eval_siso(J * w).unwrap().norm();
            assert!((a - b).abs() < 1e-12 * a);
        }
    }

    #[test]
    fn stable_system_is_unchanged() {
        let sys = ContinuousStateSpace::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 3.0, -3.0, -1.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            DMatrix::from_row_slice(1, 2, &[0.2, 1.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert_eq!(enforce_stability(&sys, StabilityOptions::default()).unwrap(), sys);
    }

    #[test]
    fn descriptor_pole_at_zero_and_feedthrough() {
        // 1/s + 2 as a descriptor with one infinite eigenvalue.
        let sys = ContinuousStateSpace::descriptor(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, -2.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let out = enforce_stability(&sys, StabilityOptions::default()).unwrap();
        let p = out.poles().unwrap().values;
        assert_eq!(p.len(), 1);
        assert!((p[0].re + 1e-6).abs() < 1e-15);
        assert!((out.d()[(0, 0)] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn complex_unstable_pair_is_mirrored() {
        let sys = ContinuousStateSpace::new(
            DMatrix::from_row_slice(2, 2, &[0.5, -4.0, 4.0, 0.5]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let out = enforce_stability(&sys, StabilityOptions::default()).unwrap();
        for p in out.poles().unwrap().values {
            assert!((p.re + 0.5).abs() < 1e-10 && (p.im.abs() - 4.0).abs() < 1e-10);
        }
    }
}
