#![allow(dead_code)]

use std::path::PathBuf;

use hsdma::io::{self, System};
use hsdma::ContinuousStateSpace;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn plant() -> ContinuousStateSpace {
    io::read_system(&fixture("plant.json")).unwrap().into_continuous().unwrap()
}

pub fn controller() -> ContinuousStateSpace {
    io::read_system(&fixture("controller_continuous.json")).unwrap().into_continuous().unwrap()
}

/// The example controller with `A[0][1]` replaced.
pub fn controller_with(a12: f64) -> ContinuousStateSpace {
    let c = controller();
    let mut a = c.a().clone();
    a[(0, 1)] = a12;
    ContinuousStateSpace::new(a, c.b().clone(), c.c().clone(), c.d().clone()).unwrap()
}

pub fn system_json(sys: &ContinuousStateSpace) -> String {
    io::system_to_json(&System::Continuous(sys.clone()))
}

/// Random stable SISO system of McMillan degree `n` in real modal form.
///
/// Poles are kept apart (magnitude ratio at least 1.4 between real poles, distance at
/// least 0.3 from every other pole) so the degree is numerically well defined: clustered
/// real poles give Hankel singular values below double precision.
pub fn random_stable<R: Rng>(rng: &mut R, n: usize, with_d: bool) -> ContinuousStateSpace {
    let mut a = DMatrix::zeros(n, n);
    let mut poles: Vec<Complex64> = Vec::new();
    let separated = |p: Complex64, poles: &[Complex64]| {
        poles.iter().all(|q| {
            let ratio = p.norm().max(q.norm()) / p.norm().min(q.norm());
            (p - q).norm() >= 0.3 && (p.im != 0.0 || q.im != 0.0 || ratio >= 1.4)
        })
    };
    let mut i = 0;
    while i < n {
        let pair = i + 1 < n && rng.gen_bool(0.5);
        let p = if pair {
            Complex64::new(-rng.gen_range(0.1..2.0), rng.gen_range(0.5..10.0))
        } else {
            Complex64::new(-10f64.powf(rng.gen_range(-1.0..1.3)), 0.0)
        };
        if !separated(p, &poles) {
            continue;
        }
        poles.push(p);
        a[(i, i)] = p.re;
        if pair {
            poles.push(p.conj());
            a[(i + 1, i + 1)] = p.re;
            a[(i, i + 1)] = -p.im;
            a[(i + 1, i)] = p.im;
            i += 2;
        } else {
            i += 1;
        }
    }
    let mut coef = || {
        let x: f64 = rng.gen_range(0.3..1.5);
        if rng.gen_bool(0.5) {
            x
        } else {
            -x
        }
    };
    let b = DMatrix::from_fn(n, 1, |_, _| coef());
    let c = DMatrix::from_fn(1, n, |_, _| coef());
    let d = DMatrix::from_element(1, 1, if with_d { coef() } else { 0.0 });
    ContinuousStateSpace::new(a, b, c, d).unwrap()
}

/// Random Hurwitz matrix system with dense (non-modal) coupling.
pub fn random_hurwitz<R: Rng>(rng: &mut R, n: usize) -> ContinuousStateSpace {
    let modal = random_stable(rng, n, true);
    let t = loop {
        let t = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rng.gen_range(-0.5..0.5) });
        if let Some(inv) = t.clone().try_inverse() {
            if inv.norm() < 20.0 {
                break t;
            }
        }
    };
    let ti = t.clone().try_inverse().unwrap();
    ContinuousStateSpace::new(&t * modal.a() * &ti, &t * modal.b(), modal.c() * &ti, modal.d().clone()).unwrap()
}

pub fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}
