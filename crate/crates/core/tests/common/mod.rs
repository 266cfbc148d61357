//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use socp_tilt::poly::{PolyFunc, Term};
use socp_tilt::problem::{Instance, Tolerances};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unif(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-r..r))
}

pub fn rand_unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = rand_vec(rng, n, 1.0);
        let nv = v.norm();
        if nv > 1e-3 && nv <= 1.0 {
            return v / nv;
        }
    }
}

pub fn rand_sym(rng: &mut ChaCha8Rng, n: usize, r: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-r..r));
    (&a + a.transpose()) * 0.5
}

fn exps_up_to(n: usize, deg: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0u32; n]];
    for _ in 0..deg {
        let mut next = Vec::new();
        for e in &out {
            for i in 0..n {
                let mut f = e.clone();
                f[i] += 1;
                if !next.contains(&f) && !out.contains(&f) {
                    next.push(f);
                }
            }
        }
        out.extend(next);
    }
    out
}

/// Polynomial with the given gradient at the origin, zero value there and
/// random coefficients `[-r, r]` on every monomial of degree 2..=deg.
pub fn rand_poly(rng: &mut ChaCha8Rng, n: usize, grad: &[f64], deg: u32, r: f64) -> PolyFunc {
    let mut terms = Vec::new();
    for (i, &a) in grad.iter().enumerate() {
        let mut e = vec![0; n];
        e[i] = 1;
        terms.push(Term { c: a, e });
    }
    for e in exps_up_to(n, deg) {
        if r > 0.0 && e.iter().sum::<u32>() >= 2 {
            terms.push(Term { c: rng.gen_range(-r..r), e });
        }
    }
    PolyFunc::new(n, terms, 6).unwrap()
}

/// Quadratic `½xᵀHx + aᵀx + b`.
pub fn quad(h: &DMatrix<f64>, a: &DVector<f64>, b: f64) -> PolyFunc {
    PolyFunc::quadratic(h, a.as_slice(), b)
}

/// Random point of `Q* = -Q`: interior, boundary ray or the origin.
pub fn rand_dual(rng: &mut ChaCha8Rng, s: usize) -> DVector<f64> {
    let r = rand_vec(rng, s - 1, 1.0);
    let kind = rng.gen_range(0..3);
    let q0 = match kind {
        0 => r.norm(),
        1 => r.norm() + rng.gen_range(0.0..1.0),
        _ => return DVector::zeros(s),
    };
    let mut lam = DVector::zeros(s);
    lam[0] = -q0;
    lam.rows_mut(1, s - 1).copy_from(&r);
    lam
}

/// Random nonzero point of `Q* = -Q` (interior or boundary ray).
pub fn rand_dual_nonzero(rng: &mut ChaCha8Rng, s: usize) -> DVector<f64> {
    let r = rand_vec(rng, s - 1, 1.0);
    let extra = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..1.0) };
    let mut lam = DVector::zeros(s);
    lam[0] = -(r.norm() + extra + 1e-3);
    lam.rows_mut(1, s - 1).copy_from(&r);
    lam
}

/// Instance from raw pieces without stationarity or base-point checks.
pub fn raw_instance(f: PolyFunc, g: Vec<PolyFunc>, n: usize) -> Instance {
    Instance::unchecked(f, g, DVector::zeros(n), 1.0, Tolerances::default(), 0).unwrap()
}

/// Stationary instance at the origin with `n ≤ 2`, `m ≤ 2` and quadratic
/// data. The multiplier `λ*` is drawn from `Q*` and `∇f(0) = -∇g(0)ᵀλ*`.
pub fn random_small_instance(rng: &mut ChaCha8Rng, seed: u64) -> Instance {
    let n = rng.gen_range(1..=2);
    let m = rng.gen_range(1..=2);
    let s = 1 + m;
    let mut jac = DMatrix::from_fn(s, n, |_, _| rng.gen_range(-1.0..1.0));
    match rng.gen_range(0..4) {
        0 => jac.fill(0.0),
        1 => {
            let row = rng.gen_range(0..s);
            jac.row_mut(row).fill(0.0);
        }
        _ => {}
    }
    let lam = rand_dual(rng, s);
    let grad = -(jac.transpose() * &lam);
    let hf = rand_sym(rng, n, 1.0) + DMatrix::identity(n, n) * rng.gen_range(-0.5..1.5);
    let f = quad(&hf, &grad, 0.0);
    let gscale = rng.gen_range(0.0..1.0);
    let g = (0..s)
        .map(|i| {
            let row: Vec<f64> = jac.row(i).iter().cloned().collect();
            rand_poly(rng, n, &row, 2, gscale)
        })
        .collect();
    let sigma = 1.0;
    Instance::new(f, g, DVector::zeros(n), sigma, Tolerances::default(), seed).expect("generated instance is stationary")
}
