//! Damped-Newton log-barrier path following for tiny problems of the form
//! `max cᵀx  s.t.  G_i x + h_i ∈ Q_{k_i}` where `Q_1 = R_+`.
//!
//! Callers always include a ball block so the barrier Hessian stays positive
//! definite and the feasible set is bounded.

use nalgebra::{DMatrix, DVector};

use crate::linalg;

#[derive(Debug, Clone)]
pub struct SocBlock {
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl SocBlock {
    pub fn new(g: DMatrix<f64>, h: DVector<f64>) -> Self {
        assert_eq!(g.nrows(), h.len());
        SocBlock { g, h }
    }

    /// `‖x‖ ≤ r` written as `(r, x) ∈ Q`, acting on the first `dim` of `nvars` variables.
    pub fn ball(nvars: usize, dim: usize, r: f64) -> Self {
        let mut g = DMatrix::zeros(dim + 1, nvars);
        for i in 0..dim {
            g[(i + 1, i)] = 1.0;
        }
        let mut h = DVector::zeros(dim + 1);
        h[0] = r;
        SocBlock { g, h }
    }

    fn slack(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.g * x + &self.h
    }

    fn nu(&self) -> f64 {
        if self.h.len() == 1 {
            1.0
        } else {
            2.0
        }
    }

    /// Distance-like interior margin `s0 - ‖sr‖` (or `s` for scalar blocks).
    pub fn margin(&self, x: &DVector<f64>) -> f64 {
        let s = self.slack(x);
        s[0] - s.rows(1, s.len() - 1).norm()
    }
}

struct Eval {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

fn barrier(blocks: &[SocBlock], x: &DVector<f64>) -> Option<Eval> {
    let n = x.len();
    let mut value = 0.0;
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    for b in blocks {
        let s = b.slack(x);
        let k = s.len();
        if k == 1 {
            if s[0] <= 0.0 {
                return None;
            }
            value -= s[0].ln();
            let row = b.g.row(0).transpose();
            grad -= &row / s[0];
            hess += &row * row.transpose() / (s[0] * s[0]);
        } else {
            let sr2 = s.rows(1, k - 1).norm_squared();
            let d = s[0] * s[0] - sr2;
            if s[0] <= 0.0 || d <= 0.0 {
                return None;
            }
            value -= d.ln();
            let mut js = s.clone();
            for i in 1..k {
                js[i] = -js[i];
            }
            let ds = &js * (-2.0 / d);
            let mut dds = &js * js.transpose() * (4.0 / (d * d));
            dds[(0, 0)] -= 2.0 / d;
            for i in 1..k {
                dds[(i, i)] += 2.0 / d;
            }
            grad += b.g.transpose() * ds;
            hess += b.g.transpose() * dds * &b.g;
        }
    }
    Some(Eval { value, grad, hess })
}

fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    match h.clone().cholesky() {
        Some(ch) => ch.solve(rhs),
        None => linalg::lstsq(h, rhs, 1e-14).0,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierOpts {
    /// Stop once `ν/t` falls below `gap * (1 + |cᵀx|)`.
    pub gap: f64,
    /// Stop early once `cᵀx` exceeds this value (used by phase I).
    pub target: Option<f64>,
    pub max_newton: usize,
}

impl Default for BarrierOpts {
    fn default() -> Self {
        BarrierOpts { gap: 1e-12, target: None, max_newton: 60 }
    }
}

/// Maximizes `cᵀx` from a strictly feasible `x0`. Returns the last central point.
pub fn maximize(c: &DVector<f64>, blocks: &[SocBlock], x0: DVector<f64>, opts: BarrierOpts) -> DVector<f64> {
    let nu: f64 = blocks.iter().map(|b| b.nu()).sum();
    let mut x = x0;
    assert!(barrier(blocks, &x).is_some(), "starting point must be strictly feasible");
    let cn = c.norm().max(1e-300);
    let mut t = 1.0 / cn;
    for _outer in 0..80 {
        for _ in 0..opts.max_newton {
            let ev = barrier(blocks, &x).expect("iterate stays interior");
            let grad = &ev.grad - c * t;
            let dx = -solve_spd(&ev.hess, &grad);
            let dec2 = -grad.dot(&dx);
            if !(dec2 > 1e-20) {
                break;
            }
            let f0 = -t * c.dot(&x) + ev.value;
            let mut step = if dec2.sqrt() > 0.25 { 1.0 / (1.0 + dec2.sqrt()) } else { 1.0 };
            let mut accepted = false;
            for _ in 0..60 {
                let xn = &x + &dx * step;
                if let Some(e) = barrier(blocks, &xn) {
                    let f1 = -t * c.dot(&xn) + e.value;
                    if f1 <= f0 - 0.25 * step * dec2 || dec2 < 1e-12 {
                        x = xn;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted || dec2 < 1e-18 {
                break;
            }
        }
        let val = c.dot(&x);
        if let Some(target) = opts.target {
            if val > target {
                break;
            }
        }
        if nu / t < opts.gap * (1.0 + val.abs()) {
            break;
        }
        t *= 10.0;
    }
    x
}
